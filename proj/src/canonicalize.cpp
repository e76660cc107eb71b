#include "proxysynth/canonicalize.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "proxysynth/error.hpp"

namespace proxysynth {

std::uint32_t HandlePool::allocate() {
  if (!free_.empty()) {
    auto it = free_.begin();
    std::uint32_t id = *it;
    free_.erase(it);
    return id;
  }
  return next_fresh_++;
}

void HandlePool::release(std::uint32_t id) {
  if (!is_live(id)) {
    throw Error(ErrorKind::DoubleFree,
                fmt::format("handle {} released while not allocated", id));
  }
  free_.insert(id);
}

bool HandlePool::is_live(std::uint32_t id) const {
  return id < next_fresh_ && !free_.contains(id);
}

namespace {

class HandleMap {
 public:
  explicit HandleMap(const char* what) : what_(what) {}

  std::uint32_t acquire(std::uint64_t raw) {
    if (live_.contains(raw)) {
      throw Error(ErrorKind::DanglingHandle,
                  fmt::format("{} handle {} reused while still live", what_, raw));
    }
    std::uint32_t id = pool_.allocate();
    live_.emplace(raw, id);
    released_.erase(raw);
    return id;
  }

  std::uint32_t lookup(std::uint64_t raw) const {
    auto it = live_.find(raw);
    if (it == live_.end()) {
      if (released_.contains(raw)) {
        throw Error(ErrorKind::DanglingHandle,
                    fmt::format("{} handle {} used after release", what_, raw));
      }
      throw Error(ErrorKind::DanglingHandle,
                  fmt::format("unknown {} handle {}", what_, raw));
    }
    return it->second;
  }

  std::uint32_t release(std::uint64_t raw) {
    auto it = live_.find(raw);
    if (it == live_.end()) {
      if (released_.contains(raw)) {
        throw Error(ErrorKind::DoubleFree,
                    fmt::format("{} handle {} released twice", what_, raw));
      }
      throw Error(ErrorKind::DanglingHandle,
                  fmt::format("release of unknown {} handle {}", what_, raw));
    }
    std::uint32_t id = it->second;
    pool_.release(id);
    live_.erase(it);
    released_.insert(raw);
    return id;
  }

 private:
  const char* what_;
  HandlePool pool_;
  std::unordered_map<std::uint64_t, std::uint32_t> live_;
  std::unordered_set<std::uint64_t> released_;
};

}  // namespace

Trace canonicalize_handles(const Trace& trace) {
  HandleMap requests("request");
  HandleMap comms("communicator");
  comms.acquire(0);  // MPI_COMM_WORLD

  Trace out;
  out.rank = trace.rank;
  out.events.reserve(trace.events.size());
  for (const auto& event : trace.events) {
    const auto* c = std::get_if<CommEvent>(&event);
    if (!c) {
      out.events.push_back(event);
      continue;
    }
    CommEvent ev = *c;
    switch (ev.func) {
      case MpiFunc::Wait:
        ev.req = requests.release(*c->req);
        break;
      case MpiFunc::Isend:
      case MpiFunc::Irecv:
        ev.comm = comms.lookup(c->comm);
        ev.req = requests.acquire(*c->req);
        break;
      case MpiFunc::CommDup:
      case MpiFunc::CommSplit:
        ev.comm = comms.lookup(c->comm);
        ev.new_comm = comms.acquire(*c->new_comm);
        break;
      case MpiFunc::CommFree:
        if (c->comm == 0) {
          throw Error(ErrorKind::DoubleFree, "MPI_COMM_WORLD cannot be freed");
        }
        ev.comm = comms.release(c->comm);
        break;
      default:
        ev.comm = comms.lookup(c->comm);
        break;
    }
    out.events.emplace_back(std::move(ev));
  }
  return out;
}

Trace encode_relative_ranks(const Trace& trace, int my_rank, int world_size) {
  if (world_size <= 0 || my_rank < 0 || my_rank >= world_size) {
    throw Error(ErrorKind::InvalidRank,
                fmt::format("rank {} outside world of size {}", my_rank, world_size));
  }
  Trace out = trace;
  for (auto& event : out.events) {
    auto* c = std::get_if<CommEvent>(&event);
    if (!c || !c->peer) continue;
    Peer& peer = *c->peer;
    const bool world = c->comm == 0;
    std::int64_t target = peer.kind == Peer::Kind::Relative ? my_rank + peer.value
                                                            : peer.value;
    if (target < 0 || (world && target >= world_size)) {
      throw Error(ErrorKind::InvalidRank,
                  fmt::format("rank {}: peer {} outside world of size {} in '{}'",
                              my_rank, target, world_size, serialize_event(event)));
    }
    if (is_point_to_point(c->func) && world) {
      peer = Peer::relative(target - my_rank);
    }
  }
  return out;
}

Trace decode_relative_ranks(const Trace& trace, int my_rank) {
  Trace out = trace;
  for (auto& event : out.events) {
    auto* c = std::get_if<CommEvent>(&event);
    if (c && c->peer && c->peer->kind == Peer::Kind::Relative) {
      c->peer = Peer::absolute(my_rank + c->peer->value);
    }
  }
  return out;
}

double relative_distance(const ComputeEvent& event, const ComputeEvent& rep) {
  double worst = 0.0;
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    double t = static_cast<double>(event.metrics[i]);
    double r = static_cast<double>(rep.metrics[i]);
    worst = std::max(worst, std::abs(t - r) / std::max(r, 1.0));
  }
  return worst;
}

namespace {

struct MetricsHash {
  std::size_t operator()(const Metrics& m) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto v : m) {
      h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

Clustering cluster_compute_events(std::span<const ComputeEvent> events,
                                  const ClusterConfig& config) {
  if (!(config.threshold >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "cluster threshold must be >= 0");
  }
  Clustering out;
  out.assignment.reserve(events.size());
  // Exact matches always hit their own representative first, so a hash probe
  // gives the same answer as the linear scan.
  std::unordered_map<Metrics, std::size_t, MetricsHash> exact;
  for (const auto& ev : events) {
    if (auto it = exact.find(ev.metrics); it != exact.end()) {
      out.assignment.push_back(it->second);
      continue;
    }
    std::size_t chosen = out.representatives.size();
    if (config.threshold > 0.0) {
      for (std::size_t k = 0; k < out.representatives.size(); ++k) {
        if (relative_distance(ev, out.representatives[k]) <= config.threshold) {
          chosen = k;
          break;
        }
      }
    }
    if (chosen == out.representatives.size()) {
      out.representatives.push_back(ev);
      exact.emplace(ev.metrics, chosen);
    }
    out.assignment.push_back(chosen);
  }
  return out;
}

Trace cluster_trace(const Trace& trace, const ClusterConfig& config) {
  std::vector<ComputeEvent> computes;
  for (const auto& ev : trace.events) {
    if (const auto* c = std::get_if<ComputeEvent>(&ev)) computes.push_back(*c);
  }
  Clustering clusters = cluster_compute_events(computes, config);
  Trace out = trace;
  std::size_t k = 0;
  for (auto& ev : out.events) {
    if (std::holds_alternative<ComputeEvent>(ev)) {
      ev = clusters.representatives[clusters.assignment[k++]];
    }
  }
  return out;
}

TerminalId TerminalTable::intern_key(const std::string& key) {
  auto [it, inserted] =
      key_to_id_.try_emplace(key, static_cast<TerminalId>(keys_.size()));
  if (inserted) keys_.push_back(key);
  return it->second;
}

std::optional<TerminalId> TerminalTable::find(const std::string& key) const {
  auto it = key_to_id_.find(key);
  if (it == key_to_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<TerminalId> intern_events(const Trace& trace, TerminalTable& table) {
  std::vector<TerminalId> ids;
  ids.reserve(trace.events.size());
  for (const auto& ev : trace.events) ids.push_back(table.intern(ev));
  return ids;
}

CanonicalTrace canonicalize(const Trace& trace, int world_size,
                            const ClusterConfig& config) {
  Trace t = canonicalize_handles(trace);
  t = encode_relative_ranks(t, trace.rank, world_size);
  t = cluster_trace(t, config);
  CanonicalTrace out;
  out.rank = trace.rank;
  out.ids = intern_events(t, out.table);
  return out;
}

}  // namespace proxysynth
