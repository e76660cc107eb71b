#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "proxysynth/trace.hpp"

namespace proxysynth {

using TerminalId = std::uint32_t;

/// Free-number pool for request and communicator handles. allocate() always
/// returns the smallest number not currently held.
class HandlePool {
 public:
  std::uint32_t allocate();
  /// Throws ErrorKind::DoubleFree if `id` is not currently allocated.
  void release(std::uint32_t id);
  bool is_live(std::uint32_t id) const;
  std::size_t live_count() const { return next_fresh_ - free_.size(); }
  /// One past the largest number ever handed out.
  std::uint32_t high_water() const { return next_fresh_; }

 private:
  std::set<std::uint32_t> free_;
  std::uint32_t next_fresh_ = 0;
};

/// Rewrites raw request and communicator tokens to pool numbers. Raw
/// communicator token 0 is MPI_COMM_WORLD and maps to pool number 0.
Trace canonicalize_handles(const Trace& trace);

/// Point-to-point peers on MPI_COMM_WORLD become `target - my_rank`. Peers on
/// derived communicators and collective roots stay absolute.
Trace encode_relative_ranks(const Trace& trace, int my_rank, int world_size);
Trace decode_relative_ranks(const Trace& trace, int my_rank);

struct ClusterConfig {
  double threshold = 0.05;
};

struct Clustering {
  std::vector<ComputeEvent> representatives;
  /// Index into representatives, one entry per input event.
  std::vector<std::size_t> assignment;
};

/// max_i |t_i - r_i| / max(r_i, 1)
double relative_distance(const ComputeEvent& event, const ComputeEvent& representative);

/// Single greedy pass: each event joins the first representative within the
/// threshold, otherwise it becomes a representative itself.
Clustering cluster_compute_events(std::span<const ComputeEvent> events,
                                  const ClusterConfig& config);

/// Replaces every compute event by its cluster representative.
Trace cluster_trace(const Trace& trace, const ClusterConfig& config);

/// Bijection between canonical event lines and dense terminal ids.
class TerminalTable {
 public:
  TerminalId intern(const Event& event) { return intern_key(serialize_event(event)); }
  TerminalId intern_key(const std::string& key);
  std::optional<TerminalId> find(const std::string& key) const;

  const std::string& key(TerminalId id) const { return keys_.at(id); }
  Event event(TerminalId id) const { return parse_event(key(id)); }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  const std::vector<std::string>& keys() const { return keys_; }

  bool operator==(const TerminalTable& other) const { return keys_ == other.keys_; }

 private:
  std::unordered_map<std::string, TerminalId> key_to_id_;
  std::vector<std::string> keys_;
};

std::vector<TerminalId> intern_events(const Trace& trace, TerminalTable& table);

struct CanonicalTrace {
  int rank = 0;
  TerminalTable table;
  std::vector<TerminalId> ids;
};

/// handles -> relative ranks -> compute clustering -> interning
CanonicalTrace canonicalize(const Trace& trace, int world_size,
                            const ClusterConfig& config = {});

}  // namespace proxysynth
