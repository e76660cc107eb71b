#include "proxysynth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "proxysynth/error.hpp"

namespace proxysynth {

namespace {

constexpr std::uint64_t kHandleMask = (std::uint64_t{1} << 48) - 1;

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

class RankGenerator {
 public:
  RankGenerator(const SynthSpec& spec, int rank,
                const std::function<void(const Event&)>& sink)
      : spec_(spec), rank_(rank), world_(spec.world_size), sink_(sink),
        rng_(rank_seed(spec.seed, rank)) {}

  void run() {
    std::uint64_t sub_comm = 0;
    if (spec_.dup_comm) {
      sub_comm = fresh_handle();
      CommEvent dup{.func = MpiFunc::CommDup, .comm = 0, .new_comm = sub_comm};
      comm(dup);
    }
    if (spec_.root_prologue) {
      if (rank_ == 0) {
        Metrics setup{};
        for (const auto& p : spec_.phases) {
          for (std::size_t i = 0; i < kMetricCount; ++i) setup[i] += 4 * p.compute[i];
        }
        compute(setup, 0.0);
      }
      comm(CommEvent{.func = MpiFunc::Bcast, .volume = 256, .peer = Peer::absolute(0),
                     .comm = 0});
    }
    for (std::uint64_t outer = 0; outer < spec_.outer_iterations; ++outer) {
      for (std::size_t p = 0; p < spec_.phases.size(); ++p) {
        const PhaseSpec& phase = spec_.phases[p];
        for (std::uint64_t it = 0; it < phase.iterations; ++it) {
          compute(phase.compute, phase.jitter);
          exchange(phase, static_cast<std::int64_t>(p), sub_comm);
        }
      }
    }
    if (spec_.dup_comm) comm(CommEvent{.func = MpiFunc::CommFree, .comm = sub_comm});
    flush();
  }

 private:
  std::uint64_t fresh_handle() {
    std::uint64_t h = 0;
    while (h == 0) h = rng_() & kHandleMask;
    return h;
  }

  void compute(const Metrics& base, double jitter) {
    if (std::all_of(base.begin(), base.end(), [](std::uint64_t v) { return v == 0; })) return;
    Metrics m{};
    for (std::size_t i = 0; i < kMetricCount; ++i) {
      double f = 1.0;
      if (jitter > 0.0) f += jitter * (2.0 * unit_uniform(rng_) - 1.0);
      m[i] = static_cast<std::uint64_t>(std::llround(static_cast<double>(base[i]) * f));
    }
    auto at = [&](Metric k) -> std::uint64_t& { return m[static_cast<std::size_t>(k)]; };
    at(Metric::BrCn) = std::min(at(Metric::BrCn), at(Metric::Ins));
    at(Metric::Msp) = std::min(at(Metric::Msp), at(Metric::BrCn));
    at(Metric::L1Dcm) = std::min(at(Metric::L1Dcm), at(Metric::Lst));
    if (!pending_) {
      pending_ = ComputeEvent{m};
    } else {
      for (std::size_t i = 0; i < kMetricCount; ++i) pending_->metrics[i] += m[i];
    }
  }

  void flush() {
    if (pending_) {
      sink_(*pending_);
      pending_.reset();
    }
  }

  void comm(const CommEvent& ev) {
    flush();
    sink_(ev);
  }

  void exchange(const PhaseSpec& phase, std::int64_t tag, std::uint64_t sub_comm) {
    const std::int64_t r = rank_;
    const std::int64_t P = world_;
    const std::uint64_t v = phase.volume;
    switch (phase.pattern) {
      case Pattern::Ring: {
        const std::uint64_t req = fresh_handle();
        comm({.func = MpiFunc::Irecv, .volume = v, .peer = Peer::absolute((r - 1 + P) % P),
              .tag = tag, .comm = 0, .req = req});
        comm({.func = MpiFunc::Send, .volume = v, .peer = Peer::absolute((r + 1) % P),
              .tag = tag, .comm = 0});
        comm({.func = MpiFunc::Wait, .req = req});
        break;
      }
      case Pattern::Halo1d: {
        std::vector<std::int64_t> nbrs;
        if (r > 0) nbrs.push_back(r - 1);
        if (r + 1 < P) nbrs.push_back(r + 1);
        neighbor_exchange(nbrs, v, tag);
        break;
      }
      case Pattern::Stencil: {
        std::int64_t px = 1;
        for (std::int64_t d = 1; d * d <= P; ++d) {
          if (P % d == 0) px = d;
        }
        const std::int64_t py = P / px;
        const std::int64_t x = r % px;
        const std::int64_t y = r / px;
        std::vector<std::int64_t> nbrs;
        if (x > 0) nbrs.push_back(r - 1);
        if (x + 1 < px) nbrs.push_back(r + 1);
        if (y > 0) nbrs.push_back(r - px);
        if (y + 1 < py) nbrs.push_back(r + px);
        neighbor_exchange(nbrs, v, tag);
        break;
      }
      case Pattern::Allreduce:
        comm({.func = MpiFunc::Allreduce, .volume = v, .comm = sub_comm});
        break;
    }
  }

  void neighbor_exchange(const std::vector<std::int64_t>& nbrs, std::uint64_t v,
                         std::int64_t tag) {
    std::vector<std::uint64_t> reqs;
    for (auto n : nbrs) {
      reqs.push_back(fresh_handle());
      comm({.func = MpiFunc::Irecv, .volume = v, .peer = Peer::absolute(n), .tag = tag,
            .comm = 0, .req = reqs.back()});
    }
    for (auto n : nbrs) {
      reqs.push_back(fresh_handle());
      comm({.func = MpiFunc::Isend, .volume = v, .peer = Peer::absolute(n), .tag = tag,
            .comm = 0, .req = reqs.back()});
    }
    for (auto q : reqs) comm({.func = MpiFunc::Wait, .req = q});
  }

  const SynthSpec& spec_;
  int rank_;
  int world_;
  const std::function<void(const Event&)>& sink_;
  std::mt19937_64 rng_;
  std::optional<ComputeEvent> pending_;
};

using nlohmann::json;

[[noreturn]] void spec_error(const std::string& msg) {
  throw Error(ErrorKind::Parse, "synth spec: " + msg);
}

}  // namespace

std::string_view to_string(Pattern pattern) {
  switch (pattern) {
    case Pattern::Ring:
      return "ring";
    case Pattern::Halo1d:
      return "halo-1d";
    case Pattern::Allreduce:
      return "allreduce";
    case Pattern::Stencil:
      return "stencil";
  }
  return "?";
}

std::optional<Pattern> pattern_from_string(std::string_view name) {
  for (auto p : {Pattern::Ring, Pattern::Halo1d, Pattern::Allreduce, Pattern::Stencil}) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

void validate(const SynthSpec& spec) {
  if (spec.world_size < 1) {
    throw Error(ErrorKind::InvalidArgument, "world_size must be >= 1");
  }
  for (const auto& p : spec.phases) {
    if (!(p.jitter >= 0.0 && p.jitter < 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "jitter must lie in [0, 1)");
    }
    validate(ComputeEvent{p.compute});
  }
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t rank_seed(std::uint64_t seed, int rank) {
  std::uint64_t state = seed;
  std::uint64_t out = 0;
  for (int i = 0; i <= rank; ++i) out = splitmix64(state);
  return out;
}

void generate_rank_events(const SynthSpec& spec, int rank,
                          const std::function<void(const Event&)>& sink) {
  validate(spec);
  if (rank < 0 || rank >= spec.world_size) {
    throw Error(ErrorKind::InvalidRank,
                fmt::format("rank {} outside world {}", rank, spec.world_size));
  }
  RankGenerator(spec, rank, sink).run();
}

Trace generate_rank(const SynthSpec& spec, int rank) {
  Trace t;
  t.rank = rank;
  generate_rank_events(spec, rank, [&](const Event& e) { t.events.push_back(e); });
  return t;
}

std::vector<Trace> generate(const SynthSpec& spec, Execution exec) {
  validate(spec);
  std::vector<Trace> out(static_cast<std::size_t>(spec.world_size));
  for_each_index(exec, out.size(), [&](std::size_t r) {
    out[r] = generate_rank(spec, static_cast<int>(r));
  });
  return out;
}

std::string spec_to_json(const SynthSpec& spec) {
  json j;
  j["world_size"] = spec.world_size;
  j["outer_iterations"] = spec.outer_iterations;
  j["seed"] = spec.seed;
  j["root_prologue"] = spec.root_prologue;
  j["dup_comm"] = spec.dup_comm;
  j["phases"] = json::array();
  for (const auto& p : spec.phases) {
    json pj;
    pj["iterations"] = p.iterations;
    pj["pattern"] = std::string(to_string(p.pattern));
    pj["volume"] = p.volume;
    json metrics = json::object();
    for (std::size_t i = 0; i < kMetricCount; ++i) {
      metrics[std::string(kMetricNames[i])] = p.compute[i];
    }
    pj["compute"] = metrics;
    pj["jitter"] = p.jitter;
    j["phases"].push_back(pj);
  }
  return j.dump(2) + "\n";
}

SynthSpec spec_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    spec_error(e.what());
  }
  SynthSpec spec;
  try {
    if (!j.is_object()) spec_error("top level must be an object");
    spec.world_size = j.value("world_size", spec.world_size);
    spec.outer_iterations = j.value("outer_iterations", spec.outer_iterations);
    spec.seed = j.value("seed", spec.seed);
    spec.root_prologue = j.value("root_prologue", spec.root_prologue);
    spec.dup_comm = j.value("dup_comm", spec.dup_comm);
    for (const auto& pj : j.value("phases", json::array())) {
      PhaseSpec p;
      p.iterations = pj.value("iterations", p.iterations);
      const std::string name = pj.value("pattern", std::string(to_string(p.pattern)));
      auto pattern = pattern_from_string(name);
      if (!pattern) spec_error(fmt::format("unknown pattern '{}'", name));
      p.pattern = *pattern;
      p.volume = pj.value("volume", p.volume);
      p.jitter = pj.value("jitter", p.jitter);
      if (pj.contains("compute")) {
        const auto& cj = pj.at("compute");
        for (auto it = cj.begin(); it != cj.end(); ++it) {
          auto pos = std::find(kMetricNames.begin(), kMetricNames.end(), it.key());
          if (pos == kMetricNames.end()) spec_error(fmt::format("unknown metric '{}'", it.key()));
          p.compute[static_cast<std::size_t>(pos - kMetricNames.begin())] =
              it.value().get<std::uint64_t>();
        }
      }
      spec.phases.push_back(p);
    }
  } catch (const json::exception& e) {
    spec_error(e.what());
  }
  try {
    validate(spec);
  } catch (const Error& e) {
    spec_error(e.what());
  }
  return spec;
}

SynthSpec example_spec(int world_size, std::uint64_t outer_iterations) {
  SynthSpec spec;
  spec.world_size = world_size;
  spec.outer_iterations = outer_iterations;
  spec.seed = 20240611;
  spec.root_prologue = true;
  spec.dup_comm = true;
  // Compute spans are integer block mixes of data/fixture_block_matrix.txt,
  // so the shipped fixture can mimic them closely.
  spec.phases = {
      PhaseSpec{.iterations = 4, .pattern = Pattern::Halo1d, .volume = 65536,
                .compute = {324000, 320000, 95400, 1830, 46800, 580}, .jitter = 0.01},
      PhaseSpec{.iterations = 2, .pattern = Pattern::Ring, .volume = 16384,
                .compute = {136500, 137600, 36250, 912, 22200, 330}, .jitter = 0.01},
      PhaseSpec{.iterations = 1, .pattern = Pattern::Allreduce, .volume = 64,
                .compute = {45200, 46400, 12650, 314, 6500, 75}, .jitter = 0.01},
  };
  return spec;
}

}  // namespace proxysynth
