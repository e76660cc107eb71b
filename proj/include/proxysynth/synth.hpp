#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "proxysynth/parallel.hpp"
#include "proxysynth/trace.hpp"

namespace proxysynth {

enum class Pattern { Ring, Halo1d, Allreduce, Stencil };

std::string_view to_string(Pattern pattern);
std::optional<Pattern> pattern_from_string(std::string_view name);

struct PhaseSpec {
  std::uint64_t iterations = 1;
  Pattern pattern = Pattern::Ring;
  /// Bytes per message, or per rank for collectives.
  std::uint64_t volume = 1024;
  /// Compute span before each exchange; all zero skips it.
  Metrics compute{};
  /// Each metric is multiplied by 1 + U(-jitter, jitter).
  double jitter = 0.0;

  bool operator==(const PhaseSpec&) const = default;
};

/// Every rank runs outer_iterations x (phase_1 ... phase_n) with rank
/// dependent peers. Allreduce phases use a duplicate of the world
/// communicator created up front when `dup_comm` is set.
struct SynthSpec {
  int world_size = 4;
  std::uint64_t outer_iterations = 1;
  std::vector<PhaseSpec> phases;
  std::uint64_t seed = 1;
  /// Rank 0 alone runs an extra setup compute span, then everyone joins a
  /// broadcast from rank 0.
  bool root_prologue = false;
  bool dup_comm = false;

  bool operator==(const SynthSpec&) const = default;
};

/// Throws ErrorKind::InvalidArgument on world_size < 1 or jitter outside [0, 1).
void validate(const SynthSpec& spec);

/// SplitMix64 step: advances `state` and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);
/// Seed of rank r's stream: the (r + 1)-th SplitMix64 output from `seed`.
std::uint64_t rank_seed(std::uint64_t seed, int rank);

/// Streams rank `rank`'s events in order without building the trace. Raw
/// handles are random 48-bit tokens, peers are absolute.
void generate_rank_events(const SynthSpec& spec, int rank,
                          const std::function<void(const Event&)>& sink);
Trace generate_rank(const SynthSpec& spec, int rank);
std::vector<Trace> generate(const SynthSpec& spec, Execution exec = default_execution());

std::string spec_to_json(const SynthSpec& spec);
/// Throws ErrorKind::Parse on malformed JSON or unknown fields values.
SynthSpec spec_from_json(std::string_view text);

/// Three-phase SPMD workload: halo exchange, ring, allreduce.
SynthSpec example_spec(int world_size, std::uint64_t outer_iterations);

}  // namespace proxysynth
