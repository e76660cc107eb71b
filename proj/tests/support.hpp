#pragma once

// Helpers shared by the unit and acceptance tests: scratch directories,
// subprocesses, independent reference algorithms and random inputs.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "proxysynth/canonicalize.hpp"
#include "proxysynth/codegen.hpp"
#include "proxysynth/grammar.hpp"
#include "proxysynth/merge.hpp"
#include "proxysynth/solver.hpp"
#include "proxysynth/synth.hpp"
#include "proxysynth/trace.hpp"

namespace testing {

namespace fs = std::filesystem;
namespace ps = proxysynth;

/// Fresh empty directory under the system temp dir.
fs::path scratch_dir(const std::string& name);

struct RunResult {
  int status = -1;
  std::string output;
};
/// Runs through /bin/sh and captures stdout (stderr merged).
RunResult run(const std::string& command);

std::string c_compiler();
std::string mpi_compiler();
std::string mpi_runner();
fs::path data_dir();
fs::path golden_dir();
fs::path cli_path();
ps::BlockMatrix fixture_blocks();

/// Canonical event lines of one rank after handles, ranks and clustering.
std::vector<std::string> canonical_keys(const ps::Trace& trace, int world,
                                        const ps::ClusterConfig& cluster = {});

/// Compiles `source_dir/proxy.c` against the logging shim. Returns the
/// binary path, or an empty path with the compiler output in `log`.
fs::path compile_with_shim(const fs::path& source_dir, std::string& log,
                           const std::string& extra_flags = "");
/// `(key)` lines printed by the shim binary for one rank.
std::vector<std::string> replay_keys(const fs::path& binary, int rank, int world);
/// Every line printed by the shim binary for one rank.
std::vector<std::string> replay_lines(const fs::path& binary, int rank, int world);

/// Checks the text shape of a generated program: balanced braces, one
/// definition per terminal and rule, callees defined before use. Returns
/// problems, empty when fine.
std::vector<std::string> validate_program_structure(const std::string& source,
                                                    std::size_t terminals,
                                                    std::size_t rules);

// Reference algorithms, written for clarity over speed.
std::size_t lcs_length_dp(const std::vector<std::uint64_t>& a,
                          const std::vector<std::uint64_t>& b);
std::size_t levenshtein_dp(const std::vector<std::uint64_t>& a,
                           const std::vector<std::uint64_t>& b);
std::vector<std::uint64_t> tokens(const std::vector<ps::Symbol>& body);

/// Straight recursive expansion of one rank's view of a grammar.
std::vector<ps::TerminalId> naive_expand(const ps::Grammar& g, int rank);

/// A valid raw trace with random structure: random peers, random raw
/// request and communicator tokens used in a balanced way, random compute.
ps::Trace random_trace(std::mt19937_64& rng, int rank, int world, std::size_t events,
                       std::size_t alphabet);

/// A random synthetic workload spec.
ps::SynthSpec random_spec(std::mt19937_64& rng, int world, std::uint64_t target_events);

/// Every supported call at least once, with derived communicators created
/// and freed and non-blocking requests in flight. Valid for any world size.
ps::Trace call_kinds_trace(int rank, int world);

/// Canonicalize, compress and merge a set of traces.
struct MergedRun {
  std::vector<ps::CanonicalTrace> canonical;
  ps::MergedProgram program;
};
MergedRun compress_and_merge(const std::vector<ps::Trace>& traces,
                             const ps::ClusterConfig& cluster, double similarity,
                             ps::Execution exec = ps::default_execution());

/// True when expand_rank of the merged program reproduces every rank's
/// canonical key sequence.
bool round_trip_ok(const MergedRun& run, std::string* why = nullptr);

}  // namespace testing
