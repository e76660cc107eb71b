#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "proxysynth/merge.hpp"
#include "proxysynth/parallel.hpp"
#include "proxysynth/solver.hpp"

namespace proxysynth {

/// seconds = intercept + slope * bytes
struct CommTimeModel {
  double intercept = 1e-6;
  double slope = 1e-9;

  double seconds(double volume) const { return intercept + slope * volume; }
  bool operator==(const CommTimeModel&) const = default;
};

enum class CommFamily { Send, Recv, Collective };

/// Family whose model scales `func`; nullopt for calls that are never scaled.
std::optional<CommFamily> comm_family(MpiFunc func);
std::string_view to_string(CommFamily family);

/// Ordinary least squares over (bytes, seconds). A negative slope is clamped
/// to zero with the intercept refit to the mean time. Throws
/// ErrorKind::DegenerateFit when fewer than two distinct volumes are given.
CommTimeModel fit_comm_model(std::span<const std::pair<double, double>> samples);

/// One model per family, falling back to a shared default.
struct CommModels {
  CommTimeModel fallback;
  std::map<CommFamily, CommTimeModel> family;

  const CommTimeModel& for_family(CommFamily f) const;
};

/// Lines `model <family> <intercept> <slope>` or `sample <family> <bytes>
/// <seconds>`, family one of default, send, recv, collective. Samples of a
/// family are fitted with fit_comm_model; an explicit model line wins.
CommModels parse_comm_models(std::string_view text);
CommModels read_comm_models(const std::filesystem::path& path);

/// Real-valued V' with seconds(V') == seconds(V) / scale, clamped at 0.
/// A flat model (slope 0) leaves the volume unchanged.
double scaled_volume(const CommTimeModel& model, std::uint64_t volume, double scale);
/// The byte count written into the program: scaled_volume rounded.
std::uint64_t emitted_volume(const CommTimeModel& model, std::uint64_t volume,
                             double scale);

struct CodegenConfig {
  double scaling_factor = 10.0;
  /// Pool array lengths; 0 sizes them from the largest handle in the table.
  std::uint32_t request_pool = 0;
  std::uint32_t comm_pool = 0;
};

/// Target (already divided by the scaling factor) and its rounded solution.
struct ComputeSolution {
  MetricVector target = MetricVector::Zero();
  ProxyCombination combo;
};

/// Solves every compute terminal of `table` for t / scale. Entries of
/// communication terminals stay empty.
std::vector<std::optional<ComputeSolution>> solve_compute_terminals(
    const TerminalTable& table, const BlockMatrix& blocks, double scale,
    Execution exec = default_execution());

/// Ranks that execute each terminal, derived from the main-rule rank lists.
std::vector<RankList> terminal_ranks(const MergedProgram& program);

struct HandleCounts {
  std::uint32_t requests = 0;
  std::uint32_t comms = 1;
};
HandleCounts required_handles(const TerminalTable& table);

/// C function `proxy_t<id>` for one terminal. `ranks` is the set of ranks
/// that call it; decoded peers are range-checked against it.
std::string emit_terminal(TerminalId id, const Event& event, const RankList& ranks,
                          int world_size, const CodegenConfig& config,
                          const CommModels& models,
                          const std::optional<ComputeSolution>& compute);

/// C function `proxy_r<id>`; exponents above 1 become counted loops.
std::string emit_rule(const Rule& rule);

/// `int main` with MPI setup and the rank-list guards. Consecutive symbols
/// with equal lists share one guard; the full list gets none.
std::string emit_main(const Rule& main, int world_size);

struct TerminalReport {
  TerminalId id = 0;
  std::string key;
  bool compute = false;
  /// Compute terminals.
  ComputeSolution solution;
  /// Communication terminals: recorded bytes, exact scaled bytes and the
  /// integer count in the program. `scaled` is false for unscaled calls.
  std::uint64_t volume = 0;
  double scaled_volume = 0.0;
  std::uint64_t emitted_volume = 0;
  bool scaled = false;
};

struct GeneratedProgram {
  std::string source;
  std::vector<TerminalReport> terminals;
  std::size_t function_count = 0;
  std::size_t guard_count = 0;
};

/// One C99 translation unit. Compiled with -DPROXY_LOG_SHIM it includes
/// proxy_shim.h instead of mpi.h. Identical inputs give identical bytes.
GeneratedProgram generate_program(
    const MergedProgram& program,
    std::span<const std::optional<ComputeSolution>> compute,
    const CodegenConfig& config, const CommModels& models);

/// Header that stands in for mpi.h: every MPI call logs a line instead of
/// communicating and PROXY_EVENT logs `(<terminal key>)`. Rank and size come
/// from the PROXY_SHIM_RANK and PROXY_SHIM_SIZE environment variables.
std::string shim_header();
inline constexpr std::string_view kShimHeaderName = "proxy_shim.h";

/// Makefile building `proxy` with mpicc and `proxy_shim` with cc.
std::string makefile_text(std::string_view source_name);

}  // namespace proxysynth
