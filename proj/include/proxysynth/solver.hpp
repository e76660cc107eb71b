#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "proxysynth/trace.hpp"

namespace proxysynth {

inline constexpr std::size_t kBlockCount = 11;
/// Blocks 1..9 run inside counted loops whose overhead block 11 carries.
inline constexpr std::size_t kLoopedBlocks = 9;
inline constexpr std::size_t kBusyLoopBlock = 9;   // block 10, zero-based
inline constexpr std::size_t kOverheadBlock = 10;  // block 11, zero-based

/// b(i, j): metric i (INS, CYC, LST, L1_DCM, BR_CN, MSP) per repetition of block j.
using BlockMatrix = Eigen::Matrix<double, static_cast<int>(kMetricCount),
                                  static_cast<int>(kBlockCount)>;
using MetricVector = Eigen::Matrix<double, static_cast<int>(kMetricCount), 1>;
using BlockCounts = Eigen::Matrix<double, static_cast<int>(kBlockCount), 1>;

/// Non-negative and finite everywhere, CYC row strictly positive.
void validate_block_matrix(const BlockMatrix& blocks);
/// 6 rows of 11 whitespace-separated reals, '#' comments allowed.
BlockMatrix parse_block_matrix(std::string_view text);
BlockMatrix read_block_matrix(const std::filesystem::path& path);
std::string format_block_matrix(const BlockMatrix& blocks);

MetricVector to_metric_vector(const ComputeEvent& event);

/// sum_i (b_i . x - t_i)^2 / max(t_i, 1)^2
double objective(const BlockMatrix& blocks, const MetricVector& target,
                 const BlockCounts& x);
/// |b_i . x - t_i| / max(t_i, 1)
MetricVector relative_errors(const BlockMatrix& blocks, const MetricVector& target,
                             const BlockCounts& x);

/// x >= 0 and x11 >= x1 + ... + x9, with `slack` absolute tolerance.
bool is_feasible(const BlockCounts& x, double slack = 0.0);

struct SolveOptions {
  /// Blocks outside the mask are pinned at zero.
  std::bitset<kBlockCount> enabled = std::bitset<kBlockCount>().set();
};

/// Continuous minimizer of objective() over the feasible polyhedron.
/// Throws ErrorKind::NonFinite on NaN or infinite input.
BlockCounts solve_qp(const BlockMatrix& blocks, const MetricVector& target,
                     const SolveOptions& options = {});

struct ProxyCombination {
  std::array<std::uint64_t, kBlockCount> counts{};
  double residual = 0.0;
  MetricVector relative_errors = MetricVector::Zero();

  BlockCounts as_vector() const;
};

/// Best feasible integer point among floor/ceil choices of the fractional
/// coordinates; x11 is raised when rounding breaks the coupling constraint.
/// The winner is then improved by unit and pair steps over the enabled
/// blocks until no step lowers the objective.
ProxyCombination round_combination(const BlockMatrix& blocks,
                                   const MetricVector& target,
                                   const BlockCounts& x_real,
                                   const SolveOptions& options = {});

/// Solves and rounds for target / scale. Errors are relative to target / scale.
ProxyCombination synthesize_compute_terminal(const MetricVector& target,
                                             const BlockMatrix& blocks,
                                             double scale);

}  // namespace proxysynth
