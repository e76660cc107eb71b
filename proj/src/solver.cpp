#include "proxysynth/solver.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/QR>
#include <fmt/format.h>

#include "proxysynth/error.hpp"

namespace proxysynth {

namespace {

constexpr int kRows = static_cast<int>(kMetricCount);
constexpr int kCols = static_cast<int>(kBlockCount);

MetricVector weights_sqrt(const MetricVector& target) {
  return target.cwiseMax(1.0).cwiseInverse();
}

void require_finite(const BlockMatrix& blocks, const MetricVector& target) {
  if (!blocks.allFinite() || !target.allFinite()) {
    throw Error(ErrorKind::NonFinite, "block matrix or target is not finite");
  }
  if ((target.array() < 0.0).any()) {
    throw Error(ErrorKind::InvalidArgument, "target metrics must be non-negative");
  }
}

using DynMatrix = Eigen::Matrix<double, kRows, Eigen::Dynamic>;
using DynVector = Eigen::VectorXd;

// Lawson-Hanson active set for min ||A z - d|| subject to z >= 0.
DynVector nnls(const DynMatrix& a, const MetricVector& d) {
  const Eigen::Index n = a.cols();
  DynVector z = DynVector::Zero(n);
  if (n == 0) return z;

  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 1e-13 * std::max(1.0, a.norm()) * std::max(1.0, d.norm());
  DynVector w = a.transpose() * (d - a * z);

  auto solve_passive = [&](DynVector& s) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (passive[static_cast<std::size_t>(j)]) cols.push_back(j);
    }
    DynMatrix sub(kRows, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      sub.col(static_cast<Eigen::Index>(k)) = a.col(cols[k]);
    }
    DynVector sol = sub.completeOrthogonalDecomposition().solve(d);
    s = DynVector::Zero(n);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      s(cols[k]) = sol(static_cast<Eigen::Index>(k));
    }
  };

  const int max_outer = 3 * static_cast<int>(n) + 10;
  for (int outer = 0; outer < max_outer; ++outer) {
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    DynVector s;
    for (int inner = 0; inner <= static_cast<int>(n); ++inner) {
      solve_passive(s);
      bool positive = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && s(j) <= 0.0) positive = false;
      }
      if (positive) break;
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && s(j) <= 0.0) {
          alpha = std::min(alpha, z(j) / (z(j) - s(j)));
        }
      }
      z += alpha * (s - z);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 1e-15 * std::max(1.0, z.norm())) {
          passive[static_cast<std::size_t>(j)] = false;
          z(j) = 0.0;
        }
      }
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      z(j) = passive[static_cast<std::size_t>(j)] ? std::max(0.0, s(j)) : 0.0;
    }
    w = a.transpose() * (d - a * z);
  }
  return z;
}

}  // namespace

void validate_block_matrix(const BlockMatrix& blocks) {
  if (!blocks.allFinite()) {
    throw Error(ErrorKind::NonFinite, "block matrix has non-finite entries");
  }
  if ((blocks.array() < 0.0).any()) {
    throw Error(ErrorKind::InvalidArgument, "block matrix entries must be >= 0");
  }
  const auto cyc = static_cast<int>(Metric::Cyc);
  if ((blocks.row(cyc).array() <= 0.0).any()) {
    throw Error(ErrorKind::InvalidArgument,
                "every block must have a positive CYC cost");
  }
}

BlockMatrix parse_block_matrix(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<double> row;
    std::string tok;
    while (fields >> tok) {
      try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        row.push_back(v);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Parse,
                    fmt::format("block matrix line {}: bad number '{}'", line_no, tok));
      }
    }
    if (row.empty()) continue;
    if (row.size() != kBlockCount) {
      throw Error(ErrorKind::Parse,
                  fmt::format("block matrix line {}: expected {} values, got {}",
                              line_no, kBlockCount, row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() != kMetricCount) {
    throw Error(ErrorKind::Parse, fmt::format("block matrix needs {} rows, got {}",
                                              kMetricCount, rows.size()));
  }
  BlockMatrix b;
  for (int i = 0; i < kRows; ++i) {
    for (int j = 0; j < kCols; ++j) {
      b(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  validate_block_matrix(b);
  return b;
}

BlockMatrix read_block_matrix(const std::filesystem::path& path) {
  try {
    return parse_block_matrix(read_text_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw Error(e.kind(), fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string format_block_matrix(const BlockMatrix& blocks) {
  std::string out = "# rows: INS CYC LST L1_DCM BR_CN MSP; columns: blocks 1..11\n";
  for (int i = 0; i < kRows; ++i) {
    for (int j = 0; j < kCols; ++j) {
      out += fmt::format("{}{}", j ? " " : "", blocks(i, j));
    }
    out += '\n';
  }
  return out;
}

MetricVector to_metric_vector(const ComputeEvent& event) {
  MetricVector t;
  for (int i = 0; i < kRows; ++i) {
    t(i) = static_cast<double>(event.metrics[static_cast<std::size_t>(i)]);
  }
  return t;
}

double objective(const BlockMatrix& blocks, const MetricVector& target,
                 const BlockCounts& x) {
  MetricVector r = (blocks * x - target).cwiseProduct(weights_sqrt(target));
  return r.squaredNorm();
}

MetricVector relative_errors(const BlockMatrix& blocks, const MetricVector& target,
                             const BlockCounts& x) {
  return (blocks * x - target).cwiseAbs().cwiseProduct(weights_sqrt(target));
}

bool is_feasible(const BlockCounts& x, double slack) {
  if ((x.array() < -slack).any()) return false;
  return x(kOverheadBlock) + slack >= x.head<kLoopedBlocks>().sum();
}

BlockCounts solve_qp(const BlockMatrix& blocks, const MetricVector& target,
                     const SolveOptions& options) {
  require_finite(blocks, target);
  const MetricVector w = weights_sqrt(target);
  const bool overhead = options.enabled.test(kOverheadBlock);

  // Substituting the slack s = x11 - (x1 + ... + x9) turns the coupling
  // constraint into plain non-negativity: column j of the looped blocks
  // becomes b_j + b_11, the slack column is b_11.
  std::vector<int> block_of;
  std::vector<MetricVector> columns;
  for (int j = 0; j < static_cast<int>(kLoopedBlocks); ++j) {
    if (!overhead || !options.enabled.test(static_cast<std::size_t>(j))) continue;
    block_of.push_back(j);
    columns.push_back(blocks.col(j) + blocks.col(kOverheadBlock));
  }
  if (options.enabled.test(kBusyLoopBlock)) {
    block_of.push_back(kBusyLoopBlock);
    columns.push_back(blocks.col(kBusyLoopBlock));
  }
  if (overhead) {
    block_of.push_back(kOverheadBlock);
    columns.push_back(blocks.col(kOverheadBlock));
  }

  // Weighted rows, unit-norm columns.
  DynMatrix a(kRows, static_cast<Eigen::Index>(columns.size()));
  std::vector<double> norms(columns.size(), 0.0);
  for (std::size_t k = 0; k < columns.size(); ++k) {
    MetricVector col = columns[k].cwiseProduct(w);
    norms[k] = col.norm();
    a.col(static_cast<Eigen::Index>(k)) = norms[k] > 0.0 ? MetricVector(col / norms[k])
                                                        : MetricVector::Zero();
  }
  const MetricVector d = target.cwiseProduct(w);
  const DynVector z = nnls(a, d);

  BlockCounts x = BlockCounts::Zero();
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (norms[k] == 0.0) continue;
    const double value = z(static_cast<Eigen::Index>(k)) / norms[k];
    const int j = block_of[k];
    x(j) += value;
    if (j < static_cast<int>(kLoopedBlocks)) x(kOverheadBlock) += value;
  }
  return x;
}

BlockCounts ProxyCombination::as_vector() const {
  BlockCounts x;
  for (int j = 0; j < kCols; ++j) x(j) = static_cast<double>(counts[static_cast<std::size_t>(j)]);
  return x;
}

namespace {

// Fincke-Pohst enumeration of min |a z - d|^2 over integer z >= 0, seeded
// with the feasible point `z`, which is replaced when a better one exists.
// Skipped when `a` is numerically rank deficient; stops after a node budget.
void enumerate_lattice(const Eigen::MatrixXd& a, const MetricVector& d, Eigen::VectorXd& z) {
  const Eigen::Index n = a.cols();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  const double scale = a.colwise().norm().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(std::abs(r(i, i)) > 1e-10 * scale)) return;
  }
  const Eigen::VectorXd qd = qr.householderQ().transpose() * d;
  // |a z - d|^2 differs from |r z - y|^2 by a constant
  const Eigen::VectorXd y = qd.head(n);
  double best = (r * z - y).squaredNorm();
  Eigen::VectorXd cur = Eigen::VectorXd::Zero(n);
  long budget = 2000000;

  // level k fixes cur(k) given cur(k+1..n-1); partial is the sum of the
  // squared residual rows below k
  std::function<void(Eigen::Index, double)> descend = [&](Eigen::Index k, double partial) {
    if (--budget < 0) return;
    double s = y(k);
    for (Eigen::Index j = k + 1; j < n; ++j) s -= r(k, j) * cur(j);
    const double center = s / r(k, k);
    const double room = best - partial;
    if (room < 0.0) return;
    const double half = std::sqrt(room) / std::abs(r(k, k));
    const double lo = std::max(0.0, std::ceil(center - half));
    const double hi = std::floor(center + half);
    if (hi < lo) return;
    // Schnorr-Euchner order: nearest values first
    const double start = std::clamp(std::round(center), lo, hi);
    for (double off = 0.0; start + off <= hi || start - off >= lo; off += 1.0) {
      for (double v : {start + off, start - off}) {
        if ((off == 0.0 && v != start) || v < lo || v > hi) continue;
        cur(k) = v;
        const double e = r(k, k) * v - s;
        const double p = partial + e * e;
        if (p >= best) continue;
        if (k == 0) {
          best = p;
          z = cur;
        } else {
          descend(k - 1, p);
        }
      }
    }
  };
  descend(n - 1, 0.0);
}

// Steepest descent on the integer lattice in slack coordinates
// z = (x1..x10, x11 - sum x1..9), where z >= 0 is the whole feasible set.
// A step moves one or two coordinates by one; the weighted residual is
// updated in place so each trial costs a handful of flops.
void improve_integer_point(const BlockMatrix& blocks, const MetricVector& target,
                           const SolveOptions& options, BlockCounts& x) {
  const MetricVector w = weights_sqrt(target);
  std::vector<MetricVector> dirs;
  std::vector<int> coord;
  for (int j = 0; j < kCols; ++j) {
    if (!options.enabled.test(static_cast<std::size_t>(j))) continue;
    if (j == kOverheadBlock) {
      dirs.push_back(blocks.col(kOverheadBlock).cwiseProduct(w));
    } else if (j < static_cast<int>(kLoopedBlocks)) {
      // a looped repetition also costs one loop iteration
      if (!options.enabled.test(kOverheadBlock)) continue;
      dirs.push_back((blocks.col(j) + blocks.col(kOverheadBlock)).cwiseProduct(w));
    } else {
      dirs.push_back(blocks.col(j).cwiseProduct(w));
    }
    coord.push_back(j);
  }
  const std::size_t n = dirs.size();
  if (n == 0) return;

  Eigen::Matrix<double, kBlockCount, 1> z = x;
  z(kOverheadBlock) = x(kOverheadBlock) - x.head<kLoopedBlocks>().sum();
  MetricVector r = (blocks * x - target).cwiseProduct(w);

  constexpr int kMaxSteps = 100000;
  for (int step = 0; step < kMaxSteps; ++step) {
    double best_gain = 0.0;
    MetricVector best_move = MetricVector::Zero();
    std::size_t bi = n, bj = n;
    int si = 0, sj = 0;
    auto consider = [&](const MetricVector& d, std::size_t i, int s, std::size_t j, int t) {
      // f(r + d) - f(r) = 2 r.d + |d|^2
      const double delta = 2.0 * r.dot(d) + d.squaredNorm();
      if (delta < best_gain) {
        best_gain = delta;
        best_move = d;
        bi = i;
        si = s;
        bj = j;
        sj = t;
      }
    };
    for (std::size_t i = 0; i < n; ++i) {
      for (int s : {1, -1}) {
        if (s < 0 && z(coord[i]) < 1.0) continue;
        const MetricVector di = s * dirs[i];
        consider(di, i, s, n, 0);
        for (std::size_t j = i + 1; j < n; ++j) {
          for (int t : {1, -1}) {
            if (t < 0 && z(coord[j]) < 1.0) continue;
            consider(di + t * dirs[j], i, s, j, t);
          }
        }
      }
    }
    // relative guard against accepting rounding noise as progress
    if (bi == n || best_gain > -1e-15 * std::max(1.0, r.squaredNorm())) break;
    r += best_move;
    z(coord[bi]) += si;
    if (bj < n) z(coord[bj]) += sj;
  }

  // With at most six free coordinates and full column rank the weighted
  // problem is a small integer least squares; enumerate the lattice points
  // inside the current residual ellipsoid exactly.
  if (n <= static_cast<std::size_t>(kMetricCount)) {
    Eigen::MatrixXd a(kMetricCount, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) a.col(static_cast<Eigen::Index>(i)) = dirs[i];
    Eigen::VectorXd zf(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) zf(static_cast<Eigen::Index>(i)) = z(coord[i]);
    enumerate_lattice(a, target.cwiseProduct(w), zf);
    for (std::size_t i = 0; i < n; ++i) z(coord[i]) = zf(static_cast<Eigen::Index>(i));
  }

  x = z;
  x(kOverheadBlock) = z(kOverheadBlock) + z.head<kLoopedBlocks>().sum();
}

}  // namespace

ProxyCombination round_combination(const BlockMatrix& blocks,
                                   const MetricVector& target,
                                   const BlockCounts& x_real,
                                   const SolveOptions& options) {
  require_finite(blocks, target);
  if (!x_real.allFinite()) throw Error(ErrorKind::NonFinite, "x is not finite");

  constexpr std::size_t kMaxBranching = 12;
  BlockCounts base;
  std::vector<int> branching;
  for (int j = 0; j < kCols; ++j) {
    const double v = std::max(0.0, x_real(j));
    const double frac = v - std::floor(v);
    if (frac > 0.01 && frac < 0.99) {
      base(j) = std::floor(v);
      branching.push_back(j);
    } else {
      base(j) = std::round(v);
    }
  }
  if (branching.size() > kMaxBranching) {
    std::stable_sort(branching.begin(), branching.end(), [&](int l, int r) {
      return x_real(l) > x_real(r);
    });
    for (std::size_t k = kMaxBranching; k < branching.size(); ++k) {
      base(branching[k]) = std::round(x_real(branching[k]));
    }
    branching.resize(kMaxBranching);
  }

  auto repair = [](BlockCounts& x) {
    x(kOverheadBlock) = std::max(x(kOverheadBlock), x.head<kLoopedBlocks>().sum());
  };

  BlockCounts best = base;
  repair(best);
  double best_f = objective(blocks, target, best);
  const std::uint32_t combos = 1u << branching.size();
  for (std::uint32_t mask = 1; mask < combos; ++mask) {
    BlockCounts cand = base;
    for (std::size_t k = 0; k < branching.size(); ++k) {
      if (mask & (1u << k)) cand(branching[k]) += 1.0;
    }
    repair(cand);
    const double f = objective(blocks, target, cand);
    if (f < best_f) {
      best_f = f;
      best = cand;
    }
  }

  improve_integer_point(blocks, target, options, best);
  best_f = objective(blocks, target, best);

  ProxyCombination out;
  for (int j = 0; j < kCols; ++j) {
    out.counts[static_cast<std::size_t>(j)] = static_cast<std::uint64_t>(best(j));
  }
  out.residual = best_f;
  out.relative_errors = relative_errors(blocks, target, best);
  return out;
}

ProxyCombination synthesize_compute_terminal(const MetricVector& target,
                                             const BlockMatrix& blocks,
                                             double scale) {
  if (!(scale >= 1.0) || !std::isfinite(scale)) {
    throw Error(ErrorKind::InvalidArgument, "scaling factor must be >= 1");
  }
  const MetricVector scaled = target / scale;
  return round_combination(blocks, scaled, solve_qp(blocks, scaled));
}

}  // namespace proxysynth
