// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "proxysynth/codegen.hpp"
#include "proxysynth/error.hpp"
#include "proxysynth/grammar.hpp"
#include "proxysynth/pipeline.hpp"
#include "proxysynth/solver.hpp"
#include "proxysynth/synth.hpp"
#include "support.hpp"

using namespace proxysynth;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;
const char* only = nullptr;

void criterion(const char* name, const std::function<Outcome()>& body) {
  if (only && std::string_view(name) != only) return;
  Outcome o;
  const auto start = Clock::now();
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("exception: {}", e.what())};
  }
  if (!o.pass) ++failures;
  std::printf("%s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(),
              seconds_since(start));
  std::fflush(stdout);
}

BlockCounts random_feasible(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(0.0, scale);
  BlockCounts x;
  for (int j = 0; j < 10; ++j) x(j) = u(rng);
  x(10) = x.head<9>().sum() + u(rng);
  return x;
}

BlockMatrix random_blocks(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BlockMatrix B;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 11; ++j) B(i, j) = u(rng) < 0.3 ? 0.0 : 20.0 * u(rng);
  }
  for (int j = 0; j < 11; ++j) B(1, j) = 1.0 + 30.0 * u(rng);
  return B;
}

// max_j |min(z_j |a_j|, g_j / |a_j|)| over the weighted problem in slack
// coordinates; g is the half gradient A^T (A z - d).
double kkt_residual(const BlockMatrix& B, const MetricVector& t, const BlockCounts& x) {
  MetricVector w;
  for (int i = 0; i < 6; ++i) w(i) = 1.0 / std::max(t(i), 1.0);
  const MetricVector r = (B * x - t).cwiseProduct(w);
  double worst = 0.0;
  for (int j = 0; j < 11; ++j) {
    MetricVector col;
    double z = 0.0;
    if (j < 9) {
      col = B.col(j) + B.col(10);
      z = x(j);
    } else if (j == 9) {
      col = B.col(9);
      z = x(9);
    } else {
      col = B.col(10);
      z = x(10) - x.head<9>().sum();
    }
    col = col.cwiseProduct(w);
    const double norm = col.norm();
    if (norm == 0.0) continue;
    const double g = col.dot(r);
    worst = std::max(worst, std::abs(std::min(z * norm, g / norm)));
  }
  return worst;
}

Outcome lossless() {
  std::mt19937_64 rng(20240601);
  const int worlds[] = {1, 2, 4, 8, 16};
  int cases = 0;
  int failed = 0;
  std::uint64_t max_events = 0;
  std::string first_failure;
  for (int i = 0; i < 220; ++i) {
    const int world = worlds[i % 5];
    std::vector<Trace> traces;
    if (i % 2 == 0) {
      // structured workloads; every tenth one near the 1e5 bound
      const std::uint64_t target = (i % 20 == 0) ? 100000 : 500 + rng() % 20000;
      traces = generate(testing::random_spec(rng, world, target));
    } else {
      const std::size_t events = (i % 21 == 1) ? 100000 : 1 + rng() % 5000;
      const std::size_t alphabet = 1 + rng() % 12;
      for (int r = 0; r < world; ++r) {
        traces.push_back(testing::random_trace(rng, r, world, events, alphabet));
      }
    }
    for (const auto& t : traces) max_events = std::max<std::uint64_t>(max_events, t.events.size());
    const double threshold = (i % 3 == 0) ? 0.0 : 0.05;
    const double similarity = (i % 4 == 0) ? 0.5 : 0.9;
    const auto run = testing::compress_and_merge(traces, {threshold}, similarity);
    std::string why;
    ++cases;
    if (!testing::round_trip_ok(run, &why)) {
      ++failed;
      if (first_failure.empty()) first_failure = fmt::format("case {} (P={}): {}", i, world, why);
    }
  }
  return {failed == 0 && cases >= 200,
          fmt::format("{}/{} cases exact, up to {} events per rank{}", cases - failed, cases,
                      max_events, first_failure.empty() ? "" : "; first failure " + first_failure)};
}

Outcome run_length() {
  GrammarBuilder b;
  std::uint64_t n = 0;
  std::string bad;
  for (int k = 4; k <= 20; ++k) {
    while (n < (1ull << k)) {
      b.append(0);
      ++n;
    }
    const Grammar g = b.grammar();
    if (grammar_size(g) != 1 || expanded_length(g) != n) {
      bad += fmt::format(" n=2^{} size {}", k, grammar_size(g));
    }
  }
  const std::vector<TerminalId> a8(8, 0);
  const std::string plain = format_rules(build_grammar(a8, BuilderOptions{.fold_runs = false}));
  const std::string want = "R0 -> R2 R2\nR1 -> t0 t0\nR2 -> R1 R1\n";
  const bool derivation = plain == want;
  return {bad.empty() && derivation,
          fmt::format("a^n size 1 for n=2^4..2^20{}; unfolded a^8 gives S->AA, A->BB, B->aa: {}",
                      bad.empty() ? "" : " except" + bad, derivation ? "yes" : "no, got " + plain)};
}

Outcome compression() {
  const int world = 16;
  // about 30 events per outer iteration on the two edge ranks, more inside
  const SynthSpec spec = example_spec(world, 34000);
  std::uint64_t raw = 0;
  std::uint64_t min_events = UINT64_MAX;
  std::vector<GrammarDump> dumps(world);
  for (int r = 0; r < world; ++r) {
    const Trace t = generate_rank(spec, r);
    min_events = std::min<std::uint64_t>(min_events, t.events.size());
    RankCompression rc = compress_trace(t, world, {0.05});
    raw += rc.trace_bytes;
    dumps[static_cast<std::size_t>(r)] = std::move(rc.dump);
  }
  const MergedProgram merged = merge_program(dumps);
  const std::uint64_t size = format_dump(to_dump(merged)).size();
  const double ratio = static_cast<double>(raw) / static_cast<double>(size);
  return {ratio >= 500.0 && min_events >= 1000000 && spec.outer_iterations >= 100,
          fmt::format("{} ranks, >= {} events each, {} outer iterations: raw {} B, merged {} B, "
                      "ratio {:.0f}",
                      world, min_events, spec.outer_iterations, raw, size, ratio)};
}

Outcome qp() {
  // (a) zero-residual recovery with the fixture
  const BlockMatrix F = testing::fixture_blocks();
  std::mt19937_64 rng(11);
  double worst_a = 0.0;
  for (int i = 0; i < 100; ++i) {
    const MetricVector t = F * random_feasible(rng, 1e4);
    const BlockCounts x = solve_qp(F, t);
    worst_a = std::max(worst_a, ((F * x - t).cwiseAbs().cwiseQuotient(t.cwiseMax(1.0))).maxCoeff());
  }
  // (b) KKT on random instances with arbitrary targets
  double worst_b = 0.0;
  bool feasible = true;
  for (int i = 0; i < 100; ++i) {
    const BlockMatrix B = random_blocks(rng);
    MetricVector t;
    for (int m = 0; m < 6; ++m) t(m) = std::pow(10.0, 1.0 + 5.0 * static_cast<double>(rng() % 1000) / 1000.0);
    const BlockCounts x = solve_qp(B, t);
    feasible = feasible && is_feasible(x, 1e-9);
    worst_b = std::max(worst_b, kkt_residual(B, t, x));
  }
  // (c) rounded objective against exhaustive integer search: two looped
  // blocks, the busy loop and the slack on a small box
  double worst_c = 0.0;
  for (int i = 0; i < 20; ++i) {
    const BlockMatrix B = random_blocks(rng);
    const int a = static_cast<int>(rng() % 9);
    const int b = static_cast<int>((a + 1 + rng() % 8) % 9);
    SolveOptions opts;
    opts.enabled.reset();
    opts.enabled.set(static_cast<std::size_t>(a)).set(static_cast<std::size_t>(b)).set(9).set(10);
    BlockCounts xs = BlockCounts::Zero();
    std::uniform_real_distribution<double> u(0.0, 12.0);
    xs(a) = u(rng);
    xs(b) = u(rng);
    xs(9) = u(rng);
    xs(10) = xs(a) + xs(b) + u(rng);
    // perturb so the target is not exactly reachable
    MetricVector t = B * xs;
    for (int m = 0; m < 6; ++m) t(m) *= 1.0 + 0.1 * (static_cast<double>(rng() % 1000) / 1000.0 - 0.5);
    const ProxyCombination c = round_combination(B, t, solve_qp(B, t, opts), opts);
    double best = std::numeric_limits<double>::infinity();
    for (int xa = 0; xa <= 20; ++xa) {
      for (int xb = 0; xb <= 20; ++xb) {
        for (int x9 = 0; x9 <= 20; ++x9) {
          for (int s = 0; s <= 20; ++s) {
            BlockCounts y = BlockCounts::Zero();
            y(a) = xa;
            y(b) = xb;
            y(9) = x9;
            y(10) = xa + xb + s;
            best = std::min(best, objective(B, t, y));
          }
        }
      }
    }
    const double gap = (c.residual - best) / std::max(best, 1e-12);
    worst_c = std::max(worst_c, gap);
  }
  // runtime of solve plus rounding
  std::vector<MetricVector> targets;
  for (int i = 0; i < 1000; ++i) targets.push_back(F * random_feasible(rng, 1e4));
  const auto start = Clock::now();
  for (const auto& t : targets) round_combination(F, t, solve_qp(F, t));
  const double per = seconds_since(start) / static_cast<double>(targets.size());

  const bool pass = worst_a <= 1e-6 && worst_b <= 1e-6 && feasible && worst_c <= 0.05 &&
                    per < 1e-3;
  return {pass, fmt::format("(a) max rel residual {:.2e}; (b) max KKT residual {:.2e}{}; "
                            "(c) worst rounded gap {:.2f}%; {:.1f} us per solve",
                            worst_a, worst_b, feasible ? "" : " INFEASIBLE", 100.0 * worst_c,
                            1e6 * per)};
}

Outcome mimicry() {
  const BlockMatrix F = testing::fixture_blocks();
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const MetricVector t = F * random_feasible(rng, 1e4);
    const ProxyCombination c = synthesize_compute_terminal(t, F, 1.0);
    worst = std::max(worst, c.relative_errors.maxCoeff());
  }
  return {worst <= 0.05, fmt::format("worst per-metric relative error {:.4f}% over 100 targets",
                                     100.0 * worst)};
}

struct Fixture {
  std::string name;
  std::vector<Trace> traces;
};

Outcome replay() {
  std::vector<Fixture> fixtures;
  fixtures.push_back({"spmd-p4", generate(example_spec(4, 4))});
  {
    Fixture f{"call-kinds-p4", {}};
    for (int r = 0; r < 4; ++r) f.traces.push_back(testing::call_kinds_trace(r, 4));
    fixtures.push_back(std::move(f));
  }
  fixtures.push_back({"spmd-p1", generate(example_spec(1, 6))});
  fixtures.push_back({"spmd-p8", generate(example_spec(8, 3))});
  std::mt19937_64 rng(13);
  for (int i = 0; i < 4; ++i) {
    const int world = 2 + static_cast<int>(rng() % 5);
    fixtures.push_back({fmt::format("random-p{}", world),
                        generate(testing::random_spec(rng, world, 400))});
  }

  const BlockMatrix F = testing::fixture_blocks();
  std::size_t ranks_checked = 0;
  std::string problems;
  for (const auto& fx : fixtures) {
    const auto run = testing::compress_and_merge(fx.traces, {0.05}, 0.9);
    const auto sols = solve_compute_terminals(run.program.table, F, 10.0);
    const GeneratedProgram gen = generate_program(run.program, sols, CodegenConfig{}, CommModels{});
    const std::size_t rules = run.program.grammar.rules.size();
    if (gen.function_count != run.program.table.size() + rules + 1) {
      problems += fmt::format(" {}: function count {}", fx.name, gen.function_count);
    }
    for (const auto& p :
         testing::validate_program_structure(gen.source, run.program.table.size(), rules)) {
      problems += fmt::format(" {}: {}", fx.name, p);
    }
    if (fx.name == "spmd-p4") {
      const fs::path golden = testing::golden_dir() / "spmd_p4.c";
      if (!fs::exists(golden) || read_text_file(golden) != gen.source) {
        problems += " spmd-p4: differs from the golden file";
      }
    }
    const fs::path dir = testing::scratch_dir("acceptance-replay-" + fx.name);
    write_text_file(dir / "proxy.c", gen.source);
    write_text_file(dir / kShimHeaderName, shim_header());
    std::string log;
    const fs::path bin = testing::compile_with_shim(dir, log, "-DPROXY_SKIP_COMPUTE");
    if (bin.empty()) {
      problems += fmt::format(" {}: compile failed: {}", fx.name, log);
      continue;
    }
    const int world = static_cast<int>(fx.traces.size());
    for (int r = 0; r < world; ++r) {
      const auto& c = run.canonical[static_cast<std::size_t>(r)];
      std::vector<std::string> want;
      for (auto id : c.ids) want.push_back(c.table.key(id));
      if (testing::replay_keys(bin, r, world) != want) {
        problems += fmt::format(" {}: rank {} replay differs", fx.name, r);
      }
      ++ranks_checked;
    }
  }
  return {problems.empty(),
          fmt::format("{} fixtures, {} ranks replayed{}", fixtures.size(), ranks_checked,
                      problems.empty() ? "; sequences and structure match" : ";" + problems)};
}

Outcome scaling() {
  const BlockMatrix F = testing::fixture_blocks();
  const CommModels models = parse_comm_models(
      "model default 1e-6 1e-9\nmodel collective 5e-6 2e-9\nmodel recv 2e-6 8e-10\n");
  std::mt19937_64 rng(14);
  std::size_t compute_checked = 0;
  std::size_t volumes_checked = 0;
  double worst = 0.0;
  bool targets_exact = true;
  std::vector<std::vector<Trace>> inputs;
  inputs.push_back(generate(example_spec(4, 5)));
  for (int i = 0; i < 3; ++i) {
    SynthSpec spec = testing::random_spec(rng, 3, 500);
    for (auto& ph : spec.phases) ph.volume = 1024u << (rng() % 12);
    inputs.push_back(generate(spec));
  }
  {
    std::vector<Trace> kinds;
    for (int r = 0; r < 4; ++r) kinds.push_back(testing::call_kinds_trace(r, 4));
    inputs.push_back(std::move(kinds));
  }
  for (const auto& traces : inputs) {
    const auto run = testing::compress_and_merge(traces, {0.05}, 0.9);
    const auto sols = solve_compute_terminals(run.program.table, F, 10.0);
    const auto gen = generate_program(run.program, sols, CodegenConfig{.scaling_factor = 10.0},
                                      models);
    for (const auto& t : gen.terminals) {
      const Event ev = run.program.table.event(t.id);
      if (t.compute) {
        const MetricVector want = to_metric_vector(std::get<ComputeEvent>(ev)) / 10.0;
        targets_exact = targets_exact && t.solution.target == want;
        ++compute_checked;
        continue;
      }
      const auto& c = std::get<CommEvent>(ev);
      if (!is_blocking_transfer(c.func) || !comm_family(c.func)) continue;
      const CommTimeModel& m = models.for_family(*comm_family(c.func));
      const double want = m.seconds(static_cast<double>(c.volume)) / 10.0;
      if (want < m.intercept) {
        // cheaper than a zero-byte call; clamped to 0 bytes
        if (t.scaled_volume != 0.0) worst = std::max(worst, 1.0);
        continue;
      }
      worst = std::max(worst, std::abs(m.seconds(t.scaled_volume) - want) / want);
      if (t.emitted_volume != static_cast<std::uint64_t>(std::llround(t.scaled_volume))) {
        worst = std::max(worst, 1.0);
      }
      ++volumes_checked;
    }
  }
  return {targets_exact && worst <= 1e-9 && compute_checked > 0 && volumes_checked > 0,
          fmt::format("{} compute targets equal t/10{}; {} blocking volumes, worst time "
                      "inversion error {:.2e}",
                      compute_checked, targets_exact ? "" : " (MISMATCH)", volumes_checked, worst)};
}

Outcome end_to_end() {
  const fs::path dir = testing::scratch_dir("acceptance-e2e");
  const std::string cli = testing::cli_path().string();
  const auto gen = testing::run(
      fmt::format("'{}' gen-trace --out '{}' --ranks 8", cli, (dir / "traces").string()));
  if (gen.status != 0) return {false, "gen-trace failed: " + gen.output};
  const auto start = Clock::now();
  const auto pipe = testing::run(fmt::format(
      "'{}' pipeline '{}' --out '{}' --block-matrix '{}'", cli, (dir / "traces").string(),
      (dir / "out").string(), (testing::data_dir() / "fixture_block_matrix.txt").string()));
  const double elapsed = seconds_since(start);
  if (pipe.status != 0) return {false, "pipeline failed: " + pipe.output};
  std::string log;
  const fs::path bin = testing::compile_with_shim(dir / "out", log);
  if (bin.empty()) return {false, "C99 compile failed: " + log};
  const auto lines = testing::replay_lines(bin, 3, 8);
  const bool ran = !lines.empty() && lines.back() == "MPI_Finalize";
  return {elapsed < 60.0 && ran,
          fmt::format("pipeline on 8 ranks took {:.2f}s; proxy.c compiles as C99 with the shim "
                      "and rank 3 runs to MPI_Finalize: {}",
                      elapsed, ran ? "yes" : "no")};
}

}  // namespace

// An optional argument runs a single criterion by name.
int main(int argc, char** argv) {
  if (argc > 1) only = argv[1];
  criterion("lossless-round-trip", lossless);
  criterion("run-length-grammar", run_length);
  criterion("compression-magnitude", compression);
  criterion("qp-correctness", qp);
  criterion("metric-mimicry", mimicry);
  criterion("codegen-replay-fidelity", replay);
  criterion("scaling-contract", scaling);
  criterion("end-to-end-pipeline", end_to_end);
  std::printf("%d criteria failed\n", failures);
  return failures;
}
