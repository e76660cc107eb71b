// Serial vs OpenMP timings of the data-parallel kernels. The second
// argument of each benchmark selects the backend (0 serial, 1 OpenMP).

#include <benchmark/benchmark.h>

#include <filesystem>
#include <map>

#include "proxysynth/codegen.hpp"
#include "proxysynth/pipeline.hpp"
#include "proxysynth/synth.hpp"

namespace ps = proxysynth;

namespace {

ps::Execution backend(const benchmark::State& state) {
  return state.range(1) ? ps::Execution::OpenMP : ps::Execution::Serial;
}

const std::vector<ps::Trace>& traces(int world) {
  static std::map<int, std::vector<ps::Trace>> cache;
  auto it = cache.find(world);
  if (it == cache.end()) {
    it = cache.emplace(world, ps::generate(ps::example_spec(world, 2000), ps::Execution::Serial))
             .first;
  }
  return it->second;
}

std::vector<ps::GrammarDump> dumps(int world) {
  std::vector<ps::GrammarDump> out;
  for (auto& rc : ps::compress_ranks(traces(world), {0.05}, ps::Execution::Serial)) {
    out.push_back(std::move(rc.dump));
  }
  return out;
}

void BM_GenerateTraces(benchmark::State& state) {
  const auto spec = ps::example_spec(static_cast<int>(state.range(0)), 2000);
  for (auto _ : state) benchmark::DoNotOptimize(ps::generate(spec, backend(state)));
}

void BM_CompressRanks(benchmark::State& state) {
  const auto& t = traces(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ps::compress_ranks(t, {0.05}, backend(state)));
}

void BM_MergeProgram(benchmark::State& state) {
  const auto d = dumps(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ps::merge_program(d, ps::MergeConfig{0.9, backend(state)}));
  }
}

void BM_SolveComputeTerminals(benchmark::State& state) {
  // many distinct compute terminals: no clustering on jittered spans
  auto spec = ps::example_spec(1, 300);
  auto c = ps::canonicalize(ps::generate_rank(spec, 0), 1, {0.0});
  ps::BlockMatrix blocks = ps::read_block_matrix(PROXYSYNTH_FIXTURE_BLOCKS);
  state.counters["terminals"] = static_cast<double>(c.table.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(ps::solve_compute_terminals(c.table, blocks, 10.0, backend(state)));
  }
}

}  // namespace

BENCHMARK(BM_GenerateTraces)->ArgsProduct({{16}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CompressRanks)->ArgsProduct({{16}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MergeProgram)->ArgsProduct({{16}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SolveComputeTerminals)->ArgsProduct({{1}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
