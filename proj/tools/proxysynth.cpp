#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "proxysynth/pipeline.hpp"

namespace ps = proxysynth;

namespace {

struct Options {
  std::string input;
  std::string out;
  std::string spec_file;
  int ranks = 8;
  std::uint64_t outer = 100;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double scale = 10.0;
  double cluster_threshold = 0.05;
  double merge_similarity = 0.9;
  std::string block_matrix;
  std::string comm_model;
  bool json = false;
  bool serial = false;
};

ps::PipelineConfig make_config(const Options& o) {
  ps::PipelineConfig c;
  c.scaling_factor = o.scale;
  c.cluster_threshold = o.cluster_threshold;
  c.merge_similarity = o.merge_similarity;
  if (!o.block_matrix.empty()) c.block_matrix = o.block_matrix;
  if (!o.comm_model.empty()) c.comm_model = o.comm_model;
  c.exec = o.serial ? ps::Execution::Serial : ps::default_execution();
  c.json_report = o.json;
  return c;
}

void add_tuning(CLI::App* app, Options& o) {
  app->add_option("--scale", o.scale, "Scaling factor (>= 1)")
      ->capture_default_str()
      ->check(CLI::Range(1.0, 1e300));
  app->add_option("--cluster-threshold", o.cluster_threshold,
                  "Relative distance bound for merging compute events")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  app->add_option("--merge-similarity", o.merge_similarity,
                  "Similarity needed to merge two main rules")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  app->add_option("--block-matrix", o.block_matrix, "6x11 code block metric matrix");
  app->add_option("--comm-model", o.comm_model, "Communication time model file");
  app->add_flag("--json", o.json, "Also write report.json");
  app->add_flag("--serial", o.serial, "Run kernels on the serial path");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compress MPI traces into a grammar and synthesize a C proxy program"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-trace", "Write a synthetic SPMD trace set");
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--spec", o.spec_file, "JSON workload spec (default: built-in example)");
  gen->add_option("--ranks", o.ranks, "World size for the built-in example")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  gen->add_option("--outer", o.outer, "Outer iterations for the built-in example")
      ->capture_default_str();
  gen->add_option("--seed", o.seed, "Override the spec seed")
      ->each([&](const std::string&) { o.seed_set = true; });

  auto* compress = app.add_subcommand("compress", "Per-rank grammar dumps from traces");
  compress->add_option("input", o.input, "Directory of trace.<rank>.txt")->required();
  compress->add_option("--out", o.out, "Output directory")->required();
  add_tuning(compress, o);

  auto* merge = app.add_subcommand("merge", "Merge per-rank grammar dumps");
  merge->add_option("input", o.input, "Directory of grammar.<rank>.txt")->required();
  merge->add_option("--out", o.out, "Merged dump file")->required();
  add_tuning(merge, o);

  auto* synth = app.add_subcommand("synthesize", "Generate the C proxy program");
  synth->add_option("input", o.input, "Merged grammar dump")->required();
  synth->add_option("--out", o.out, "Output directory")->required();
  add_tuning(synth, o);

  auto* pipeline = app.add_subcommand("pipeline", "compress, merge and synthesize");
  pipeline->add_option("input", o.input, "Directory of trace.<rank>.txt")->required();
  pipeline->add_option("--out", o.out, "Output directory")->required();
  add_tuning(pipeline, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ps::kExitUsage;
  }

  try {
    ps::Report report;
    const auto config = make_config(o);
    if (*gen) {
      ps::SynthSpec spec = o.spec_file.empty()
                               ? ps::example_spec(o.ranks, o.outer)
                               : ps::spec_from_json(ps::read_text_file(o.spec_file));
      if (o.seed_set) spec.seed = o.seed;
      report = ps::cmd_gen_trace(spec, o.out);
    } else if (*compress) {
      report = ps::cmd_compress(o.input, o.out, config);
    } else if (*merge) {
      report = ps::cmd_merge(o.input, o.out, config);
    } else if (*synth) {
      report = ps::cmd_synthesize(o.input, o.out, config);
    } else if (*pipeline) {
      report = ps::cmd_pipeline(o.input, o.out, config);
    }
    std::cout << report.text();
    return 0;
  } catch (const ps::Error& e) {
    std::cerr << "proxysynth: " << ps::to_string(e.kind()) << ": " << e.what() << "\n";
    return ps::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "proxysynth: internal error: " << e.what() << "\n";
    return ps::kExitInternal;
  }
}
