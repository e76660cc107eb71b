#include "proxysynth/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <map>

#include <fmt/format.h>
#include <json.hpp>

#include "proxysynth/solver.hpp"

namespace proxysynth {

namespace {

std::optional<int> rank_from_name(const fs::path& path, std::string_view stem) {
  const std::string name = path.filename().string();
  const std::string prefix = std::string(stem) + ".";
  if (!name.starts_with(prefix) || !name.ends_with(".txt")) return std::nullopt;
  std::string_view digits(name);
  digits = digits.substr(prefix.size(), digits.size() - prefix.size() - 4);
  int rank = 0;
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), rank);
  if (digits.empty() || ec != std::errc{} || p != digits.data() + digits.size() || rank < 0) {
    return std::nullopt;
  }
  return rank;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorKind::Io, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  }
}

std::string fmt_double(double v) { return fmt::format("{:.6g}", v); }

void write_json_report(const Report& report, const fs::path& dir, const PipelineConfig& config) {
  if (config.json_report) write_text_file(dir / "report.json", report.json());
}

}  // namespace

void Report::add(std::string key, std::string value) {
  fields_.emplace_back(std::move(key), std::move(value));
}
void Report::add(std::string key, double value) { add(std::move(key), fmt_double(value)); }
void Report::add(std::string key, std::uint64_t value) {
  add(std::move(key), fmt::format("{}", value));
}

void Report::append(const Report& other) {
  fields_.insert(fields_.end(), other.fields_.begin(), other.fields_.end());
}

std::optional<std::string> Report::get(std::string_view key) const {
  for (const auto& [k, v] : fields_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string Report::text() const {
  std::string out;
  for (const auto& [k, v] : fields_) out += fmt::format("{}={}\n", k, v);
  return out;
}

std::string Report::json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : fields_) {
    double d = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
    if (!v.empty() && ec == std::errc{} && p == v.data() + v.size()) {
      j[k] = d;
    } else {
      j[k] = v;
    }
  }
  return j.dump(2) + "\n";
}

RankCompression compress_trace(const Trace& trace, int world_size,
                               const ClusterConfig& cluster) {
  RankCompression out;
  out.events = trace.events.size();
  out.trace_bytes = serialized_size(trace);
  CanonicalTrace canon = canonicalize(trace, world_size, cluster);
  out.dump.rank = trace.rank;
  out.dump.world_size = world_size;
  out.dump.grammar = build_grammar(canon.ids);
  out.dump.table = std::move(canon.table);
  return out;
}

std::vector<RankCompression> compress_ranks(std::span<const Trace> traces,
                                            const ClusterConfig& cluster, Execution exec) {
  const int world = static_cast<int>(traces.size());
  for (int r = 0; r < world; ++r) {
    if (traces[static_cast<std::size_t>(r)].rank != r) {
      throw Error(ErrorKind::InvalidRank,
                  fmt::format("trace of rank {} found at position {}",
                              traces[static_cast<std::size_t>(r)].rank, r));
    }
  }
  std::vector<RankCompression> out(traces.size());
  for_each_index(exec, traces.size(), [&](std::size_t r) {
    out[r] = compress_trace(traces[r], world, cluster);
  });
  return out;
}

std::vector<fs::path> list_rank_files(const fs::path& dir, std::string_view stem) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw Error(ErrorKind::Io, fmt::format("{} is not a directory", dir.string()));
  }
  std::map<int, fs::path> by_rank;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (auto r = rank_from_name(entry.path(), stem)) by_rank[*r] = entry.path();
  }
  if (by_rank.empty()) {
    throw Error(ErrorKind::Io, fmt::format("no {} files in {}", stem, dir.string()));
  }
  std::vector<fs::path> out;
  int expected = 0;
  for (auto& [r, p] : by_rank) {
    if (r != expected) {
      throw Error(ErrorKind::InvalidRank,
                  fmt::format("{} files skip rank {} in {}", stem, expected, dir.string()));
    }
    out.push_back(p);
    ++expected;
  }
  return out;
}

fs::path grammar_file_name(int rank) { return fmt::format("grammar.{}.txt", rank); }

Report cmd_gen_trace(const SynthSpec& spec, const fs::path& out_dir) {
  validate(spec);
  ensure_dir(out_dir);
  std::vector<std::uint64_t> events(static_cast<std::size_t>(spec.world_size));
  std::vector<std::uint64_t> bytes(events.size());
  for (int r = 0; r < spec.world_size; ++r) {
    Trace t = generate_rank(spec, r);
    events[static_cast<std::size_t>(r)] = t.events.size();
    bytes[static_cast<std::size_t>(r)] = serialized_size(t);
    write_trace_file(out_dir / trace_file_name(r), t);
  }
  write_text_file(out_dir / "spec.json", spec_to_json(spec));
  Report rep;
  rep.add("ranks", spec.world_size);
  std::uint64_t total_events = 0;
  std::uint64_t total_bytes = 0;
  for (std::size_t r = 0; r < events.size(); ++r) {
    total_events += events[r];
    total_bytes += bytes[r];
  }
  rep.add("events", total_events);
  rep.add("trace_bytes", total_bytes);
  rep.add("out", out_dir.string());
  return rep;
}

Report cmd_compress(const fs::path& trace_dir, const fs::path& out_dir,
                    const PipelineConfig& config) {
  const auto files = list_rank_files(trace_dir, "trace");
  std::vector<Trace> traces(files.size());
  std::vector<std::vector<std::string>> warnings(files.size());
  for_each_index(config.exec, files.size(), [&](std::size_t r) {
    traces[r] = read_trace_file(files[r], &warnings[r]);
  });
  auto ranks = compress_ranks(traces, ClusterConfig{config.cluster_threshold}, config.exec);
  traces.clear();

  ensure_dir(out_dir);
  std::uint64_t events = 0;
  std::uint64_t trace_bytes = 0;
  std::uint64_t dump_bytes = 0;
  std::uint64_t symbols = 0;
  std::uint64_t terminals = 0;
  std::uint64_t warning_count = 0;
  for (std::size_t r = 0; r < ranks.size(); ++r) {
    const std::string text = format_dump(ranks[r].dump);
    write_text_file(out_dir / grammar_file_name(static_cast<int>(r)), text);
    events += ranks[r].events;
    trace_bytes += ranks[r].trace_bytes;
    dump_bytes += text.size();
    symbols += grammar_size(ranks[r].dump.grammar);
    terminals += ranks[r].dump.table.size();
    warning_count += warnings[r].size();
  }
  Report rep;
  rep.add("ranks", static_cast<std::uint64_t>(ranks.size()));
  rep.add("events", events);
  rep.add("trace_bytes", trace_bytes);
  rep.add("local_terminals", terminals);
  rep.add("grammar_symbols", symbols);
  rep.add("dump_bytes", dump_bytes);
  rep.add("compression_ratio",
          dump_bytes ? static_cast<double>(trace_bytes) / static_cast<double>(dump_bytes) : 0.0);
  rep.add("warnings", warning_count);
  write_json_report(rep, out_dir, config);
  return rep;
}

Report cmd_merge(const fs::path& dump_dir, const fs::path& out_file,
                 const PipelineConfig& config) {
  const auto files = list_rank_files(dump_dir, "grammar");
  std::vector<GrammarDump> dumps(files.size());
  for_each_index(config.exec, files.size(), [&](std::size_t r) {
    try {
      dumps[r] = parse_dump(read_text_file(files[r]));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Io) throw;
      throw Error(e.kind(), fmt::format("{}: {}", files[r].string(), e.what()));
    }
  });
  MergedProgram merged = merge_program(dumps, MergeConfig{config.merge_similarity, config.exec});
  const std::string text = format_dump(to_dump(merged));
  if (out_file.has_parent_path()) ensure_dir(out_file.parent_path());
  write_text_file(out_file, text);

  Report rep;
  rep.add("ranks", merged.world_size);
  rep.add("groups", static_cast<std::uint64_t>(merged.groups.size()));
  rep.add("terminals", static_cast<std::uint64_t>(merged.table.size()));
  rep.add("rules", static_cast<std::uint64_t>(merged.grammar.rules.size()));
  rep.add("main_symbols", static_cast<std::uint64_t>(merged.grammar.main.body.size()));
  rep.add("grammar_symbols", static_cast<std::uint64_t>(grammar_size(merged.grammar)));
  rep.add("size_c", static_cast<std::uint64_t>(text.size()));
  rep.add("out", out_file.string());
  if (out_file.has_parent_path()) write_json_report(rep, out_file.parent_path(), config);
  return rep;
}

Report cmd_synthesize(const fs::path& merged_file, const fs::path& out_dir,
                      const PipelineConfig& config) {
  if (!config.block_matrix) {
    throw Error(ErrorKind::InvalidArgument, "--block-matrix is required to synthesize");
  }
  const BlockMatrix blocks = read_block_matrix(*config.block_matrix);
  const CommModels models =
      config.comm_model ? read_comm_models(*config.comm_model) : CommModels{};
  MergedProgram program;
  try {
    program = from_dump(parse_dump(read_text_file(merged_file)));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw Error(e.kind(), fmt::format("{}: {}", merged_file.string(), e.what()));
  }

  const auto solutions =
      solve_compute_terminals(program.table, blocks, config.scaling_factor, config.exec);
  CodegenConfig cg;
  cg.scaling_factor = config.scaling_factor;
  GeneratedProgram gen = generate_program(program, solutions, cg, models);

  ensure_dir(out_dir);
  write_text_file(out_dir / kProgramFileName, gen.source);
  write_text_file(out_dir / kShimHeaderName, shim_header());
  write_text_file(out_dir / "Makefile", makefile_text(kProgramFileName));

  Report rep;
  rep.add("ranks", program.world_size);
  rep.add("terminals", static_cast<std::uint64_t>(program.table.size()));
  rep.add("rules", static_cast<std::uint64_t>(program.grammar.rules.size()));
  rep.add("functions", static_cast<std::uint64_t>(gen.function_count));
  rep.add("guards", static_cast<std::uint64_t>(gen.guard_count));
  rep.add("scale", config.scaling_factor);
  std::uint64_t compute_terminals = 0;
  MetricVector worst = MetricVector::Zero();
  Report per_terminal;
  for (const auto& t : gen.terminals) {
    if (t.compute) {
      ++compute_terminals;
      const MetricVector& e = t.solution.combo.relative_errors;
      worst = worst.cwiseMax(e);
      per_terminal.add(fmt::format("t{}.max_rel_error", t.id), e.maxCoeff());
    } else if (t.scaled) {
      per_terminal.add(fmt::format("t{}.volume", t.id),
                       fmt::format("{}->{}", t.volume, t.emitted_volume));
    }
  }
  rep.add("compute_terminals", compute_terminals);
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    rep.add(fmt::format("max_rel_error.{}", kMetricNames[i]), worst(static_cast<int>(i)));
  }
  rep.add("max_rel_error", compute_terminals ? worst.maxCoeff() : 0.0);
  rep.append(per_terminal);
  rep.add("out", (out_dir / kProgramFileName).string());
  write_json_report(rep, out_dir, config);
  return rep;
}

Report cmd_pipeline(const fs::path& trace_dir, const fs::path& out_dir,
                    const PipelineConfig& config) {
  if (!config.block_matrix) {
    throw Error(ErrorKind::InvalidArgument, "--block-matrix is required to synthesize");
  }
  PipelineConfig stage = config;
  stage.json_report = false;
  const fs::path grammars = out_dir / "grammars";
  const fs::path merged = out_dir / kMergedFileName;
  Report rep;
  auto prefixed = [&](std::string_view prefix, const Report& r) {
    for (const auto& [k, v] : r.fields()) rep.add(fmt::format("{}.{}", prefix, k), v);
  };
  prefixed("compress", cmd_compress(trace_dir, grammars, stage));
  prefixed("merge", cmd_merge(grammars, merged, stage));
  prefixed("synthesize", cmd_synthesize(merged, out_dir, stage));
  write_json_report(rep, out_dir, config);
  return rep;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
      return kExitUsage;
    case ErrorKind::Parse:
    case ErrorKind::UnsupportedEvent:
    case ErrorKind::DanglingHandle:
    case ErrorKind::DoubleFree:
    case ErrorKind::InvalidRank:
    case ErrorKind::MalformedGrammar:
    case ErrorKind::MalformedProgram:
    case ErrorKind::Codegen:
    case ErrorKind::DegenerateFit:
    case ErrorKind::NonFinite:
    case ErrorKind::Io:
      return kExitData;
  }
  return kExitInternal;
}

}  // namespace proxysynth
