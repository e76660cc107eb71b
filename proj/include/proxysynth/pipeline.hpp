#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "proxysynth/canonicalize.hpp"
#include "proxysynth/codegen.hpp"
#include "proxysynth/error.hpp"
#include "proxysynth/grammar.hpp"
#include "proxysynth/merge.hpp"
#include "proxysynth/parallel.hpp"
#include "proxysynth/synth.hpp"

namespace proxysynth {

namespace fs = std::filesystem;

struct PipelineConfig {
  double scaling_factor = 10.0;
  double cluster_threshold = 0.05;
  double merge_similarity = 0.9;
  std::optional<fs::path> block_matrix;
  std::optional<fs::path> comm_model;
  Execution exec = default_execution();
  /// Also write report.json next to the outputs.
  bool json_report = false;
};

/// Ordered key=value pairs; text() gives one `key=value` per line.
class Report {
 public:
  void add(std::string key, std::string value);
  void add(std::string key, double value);
  void add(std::string key, std::uint64_t value);
  void add(std::string key, int value) { add(std::move(key), static_cast<std::uint64_t>(value)); }
  void append(const Report& other);

  const std::vector<std::pair<std::string, std::string>>& fields() const { return fields_; }
  std::optional<std::string> get(std::string_view key) const;
  std::string text() const;
  std::string json() const;

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

struct RankCompression {
  GrammarDump dump;
  std::uint64_t events = 0;
  std::uint64_t trace_bytes = 0;
};

/// canonicalize + grammar for one rank.
RankCompression compress_trace(const Trace& trace, int world_size,
                               const ClusterConfig& cluster);
/// Ranks are compressed independently on `exec`; traces[r] must be rank r.
std::vector<RankCompression> compress_ranks(std::span<const Trace> traces,
                                            const ClusterConfig& cluster,
                                            Execution exec = default_execution());

/// trace.<r>.txt files of `dir`, sorted by rank. Throws ErrorKind::Io when
/// none exist and ErrorKind::InvalidRank when ranks are not 0..P-1.
std::vector<fs::path> list_rank_files(const fs::path& dir, std::string_view stem);

fs::path grammar_file_name(int rank);
inline constexpr std::string_view kMergedFileName = "merged.grammar.txt";
inline constexpr std::string_view kProgramFileName = "proxy.c";

Report cmd_gen_trace(const SynthSpec& spec, const fs::path& out_dir);
/// Writes grammar.<r>.txt per rank into out_dir.
Report cmd_compress(const fs::path& trace_dir, const fs::path& out_dir,
                    const PipelineConfig& config);
/// Reads grammar.<r>.txt from dump_dir, writes out_file.
Report cmd_merge(const fs::path& dump_dir, const fs::path& out_file,
                 const PipelineConfig& config);
/// Writes proxy.c, proxy_shim.h and Makefile into out_dir.
Report cmd_synthesize(const fs::path& merged_file, const fs::path& out_dir,
                      const PipelineConfig& config);
/// compress -> merge -> synthesize with intermediates under out_dir.
Report cmd_pipeline(const fs::path& trace_dir, const fs::path& out_dir,
                    const PipelineConfig& config);

/// 2 usage, 3 data, 4 internal.
int exit_code(ErrorKind kind);
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitInternal = 4;

}  // namespace proxysynth
