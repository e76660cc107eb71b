#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "proxysynth/canonicalize.hpp"
#include "proxysynth/grammar.hpp"
#include "proxysynth/parallel.hpp"
#include "proxysynth/rank_list.hpp"

namespace proxysynth {

struct GlobalTable {
  TerminalTable table;
  /// remap[rank][local terminal id] -> global terminal id
  std::vector<std::vector<TerminalId>> remap;
};

/// Pairwise tree reduction over ceil(log2 P) rounds. Global ids follow first
/// appearance scanning ranks 0..P-1, each rank by local id.
GlobalTable merge_terminal_tables(std::span<const TerminalTable> tables,
                                  Execution exec = default_execution());

/// Rewrites terminal ids through `remap`; rule ids are untouched.
Grammar remap_terminals(const Grammar& grammar, std::span<const TerminalId> remap);

struct NonterminalMerge {
  /// Deduplicated rules over global ids; rules[i].id == i + 1, callees first.
  std::vector<Rule> rules;
  /// remap[rank][local rule id] -> global rule id; entry 0 (main) stays 0.
  std::vector<std::vector<std::uint32_t>> remap;
};

/// Visits rules by ascending depth and merges two rules iff their bodies,
/// after remapping shallower merges, are equal symbol by symbol.
NonterminalMerge merge_nonterminals(std::span<const Grammar> grammars);

/// Levenshtein distance over (id, exp) tokens divided by the longer length.
double normalized_edit_distance(std::span<const Symbol> a, std::span<const Symbol> b);

/// Greedy grouping: main rule r joins the first group whose founder lies
/// within 1 - similarity, otherwise founds a new group. mains[r] belongs to
/// rank r.
std::vector<RankList> cluster_main_rules(std::span<const Rule> mains,
                                         double similarity,
                                         Execution exec = default_execution());

/// Matched index pairs (i, j) of a longest common subsequence, increasing
/// in both coordinates. Linear space.
std::vector<std::pair<std::size_t, std::size_t>> lcs_alignment(
    std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

/// Symbols in the LCS appear once with the union of both rank lists; the
/// others keep their order, with a's leftovers before b's inside each gap.
/// The two inputs must cover disjoint ranks.
Rule lcs_merge_mains(const Rule& a, const Rule& b);

struct MergeConfig {
  double similarity = 0.9;
  Execution exec = default_execution();
};

struct MergedProgram {
  TerminalTable table;
  /// Main rule symbols carry rank lists; other rules are shared by all ranks.
  Grammar grammar;
  int world_size = 1;
  std::vector<RankList> groups;
};

/// per_rank[r] holds rank r's local table and grammar.
MergedProgram merge_program(std::span<const GrammarDump> per_rank,
                            const MergeConfig& config = {});

GrammarDump to_dump(const MergedProgram& program);
MergedProgram from_dump(GrammarDump dump);

}  // namespace proxysynth
