#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "proxysynth/canonicalize.hpp"
#include "proxysynth/rank_list.hpp"

namespace proxysynth {

/// Reference to a terminal or a rule. The two id spaces are disjoint.
struct SymbolRef {
  enum class Kind : std::uint8_t { Terminal, Rule };
  Kind kind = Kind::Terminal;
  std::uint32_t id = 0;

  static SymbolRef terminal(std::uint32_t id) { return {Kind::Terminal, id}; }
  static SymbolRef rule(std::uint32_t id) { return {Kind::Rule, id}; }
  bool is_rule() const { return kind == Kind::Rule; }

  auto operator<=>(const SymbolRef&) const = default;
};

/// A run-length annotated symbol `ref^exp`. `ranks` is only populated in
/// merged main rules; an empty list means "every rank".
struct Symbol {
  SymbolRef ref;
  std::uint64_t exp = 1;
  RankList ranks;

  /// Token equality used for digrams, rule bodies and LCS: id and exponent.
  bool same_token(const Symbol& other) const {
    return ref == other.ref && exp == other.exp;
  }
  bool operator==(const Symbol&) const = default;
};

struct Rule {
  std::uint32_t id = 0;
  std::vector<Symbol> body;

  bool operator==(const Rule&) const = default;
};

/// Finished grammar. The main rule has id 0; rules[i] has id i + 1 and rules
/// are ordered by creation.
struct Grammar {
  Rule main;
  std::vector<Rule> rules;

  const Rule& rule(std::uint32_t id) const;
  std::size_t rule_count() const { return rules.size(); }

  bool operator==(const Grammar&) const = default;
};

struct BuilderOptions {
  /// Collapse adjacent equal symbols a^i a^j into a^(i+j). Disabling it
  /// gives plain Sequitur, which is only useful for comparison.
  bool fold_runs = true;
};

/// Incremental Sequitur with run-length exponents. Each append restores
/// digram uniqueness, rule utility and run folding before returning.
class GrammarBuilder {
 public:
  explicit GrammarBuilder(BuilderOptions options = {});
  ~GrammarBuilder();
  GrammarBuilder(GrammarBuilder&&) noexcept;
  GrammarBuilder& operator=(GrammarBuilder&&) noexcept;

  void append(TerminalId terminal);
  void append(std::span<const TerminalId> terminals);

  /// Number of terminals appended so far.
  std::uint64_t length() const;
  Grammar grammar() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Grammar build_grammar(std::span<const TerminalId> sequence,
                      BuilderOptions options = {});

/// Throws ErrorKind::MalformedGrammar on unknown rule ids or reference cycles.
std::vector<TerminalId> expand(const Grammar& grammar);
/// Expands only the main-rule symbols whose rank list contains `rank`.
std::vector<TerminalId> expand_rank(const Grammar& grammar, int rank);
/// Length of expand(grammar) without materializing it.
std::uint64_t expanded_length(const Grammar& grammar);

/// Total symbol count over all rule bodies, main included.
std::size_t grammar_size(const Grammar& grammar);

/// Height of the derivation tree below `id`; terminals sit at depth 0.
int rule_depth(const Grammar& grammar, std::uint32_t id);
/// Depth of every rule, indexed by rule id (index 0 is main).
std::vector<int> rule_depths(const Grammar& grammar);

/// Non-main rule ids ordered so that every callee precedes its callers.
std::vector<std::uint32_t> topological_rule_order(const Grammar& grammar);

/// Checks the structural constraints and returns one message per
/// violation: folded runs, digram uniqueness on (id, exp) pairs, rule
/// utility counted by exponent multiplicity, body length >= 2.
std::vector<std::string> audit_grammar(const Grammar& grammar);

/// Lines `R<k> -> sym[^exp][@{ranks}] ...`, main rule first.
std::string format_rules(const Grammar& grammar);
std::string format_symbol(const Symbol& symbol);

/// Text artifact written per rank by `compress` and once by `merge`:
///
///   # grammar world=<P> [rank=<r>]
///   T<id> <canonical event line>
///   R0 -> ...
///   R1 -> ...
struct GrammarDump {
  std::optional<int> rank;
  int world_size = 1;
  TerminalTable table;
  Grammar grammar;
};

std::string format_dump(const GrammarDump& dump);
GrammarDump parse_dump(std::string_view text);

}  // namespace proxysynth
