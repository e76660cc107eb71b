#include "proxysynth/grammar.hpp"

#include <deque>
#include <limits>
#include <map>
#include <unordered_map>

#include <fmt/format.h>

#include "proxysynth/error.hpp"

namespace proxysynth {

const Rule& Grammar::rule(std::uint32_t id) const {
  if (id == 0) return main;
  if (id > rules.size()) {
    throw Error(ErrorKind::MalformedGrammar, fmt::format("unknown rule R{}", id));
  }
  return rules[id - 1];
}

namespace {

struct RuleRec;

struct Node {
  SymbolRef sym;
  std::uint64_t exp = 1;
  Node* prev = nullptr;
  Node* next = nullptr;
  RuleRec* guard_of = nullptr;  // set only on a rule's guard node
  std::uint32_t site_index = 0;
  bool alive = false;

  bool is_guard() const { return guard_of != nullptr; }
};

struct RuleRec {
  std::uint32_t serial = 0;
  Node* guard = nullptr;
  std::vector<Node*> sites;
  std::uint64_t multiplicity = 0;  // sum of exponents over all sites
  bool alive = true;
};

struct DigramKey {
  std::uint64_t left;
  std::uint64_t left_exp;
  std::uint64_t right;
  std::uint64_t right_exp;

  bool operator==(const DigramKey&) const = default;
};

struct DigramHash {
  std::size_t operator()(const DigramKey& k) const noexcept {
    std::uint64_t h = k.left * 0x9e3779b97f4a7c15ULL;
    h ^= (k.right + 0x632be59bd9b4e019ULL) * 0xbf58476d1ce4e5b9ULL;
    h ^= (k.left_exp * 0x94d049bb133111ebULL) + (k.right_exp << 17) + (h >> 29);
    return static_cast<std::size_t>(h ^ (h >> 31));
  }
};

std::uint64_t pack(SymbolRef s) {
  return (static_cast<std::uint64_t>(s.kind) << 32) | s.id;
}

}  // namespace

struct GrammarBuilder::Impl {
  BuilderOptions options;
  std::deque<Node> nodes;
  std::vector<Node*> free_nodes;
  std::vector<std::unique_ptr<RuleRec>> rules;
  std::unordered_map<DigramKey, Node*, DigramHash> index;
  std::vector<Node*> pending;
  std::uint64_t length = 0;

  explicit Impl(BuilderOptions opts) : options(opts) { new_rule(); }

  RuleRec& main_rule() { return *rules[0]; }
  RuleRec& rule_of(SymbolRef s) { return *rules[s.id]; }

  Node* new_node(SymbolRef sym, std::uint64_t exp) {
    Node* n;
    if (!free_nodes.empty()) {
      n = free_nodes.back();
      free_nodes.pop_back();
    } else {
      n = &nodes.emplace_back();
    }
    *n = Node{};
    n->sym = sym;
    n->exp = exp;
    n->alive = true;
    return n;
  }

  void free_node(Node* n) {
    n->alive = false;
    n->prev = n->next = nullptr;
    n->guard_of = nullptr;
    free_nodes.push_back(n);
  }

  RuleRec* new_rule() {
    auto rec = std::make_unique<RuleRec>();
    rec->serial = static_cast<std::uint32_t>(rules.size());
    Node* g = new_node(SymbolRef::rule(rec->serial), 0);
    g->guard_of = rec.get();
    g->prev = g->next = g;
    rec->guard = g;
    rules.push_back(std::move(rec));
    return rules.back().get();
  }

  static DigramKey key(const Node* n) {
    return {pack(n->sym), n->exp, pack(n->next->sym), n->next->exp};
  }

  static bool has_pair(const Node* n) {
    return n->alive && !n->is_guard() && !n->next->is_guard();
  }

  void unindex(Node* n) {
    if (!has_pair(n)) return;
    auto it = index.find(key(n));
    if (it != index.end() && it->second == n) index.erase(it);
  }

  void add_site(Node* n) {
    if (!n->sym.is_rule()) return;
    RuleRec& r = rule_of(n->sym);
    n->site_index = static_cast<std::uint32_t>(r.sites.size());
    r.sites.push_back(n);
    r.multiplicity += n->exp;
  }

  void remove_site(Node* n) {
    if (!n->sym.is_rule()) return;
    RuleRec& r = rule_of(n->sym);
    Node* last = r.sites.back();
    r.sites[n->site_index] = last;
    last->site_index = n->site_index;
    r.sites.pop_back();
    r.multiplicity -= n->exp;
  }

  void touch(Node* n) {
    if (!n->is_guard()) pending.push_back(n);
  }

  // Every new adjacency schedules a check of its left node.
  void link(Node* a, Node* b) {
    a->next = b;
    b->prev = a;
    touch(a);
  }

  RuleRec* full_body_rule(Node* n) {
    if (!n->prev->is_guard() || !n->next->next->is_guard()) return nullptr;
    RuleRec* owner = n->prev->guard_of;
    return owner == &main_rule() ? nullptr : owner;
  }

  void append(TerminalId t) {
    Node* guard = main_rule().guard;
    Node* last = guard->prev;
    Node* x = new_node(SymbolRef::terminal(t), 1);
    link(x, guard);
    link(last, x);
    ++length;
    while (!pending.empty()) {
      Node* n = pending.back();
      pending.pop_back();
      check(n);
    }
  }

  void check(Node* n) {
    if (!n->alive || n->is_guard()) return;
    Node* m = n->next;
    if (m->is_guard()) return;
    if (options.fold_runs && n->sym == m->sym) {
      fold(n);
      return;
    }
    auto [it, inserted] = index.try_emplace(key(n), n);
    if (inserted || it->second == n) return;
    Node* other = it->second;
    // Overlapping occurrences (a a a) only exist without run folding.
    if (other->next == n || n->next == other) return;
    on_repeat(other, n);
  }

  void fold(Node* n) {
    Node* m = n->next;
    unindex(n->prev);
    unindex(n);
    unindex(m);
    remove_site(m);
    if (n->sym.is_rule()) rule_of(n->sym).multiplicity += m->exp;
    n->exp += m->exp;
    Node* after = m->next;
    free_node(m);
    link(n, after);
    touch(n->prev);
    if (n->prev->is_guard() && n->next->is_guard() &&
        n->prev->guard_of != &main_rule()) {
      eliminate_single(n->prev->guard_of);
    }
  }

  // A rule whose body folded to a single symbol c^k is replaced at every
  // site by c^(k*e).
  void eliminate_single(RuleRec* q) {
    Node* body = q->guard->next;
    const SymbolRef sym = body->sym;
    const std::uint64_t k = body->exp;
    const std::vector<Node*> sites = q->sites;
    for (Node* s : sites) {
      unindex(s->prev);
      unindex(s);
      remove_site(s);
      s->sym = sym;
      s->exp *= k;
      add_site(s);
      touch(s);
      touch(s->prev);
    }
    remove_site(body);
    free_node(body);
    free_node(q->guard);
    q->guard = nullptr;
    q->alive = false;
  }

  void on_repeat(Node* other, Node* n) {
    if (RuleRec* r = full_body_rule(other)) {
      replace(n, r);
      enforce_utility(r);
      return;
    }
    if (RuleRec* r = full_body_rule(n)) {
      const DigramKey k = key(n);
      replace(other, r);
      index[k] = n;
      enforce_utility(r);
      return;
    }
    RuleRec* r = new_rule();
    Node* a = new_node(other->sym, other->exp);
    Node* b = new_node(other->next->sym, other->next->exp);
    link(r->guard, a);
    link(a, b);
    link(b, r->guard);
    add_site(a);
    add_site(b);
    const DigramKey k = key(other);
    replace(other, r);
    replace(n, r);
    index[k] = a;
    enforce_utility(r);
  }

  void replace(Node* first, RuleRec* r) {
    Node* second = first->next;
    Node* before = first->prev;
    Node* after = second->next;
    unindex(before);
    unindex(first);
    unindex(second);
    remove_site(first);
    remove_site(second);
    free_node(first);
    free_node(second);
    Node* s = new_node(SymbolRef::rule(r->serial), 1);
    add_site(s);
    link(s, after);
    link(before, s);
  }

  // After a substitution only symbols inside r's body can be left with a
  // single use.
  void enforce_utility(RuleRec* r) {
    for (Node* x = r->guard->next; !x->is_guard();) {
      Node* next = x->next;
      if (x->sym.is_rule() && rule_of(x->sym).multiplicity == 1) inline_rule(x);
      x = next;
    }
  }

  void inline_rule(Node* s) {
    RuleRec& c = rule_of(s->sym);
    Node* before = s->prev;
    Node* after = s->next;
    unindex(before);
    unindex(s);
    remove_site(s);
    Node* first = c.guard->next;
    Node* last = c.guard->prev;
    free_node(s);
    link(last, after);
    link(before, first);
    free_node(c.guard);
    c.guard = nullptr;
    c.alive = false;
  }

  Grammar snapshot() const {
    std::vector<std::uint32_t> dense(rules.size(), 0);
    std::uint32_t next_id = 1;
    for (std::size_t i = 1; i < rules.size(); ++i) {
      if (rules[i]->alive) dense[i] = next_id++;
    }
    auto body_of = [&](const RuleRec& r) {
      std::vector<Symbol> body;
      for (const Node* x = r.guard->next; !x->is_guard(); x = x->next) {
        SymbolRef ref = x->sym;
        if (ref.is_rule()) ref.id = dense[ref.id];
        body.push_back(Symbol{ref, x->exp, {}});
      }
      return body;
    };
    Grammar g;
    g.main.id = 0;
    g.main.body = body_of(*rules[0]);
    g.rules.reserve(next_id - 1);
    for (std::size_t i = 1; i < rules.size(); ++i) {
      if (!rules[i]->alive) continue;
      g.rules.push_back(Rule{dense[i], body_of(*rules[i])});
    }
    return g;
  }
};

GrammarBuilder::GrammarBuilder(BuilderOptions options)
    : impl_(std::make_unique<Impl>(options)) {}
GrammarBuilder::~GrammarBuilder() = default;
GrammarBuilder::GrammarBuilder(GrammarBuilder&&) noexcept = default;
GrammarBuilder& GrammarBuilder::operator=(GrammarBuilder&&) noexcept = default;

void GrammarBuilder::append(TerminalId terminal) { impl_->append(terminal); }

void GrammarBuilder::append(std::span<const TerminalId> terminals) {
  for (TerminalId t : terminals) impl_->append(t);
}

std::uint64_t GrammarBuilder::length() const { return impl_->length; }

Grammar GrammarBuilder::grammar() const { return impl_->snapshot(); }

Grammar build_grammar(std::span<const TerminalId> sequence, BuilderOptions options) {
  GrammarBuilder builder(options);
  builder.append(sequence);
  return builder.grammar();
}

namespace {

// Rule ids with every callee before its callers; main excluded.
std::vector<std::uint32_t> topo_order(const Grammar& g) {
  const std::size_t n = g.rules.size() + 1;
  enum : std::uint8_t { kWhite, kGrey, kBlack };
  std::vector<std::uint8_t> color(n, kWhite);
  std::vector<std::uint32_t> order;
  order.reserve(g.rules.size());

  auto check_ref = [&](const Symbol& s) {
    if (s.ref.is_rule() && (s.ref.id == 0 || s.ref.id >= n)) {
      throw Error(ErrorKind::MalformedGrammar,
                  fmt::format("reference to unknown rule R{}", s.ref.id));
    }
    if (s.exp == 0) {
      throw Error(ErrorKind::MalformedGrammar, "symbol with exponent 0");
    }
  };

  struct Frame {
    std::uint32_t id;
    std::size_t pos;
  };
  std::vector<Frame> stack;
  for (std::uint32_t root = 0; root < n; ++root) {
    if (color[root] != kWhite) continue;
    stack.push_back({root, 0});
    color[root] = kGrey;
    while (!stack.empty()) {
      Frame& f = stack.back();
      const auto& body = g.rule(f.id).body;
      if (f.pos == body.size()) {
        color[f.id] = kBlack;
        if (f.id != 0) order.push_back(f.id);
        stack.pop_back();
        continue;
      }
      const Symbol& s = body[f.pos++];
      check_ref(s);
      if (!s.ref.is_rule()) continue;
      if (color[s.ref.id] == kGrey) {
        throw Error(ErrorKind::MalformedGrammar,
                    fmt::format("cycle through rule R{}", s.ref.id));
      }
      if (color[s.ref.id] == kWhite) {
        color[s.ref.id] = kGrey;
        stack.push_back({s.ref.id, 0});
      }
    }
  }
  return order;
}

void expand_body(const Grammar& g, const std::vector<Symbol>& top,
                 std::vector<TerminalId>& out) {
  struct Frame {
    const std::vector<Symbol>* body;
    std::size_t pos;
    std::uint64_t reps_left;
  };
  std::vector<Frame> stack{{&top, 0, 0}};
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.pos == f.body->size()) {
      stack.pop_back();
      if (!stack.empty() && --stack.back().reps_left == 0) ++stack.back().pos;
      continue;
    }
    const Symbol& s = (*f.body)[f.pos];
    if (!s.ref.is_rule()) {
      out.insert(out.end(), s.exp, s.ref.id);
      ++f.pos;
      continue;
    }
    if (f.reps_left == 0) f.reps_left = s.exp;
    const auto* child = &g.rule(s.ref.id).body;
    stack.push_back({child, 0, 0});
  }
}

}  // namespace

std::vector<TerminalId> expand(const Grammar& grammar) {
  topo_order(grammar);
  std::vector<TerminalId> out;
  expand_body(grammar, grammar.main.body, out);
  return out;
}

std::vector<TerminalId> expand_rank(const Grammar& grammar, int rank) {
  topo_order(grammar);
  std::vector<Symbol> filtered;
  for (const auto& s : grammar.main.body) {
    if (s.ranks.empty() || s.ranks.contains(rank)) filtered.push_back(s);
  }
  std::vector<TerminalId> out;
  expand_body(grammar, filtered, out);
  return out;
}

std::uint64_t expanded_length(const Grammar& grammar) {
  std::vector<std::uint64_t> len(grammar.rules.size() + 1, 0);
  auto body_length = [&](const std::vector<Symbol>& body) {
    std::uint64_t total = 0;
    for (const auto& s : body) {
      total += s.exp * (s.ref.is_rule() ? len[s.ref.id] : 1);
    }
    return total;
  };
  for (std::uint32_t id : topo_order(grammar)) {
    len[id] = body_length(grammar.rule(id).body);
  }
  return body_length(grammar.main.body);
}

std::size_t grammar_size(const Grammar& grammar) {
  std::size_t total = grammar.main.body.size();
  for (const auto& r : grammar.rules) total += r.body.size();
  return total;
}

std::vector<int> rule_depths(const Grammar& grammar) {
  std::vector<int> depth(grammar.rules.size() + 1, 0);
  auto body_depth = [&](const std::vector<Symbol>& body) {
    int d = 0;
    for (const auto& s : body) d = std::max(d, s.ref.is_rule() ? depth[s.ref.id] : 0);
    return d + 1;
  };
  for (std::uint32_t id : topo_order(grammar)) {
    depth[id] = body_depth(grammar.rule(id).body);
  }
  depth[0] = body_depth(grammar.main.body);
  return depth;
}

int rule_depth(const Grammar& grammar, std::uint32_t id) {
  if (id > grammar.rules.size()) {
    throw Error(ErrorKind::MalformedGrammar, fmt::format("unknown rule R{}", id));
  }
  return rule_depths(grammar)[id];
}

std::vector<std::string> audit_grammar(const Grammar& grammar) {
  std::vector<std::string> problems;
  std::map<std::tuple<SymbolRef, std::uint64_t, SymbolRef, std::uint64_t>, int> digrams;
  std::vector<std::uint64_t> uses(grammar.rules.size() + 1, 0);

  auto scan = [&](const Rule& r) {
    for (std::size_t i = 0; i < r.body.size(); ++i) {
      const Symbol& s = r.body[i];
      if (s.ref.is_rule() && s.ref.id < uses.size()) uses[s.ref.id] += s.exp;
      if (i + 1 == r.body.size()) continue;
      const Symbol& t = r.body[i + 1];
      if (s.ref == t.ref) {
        problems.push_back(fmt::format("R{}: adjacent equal symbols at {}", r.id, i));
      }
      if (++digrams[{s.ref, s.exp, t.ref, t.exp}] == 2) {
        problems.push_back(fmt::format("R{}: repeated digram {} {}", r.id,
                                       format_symbol(s), format_symbol(t)));
      }
    }
  };
  scan(grammar.main);
  for (const auto& r : grammar.rules) {
    scan(r);
    if (r.body.size() < 2) {
      problems.push_back(fmt::format("R{}: body shorter than 2", r.id));
    }
  }
  for (std::size_t id = 1; id < uses.size(); ++id) {
    if (uses[id] < 2) {
      problems.push_back(fmt::format("R{}: used {} time(s)", id, uses[id]));
    }
  }
  return problems;
}

std::string format_symbol(const Symbol& s) {
  std::string out = fmt::format("{}{}", s.ref.is_rule() ? 'R' : 't', s.ref.id);
  if (s.exp != 1) out += fmt::format("^{}", s.exp);
  if (!s.ranks.empty()) out += fmt::format("@{{{}}}", s.ranks.to_string());
  return out;
}

std::string format_rules(const Grammar& grammar) {
  std::string out;
  auto line = [&](const Rule& r) {
    out += fmt::format("R{} ->", r.id);
    for (const auto& s : r.body) {
      out += ' ';
      out += format_symbol(s);
    }
    out += '\n';
  };
  line(grammar.main);
  for (const auto& r : grammar.rules) line(r);
  return out;
}

std::vector<std::uint32_t> topological_rule_order(const Grammar& grammar) {
  return topo_order(grammar);
}

}  // namespace proxysynth
