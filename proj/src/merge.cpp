#include "proxysynth/merge.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include <fmt/format.h>

#include "proxysynth/error.hpp"

namespace proxysynth {

namespace {

TerminalTable merge_two(const TerminalTable& left, const TerminalTable& right) {
  TerminalTable out = left;
  for (const auto& key : right.keys()) out.intern_key(key);
  return out;
}

std::string body_key(const std::vector<Symbol>& body) {
  std::string key;
  for (const auto& s : body) {
    key += format_symbol(Symbol{s.ref, s.exp, {}});
    key += ' ';
  }
  return key;
}

}  // namespace

GlobalTable merge_terminal_tables(std::span<const TerminalTable> tables,
                                  Execution exec) {
  if (tables.empty()) {
    throw Error(ErrorKind::InvalidArgument, "no terminal tables to merge");
  }
  // Adjacent pairs merge each round, so rank order is preserved and the
  // result equals a left-to-right scan.
  std::vector<TerminalTable> level(tables.begin(), tables.end());
  while (level.size() > 1) {
    std::vector<TerminalTable> next((level.size() + 1) / 2);
    for_each_index(exec, next.size(), [&](std::size_t k) {
      if (2 * k + 1 < level.size()) {
        next[k] = merge_two(level[2 * k], level[2 * k + 1]);
      } else {
        next[k] = std::move(level[2 * k]);
      }
    });
    level = std::move(next);
  }

  GlobalTable out;
  out.table = std::move(level.front());
  out.remap.resize(tables.size());
  for_each_index(exec, tables.size(), [&](std::size_t r) {
    auto& remap = out.remap[r];
    remap.reserve(tables[r].size());
    for (const auto& key : tables[r].keys()) remap.push_back(*out.table.find(key));
  });
  return out;
}

Grammar remap_terminals(const Grammar& grammar, std::span<const TerminalId> remap) {
  Grammar out = grammar;
  auto apply = [&](Rule& r) {
    for (auto& s : r.body) {
      if (s.ref.is_rule()) continue;
      if (s.ref.id >= remap.size()) {
        throw Error(ErrorKind::MalformedGrammar,
                    fmt::format("terminal t{} missing from remap", s.ref.id));
      }
      s.ref.id = remap[s.ref.id];
    }
  };
  apply(out.main);
  for (auto& r : out.rules) apply(r);
  return out;
}

NonterminalMerge merge_nonterminals(std::span<const Grammar> grammars) {
  NonterminalMerge out;
  out.remap.resize(grammars.size());

  std::vector<std::vector<int>> depths(grammars.size());
  int max_depth = 0;
  for (std::size_t r = 0; r < grammars.size(); ++r) {
    depths[r] = rule_depths(grammars[r]);
    out.remap[r].assign(grammars[r].rules.size() + 1, 0);
    for (std::size_t id = 1; id < depths[r].size(); ++id) {
      max_depth = std::max(max_depth, depths[r][id]);
    }
  }

  std::unordered_map<std::string, std::uint32_t> by_body;
  for (int d = 1; d <= max_depth; ++d) {
    for (std::size_t r = 0; r < grammars.size(); ++r) {
      const Grammar& g = grammars[r];
      for (const Rule& rule : g.rules) {
        if (depths[r][rule.id] != d) continue;
        std::vector<Symbol> body = rule.body;
        for (auto& s : body) {
          if (s.ref.is_rule()) s.ref.id = out.remap[r][s.ref.id];
        }
        auto [it, inserted] = by_body.try_emplace(
            body_key(body), static_cast<std::uint32_t>(out.rules.size() + 1));
        if (inserted) out.rules.push_back(Rule{it->second, std::move(body)});
        out.remap[r][rule.id] = it->second;
      }
    }
  }
  return out;
}

double normalized_edit_distance(std::span<const Symbol> a, std::span<const Symbol> b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 0.0;
  while (!a.empty() && !b.empty() && a.front().same_token(b.front())) {
    a = a.subspan(1);
    b = b.subspan(1);
  }
  while (!a.empty() && !b.empty() && a.back().same_token(b.back())) {
    a = a.first(a.size() - 1);
    b = b.first(b.size() - 1);
  }
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return static_cast<double>(a.size()) / static_cast<double>(longest);

  // Myers' bit-vector recurrence in Hyyro's block form: b is the pattern,
  // one text column per symbol of a, 64 pattern rows per word.
  using Word = std::uint64_t;
  const std::size_t m = b.size();
  const std::size_t words = (m + 63) / 64;
  const Word last_bit = Word{1} << ((m - 1) % 64);

  using Key = std::pair<std::uint64_t, std::uint64_t>;
  auto key_of = [](const Symbol& s) {
    return Key{(static_cast<std::uint64_t>(s.ref.kind) << 32) | s.ref.id, s.exp};
  };
  std::map<Key, std::vector<std::uint32_t>> positions;
  for (std::size_t i = 0; i < m; ++i) {
    positions[key_of(b[i])].push_back(static_cast<std::uint32_t>(i));
  }

  std::vector<Word> pv(words, ~Word{0});
  std::vector<Word> mv(words, 0);
  std::vector<Word> eq(words, 0);
  std::size_t score = m;
  for (const Symbol& s : a) {
    const auto found = positions.find(key_of(s));
    const std::vector<std::uint32_t>* hits =
        found == positions.end() ? nullptr : &found->second;
    if (hits) {
      for (auto p : *hits) eq[p / 64] |= Word{1} << (p % 64);
    }
    int hin = 1;  // the top row grows by one per column
    for (std::size_t w = 0; w < words; ++w) {
      Word e = eq[w];
      const Word p = pv[w];
      const Word n = mv[w];
      const Word neg = hin < 0 ? 1 : 0;
      const Word xv = e | n;
      e |= neg;
      const Word xh = (((e & p) + p) ^ p) | e;
      Word ph = n | ~(xh | p);
      Word mh = p & xh;
      const Word top = w + 1 == words ? last_bit : Word{1} << 63;
      const int hout = (ph & top) ? 1 : (mh & top) ? -1 : 0;
      ph = (ph << 1) | (hin > 0 ? 1 : 0);
      mh = (mh << 1) | neg;
      pv[w] = mh | ~(xv | ph);
      mv[w] = ph & xv;
      hin = hout;
    }
    score = static_cast<std::size_t>(static_cast<std::int64_t>(score) + hin);
    if (hits) {
      for (auto p : *hits) eq[p / 64] = 0;
    }
  }
  return static_cast<double>(score) / static_cast<double>(longest);
}

std::vector<RankList> cluster_main_rules(std::span<const Rule> mains,
                                         double similarity, Execution exec) {
  if (!(similarity >= 0.0 && similarity <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "merge similarity must lie in [0, 1]");
  }
  const double bound = 1.0 - similarity;
  std::vector<std::size_t> founders;
  std::vector<RankList> groups;
  for (std::size_t r = 0; r < mains.size(); ++r) {
    const auto& body = mains[r].body;
    std::vector<double> dist(founders.size(), 2.0);
    for_each_index(exec, founders.size(), [&](std::size_t k) {
      const auto& other = mains[founders[k]].body;
      const std::size_t longest = std::max(body.size(), other.size());
      const std::size_t shortest = std::min(body.size(), other.size());
      // Edit distance is at least the length difference.
      if (longest > 0 &&
          static_cast<double>(longest - shortest) / static_cast<double>(longest) > bound) {
        return;
      }
      dist[k] = normalized_edit_distance(body, other);
    });
    auto hit = std::find_if(dist.begin(), dist.end(),
                            [&](double d) { return d <= bound; });
    if (hit == dist.end()) {
      founders.push_back(r);
      groups.push_back(RankList::single(static_cast<int>(r)));
    } else {
      groups[static_cast<std::size_t>(hit - dist.begin())].insert(static_cast<int>(r));
    }
  }
  return groups;
}

Rule lcs_merge_mains(const Rule& a, const Rule& b) {
  RankList ranks_a, ranks_b;
  for (const auto& s : a.body) ranks_a |= s.ranks;
  for (const auto& s : b.body) ranks_b |= s.ranks;
  if (ranks_a.intersects(ranks_b)) {
    throw Error(ErrorKind::InvalidArgument,
                "main rules to merge must cover disjoint ranks");
  }

  std::unordered_map<std::uint64_t, std::unordered_map<std::uint64_t, std::uint64_t>> codes;
  std::uint64_t next_code = 0;
  auto encode = [&](const std::vector<Symbol>& body) {
    std::vector<std::uint64_t> out;
    out.reserve(body.size());
    for (const auto& s : body) {
      const std::uint64_t ref = (static_cast<std::uint64_t>(s.ref.kind) << 32) | s.ref.id;
      auto [it, inserted] = codes[ref].try_emplace(s.exp, next_code);
      if (inserted) ++next_code;
      out.push_back(it->second);
    }
    return out;
  };
  const auto ca = encode(a.body);
  const auto cb = encode(b.body);

  Rule out{a.id, {}};
  out.body.reserve(a.body.size() + b.body.size());
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (auto [i, j] : lcs_alignment(ca, cb)) {
    out.body.insert(out.body.end(), a.body.begin() + ia, a.body.begin() + i);
    out.body.insert(out.body.end(), b.body.begin() + ib, b.body.begin() + j);
    Symbol merged = a.body[i];
    merged.ranks |= b.body[j].ranks;
    out.body.push_back(std::move(merged));
    ia = i + 1;
    ib = j + 1;
  }
  out.body.insert(out.body.end(), a.body.begin() + ia, a.body.end());
  out.body.insert(out.body.end(), b.body.begin() + ib, b.body.end());
  return out;
}

MergedProgram merge_program(std::span<const GrammarDump> per_rank,
                            const MergeConfig& config) {
  const std::size_t world = per_rank.size();
  if (world == 0) throw Error(ErrorKind::InvalidArgument, "no ranks to merge");
  for (std::size_t r = 0; r < world; ++r) {
    const auto& d = per_rank[r];
    if (d.rank && *d.rank != static_cast<int>(r)) {
      throw Error(ErrorKind::InvalidArgument,
                  fmt::format("rank {} found at position {}", *d.rank, r));
    }
    if (d.world_size != static_cast<int>(world)) {
      throw Error(ErrorKind::InvalidArgument,
                  fmt::format("rank {} was compressed for world size {}, merging {}",
                              r, d.world_size, world));
    }
  }

  std::vector<TerminalTable> tables;
  tables.reserve(world);
  for (const auto& d : per_rank) tables.push_back(d.table);
  GlobalTable global = merge_terminal_tables(tables, config.exec);

  std::vector<Grammar> grammars(world);
  for_each_index(config.exec, world, [&](std::size_t r) {
    grammars[r] = remap_terminals(per_rank[r].grammar, global.remap[r]);
  });

  NonterminalMerge nts = merge_nonterminals(grammars);

  std::vector<Rule> mains(world);
  for (std::size_t r = 0; r < world; ++r) {
    mains[r] = grammars[r].main;
    for (auto& s : mains[r].body) {
      if (s.ref.is_rule()) s.ref.id = nts.remap[r][s.ref.id];
      s.ranks = RankList::single(static_cast<int>(r));
    }
  }

  MergedProgram out;
  out.table = std::move(global.table);
  out.world_size = static_cast<int>(world);
  out.groups = cluster_main_rules(mains, config.similarity, config.exec);

  std::vector<Rule> group_mains(out.groups.size());
  for_each_index(config.exec, out.groups.size(), [&](std::size_t g) {
    Rule acc{0, {}};
    for (const auto& iv : out.groups[g].intervals()) {
      for (int r = iv.lo; r <= iv.hi; ++r) {
        acc = lcs_merge_mains(acc, mains[static_cast<std::size_t>(r)]);
      }
    }
    group_mains[g] = std::move(acc);
  });

  out.grammar.main.id = 0;
  for (auto& gm : group_mains) {
    out.grammar.main.body.insert(out.grammar.main.body.end(),
                                 std::make_move_iterator(gm.body.begin()),
                                 std::make_move_iterator(gm.body.end()));
  }
  out.grammar.rules = std::move(nts.rules);
  return out;
}

GrammarDump to_dump(const MergedProgram& program) {
  return GrammarDump{std::nullopt, program.world_size, program.table, program.grammar};
}

MergedProgram from_dump(GrammarDump dump) {
  MergedProgram out;
  out.world_size = dump.world_size;
  out.table = std::move(dump.table);
  out.grammar = std::move(dump.grammar);
  for (auto& s : out.grammar.main.body) {
    if (s.ranks.empty()) {
      // Per-rank dumps carry no lists; their main belongs to their rank.
      s.ranks = dump.rank ? RankList::single(*dump.rank)
                          : RankList::range(0, out.world_size - 1);
    }
    if (s.ranks.intervals().back().hi >= out.world_size) {
      throw Error(ErrorKind::MalformedProgram,
                  fmt::format("rank list {{{}}} exceeds world size {}",
                              s.ranks.to_string(), out.world_size));
    }
  }
  return out;
}

}  // namespace proxysynth
