#include <charconv>

#include <fmt/format.h>

#include "proxysynth/error.hpp"
#include "proxysynth/grammar.hpp"

namespace proxysynth {

namespace {

template <typename Int>
std::optional<Int> to_int(std::string_view s) {
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

[[noreturn]] void fail(std::size_t line_no, const std::string& msg) {
  throw Error(ErrorKind::Parse, fmt::format("grammar line {}: {}", line_no, msg));
}

Symbol parse_symbol(std::string_view tok, std::size_t line_no) {
  Symbol s;
  if (tok.empty() || (tok[0] != 't' && tok[0] != 'R')) {
    fail(line_no, fmt::format("bad symbol '{}'", tok));
  }
  const bool rule = tok[0] == 'R';
  tok.remove_prefix(1);
  auto at = tok.find('@');
  if (at != std::string_view::npos) {
    auto list = tok.substr(at + 1);
    if (list.size() < 2 || list.front() != '{' || list.back() != '}') {
      fail(line_no, fmt::format("bad rank list '{}'", list));
    }
    s.ranks = RankList::parse(list.substr(1, list.size() - 2));
    tok = tok.substr(0, at);
  }
  auto caret = tok.find('^');
  if (caret != std::string_view::npos) {
    auto e = to_int<std::uint64_t>(tok.substr(caret + 1));
    if (!e || *e == 0) fail(line_no, fmt::format("bad exponent in '{}'", tok));
    s.exp = *e;
    tok = tok.substr(0, caret);
  }
  auto id = to_int<std::uint32_t>(tok);
  if (!id) fail(line_no, fmt::format("bad symbol id '{}'", tok));
  s.ref = rule ? SymbolRef::rule(*id) : SymbolRef::terminal(*id);
  return s;
}

}  // namespace

std::string format_dump(const GrammarDump& dump) {
  std::string out = fmt::format("# grammar world={}", dump.world_size);
  if (dump.rank) out += fmt::format(" rank={}", *dump.rank);
  out += '\n';
  for (std::size_t i = 0; i < dump.table.size(); ++i) {
    out += fmt::format("T{} {}\n", i, dump.table.key(static_cast<TerminalId>(i)));
  }
  out += format_rules(dump.grammar);
  return out;
}

GrammarDump parse_dump(std::string_view text) {
  GrammarDump dump;
  bool saw_header = false;
  bool saw_main = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    if (line.starts_with("# grammar")) {
      saw_header = true;
      std::size_t i = 9;
      while (i < line.size()) {
        while (i < line.size() && line[i] == ' ') ++i;
        std::size_t j = line.find(' ', i);
        if (j == std::string_view::npos) j = line.size();
        auto field = line.substr(i, j - i);
        i = j;
        if (field.empty()) continue;
        if (field.starts_with("world=")) {
          auto v = to_int<int>(field.substr(6));
          if (!v || *v <= 0) fail(line_no, "bad world size");
          dump.world_size = *v;
        } else if (field.starts_with("rank=")) {
          auto v = to_int<int>(field.substr(5));
          if (!v || *v < 0) fail(line_no, "bad rank");
          dump.rank = *v;
        } else {
          fail(line_no, fmt::format("unknown header field '{}'", field));
        }
      }
      continue;
    }
    if (line.front() == '#') continue;

    if (line.front() == 'T') {
      auto space = line.find(' ');
      if (space == std::string_view::npos) fail(line_no, "terminal without event");
      auto id = to_int<std::uint32_t>(line.substr(1, space - 1));
      if (!id || *id != dump.table.size()) {
        fail(line_no, "terminal ids must be dense and ascending");
      }
      std::string key(line.substr(space + 1));
      parse_event(key);
      if (dump.table.intern_key(key) != *id) fail(line_no, "duplicate terminal key");
      continue;
    }

    if (line.front() == 'R') {
      auto arrow = line.find(" ->");
      if (arrow == std::string_view::npos) fail(line_no, "rule without '->'");
      auto id = to_int<std::uint32_t>(line.substr(1, arrow - 1));
      const std::uint32_t expected =
          saw_main ? static_cast<std::uint32_t>(dump.grammar.rules.size() + 1) : 0;
      if (!id || *id != expected) fail(line_no, "rule ids must be dense, main first");
      Rule rule{*id, {}};
      std::string_view rest = line.substr(arrow + 3);
      std::size_t i = 0;
      while (i < rest.size()) {
        while (i < rest.size() && rest[i] == ' ') ++i;
        std::size_t j = rest.find(' ', i);
        if (j == std::string_view::npos) j = rest.size();
        if (j > i) {
          Symbol s = parse_symbol(rest.substr(i, j - i), line_no);
          if (!s.ref.is_rule() && s.ref.id >= dump.table.size()) {
            fail(line_no, fmt::format("unknown terminal t{}", s.ref.id));
          }
          rule.body.push_back(std::move(s));
        }
        i = j;
      }
      if (saw_main) {
        dump.grammar.rules.push_back(std::move(rule));
      } else {
        dump.grammar.main = std::move(rule);
        saw_main = true;
      }
      continue;
    }
    fail(line_no, fmt::format("unrecognized line '{}'", line));
  }
  if (!saw_header) throw Error(ErrorKind::Parse, "missing '# grammar' header");
  if (!saw_main) throw Error(ErrorKind::Parse, "missing main rule R0");
  topological_rule_order(dump.grammar);
  return dump;
}

}  // namespace proxysynth
