#include "support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "proxysynth/error.hpp"

namespace testing {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() /
                 fmt::format("proxysynth-{}-{}", name, static_cast<long>(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunResult run(const std::string& command) {
  RunResult out;
  const std::string full = command + " 2>&1";
  FILE* pipe = ::popen(full.c_str(), "r");
  if (!pipe) return out;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  out.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

std::string c_compiler() { return PROXYSYNTH_TEST_CC; }
std::string mpi_compiler() { return PROXYSYNTH_TEST_MPICC; }
std::string mpi_runner() { return PROXYSYNTH_TEST_MPIRUN; }
fs::path data_dir() { return PROXYSYNTH_DATA_DIR; }
fs::path golden_dir() { return PROXYSYNTH_GOLDEN_DIR; }
fs::path cli_path() { return PROXYSYNTH_CLI; }

ps::BlockMatrix fixture_blocks() {
  return ps::read_block_matrix(data_dir() / "fixture_block_matrix.txt");
}

std::vector<std::string> canonical_keys(const ps::Trace& trace, int world,
                                        const ps::ClusterConfig& cluster) {
  ps::CanonicalTrace c = ps::canonicalize(trace, world, cluster);
  std::vector<std::string> out;
  out.reserve(c.ids.size());
  for (auto id : c.ids) out.push_back(c.table.key(id));
  return out;
}

fs::path compile_with_shim(const fs::path& source_dir, std::string& log,
                           const std::string& extra_flags) {
  const fs::path binary = source_dir / "proxy_shim";
  const auto r = run(fmt::format("cd '{}' && '{}' -std=c99 -O1 -Wall -pedantic "
                                 "-DPROXY_LOG_SHIM {} -o proxy_shim proxy.c",
                                 source_dir.string(), c_compiler(), extra_flags));
  log = r.output;
  if (r.status != 0) return {};
  return binary;
}

std::vector<std::string> replay_lines(const fs::path& binary, int rank, int world) {
  const auto r = run(fmt::format("PROXY_SHIM_RANK={} PROXY_SHIM_SIZE={} '{}'", rank, world,
                                 binary.string()));
  std::vector<std::string> out;
  std::istringstream in(r.output);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  if (r.status != 0) out.push_back(fmt::format("<exit status {}>", r.status));
  return out;
}

std::vector<std::string> replay_keys(const fs::path& binary, int rank, int world) {
  std::vector<std::string> out;
  for (const auto& line : replay_lines(binary, rank, world)) {
    if (line.size() >= 2 && line.front() == '(' && line.back() == ')') {
      out.push_back(line.substr(1, line.size() - 2));
    } else if (line.starts_with("<exit")) {
      out.push_back(line);
    }
  }
  return out;
}

std::vector<std::string> validate_program_structure(const std::string& source,
                                                    std::size_t terminals,
                                                    std::size_t rules) {
  std::vector<std::string> problems;

  long depth = 0;
  bool in_string = false;
  bool in_comment = false;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const char c = source[i];
    if (in_comment) {
      if (c == '*' && i + 1 < source.size() && source[i + 1] == '/') {
        in_comment = false;
        ++i;
      }
      continue;
    }
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '/' && i + 1 < source.size() && source[i + 1] == '*') {
      in_comment = true;
      ++i;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth < 0) problems.push_back("closing brace without opener");
    }
  }
  if (depth != 0) problems.push_back(fmt::format("brace depth {} at end", depth));

  static const std::regex def_re(R"(^static void (proxy_([tr])(\d+))\(void\)$)");
  static const std::regex call_re(R"((proxy_[tr]\d+)\(\))");
  std::set<std::string> defined;
  std::size_t t_defs = 0;
  std::size_t r_defs = 0;
  std::size_t mains = 0;
  std::istringstream in(source);
  std::string line;
  std::string current;
  while (std::getline(in, line)) {
    std::smatch m;
    if (std::regex_match(line, m, def_re)) {
      current = m[1];
      if (!defined.insert(current).second) problems.push_back("duplicate " + current);
      (m[2] == "t" ? t_defs : r_defs)++;
      continue;
    }
    if (line.starts_with("int main(")) {
      ++mains;
      current = "main";
      continue;
    }
    for (auto it = std::sregex_iterator(line.begin(), line.end(), call_re);
         it != std::sregex_iterator(); ++it) {
      const std::string callee = (*it)[1];
      if (!defined.count(callee) || callee == current) {
        problems.push_back(fmt::format("{} calls {} before its definition", current, callee));
      }
    }
  }
  if (t_defs != terminals) {
    problems.push_back(fmt::format("{} terminal functions for {} terminals", t_defs, terminals));
  }
  if (r_defs != rules) {
    problems.push_back(fmt::format("{} rule functions for {} rules", r_defs, rules));
  }
  if (mains != 1) problems.push_back(fmt::format("{} main functions", mains));
  return problems;
}

std::size_t lcs_length_dp(const std::vector<std::uint64_t>& a,
                          const std::vector<std::uint64_t>& b) {
  std::vector<std::vector<std::size_t>> dp(a.size() + 1,
                                           std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1
                                      : std::max(dp[i - 1][j], dp[i][j - 1]);
    }
  }
  return dp[a.size()][b.size()];
}

std::size_t levenshtein_dp(const std::vector<std::uint64_t>& a,
                           const std::vector<std::uint64_t>& b) {
  std::vector<std::vector<std::size_t>> dp(a.size() + 1,
                                           std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 0; i <= a.size(); ++i) dp[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) dp[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      dp[i][j] = std::min({dp[i - 1][j] + 1, dp[i][j - 1] + 1,
                           dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return dp[a.size()][b.size()];
}

std::vector<std::uint64_t> tokens(const std::vector<ps::Symbol>& body) {
  std::vector<std::uint64_t> out;
  for (const auto& s : body) {
    out.push_back((static_cast<std::uint64_t>(s.ref.is_rule()) << 63) ^
                  (static_cast<std::uint64_t>(s.ref.id) << 24) ^ s.exp);
  }
  return out;
}

namespace {

void expand_into(const ps::Grammar& g, const ps::Symbol& s, std::vector<ps::TerminalId>& out,
                 int depth) {
  if (depth > 10000) throw std::runtime_error("expansion too deep");
  for (std::uint64_t k = 0; k < s.exp; ++k) {
    if (!s.ref.is_rule()) {
      out.push_back(s.ref.id);
    } else {
      for (const auto& child : g.rule(s.ref.id).body) expand_into(g, child, out, depth + 1);
    }
  }
}

}  // namespace

std::vector<ps::TerminalId> naive_expand(const ps::Grammar& g, int rank) {
  std::vector<ps::TerminalId> out;
  for (const auto& s : g.main.body) {
    if (!s.ranks.empty() && !s.ranks.contains(rank)) continue;
    expand_into(g, s, out, 0);
  }
  return out;
}

ps::Trace random_trace(std::mt19937_64& rng, int rank, int world, std::size_t events,
                       std::size_t alphabet) {
  ps::Trace t;
  t.rank = rank;
  alphabet = std::max<std::size_t>(alphabet, 1);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  auto token = [&] {
    std::uint64_t v = 0;
    while (v == 0) v = rng() & 0xFFFFFFFFFFFFULL;
    return v;
  };
  auto volume = [&] { return static_cast<std::uint64_t>(64 * (1 + pick(alphabet))); };
  auto peer = [&] { return ps::Peer::absolute(static_cast<std::int64_t>(pick(world))); };
  std::vector<std::uint64_t> reqs;
  std::vector<std::uint64_t> comms{0};
  bool last_compute = false;

  while (t.events.size() < events) {
    const std::size_t action = pick(12);
    if (action == 0 && !last_compute) {
      ps::ComputeEvent c;
      const std::uint64_t base = 1000 * (1 + pick(alphabet));
      c.metrics = {base, base + pick(500), base / 3, base / 50, base / 10, base / 100};
      t.events.emplace_back(c);
      last_compute = true;
      continue;
    }
    // some actions emit nothing; only a real event separates two computes
    const std::size_t before = t.events.size();
    const std::uint64_t comm = comms[pick(comms.size())];
    switch (action) {
      case 0:
      case 1:
        t.events.emplace_back(ps::CommEvent{.func = ps::MpiFunc::Send, .volume = volume(),
                                            .peer = peer(),
                                            .tag = static_cast<std::int64_t>(pick(3)),
                                            .comm = comm});
        break;
      case 2:
        t.events.emplace_back(ps::CommEvent{.func = ps::MpiFunc::Recv, .volume = volume(),
                                            .peer = peer(),
                                            .tag = pick(4) == 0 ? std::nullopt
                                                                : std::optional<std::int64_t>(1),
                                            .comm = comm});
        break;
      case 3: {
        reqs.push_back(token());
        const auto f = pick(2) ? ps::MpiFunc::Isend : ps::MpiFunc::Irecv;
        t.events.emplace_back(ps::CommEvent{.func = f, .volume = volume(), .peer = peer(),
                                            .tag = 0, .comm = comm, .req = reqs.back()});
        break;
      }
      case 4:
        if (!reqs.empty()) {
          const std::size_t i = pick(reqs.size());
          t.events.emplace_back(ps::CommEvent{.func = ps::MpiFunc::Wait, .req = reqs[i]});
          reqs.erase(reqs.begin() + static_cast<std::ptrdiff_t>(i));
        }
        break;
      case 5:
        t.events.emplace_back(ps::CommEvent{.func = ps::MpiFunc::Barrier, .comm = comm});
        break;
      case 6:
        t.events.emplace_back(
            ps::CommEvent{.func = ps::MpiFunc::Allreduce, .volume = volume(), .comm = comm});
        break;
      case 7: {
        const auto f = pick(2) ? ps::MpiFunc::Bcast : ps::MpiFunc::Reduce;
        t.events.emplace_back(
            ps::CommEvent{.func = f, .volume = volume(), .peer = peer(), .comm = comm});
        break;
      }
      case 8:
        t.events.emplace_back(ps::CommEvent{.func = ps::MpiFunc::Sendrecv, .volume = volume(),
                                            .peer = peer(), .tag = 2, .comm = comm});
        break;
      case 9:
        if (comms.size() < 4) {
          comms.push_back(token());
          if (pick(2)) {
            t.events.emplace_back(ps::CommEvent{.func = ps::MpiFunc::CommDup, .comm = comm,
                                                .new_comm = comms.back()});
          } else {
            t.events.emplace_back(ps::CommEvent{.func = ps::MpiFunc::CommSplit, .comm = comm,
                                                .new_comm = comms.back(),
                                                .color = static_cast<std::int64_t>(pick(2))});
          }
        }
        break;
      case 10:
        if (comms.size() > 1) {
          const std::size_t i = 1 + pick(comms.size() - 1);
          t.events.emplace_back(ps::CommEvent{.func = ps::MpiFunc::CommFree, .comm = comms[i]});
          comms.erase(comms.begin() + static_cast<std::ptrdiff_t>(i));
        }
        break;
      default:
        t.events.emplace_back(
            ps::CommEvent{.func = ps::MpiFunc::Alltoall, .volume = volume(), .comm = comm});
        break;
    }
    if (t.events.size() != before) last_compute = false;
  }
  return t;
}

ps::SynthSpec random_spec(std::mt19937_64& rng, int world, std::uint64_t target_events) {
  ps::SynthSpec spec;
  spec.world_size = world;
  spec.seed = rng();
  spec.root_prologue = rng() % 2;
  spec.dup_comm = rng() % 2;
  const std::size_t phases = 1 + rng() % 3;
  const double jitters[] = {0.0, 0.0, 0.01, 0.03, 0.2};
  const ps::Pattern patterns[] = {ps::Pattern::Ring, ps::Pattern::Halo1d,
                                  ps::Pattern::Allreduce, ps::Pattern::Stencil};
  std::uint64_t per_outer = 0;
  for (std::size_t p = 0; p < phases; ++p) {
    ps::PhaseSpec ph;
    ph.iterations = 1 + rng() % 6;
    ph.pattern = patterns[rng() % 4];
    ph.volume = 64u << (rng() % 8);
    const std::uint64_t ins = 10000 + rng() % 90000;
    ph.compute = {ins, ins + rng() % 20000, ins / 3, ins / 40, ins / 8, ins / 200};
    ph.jitter = jitters[rng() % 5];
    spec.phases.push_back(ph);
    per_outer += ph.iterations * 13;
  }
  spec.outer_iterations = std::max<std::uint64_t>(1, target_events / std::max<std::uint64_t>(1, per_outer));
  return spec;
}

ps::Trace call_kinds_trace(int rank, int world) {
  ps::Trace t;
  t.rank = rank;
  const int right = (rank + 1) % world;
  const int left = (rank + world - 1) % world;
  auto comm = [](ps::MpiFunc f) { return ps::CommEvent{.func = f}; };
  ps::CommEvent d = comm(ps::MpiFunc::CommDup);
  d.comm = 0;
  d.new_comm = 1000;
  t.events.push_back(d);
  ps::CommEvent s = comm(ps::MpiFunc::CommSplit);
  s.comm = 1000;
  s.new_comm = 2000;
  s.color = rank % 2;
  t.events.push_back(s);
  t.events.push_back(ps::ComputeEvent{{5000, 6000, 1200, 40, 400, 20}});
  t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Bcast, .volume = 512, .peer = ps::Peer::absolute(0),
                               .comm = 1000});
  t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Reduce, .volume = 64, .peer = ps::Peer::absolute(0),
                               .comm = 0});
  t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Alltoall, .volume = 32, .comm = 0});
  // single-peer exchange with the pair partner, when there is one
  if ((rank ^ 1) < world) {
    t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Sendrecv, .volume = 256,
                                     .peer = ps::Peer::absolute(rank ^ 1), .tag = 3, .comm = 0});
  }
  t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Irecv, .volume = 128, .peer = ps::Peer::absolute(left),
                               .tag = 1, .comm = 0, .req = 77});
  t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Isend, .volume = 128,
                               .peer = ps::Peer::absolute(right), .tag = 1, .comm = 0, .req = 78});
  t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Wait, .req = 78});
  t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Wait, .req = 77});
  if (rank % 2 == 0) {
    if (right != rank) {
      t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Send, .volume = 1024,
                                   .peer = ps::Peer::absolute(right), .tag = 5, .comm = 0});
    }
  } else {
    t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Recv, .volume = 1024,
                                 .peer = ps::Peer::absolute(left), .comm = 0});
  }
  t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Barrier, .comm = 2000});
  t.events.push_back(ps::CommEvent{.func = ps::MpiFunc::Allreduce, .volume = 8, .comm = 1000});
  t.events.push_back(comm(ps::MpiFunc::CommFree));
  std::get<ps::CommEvent>(t.events.back()).comm = 2000;
  t.events.push_back(comm(ps::MpiFunc::CommFree));
  std::get<ps::CommEvent>(t.events.back()).comm = 1000;
  return t;
}

MergedRun compress_and_merge(const std::vector<ps::Trace>& traces,
                             const ps::ClusterConfig& cluster, double similarity,
                             ps::Execution exec) {
  MergedRun out;
  const int world = static_cast<int>(traces.size());
  out.canonical.resize(traces.size());
  std::vector<ps::GrammarDump> dumps(traces.size());
  ps::for_each_index(exec, traces.size(), [&](std::size_t r) {
    out.canonical[r] = ps::canonicalize(traces[r], world, cluster);
    dumps[r].rank = static_cast<int>(r);
    dumps[r].world_size = world;
    dumps[r].table = out.canonical[r].table;
    dumps[r].grammar = ps::build_grammar(out.canonical[r].ids);
  });
  out.program = ps::merge_program(dumps, ps::MergeConfig{similarity, exec});
  return out;
}

bool round_trip_ok(const MergedRun& run, std::string* why) {
  for (std::size_t r = 0; r < run.canonical.size(); ++r) {
    const auto ids = ps::expand_rank(run.program.grammar, static_cast<int>(r));
    const auto& c = run.canonical[r];
    bool ok = ids.size() == c.ids.size();
    for (std::size_t i = 0; ok && i < ids.size(); ++i) {
      ok = run.program.table.key(ids[i]) == c.table.key(c.ids[i]);
    }
    if (!ok) {
      if (why) {
        *why = fmt::format("rank {}: expanded {} events, expected {}", r, ids.size(),
                           c.ids.size());
      }
      return false;
    }
  }
  return true;
}

}  // namespace testing
