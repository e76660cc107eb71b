#include "proxysynth/codegen.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "proxysynth/error.hpp"

namespace proxysynth {

namespace {

[[noreturn]] void codegen_error(const std::string& msg) {
  throw Error(ErrorKind::Codegen, msg);
}

std::string terminal_fn(std::uint32_t id) { return fmt::format("proxy_t{}", id); }
std::string rule_fn(std::uint32_t id) { return fmt::format("proxy_r{}", id); }

std::string symbol_fn(const Symbol& s) {
  return s.ref.is_rule() ? rule_fn(s.ref.id) : terminal_fn(s.ref.id);
}

std::string call_line(const Symbol& s, std::string_view indent) {
  if (s.exp == 1) return fmt::format("{}{}();\n", indent, symbol_fn(s));
  return fmt::format("{}for (proxy_u64 k = 0; k < {}ULL; ++k) {}();\n", indent, s.exp,
                     symbol_fn(s));
}

std::string c_string(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

std::string guard_expr(const RankList& ranks) {
  std::string out;
  for (const auto& iv : ranks.intervals()) {
    if (!out.empty()) out += " || ";
    if (iv.lo == iv.hi) {
      out += fmt::format("proxy_rank == {}", iv.lo);
    } else {
      out += fmt::format("(proxy_rank >= {} && proxy_rank <= {})", iv.lo, iv.hi);
    }
  }
  return out;
}

struct CommPlan {
  bool has_volume = false;
  bool scaled = false;
  std::uint64_t volume = 0;
  double scaled_volume = 0.0;
  std::uint64_t emitted = 0;
};

CommPlan plan_comm(const CommEvent& ev, const CodegenConfig& config,
                   const CommModels& models) {
  CommPlan plan;
  plan.has_volume = carries_volume(ev.func);
  if (!plan.has_volume) return plan;
  plan.volume = ev.volume;
  auto family = comm_family(ev.func);
  if (family && config.scaling_factor > 1.0) {
    const auto& model = models.for_family(*family);
    plan.scaled = true;
    plan.scaled_volume = scaled_volume(model, ev.volume, config.scaling_factor);
    plan.emitted = static_cast<std::uint64_t>(std::llround(plan.scaled_volume));
  } else {
    plan.scaled_volume = static_cast<double>(ev.volume);
    plan.emitted = ev.volume;
  }
  return plan;
}

/// Bytes the shared send/recv buffers must hold for this call.
std::uint64_t buffer_need(const CommEvent& ev, const CommPlan& plan, int world_size) {
  if (!plan.has_volume) return 0;
  if (ev.func == MpiFunc::Alltoall) return plan.emitted * static_cast<std::uint64_t>(world_size);
  return plan.emitted;
}

std::string peer_expr(const CommEvent& ev, const RankList& ranks, int world_size) {
  const Peer& peer = *ev.peer;
  const std::string what = fmt::format("'{}'", serialize_event(ev));
  if (peer.kind == Peer::Kind::Relative) {
    if (ev.comm != 0) {
      codegen_error(fmt::format("{}: relative peer on a derived communicator", what));
    }
    for (const auto& iv : ranks.intervals()) {
      if (iv.lo + peer.value < 0 || iv.hi + peer.value >= world_size) {
        codegen_error(fmt::format("{}: peer out of range for ranks {{{}}} in world {}",
                                  what, ranks.to_string(), world_size));
      }
    }
    if (peer.value == 0) return "proxy_rank";
    if (peer.value > 0) return fmt::format("proxy_rank + {}", peer.value);
    return fmt::format("proxy_rank - {}", -peer.value);
  }
  if (peer.value < 0 || peer.value >= world_size) {
    codegen_error(fmt::format("{}: rank {} outside world {}", what, peer.value, world_size));
  }
  return fmt::format("{}", peer.value);
}

std::string count_literal(const CommEvent& ev, std::uint64_t count) {
  if (count > static_cast<std::uint64_t>(INT_MAX)) {
    codegen_error(fmt::format("'{}': {} bytes exceed an int count", serialize_event(ev), count));
  }
  return fmt::format("{}", count);
}

std::string comm_call(const CommEvent& ev, const CommPlan& plan, const RankList& ranks,
                      int world_size) {
  const std::string comm = fmt::format("proxy_comms[{}]", ev.comm);
  const std::string n = count_literal(ev, plan.emitted);
  auto send_tag = [&] { return fmt::format("{}", ev.tag.value_or(0)); };
  auto recv_tag = [&] {
    return ev.tag ? fmt::format("{}", *ev.tag) : std::string("MPI_ANY_TAG");
  };
  auto req = [&] { return fmt::format("&proxy_reqs[{}]", *ev.req); };

  switch (ev.func) {
    case MpiFunc::Send:
      return fmt::format("MPI_Send(proxy_sbuf, {}, MPI_BYTE, {}, {}, {});", n,
                         peer_expr(ev, ranks, world_size), send_tag(), comm);
    case MpiFunc::Recv:
      return fmt::format("MPI_Recv(proxy_rbuf, {}, MPI_BYTE, {}, {}, {}, MPI_STATUS_IGNORE);",
                         n, peer_expr(ev, ranks, world_size), recv_tag(), comm);
    case MpiFunc::Isend:
      return fmt::format("MPI_Isend(proxy_sbuf, {}, MPI_BYTE, {}, {}, {}, {});", n,
                         peer_expr(ev, ranks, world_size), send_tag(), comm, req());
    case MpiFunc::Irecv:
      return fmt::format("MPI_Irecv(proxy_rbuf, {}, MPI_BYTE, {}, {}, {}, {});", n,
                         peer_expr(ev, ranks, world_size), recv_tag(), comm, req());
    case MpiFunc::Wait:
      return fmt::format("MPI_Wait({}, MPI_STATUS_IGNORE);", req());
    case MpiFunc::Sendrecv: {
      const std::string peer = peer_expr(ev, ranks, world_size);
      return fmt::format(
          "MPI_Sendrecv(proxy_sbuf, {0}, MPI_BYTE, {1}, {2}, proxy_rbuf, {0}, MPI_BYTE, {1}, "
          "{3}, {4}, MPI_STATUS_IGNORE);",
          n, peer, send_tag(), recv_tag(), comm);
    }
    case MpiFunc::Barrier:
      return fmt::format("MPI_Barrier({});", comm);
    case MpiFunc::Allreduce:
      return fmt::format("MPI_Allreduce(proxy_sbuf, proxy_rbuf, {}, MPI_BYTE, MPI_BOR, {});",
                         n, comm);
    case MpiFunc::Bcast:
      return fmt::format("MPI_Bcast(proxy_sbuf, {}, MPI_BYTE, {}, {});", n,
                         peer_expr(ev, ranks, world_size), comm);
    case MpiFunc::Reduce:
      return fmt::format("MPI_Reduce(proxy_sbuf, proxy_rbuf, {}, MPI_BYTE, MPI_BOR, {}, {});",
                         n, peer_expr(ev, ranks, world_size), comm);
    case MpiFunc::Alltoall:
      return fmt::format(
          "MPI_Alltoall(proxy_sbuf, {0}, MPI_BYTE, proxy_rbuf, {0}, MPI_BYTE, {1});", n, comm);
    case MpiFunc::CommDup:
      return fmt::format("MPI_Comm_dup({}, &proxy_comms[{}]);", comm, *ev.new_comm);
    case MpiFunc::CommSplit: {
      const std::string color =
          *ev.color < 0 ? std::string("MPI_UNDEFINED") : fmt::format("{}", *ev.color);
      return fmt::format("MPI_Comm_split({}, {}, 0, &proxy_comms[{}]);", comm, color,
                         *ev.new_comm);
    }
    case MpiFunc::CommFree:
      return fmt::format("MPI_Comm_free(&{});", comm);
  }
  codegen_error(fmt::format("unsupported call '{}'", serialize_event(ev)));
}

std::string compute_body(const ProxyCombination& combo) {
  std::string out;
  for (std::size_t j = 0; j < kLoopedBlocks; ++j) {
    if (combo.counts[j] == 0) continue;
    out += fmt::format("  PROXY_LOOP(PROXY_BLOCK_{}, {}ULL);\n", j + 1, combo.counts[j]);
  }
  if (combo.counts[kBusyLoopBlock] > 0) {
    out += fmt::format("  PROXY_BUSY({}ULL);\n", combo.counts[kBusyLoopBlock]);
  }
  std::uint64_t looped = 0;
  for (std::size_t j = 0; j < kLoopedBlocks; ++j) looped += combo.counts[j];
  const std::uint64_t overhead = combo.counts[kOverheadBlock];
  if (overhead < looped) {
    codegen_error("combination violates the loop-overhead constraint");
  }
  // The block loops above already spend `looped` overhead iterations.
  if (overhead > looped) out += fmt::format("  PROXY_OVERHEAD({}ULL);\n", overhead - looped);
  return out;
}

struct MainText {
  std::string text;
  std::size_t guards = 0;
};

MainText build_main(const Rule& main, int world_size) {
  MainText out;
  std::string& s = out.text;
  s += "int main(int argc, char **argv)\n{\n";
  s += "  MPI_Init(&argc, &argv);\n";
  s += "  MPI_Comm_rank(MPI_COMM_WORLD, &proxy_rank);\n";
  s += "  MPI_Comm_size(MPI_COMM_WORLD, &proxy_size);\n";
  s += fmt::format("  if (proxy_size != {}) {{\n", world_size);
  s += fmt::format(
      "    fprintf(stderr, \"proxy: built for {} ranks, started with %d\\n\", proxy_size);\n",
      world_size);
  s += "    MPI_Abort(MPI_COMM_WORLD, 1);\n  }\n";
  // Scaled blocking receives can be shorter than an unscaled non-blocking
  // send from the peer; the truncation is expected.
  s += "  MPI_Comm_set_errhandler(MPI_COMM_WORLD, MPI_ERRORS_RETURN);\n";
  s += "  proxy_comms[0] = MPI_COMM_WORLD;\n";
  // not every program touches every pool
  s += "  (void)proxy_reqs;\n  (void)proxy_sbuf;\n  (void)proxy_rbuf;\n  (void)proxy_mem;\n";

  std::size_t i = 0;
  const auto& body = main.body;
  while (i < body.size()) {
    const RankList& ranks = body[i].ranks;
    if (ranks.empty()) {
      throw Error(ErrorKind::MalformedProgram,
                  fmt::format("main symbol {} has an empty rank list", i));
    }
    if (ranks.intervals().front().lo < 0 || ranks.intervals().back().hi >= world_size) {
      throw Error(ErrorKind::MalformedProgram,
                  fmt::format("rank list {{{}}} exceeds world size {}", ranks.to_string(),
                              world_size));
    }
    std::size_t j = i;
    while (j < body.size() && body[j].ranks == ranks) ++j;
    if (ranks.covers_all(world_size)) {
      for (std::size_t k = i; k < j; ++k) s += call_line(body[k], "  ");
    } else {
      ++out.guards;
      s += fmt::format("  if ({}) {{\n", guard_expr(ranks));
      for (std::size_t k = i; k < j; ++k) s += call_line(body[k], "    ");
      s += "  }\n";
    }
    i = j;
  }
  s += "  MPI_Finalize();\n  return 0;\n}\n";
  return out;
}

constexpr std::string_view kBlockMacros = R"(typedef unsigned long long proxy_u64;

/* Synthetic code blocks. Each PROXY_BLOCK_j(i) is one repetition of block j;
   PROXY_LOOP supplies the loop whose overhead block 11 models. */
static volatile proxy_u64 proxy_sink;
static volatile double proxy_fsink = 1.0;
#define PROXY_MEM_WORDS (1u << 20)
static proxy_u64 proxy_mem[PROXY_MEM_WORDS];

#define PROXY_BLOCK_1(i) (proxy_sink += ((i) * 7u) ^ ((i) >> 3) ^ ((i) + 11u))
#define PROXY_BLOCK_2(i) do { proxy_u64 v_ = proxy_sink; v_ = v_ * 3u + (i); \
    v_ = v_ * 5u + 1u; v_ = v_ * 7u + 3u; proxy_sink = v_; } while (0)
#define PROXY_BLOCK_3(i) (proxy_sink += proxy_mem[(i) & 1023u] + \
    proxy_mem[((i) + 64u) & 1023u] + proxy_mem[((i) + 128u) & 1023u])
#define PROXY_BLOCK_4(i) do { proxy_mem[(i) & 1023u] = (i); \
    proxy_mem[((i) + 512u) & 1023u] = (i) + 1u; } while (0)
#define PROXY_BLOCK_5(i) (proxy_sink += proxy_mem[((i) * 4099u) & (PROXY_MEM_WORDS - 1u)])
#define PROXY_BLOCK_6(i) do { if (((i) & 7u) != 7u) proxy_sink += 1u; \
    else proxy_sink -= 1u; } while (0)
#define PROXY_BLOCK_7(i) do { if ((((i) * 0x9E3779B97F4A7C15ULL) >> 63) != 0u) \
    proxy_sink += (i); } while (0)
#define PROXY_BLOCK_8(i) do { if (proxy_mem[(i) & 1023u] > (i)) proxy_sink += 1u; \
    } while (0)
#define PROXY_BLOCK_9(i) (proxy_fsink = proxy_fsink * 1.0000001 + 1e-9)

#ifdef PROXY_SKIP_COMPUTE
#define PROXY_LOOP(block, n) ((void)0)
#define PROXY_BUSY(n) ((void)0)
#define PROXY_OVERHEAD(n) ((void)0)
#else
#define PROXY_LOOP(block, n) do { proxy_u64 i_; \
    for (i_ = 0; i_ < (n); ++i_) { block(i_); } } while (0)
/* block 10: roughly one cycle per unit, four units per iteration */
#define PROXY_BUSY(n) do { proxy_u64 i_; \
    for (i_ = 0; i_ < (n) / 4u; ++i_) { proxy_sink = i_; } } while (0)
/* block 11: bare loop iterations */
#define PROXY_OVERHEAD(n) do { volatile proxy_u64 i_; \
    for (i_ = 0; i_ < (n); ++i_) { } } while (0)
#endif
)";

}  // namespace

std::optional<CommFamily> comm_family(MpiFunc func) {
  switch (func) {
    case MpiFunc::Send:
    case MpiFunc::Sendrecv:
      return CommFamily::Send;
    case MpiFunc::Recv:
      return CommFamily::Recv;
    case MpiFunc::Allreduce:
    case MpiFunc::Bcast:
    case MpiFunc::Reduce:
    case MpiFunc::Alltoall:
      return CommFamily::Collective;
    default:
      return std::nullopt;
  }
}

std::string_view to_string(CommFamily family) {
  switch (family) {
    case CommFamily::Send:
      return "send";
    case CommFamily::Recv:
      return "recv";
    case CommFamily::Collective:
      return "collective";
  }
  return "?";
}

CommTimeModel fit_comm_model(std::span<const std::pair<double, double>> samples) {
  for (const auto& [v, t] : samples) {
    if (!std::isfinite(v) || !std::isfinite(t)) {
      throw Error(ErrorKind::NonFinite, "communication sample is not finite");
    }
  }
  const auto n = static_cast<double>(samples.size());
  double mean_v = 0.0;
  double mean_t = 0.0;
  for (const auto& [v, t] : samples) {
    mean_v += v;
    mean_t += t;
  }
  if (samples.empty()) throw Error(ErrorKind::DegenerateFit, "no samples to fit");
  mean_v /= n;
  mean_t /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& [v, t] : samples) {
    sxx += (v - mean_v) * (v - mean_v);
    sxy += (v - mean_v) * (t - mean_t);
  }
  if (!(sxx > 0.0)) {
    throw Error(ErrorKind::DegenerateFit, "all samples share one volume");
  }
  CommTimeModel m;
  m.slope = sxy / sxx;
  m.intercept = mean_t - m.slope * mean_v;
  if (m.slope < 0.0) {
    m.slope = 0.0;
    m.intercept = mean_t;
  }
  return m;
}

const CommTimeModel& CommModels::for_family(CommFamily f) const {
  auto it = family.find(f);
  return it == family.end() ? fallback : it->second;
}

CommModels parse_comm_models(std::string_view text) {
  CommModels out;
  std::map<std::string, std::vector<std::pair<double, double>>> samples;
  std::map<std::string, CommTimeModel> explicit_models;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string kind, fam;
    if (!(fields >> kind)) continue;
    double a = 0.0;
    double b = 0.0;
    std::string extra;
    if (!(fields >> fam >> a >> b) || (fields >> extra)) {
      throw Error(ErrorKind::Parse, fmt::format("comm model line {}: expected "
                                                "'<model|sample> <family> <a> <b>'",
                                                line_no));
    }
    if (fam != "default" && fam != "send" && fam != "recv" && fam != "collective") {
      throw Error(ErrorKind::Parse,
                  fmt::format("comm model line {}: unknown family '{}'", line_no, fam));
    }
    if (kind == "model") {
      if (!std::isfinite(a) || !std::isfinite(b) || b < 0.0) {
        throw Error(ErrorKind::Parse,
                    fmt::format("comm model line {}: slope must be finite and >= 0", line_no));
      }
      explicit_models[fam] = CommTimeModel{a, b};
    } else if (kind == "sample") {
      samples[fam].emplace_back(a, b);
    } else {
      throw Error(ErrorKind::Parse,
                  fmt::format("comm model line {}: unknown entry '{}'", line_no, kind));
    }
  }
  auto resolve = [&](const std::string& fam) -> std::optional<CommTimeModel> {
    if (auto it = explicit_models.find(fam); it != explicit_models.end()) return it->second;
    if (auto it = samples.find(fam); it != samples.end()) return fit_comm_model(it->second);
    return std::nullopt;
  };
  if (auto m = resolve("default")) out.fallback = *m;
  for (auto f : {CommFamily::Send, CommFamily::Recv, CommFamily::Collective}) {
    if (auto m = resolve(std::string(to_string(f)))) out.family[f] = *m;
  }
  return out;
}

CommModels read_comm_models(const std::filesystem::path& path) {
  return parse_comm_models(read_text_file(path));
}

double scaled_volume(const CommTimeModel& model, std::uint64_t volume, double scale) {
  if (!(scale >= 1.0) || !std::isfinite(scale)) {
    throw Error(ErrorKind::InvalidArgument, "scaling factor must be >= 1");
  }
  const auto v = static_cast<double>(volume);
  if (scale == 1.0 || model.slope <= 0.0) return v;
  const double target = model.seconds(v) / scale;
  return std::max(0.0, (target - model.intercept) / model.slope);
}

std::uint64_t emitted_volume(const CommTimeModel& model, std::uint64_t volume,
                             double scale) {
  return static_cast<std::uint64_t>(std::llround(scaled_volume(model, volume, scale)));
}

std::vector<std::optional<ComputeSolution>> solve_compute_terminals(
    const TerminalTable& table, const BlockMatrix& blocks, double scale, Execution exec) {
  validate_block_matrix(blocks);
  if (!(scale >= 1.0) || !std::isfinite(scale)) {
    throw Error(ErrorKind::InvalidArgument, "scaling factor must be >= 1");
  }
  std::vector<std::optional<ComputeSolution>> out(table.size());
  for_each_index(exec, table.size(), [&](std::size_t id) {
    Event ev = table.event(static_cast<TerminalId>(id));
    const auto* compute = std::get_if<ComputeEvent>(&ev);
    if (!compute) return;
    const MetricVector t = to_metric_vector(*compute);
    ComputeSolution sol;
    sol.target = t / scale;
    sol.combo = synthesize_compute_terminal(t, blocks, scale);
    out[id] = std::move(sol);
  });
  return out;
}

std::vector<RankList> terminal_ranks(const MergedProgram& program) {
  const Grammar& g = program.grammar;
  std::vector<RankList> rule_ranks(g.rules.size() + 1);
  std::vector<RankList> out(program.table.size());
  auto push = [&](const Symbol& s, const RankList& ranks) {
    if (s.ref.is_rule()) {
      rule_ranks.at(s.ref.id) |= ranks;
    } else {
      if (s.ref.id >= out.size()) {
        throw Error(ErrorKind::MalformedProgram,
                    fmt::format("unknown terminal t{}", s.ref.id));
      }
      out[s.ref.id] |= ranks;
    }
  };
  const auto order = topological_rule_order(g);
  for (const auto& s : g.main.body) {
    if (s.ranks.empty()) {
      throw Error(ErrorKind::MalformedProgram, "main symbol with an empty rank list");
    }
    push(s, s.ranks);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const RankList ranks = rule_ranks[*it];
    for (const auto& s : g.rule(*it).body) push(s, ranks);
  }
  return out;
}

HandleCounts required_handles(const TerminalTable& table) {
  HandleCounts out;
  for (const auto& key : table.keys()) {
    Event ev = parse_event(key);
    const auto* c = std::get_if<CommEvent>(&ev);
    if (!c) continue;
    auto bump = [](std::uint32_t& n, std::uint64_t id) {
      if (id >= UINT32_MAX) codegen_error("handle number too large");
      n = std::max(n, static_cast<std::uint32_t>(id + 1));
    };
    bump(out.comms, c->comm);
    if (c->new_comm) bump(out.comms, *c->new_comm);
    if (c->req) bump(out.requests, *c->req);
  }
  return out;
}

std::string emit_terminal(TerminalId id, const Event& event, const RankList& ranks,
                          int world_size, const CodegenConfig& config,
                          const CommModels& models,
                          const std::optional<ComputeSolution>& compute) {
  std::string out = fmt::format("static void {}(void)\n{{\n", terminal_fn(id));
  out += fmt::format("  PROXY_EVENT({});\n", c_string(serialize_event(event)));
  if (const auto* c = std::get_if<CommEvent>(&event)) {
    out += "  " + comm_call(*c, plan_comm(*c, config, models), ranks, world_size) + "\n";
  } else {
    if (!compute) {
      codegen_error(fmt::format("compute terminal t{} has no solved combination", id));
    }
    out += compute_body(compute->combo);
  }
  out += "}\n";
  return out;
}

std::string emit_rule(const Rule& rule) {
  std::string out = fmt::format("static void {}(void)\n{{\n", rule_fn(rule.id));
  for (const auto& s : rule.body) out += call_line(s, "  ");
  out += "}\n";
  return out;
}

std::string emit_main(const Rule& main, int world_size) {
  return build_main(main, world_size).text;
}

GeneratedProgram generate_program(const MergedProgram& program,
                                  std::span<const std::optional<ComputeSolution>> compute,
                                  const CodegenConfig& config, const CommModels& models) {
  const int world = program.world_size;
  if (world < 1) throw Error(ErrorKind::MalformedProgram, "world size must be >= 1");
  if (!(config.scaling_factor >= 1.0) || !std::isfinite(config.scaling_factor)) {
    throw Error(ErrorKind::InvalidArgument, "scaling factor must be >= 1");
  }
  const TerminalTable& table = program.table;
  if (compute.size() != table.size()) {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("{} compute entries for {} terminals", compute.size(),
                            table.size()));
  }

  const auto order = topological_rule_order(program.grammar);
  const auto ranks = terminal_ranks(program);
  HandleCounts handles = required_handles(table);
  if (config.request_pool) {
    if (config.request_pool < handles.requests) codegen_error("request pool too small");
    handles.requests = config.request_pool;
  }
  if (config.comm_pool) {
    if (config.comm_pool < handles.comms) codegen_error("communicator pool too small");
    handles.comms = config.comm_pool;
  }

  GeneratedProgram out;
  std::string functions;
  std::uint64_t buffer = 1;
  for (TerminalId id = 0; id < table.size(); ++id) {
    Event ev = table.event(id);
    TerminalReport rep;
    rep.id = id;
    rep.key = table.key(id);
    if (const auto* c = std::get_if<CommEvent>(&ev)) {
      const CommPlan plan = plan_comm(*c, config, models);
      rep.volume = plan.volume;
      rep.scaled_volume = plan.scaled_volume;
      rep.emitted_volume = plan.emitted;
      rep.scaled = plan.scaled;
      buffer = std::max(buffer, buffer_need(*c, plan, world));
    } else {
      rep.compute = true;
      if (compute[id]) rep.solution = *compute[id];
    }
    functions += emit_terminal(id, ev, ranks[id], world, config, models, compute[id]);
    functions += '\n';
    out.terminals.push_back(std::move(rep));
  }
  for (std::uint32_t rid : order) {
    functions += emit_rule(program.grammar.rule(rid));
    functions += '\n';
  }
  MainText main = build_main(program.grammar.main, world);
  out.guard_count = main.guards;
  out.function_count = table.size() + order.size() + 1;

  std::string& s = out.source;
  s += fmt::format("/* proxy program: {} ranks, {} terminals, {} rules, scaling factor {} */\n",
                   world, table.size(), order.size(), config.scaling_factor);
  s += "#ifdef PROXY_LOG_SHIM\n";
  s += fmt::format("#include \"{}\"\n", kShimHeaderName);
  s += "#else\n#include <mpi.h>\n#define PROXY_EVENT(key) ((void)0)\n#endif\n";
  s += "#include <stdio.h>\n\n";
  s += kBlockMacros;
  s += '\n';
  s += "static int proxy_rank;\nstatic int proxy_size;\n";
  s += fmt::format("static MPI_Comm proxy_comms[{}];\n", std::max<std::uint32_t>(1, handles.comms));
  s += fmt::format("static MPI_Request proxy_reqs[{}];\n",
                   std::max<std::uint32_t>(1, handles.requests));
  s += fmt::format("static char proxy_sbuf[{}];\nstatic char proxy_rbuf[{}];\n\n", buffer, buffer);
  s += functions;
  s += main.text;
  return out;
}

std::string makefile_text(std::string_view source_name) {
  return fmt::format(
      "MPICC ?= mpicc\n"
      "CC ?= cc\n"
      "CFLAGS ?= -O2\n"
      "\n"
      "all: proxy\n"
      "\n"
      "proxy: {0}\n"
      "\t$(MPICC) -std=c99 $(CFLAGS) -o $@ {0}\n"
      "\n"
      "proxy_shim: {0} {1}\n"
      "\t$(CC) -std=c99 $(CFLAGS) -DPROXY_LOG_SHIM -o $@ {0}\n"
      "\n"
      "clean:\n"
      "\trm -f proxy proxy_shim\n"
      "\n"
      ".PHONY: all clean\n",
      source_name, kShimHeaderName);
}

}  // namespace proxysynth
