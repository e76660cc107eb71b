#include "proxysynth/trace.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "proxysynth/error.hpp"

namespace proxysynth {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::UnsupportedEvent: return "unsupported event";
    case ErrorKind::DanglingHandle: return "dangling handle";
    case ErrorKind::DoubleFree: return "double free";
    case ErrorKind::InvalidRank: return "invalid rank";
    case ErrorKind::MalformedGrammar: return "malformed grammar";
    case ErrorKind::MalformedProgram: return "malformed program";
    case ErrorKind::Codegen: return "codegen error";
    case ErrorKind::DegenerateFit: return "degenerate fit";
    case ErrorKind::NonFinite: return "non-finite input";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

namespace {

constexpr std::array<std::string_view, kMpiFuncCount> kVerbs{
    "SEND",      "RECV",  "ISEND",  "IRECV",      "WAIT",
    "SENDRECV",  "BARRIER", "ALLREDUCE", "BCAST", "REDUCE",
    "ALLTOALL",  "COMM_SPLIT", "COMM_DUP", "COMM_FREE"};

// Which key=value fields each verb carries, in serialization order.
struct FieldSet {
  bool vol = false;
  bool peer = false;
  bool tag = false;
  bool comm = false;
  bool req = false;
  bool new_comm = false;
  bool color = false;
};

FieldSet fields_of(MpiFunc func) {
  switch (func) {
    case MpiFunc::Send:
    case MpiFunc::Recv:
    case MpiFunc::Sendrecv:
      return {.vol = true, .peer = true, .tag = true, .comm = true};
    case MpiFunc::Isend:
    case MpiFunc::Irecv:
      return {.vol = true, .peer = true, .tag = true, .comm = true, .req = true};
    case MpiFunc::Wait:
      return {.req = true};
    case MpiFunc::Barrier:
    case MpiFunc::CommFree:
      return {.comm = true};
    case MpiFunc::Allreduce:
    case MpiFunc::Alltoall:
      return {.vol = true, .comm = true};
    case MpiFunc::Bcast:
    case MpiFunc::Reduce:
      return {.vol = true, .peer = true, .comm = true};
    case MpiFunc::CommDup:
      return {.comm = true, .new_comm = true};
    case MpiFunc::CommSplit:
      return {.comm = true, .new_comm = true, .color = true};
  }
  return {};
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& msg) {
  if (line_no == 0) throw Error(ErrorKind::Parse, msg);
  throw Error(ErrorKind::Parse, fmt::format("line {}: {}", line_no, msg));
}

template <typename Int>
std::optional<Int> parse_int(std::string_view text) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  Int value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return value;
}

std::optional<Peer> parse_peer(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text.front() == 'r') {
    auto v = parse_int<std::int64_t>(text.substr(1));
    if (!v || *v < 0) return std::nullopt;
    return Peer::absolute(*v);
  }
  if (text.front() != '+' && text.front() != '-') return std::nullopt;
  auto v = parse_int<std::int64_t>(text);
  if (!v) return std::nullopt;
  return Peer::relative(*v);
}

std::string format_peer(const Peer& peer) {
  if (peer.kind == Peer::Kind::Absolute) return fmt::format("r{}", peer.value);
  return fmt::format("{:+d}", peer.value);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

Event parse_event_at(std::string_view line, std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto tokens = split_ws(line);
  if (tokens.empty()) parse_fail(line_no, "empty event line");

  if (tokens[0] == "COMPUTE") {
    if (tokens.size() != 1 + kMetricCount) {
      parse_fail(line_no, fmt::format("COMPUTE expects {} counts, got {}",
                                      kMetricCount, tokens.size() - 1));
    }
    ComputeEvent ev;
    for (std::size_t i = 0; i < kMetricCount; ++i) {
      auto v = parse_int<std::uint64_t>(tokens[i + 1]);
      if (!v) parse_fail(line_no, fmt::format("bad count '{}'", tokens[i + 1]));
      ev.metrics[i] = *v;
    }
    try {
      validate(ev);
    } catch (const Error& e) {
      parse_fail(line_no, e.what());
    }
    return ev;
  }

  auto func = func_from_verb(tokens[0]);
  if (!func) {
    throw Error(ErrorKind::UnsupportedEvent,
                fmt::format("line {}: unsupported MPI function '{}'", line_no,
                            tokens[0]));
  }
  CommEvent ev;
  ev.func = *func;
  FieldSet allowed = fields_of(*func);
  FieldSet seen;

  for (std::size_t i = 1; i < tokens.size(); ++i) {
    auto tok = tokens[i];
    auto eq = tok.find('=');
    if (eq == std::string_view::npos) {
      parse_fail(line_no, fmt::format("expected key=value, got '{}'", tok));
    }
    auto key = tok.substr(0, eq);
    auto value = tok.substr(eq + 1);
    auto bad_value = [&] {
      parse_fail(line_no, fmt::format("bad value for '{}': '{}'", key, value));
    };
    auto check = [&](bool allowed_field, bool& seen_field) {
      if (!allowed_field) {
        parse_fail(line_no, fmt::format("field '{}' not valid for {}", key,
                                        tokens[0]));
      }
      if (seen_field) parse_fail(line_no, fmt::format("duplicate field '{}'", key));
      seen_field = true;
    };
    if (key == "vol") {
      check(allowed.vol, seen.vol);
      auto v = parse_int<std::uint64_t>(value);
      if (!v) bad_value();
      ev.volume = *v;
    } else if (key == "peer") {
      check(allowed.peer, seen.peer);
      ev.peer = parse_peer(value);
      if (!ev.peer) bad_value();
    } else if (key == "tag") {
      check(allowed.tag, seen.tag);
      if (value != "-") {
        auto v = parse_int<std::int64_t>(value);
        if (!v) bad_value();
        ev.tag = *v;
      }
    } else if (key == "comm") {
      check(allowed.comm, seen.comm);
      auto v = parse_int<std::uint64_t>(value);
      if (!v) bad_value();
      ev.comm = *v;
    } else if (key == "req") {
      check(allowed.req, seen.req);
      auto v = parse_int<std::uint64_t>(value);
      if (!v) bad_value();
      ev.req = *v;
    } else if (key == "new") {
      check(allowed.new_comm, seen.new_comm);
      auto v = parse_int<std::uint64_t>(value);
      if (!v) bad_value();
      ev.new_comm = *v;
    } else if (key == "color") {
      check(allowed.color, seen.color);
      auto v = parse_int<std::int64_t>(value);
      if (!v) bad_value();
      ev.color = *v;
    } else {
      parse_fail(line_no, fmt::format("unknown field '{}'", key));
    }
  }

  auto require = [&](bool need, bool have, std::string_view name) {
    if (need && !have) {
      parse_fail(line_no,
                 fmt::format("{} requires field '{}'", tokens[0], name));
    }
  };
  require(allowed.vol, seen.vol, "vol");
  require(allowed.peer, seen.peer, "peer");
  require(allowed.tag, seen.tag, "tag");
  require(allowed.comm, seen.comm, "comm");
  require(allowed.req, seen.req, "req");
  require(allowed.new_comm, seen.new_comm, "new");
  require(allowed.color, seen.color, "color");
  return ev;
}

void add_metrics(ComputeEvent& into, const ComputeEvent& other) {
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    into.metrics[i] += other.metrics[i];
  }
}

}  // namespace

std::string_view verb(MpiFunc func) {
  return kVerbs[static_cast<std::size_t>(func)];
}

std::optional<MpiFunc> func_from_verb(std::string_view v) {
  for (std::size_t i = 0; i < kVerbs.size(); ++i) {
    if (kVerbs[i] == v) return static_cast<MpiFunc>(i);
  }
  return std::nullopt;
}

bool is_point_to_point(MpiFunc f) {
  return f == MpiFunc::Send || f == MpiFunc::Recv || f == MpiFunc::Isend ||
         f == MpiFunc::Irecv || f == MpiFunc::Sendrecv;
}

bool is_nonblocking(MpiFunc f) {
  return f == MpiFunc::Isend || f == MpiFunc::Irecv;
}

bool is_blocking_transfer(MpiFunc f) {
  return f == MpiFunc::Send || f == MpiFunc::Recv || f == MpiFunc::Sendrecv ||
         f == MpiFunc::Allreduce || f == MpiFunc::Bcast ||
         f == MpiFunc::Reduce || f == MpiFunc::Alltoall;
}

bool is_collective(MpiFunc f) {
  return f == MpiFunc::Barrier || f == MpiFunc::Allreduce ||
         f == MpiFunc::Bcast || f == MpiFunc::Reduce || f == MpiFunc::Alltoall;
}

bool has_root(MpiFunc f) { return f == MpiFunc::Bcast || f == MpiFunc::Reduce; }

bool carries_volume(MpiFunc f) { return fields_of(f).vol; }

bool carries_request(MpiFunc f) { return fields_of(f).req; }

void validate(const CommEvent& ev) {
  FieldSet f = fields_of(ev.func);
  if (!f.vol && ev.volume != 0) {
    throw Error(ErrorKind::Parse,
                fmt::format("{} carries no volume", verb(ev.func)));
  }
  if (f.peer != ev.peer.has_value()) {
    throw Error(ErrorKind::Parse,
                fmt::format("{} peer presence mismatch", verb(ev.func)));
  }
  if (!f.tag && ev.tag) {
    throw Error(ErrorKind::Parse, fmt::format("{} carries no tag", verb(ev.func)));
  }
  if (f.req != ev.req.has_value()) {
    throw Error(ErrorKind::Parse,
                fmt::format("{} request presence mismatch", verb(ev.func)));
  }
  if (f.new_comm != ev.new_comm.has_value() || f.color != ev.color.has_value()) {
    throw Error(ErrorKind::Parse,
                fmt::format("{} communicator fields mismatch", verb(ev.func)));
  }
  if (!f.comm && ev.comm != 0) {
    throw Error(ErrorKind::Parse,
                fmt::format("{} carries no communicator", verb(ev.func)));
  }
}

void validate(const ComputeEvent& ev) {
  if (ev[Metric::Ins] < ev[Metric::BrCn] || ev[Metric::BrCn] < ev[Metric::Msp] ||
      ev[Metric::Lst] < ev[Metric::L1Dcm]) {
    throw Error(ErrorKind::Parse,
                "compute metrics violate INS >= BR_CN >= MSP, LST >= L1_DCM");
  }
}

std::string serialize_event(const Event& event) {
  if (const auto* c = std::get_if<ComputeEvent>(&event)) {
    const auto& m = c->metrics;
    return fmt::format("COMPUTE {} {} {} {} {} {}", m[0], m[1], m[2], m[3],
                       m[4], m[5]);
  }
  const auto& ev = std::get<CommEvent>(event);
  FieldSet f = fields_of(ev.func);
  std::string out(verb(ev.func));
  if (f.vol) out += fmt::format(" vol={}", ev.volume);
  if (f.peer && ev.peer) out += " peer=" + format_peer(*ev.peer);
  if (f.tag) out += ev.tag ? fmt::format(" tag={}", *ev.tag) : " tag=-";
  if (f.comm) out += fmt::format(" comm={}", ev.comm);
  if (f.req && ev.req) out += fmt::format(" req={}", *ev.req);
  if (f.new_comm && ev.new_comm) out += fmt::format(" new={}", *ev.new_comm);
  if (f.color && ev.color) out += fmt::format(" color={}", *ev.color);
  return out;
}

std::string serialize_trace(const Trace& trace) {
  std::string out;
  out.reserve(trace.events.size() * 32);
  for (const auto& ev : trace.events) {
    out += serialize_event(ev);
    out += '\n';
  }
  return out;
}

std::uint64_t serialized_size(const Trace& trace) {
  std::uint64_t total = 0;
  for (const auto& ev : trace.events) total += serialize_event(ev).size() + 1;
  return total;
}

Event parse_event(std::string_view line) { return parse_event_at(line, 0); }

Trace parse_trace(std::string_view text, int rank,
                  std::vector<std::string>* warnings) {
  Trace trace;
  trace.rank = rank;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || line[first] == '#') continue;

    Event ev = parse_event_at(line, line_no);
    if (auto* c = std::get_if<ComputeEvent>(&ev); c && !trace.events.empty()) {
      if (auto* prev = std::get_if<ComputeEvent>(&trace.events.back())) {
        add_metrics(*prev, *c);
        if (warnings) {
          warnings->push_back(fmt::format(
              "line {}: adjacent COMPUTE events merged", line_no));
        }
        continue;
      }
    }
    trace.events.push_back(std::move(ev));
  }
  return trace;
}

std::filesystem::path trace_file_name(int rank) {
  return fmt::format("trace.{}.txt", rank);
}

std::optional<int> rank_from_trace_file(const std::filesystem::path& path) {
  std::string name = path.filename().string();
  constexpr std::string_view prefix = "trace.";
  constexpr std::string_view suffix = ".txt";
  if (name.size() <= prefix.size() + suffix.size()) return std::nullopt;
  if (!name.starts_with(prefix) || !name.ends_with(suffix)) return std::nullopt;
  auto mid = std::string_view(name).substr(
      prefix.size(), name.size() - prefix.size() - suffix.size());
  auto v = parse_int<int>(mid);
  if (!v || *v < 0 || mid.front() == '+') return std::nullopt;
  return v;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::Io,
                fmt::format("cannot write '{}'", path.string()));
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw Error(ErrorKind::Io,
                fmt::format("write failed for '{}'", path.string()));
  }
}

Trace read_trace_file(const std::filesystem::path& path,
                      std::vector<std::string>* warnings) {
  auto rank = rank_from_trace_file(path);
  try {
    return parse_trace(read_text_file(path), rank.value_or(0), warnings);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw Error(e.kind(), fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_trace_file(const std::filesystem::path& path, const Trace& trace) {
  write_text_file(path, serialize_trace(trace));
}

}  // namespace proxysynth
