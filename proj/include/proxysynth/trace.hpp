#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace proxysynth {

enum class MpiFunc : std::uint8_t {
  Send,
  Recv,
  Isend,
  Irecv,
  Wait,
  Sendrecv,
  Barrier,
  Allreduce,
  Bcast,
  Reduce,
  Alltoall,
  CommSplit,
  CommDup,
  CommFree,
};

inline constexpr std::size_t kMpiFuncCount = 14;

std::string_view verb(MpiFunc func);
std::optional<MpiFunc> func_from_verb(std::string_view verb);

bool is_point_to_point(MpiFunc func);
bool is_nonblocking(MpiFunc func);
/// Calls whose duration grows with the message volume and blocks the caller.
bool is_blocking_transfer(MpiFunc func);
bool is_collective(MpiFunc func);
bool has_root(MpiFunc func);
bool carries_volume(MpiFunc func);
bool carries_request(MpiFunc func);

struct Peer {
  enum class Kind : std::uint8_t { Absolute, Relative };
  Kind kind = Kind::Absolute;
  std::int64_t value = 0;

  static Peer absolute(std::int64_t rank) { return {Kind::Absolute, rank}; }
  static Peer relative(std::int64_t offset) { return {Kind::Relative, offset}; }

  bool operator==(const Peer&) const = default;
};

/// An MPI call with its canonicalizable parameters. Only the byte count of
/// data buffers is kept.
struct CommEvent {
  MpiFunc func = MpiFunc::Barrier;
  std::uint64_t volume = 0;
  std::optional<Peer> peer;
  std::optional<std::int64_t> tag;
  std::uint64_t comm = 0;
  std::optional<std::uint64_t> req;
  /// Communicator created by COMM_DUP / COMM_SPLIT.
  std::optional<std::uint64_t> new_comm;
  /// Split color of COMM_SPLIT.
  std::optional<std::int64_t> color;

  bool operator==(const CommEvent&) const = default;
};

enum class Metric : std::size_t { Ins, Cyc, Lst, L1Dcm, BrCn, Msp };
inline constexpr std::size_t kMetricCount = 6;
inline constexpr std::array<std::string_view, kMetricCount> kMetricNames{
    "INS", "CYC", "LST", "L1_DCM", "BR_CN", "MSP"};

using Metrics = std::array<std::uint64_t, kMetricCount>;

/// The computation span between two communication events.
struct ComputeEvent {
  Metrics metrics{};

  std::uint64_t operator[](Metric m) const {
    return metrics[static_cast<std::size_t>(m)];
  }
  bool operator==(const ComputeEvent&) const = default;
};

using Event = std::variant<CommEvent, ComputeEvent>;

struct Trace {
  int rank = 0;
  std::vector<Event> events;

  bool operator==(const Trace&) const = default;
};

/// Throws ErrorKind::Parse if any field violates the event invariants.
void validate(const CommEvent& event);
void validate(const ComputeEvent& event);

/// One line, no trailing newline. This string is also the terminal key.
std::string serialize_event(const Event& event);
std::string serialize_trace(const Trace& trace);
/// Bytes serialize_trace would produce, without materializing the text.
std::uint64_t serialized_size(const Trace& trace);

/// Parses a single event line (no comments, no blank lines).
Event parse_event(std::string_view line);

/// Adjacent COMPUTE lines are merged by element-wise addition and reported
/// through `warnings` when it is non-null.
Trace parse_trace(std::string_view text, int rank = 0,
                  std::vector<std::string>* warnings = nullptr);

std::filesystem::path trace_file_name(int rank);
/// Extracts the rank from `trace.<rank>.txt`; nullopt for other names.
std::optional<int> rank_from_trace_file(const std::filesystem::path& path);

Trace read_trace_file(const std::filesystem::path& path,
                      std::vector<std::string>* warnings = nullptr);
void write_trace_file(const std::filesystem::path& path, const Trace& trace);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace proxysynth
