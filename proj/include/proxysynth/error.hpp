#pragma once

#include <stdexcept>
#include <string>

namespace proxysynth {

enum class ErrorKind {
  Parse,
  UnsupportedEvent,
  DanglingHandle,
  DoubleFree,
  InvalidRank,
  MalformedGrammar,
  MalformedProgram,
  Codegen,
  DegenerateFit,
  NonFinite,
  InvalidArgument,
  Io,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so the CLI can map it
/// to an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace proxysynth
