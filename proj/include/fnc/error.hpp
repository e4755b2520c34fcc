#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fnc {

enum class ErrorKind {
  degenerate_input,  // zero-norm vectors, collapsed encoder outputs
  shape,
  config,
  invalid_set,
  empty_batch,
  invariant,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::degenerate_input: return "degenerate input";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::config: return "config error";
    case ErrorKind::invalid_set: return "invalid false-negative set";
    case ErrorKind::empty_batch: return "empty batch";
    case ErrorKind::invariant: return "invariant violation";
    case ErrorKind::io: return "I/O error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind), detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Same kind, message prefixed with where it happened.
  Error with_context(const std::string& where) const { return Error(kind_, where + ": " + detail_); }

 private:
  ErrorKind kind_;
  std::string detail_;
};

/// Process exit code for an error kind: 1 config, 2 invariant/numeric, 3 I/O.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 1;
    case ErrorKind::io: return 3;
    default: return 2;
  }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, std::string_view what) {
  if (!cond) fail(kind, std::string(what));
}

}  // namespace fnc
