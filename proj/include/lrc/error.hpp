#pragma once

#include <stdexcept>
#include <string>

namespace lrc {

enum class ErrorKind {
  InvalidArgument,
  Io,
  TruncatedHeader,
  TruncatedManifest,
  MalformedManifest,
  UnsupportedDtype,
  TruncatedBlob,
  LengthMismatch,
  NameCollision,
  ShapeMismatch,
  NonFinite,
  NonConvergence,
  EmptySelection,
  ParseError,
  MissingWeight,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (and the C
// API) can branch on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the SVD when the sweep cap is hit.
class ConvergenceError : public Error {
 public:
  ConvergenceError(int sweeps, const std::string& what)
      : Error(ErrorKind::NonConvergence, what), sweeps_(sweeps) {}

  int sweeps() const noexcept { return sweeps_; }

 private:
  int sweeps_;
};

}  // namespace lrc
