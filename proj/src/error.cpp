#include "lrc/error.hpp"

namespace lrc {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::TruncatedHeader: return "truncated header";
    case ErrorKind::TruncatedManifest: return "truncated manifest";
    case ErrorKind::MalformedManifest: return "malformed manifest";
    case ErrorKind::UnsupportedDtype: return "unsupported dtype";
    case ErrorKind::TruncatedBlob: return "truncated blob";
    case ErrorKind::LengthMismatch: return "manifest/blob length mismatch";
    case ErrorKind::NameCollision: return "name collision";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::EmptySelection: return "empty selection";
    case ErrorKind::ParseError: return "parse error";
    case ErrorKind::MissingWeight: return "missing weight";
  }
  return "unknown";
}

}  // namespace lrc
