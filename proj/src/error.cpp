#include "evitransfer/error.hpp"

namespace evt {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Config: return "configuration";
    case ErrorKind::Data: return "data";
    case ErrorKind::Count: return "count";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::Mapping: return "mapping";
    case ErrorKind::Check: return "check";
    case ErrorKind::Io: return "I/O";
  }
  return "unknown";
}

}  // namespace evt
