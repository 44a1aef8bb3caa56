#pragma once

#include <stdexcept>
#include <string>

namespace evt {

enum class ErrorKind {
  Shape,      // dimension mismatch between operands
  Config,     // invalid configuration value
  Data,       // malformed or rejected input data
  Count,      // not enough rows / neighbors / samples
  Numeric,    // NaN, Inf or divergence
  Alignment,  // evidence rows do not line up with data rows
  Mapping,    // cluster ids cannot be bijected onto labels
  Check,      // gradient check could not run
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// The message without its "<kind> error: " prefix, for re-wrapping.
  std::string detail() const {
    const std::string msg = what();
    const std::string prefix = std::string(to_string(kind_)) + " error: ";
    return msg.rfind(prefix, 0) == 0 ? msg.substr(prefix.size()) : msg;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(to_string(kind)) + " error: " + what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace evt
