#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gdm {

enum class ErrorKind {
  invalid_input,
  invalid_parameter,
  degenerate_spectrum,
  degenerate_cluster,
  insufficient_inliers,
  unsupported,
  generation_failed,
  parse_error,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::invalid_parameter: return "invalid-parameter";
    case ErrorKind::degenerate_spectrum: return "degenerate-spectrum";
    case ErrorKind::degenerate_cluster: return "degenerate-cluster";
    case ErrorKind::insufficient_inliers: return "insufficient-inliers";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::generation_failed: return "generation-failed";
    case ErrorKind::parse_error: return "parse-error";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

inline void require(bool condition, ErrorKind kind, const char* message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace detail
}  // namespace gdm
