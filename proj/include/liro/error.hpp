#ifndef LIRO_ERROR_HPP
#define LIRO_ERROR_HPP

#include <stdexcept>
#include <string>

namespace liro {

/// Category of a library failure. Callers switch on this rather than parsing
/// the message.
enum class ErrorKind {
  kValidation,   ///< malformed or out-of-contract input
  kDegenerate,   ///< geometry makes the quantity undefined
  kCalibration,  ///< anchor self-calibration infeasible
  kDiverged,     ///< solver produced a non-finite cost
  kIo,           ///< file missing or unparsable
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kCalibration: return "calibration";
    case ErrorKind::kDiverged: return "diverged";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace liro

#endif  // LIRO_ERROR_HPP
