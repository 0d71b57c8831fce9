#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geomshot {

enum class ErrorCode {
  InvalidArgument = 1,
  InvalidKeypoints,
  DegenerateHand,
  Format,
  Io,
  InsufficientClasses,
  InsufficientSamples,
  BatchTooSmall,
  Cache,
  NonFiniteGradient,
  CorruptCheckpoint,
  Shape,
  NoPositives,
  ConfigMismatch,
  DegenerateProblem,
  Split,
  Config,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library. `field()` names the offending input
// element when one exists (e.g. "shape" for a malformed NPY header).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

// Process-wide warning sink. Defaults to stderr; the C API can redirect it.
using WarningSink = void (*)(std::string_view message, void* user);
void set_warning_sink(WarningSink sink, void* user);
void warn(std::string_view message);

}  // namespace geomshot
