#include "geomshot/error.hpp"

#include <iostream>
#include <mutex>

namespace geomshot {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidKeypoints: return "InvalidKeypoints";
    case ErrorCode::DegenerateHand: return "DegenerateHand";
    case ErrorCode::Format: return "FormatError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::InsufficientClasses: return "InsufficientClasses";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::Cache: return "CacheError";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::Shape: return "ShapeError";
    case ErrorCode::NoPositives: return "NoPositivesError";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::DegenerateProblem: return "DegenerateProblem";
    case ErrorCode::Split: return "SplitError";
    case ErrorCode::Config: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::string field)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      field_(std::move(field)) {}

namespace {

std::mutex g_sink_mutex;
WarningSink g_sink = nullptr;
void* g_sink_user = nullptr;

}  // namespace

void set_warning_sink(WarningSink sink, void* user) {
  std::lock_guard lock(g_sink_mutex);
  g_sink = sink;
  g_sink_user = user;
}

void warn(std::string_view message) {
  std::lock_guard lock(g_sink_mutex);
  if (g_sink) {
    g_sink(message, g_sink_user);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace geomshot
