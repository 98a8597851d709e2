#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ippg {

enum class ErrorCode {
  EmptySignal,
  Misaligned,
  TooShort,
  BadRate,
  NoSignal,
  RaggedInput,
  ShapeMismatch,
  DegenerateSignal,
  EmptyBatch,
  NeedTwoSubjects,
  EmptyTrainSet,
  EmptyTrack,
  NoSubjects,
  NoSessions,
  MissingCheckpoint,
  BadConfig,
  Io,
};

std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ippg
