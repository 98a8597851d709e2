#include "ippg/error.hpp"

namespace ippg {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptySignal: return "EmptySignal";
    case ErrorCode::Misaligned: return "Misaligned";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::BadRate: return "BadRate";
    case ErrorCode::NoSignal: return "NoSignal";
    case ErrorCode::RaggedInput: return "RaggedInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateSignal: return "DegenerateSignal";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::NeedTwoSubjects: return "NeedTwoSubjects";
    case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::NoSubjects: return "NoSubjects";
    case ErrorCode::NoSessions: return "NoSessions";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace ippg
