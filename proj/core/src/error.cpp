#include "noshow/error.hpp"

namespace noshow {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::MalformedTimestamp: return "MalformedTimestamp";
    case ErrorCode::NegativeLeadTime: return "NegativeLeadTime";
    case ErrorCode::UnknownOutcome: return "UnknownOutcome";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::UnmappableHeader: return "UnmappableHeader";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::UndefinedRate: return "UndefinedRate";
    case ErrorCode::UnsortedInput: return "UnsortedInput";
    case ErrorCode::InfeasibleConfig: return "InfeasibleConfig";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::OutOfRangeProbability: return "OutOfRangeProbability";
    case ErrorCode::NegativeInput: return "NegativeInput";
    case ErrorCode::EmptyWeek: return "EmptyWeek";
    case ErrorCode::IncompatibleModelSchema: return "IncompatibleModelSchema";
    case ErrorCode::CyclicDependency: return "CyclicDependency";
    case ErrorCode::MissingSource: return "MissingSource";
    case ErrorCode::TaskFailed: return "TaskFailed";
    case ErrorCode::WorkspaceLocked: return "WorkspaceLocked";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace noshow
