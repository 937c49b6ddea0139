#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace noshow {

enum class ErrorCode {
  // schema / ingest
  MissingField,
  MalformedTimestamp,
  NegativeLeadTime,
  UnknownOutcome,
  InvalidRecord,
  UnmappableHeader,
  EmptyFile,
  UndefinedRate,
  UnsortedInput,
  // datagen
  InfeasibleConfig,
  // model
  DegenerateLabels,
  EmptyTrainingSet,
  SchemaMismatch,
  SingleClass,
  VersionMismatch,
  CorruptFile,
  // aggregate
  OutOfRangeProbability,
  NegativeInput,
  EmptyWeek,
  // simulate
  IncompatibleModelSchema,
  // pipeline
  CyclicDependency,
  MissingSource,
  TaskFailed,
  WorkspaceLocked,
  // general
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace noshow
