#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace earshot {

enum class ErrorCode {
  // dialogue-core
  MalformedLine,
  NonMonotonicTime,
  OrphanWord,
  EmptyCorpus,
  // memory
  NotFound,
  DuplicateId,
  // backends
  NotAtSilence,
  BackendTimeout,
  BackendProtocol,
  Timeout,
  HttpStatus,
  JsonShape,
  // orchestrator
  SessionClosed,
  NotManualMode,
  // datagen
  MissingTag,
  MissingDelimiters,
  // train-export
  InsufficientNegatives,
  // eval
  OutOfRange,
  JudgeJsonShape,
  CountMismatch,
  DegenerateVariance,
  // service
  UnknownMemory,
  UnknownSession,
  BadConfig,
  BadFrame,
  Backpressure,
  // shared
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// HTTP failures keep the status for retry decisions and reporting.
class HttpStatusError : public Error {
 public:
  HttpStatusError(int status, const std::string& body);

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace earshot
