#include "earshot/error.hpp"

namespace earshot {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::OrphanWord: return "OrphanWord";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::NotAtSilence: return "NotAtSilence";
    case ErrorCode::BackendTimeout: return "BackendTimeout";
    case ErrorCode::BackendProtocol: return "BackendProtocol";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::HttpStatus: return "HttpStatus";
    case ErrorCode::JsonShape: return "JsonShape";
    case ErrorCode::SessionClosed: return "SessionClosed";
    case ErrorCode::NotManualMode: return "NotManualMode";
    case ErrorCode::MissingTag: return "MissingTag";
    case ErrorCode::MissingDelimiters: return "MissingDelimiters";
    case ErrorCode::InsufficientNegatives: return "InsufficientNegatives";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::JudgeJsonShape: return "JudgeJsonShape";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::UnknownMemory: return "UnknownMemory";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::BadFrame: return "BadFrame";
    case ErrorCode::Backpressure: return "Backpressure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

HttpStatusError::HttpStatusError(int status, const std::string& body)
    : Error(ErrorCode::HttpStatus, "status " + std::to_string(status) + ": " + body.substr(0, 200)),
      status_(status) {}

}  // namespace earshot
