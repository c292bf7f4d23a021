#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace krone {

enum class ErrorCode {
  // corpus
  MalformedRecord,
  DuplicateTemplateId,
  EmptyFile,
  UnknownTemplateId,
  LabeledTrainAnomaly,
  IoError,
  // hierarchy
  LlmUnavailable,
  ExtractionInvalid,
  MissingTriple,
  DuplicateTriple,
  UnboundTemplate,
  // decomposer
  EmptySequence,
  SpanOutOfBounds,
  // knowledge base
  UnknownKey,
  UnknownNode,
  CorruptStore,
  InvalidEntry,
  // detector
  LlmCallBudgetExceeded,
  VerdictUnparseable,
  UnlabeledCorpus,
  // service
  CatalogNotReady,
  TreeNotReady,
  NotFound,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateTemplateId: return "DuplicateTemplateId";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::UnknownTemplateId: return "UnknownTemplateId";
    case ErrorCode::LabeledTrainAnomaly: return "LabeledTrainAnomaly";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::LlmUnavailable: return "LlmUnavailable";
    case ErrorCode::ExtractionInvalid: return "ExtractionInvalid";
    case ErrorCode::MissingTriple: return "MissingTriple";
    case ErrorCode::DuplicateTriple: return "DuplicateTriple";
    case ErrorCode::UnboundTemplate: return "UnboundTemplate";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::SpanOutOfBounds: return "SpanOutOfBounds";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::CorruptStore: return "CorruptStore";
    case ErrorCode::InvalidEntry: return "InvalidEntry";
    case ErrorCode::LlmCallBudgetExceeded: return "LlmCallBudgetExceeded";
    case ErrorCode::VerdictUnparseable: return "VerdictUnparseable";
    case ErrorCode::UnlabeledCorpus: return "UnlabeledCorpus";
    case ErrorCode::CatalogNotReady: return "CatalogNotReady";
    case ErrorCode::TreeNotReady: return "TreeNotReady";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the engine. `code()` is the stable, typed name
/// surfaced by the CLI and the HTTP error body; `detail()` carries the
/// offending id, line number or raw payload.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail)
      : std::runtime_error(std::string(to_string(code)) + "(" + detail + ")"),
        code_(code),
        detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return to_string(code_); }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace krone
