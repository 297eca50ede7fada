#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace placerec {

enum class ErrorKind {
  // corpus
  MissingField,
  UnknownLabel,
  ParseError,
  InsufficientClassData,
  NoLabeledRecords,
  InvalidSpec,
  // features
  ImageTooSmall,
  NonFiniteInput,
  TooFewSamples,
  EmptyDescriptorList,
  // models
  TooFewHistograms,
  DegenerateComponent,
  EmptyHistogram,
  NoData,
  WindowLargerThanGrid,
  MissingHistogram,
  // temporal
  NonPositiveLambda,
  DimensionMismatch,
  InvalidHyperparameter,
  // eval
  LengthMismatch,
  EmptyInput,
  LabelOutOfRange,
  // io
  IoError,
};

inline constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InsufficientClassData: return "InsufficientClassData";
    case ErrorKind::NoLabeledRecords: return "NoLabeledRecords";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::EmptyDescriptorList: return "EmptyDescriptorList";
    case ErrorKind::TooFewHistograms: return "TooFewHistograms";
    case ErrorKind::DegenerateComponent: return "DegenerateComponent";
    case ErrorKind::EmptyHistogram: return "EmptyHistogram";
    case ErrorKind::NoData: return "NoData";
    case ErrorKind::WindowLargerThanGrid: return "WindowLargerThanGrid";
    case ErrorKind::MissingHistogram: return "MissingHistogram";
    case ErrorKind::NonPositiveLambda: return "NonPositiveLambda";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidHyperparameter: return "InvalidHyperparameter";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// All library failures are reported as this exception; `kind()` is the
/// machine-checkable part, `what()` carries context for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Same kind, message prefixed with where it happened.
  Error with_context(const std::string& context) const {
    Error e(*this);
    e.context_ = context + ": " + std::runtime_error::what();
    return e;
  }

  const char* what() const noexcept override {
    return context_.empty() ? std::runtime_error::what() : context_.c_str();
  }

 private:
  ErrorKind kind_;
  std::string context_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace placerec
