#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace embmark {

enum class Errc {
  // configuration
  InvalidArgument,
  UnsupportedKeySize,
  ZeroScale,
  LengthMismatch,
  // data
  Io,
  EmptyCorpus,
  EmptyBand,
  InsufficientTokens,
  CandidateExhaustion,
  KeyError,
  FormatError,
  NonFiniteValue,
  VocabMismatch,
  ShapeMismatch,
  TokenNotInVocab,
  DegenerateCovariance,
  NoKnownTokens,
  DivergedLoss,
  InsufficientTemplates,
  DegenerateScores,
  ZeroVector,
  BundleLoadError,
  // verification aborted
  EmptyAfterFilter,
  BudgetExhausted,
  // transport
  Transport,
  ProtocolError,
  ProviderUnavailable,
  BindFailure,
};

std::string_view errc_name(Errc code);
// Inverse of errc_name; false when the name is unknown.
bool errc_from_name(std::string_view name, Errc& out);

// Process exit code for the error class: 2 config, 3 data,
// 4 verification aborted, 5 transport.
int exit_code(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace embmark
