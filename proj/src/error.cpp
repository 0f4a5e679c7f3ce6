#include "embmark/error.hpp"

namespace embmark {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::UnsupportedKeySize: return "UnsupportedKeySize";
    case Errc::ZeroScale: return "ZeroScale";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::Io: return "IoError";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::EmptyBand: return "EmptyBand";
    case Errc::InsufficientTokens: return "InsufficientTokens";
    case Errc::CandidateExhaustion: return "CandidateExhaustion";
    case Errc::KeyError: return "KeyError";
    case Errc::FormatError: return "FormatError";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::VocabMismatch: return "VocabMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::TokenNotInVocab: return "TokenNotInVocab";
    case Errc::DegenerateCovariance: return "DegenerateCovariance";
    case Errc::NoKnownTokens: return "NoKnownTokens";
    case Errc::DivergedLoss: return "DivergedLoss";
    case Errc::InsufficientTemplates: return "InsufficientTemplates";
    case Errc::DegenerateScores: return "DegenerateScores";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::BundleLoadError: return "BundleLoadError";
    case Errc::EmptyAfterFilter: return "EmptyAfterFilter";
    case Errc::BudgetExhausted: return "BudgetExhausted";
    case Errc::Transport: return "Transport";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::ProviderUnavailable: return "ProviderUnavailable";
    case Errc::BindFailure: return "BindFailure";
  }
  return "Unknown";
}

bool errc_from_name(std::string_view name, Errc& out) {
  for (int i = 0; i <= static_cast<int>(Errc::BindFailure); ++i) {
    if (errc_name(static_cast<Errc>(i)) == name) {
      out = static_cast<Errc>(i);
      return true;
    }
  }
  return false;
}

int exit_code(Errc code) {
  switch (code) {
    case Errc::InvalidArgument:
    case Errc::UnsupportedKeySize:
    case Errc::ZeroScale:
    case Errc::LengthMismatch:
      return 2;
    case Errc::EmptyAfterFilter:
    case Errc::BudgetExhausted:
      return 4;
    case Errc::Transport:
    case Errc::ProtocolError:
    case Errc::ProviderUnavailable:
    case Errc::BindFailure:
      return 5;
    default:
      return 3;
  }
}

}  // namespace embmark
