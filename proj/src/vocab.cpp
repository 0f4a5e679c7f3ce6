#include "embmark/vocab.hpp"

#include "embmark/error.hpp"

namespace embmark {

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw Error(Errc::VocabMismatch, "duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocab Vocab::with_reserved(std::vector<std::string> words) {
  words.emplace_back(kUnk);
  words.emplace_back(kEos);
  return Vocab(std::move(words));
}

std::optional<std::size_t> Vocab::find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocab::at(std::string_view token) const {
  if (auto idx = find(token)) return *idx;
  throw Error(Errc::TokenNotInVocab, "token '" + std::string(token) + "' is not in the vocabulary");
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) j[tokens_[i]] = i;
  return j;
}

Vocab Vocab::from_json(const nlohmann::json& j, std::size_t expected_size) {
  if (!j.is_object()) throw Error(Errc::FormatError, "vocab sidecar must be a JSON object");
  if (j.size() != expected_size) {
    throw Error(Errc::VocabMismatch, "vocab has " + std::to_string(j.size()) +
                                         " entries but matrix has " +
                                         std::to_string(expected_size) + " rows");
  }
  std::vector<std::string> tokens(expected_size);
  std::vector<bool> seen(expected_size, false);
  for (const auto& [tok, idx] : j.items()) {
    if (!idx.is_number_unsigned()) throw Error(Errc::FormatError, "vocab index for '" + tok + "' is not an unsigned integer");
    const auto i = idx.get<std::size_t>();
    if (i >= expected_size || seen[i]) {
      throw Error(Errc::VocabMismatch, "vocab index " + std::to_string(i) + " for '" + tok +
                                           "' is out of range or duplicated");
    }
    seen[i] = true;
    tokens[i] = tok;
  }
  return Vocab(std::move(tokens));
}

}  // namespace embmark
