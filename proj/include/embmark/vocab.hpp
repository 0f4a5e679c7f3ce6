#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace embmark {

// Bijective token <-> row index map. The reserved tokens are appended by the
// toolkit when it builds a vocabulary and are never eligible as triggers or
// replacements.
class Vocab {
 public:
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kEos = "<eos>";

  Vocab() = default;
  // Tokens in row order; throws VocabMismatch on duplicates.
  explicit Vocab(std::vector<std::string> tokens);

  // words followed by <unk>, <eos>
  static Vocab with_reserved(std::vector<std::string> words);

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const { return find(token).has_value(); }
  std::optional<std::size_t> find(std::string_view token) const;
  // Throws TokenNotInVocab naming the token.
  std::size_t at(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<std::size_t> unk_index() const { return find(kUnk); }
  std::optional<std::size_t> eos_index() const { return find(kEos); }
  static bool is_reserved(std::string_view token) { return token == kUnk || token == kEos; }

  // Sidecar format: {token: index}.
  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j, std::size_t expected_size);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t, Hash, std::equal_to<>> index_;
};

}  // namespace embmark
