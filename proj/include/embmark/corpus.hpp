#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "embmark/vocab.hpp"
#include "json.hpp"

namespace embmark {

using TokenList = std::vector<std::string>;

struct Corpus {
  std::vector<std::string> documents;
};

// A UTF-8 file holds one document per line; a directory holds one document
// per .txt file, read in lexicographic filename order.
Corpus load_corpus(const std::filesystem::path& path);

// Default mode: Unicode lowercase, split on Unicode whitespace, strip leading
// and trailing punctuation, drop empty pieces.
TokenList tokenize(std::string_view text);
// Vocab mode: as above, then out-of-vocabulary tokens become <unk>.
TokenList tokenize(std::string_view text, const Vocab& vocab);

struct TokenStats {
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;

  nlohmann::json to_json() const;
  static TokenStats from_json(const nlohmann::json& j);
};

// Throws EmptyCorpus when there are no documents or no tokens.
TokenStats compute_stats(const Corpus& corpus);

// Occurrence-probability interval [lo, hi], held as exact integers in parts
// per 10^12 so membership tests never round.
struct FrequencyBand {
  static constexpr std::uint64_t kScale = 1'000'000'000'000ULL;

  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  static FrequencyBand low();   // 0.001% .. 0.01%
  static FrequencyBand rare();  // 0.0001% .. 0.001%
  static FrequencyBand high();  // 0.01% .. 0.1%
  // Accepts "low" / "rare" / "high" or "LO,HI" where each bound is a decimal
  // fraction ("0.00001") or percentage ("0.001%").
  static FrequencyBand parse(std::string_view text);

  void validate() const;
  bool contains(std::uint64_t count, std::uint64_t total) const;
  double lo_fraction() const { return static_cast<double>(lo) / kScale; }
  double hi_fraction() const { return static_cast<double>(hi) / kScale; }
  std::string describe() const;

  nlohmann::json to_json() const;
  static FrequencyBand from_json(const nlohmann::json& j);

  bool operator==(const FrequencyBand&) const = default;
};

// Exact decimal to parts-per-10^12; throws InvalidArgument on excess precision.
std::uint64_t parse_fraction(std::string_view text);

struct CandidateSet {
  TokenList tokens;  // descending count, ties by token
  FrequencyBand band;
};

struct ReplacementSet {
  TokenList tokens;
};

// Throws EmptyBand when nothing falls inside the band.
CandidateSet select_band(const TokenStats& stats, const FrequencyBand& band);

// Throws InsufficientTokens when fewer than n tokens survive the exclusions.
ReplacementSet select_high_frequency(const TokenStats& stats, std::size_t n,
                                     const std::set<std::string>& exclude,
                                     const std::set<std::string>& stopwords);

const std::set<std::string>& default_stopwords();
std::set<std::string> load_word_list(const std::filesystem::path& path);

}  // namespace embmark
