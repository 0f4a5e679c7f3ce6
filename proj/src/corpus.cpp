#include "embmark/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <locale>
#include <sstream>

#include "embmark/error.hpp"
#include "embmark/kernels.hpp"

namespace embmark {

namespace {

const std::ctype<wchar_t>& wide_ctype() {
  static const std::locale loc = [] {
    try {
      return std::locale("C.UTF-8");
    } catch (const std::runtime_error&) {
      return std::locale::classic();
    }
  }();
  return std::use_facet<std::ctype<wchar_t>>(loc);
}

// Lenient decoder: malformed sequences decode to U+FFFD.
char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + len > s.size()) {
    i = s.size();
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      i += k;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Unicode White_Space property; the locale tables do not cover all of it.
bool is_space(char32_t cp) {
  if (cp < 0x80) return cp == ' ' || (cp >= '\t' && cp <= '\r');
  return cp == 0x85 || cp == 0xA0 || cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
         cp == 0x2029 || cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

bool is_punct(char32_t cp) {
  if (cp < 0x80) return std::ispunct(static_cast<int>(cp)) != 0;
  return wide_ctype().is(std::ctype_base::punct, static_cast<wchar_t>(cp));
}

char32_t to_lower(char32_t cp) {
  if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
  return static_cast<char32_t>(wide_ctype().tolower(static_cast<wchar_t>(cp)));
}

void flush_word(std::vector<char32_t>& word, TokenList& out) {
  std::size_t begin = 0;
  std::size_t end = word.size();
  while (begin < end && is_punct(word[begin])) ++begin;
  while (end > begin && is_punct(word[end - 1])) --end;
  if (begin < end) {
    std::string tok;
    for (std::size_t k = begin; k < end; ++k) encode_utf8(word[k], tok);
    out.push_back(std::move(tok));
  }
  word.clear();
}

bool by_count_then_token(const std::pair<std::string, std::uint64_t>& a,
                         const std::pair<std::string, std::uint64_t>& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  Corpus corpus;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    for (const auto& f : files) {
      std::ifstream in(f, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      corpus.documents.push_back(ss.str());
    }
    return corpus;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open corpus " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    corpus.documents.push_back(std::move(line));
  }
  return corpus;
}

TokenList tokenize(std::string_view text) {
  TokenList out;
  std::vector<char32_t> word;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = decode_utf8(text, i);
    if (is_space(cp)) {
      if (!word.empty()) flush_word(word, out);
    } else {
      word.push_back(to_lower(cp));
    }
  }
  if (!word.empty()) flush_word(word, out);
  return out;
}

TokenList tokenize(std::string_view text, const Vocab& vocab) {
  TokenList out = tokenize(text);
  for (auto& tok : out) {
    if (!vocab.contains(tok)) tok = std::string(Vocab::kUnk);
  }
  return out;
}

nlohmann::json TokenStats::to_json() const {
  nlohmann::json j;
  j["total"] = total;
  j["counts"] = counts;
  return j;
}

TokenStats TokenStats::from_json(const nlohmann::json& j) {
  TokenStats s;
  s.total = j.at("total").get<std::uint64_t>();
  s.counts = j.at("counts").get<std::map<std::string, std::uint64_t>>();
  std::uint64_t sum = 0;
  for (const auto& [tok, c] : s.counts) {
    if (c == 0) throw Error(Errc::FormatError, "token '" + tok + "' has zero count");
    sum += c;
  }
  if (sum != s.total) throw Error(Errc::FormatError, "stats total does not equal the sum of counts");
  return s;
}

TokenStats compute_stats(const Corpus& corpus) {
  if (corpus.documents.empty()) throw Error(Errc::EmptyCorpus, "corpus has no documents");
  auto counts = kernels::parallel::count_tokens(corpus.documents);
  TokenStats stats;
  for (auto& [tok, c] : counts) {
    stats.total += c;
    stats.counts.emplace(tok, c);
  }
  if (stats.total == 0) throw Error(Errc::EmptyCorpus, "corpus contains no tokens");
  return stats;
}

std::uint64_t parse_fraction(std::string_view text) {
  bool percent = false;
  if (!text.empty() && text.back() == '%') {
    percent = true;
    text.remove_suffix(1);
  }
  const auto dot = text.find('.');
  const std::string_view int_part = text.substr(0, dot);
  const std::string_view frac_part = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  const int exponent = percent ? 10 : 12;  // digits of the fixed-point scale
  if (int_part.empty() && frac_part.empty()) throw Error(Errc::InvalidArgument, "empty frequency bound");
  if (static_cast<int>(frac_part.size()) > exponent) {
    throw Error(Errc::InvalidArgument, "frequency bound '" + std::string(text) + "' has too many decimals");
  }
  std::string digits(int_part);
  digits += frac_part;
  digits.append(static_cast<std::size_t>(exponent) - frac_part.size(), '0');
  std::uint64_t value = 0;
  const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (res.ec != std::errc() || res.ptr != digits.data() + digits.size()) {
    throw Error(Errc::InvalidArgument, "malformed frequency bound '" + std::string(text) + "'");
  }
  return value;
}

FrequencyBand FrequencyBand::low() { return {10'000'000ULL, 100'000'000ULL}; }
FrequencyBand FrequencyBand::rare() { return {1'000'000ULL, 10'000'000ULL}; }
FrequencyBand FrequencyBand::high() { return {100'000'000ULL, 1'000'000'000ULL}; }

FrequencyBand FrequencyBand::parse(std::string_view text) {
  if (text == "low") return low();
  if (text == "rare") return rare();
  if (text == "high") return high();
  const auto comma = text.find(',');
  if (comma == std::string_view::npos) {
    throw Error(Errc::InvalidArgument, "band must be low, rare, high or LO,HI; got '" + std::string(text) + "'");
  }
  FrequencyBand band{parse_fraction(text.substr(0, comma)), parse_fraction(text.substr(comma + 1))};
  band.validate();
  return band;
}

void FrequencyBand::validate() const {
  if (!(lo < hi) || hi > kScale) {
    throw Error(Errc::InvalidArgument, "frequency band needs 0 <= lo < hi <= 1, got " + describe());
  }
}

bool FrequencyBand::contains(std::uint64_t count, std::uint64_t total) const {
  const auto scaled = static_cast<unsigned __int128>(count) * kScale;
  return scaled >= static_cast<unsigned __int128>(lo) * total &&
         scaled <= static_cast<unsigned __int128>(hi) * total;
}

std::string FrequencyBand::describe() const {
  std::ostringstream ss;
  ss.precision(6);
  ss << "[" << lo_fraction() * 100.0 << "%, " << hi_fraction() * 100.0 << "%]";
  return ss.str();
}

nlohmann::json FrequencyBand::to_json() const {
  return {{"lo_per_1e12", lo}, {"hi_per_1e12", hi}};
}

FrequencyBand FrequencyBand::from_json(const nlohmann::json& j) {
  FrequencyBand b{j.at("lo_per_1e12").get<std::uint64_t>(), j.at("hi_per_1e12").get<std::uint64_t>()};
  b.validate();
  return b;
}

CandidateSet select_band(const TokenStats& stats, const FrequencyBand& band) {
  band.validate();
  std::vector<std::pair<std::string, std::uint64_t>> hits;
  for (const auto& [tok, c] : stats.counts) {
    if (Vocab::is_reserved(tok)) continue;
    if (band.contains(c, stats.total)) hits.emplace_back(tok, c);
  }
  if (hits.empty()) {
    throw Error(Errc::EmptyBand, "no token has frequency in " + band.describe() +
                                     "; the corpus is too small for this band");
  }
  std::sort(hits.begin(), hits.end(), by_count_then_token);
  CandidateSet out;
  out.band = band;
  out.tokens.reserve(hits.size());
  for (auto& h : hits) out.tokens.push_back(std::move(h.first));
  return out;
}

ReplacementSet select_high_frequency(const TokenStats& stats, std::size_t n,
                                     const std::set<std::string>& exclude,
                                     const std::set<std::string>& stopwords) {
  std::vector<std::pair<std::string, std::uint64_t>> pool;
  for (const auto& [tok, c] : stats.counts) {
    if (Vocab::is_reserved(tok) || exclude.contains(tok) || stopwords.contains(tok)) continue;
    pool.emplace_back(tok, c);
  }
  if (pool.size() < n) {
    throw Error(Errc::InsufficientTokens, "need " + std::to_string(n) + " replacement tokens but only " +
                                              std::to_string(pool.size()) + " remain after exclusions");
  }
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n), pool.end(),
                    by_count_then_token);
  ReplacementSet out;
  for (std::size_t i = 0; i < n; ++i) out.tokens.push_back(pool[i].first);
  return out;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",   "and",  "are",  "as",    "at",   "be",    "been", "but",  "by",
      "can",  "did",  "do",   "does", "for",   "from", "had",   "has",  "have", "he",
      "her",  "his",  "i",    "if",   "in",    "into", "is",    "it",   "its",  "may",
      "more", "no",   "not",  "of",   "on",    "or",   "our",   "she",  "so",   "such",
      "than", "that", "the",  "their", "them", "then", "there", "these", "they", "this",
      "to",   "was",  "we",   "were", "which", "who",  "will",  "with", "would", "you"};
  return words;
}

std::set<std::string> load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open word list " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& tok : tokenize(line)) out.insert(std::move(tok));
  }
  return out;
}

}  // namespace embmark
