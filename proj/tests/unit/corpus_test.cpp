#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "embmark/corpus.hpp"
#include "embmark/crypto.hpp"
#include "embmark/error.hpp"
#include "embmark/rng.hpp"
#include "support.hpp"

namespace embmark {
namespace {

using ::testing::ElementsAre;

TEST(Tokenize, DefaultMode) {
  EXPECT_EQ(tokenize("The cat SAT."), (TokenList{"the", "cat", "sat"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("aspirin aspirin dosage"), (TokenList{"aspirin", "aspirin", "dosage"}));
  EXPECT_EQ(tokenize("  (hello),\tworld!\n\"x-ray\" ... "), (TokenList{"hello", "world", "x-ray"}));
}

TEST(Tokenize, UnicodeLowercaseAndWhitespace) {
  // U+00C9 -> U+00E9, U+3000 ideographic space separates.
  EXPECT_EQ(tokenize("\xC3\x89t\xC3\xA9\xE3\x80\x80" "Caf\xC3\x89"), (TokenList{"\xC3\xA9t\xC3\xA9", "caf\xC3\xA9"}));
}

TEST(Tokenize, VocabModeMapsUnknown) {
  const Vocab v = Vocab::with_reserved({"the", "cat"});
  EXPECT_EQ(tokenize("The dog cat", v), (TokenList{"the", "<unk>", "cat"}));
}

TEST(Stats, HandCounts) {
  auto s = compute_stats(Corpus{{"a b a"}});
  EXPECT_EQ(s.total, 3u);
  EXPECT_EQ(s.counts, (std::map<std::string, std::uint64_t>{{"a", 2}, {"b", 1}}));
  s = compute_stats(Corpus{{"x", "x", "y"}});
  EXPECT_EQ(s.counts, (std::map<std::string, std::uint64_t>{{"x", 2}, {"y", 1}}));
}

TEST(Stats, EmptyCorpusErrors) {
  try {
    compute_stats(Corpus{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyCorpus);
  }
  try {
    compute_stats(Corpus{{"  ", "..."}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyCorpus);
  }
}

Corpus zipf_corpus(std::size_t docs, std::uint64_t seed) {
  const CounterRng rng(seed);
  std::vector<double> cdf;
  double z = 0;
  for (int r = 1; r <= 2000; ++r) cdf.push_back(z += 1.0 / r);
  Corpus c;
  std::uint64_t k = 0;
  for (std::size_t d = 0; d < docs; ++d) {
    std::string doc;
    for (int t = 0; t < 40; ++t) {
      const double u = rng.uniform_at(k++) * z;
      const auto r = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
      doc += (t % 7 == 0 ? "Tok" : "tok") + std::to_string(r) + (t % 5 == 0 ? ", " : " ");
    }
    c.documents.push_back(doc);
  }
  return c;
}

TEST(Stats, ZipfCountsMatchRecount) {
  const auto corpus = zipf_corpus(1000, 3);
  const auto s = compute_stats(corpus);
  std::map<std::string, std::uint64_t> oracle;
  std::uint64_t total = 0;
  for (const auto& d : corpus.documents) {
    for (const auto& t : tokenize(d)) {
      ++oracle[t];
      ++total;
    }
  }
  EXPECT_EQ(s.counts, oracle);
  EXPECT_EQ(s.total, total);
  EXPECT_EQ(TokenStats::from_json(s.to_json()).counts, s.counts);
}

TEST(Stats, JsonRejectsInconsistentTotal) {
  nlohmann::json j = {{"total", 5}, {"counts", {{"a", 2}}}};
  EXPECT_THROW(TokenStats::from_json(j), Error);
}

TEST(Band, ParseNamedAndExplicit) {
  EXPECT_EQ(FrequencyBand::parse("low"), FrequencyBand::low());
  const auto b = FrequencyBand::parse("0.001%,0.01%");
  EXPECT_EQ(b, FrequencyBand::low());
  EXPECT_EQ(b.lo, 10'000'000u);
  EXPECT_EQ(FrequencyBand::parse("0.00001,0.0001"), FrequencyBand::low());
  EXPECT_THROW(FrequencyBand::parse("0.1,0.01"), Error);
  EXPECT_THROW(FrequencyBand::parse("nonsense"), Error);
  EXPECT_THROW(parse_fraction("0.0000000000001"), Error);
}

TEST(Band, ExactBoundaryMembership) {
  const auto band = FrequencyBand::low();
  EXPECT_TRUE(band.contains(1, 100'000));    // exactly 0.001%
  EXPECT_TRUE(band.contains(10, 100'000));   // exactly 0.01%
  EXPECT_FALSE(band.contains(11, 100'000));
  EXPECT_TRUE(band.contains(5, 100'000));
  EXPECT_FALSE(band.contains(5000, 100'000));
}

TEST(Band, SelectIncludesInBandToken) {
  TokenStats s;
  s.counts = {{"qx", 5}, {"the", 5000}, {"filler", 94'995}};
  s.total = 100'000;
  const auto c = select_band(s, FrequencyBand::low());
  EXPECT_EQ(c.tokens, (TokenList{"qx"}));
}

TEST(Band, MembershipMatchesExhaustiveFilter) {
  const auto s = compute_stats(zipf_corpus(1000, 4));
  const FrequencyBand band = FrequencyBand::parse("0.01%,0.1%");
  const auto c = select_band(s, band);
  std::vector<std::pair<std::string, std::uint64_t>> oracle;
  for (const auto& [t, n] : s.counts) {
    // n / total in [lo, hi] in exact integer arithmetic
    const unsigned __int128 lhs = static_cast<unsigned __int128>(n) * FrequencyBand::kScale;
    if (lhs >= static_cast<unsigned __int128>(band.lo) * s.total &&
        lhs <= static_cast<unsigned __int128>(band.hi) * s.total)
      oracle.emplace_back(t, n);
  }
  std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  TokenList expected;
  for (const auto& [t, n] : oracle) expected.push_back(t);
  ASSERT_FALSE(expected.empty());
  EXPECT_EQ(c.tokens, expected);
}

TEST(Band, EmptyBandErrors) {
  TokenStats s;
  s.counts = {{"a", 1}};
  s.total = 1;
  try {
    select_band(s, FrequencyBand::low());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyBand);
  }
}

TEST(HighFrequency, TopNWithExclusions) {
  TokenStats s;
  s.counts = {{"a", 10}, {"b", 9}, {"c", 8}};
  s.total = 27;
  EXPECT_EQ(select_high_frequency(s, 2, {}, {}).tokens, (TokenList{"a", "b"}));
  EXPECT_EQ(select_high_frequency(s, 2, {"a"}, {}).tokens, (TokenList{"b", "c"}));
  EXPECT_EQ(select_high_frequency(s, 2, {}, {"b"}).tokens, (TokenList{"a", "c"}));
  EXPECT_THROW(select_high_frequency(s, 3, {"a"}, {}), Error);
}

TEST(HighFrequency, ZipfMatchesSortOracle) {
  const auto s = compute_stats(zipf_corpus(1000, 5));
  const auto& stop = default_stopwords();
  std::vector<std::pair<std::string, std::uint64_t>> all(s.counts.begin(), s.counts.end());
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const auto got = select_high_frequency(s, 8, {"tok0"}, stop);
  TokenList expected;
  for (const auto& [t, n] : all)
    if (t != "tok0" && !stop.count(t) && expected.size() < 8) expected.push_back(t);
  EXPECT_EQ(got.tokens, expected);
}

TEST(HighFrequency, DisjointFromNonOverlappingBand) {
  const auto s = compute_stats(zipf_corpus(1000, 6));
  const auto cand = select_band(s, FrequencyBand::parse("0.001%,0.05%"));
  const auto rep = select_high_frequency(s, 8, {}, {});
  for (const auto& t : rep.tokens) EXPECT_EQ(std::count(cand.tokens.begin(), cand.tokens.end(), t), 0);
}

TEST(LoadCorpus, FileAndDirectory) {
  const auto dir = test::scratch("corpus");
  write_text_file(dir / "lines.txt", "one two\r\nthree\n");
  EXPECT_EQ(load_corpus(dir / "lines.txt").documents, (std::vector<std::string>{"one two", "three"}));
  std::filesystem::create_directories(dir / "docs");
  write_text_file(dir / "docs" / "b.txt", "second doc\nstill second");
  write_text_file(dir / "docs" / "a.txt", "first");
  write_text_file(dir / "docs" / "ignored.md", "nope");
  EXPECT_EQ(load_corpus(dir / "docs").documents, (std::vector<std::string>{"first", "second doc\nstill second"}));
  EXPECT_THROW(load_corpus(dir / "missing.txt"), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace embmark
