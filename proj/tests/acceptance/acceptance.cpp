// Acceptance gate: one PASS/FAIL line per criterion on the synthetic suite.
// Usage: embmark_acceptance <work-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "embmark/attacks.hpp"
#include "embmark/crypto.hpp"
#include "embmark/error.hpp"
#include "embmark/harness.hpp"
#include "embmark/pipeline.hpp"
#include "embmark/rng.hpp"
#include "embmark/synth.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace embmark;

namespace {

// Pinned tolerances.
constexpr double kDeriveSeconds = 5.0;
constexpr double kPerfectWacc = 100.0;
constexpr double kMinWacc = 70.0;
constexpr double kMaxFpr = 25.0;
constexpr double kMinGap = 45.0;
constexpr double kSeedTolerance = 5.0;  // +- points around the seed mean
constexpr double kMaxFineTuneDrop = 15.0;
constexpr double kDriftRatio = 0.1;
constexpr double kReinitAccuracyBand = 10.0;  // points around 100 / C
constexpr double kInt8Band = 10.0;
constexpr int kYoudenInstances = 100;
constexpr double kGradientRelTol = 1e-4;
constexpr double kGradientStep = 1e-3;
constexpr double kEmbedSeconds = 1.0;
constexpr int kStealthSamples = 10'000;
constexpr double kStealthLo = 5.0, kStealthHi = 95.0;
constexpr double kDistillAgreement = 0.90;
constexpr std::size_t kPairs = 8;

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!pass) ++failures;
}

std::string num(double x, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : "n/a"; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool within_ulp(float got, double expected) {
  const auto e = static_cast<float>(expected);
  if (got == e) return true;
  return std::fabs(got - e) <= std::fabs(std::nextafter(e, std::numeric_limits<float>::infinity()) - e);
}

// Independent noise recomputation: SplitMix64 counter stream and an inverse
// normal CDF by bisection on erfc.
double oracle_normal(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + (k + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  const double u = (static_cast<double>(z >> 12) + 0.5) * std::ldexp(1.0, -52);
  const double tail = std::min(u, 1.0 - u);
  double lo = -40, hi = 0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < tail ? lo : hi) = mid;
  }
  return u > 0.5 ? -0.5 * (lo + hi) : 0.5 * (lo + hi);
}

std::vector<float> flat(const ToyModel& m) {
  std::vector<float> out(m.embeddings.data().begin(), m.embeddings.data().end());
  out.insert(out.end(), m.head_w.begin(), m.head_w.end());
  out.insert(out.end(), m.head_b.begin(), m.head_b.end());
  out.insert(out.end(), m.context_w.begin(), m.context_w.end());
  return out;
}

struct Suite {
  SuitePaths paths;
  ToyModel reference;
  Corpus corpus, general, heldout;
  TemplateMap templates;
  ToyDataset train, test;
};

// WACC of one suspect under a fixed NLG threshold.
struct Wacc {
  std::optional<double> nlu, nlg;
  std::string nlu_error;
};

class Verifier {
 public:
  Verifier(const Suite& s, const MappingSet& phi)
      : suite_(s), phi_(phi), set_(build_verification_set(phi, s.templates)),
        provider_(s.reference.embeddings),
        synonyms_(build_synonyms(s.reference.embeddings, phi, SynonymTarget::Trigger)) {}

  EvalResult evaluate_full(const ToyModel& suspect, const ToyModel& owner_copy) {
    return evaluate(suspect, suite_.reference, owner_copy, set_, phi_, provider_, EvalOptions{});
  }

  Wacc wacc(const ToyModel& suspect, double gamma) {
    Wacc w;
    LocalModel m(suspect);
    try {
      w.nlu = verify_nlu(m, set_, phi_, synonyms_).wacc;
    } catch (const Error& e) {
      w.nlu_error = std::string(errc_name(e.code()));
    }
    w.nlg = wacc_nlg(m, set_, phi_, gamma, provider_, NlgOptions{}).wacc;
    return w;
  }

  const VerificationSet& set() const { return set_; }
  const std::vector<std::string>& synonyms() const { return synonyms_; }
  SimilarityProvider& provider() { return provider_; }

 private:
  const Suite& suite_;
  MappingSet phi_;
  VerificationSet set_;
  PooledEmbeddingProvider provider_;
  std::vector<std::string> synonyms_;
};

void derivation_determinism(const TokenStats& stats) {
  const auto id = test::owner_identity(1);
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = make_manifest(stats, id, FrequencyBand::low(), kPairs, 0);
  const auto b = make_manifest(stats, id, FrequencyBand::low(), kPairs, 0);
  const auto pub = id.private_key.public_key();
  const bool audit_ok = audit_derivation(pub, a.records, a.candidates, id.owner).ok;
  const double elapsed = seconds_since(t0);
  const bool identical = a.to_json().dump() == b.to_json().dump();

  std::size_t tampers = 0, detected = 0;
  auto probe = [&](std::vector<DerivationRecord> bad) {
    ++tampers;
    if (!audit_derivation(pub, bad, a.candidates, id.owner).ok) ++detected;
  };
  for (std::size_t r = 0; r < a.records.size(); ++r) {
    for (std::size_t k = 0; k < a.records[r].message.size(); ++k) {
      auto bad = a.records;
      bad[r].message[k] ^= 0x01;
      probe(bad);
    }
    for (std::size_t k = 0; k < a.records[r].signature.size(); ++k) {
      auto bad = a.records;
      bad[r].signature[k] ^= 0x01;
      probe(bad);
    }
    for (std::size_t k = 0; k < a.records[r].digest.size(); ++k) {
      auto bad = a.records;
      bad[r].digest[k] ^= 0x01;
      probe(bad);
    }
    for (std::size_t k = 0; k < a.records[r].token.size(); ++k) {
      auto bad = a.records;
      bad[r].token[k] ^= 0x01;
      probe(bad);
    }
  }
  report("derivation determinism and audit", identical && audit_ok && detected == tampers && elapsed < kDeriveSeconds,
         "identical=" + std::to_string(identical) + " audit=" + std::to_string(audit_ok) + " tampers detected " +
             std::to_string(detected) + "/" + std::to_string(tampers) + " derive+audit " + num(elapsed, 3) +
             " s (limit " + num(kDeriveSeconds, 1) + " s)");
}

void derivation_oracle() {
  struct Golden {
    int key;
    std::size_t candidates;
    std::vector<std::uint64_t> indices;
  };
  // From tests/oracles/derivation_oracle.py, owner "acme-med".
  const std::vector<Golden> goldens = {
      {1, 100, {59, 46, 73, 16, 51, 54, 58, 19}},      {1, 500, {59, 446, 373, 459, 351, 54, 358, 219}},
      {2, 100, {58, 5, 14, 48, 43, 61, 79, 81}},       {2, 500, {158, 105, 14, 248, 243, 461, 279, 481}},
      {3, 100, {22, 72, 76, 52, 82, 54, 66, 63}},      {3, 500, {222, 272, 276, 52, 482, 454, 166, 363}},
  };
  std::size_t matched = 0;
  for (const auto& g : goldens) {
    CandidateSet c;
    c.tokens = test::words(g.candidates, "c");
    c.band = FrequencyBand::low();
    const auto t = derive_trigger_set(test::owner_identity(g.key), c, kPairs);
    std::vector<std::uint64_t> got;
    for (const auto& r : t.records) got.push_back(r.index);
    if (got == g.indices) ++matched;
  }
  report("derivation oracle", matched == goldens.size(),
         std::to_string(matched) + "/" + std::to_string(goldens.size()) + " key x candidate-set cases match");
}

void embedding_exactness(const EmbeddingMatrix& original, const MappingSet& phi) {
  const auto plain = embed_watermark(original, phi, WatermarkParams{1.0, 0.0, 0.0, 0});
  bool bit_equal = true;
  for (const auto& p : phi.pairs) {
    const auto t = plain.row(p.trigger), r = original.row(p.replacement);
    bit_equal = bit_equal && std::equal(t.begin(), t.end(), r.begin());
  }
  const WatermarkParams defaults;
  const auto marked = embed_watermark(original, phi, defaults);
  const std::size_t d = original.dim();
  std::size_t beyond_ulp = 0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const auto src = original.row(phi.pairs[i].replacement);
    const auto dst = marked.row(phi.pairs[i].trigger);
    for (std::size_t j = 0; j < d; ++j) {
      const double expected = src[j] / defaults.lambda + defaults.mu +
                              std::sqrt(defaults.sigma2) * oracle_normal(defaults.noise_seed, i * d + j);
      if (!within_ulp(dst[j], expected)) ++beyond_ulp;
    }
  }
  std::size_t differing = 0;
  for (std::size_t r = 0; r < original.rows(); ++r) {
    const auto a = original.row(r), b = marked.row(r);
    if (!std::equal(a.begin(), a.end(), b.begin())) ++differing;
  }
  report("embedding exactness", bit_equal && beyond_ulp == 0 && differing == phi.size(),
         "lambda=1 rows bit-equal=" + std::to_string(bit_equal) + ", entries beyond 1 ulp " +
             std::to_string(beyond_ulp) + "/" + std::to_string(phi.size() * d) + ", rows differing " +
             std::to_string(differing) + " (n=" + std::to_string(phi.size()) + ")");
}

void stealth(const EmbeddingMatrix& marked, const WatermarkManifest& manifest) {
  const double observed = pair_distance(marked, manifest.mapping).mean_distance;
  std::set<std::string> triggers;
  for (const auto& p : manifest.mapping.pairs) triggers.insert(p.trigger);
  std::vector<std::string> band;
  for (const auto& t : manifest.candidates.tokens)
    if (!triggers.contains(t)) band.push_back(t);
  const auto& repl = manifest.replacements.tokens;
  CounterRng rng(2024);
  std::vector<double> means;
  for (int s = 0; s < kStealthSamples; ++s) {
    double sum = 0.0;
    for (std::size_t k = 0; k < kPairs; ++k) {
      const auto& a = band[rng.below(band.size())];
      const auto& b = repl[rng.below(repl.size())];
      sum += l2_distance(marked.row(a), marked.row(b));
    }
    means.push_back(sum / kPairs);
  }
  std::sort(means.begin(), means.end());
  auto pct = [&](double q) { return means[static_cast<std::size_t>(q / 100.0 * (means.size() - 1))]; };
  const double lo = pct(kStealthLo), hi = pct(kStealthHi);
  report("[extra] stealth", observed >= lo && observed <= hi,
         "watermarked pair mean " + num(observed, 4) + " vs random-pair p5..p95 [" + num(lo, 4) + ", " + num(hi, 4) +
             "] over " + std::to_string(kStealthSamples) + " samples");
}

void perfect_watermark(Verifier& v, const ToyModel& reference, const MappingSet& phi) {
  const auto wm = watermark_model(reference, phi, WatermarkParams{1.0, 0.0, 0.0, 0});
  const auto r = v.evaluate_full(wm, wm);
  const bool pass = r.nlu_wacc.value() == kPerfectWacc && r.nlg_wacc.value() == kPerfectWacc;
  report("perfect watermark", pass, "WACC_NLU=" + opt(r.nlu_wacc.value()) + " WACC_NLG=" + opt(r.nlg_wacc.value()));
}

struct Baseline {
  ToyModel model;
  double gamma = 0.0;
  double nlu = 0.0, nlg = 0.0;
  double fpr_nlu = 0.0, fpr_nlg = 0.0;
};

Baseline separation(Verifier& v, const ToyModel& reference, const MappingSet& phi) {
  Baseline base;
  std::vector<double> nlu, nlg;
  bool bands = true;
  std::string detail;
  for (std::uint64_t seed : {0, 1, 2}) {
    WatermarkParams params;
    params.noise_seed = seed;
    auto wm = watermark_model(reference, phi, params);
    const auto r = v.evaluate_full(wm, wm);
    const double wn = r.nlu_wacc.value().value_or(0), fn = r.nlu_fpr.value().value_or(100);
    const double wg = r.nlg_wacc.value().value_or(0), fg = r.nlg_fpr.value().value_or(100);
    bands = bands && wn >= kMinWacc && wg >= kMinWacc && fn <= kMaxFpr && fg <= kMaxFpr && wn - fn >= kMinGap &&
            wg - fg >= kMinGap;
    nlu.push_back(wn);
    nlg.push_back(wg);
    detail += " seed" + std::to_string(seed) + "[NLU " + num(wn) + "/" + num(fn) + " NLG " + num(wg) + "/" + num(fg) +
              "]";
    if (seed == 0) {
      base = {std::move(wm), r.calibration->gamma, wn, wg, fn, fg};
    }
  }
  auto spread_ok = [](const std::vector<double>& xs) {
    double mean = 0;
    for (double x : xs) mean += x / xs.size();
    return std::all_of(xs.begin(), xs.end(), [&](double x) { return std::fabs(x - mean) <= kSeedTolerance; });
  };
  const bool stable = spread_ok(nlu) && spread_ok(nlg);
  report("default-watermark separation", bands && stable,
         "WACC/FPR" + detail + " gamma=" + num(base.gamma, 4) + " seed spread within +-" + num(kSeedTolerance, 0) +
             "=" + std::to_string(stable));
  return base;
}

void fine_tune_persistence(Verifier& v, const Suite& s, const Baseline& base) {
  FineTuneConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.lr_head = 0.1;
  const auto ft = fine_tune(base.model, s.train, cfg);
  const auto w = v.wacc(ft, base.gamma);
  const auto drift = measure_drift(base.model, ft, s.train);
  const double drop_nlu = base.nlu - w.nlu.value_or(0), drop_nlg = base.nlg - w.nlg.value_or(0);
  const bool pass = drop_nlu <= kMaxFineTuneDrop && drop_nlg <= kMaxFineTuneDrop &&
                    drift.embedding_row_drift < drift.head_row_drift * kDriftRatio;
  report("fine-tune persistence", pass,
         "WACC_NLU " + num(base.nlu) + " -> " + opt(w.nlu) + " WACC_NLG " + num(base.nlg) + " -> " + opt(w.nlg) +
             ", drift embedding " + num(drift.embedding_row_drift, 5) + " vs head " + num(drift.head_row_drift, 5) +
             " (ratio " + num(drift.embedding_row_drift / drift.head_row_drift, 5) + ", limit " +
             num(kDriftRatio, 2) + "); toy accuracy " + num(100 * accuracy(ft, s.test.classification)));
}

void attack_properties(Verifier& v, const Suite& s, const MappingSet& phi, const Baseline& base) {
  const auto& wm = base.model;
  std::vector<std::string> notes;
  bool pass = true;

  // prune
  const bool prune0 = prune_global(wm, 0.0) == wm;
  const auto P = wm.parameter_count();
  const auto before = flat(wm);
  const auto zeros_before = static_cast<std::size_t>(std::count(before.begin(), before.end(), 0.0f));
  const auto pruned = flat(prune_global(wm, 0.3));
  const auto zeros = static_cast<std::size_t>(std::count(pruned.begin(), pruned.end(), 0.0f));
  const auto k = static_cast<std::size_t>(std::floor(0.3 * static_cast<double>(P)));
  const bool prune_exact = zeros_before == 0 && zeros == k;
  pass = pass && prune0 && prune_exact;
  notes.push_back("prune(0)=identity " + std::to_string(prune0) + ", prune(0.3) zeros " + std::to_string(zeros) + "/" +
                  std::to_string(k));

  // quantize: per-tensor bound and idempotence
  const auto q = quantize(wm, 8);
  const auto qq = quantize(q, 8);
  std::size_t bound_violations = 0, idem_violations = 0;
  auto check_tensor = [&](std::span<const float> x, std::span<const float> xq, std::span<const float> xqq) {
    float peak = 0;
    for (float a : x) peak = std::max(peak, std::fabs(a));
    const double s_half = 0.5 * peak / 127.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float ulp = std::fabs(std::nextafter(xq[i], std::numeric_limits<float>::infinity()) - xq[i]);
      if (std::fabs(static_cast<double>(x[i]) - xq[i]) > s_half + ulp) ++bound_violations;
      if (!within_ulp(xqq[i], xq[i])) ++idem_violations;
    }
  };
  check_tensor(wm.embeddings.data(), q.embeddings.data(), qq.embeddings.data());
  check_tensor(wm.head_w, q.head_w, qq.head_w);
  check_tensor(wm.head_b, q.head_b, qq.head_b);
  check_tensor(wm.context_w, q.context_w, qq.context_w);
  pass = pass && bound_violations == 0 && idem_violations == 0;
  notes.push_back("INT8 bound violations " + std::to_string(bound_violations) + ", idempotence violations " +
                  std::to_string(idem_violations));

  // fuse
  const auto fused = flat(fuse(wm, s.reference, 0.5));
  const auto ref = flat(s.reference);
  std::size_t fuse_bad = 0;
  for (std::size_t i = 0; i < fused.size(); ++i)
    if (!within_ulp(fused[i], 0.5 * before[i] + 0.5 * ref[i])) ++fuse_bad;
  pass = pass && fuse_bad == 0;
  notes.push_back("fuse entries beyond 1 ulp " + std::to_string(fuse_bad));

  // linear transform on the lambda=1 watermark
  const auto wm1 = watermark_model(s.reference, phi, WatermarkParams{1.0, 0.0, 0.0, 0});
  const auto lt = linear_transform_embeddings(wm1, 2.0, 0.3);
  bool rows_equal = true;
  for (const auto& p : phi.pairs) {
    const auto a = lt.embeddings.row(p.trigger), b = lt.embeddings.row(p.replacement);
    rows_equal = rows_equal && std::equal(a.begin(), a.end(), b.begin());
  }
  const auto lt_eval = v.evaluate_full(lt, wm1);
  const bool lt_invariant = lt_eval.nlu_wacc.value() == kPerfectWacc && lt_eval.nlg_wacc.value() == kPerfectWacc;
  pass = pass && rows_equal && lt_invariant;
  notes.push_back("linear transform rows equal " + std::to_string(rows_equal) + ", lambda=1 WACC NLU/NLG " +
                  opt(lt_eval.nlu_wacc.value()) + "/" + opt(lt_eval.nlg_wacc.value()));

  // reinit
  const auto re = reinit_embeddings(wm, 0);
  const double acc = 100.0 * accuracy(re, s.test.classification);
  const double chance = 100.0 / static_cast<double>(wm.classes());
  const auto w = v.wacc(re, base.gamma);
  const bool acc_ok = std::fabs(acc - chance) <= kReinitAccuracyBand;
  const bool nlu_ok = !w.nlu || *w.nlu <= kMaxFpr;  // an emptied filter leaves nothing to match
  const bool nlg_ok = w.nlg && *w.nlg <= kMaxFpr;
  pass = pass && acc_ok && nlu_ok && nlg_ok;
  notes.push_back("reinit accuracy " + num(acc) + " (target " + num(chance) + " +- " + num(kReinitAccuracyBand, 0) +
                  "), WACC NLU " + (w.nlu ? num(*w.nlu) : w.nlu_error) + " NLG " + opt(w.nlg) + " (FPR band <= " +
                  num(kMaxFpr, 0) + ")");

  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
  report("attack suite properties", pass, detail);
}

void int8_band(Verifier& v, const Baseline& base) {
  const auto w = v.wacc(quantize(base.model, 8), base.gamma);
  const double dn = w.nlu.value_or(-1000) - base.nlu, dg = w.nlg.value_or(-1000) - base.nlg;
  report("INT8 quantization band", std::fabs(dn) <= kInt8Band && std::fabs(dg) <= kInt8Band,
         "WACC_NLU " + num(base.nlu) + " -> " + opt(w.nlu) + ", WACC_NLG " + num(base.nlg) + " -> " + opt(w.nlg) +
             " (band +-" + num(kInt8Band, 0) + ")");
}

void youden_oracle() {
  int matched = 0;
  for (int trial = 0; trial < kYoudenInstances; ++trial) {
    CounterRng rng(static_cast<std::uint64_t>(trial), 7);
    const std::size_t np = 5 + rng.below(60), nn = 5 + rng.below(60);
    const double grid = 5.0 + static_cast<double>(rng.below(40));
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < np; ++i) pos.push_back(std::round(grid * (0.6 + 0.25 * rng.normal())) / grid);
    for (std::size_t i = 0; i < nn; ++i) neg.push_back(std::round(grid * (0.4 + 0.25 * rng.normal())) / grid);
    const auto cal = calibrate_threshold(pos, neg);
    // O(n^2): every midpoint candidate, each scored by a full pass.
    std::vector<double> all = pos;
    all.insert(all.end(), neg.begin(), neg.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    std::vector<double> cands = {-std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i + 1 < all.size(); ++i) cands.push_back(all[i] + (all[i + 1] - all[i]) / 2);
    cands.push_back(std::numeric_limits<double>::infinity());
    long best = std::numeric_limits<long>::min();
    double best_g = 0;
    for (double g : cands) {
      long tp = 0, fp = 0;
      for (double x : pos) tp += x > g;
      for (double x : neg) fp += x > g;
      const long j = tp * static_cast<long>(nn) - fp * static_cast<long>(np);
      if (j >= best) {
        best = j;
        best_g = g;
      }
    }
    const double youden = static_cast<double>(best) / static_cast<double>(np * nn);
    if (cal.gamma == best_g && cal.youden == youden) ++matched;
  }
  report("Youden oracle", matched == kYoudenInstances,
         std::to_string(matched) + "/" + std::to_string(kYoudenInstances) + " instances equal the brute force");
}

void gradient_check() {
  auto m = test::random_model(6, 4, 2, 6, false);
  for (float& w : m.head_w) w *= 0.5f;
  const std::vector<ClassificationItem> items = {
      {{"w0", "w1"}, 0}, {{"w2", "w3", "w1"}, 1}, {{"w4"}, 1}, {{"w5", "w0"}, 0}};
  const auto g = classifier_gradients(m, items);
  double worst = 0.0;
  std::size_t checked = 0;
  auto check = [&](float& slot, double analytic) {
    const float orig = slot;
    const auto hi = static_cast<float>(orig + kGradientStep), lo = static_cast<float>(orig - kGradientStep);
    slot = hi;
    const double l_hi = classifier_gradients(m, items).loss;
    slot = lo;
    const double l_lo = classifier_gradients(m, items).loss;
    slot = orig;
    const double numeric = (l_hi - l_lo) / (static_cast<double>(hi) - static_cast<double>(lo));
    const double scale = std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
    worst = std::max(worst, std::fabs(analytic - numeric) / scale);
    ++checked;
  };
  for (std::size_t k = 0; k < m.head_w.size(); ++k) check(m.head_w[k], g.head_w[k]);
  for (std::size_t k = 0; k < m.head_b.size(); ++k) check(m.head_b[k], g.head_b[k]);
  for (const auto& [r, grad] : g.rows)
    for (std::size_t j = 0; j < 4; ++j) check(m.embeddings.row(r)[j], grad[j]);
  report("gradient check", worst <= kGradientRelTol,
         std::to_string(checked) + " partials, worst relative error " + num(worst * 1e6, 3) + "e-6 (limit " +
             num(kGradientRelTol * 1e4, 0) + "e-4)");
}

void http_transparency(Verifier& v, const MappingSet& phi, const Baseline& base) {
  ModelServer server(base.model, "");
  server.start();
  QueryBudget budget;
  RemoteModel remote(server.base_url(), budget);
  LocalModel local(base.model);
  const auto nlu_l = verify_nlu(local, v.set(), phi, v.synonyms());
  const auto nlu_r = verify_nlu(remote, v.set(), phi, v.synonyms());
  const auto nlg_l = wacc_nlg(local, v.set(), phi, base.gamma, v.provider(), NlgOptions{});
  const auto nlg_r = wacc_nlg(remote, v.set(), phi, base.gamma, v.provider(), NlgOptions{});
  server.stop();
  const bool same = nlu_l.to_json(false) == nlu_r.to_json(false) && nlg_l.to_json(false) == nlg_r.to_json(false);
  const auto total = nlu_r.total_queries + nlg_r.total_queries;
  report("HTTP transparency", same && budget.used() == total,
         "reports identical=" + std::to_string(same) + ", budget.used=" + std::to_string(budget.used()) +
             " total_queries=" + std::to_string(total));
}

void embed_efficiency(const Suite& s, const WatermarkManifest& manifest, const fs::path& work) {
  const auto dir = work / "embed";
  fs::create_directories(dir);
  manifest.save(dir / "manifest.json");
  const std::string cmd = "\"" + test::cli_path().string() + "\" embed --bundle \"" + s.paths.reference().string() +
                          "\" --manifest \"" + (dir / "manifest.json").string() + "\" --out \"" +
                          (dir / "out").string() + "\" > /dev/null 2>&1";
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = std::system(cmd.c_str());
  const double wall = seconds_since(t0);
  const auto m = load_bundle(dir / "out" / "model");
  report("embedding efficiency", rc == 0 && wall < kEmbedSeconds && m.embeddings.rows() == 50'000,
         "embed on " + std::to_string(m.embeddings.rows()) + "x" + std::to_string(m.dim()) + " took " + num(wall, 3) +
             " s wall (limit " + num(kEmbedSeconds, 1) + " s), exit " + std::to_string(rc));
}

void distillation(const Suite& s, const Baseline& base) {
  DistillConfig cfg;
  cfg.sgd.epochs = 5;
  cfg.sgd.batch_size = 8;
  cfg.sgd.lr_head = 2.0;
  const auto student = distill(base.model, s.general, init_student(base.model, 0), cfg);
  std::vector<TokenList> inputs;
  for (const auto& doc : s.heldout.documents) inputs.push_back(tokenize(doc, base.model.embeddings.vocab()));
  const double agreement = label_agreement(student, base.model, inputs);
  report("[extra] distillation agreement", agreement >= kDistillAgreement,
         "held-out label agreement " + num(agreement, 4) + " after 5 epochs (limit " + num(kDistillAgreement, 2) + ")");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: embmark_acceptance <work-dir>\n";
    return 2;
  }
  const fs::path work = argv[1];
  try {
    fs::remove_all(work);
    fs::create_directories(work);

    Suite s;
    s.paths.dir = work / "suite";
    const auto t0 = std::chrono::steady_clock::now();
    write_synth_suite(SynthConfig{}, s.paths.dir);
    s.reference = load_bundle(s.paths.reference());
    s.corpus = load_corpus(s.paths.corpus());
    s.general = load_corpus(s.paths.general());
    s.heldout = load_corpus(s.paths.heldout());
    s.templates = load_templates(s.paths.templates());
    s.train = load_dataset(s.paths.train(), s.reference.labels);
    s.test = load_dataset(s.paths.test(), s.reference.labels);
    const auto stats = compute_stats(s.corpus);
    std::cout << "suite: " << s.reference.embeddings.rows() << "x" << s.reference.dim() << ", " << stats.total
              << " corpus tokens, reference accuracy " << num(100 * accuracy(s.reference, s.test.classification))
              << " (" << num(seconds_since(t0), 1) << " s)" << std::endl;

    const auto manifest = make_manifest(stats, test::owner_identity(1), FrequencyBand::low(), kPairs, 0);
    const auto& phi = manifest.mapping;
    Verifier v(s, phi);

    derivation_determinism(stats);
    derivation_oracle();
    embedding_exactness(s.reference.embeddings, phi);
    perfect_watermark(v, s.reference, phi);
    const auto base = separation(v, s.reference, phi);
    fine_tune_persistence(v, s, base);
    attack_properties(v, s, phi, base);
    int8_band(v, base);
    youden_oracle();
    gradient_check();
    http_transparency(v, phi, base);
    embed_efficiency(s, manifest, work);
    stealth(base.model.embeddings, manifest);
    distillation(s, base);
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance run aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
