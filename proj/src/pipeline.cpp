#include "embmark/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <thread>

#include "embmark/crypto.hpp"
#include "embmark/error.hpp"
#include "embmark/rng.hpp"

namespace embmark {

WatermarkManifest make_manifest(const TokenStats& stats, const OwnerIdentity& identity, const FrequencyBand& band,
                                std::size_t n, std::uint64_t pairing_seed, const std::set<std::string>& stopwords) {
  WatermarkManifest m;
  m.owner = identity.owner;
  m.public_key_pem = identity.private_key.public_key().to_pem();
  m.candidates = select_band(stats, band);
  const auto triggers = derive_trigger_set(identity, m.candidates, n);
  m.records = triggers.records;
  const std::set<std::string> exclude(m.candidates.tokens.begin(), m.candidates.tokens.end());
  m.replacements = select_high_frequency(stats, n, exclude, stopwords);
  m.mapping = build_mapping(triggers, m.replacements, pairing_seed);
  return m;
}

ToyModel watermark_model(const ToyModel& model, const MappingSet& mapping, const WatermarkParams& params) {
  ToyModel out = model;
  out.embeddings = embed_watermark(model.embeddings, mapping, params);
  return out;
}

nlohmann::json Outcome::to_json() const {
  if (report) return report->to_json(false);
  return {{"error", error}};
}

nlohmann::json EvalResult::to_json() const {
  nlohmann::ordered_json j;
  j["nlu_wacc"] = nlu_wacc.to_json();
  j["nlu_fpr"] = nlu_fpr.to_json();
  j["nlg_wacc"] = nlg_wacc.to_json();
  j["nlg_fpr"] = nlg_fpr.to_json();
  if (calibration) j["calibration"] = calibration->to_json();
  j["synonyms"] = synonyms;
  return nlohmann::json::parse(j.dump());
}

namespace {

template <typename Fn>
Outcome attempt(Fn&& fn) {
  Outcome o;
  try {
    o.report = fn();
  } catch (const Error& e) {
    if (e.code() != Errc::EmptyAfterFilter && e.code() != Errc::BudgetExhausted) throw;
    o.error = e.what();
  }
  return o;
}

}  // namespace

EvalResult evaluate(const ToyModel& suspect, const ToyModel& reference, const ToyModel& owner_copy,
                    const VerificationSet& set, const MappingSet& phi, SimilarityProvider& provider,
                    const EvalOptions& options) {
  EvalResult r;
  if (options.nlu) {
    r.synonyms = build_synonyms(reference.embeddings, phi, options.synonym_target, options.synonym_overrides);
    LocalModel sus(suspect), ref(reference);
    r.nlu_wacc = attempt([&] { return verify_nlu(sus, set, phi, r.synonyms, options.parallelism); });
    r.nlu_fpr = attempt([&] { return fpr_nlu(ref, set, phi, r.synonyms, options.parallelism); });
  }
  if (options.nlg) {
    NlgOptions nlg = options.nlg_options;
    nlg.parallelism = options.parallelism;
    double gamma;
    if (options.gamma) {
      gamma = *options.gamma;
    } else {
      LocalModel pos(owner_copy), neg(reference);
      r.calibration = calibrate_nlg(pos, neg, set, phi, provider, nlg);
      gamma = r.calibration->gamma;
    }
    LocalModel sus(suspect), ref(reference);
    r.nlg_wacc = attempt([&] { return wacc_nlg(sus, set, phi, gamma, provider, nlg); });
    r.nlg_fpr = attempt([&] { return fpr_nlg(ref, set, phi, gamma, provider, nlg); });
  }
  return r;
}

nlohmann::json DriftReport::to_json() const {
  return {{"embedding_row_drift", embedding_row_drift},
          {"head_row_drift", head_row_drift},
          {"embedding_rows", embedding_rows}};
}

DriftReport measure_drift(const ToyModel& before, const ToyModel& after, const ToyDataset& data) {
  if (before.embeddings.vocab() != after.embeddings.vocab() || before.head_w.size() != after.head_w.size()) {
    throw Error(Errc::ShapeMismatch, "drift needs two models of the same shape");
  }
  std::set<std::size_t> rows;
  for (const auto& item : data.classification)
    for (auto r : known_rows(before.embeddings, item.tokens)) rows.insert(r);
  for (const auto& item : data.generation) {
    for (auto r : known_rows(before.embeddings, item.prompt)) rows.insert(r);
    for (auto r : known_rows(before.embeddings, item.target)) rows.insert(r);
  }
  DriftReport d;
  d.embedding_rows = rows.size();
  for (auto r : rows) d.embedding_row_drift += l2_distance(before.embeddings.row(r), after.embeddings.row(r));
  if (!rows.empty()) d.embedding_row_drift /= static_cast<double>(rows.size());
  const std::size_t dim = before.dim();
  for (std::size_t c = 0; c < before.classes(); ++c) {
    d.head_row_drift += l2_distance(std::span<const float>(before.head_w).subspan(c * dim, dim),
                                    std::span<const float>(after.head_w).subspan(c * dim, dim));
  }
  if (before.classes() > 0) d.head_row_drift /= static_cast<double>(before.classes());
  return d;
}

ToyModel init_student(const ToyModel& base, std::uint64_t seed) {
  ToyModel s = base;
  const CounterRng rng(seed);
  for (std::size_t k = 0; k < s.head_w.size(); ++k) s.head_w[k] = static_cast<float>(0.01 * rng.normal_at(k));
  std::fill(s.head_b.begin(), s.head_b.end(), 0.0f);
  return s;
}

std::string path_sha256(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) {
    if (std::filesystem::exists(path / "model_card.json")) return bundle_sha256(path);
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string listing;
    for (const auto& f : files) listing += std::filesystem::relative(f, path).generic_string() + " " + sha256_file_hex(f) + "\n";
    return sha256_hex(listing);
  }
  return sha256_file_hex(path);
}

void RunManifest::add_input(const std::filesystem::path& path) { inputs[path.string()] = path_sha256(path); }

void RunManifest::add_output(const std::filesystem::path& path) { outputs[path.string()] = path_sha256(path); }

void RunManifest::save(const std::filesystem::path& dir) const {
  nlohmann::ordered_json j;
  j["format"] = "embmark-run-manifest/1";
  j["tool"] = "embmark";
  j["version"] = kToolVersion;
  j["command"] = command;
  j["config"] = config;
  j["seeds"] = seeds;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["results"] = results;
  char stamp[32];
  const std::time_t t = std::time(nullptr);
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  j["created_at"] = stamp;
  write_text_file(dir / "run_manifest.json", j.dump(2) + "\n");
}

std::string_view sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Lambda: return "lambda";
    case SweepAxis::Noise: return "noise";
    case SweepAxis::Band: return "band";
  }
  return "lambda";
}

SweepAxis parse_sweep_axis(std::string_view text) {
  for (auto a : {SweepAxis::Lambda, SweepAxis::Noise, SweepAxis::Band})
    if (sweep_axis_name(a) == text) return a;
  throw Error(Errc::InvalidArgument, "sweep axis must be lambda, noise or band");
}

std::vector<SweepPoint> default_sweep(SweepAxis axis, const WatermarkParams& base, const FrequencyBand& base_band) {
  std::vector<SweepPoint> out;
  char buf[64];
  switch (axis) {
    case SweepAxis::Lambda:
      for (double l : {0.5, 1.5, 4.0}) {
        WatermarkParams p = base;
        p.lambda = l;
        std::snprintf(buf, sizeof(buf), "%g", l);
        out.push_back({p, base_band, buf});
      }
      break;
    case SweepAxis::Noise:
      for (auto [mu, s2] : std::vector<std::pair<double, double>>{{0.1, 0.01}, {0.01, 0.01}, {1.0, 0.01}, {0.1, 0.001}, {0.1, 0.1}}) {
        WatermarkParams p = base;
        p.mu = mu;
        p.sigma2 = s2;
        std::snprintf(buf, sizeof(buf), "%g/%g", mu, s2);
        out.push_back({p, base_band, buf});
      }
      break;
    case SweepAxis::Band:
      for (auto [name, band] : std::vector<std::pair<const char*, FrequencyBand>>{
               {"low", FrequencyBand::low()}, {"rare", FrequencyBand::rare()}, {"high", FrequencyBand::high()}}) {
        out.push_back({base, band, name});
      }
      break;
  }
  return out;
}

std::vector<SweepRow> run_sweep(const SweepInputs& in, const std::vector<SweepPoint>& points, std::size_t workers) {
  std::vector<SweepRow> rows(points.size());
  PooledEmbeddingProvider provider(in.reference.embeddings);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      SweepRow& row = rows[i];
      row.point = points[i];
      try {
        const auto manifest = make_manifest(in.stats, in.identity, points[i].band, in.n, in.pairing_seed);
        const auto& phi = manifest.mapping;
        const ToyModel wm = watermark_model(in.reference, phi, points[i].params);
        const auto set = build_verification_set(phi, in.templates, in.samples_per_pair);
        row.mean_distance = pair_distance(wm.embeddings, phi).mean_distance;
        row.accuracy = accuracy(wm, in.test_items);
        row.f1_proxy = macro_f1(wm, in.test_items);
        const auto ev = evaluate(wm, in.reference, wm, set, phi, provider, in.eval);
        row.wacc_nlu = ev.nlu_wacc.value();
        row.fpr_nlu = ev.nlu_fpr.value();
        row.wacc_nlg = ev.nlg_wacc.value();
        row.fpr_nlg = ev.nlg_fpr.value();
      } catch (const Error& e) {
        row.error = e.what();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::max<std::size_t>(1, std::min(workers, points.size())); ++w) pool.emplace_back(work);
  pool.clear();
  return rows;
}

std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
  auto num = [](std::optional<double> v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v);
    return std::string(buf);
  };
  std::string out;
  switch (axis) {
    case SweepAxis::Lambda: out = "lambda"; break;
    case SweepAxis::Noise: out = "mu,sigma2"; break;
    case SweepAxis::Band: out = "band,band_lo,band_hi"; break;
  }
  out += ",f1_proxy,accuracy,wacc_nlu,fpr_nlu,wacc_nlg,fpr_nlg,mean_distance,error\n";
  char buf[256];
  for (const auto& r : rows) {
    switch (axis) {
      case SweepAxis::Lambda: std::snprintf(buf, sizeof(buf), "%g", r.point.params.lambda); break;
      case SweepAxis::Noise: std::snprintf(buf, sizeof(buf), "%g,%g", r.point.params.mu, r.point.params.sigma2); break;
      case SweepAxis::Band:
        std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g", r.point.label.c_str(), r.point.band.lo_fraction(),
                      r.point.band.hi_fraction());
        break;
    }
    out += buf;
    std::snprintf(buf, sizeof(buf), ",%.4f,%.4f,", r.f1_proxy, r.accuracy);
    out += buf;
    out += num(r.wacc_nlu) + "," + num(r.fpr_nlu) + "," + num(r.wacc_nlg) + "," + num(r.fpr_nlg) + ",";
    std::snprintf(buf, sizeof(buf), "%.6f,", r.mean_distance);
    out += buf;
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out += err + "\n";
  }
  return out;
}

}  // namespace embmark
