#include "embmark/verify.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include "embmark/crypto.hpp"
#include "embmark/error.hpp"
#include "embmark/kernels.hpp"
#include "embmark/rng.hpp"

namespace embmark {

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The exception of the
// lowest failing index is rethrown.
template <typename Fn>
void run_indexed(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (i < failed_at) {
            failed_at = i;
            failure = std::current_exception();
          }
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

double now_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// JSON has no infinities; thresholds at the sentinels are written as strings.
nlohmann::json threshold_json(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

std::string fmt(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void check_pair_index(const VerificationSample& s, const MappingSet& phi) {
  if (s.pair_index >= phi.pairs.size()) {
    throw Error(Errc::InvalidArgument, "sample pair_index " + std::to_string(s.pair_index) + " outside the mapping");
  }
  if (s.position >= s.tokens.size()) throw Error(Errc::InvalidArgument, "sample slot position out of range");
}

std::uint64_t repeat_seed(std::uint64_t seed, std::size_t rep) {
  return rep == 0 ? seed : splitmix64_mix(seed + rep);
}

}  // namespace

std::string VerificationSet::to_jsonl() const {
  std::string out;
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["pair_index"] = s.pair_index;
    j["tokens"] = s.tokens;
    j["slot_position"] = s.position;
    out += j.dump() + "\n";
  }
  return out;
}

VerificationSet VerificationSet::from_jsonl(std::string_view text) {
  VerificationSet set;
  std::map<std::size_t, std::size_t> per_pair;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      VerificationSample s{j.at("pair_index").get<std::size_t>(), j.at("tokens").get<TokenList>(),
                           j.at("slot_position").get<std::size_t>()};
      if (s.position >= s.tokens.size()) {
        throw Error(Errc::FormatError, "line " + std::to_string(line_no) + ": slot_position out of range");
      }
      ++per_pair[s.pair_index];
      set.samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::FormatError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!per_pair.empty()) {
    set.per_pair = std::min_element(per_pair.begin(), per_pair.end(), [](auto& a, auto& b) {
                     return a.second < b.second;
                   })->second;
  }
  return set;
}

void VerificationSet::save(const std::filesystem::path& path) const { write_text_file(path, to_jsonl()); }

VerificationSet VerificationSet::load(const std::filesystem::path& path) { return from_jsonl(read_text_file(path)); }

TemplateMap load_templates(const std::filesystem::path& path) {
  TemplateMap out;
  try {
    const auto j = nlohmann::json::parse(read_text_file(path));
    for (const auto& [key, list] : j.items()) {
      std::size_t idx = 0;
      const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
      if (ec != std::errc() || ptr != key.data() + key.size()) {
        throw Error(Errc::FormatError, path.string() + ": template key '" + key + "' is not a pair index");
      }
      out[idx] = list.get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::FormatError, path.string() + ": " + e.what());
  }
  return out;
}

nlohmann::json templates_to_json(const TemplateMap& templates) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [idx, list] : templates) j[std::to_string(idx)] = list;
  return j;
}

VerificationSet build_verification_set(const MappingSet& phi, const TemplateMap& templates, std::size_t k) {
  if (k == 0) throw Error(Errc::InvalidArgument, "samples per pair must be >= 1");
  VerificationSet set;
  set.per_pair = k;
  for (std::size_t i = 0; i < phi.pairs.size(); ++i) {
    const auto& r = phi.pairs[i].replacement;
    std::size_t made = 0;
    auto it = templates.find(i);
    if (it != templates.end()) {
      for (const auto& tpl : it->second) {
        if (made == k) break;
        const auto at = tpl.find(kSlotMarker);
        if (at == std::string::npos || tpl.find(kSlotMarker, at + 1) != std::string::npos) continue;
        VerificationSample s;
        s.pair_index = i;
        s.tokens = tokenize(std::string_view(tpl).substr(0, at));
        s.position = s.tokens.size();
        s.tokens.push_back(r);
        for (auto& t : tokenize(std::string_view(tpl).substr(at + kSlotMarker.size()))) s.tokens.push_back(std::move(t));
        set.samples.push_back(std::move(s));
        ++made;
      }
    }
    if (made < k) {
      throw Error(Errc::InsufficientTemplates, "pair " + std::to_string(i) + " has " + std::to_string(made) +
                                                   " usable templates, need " + std::to_string(k));
    }
  }
  return set;
}

VerificationSample substitute_slot(const VerificationSample& sample, const std::string& token) {
  VerificationSample out = sample;
  out.tokens.at(out.position) = token;
  return out;
}

VerificationSample substitute_trigger(const VerificationSample& sample, const MappingSet& phi) {
  return substitute_slot(sample, phi.pairs.at(sample.pair_index).trigger);
}

MappingSet inverse_mapping(const MappingSet& phi) {
  MappingSet out = phi;
  for (auto& p : out.pairs) std::swap(p.trigger, p.replacement);
  return out;
}

std::string LocalModel::classify(const TokenList& tokens) {
  ++count_;
  return embmark::classify(model_, tokens).label;
}

TokenList LocalModel::generate(const TokenList& tokens, std::size_t max_len, double temperature,
                               std::uint64_t seed) {
  ++count_;
  auto out = embmark::generate(model_, tokens, {max_len, temperature, seed});
  if (rewrite_table_) out = rewrite_outputs(out, *rewrite_table_, rewrite_seed_, rewrite_p_);
  return out;
}

void LocalModel::set_rewriter(SynonymTable table, std::uint64_t seed, double p) {
  rewrite_table_ = std::move(table);
  rewrite_seed_ = seed;
  rewrite_p_ = p;
}

SynonymTarget parse_synonym_target(std::string_view text) {
  if (text == "trigger") return SynonymTarget::Trigger;
  if (text == "replacement") return SynonymTarget::Replacement;
  throw Error(Errc::InvalidArgument, "synonym target must be 'trigger' or 'replacement'");
}

std::string_view synonym_target_name(SynonymTarget t) {
  return t == SynonymTarget::Trigger ? "trigger" : "replacement";
}

std::vector<std::string> build_synonyms(const EmbeddingMatrix& reference, const MappingSet& phi, SynonymTarget target,
                                        const SynonymTable& overrides) {
  const auto& vocab = reference.vocab();
  const std::size_t d = reference.dim();
  std::vector<double> norms(reference.rows());
  for (std::size_t v = 0; v < reference.rows(); ++v) {
    double s = 0.0;
    for (float x : reference.row(v)) s += static_cast<double>(x) * x;
    norms[v] = std::sqrt(s);
  }
  std::vector<std::string> out;
  for (const auto& pair : phi.pairs) {
    const auto& key = target == SynonymTarget::Trigger ? pair.trigger : pair.replacement;
    if (auto it = overrides.find(key); it != overrides.end() && !it->second.empty()) {
      out.push_back(it->second.front());
      continue;
    }
    const std::size_t q = vocab.at(key);
    std::vector<double> query(reference.row(q).begin(), reference.row(q).end());
    std::vector<double> dots(reference.rows());
    kernels::parallel::row_dots(reference.data(), d, query, dots);
    const std::size_t skip_t = vocab.at(pair.trigger);
    const std::size_t skip_r = vocab.at(pair.replacement);
    std::size_t best = reference.rows();
    double best_cos = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < reference.rows(); ++v) {
      if (v == skip_t || v == skip_r || Vocab::is_reserved(vocab.token(v)) || norms[v] == 0.0) continue;
      const double c = dots[v] / (norms[v] * norms[q]);
      if (c > best_cos) {
        best_cos = c;
        best = v;
      }
    }
    if (best == reference.rows() || norms[q] == 0.0) {
      throw Error(Errc::ZeroVector, "no synonym candidate for '" + key + "'");
    }
    out.push_back(vocab.token(best));
  }
  return out;
}

std::size_t FilteredSet::retained() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](auto& e) { return e.retained; }));
}

FilteredSet sensitivity_filter(QueryModel& model, const VerificationSet& set, const std::vector<std::string>& synonyms,
                               std::size_t parallelism) {
  FilteredSet out;
  out.entries.resize(set.samples.size());
  run_indexed(set.samples.size(), parallelism, [&](std::size_t i) {
    const auto& s = set.samples[i];
    if (s.pair_index >= synonyms.size()) throw Error(Errc::InvalidArgument, "no synonym for pair " + std::to_string(s.pair_index));
    auto& e = out.entries[i];
    e.sample = s;
    e.label_r = model.classify(s.tokens);
    e.label_synonym = model.classify(substitute_slot(s, synonyms[s.pair_index]).tokens);
    e.retained = e.label_r != e.label_synonym;
  });
  if (out.retained() == 0) {
    throw Error(Errc::EmptyAfterFilter, "all " + std::to_string(set.samples.size()) +
                                            " samples were insensitive to synonym substitution");
  }
  return out;
}

std::string_view task_name(Task t) { return t == Task::Nlu ? "nlu" : "nlg"; }

double VerificationReport::recompute_wacc() const {
  std::size_t denom = 0, hits = 0;
  for (const auto& r : records) {
    if (!r.retained) continue;
    ++denom;
    if (r.match) ++hits;
  }
  return denom ? 100.0 * static_cast<double>(hits) / static_cast<double>(denom) : 0.0;
}

nlohmann::json ThresholdCalibration::to_json() const {
  nlohmann::json roc = nlohmann::json::array();
  for (const auto& p : roc_points) roc.push_back({{"threshold", threshold_json(p.threshold)}, {"tpr", p.tpr}, {"fpr", p.fpr}});
  return {{"gamma", threshold_json(gamma)}, {"youden", youden}, {"roc", roc}};
}

std::string ThresholdCalibration::roc_csv() const {
  std::string out = "threshold,tpr,fpr\n";
  for (const auto& p : roc_points) out += fmt(p.threshold) + "," + fmt(p.tpr) + "," + fmt(p.fpr) + "\n";
  return out;
}

nlohmann::json VerificationReport::to_json(bool include_timing) const {
  nlohmann::ordered_json j;
  j["task"] = task_name(task);
  j["metric"] = is_fpr ? "fpr" : "wacc";
  j["value"] = wacc;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", wacc);
  j["value_display"] = buf;
  j["total_samples"] = total_samples;
  j["retained"] = retained;
  j["filtered_out"] = filtered_out;
  if (gamma) j["gamma"] = threshold_json(*gamma);
  if (include_timing) {
    j["total_queries"] = total_queries;
    j["wall_ms"] = wall_ms;
  }
  j["warnings"] = warnings;
  nlohmann::ordered_json recs = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json e;
    e["pair_index"] = r.pair_index;
    e["input_r"] = r.input_r;
    e["input_t"] = r.input_t;
    if (task == Task::Nlu) {
      e["retained"] = r.retained;
      e["label_r"] = r.label_r;
      e["label_synonym"] = r.label_synonym;
      if (r.retained) e["label_t"] = r.label_t;
    } else {
      e["output_r"] = r.output_r;
      e["output_t"] = r.output_t;
      e["similarities"] = r.similarities;
      if (r.similarity) e["similarity"] = *r.similarity;
    }
    e["match"] = r.match;
    recs.push_back(e);
  }
  j["records"] = recs;
  return j;
}

std::string VerificationReport::samples_csv() const {
  std::string out = task == Task::Nlu ? "pair_index,retained,label_r,label_synonym,label_t,match\n"
                                      : "pair_index,similarity,match,output_r,output_t\n";
  for (const auto& r : records) {
    out += std::to_string(r.pair_index) + ",";
    if (task == Task::Nlu) {
      out += std::string(r.retained ? "1" : "0") + "," + csv_field(r.label_r) + "," + csv_field(r.label_synonym) +
             "," + csv_field(r.label_t) + "," + (r.match ? "1" : "0") + "\n";
    } else {
      out += (r.similarity ? fmt(*r.similarity) : "") + "," + (r.match ? "1" : "0") + "," +
             csv_field(join_tokens(r.output_r)) + "," + csv_field(join_tokens(r.output_t)) + "\n";
    }
  }
  return out;
}

VerificationReport wacc_nlu(QueryModel& model, const FilteredSet& filtered, const MappingSet& phi,
                            std::size_t parallelism) {
  if (filtered.retained() == 0) throw Error(Errc::EmptyAfterFilter, "no retained samples to verify");
  const double start = now_ms();
  const std::uint64_t q0 = model.query_count();
  VerificationReport rep;
  rep.task = Task::Nlu;
  rep.records.resize(filtered.entries.size());
  run_indexed(filtered.entries.size(), parallelism, [&](std::size_t i) {
    const auto& e = filtered.entries[i];
    check_pair_index(e.sample, phi);
    auto& r = rep.records[i];
    r.pair_index = e.sample.pair_index;
    r.input_r = e.sample.tokens;
    r.input_t = substitute_trigger(e.sample, phi).tokens;
    r.retained = e.retained;
    r.label_r = e.label_r;
    r.label_synonym = e.label_synonym;
    if (!e.retained) return;
    r.label_t = model.classify(r.input_t);
    r.match = r.label_t == r.label_r;
  });
  rep.total_samples = filtered.entries.size();
  rep.retained = filtered.retained();
  rep.filtered_out = rep.total_samples - rep.retained;
  rep.wacc = rep.recompute_wacc();
  rep.total_queries = model.query_count() - q0;
  rep.wall_ms = now_ms() - start;
  return rep;
}

VerificationReport verify_nlu(QueryModel& model, const VerificationSet& set, const MappingSet& phi,
                              const std::vector<std::string>& synonyms, std::size_t parallelism) {
  const double start = now_ms();
  const std::uint64_t q0 = model.query_count();
  const auto filtered = sensitivity_filter(model, set, synonyms, parallelism);
  auto rep = wacc_nlu(model, filtered, phi, parallelism);
  rep.total_queries = model.query_count() - q0;
  rep.wall_ms = now_ms() - start;
  return rep;
}

std::vector<std::vector<double>> PooledEmbeddingProvider::encode(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    const auto tokens = tokenize(text, reference_.vocab());
    out.push_back(mean_pool(reference_, known_rows(reference_, tokens)));
  }
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::ShapeMismatch, "vectors have different lengths");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw Error(Errc::ZeroVector, "cannot take the cosine of a zero vector");
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

std::string join_tokens(const TokenList& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

double similarity(const TokenList& y, const TokenList& y2, SimilarityProvider& provider) {
  if (y.empty() || y2.empty()) throw Error(Errc::InvalidArgument, "similarity needs two non-empty outputs");
  const auto v = provider.encode({join_tokens(y), join_tokens(y2)});
  if (v.size() != 2) throw Error(Errc::ProtocolError, "provider returned " + std::to_string(v.size()) + " vectors for 2 texts");
  return cosine(v[0], v[1]);
}

ThresholdCalibration calibrate_threshold(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw Error(Errc::InvalidArgument, "calibration needs positive and negative scores");
  std::vector<double> all(pos.begin(), pos.end());
  all.insert(all.end(), neg.begin(), neg.end());
  for (double s : all)
    if (!std::isfinite(s)) throw Error(Errc::InvalidArgument, "calibration scores must be finite");
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  if (all.size() == 1) throw Error(Errc::DegenerateScores, "all calibration scores are identical");

  std::vector<double> candidates{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i + 1 < all.size(); ++i) candidates.push_back(all[i] + (all[i + 1] - all[i]) / 2);
  candidates.push_back(std::numeric_limits<double>::infinity());

  std::vector<double> sp(pos.begin(), pos.end()), sn(neg.begin(), neg.end());
  std::sort(sp.begin(), sp.end());
  std::sort(sn.begin(), sn.end());
  auto above = [](const std::vector<double>& v, double g) {
    return static_cast<std::int64_t>(v.end() - std::upper_bound(v.begin(), v.end(), g));
  };
  // J compared as the exact integer tp * |neg| - fp * |pos| so ties are exact.
  const auto np = static_cast<std::int64_t>(sp.size()), nn = static_cast<std::int64_t>(sn.size());
  ThresholdCalibration cal;
  std::int64_t best = std::numeric_limits<std::int64_t>::min();
  for (double g : candidates) {
    const std::int64_t tp = above(sp, g), fp = above(sn, g);
    cal.roc_points.push_back({g, static_cast<double>(tp) / static_cast<double>(np),
                              static_cast<double>(fp) / static_cast<double>(nn)});
    const std::int64_t j = tp * nn - fp * np;
    if (j >= best) {
      best = j;
      cal.gamma = g;
    }
  }
  cal.youden = static_cast<double>(best) / static_cast<double>(np * nn);
  return cal;
}

std::vector<SampleRecord> nlg_records(QueryModel& model, const VerificationSet& set, const MappingSet& phi,
                                      SimilarityProvider& provider, const NlgOptions& options) {
  if (set.samples.empty()) throw Error(Errc::InvalidArgument, "verification set is empty");
  const std::size_t repeats = options.temperature > 0.0 ? std::max<std::size_t>(1, options.repeats) : 1;
  std::vector<SampleRecord> records(set.samples.size());
  run_indexed(set.samples.size(), options.parallelism, [&](std::size_t i) {
    const auto& s = set.samples[i];
    check_pair_index(s, phi);
    auto& r = records[i];
    r.pair_index = s.pair_index;
    r.input_r = s.tokens;
    r.input_t = substitute_trigger(s, phi).tokens;
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      const std::uint64_t seed = repeat_seed(options.seed, rep);
      auto y = model.generate(r.input_r, options.max_len, options.temperature, seed);
      auto y2 = model.generate(r.input_t, options.max_len, options.temperature, seed);
      double sim;
      if (y.empty() || y2.empty()) {
        // An empty output carries no content: equal only to another empty one.
        sim = y.empty() && y2.empty() ? 1.0 : 0.0;
      } else {
        sim = similarity(y, y2, provider);
      }
      r.similarities.push_back(sim);
      if (rep == 0) {
        r.output_r = std::move(y);
        r.output_t = std::move(y2);
      }
    }
    r.similarity = median(r.similarities);
  });
  return records;
}

VerificationReport wacc_nlg(QueryModel& model, const VerificationSet& set, const MappingSet& phi, double gamma,
                            SimilarityProvider& provider, const NlgOptions& options) {
  const double start = now_ms();
  const std::uint64_t q0 = model.query_count();
  VerificationReport rep;
  rep.task = Task::Nlg;
  rep.gamma = gamma;
  rep.records = nlg_records(model, set, phi, provider, options);
  for (auto& r : rep.records) r.match = *r.similarity > gamma;
  rep.total_samples = rep.records.size();
  rep.retained = rep.total_samples;
  rep.wacc = rep.recompute_wacc();
  rep.total_queries = model.query_count() - q0;
  rep.wall_ms = now_ms() - start;
  return rep;
}

ThresholdCalibration calibrate_nlg(QueryModel& watermarked, QueryModel& reference, const VerificationSet& set,
                                   const MappingSet& phi, SimilarityProvider& provider, const NlgOptions& options) {
  std::vector<double> pos, neg;
  for (const auto& r : nlg_records(watermarked, set, phi, provider, options)) pos.push_back(*r.similarity);
  for (const auto& r : nlg_records(reference, set, phi, provider, options)) neg.push_back(*r.similarity);
  return calibrate_threshold(pos, neg);
}

namespace {

VerificationReport mark_fpr(VerificationReport rep) {
  rep.is_fpr = true;
  if (rep.wacc >= 50.0) {
    rep.warnings.push_back("reference model scores " + fmt(rep.wacc) +
                           " (>= 50); it behaves as if watermarked, check that it is the unwatermarked reference");
  }
  return rep;
}

}  // namespace

VerificationReport fpr_nlu(QueryModel& reference, const VerificationSet& set, const MappingSet& phi,
                           const std::vector<std::string>& synonyms, std::size_t parallelism) {
  return mark_fpr(verify_nlu(reference, set, phi, synonyms, parallelism));
}

VerificationReport fpr_nlg(QueryModel& reference, const VerificationSet& set, const MappingSet& phi, double gamma,
                           SimilarityProvider& provider, const NlgOptions& options) {
  return mark_fpr(wacc_nlg(reference, set, phi, gamma, provider, options));
}

}  // namespace embmark
