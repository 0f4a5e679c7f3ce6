#include "embmark/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "embmark/crypto.hpp"
#include "embmark/error.hpp"
#include "embmark/rng.hpp"

namespace embmark {

namespace {

// RNG streams, one per artifact.
enum Stream : std::uint64_t {
  kWords = 1,
  kCorpus,
  kGeneral,
  kHeldout,
  kTopics,
  kRows,
  kContext,
  kTemplates,
  kTrain,
  kTest,
};

std::vector<std::string> pseudo_words(std::size_t n, std::uint64_t seed) {
  static const std::string consonants = "bdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  const std::size_t syllables = consonants.size() * vowels.size();
  const std::size_t space = syllables * syllables * syllables;
  if (n > space / 2) throw Error(Errc::InvalidArgument, "vocab_words too large for the word generator");
  CounterRng rng(seed, kWords);
  std::unordered_set<std::size_t> used;
  std::vector<std::string> out;
  out.reserve(n);
  while (out.size() < n) {
    std::size_t code = rng.below(space);
    if (!used.insert(code).second) continue;
    std::string w;
    for (int s = 0; s < 3; ++s) {
      const std::size_t syl = code % syllables;
      code /= syllables;
      w += consonants[syl / vowels.size()];
      w += vowels[syl % vowels.size()];
    }
    out.push_back(std::move(w));
  }
  return out;
}

class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double s) : cum_(n) {
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      acc += std::pow(static_cast<double>(r + 1), -s);
      cum_[r] = acc;
    }
  }
  std::size_t operator()(double u) const {
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), u * cum_.back());
    return std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()), cum_.size() - 1);
  }

 private:
  std::vector<double> cum_;
};

Corpus zipf_corpus(const std::vector<std::string>& words, const ZipfSampler& zipf, std::size_t docs,
                   std::size_t doc_len, std::uint64_t seed, std::uint64_t stream) {
  const CounterRng rng(seed, stream);
  Corpus c;
  c.documents.resize(docs);
  for (std::size_t d = 0; d < docs; ++d) {
    std::string& doc = c.documents[d];
    for (std::size_t k = 0; k < doc_len; ++k) {
      if (k) doc += ' ';
      doc += words[zipf(rng.uniform_at(d * doc_len + k))];
    }
  }
  return c;
}

struct Geometry {
  std::vector<std::vector<double>> u, w;  // class and response topic directions
};

Geometry topic_directions(const SynthConfig& cfg) {
  CounterRng rng(cfg.seed, kTopics);
  std::vector<std::vector<double>> basis;
  for (std::size_t k = 0; k < 2 * cfg.classes; ++k) {
    std::vector<double> v(cfg.dim);
    for (double& x : v) x = rng.normal();
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cfg.dim; ++j) dot += v[j] * b[j];
      for (std::size_t j = 0; j < cfg.dim; ++j) v[j] -= dot * b[j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  Geometry g;
  g.u.assign(basis.begin(), basis.begin() + static_cast<std::ptrdiff_t>(cfg.classes));
  g.w.assign(basis.begin() + static_cast<std::ptrdiff_t>(cfg.classes), basis.end());
  return g;
}

// Gaussian row with its topic-subspace component scaled by `keep`.
std::vector<double> ordinary_row(const SynthConfig& cfg, const Geometry& g, const CounterRng& rng,
                                 std::uint64_t row, double keep) {
  std::vector<double> x(cfg.dim);
  for (std::size_t j = 0; j < cfg.dim; ++j) x[j] = cfg.ordinary_sd * rng.normal_at(row * cfg.dim + j);
  for (const auto* dirs : {&g.u, &g.w}) {
    for (const auto& e : *dirs) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cfg.dim; ++j) dot += x[j] * e[j];
      for (std::size_t j = 0; j < cfg.dim; ++j) x[j] -= (1.0 - keep) * dot * e[j];
    }
  }
  return x;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

std::vector<std::string> synth_labels(std::size_t classes) {
  static const char* names[] = {"cardiology", "oncology", "neurology", "dermatology", "radiology", "pediatrics"};
  std::vector<std::string> out;
  for (std::size_t c = 0; c < classes; ++c) out.push_back(c < 6 ? names[c] : "class" + std::to_string(c));
  return out;
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::ordered_json j;
  j["vocab_words"] = vocab_words;
  j["dim"] = dim;
  j["corpus_tokens"] = corpus_tokens;
  j["doc_len"] = doc_len;
  j["zipf_s"] = zipf_s;
  j["stopwords"] = stopwords;
  j["classes"] = classes;
  j["keywords_per_class"] = keywords_per_class;
  j["responses_per_class"] = responses_per_class;
  j["ordinary_sd"] = ordinary_sd;
  j["topic_shrink"] = topic_shrink;
  j["topic_weight"] = topic_weight;
  j["unique_weight"] = unique_weight;
  j["gain"] = gain;
  j["copy_gain"] = copy_gain;
  j["context_noise"] = context_noise;
  j["context_len"] = context_len;
  j["context_rank_lo"] = context_rank_lo;
  j["context_rank_hi"] = context_rank_hi;
  j["template_pairs"] = template_pairs;
  j["templates_per_pair"] = templates_per_pair;
  j["train_items"] = train_items;
  j["test_items"] = test_items;
  j["general_docs"] = general_docs;
  j["heldout_docs"] = heldout_docs;
  j["head_epochs"] = head_epochs;
  j["head_lr"] = head_lr;
  j["seed"] = seed;
  return nlohmann::json::parse(j.dump());
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
#define EMBMARK_FIELD(name) c.name = j.value(#name, c.name)
    EMBMARK_FIELD(vocab_words);
    EMBMARK_FIELD(dim);
    EMBMARK_FIELD(corpus_tokens);
    EMBMARK_FIELD(doc_len);
    EMBMARK_FIELD(zipf_s);
    EMBMARK_FIELD(stopwords);
    EMBMARK_FIELD(classes);
    EMBMARK_FIELD(keywords_per_class);
    EMBMARK_FIELD(responses_per_class);
    EMBMARK_FIELD(ordinary_sd);
    EMBMARK_FIELD(topic_shrink);
    EMBMARK_FIELD(topic_weight);
    EMBMARK_FIELD(unique_weight);
    EMBMARK_FIELD(gain);
    EMBMARK_FIELD(copy_gain);
    EMBMARK_FIELD(context_noise);
    EMBMARK_FIELD(context_len);
    EMBMARK_FIELD(context_rank_lo);
    EMBMARK_FIELD(context_rank_hi);
    EMBMARK_FIELD(template_pairs);
    EMBMARK_FIELD(templates_per_pair);
    EMBMARK_FIELD(train_items);
    EMBMARK_FIELD(test_items);
    EMBMARK_FIELD(general_docs);
    EMBMARK_FIELD(heldout_docs);
    EMBMARK_FIELD(head_epochs);
    EMBMARK_FIELD(head_lr);
    EMBMARK_FIELD(seed);
#undef EMBMARK_FIELD
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad synth config: ") + e.what());
  }
  return c;
}

SynthSuite build_synth_suite(const SynthConfig& cfg) {
  const std::size_t special = cfg.stopwords + cfg.classes * (cfg.keywords_per_class + cfg.responses_per_class);
  if (cfg.dim < 2 * cfg.classes || cfg.classes < 2) throw Error(Errc::InvalidArgument, "need classes >= 2 and dim >= 2 * classes");
  if (cfg.stopwords > default_stopwords().size()) throw Error(Errc::InvalidArgument, "too many stopword ranks");
  if (cfg.context_rank_lo < special || cfg.context_rank_hi > cfg.vocab_words ||
      cfg.context_rank_hi - cfg.context_rank_lo < cfg.context_len) {
    throw Error(Errc::InvalidArgument, "context rank range must lie above the keyword/response ranks");
  }

  // Vocabulary in rank order.
  std::vector<std::string> words;
  for (const auto& w : default_stopwords()) {
    if (words.size() == cfg.stopwords) break;
    words.push_back(w);
  }
  for (auto& w : pseudo_words(cfg.vocab_words - cfg.stopwords, cfg.seed)) words.push_back(std::move(w));
  const std::size_t kw_begin = cfg.stopwords;
  const std::size_t kw_end = kw_begin + cfg.classes * cfg.keywords_per_class;
  const std::size_t resp_end = kw_end + cfg.classes * cfg.responses_per_class;
  auto keyword = [&](std::size_t c, std::size_t k) { return words[kw_begin + k * cfg.classes + c]; };

  SynthSuite suite;
  const ZipfSampler zipf(words.size(), cfg.zipf_s);
  const std::size_t docs = (cfg.corpus_tokens + cfg.doc_len - 1) / cfg.doc_len;
  suite.corpus = zipf_corpus(words, zipf, docs, cfg.doc_len, cfg.seed, kCorpus);
  suite.general = zipf_corpus(words, zipf, cfg.general_docs, cfg.doc_len, cfg.seed, kGeneral);
  suite.heldout = zipf_corpus(words, zipf, cfg.heldout_docs, cfg.doc_len, cfg.seed, kHeldout);

  // Embeddings.
  const Vocab vocab = Vocab::with_reserved(words);
  const Geometry g = topic_directions(cfg);
  const CounterRng row_rng(cfg.seed, kRows);
  std::vector<float> data(vocab.size() * cfg.dim);
  for (std::size_t r = 0; r < vocab.size(); ++r) {
    std::vector<double> x;
    if (r >= kw_begin && r < resp_end) {
      const bool is_kw = r < kw_end;
      const std::size_t c = (r - (is_kw ? kw_begin : kw_end)) % cfg.classes;
      const auto& dir = is_kw ? g.u[c] : g.w[c];
      x = ordinary_row(cfg, g, row_rng, r, 0.0);
      for (std::size_t j = 0; j < cfg.dim; ++j) x[j] = cfg.topic_weight * dir[j] + cfg.unique_weight * x[j];
    } else {
      x = ordinary_row(cfg, g, row_rng, r, cfg.topic_shrink);
    }
    for (std::size_t j = 0; j < cfg.dim; ++j) data[r * cfg.dim + j] = static_cast<float>(x[j]);
  }

  ToyModel& m = suite.reference;
  m.embeddings = EmbeddingMatrix(vocab, cfg.dim, std::move(data));
  m.labels = synth_labels(cfg.classes);
  m.head_w.assign(cfg.classes * cfg.dim, 0.0f);
  m.head_b.assign(cfg.classes, 0.0f);
  m.context_w.assign(cfg.dim * cfg.dim, 0.0f);
  const CounterRng ctx_rng(cfg.seed, kContext);
  for (std::size_t i = 0; i < cfg.dim; ++i) {
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      double v = (i == j ? cfg.copy_gain : 0.0) + cfg.context_noise * ctx_rng.normal_at(i * cfg.dim + j);
      for (std::size_t c = 0; c < cfg.classes; ++c) v += cfg.gain * g.w[c][i] * (g.u[c][j] + g.w[c][j]);
      m.context_w[i * cfg.dim + j] = static_cast<float>(v);
    }
  }

  // Templates: context words drawn from the mid-frequency rank range.
  auto context_words = [&](CounterRng& rng) {
    std::vector<std::string> ctx;
    std::set<std::size_t> seen;
    while (ctx.size() < cfg.context_len) {
      const std::size_t r = cfg.context_rank_lo + rng.below(cfg.context_rank_hi - cfg.context_rank_lo);
      if (seen.insert(r).second) ctx.push_back(words[r]);
    }
    return ctx;
  };
  CounterRng tpl_rng(cfg.seed, kTemplates);
  for (std::size_t p = 0; p < cfg.template_pairs; ++p) {
    for (std::size_t t = 0; t < cfg.templates_per_pair; ++t) {
      auto ctx = context_words(tpl_rng);
      const std::size_t slot = tpl_rng.below(cfg.context_len + 1);
      ctx.insert(ctx.begin() + static_cast<std::ptrdiff_t>(slot), std::string(kSlotMarker));
      suite.templates[p].push_back(join(ctx));
    }
  }

  auto make_items = [&](std::size_t n, std::uint64_t stream) {
    CounterRng rng(cfg.seed, stream);
    std::vector<ClassificationItem> items;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = rng.below(cfg.classes);
      auto ctx = context_words(rng);
      const std::size_t slot = rng.below(cfg.context_len + 1);
      ctx.insert(ctx.begin() + static_cast<std::ptrdiff_t>(slot), keyword(c, rng.below(cfg.keywords_per_class)));
      items.push_back({std::move(ctx), c});
    }
    return items;
  };
  suite.train.classification = make_items(cfg.train_items, kTrain);
  suite.test.classification = make_items(cfg.test_items, kTest);

  // The classifier head is trained on the toy task with the embeddings frozen.
  FineTuneConfig head_cfg;
  head_cfg.epochs = cfg.head_epochs;
  head_cfg.batch_size = 16;
  head_cfg.lr_head = cfg.head_lr;
  head_cfg.lr_embed = 0.0;
  head_cfg.rng_seed = cfg.seed;
  m = fine_tune(m, suite.train, head_cfg);

  for (std::size_t c = 0; c < cfg.classes; ++c) {
    for (std::size_t k = 0; k < cfg.keywords_per_class; ++k) {
      auto& list = suite.rewrite_table[keyword(c, k)];
      for (std::size_t o = 0; o < cfg.keywords_per_class; ++o)
        if (o != k) list.push_back(keyword(c, o));
    }
    for (std::size_t k = 0; k < cfg.responses_per_class; ++k) {
      auto& list = suite.rewrite_table[words[kw_end + k * cfg.classes + c]];
      for (std::size_t o = 0; o < cfg.responses_per_class; ++o)
        if (o != k) list.push_back(words[kw_end + o * cfg.classes + c]);
    }
  }
  return suite;
}

nlohmann::json write_synth_suite(const SynthConfig& config, const std::filesystem::path& dir) {
  const SynthSuite suite = build_synth_suite(config);
  auto write_corpus = [&](const Corpus& c, const char* name) {
    std::string text;
    for (const auto& d : c.documents) {
      text += d;
      text += '\n';
    }
    write_text_file(dir / name, text);
  };
  write_corpus(suite.corpus, "corpus.txt");
  write_corpus(suite.general, "general.txt");
  write_corpus(suite.heldout, "general_heldout.txt");
  save_matrix(suite.reference.embeddings, dir / "embedding.safetensors", dir / "vocab.json");
  save_bundle(suite.reference, dir / "reference");
  write_text_file(dir / "templates.json", templates_to_json(suite.templates).dump(2) + "\n");
  save_dataset(suite.train, suite.reference.labels, dir / "train.jsonl");
  save_dataset(suite.test, suite.reference.labels, dir / "test.jsonl");
  write_text_file(dir / "rewrite_synonyms.json", nlohmann::json(suite.rewrite_table).dump(2) + "\n");

  nlohmann::ordered_json manifest;
  manifest["format"] = "embmark-synth-suite/1";
  manifest["config"] = config.to_json();
  manifest["labels"] = suite.reference.labels;
  manifest["train_accuracy"] = accuracy(suite.reference, suite.train.classification);
  manifest["test_accuracy"] = accuracy(suite.reference, suite.test.classification);
  nlohmann::ordered_json files;
  for (const char* name : {"corpus.txt", "general.txt", "general_heldout.txt", "embedding.safetensors", "vocab.json",
                           "templates.json", "train.jsonl", "test.jsonl", "rewrite_synonyms.json"}) {
    files[name] = sha256_file_hex(dir / name);
  }
  files["reference"] = bundle_sha256(dir / "reference");
  manifest["sha256"] = files;
  write_text_file(dir / "suite.json", manifest.dump(2) + "\n");
  return nlohmann::json::parse(manifest.dump());
}

}  // namespace embmark
