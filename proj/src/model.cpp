#include "embmark/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "embmark/crypto.hpp"
#include "embmark/error.hpp"
#include "embmark/kernels.hpp"
#include "embmark/rng.hpp"
#include "embmark/safetensors.hpp"

namespace embmark {

namespace {

constexpr const char* kCardFormat = "embmark-toy-model/1";

// Stable log-softmax; returns log-sum-exp and writes probabilities.
double softmax(std::span<const double> logits, std::span<double> probs) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double x : logits) peak = std::max(peak, x);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - peak);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return peak + std::log(total);
}

std::vector<double> head_logits(const ToyModel& m, std::span<const double> pooled) {
  const std::size_t d = m.dim();
  std::vector<double> logits(m.classes());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    double acc = m.head_b[c];
    for (std::size_t j = 0; j < d; ++j) acc += static_cast<double>(m.head_w[c * d + j]) * pooled[j];
    logits[c] = acc;
  }
  return logits;
}

std::vector<double> context_vector(const ToyModel& m, std::span<const double> pooled) {
  const std::size_t d = m.dim();
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += static_cast<double>(m.context_w[i * d + j]) * pooled[j];
    out[i] = acc;
  }
  return out;
}

// Next-token scores over the whole vocab; <unk> masked out.
std::vector<double> next_scores(const ToyModel& m, std::span<const double> ctx) {
  std::vector<double> scores(m.embeddings.rows());
  kernels::parallel::row_dots(m.embeddings.data(), m.dim(), ctx, scores);
  if (auto unk = m.embeddings.vocab().unk_index()) scores[*unk] = -std::numeric_limits<double>::infinity();
  return scores;
}

void require_classifier(const ToyModel& m) {
  if (!m.has_classifier()) throw Error(Errc::InvalidArgument, "model has no classifier head");
}

void require_generator(const ToyModel& m) {
  if (!m.has_generator()) throw Error(Errc::InvalidArgument, "model has no generator head");
}

struct Accumulator {
  std::vector<double> head_w, head_b, context_w;
  std::map<std::size_t, std::vector<double>> rows;
  double loss = 0.0;
  std::size_t count = 0;

  explicit Accumulator(const ToyModel& m)
      : head_w(m.head_w.size(), 0.0), head_b(m.head_b.size(), 0.0), context_w(m.context_w.size(), 0.0) {}

  std::vector<double>& row(std::size_t r, std::size_t d) {
    auto [it, inserted] = rows.try_emplace(r);
    if (inserted) it->second.assign(d, 0.0);
    return it->second;
  }
};

// Adds the cross-entropy gradient of one example against target distribution
// q (one-hot or soft) to acc. Returns false when the input has no known token.
bool add_classifier_example(const ToyModel& m, std::span<const std::string> tokens, std::span<const double> q,
                            Accumulator& acc) {
  const auto rows = known_rows(m.embeddings, tokens);
  if (rows.empty()) return false;
  const std::size_t d = m.dim();
  const std::size_t C = m.classes();
  const auto pooled = mean_pool(m.embeddings, rows);
  const auto logits = head_logits(m, pooled);
  std::vector<double> p(C);
  const double lse = softmax(logits, p);
  std::vector<double> g(C);
  for (std::size_t c = 0; c < C; ++c) {
    g[c] = p[c] - q[c];
    if (q[c] > 0.0) acc.loss += q[c] * (std::log(q[c]) - (logits[c] - lse));
  }
  std::vector<double> dpool(d, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    acc.head_b[c] += g[c];
    for (std::size_t j = 0; j < d; ++j) {
      acc.head_w[c * d + j] += g[c] * pooled[j];
      dpool[j] += g[c] * static_cast<double>(m.head_w[c * d + j]);
    }
  }
  const double share = 1.0 / static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    auto& gr = acc.row(r, d);
    for (std::size_t j = 0; j < d; ++j) gr[j] += share * dpool[j];
  }
  ++acc.count;
  return true;
}

// Teacher-forced next-token cross-entropy over one prompt/target pair. Only
// rows in `touched` receive the output-side gradient.
void add_generation_example(const ToyModel& m, const GenerationItem& item, const std::set<std::size_t>& touched,
                            Accumulator& acc) {
  auto context = known_rows(m.embeddings, item.prompt);
  if (context.empty()) return;
  const std::size_t d = m.dim();
  const std::size_t V = m.embeddings.rows();
  const auto& vocab = m.embeddings.vocab();
  const auto E = m.embeddings.data();
  std::vector<std::size_t> targets;
  for (const auto& t : item.target) {
    auto idx = vocab.find(t);
    if (idx && *idx != vocab.unk_index()) targets.push_back(*idx);
  }
  std::vector<double> p(V);
  for (std::size_t y : targets) {
    const auto h = mean_pool(m.embeddings, context);
    const auto ctx = context_vector(m, h);
    const auto scores = next_scores(m, ctx);
    const double lse = softmax(scores, p);
    acc.loss += lse - scores[y];
    p[y] -= 1.0;

    std::vector<double> gc(d, 0.0);
    for (std::size_t v = 0; v < V; ++v) {
      if (p[v] == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) gc[j] += p[v] * static_cast<double>(E[v * d + j]);
    }
    for (std::size_t v : touched) {
      if (p[v] == 0.0) continue;
      auto& gr = acc.row(v, d);
      for (std::size_t j = 0; j < d; ++j) gr[j] += p[v] * ctx[j];
    }
    std::vector<double> dh(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        acc.context_w[i * d + j] += gc[i] * h[j];
        dh[j] += gc[i] * static_cast<double>(m.context_w[i * d + j]);
      }
    }
    const double share = 1.0 / static_cast<double>(context.size());
    for (std::size_t r : context) {
      auto& gr = acc.row(r, d);
      for (std::size_t j = 0; j < d; ++j) gr[j] += share * dh[j];
    }
    ++acc.count;
    context.push_back(y);
  }
}

void apply(ToyModel& m, const Accumulator& acc, double lr_head, double lr_embed) {
  if (acc.count == 0) return;
  const double scale = 1.0 / static_cast<double>(acc.count);
  if (!std::isfinite(acc.loss)) throw Error(Errc::DivergedLoss, "training loss became non-finite");
  auto step = [&](std::vector<float>& w, const std::vector<double>& g, double lr) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(w[i] - lr * scale * g[i]);
  };
  step(m.head_w, acc.head_w, lr_head);
  step(m.head_b, acc.head_b, lr_head);
  step(m.context_w, acc.context_w, lr_head);
  if (lr_embed > 0.0) {
    const std::size_t d = m.dim();
    for (const auto& [r, g] : acc.rows) {
      auto row = m.embeddings.row(r);
      for (std::size_t j = 0; j < d; ++j) {
        row[j] = static_cast<float>(row[j] - lr_embed * scale * g[j]);
        if (!std::isfinite(row[j])) throw Error(Errc::DivergedLoss, "embedding row became non-finite");
      }
    }
  }
  auto finite = [](const std::vector<float>& w) {
    return std::all_of(w.begin(), w.end(), [](float x) { return std::isfinite(x); });
  };
  if (!finite(m.head_w) || !finite(m.head_b) || !finite(m.context_w)) {
    throw Error(Errc::DivergedLoss, "parameters became non-finite");
  }
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed, stream);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::vector<double> one_hot(std::size_t label, std::size_t C) {
  std::vector<double> q(C, 0.0);
  q[label] = 1.0;
  return q;
}

Tensor as_tensor(std::string name, std::vector<std::size_t> shape, const std::vector<float>& data) {
  return Tensor{std::move(name), std::move(shape), data};
}

}  // namespace

void ToyModel::validate() const {
  const std::size_t d = dim();
  if (has_classifier() && (head_w.size() != classes() * d || head_b.size() != classes())) {
    throw Error(Errc::ShapeMismatch, "classifier head does not match " + std::to_string(classes()) +
                                         " classes x d=" + std::to_string(d));
  }
  if (!has_classifier() && (!head_w.empty() || !head_b.empty())) {
    throw Error(Errc::ShapeMismatch, "classifier weights present without labels");
  }
  if (has_generator() && context_w.size() != d * d) {
    throw Error(Errc::ShapeMismatch, "context_w must be d x d with d=" + std::to_string(d));
  }
}

std::size_t ToyModel::parameter_count() const {
  return embeddings.data().size() + head_w.size() + head_b.size() + context_w.size();
}

std::vector<std::size_t> known_rows(const EmbeddingMatrix& embeddings, std::span<const std::string> tokens) {
  const auto& vocab = embeddings.vocab();
  std::vector<std::size_t> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto idx = vocab.find(t);
    if (idx && *idx != vocab.unk_index()) rows.push_back(*idx);
  }
  return rows;
}

std::vector<double> mean_pool(const EmbeddingMatrix& embeddings, std::span<const std::size_t> rows) {
  const std::size_t d = embeddings.dim();
  std::vector<double> acc(d, 0.0);
  for (std::size_t r : rows) {
    const auto row = embeddings.row(r);
    for (std::size_t j = 0; j < d; ++j) acc[j] += static_cast<double>(row[j]);
  }
  if (!rows.empty()) {
    for (double& x : acc) x /= static_cast<double>(rows.size());
  }
  return acc;
}

Classification classify(const ToyModel& model, std::span<const std::string> tokens) {
  require_classifier(model);
  const auto rows = known_rows(model.embeddings, tokens);
  if (rows.empty()) throw Error(Errc::NoKnownTokens, "input has no in-vocabulary tokens");
  Classification out;
  out.logits = head_logits(model, mean_pool(model.embeddings, rows));
  out.label_index = static_cast<std::size_t>(
      std::distance(out.logits.begin(), std::max_element(out.logits.begin(), out.logits.end())));
  out.label = model.labels[out.label_index];
  return out;
}

TokenList generate(const ToyModel& model, std::span<const std::string> prompt, const GenerateOptions& options) {
  require_generator(model);
  if (options.max_len == 0) throw Error(Errc::InvalidArgument, "max_len must be >= 1");
  if (!(options.temperature >= 0.0) || !std::isfinite(options.temperature)) {
    throw Error(Errc::InvalidArgument, "temperature must be >= 0");
  }
  auto context = known_rows(model.embeddings, prompt);
  if (context.empty()) throw Error(Errc::NoKnownTokens, "prompt has no in-vocabulary tokens");

  const auto& vocab = model.embeddings.vocab();
  const std::size_t d = model.dim();
  std::vector<double> sum(d, 0.0);
  for (std::size_t r : context) {
    const auto row = model.embeddings.row(r);
    for (std::size_t j = 0; j < d; ++j) sum[j] += static_cast<double>(row[j]);
  }
  const CounterRng rng(options.seed);
  TokenList out;
  std::vector<double> h(d);
  for (std::size_t step = 0; step < options.max_len; ++step) {
    for (std::size_t j = 0; j < d; ++j) h[j] = sum[j] / static_cast<double>(context.size());
    const auto scores = next_scores(model, context_vector(model, h));
    std::size_t pick = 0;
    if (options.temperature == 0.0) {
      pick = static_cast<std::size_t>(std::distance(scores.begin(), std::max_element(scores.begin(), scores.end())));
    } else {
      std::vector<double> scaled(scores.size());
      for (std::size_t v = 0; v < scores.size(); ++v) scaled[v] = scores[v] / options.temperature;
      std::vector<double> p(scores.size());
      softmax(scaled, p);
      const double u = rng.uniform_at(step);
      double cum = 0.0;
      pick = p.size() - 1;
      for (std::size_t v = 0; v < p.size(); ++v) {
        cum += p[v];
        if (u < cum) {
          pick = v;
          break;
        }
      }
      // Rounding in cum may leave u above the total; fall back to the last
      // token with non-zero mass.
      if (u >= cum) {
        while (pick > 0 && p[pick] == 0.0) --pick;
      }
    }
    if (pick == vocab.eos_index()) break;
    out.push_back(vocab.token(pick));
    context.push_back(pick);
    const auto row = model.embeddings.row(pick);
    for (std::size_t j = 0; j < d; ++j) sum[j] += static_cast<double>(row[j]);
  }
  return out;
}

ToyDataset load_dataset(const std::filesystem::path& path, const std::vector<std::string>& labels) {
  const std::string text = read_text_file(path);
  ToyDataset ds;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (j.contains("label")) {
        const auto label = j.at("label").get<std::string>();
        auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) throw Error(Errc::FormatError, where + ": unknown label '" + label + "'");
        ds.classification.push_back(
            {j.at("tokens").get<TokenList>(), static_cast<std::size_t>(it - labels.begin())});
      } else if (j.contains("prompt")) {
        ds.generation.push_back({j.at("prompt").get<TokenList>(), j.at("target").get<TokenList>()});
      } else {
        throw Error(Errc::FormatError, where + ": item needs 'label' or 'prompt'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::FormatError, where + ": " + e.what());
    }
  }
  return ds;
}

void save_dataset(const ToyDataset& dataset, const std::vector<std::string>& labels,
                  const std::filesystem::path& path) {
  std::string out;
  for (const auto& item : dataset.classification) {
    nlohmann::ordered_json j;
    j["tokens"] = item.tokens;
    j["label"] = labels.at(item.label);
    out += j.dump() + "\n";
  }
  for (const auto& item : dataset.generation) {
    nlohmann::ordered_json j;
    j["prompt"] = item.prompt;
    j["target"] = item.target;
    out += j.dump() + "\n";
  }
  write_text_file(path, out);
}

void FineTuneConfig::validate() const {
  if (epochs == 0) throw Error(Errc::InvalidArgument, "epochs must be >= 1");
  if (batch_size == 0) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");
  if (!(lr_head >= 0.0) || !std::isfinite(lr_head)) throw Error(Errc::InvalidArgument, "lr_head must be >= 0");
  if (!(embed_rate() >= 0.0) || !std::isfinite(embed_rate())) {
    throw Error(Errc::InvalidArgument, "lr_embed must be >= 0");
  }
}

nlohmann::json FineTuneConfig::to_json() const {
  return {{"epochs", epochs}, {"batch_size", batch_size}, {"lr_head", lr_head},
          {"lr_embed", embed_rate()}, {"rng_seed", rng_seed}};
}

ClassifierGradients classifier_gradients(const ToyModel& model, std::span<const ClassificationItem> items) {
  require_classifier(model);
  Accumulator acc(model);
  for (const auto& item : items) add_classifier_example(model, item.tokens, one_hot(item.label, model.classes()), acc);
  ClassifierGradients out;
  if (acc.count == 0) return out;
  const double scale = 1.0 / static_cast<double>(acc.count);
  out.loss = acc.loss * scale;
  out.head_w = std::move(acc.head_w);
  out.head_b = std::move(acc.head_b);
  for (double& g : out.head_w) g *= scale;
  for (double& g : out.head_b) g *= scale;
  for (auto& [r, g] : acc.rows) {
    for (double& x : g) x *= scale;
    out.rows.emplace(r, std::move(g));
  }
  return out;
}

ToyModel fine_tune(const ToyModel& model, const ToyDataset& dataset, const FineTuneConfig& config) {
  config.validate();
  model.validate();
  const bool use_cls = model.has_classifier() && !dataset.classification.empty();
  const bool use_gen = model.has_generator() && !dataset.generation.empty();
  if (!use_cls && !use_gen) throw Error(Errc::InvalidArgument, "dataset has no items usable by this model");
  for (const auto& item : dataset.classification) {
    if (use_cls && item.label >= model.classes()) throw Error(Errc::InvalidArgument, "label index out of range");
  }

  ToyModel out = model;
  const double lr_embed = config.embed_rate();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (use_cls) {
      const auto order = permutation(dataset.classification.size(), config.rng_seed, 2 * epoch + 1);
      for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
        Accumulator acc(out);
        for (std::size_t k = b; k < std::min(order.size(), b + config.batch_size); ++k) {
          const auto& item = dataset.classification[order[k]];
          add_classifier_example(out, item.tokens, one_hot(item.label, out.classes()), acc);
        }
        apply(out, acc, config.lr_head, lr_embed);
      }
    }
    if (use_gen) {
      const auto order = permutation(dataset.generation.size(), config.rng_seed, 2 * epoch + 2);
      for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
        const std::size_t stop = std::min(order.size(), b + config.batch_size);
        std::set<std::size_t> touched;
        for (std::size_t k = b; k < stop; ++k) {
          const auto& item = dataset.generation[order[k]];
          for (std::size_t r : known_rows(out.embeddings, item.prompt)) touched.insert(r);
          for (std::size_t r : known_rows(out.embeddings, item.target)) touched.insert(r);
        }
        Accumulator acc(out);
        for (std::size_t k = b; k < stop; ++k) add_generation_example(out, dataset.generation[order[k]], touched, acc);
        apply(out, acc, config.lr_head, lr_embed);
      }
    }
  }
  return out;
}

ToyModel distill(const ToyModel& teacher, const Corpus& general_corpus, const ToyModel& student_init,
                 const DistillConfig& config, const EpochCallback& on_epoch) {
  config.sgd.validate();
  require_classifier(teacher);
  require_classifier(student_init);
  if (!(teacher.embeddings.vocab() == student_init.embeddings.vocab())) {
    throw Error(Errc::VocabMismatch, "teacher and student vocabularies differ");
  }
  if (teacher.classes() != student_init.classes()) {
    throw Error(Errc::ShapeMismatch, "teacher and student have different class counts");
  }

  std::vector<TokenList> inputs;
  std::vector<std::vector<double>> soft;
  for (const auto& doc : general_corpus.documents) {
    auto tokens = tokenize(doc, teacher.embeddings.vocab());
    if (known_rows(teacher.embeddings, tokens).empty()) continue;
    const auto logits = classify(teacher, tokens).logits;
    std::vector<double> q(logits.size());
    softmax(logits, q);
    inputs.push_back(std::move(tokens));
    soft.push_back(std::move(q));
  }
  if (inputs.empty()) throw Error(Errc::EmptyCorpus, "no distillation input has a known token");

  ToyModel student = student_init;
  const double lr_embed = config.sgd.embed_rate();
  for (std::size_t epoch = 0; epoch < config.sgd.epochs; ++epoch) {
    auto order = permutation(inputs.size(), config.sgd.rng_seed, epoch + 1);
    if (config.samples_per_epoch > 0 && config.samples_per_epoch < order.size()) {
      order.resize(config.samples_per_epoch);
    }
    double kl = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += config.sgd.batch_size) {
      Accumulator acc(student);
      for (std::size_t k = b; k < std::min(order.size(), b + config.sgd.batch_size); ++k) {
        add_classifier_example(student, inputs[order[k]], soft[order[k]], acc);
      }
      kl += acc.loss;
      seen += acc.count;
      apply(student, acc, config.sgd.lr_head, lr_embed);
    }
    if (on_epoch) on_epoch(epoch + 1, student, seen ? kl / static_cast<double>(seen) : 0.0);
  }
  return student;
}

double label_agreement(const ToyModel& a, const ToyModel& b, std::span<const TokenList> inputs) {
  std::size_t agree = 0, total = 0;
  for (const auto& x : inputs) {
    if (known_rows(a.embeddings, x).empty()) continue;
    ++total;
    if (classify(a, x).label_index == classify(b, x).label_index) ++agree;
  }
  return total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;
}

double accuracy(const ToyModel& model, std::span<const ClassificationItem> items) {
  std::size_t hit = 0, total = 0;
  for (const auto& item : items) {
    if (known_rows(model.embeddings, item.tokens).empty()) continue;
    ++total;
    if (classify(model, item.tokens).label_index == item.label) ++hit;
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

double macro_f1(const ToyModel& model, std::span<const ClassificationItem> items) {
  const std::size_t C = model.classes();
  std::vector<double> tp(C, 0.0), fp(C, 0.0), fn(C, 0.0);
  for (const auto& item : items) {
    if (known_rows(model.embeddings, item.tokens).empty()) continue;
    const std::size_t pred = classify(model, item.tokens).label_index;
    if (pred == item.label) {
      tp[pred] += 1;
    } else {
      fp[pred] += 1;
      fn[item.label] += 1;
    }
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    sum += denom > 0 ? 2 * tp[c] / denom : 0.0;
  }
  return C ? sum / static_cast<double>(C) : 0.0;
}

void save_bundle(const ToyModel& model, const std::filesystem::path& dir) {
  model.validate();
  const std::size_t d = model.dim();
  save_matrix(model.embeddings, dir / "embedding.safetensors", dir / "vocab.json");
  std::vector<Tensor> heads;
  if (model.has_classifier()) {
    heads.push_back(as_tensor("head_w", {model.classes(), d}, model.head_w));
    heads.push_back(as_tensor("head_b", {model.classes()}, model.head_b));
  }
  if (model.has_generator()) heads.push_back(as_tensor("context_w", {d, d}, model.context_w));
  write_safetensors(dir / "heads.safetensors", heads);

  nlohmann::ordered_json card;
  card["format"] = kCardFormat;
  card["vocab_size"] = model.embeddings.rows();
  card["dim"] = d;
  card["labels"] = model.labels;
  card["classifier"] = model.has_classifier();
  card["generator"] = model.has_generator();
  card["reserved"] = {{"unk", Vocab::kUnk}, {"eos", Vocab::kEos}};
  write_text_file(dir / "model_card.json", card.dump(2) + "\n");
}

ToyModel load_bundle(const std::filesystem::path& dir) {
  for (const char* name : {"model_card.json", "embedding.safetensors", "vocab.json", "heads.safetensors"}) {
    if (!std::filesystem::is_regular_file(dir / name)) {
      throw Error(Errc::BundleLoadError, (dir / name).string() + " is missing");
    }
  }
  ToyModel m;
  nlohmann::json card;
  try {
    card = nlohmann::json::parse(read_text_file(dir / "model_card.json"));
    if (card.at("format").get<std::string>() != kCardFormat) {
      throw Error(Errc::BundleLoadError, "unsupported model card format");
    }
    m.labels = card.at("labels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BundleLoadError, (dir / "model_card.json").string() + ": " + e.what());
  }
  m.embeddings = load_matrix(dir / "embedding.safetensors", dir / "vocab.json");
  if (card.at("dim").get<std::size_t>() != m.dim() || card.at("vocab_size").get<std::size_t>() != m.embeddings.rows()) {
    throw Error(Errc::BundleLoadError, "model card dimensions disagree with the embedding file");
  }
  for (auto& t : read_safetensors(dir / "heads.safetensors")) {
    if (t.name == "head_w") m.head_w = std::move(t.data);
    else if (t.name == "head_b") m.head_b = std::move(t.data);
    else if (t.name == "context_w") m.context_w = std::move(t.data);
    else throw Error(Errc::BundleLoadError, "unexpected head tensor '" + t.name + "'");
  }
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(Errc::BundleLoadError, e.what());
  }
  return m;
}

std::string bundle_sha256(const std::filesystem::path& dir) {
  std::string manifest;
  for (const char* name : {"embedding.safetensors", "vocab.json", "heads.safetensors", "model_card.json"}) {
    manifest += name;
    manifest += ' ';
    manifest += sha256_file_hex(dir / name);
    manifest += '\n';
  }
  return sha256_hex(manifest);
}

}  // namespace embmark
