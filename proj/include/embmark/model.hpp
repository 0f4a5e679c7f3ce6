#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embmark/corpus.hpp"
#include "embmark/embedding.hpp"

namespace embmark {

// Desk-scale stand-in for a pretrained language model. A bundle can carry a
// classifier head (logits = head_w * mean(E[tokens]) + head_b), a generator
// head (next-token scores = (context_w * mean(E[tokens])) . E^T, tied
// embeddings), or both.
struct ToyModel {
  EmbeddingMatrix embeddings;
  std::vector<std::string> labels;  // C class names
  std::vector<float> head_w;        // C x d
  std::vector<float> head_b;        // C
  std::vector<float> context_w;     // d x d

  std::size_t dim() const { return embeddings.dim(); }
  std::size_t classes() const { return labels.size(); }
  bool has_classifier() const { return !labels.empty(); }
  bool has_generator() const { return !context_w.empty(); }
  // Throws ShapeMismatch on inconsistent head dimensions.
  void validate() const;
  // Number of float parameters across embeddings and heads.
  std::size_t parameter_count() const;

  bool operator==(const ToyModel&) const = default;
};

// Row indices of the in-vocabulary, non-<unk> tokens.
std::vector<std::size_t> known_rows(const EmbeddingMatrix& embeddings, std::span<const std::string> tokens);
// Mean of the given rows, accumulated in double.
std::vector<double> mean_pool(const EmbeddingMatrix& embeddings, std::span<const std::size_t> rows);

struct Classification {
  std::size_t label_index = 0;
  std::string label;
  std::vector<double> logits;
};

// argmax with lowest-index tie-break. Throws NoKnownTokens.
Classification classify(const ToyModel& model, std::span<const std::string> tokens);

struct GenerateOptions {
  std::size_t max_len = 8;
  double temperature = 0.0;
  std::uint64_t seed = 0;
};

// temperature 0: greedy argmax chain. temperature > 0: draw k uses
// CounterRng(seed).uniform_at(k) against the cumulative softmax(scores / T).
// <unk> is never emitted; <eos> ends generation and is not returned.
// Throws NoKnownTokens, InvalidArgument.
TokenList generate(const ToyModel& model, std::span<const std::string> prompt, const GenerateOptions& options);

struct ClassificationItem {
  TokenList tokens;
  std::size_t label = 0;
};

struct GenerationItem {
  TokenList prompt;
  TokenList target;
};

struct ToyDataset {
  std::vector<ClassificationItem> classification;
  std::vector<GenerationItem> generation;

  bool empty() const { return classification.empty() && generation.empty(); }
};

// JSON lines: {"tokens":[...],"label":"name"} or {"prompt":[...],"target":[...]}.
ToyDataset load_dataset(const std::filesystem::path& path, const std::vector<std::string>& labels);
void save_dataset(const ToyDataset& dataset, const std::vector<std::string>& labels,
                  const std::filesystem::path& path);

struct FineTuneConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  double lr_head = 0.1;
  std::optional<double> lr_embed;  // defaults to lr_head / 100
  std::uint64_t rng_seed = 0;

  double embed_rate() const { return lr_embed.value_or(lr_head / 100.0); }
  void validate() const;
  nlohmann::json to_json() const;
};

// Mean cross-entropy gradients of the classifier over `items`, in double.
struct ClassifierGradients {
  double loss = 0.0;
  std::vector<double> head_w;
  std::vector<double> head_b;
  std::map<std::size_t, std::vector<double>> rows;  // embedding row -> gradient
};

ClassifierGradients classifier_gradients(const ToyModel& model, std::span<const ClassificationItem> items);

// Minibatch SGD on cross-entropy. Heads move at lr_head; only embedding rows
// of tokens present in a batch move, at lr_embed. Throws DivergedLoss,
// InvalidArgument on an empty dataset.
ToyModel fine_tune(const ToyModel& model, const ToyDataset& dataset, const FineTuneConfig& config);

struct DistillConfig {
  FineTuneConfig sgd;
  std::size_t samples_per_epoch = 0;  // 0: every usable document
};

// (epoch number starting at 1, student after that epoch, mean KL of the epoch)
using EpochCallback = std::function<void(std::size_t, const ToyModel&, double)>;

// Trains the student toward the teacher's softmax outputs (KL divergence) on
// documents of the general corpus. Teacher and student must share a vocab.
ToyModel distill(const ToyModel& teacher, const Corpus& general_corpus, const ToyModel& student_init,
                 const DistillConfig& config, const EpochCallback& on_epoch = {});

double label_agreement(const ToyModel& a, const ToyModel& b, std::span<const TokenList> inputs);
double accuracy(const ToyModel& model, std::span<const ClassificationItem> items);
double macro_f1(const ToyModel& model, std::span<const ClassificationItem> items);

// Bundle directory: embedding.safetensors, vocab.json, heads.safetensors,
// model_card.json (plus attack_log.json when attacks were applied).
void save_bundle(const ToyModel& model, const std::filesystem::path& dir);
ToyModel load_bundle(const std::filesystem::path& dir);
// SHA-256 over the four model files (attack log excluded).
std::string bundle_sha256(const std::filesystem::path& dir);

}  // namespace embmark
