#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "embmark/attacks.hpp"
#include "embmark/model.hpp"
#include "embmark/verify.hpp"

namespace embmark {

// Self-contained synthetic suite: Zipf corpus, topic-structured embedding
// matrix, trained toy classifier/generator, templates and datasets.
//
// Vocabulary by frequency rank: [0, stopwords) English stopwords, then
// classes * keywords_per_class keywords (class = rank % classes), then
// classes * responses_per_class response words, then pseudo-words.
// Six orthonormal topic directions u_c / w_c carry the semantics: keyword
// rows are a * u_c + (ordinary part), response rows a * w_c + (ordinary
// part); ordinary rows are N(0, ordinary_sd^2) with their topic-subspace
// component shrunk by topic_shrink. The generator's context_w maps u_c and
// w_c onto w_c (gain) plus copy_gain * I.
struct SynthConfig {
  std::size_t vocab_words = 49'998;  // plus <unk> and <eos>
  std::size_t dim = 128;
  std::size_t corpus_tokens = 1'200'000;
  std::size_t doc_len = 20;
  double zipf_s = 1.0;
  std::size_t stopwords = 40;
  std::size_t classes = 3;
  std::size_t keywords_per_class = 16;
  std::size_t responses_per_class = 8;
  double ordinary_sd = 0.1;
  double topic_shrink = 0.2;
  double topic_weight = 0.8;
  double unique_weight = 0.7;
  double gain = 10.0;
  double copy_gain = 1.0;
  double context_noise = 0.01;
  std::size_t context_len = 7;
  std::size_t context_rank_lo = 150;
  std::size_t context_rank_hi = 800;
  std::size_t template_pairs = 16;
  std::size_t templates_per_pair = 12;
  std::size_t train_items = 3000;
  std::size_t test_items = 600;
  std::size_t general_docs = 6000;
  std::size_t heldout_docs = 1000;
  std::size_t head_epochs = 10;
  double head_lr = 0.5;
  std::uint64_t seed = 7;

  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct SynthSuite {
  ToyModel reference;  // unwatermarked classifier + generator
  Corpus corpus;
  Corpus general;
  Corpus heldout;
  TemplateMap templates;
  ToyDataset train;
  ToyDataset test;
  SynonymTable rewrite_table;  // keyword/response word -> same-class words
};

SynthSuite build_synth_suite(const SynthConfig& config);

// Writes corpus.txt, general.txt, general_heldout.txt, embedding.safetensors,
// vocab.json, reference/ (bundle), templates.json, train.jsonl, test.jsonl,
// rewrite_synonyms.json and suite.json. Returns the suite.json content.
nlohmann::json write_synth_suite(const SynthConfig& config, const std::filesystem::path& dir);

std::vector<std::string> synth_labels(std::size_t classes);

}  // namespace embmark
