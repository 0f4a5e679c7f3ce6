#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "embmark/embedding.hpp"
#include "embmark/model.hpp"
#include "embmark/trigger.hpp"
#include "embmark/verify.hpp"

namespace embmark {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Derivation + replacement selection + pairing in one step. Replacements are
// the n most frequent tokens outside the band, the stopword list and the
// reserved tokens.
WatermarkManifest make_manifest(const TokenStats& stats, const OwnerIdentity& identity, const FrequencyBand& band,
                                std::size_t n, std::uint64_t pairing_seed,
                                const std::set<std::string>& stopwords = default_stopwords());

// Copy of `model` whose embedding matrix carries the watermark.
ToyModel watermark_model(const ToyModel& model, const MappingSet& mapping, const WatermarkParams& params);

struct EvalOptions {
  bool nlu = true;
  bool nlg = true;
  SynonymTarget synonym_target = SynonymTarget::Trigger;
  SynonymTable synonym_overrides;
  NlgOptions nlg_options;
  std::optional<double> gamma;  // skip calibration when set
  std::size_t parallelism = 1;
};

// One verification outcome; `error` holds the abort reason (for instance
// EmptyAfterFilter) when the report could not be produced.
struct Outcome {
  std::optional<VerificationReport> report;
  std::string error;

  std::optional<double> value() const {
    return report ? std::optional<double>(report->wacc) : std::nullopt;
  }
  nlohmann::json to_json() const;
};

struct EvalResult {
  Outcome nlu_wacc, nlu_fpr, nlg_wacc, nlg_fpr;
  std::optional<ThresholdCalibration> calibration;
  std::vector<std::string> synonyms;

  nlohmann::json to_json() const;
};

// suspect: model under test. reference: the unwatermarked original (FPR and
// negative calibration scores). owner_copy: the owner's locally watermarked
// copy of the reference (positive calibration scores).
EvalResult evaluate(const ToyModel& suspect, const ToyModel& reference, const ToyModel& owner_copy,
                    const VerificationSet& set, const MappingSet& phi, SimilarityProvider& provider,
                    const EvalOptions& options);

// Mean L2 parameter change after fine-tuning: embedding rows of the tokens
// that occur in the fine-tune data, and classifier head rows.
struct DriftReport {
  double embedding_row_drift = 0.0;
  double head_row_drift = 0.0;
  std::size_t embedding_rows = 0;

  nlohmann::json to_json() const;
};
DriftReport measure_drift(const ToyModel& before, const ToyModel& after, const ToyDataset& data);

// Distillation student: the base model's embeddings and generator with a
// fresh N(0, 0.01^2) classifier head and zero bias.
ToyModel init_student(const ToyModel& base, std::uint64_t seed);

// Run manifest written next to every command's outputs.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::map<std::string, std::string> inputs;   // path -> sha256 (bundle hash for directories)
  std::map<std::string, std::string> outputs;  // path -> sha256
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json results = nlohmann::json::object();

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  // Writes <dir>/run_manifest.json; created_at is the only time-dependent field.
  void save(const std::filesystem::path& dir) const;
};

std::string path_sha256(const std::filesystem::path& path);

// Files produced by write_synth_suite.
struct SuitePaths {
  std::filesystem::path dir;
  std::filesystem::path corpus() const { return dir / "corpus.txt"; }
  std::filesystem::path general() const { return dir / "general.txt"; }
  std::filesystem::path heldout() const { return dir / "general_heldout.txt"; }
  std::filesystem::path matrix() const { return dir / "embedding.safetensors"; }
  std::filesystem::path vocab() const { return dir / "vocab.json"; }
  std::filesystem::path reference() const { return dir / "reference"; }
  std::filesystem::path templates() const { return dir / "templates.json"; }
  std::filesystem::path train() const { return dir / "train.jsonl"; }
  std::filesystem::path test() const { return dir / "test.jsonl"; }
  std::filesystem::path rewrite_table() const { return dir / "rewrite_synonyms.json"; }
};

enum class SweepAxis { Lambda, Noise, Band };
std::string_view sweep_axis_name(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view text);

struct SweepPoint {
  WatermarkParams params;
  FrequencyBand band;
  std::string label;
};

// Default grids: lambda {0.5, 1.5, 4.0}; (mu, sigma2) {(0.1,0.01), (0.01,0.01),
// (1.0,0.01), (0.1,0.001), (0.1,0.1)}; bands {low, rare, high}.
std::vector<SweepPoint> default_sweep(SweepAxis axis, const WatermarkParams& base, const FrequencyBand& base_band);

struct SweepRow {
  SweepPoint point;
  double accuracy = 0.0;   // toy-task accuracy of the watermarked model on the test split
  double f1_proxy = 0.0;   // macro F1 on the same split
  std::optional<double> wacc_nlu, fpr_nlu, wacc_nlg, fpr_nlg;
  double mean_distance = 0.0;
  std::string error;
};

struct SweepInputs {
  TokenStats stats;
  OwnerIdentity identity;
  std::size_t n = 8;
  std::uint64_t pairing_seed = 0;
  ToyModel reference;
  TemplateMap templates;
  std::size_t samples_per_pair = kSamplesPerPair;
  std::vector<ClassificationItem> test_items;
  EvalOptions eval;
};

// Runs every point on a bounded worker pool; rows come back in point order.
std::vector<SweepRow> run_sweep(const SweepInputs& inputs, const std::vector<SweepPoint>& points, std::size_t workers);
std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows);

}  // namespace embmark
