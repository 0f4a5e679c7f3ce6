#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embmark/attacks.hpp"
#include "embmark/model.hpp"
#include "embmark/trigger.hpp"

namespace embmark {

inline constexpr std::string_view kSlotMarker = "{SLOT}";
inline constexpr std::size_t kSamplesPerPair = 10;

// One templated input; tokens[position] is the slot currently holding the
// pair's replacement (or, after substitution, its trigger).
struct VerificationSample {
  std::size_t pair_index = 0;  // 0-based index into MappingSet::pairs
  TokenList tokens;
  std::size_t position = 0;

  const std::string& slot_token() const { return tokens.at(position); }
  bool operator==(const VerificationSample&) const = default;
};

struct VerificationSet {
  std::vector<VerificationSample> samples;
  std::size_t per_pair = kSamplesPerPair;

  // JSON lines {pair_index, tokens, slot_position}.
  std::string to_jsonl() const;
  static VerificationSet from_jsonl(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static VerificationSet load(const std::filesystem::path& path);
};

// pair_index -> template strings containing exactly one "{SLOT}".
using TemplateMap = std::map<std::size_t, std::vector<std::string>>;
TemplateMap load_templates(const std::filesystem::path& path);
nlohmann::json templates_to_json(const TemplateMap& templates);

// Takes the first k usable templates per pair. Throws InsufficientTemplates.
VerificationSet build_verification_set(const MappingSet& phi, const TemplateMap& templates,
                                       std::size_t k = kSamplesPerPair);

// Puts phi.pairs[sample.pair_index].trigger into the slot.
VerificationSample substitute_trigger(const VerificationSample& sample, const MappingSet& phi);
VerificationSample substitute_slot(const VerificationSample& sample, const std::string& token);
// Swaps trigger and replacement in every pair.
MappingSet inverse_mapping(const MappingSet& phi);

// Black-box access to a suspect model. Implementations count every query.
class QueryModel {
 public:
  virtual ~QueryModel() = default;
  virtual std::string classify(const TokenList& tokens) = 0;
  virtual TokenList generate(const TokenList& tokens, std::size_t max_len, double temperature,
                             std::uint64_t seed) = 0;
  virtual std::uint64_t query_count() const = 0;
};

class LocalModel : public QueryModel {
 public:
  explicit LocalModel(const ToyModel& model) : model_(model) {}
  std::string classify(const TokenList& tokens) override;
  TokenList generate(const TokenList& tokens, std::size_t max_len, double temperature,
                     std::uint64_t seed) override;
  std::uint64_t query_count() const override { return count_.load(); }

  // Output-rewriting attack applied to every generation (simulated paraphraser).
  void set_rewriter(SynonymTable table, std::uint64_t seed, double p = 0.5);

 private:
  const ToyModel& model_;
  std::atomic<std::uint64_t> count_{0};
  std::optional<SynonymTable> rewrite_table_;
  std::uint64_t rewrite_seed_ = 0;
  double rewrite_p_ = 0.5;
};

enum class SynonymTarget { Trigger, Replacement };
SynonymTarget parse_synonym_target(std::string_view text);
std::string_view synonym_target_name(SynonymTarget t);

// One synonym per pair. Default: nearest neighbour (cosine) of the target
// token in the reference embedding space, excluding the pair's own tokens and
// reserved tokens. Entries of `overrides` (token -> list, first used) win.
std::vector<std::string> build_synonyms(const EmbeddingMatrix& reference, const MappingSet& phi, SynonymTarget target,
                                        const SynonymTable& overrides = {});

struct FilteredSample {
  VerificationSample sample;
  std::string label_r;
  std::string label_synonym;
  bool retained = false;
};

struct FilteredSet {
  std::vector<FilteredSample> entries;  // every input sample, in order
  std::size_t retained() const;
};

// Queries the r-variant and the synonym variant of each sample; retains the
// sample when the labels differ. Throws EmptyAfterFilter.
FilteredSet sensitivity_filter(QueryModel& model, const VerificationSet& set,
                               const std::vector<std::string>& synonyms, std::size_t parallelism = 1);

enum class Task { Nlu, Nlg };
std::string_view task_name(Task t);

struct SampleRecord {
  std::size_t pair_index = 0;
  TokenList input_r;
  TokenList input_t;
  bool retained = true;
  std::string label_r, label_t, label_synonym;  // NLU
  TokenList output_r, output_t;                  // NLG (first repeat)
  std::vector<double> similarities;              // NLG, one per repeat
  std::optional<double> similarity;              // NLG, median over repeats
  bool match = false;
};

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

struct ThresholdCalibration {
  double gamma = 0.0;
  double youden = 0.0;
  std::vector<RocPoint> roc_points;  // ascending threshold

  nlohmann::json to_json() const;
  std::string roc_csv() const;
};

struct VerificationReport {
  Task task = Task::Nlu;
  double wacc = 0.0;  // percentage, unrounded
  bool is_fpr = false;
  std::size_t total_samples = 0;
  std::size_t retained = 0;
  std::size_t filtered_out = 0;
  std::optional<double> gamma;
  std::vector<SampleRecord> records;
  std::uint64_t total_queries = 0;
  double wall_ms = 0.0;
  std::vector<std::string> warnings;

  // WACC recomputed from the records.
  double recompute_wacc() const;
  nlohmann::json to_json(bool include_timing = true) const;
  std::string samples_csv() const;
};

// 100 * matches / retained, t-variant label against the cached r-variant label.
VerificationReport wacc_nlu(QueryModel& model, const FilteredSet& filtered, const MappingSet& phi,
                            std::size_t parallelism = 1);
// Filter + wacc_nlu; queries = 2 per sample + 1 per retained sample.
VerificationReport verify_nlu(QueryModel& model, const VerificationSet& set, const MappingSet& phi,
                              const std::vector<std::string>& synonyms, std::size_t parallelism = 1);

class SimilarityProvider {
 public:
  virtual ~SimilarityProvider() = default;
  virtual std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) = 0;
};

// Mean of the reference rows of the text's in-vocabulary tokens.
class PooledEmbeddingProvider : public SimilarityProvider {
 public:
  explicit PooledEmbeddingProvider(EmbeddingMatrix reference) : reference_(std::move(reference)) {}
  std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) override;

 private:
  EmbeddingMatrix reference_;
};

// Throws ZeroVector when either vector has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);
std::string join_tokens(const TokenList& tokens);
// Cosine of the provider's vectors for the space-joined token lists.
double similarity(const TokenList& y, const TokenList& y2, SimilarityProvider& provider);

// Candidates: -inf, midpoints between consecutive distinct sorted scores,
// +inf. A score s counts as positive when s > gamma. J ties go to the higher
// threshold. Throws DegenerateScores, InvalidArgument on empty input.
ThresholdCalibration calibrate_threshold(std::span<const double> pos_scores, std::span<const double> neg_scores);

struct NlgOptions {
  std::size_t max_len = 8;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  std::size_t repeats = 3;  // used when temperature > 0
  std::size_t parallelism = 1;
};

// Per-sample paired similarities (no thresholding).
std::vector<SampleRecord> nlg_records(QueryModel& model, const VerificationSet& set, const MappingSet& phi,
                                      SimilarityProvider& provider, const NlgOptions& options);
// 100 * |{s_i > gamma}| / |D_v| over the unfiltered set.
VerificationReport wacc_nlg(QueryModel& model, const VerificationSet& set, const MappingSet& phi, double gamma,
                            SimilarityProvider& provider, const NlgOptions& options);
// Positive scores from `watermarked`, negative from `reference`.
ThresholdCalibration calibrate_nlg(QueryModel& watermarked, QueryModel& reference, const VerificationSet& set,
                                   const MappingSet& phi, SimilarityProvider& provider, const NlgOptions& options);

// The same procedures run against the unwatermarked reference; the report's
// wacc field is then the FPR. A warning is added when it reaches 50.
VerificationReport fpr_nlu(QueryModel& reference, const VerificationSet& set, const MappingSet& phi,
                           const std::vector<std::string>& synonyms, std::size_t parallelism = 1);
VerificationReport fpr_nlg(QueryModel& reference, const VerificationSet& set, const MappingSet& phi, double gamma,
                           SimilarityProvider& provider, const NlgOptions& options);

}  // namespace embmark
