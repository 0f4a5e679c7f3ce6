#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embmark/model.hpp"

namespace embmark {

// Zeroes the floor(rate * P) smallest-magnitude entries across every float
// parameter (embeddings, then head_w, head_b, context_w). Ties go to the
// earlier flat position.
ToyModel prune_global(const ToyModel& model, double rate);

// Round-trip symmetric quantization: s = max|x| / (2^(bits-1) - 1),
// x <- clamp(round(x / s)) * s. One scale per tensor, or per embedding row
// when per_row is set. bits must be 8 or 4.
ToyModel quantize(const ToyModel& model, int bits, bool per_row = false);

// theta = alpha * theta_w + (1 - alpha) * theta_ref, parameter-wise.
ToyModel fuse(const ToyModel& model_w, const ToyModel& model_ref, double alpha = 0.5);

// e <- scale * e + shift for every embedding row; heads untouched.
ToyModel linear_transform_embeddings(const ToyModel& model, double scale, double shift);
// Experimental: e <- A e + b with a d x d matrix A (row-major) and shift b.
ToyModel linear_transform_embeddings(const ToyModel& model, const std::vector<double>& matrix,
                                     const std::vector<double>& shift);

inline constexpr double kReinitStddev = 0.02;
// Every embedding entry resampled as N(0, 0.02^2) from CounterRng(seed).
ToyModel reinit_embeddings(const ToyModel& model, std::uint64_t seed);

using SynonymTable = std::map<std::string, std::vector<std::string>>;

// Token k with a table entry is replaced when CounterRng(seed).uniform_at(2k)
// < p, by entry[ floor(uniform_at(2k+1) * size) ].
TokenList rewrite_outputs(const TokenList& tokens, const SynonymTable& table, std::uint64_t seed, double p = 0.5);
SynonymTable load_synonym_table(const std::filesystem::path& path);

enum class AttackKind { Prune, Quantize, Fuse, LinearTransform, Reinit, Rewrite };
std::string_view attack_kind_name(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);

struct AttackConfig {
  AttackKind kind = AttackKind::Prune;
  double prune_rate = 0.0;
  int bits = 8;
  bool per_row = false;
  double fuse_alpha = 0.5;
  std::optional<std::filesystem::path> fuse_reference;
  double scale = 1.0;
  double shift = 0.0;
  std::optional<std::filesystem::path> transform_matrix;  // JSON {"matrix":[...],"shift":[...]}
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> synonym_table;
  double rewrite_p = 0.5;

  // Throws InvalidArgument / ZeroScale.
  void validate() const;
  nlohmann::json to_json() const;
  static AttackConfig from_json(const nlohmann::json& j);
};

// Applies a model-level attack (every kind except Rewrite, which acts on
// outputs at verification time).
ToyModel apply_attack(const ToyModel& model, const AttackConfig& config);

// Loads the bundle at `in`, attacks it, saves to `out` and appends an entry
// {kind, params, input_sha256, output_sha256} to out/attack_log.json
// (continuing the input bundle's log when present). Rewrite attacks only
// record the log entry and copy the model unchanged.
nlohmann::json attack_bundle(const std::filesystem::path& in, const std::filesystem::path& out,
                             const AttackConfig& config);

}  // namespace embmark
