#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "embmark/trigger.hpp"
#include "embmark/vocab.hpp"

namespace embmark {

// |V| x d float32 word-embedding table, row-major, with its vocabulary.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  // Throws ShapeMismatch / VocabMismatch / NonFiniteValue.
  EmbeddingMatrix(Vocab vocab, std::size_t dim, std::vector<float> data);

  std::size_t rows() const { return vocab_.size(); }
  std::size_t dim() const { return dim_; }
  const Vocab& vocab() const { return vocab_; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  std::span<const float> row(std::size_t index) const {
    return std::span<const float>(data_).subspan(index * dim_, dim_);
  }
  std::span<float> row(std::size_t index) { return std::span<float>(data_).subspan(index * dim_, dim_); }
  // Throws TokenNotInVocab.
  std::span<const float> row(std::string_view token) const { return row(vocab_.at(token)); }

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  Vocab vocab_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

// Matrix file holds exactly one F32 tensor named "embedding" of shape [V, d];
// the vocab sidecar is {token: index}.
EmbeddingMatrix load_matrix(const std::filesystem::path& matrix_path,
                            const std::filesystem::path& vocab_path);
void save_matrix(const EmbeddingMatrix& matrix, const std::filesystem::path& matrix_path,
                 const std::filesystem::path& vocab_path);
EmbeddingMatrix decode_matrix(std::string_view matrix_bytes, const nlohmann::json& vocab_json);
std::string encode_matrix(const EmbeddingMatrix& matrix);

struct WatermarkParams {
  double lambda = 1.5;
  double mu = 0.1;
  double sigma2 = 0.01;  // variance
  std::uint64_t noise_seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

// Copy-on-write row replacement:
//   E_w[t_i][j] = (1/lambda) * E_o[r_i][j] + (mu + sqrt(sigma2) * z)
// with z = CounterRng(noise_seed).normal_at(i * d + j) for pair i. When
// mu == 0 and sigma2 == 0 no noise term is added. Every other row is copied
// unchanged. Throws TokenNotInVocab.
EmbeddingMatrix embed_watermark(const EmbeddingMatrix& original, const MappingSet& mapping,
                                const WatermarkParams& params);

struct PairDistance {
  std::string trigger;
  std::string replacement;
  double distance = 0.0;
};

struct StealthReport {
  std::vector<PairDistance> per_pair;
  double mean_distance = 0.0;
};

double l2_distance(std::span<const float> a, std::span<const float> b);
StealthReport pair_distance(const EmbeddingMatrix& matrix, const MappingSet& mapping);

enum class TokenClass { Trigger, Replacement, Ordinary };
std::string_view token_class_name(TokenClass c);

struct LabeledToken {
  std::string token;
  TokenClass cls = TokenClass::Ordinary;
};

struct PcaPoint {
  std::string token;
  TokenClass cls = TokenClass::Ordinary;
  double pc1 = 0.0;
  double pc2 = 0.0;
};

struct PcaResult {
  std::vector<PcaPoint> points;
  std::array<double, 2> explained_variance{};  // top-2 covariance eigenvalues
  double total_variance = 0.0;                  // covariance trace
  std::array<std::vector<double>, 2> components;
};

// Projects the labeled rows onto the top-2 principal components of the whole
// (mean-centered) matrix. Throws InvalidArgument for < 3 tokens or d < 2,
// DegenerateCovariance when every row is identical.
PcaResult pca_export(const EmbeddingMatrix& matrix, std::span<const LabeledToken> tokens);
std::string pca_csv(const PcaResult& result);

// Eigen-decomposition of a dense symmetric matrix (cyclic Jacobi). Returns
// eigenvalues in descending order; eigenvectors column-wise in `vectors`.
void symmetric_eigen(std::vector<double> matrix, std::size_t n, std::vector<double>& values,
                     std::vector<double>& vectors);

}  // namespace embmark
