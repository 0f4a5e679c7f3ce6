#include "embmark/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "embmark/error.hpp"
#include "embmark/kernels.hpp"
#include "embmark/rng.hpp"
#include "embmark/safetensors.hpp"

namespace embmark {

EmbeddingMatrix::EmbeddingMatrix(Vocab vocab, std::size_t dim, std::vector<float> data)
    : vocab_(std::move(vocab)), dim_(dim), data_(std::move(data)) {
  if (dim_ == 0) throw Error(Errc::ShapeMismatch, "embedding dimension must be positive");
  if (data_.size() != vocab_.size() * dim_) {
    throw Error(Errc::VocabMismatch, "matrix has " + std::to_string(data_.size() / dim_) + " rows but vocab has " +
                                         std::to_string(vocab_.size()) + " tokens");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw Error(Errc::NonFiniteValue, "non-finite value at row " + std::to_string(i / dim_) + ", column " +
                                            std::to_string(i % dim_));
    }
  }
}

std::string encode_matrix(const EmbeddingMatrix& matrix) {
  Tensor t{"embedding", {matrix.rows(), matrix.dim()}, {}};
  t.data.assign(matrix.data().begin(), matrix.data().end());
  return encode_safetensors({t});
}

EmbeddingMatrix decode_matrix(std::string_view matrix_bytes, const nlohmann::json& vocab_json) {
  auto tensors = decode_safetensors(matrix_bytes);
  if (tensors.size() != 1 || tensors[0].name != "embedding") {
    throw Error(Errc::FormatError, "matrix file must hold exactly one tensor named 'embedding'");
  }
  auto& t = tensors[0];
  if (t.shape.size() != 2) throw Error(Errc::FormatError, "embedding tensor must be 2-D");
  const std::size_t rows = t.shape[0];
  const std::size_t dim = t.shape[1];
  return EmbeddingMatrix(Vocab::from_json(vocab_json, rows), dim, std::move(t.data));
}

EmbeddingMatrix load_matrix(const std::filesystem::path& matrix_path,
                            const std::filesystem::path& vocab_path) {
  nlohmann::json vocab;
  try {
    vocab = nlohmann::json::parse(read_text_file(vocab_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::FormatError, vocab_path.string() + ": " + e.what());
  }
  return decode_matrix(read_text_file(matrix_path), vocab);
}

void save_matrix(const EmbeddingMatrix& matrix, const std::filesystem::path& matrix_path,
                 const std::filesystem::path& vocab_path) {
  write_text_file(matrix_path, encode_matrix(matrix));
  write_text_file(vocab_path, matrix.vocab().to_json().dump() + "\n");
}

void WatermarkParams::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw Error(Errc::InvalidArgument, "lambda must be positive");
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw Error(Errc::InvalidArgument, "sigma2 must be non-negative");
  if (!std::isfinite(mu)) throw Error(Errc::InvalidArgument, "mu must be finite");
}

nlohmann::json WatermarkParams::to_json() const {
  return {{"lambda", lambda}, {"mu", mu}, {"sigma2", sigma2}, {"noise_seed", noise_seed}};
}

EmbeddingMatrix embed_watermark(const EmbeddingMatrix& original, const MappingSet& mapping,
                                const WatermarkParams& params) {
  params.validate();
  const std::size_t d = original.dim();
  const auto& vocab = original.vocab();
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  for (const auto& p : mapping.pairs) rows.emplace_back(vocab.at(p.trigger), vocab.at(p.replacement));

  EmbeddingMatrix out = original;
  const CounterRng rng(params.noise_seed);
  const double inv_lambda = 1.0 / params.lambda;
  const double sigma = std::sqrt(params.sigma2);
  const bool noisy = params.mu != 0.0 || params.sigma2 != 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = original.row(rows[i].second);
    auto dst = out.row(rows[i].first);
    for (std::size_t j = 0; j < d; ++j) {
      double v = inv_lambda * static_cast<double>(src[j]);
      if (noisy) v += params.mu + sigma * rng.normal_at(i * d + j);
      dst[j] = static_cast<float>(v);
    }
  }
  return out;
}

double l2_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

StealthReport pair_distance(const EmbeddingMatrix& matrix, const MappingSet& mapping) {
  StealthReport report;
  double sum = 0.0;
  for (const auto& p : mapping.pairs) {
    const double dist = l2_distance(matrix.row(p.trigger), matrix.row(p.replacement));
    report.per_pair.push_back({p.trigger, p.replacement, dist});
    sum += dist;
  }
  if (!report.per_pair.empty()) report.mean_distance = sum / static_cast<double>(report.per_pair.size());
  return report;
}

std::string_view token_class_name(TokenClass c) {
  switch (c) {
    case TokenClass::Trigger: return "trigger";
    case TokenClass::Replacement: return "replacement";
    case TokenClass::Ordinary: return "ordinary";
  }
  return "ordinary";
}

void symmetric_eigen(std::vector<double> a, std::size_t n, std::vector<double>& values,
                     std::vector<double>& vectors) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) s += a[p * n + q] * a[p * n + q];
    return s;
  };
  double scale = 0.0;
  for (double x : a) scale += x * x;

  for (int sweep = 0; sweep < 100 && off_norm() > 1e-30 * scale; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k];
          const double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p];
          const double vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });
  values.assign(n, 0.0);
  vectors.assign(n * n, 0.0);
  for (std::size_t col = 0; col < n; ++col) {
    const std::size_t src = order[col];
    values[col] = a[src * n + src];
    // Sign convention: largest-magnitude component positive.
    std::size_t arg = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::fabs(v[k * n + src]) > std::fabs(v[arg * n + src])) arg = k;
    const double sign = v[arg * n + src] < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) vectors[k * n + col] = sign * v[k * n + src];
  }
}

PcaResult pca_export(const EmbeddingMatrix& matrix, std::span<const LabeledToken> tokens) {
  const std::size_t d = matrix.dim();
  if (tokens.size() < 3) throw Error(Errc::InvalidArgument, "PCA export needs at least 3 labeled tokens");
  if (d < 2) throw Error(Errc::InvalidArgument, "PCA export needs d >= 2");
  std::vector<std::size_t> rows;
  for (const auto& t : tokens) rows.push_back(matrix.vocab().at(t.token));

  const auto mean = kernels::parallel::column_mean(matrix.data(), d);
  const auto cov = kernels::parallel::covariance(matrix.data(), d, mean);
  double trace = 0.0;
  double mean_sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    trace += cov[j * d + j];
    mean_sq += mean[j] * mean[j];
  }
  if (trace <= 1e-24 * (1.0 + mean_sq)) {
    throw Error(Errc::DegenerateCovariance, "all embedding rows are identical");
  }

  std::vector<double> values, vectors;
  symmetric_eigen(cov, d, values, vectors);

  PcaResult result;
  result.total_variance = trace;
  for (int c = 0; c < 2; ++c) {
    result.explained_variance[c] = values[c];
    result.components[c].resize(d);
    for (std::size_t k = 0; k < d; ++k) result.components[c][k] = vectors[k * d + c];
  }
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto row = matrix.row(rows[t]);
    double pc[2] = {0.0, 0.0};
    for (int c = 0; c < 2; ++c)
      for (std::size_t k = 0; k < d; ++k) pc[c] += (static_cast<double>(row[k]) - mean[k]) * result.components[c][k];
    result.points.push_back({tokens[t].token, tokens[t].cls, pc[0], pc[1]});
  }
  return result;
}

std::string pca_csv(const PcaResult& result) {
  std::string out = "token,class,pc1,pc2\n";
  char buf[64];
  for (const auto& p : result.points) {
    out += p.token;
    out += ',';
    out += token_class_name(p.cls);
    std::snprintf(buf, sizeof(buf), ",%.9g,%.9g\n", p.pc1, p.pc2);
    out += buf;
  }
  return out;
}

}  // namespace embmark
