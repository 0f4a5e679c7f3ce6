#include "embmark/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "embmark/corpus.hpp"

namespace embmark::kernels {

namespace {

inline float quantize_one(float x, double scale, int qmax) {
  double q = std::round(static_cast<double>(x) / scale);
  q = std::clamp(q, -static_cast<double>(qmax), static_cast<double>(qmax));
  return static_cast<float>(q * scale);
}

// Four interleaved partial sums, combined as (a0 + a1) + (a2 + a3).
inline double dot(const float* row, const double* query, std::size_t dim) {
  double a[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t j = 0;
  for (; j + 4 <= dim; j += 4)
    for (std::size_t k = 0; k < 4; ++k) a[k] += static_cast<double>(row[j + k]) * query[j + k];
  for (; j < dim; ++j) a[j % 4] += static_cast<double>(row[j]) * query[j];
  return (a[0] + a[1]) + (a[2] + a[3]);
}

// Accumulates the upper triangle of sum (x - mean)(x - mean)^T for rows [begin, end).
void accumulate_scatter(const float* rows, std::size_t dim, const double* mean,
                        std::size_t begin, std::size_t end, double* out,
                        std::vector<double>& centered) {
  for (std::size_t r = begin; r < end; ++r) {
    const float* row = rows + r * dim;
    for (std::size_t j = 0; j < dim; ++j) centered[j] = static_cast<double>(row[j]) - mean[j];
    for (std::size_t a = 0; a < dim; ++a) {
      const double ca = centered[a];
      double* out_row = out + a * dim;
      for (std::size_t b = a; b < dim; ++b) out_row[b] += ca * centered[b];
    }
  }
}

void finish_covariance(std::vector<double>& cov, std::size_t dim, std::size_t rows) {
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = a; b < dim; ++b) {
      cov[a * dim + b] *= inv;
      cov[b * dim + a] = cov[a * dim + b];
    }
  }
}

}  // namespace

namespace serial {

void row_dots(std::span<const float> rows, std::size_t dim, std::span<const double> query,
              std::span<double> out) {
  const std::size_t n = rows.size() / dim;
  for (std::size_t v = 0; v < n; ++v) out[v] = dot(rows.data() + v * dim, query.data(), dim);
}

std::vector<double> column_mean(std::span<const float> rows, std::size_t dim) {
  const std::size_t n = rows.size() / dim;
  std::vector<double> mean(dim, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += rows[r * dim + j];
  for (auto& m : mean) m /= static_cast<double>(n);
  return mean;
}

std::vector<double> covariance(std::span<const float> rows, std::size_t dim,
                               std::span<const double> mean) {
  const std::size_t n = rows.size() / dim;
  std::vector<double> cov(dim * dim, 0.0);
  std::vector<double> centered(dim);
  accumulate_scatter(rows.data(), dim, mean.data(), 0, n, cov.data(), centered);
  finish_covariance(cov, dim, n);
  return cov;
}

float max_abs(std::span<const float> values) {
  float m = 0.0f;
  for (float v : values) m = std::max(m, std::fabs(v));
  return m;
}

void quantize(std::span<const float> in, double scale, int qmax, std::span<float> out) {
  if (scale == 0.0) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = quantize_one(in[i], scale, qmax);
}

void blend(std::span<const float> a, std::span<const float> b, double alpha,
           std::span<float> out) {
  const double beta = 1.0 - alpha;
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = static_cast<float>(alpha * a[i] + beta * b[i]);
}

void affine(std::span<float> values, double scale, double shift) {
  for (auto& v : values) v = static_cast<float>(scale * v + shift);
}

TokenCounts count_tokens(std::span<const std::string> documents) {
  TokenCounts counts;
  for (const auto& doc : documents)
    for (auto& tok : tokenize(doc)) ++counts[std::move(tok)];
  return counts;
}

}  // namespace serial

namespace parallel {

void row_dots(std::span<const float> rows, std::size_t dim, std::span<const double> query,
              std::span<double> out) {
  const auto n = static_cast<std::int64_t>(rows.size() / dim);
  const float* data = rows.data();
  const double* q = query.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < n; ++v) out[v] = dot(data + v * dim, q, dim);
}

std::vector<double> column_mean(std::span<const float> rows, std::size_t dim) {
  const std::size_t n = rows.size() / dim;
  const std::size_t blocks = (n + kReductionBlock - 1) / kReductionBlock;
  std::vector<double> partial(blocks * dim, 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t blk = 0; blk < static_cast<std::int64_t>(blocks); ++blk) {
    const std::size_t begin = blk * kReductionBlock;
    const std::size_t end = std::min(n, begin + kReductionBlock);
    double* acc = partial.data() + blk * dim;
    for (std::size_t r = begin; r < end; ++r)
      for (std::size_t j = 0; j < dim; ++j) acc[j] += rows[r * dim + j];
  }
  std::vector<double> mean(dim, 0.0);
  for (std::size_t blk = 0; blk < blocks; ++blk)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += partial[blk * dim + j];
  for (auto& m : mean) m /= static_cast<double>(n);
  return mean;
}

std::vector<double> covariance(std::span<const float> rows, std::size_t dim,
                               std::span<const double> mean) {
  const std::size_t n = rows.size() / dim;
  const std::size_t blocks = (n + kReductionBlock - 1) / kReductionBlock;
  std::vector<double> partial(blocks * dim * dim, 0.0);
#pragma omp parallel
  {
    std::vector<double> centered(dim);
#pragma omp for schedule(static)
    for (std::int64_t blk = 0; blk < static_cast<std::int64_t>(blocks); ++blk) {
      const std::size_t begin = blk * kReductionBlock;
      const std::size_t end = std::min(n, begin + kReductionBlock);
      accumulate_scatter(rows.data(), dim, mean.data(), begin, end,
                         partial.data() + blk * dim * dim, centered);
    }
  }
  std::vector<double> cov(dim * dim, 0.0);
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const double* p = partial.data() + blk * dim * dim;
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = a; b < dim; ++b) cov[a * dim + b] += p[a * dim + b];
  }
  finish_covariance(cov, dim, n);
  return cov;
}

float max_abs(std::span<const float> values) {
  float m = 0.0f;
  const auto n = static_cast<std::int64_t>(values.size());
#pragma omp parallel for reduction(max : m) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) m = std::max(m, std::fabs(values[i]));
  return m;
}

void quantize(std::span<const float> in, double scale, int qmax, std::span<float> out) {
  if (scale == 0.0) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  const auto n = static_cast<std::int64_t>(in.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = quantize_one(in[i], scale, qmax);
}

void blend(std::span<const float> a, std::span<const float> b, double alpha,
           std::span<float> out) {
  const double beta = 1.0 - alpha;
  const auto n = static_cast<std::int64_t>(a.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = static_cast<float>(alpha * a[i] + beta * b[i]);
}

void affine(std::span<float> values, double scale, double shift) {
  const auto n = static_cast<std::int64_t>(values.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    values[i] = static_cast<float>(scale * values[i] + shift);
}

TokenCounts count_tokens(std::span<const std::string> documents) {
  TokenCounts merged;
  const auto n = static_cast<std::int64_t>(documents.size());
#pragma omp parallel
  {
    TokenCounts local;
#pragma omp for schedule(static) nowait
    for (std::int64_t d = 0; d < n; ++d)
      for (auto& tok : tokenize(documents[d])) ++local[std::move(tok)];
#pragma omp critical(embmark_count_merge)
    for (auto& [tok, c] : local) merged[tok] += c;
  }
  return merged;
}

}  // namespace parallel

}  // namespace embmark::kernels
