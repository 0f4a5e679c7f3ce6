#pragma once

// Data-parallel inner loops. Each kernel has a plain serial reference and an
// OpenMP version; the parallel versions give the same answer for any thread
// count (element-wise kernels are bit-identical to serial, reductions use a
// fixed block partition and sum partials in block order).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace embmark::kernels {

using TokenCounts = std::unordered_map<std::string, std::uint64_t>;

// Rows per block in blocked reductions.
inline constexpr std::size_t kReductionBlock = 4096;

namespace serial {

// out[v] = sum_j rows[v*dim + j] * query[j], accumulated in double.
void row_dots(std::span<const float> rows, std::size_t dim, std::span<const double> query,
              std::span<double> out);
std::vector<double> column_mean(std::span<const float> rows, std::size_t dim);
// dim x dim population covariance of the rows around `mean`.
std::vector<double> covariance(std::span<const float> rows, std::size_t dim,
                               std::span<const double> mean);
float max_abs(std::span<const float> values);
// out = clamp(round(in / scale), -qmax, qmax) * scale; scale == 0 copies.
void quantize(std::span<const float> in, double scale, int qmax, std::span<float> out);
// out = alpha * a + (1 - alpha) * b
void blend(std::span<const float> a, std::span<const float> b, double alpha,
           std::span<float> out);
void affine(std::span<float> values, double scale, double shift);
TokenCounts count_tokens(std::span<const std::string> documents);

}  // namespace serial

namespace parallel {

void row_dots(std::span<const float> rows, std::size_t dim, std::span<const double> query,
              std::span<double> out);
std::vector<double> column_mean(std::span<const float> rows, std::size_t dim);
std::vector<double> covariance(std::span<const float> rows, std::size_t dim,
                               std::span<const double> mean);
float max_abs(std::span<const float> values);
void quantize(std::span<const float> in, double scale, int qmax, std::span<float> out);
void blend(std::span<const float> a, std::span<const float> b, double alpha,
           std::span<float> out);
void affine(std::span<float> values, double scale, double shift);
TokenCounts count_tokens(std::span<const std::string> documents);

}  // namespace parallel

}  // namespace embmark::kernels
