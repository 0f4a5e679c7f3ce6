#include <gtest/gtest.h>
#include <omp.h>

#include <string>
#include <vector>

#include "embmark/kernels.hpp"
#include "embmark/rng.hpp"

namespace embmark::kernels {
namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  const CounterRng rng(seed);
  std::vector<float> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = static_cast<float>(rng.normal_at(k));
  return v;
}

class KernelParity : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(saved_); }
  int saved_ = 1;
};

constexpr std::size_t kDim = 24;
constexpr std::size_t kRows = 3 * kReductionBlock + 17;

TEST_P(KernelParity, RowDots) {
  const auto rows = random_floats(kRows * kDim, 1);
  std::vector<double> q(kDim);
  for (std::size_t j = 0; j < kDim; ++j) q[j] = 0.1 * static_cast<double>(j) - 1.0;
  std::vector<double> a(kRows), b(kRows);
  serial::row_dots(rows, kDim, q, a);
  parallel::row_dots(rows, kDim, q, b);
  EXPECT_EQ(a, b);
}

TEST_P(KernelParity, ColumnMeanAndCovariance) {
  const auto rows = random_floats(kRows * kDim, 2);
  const auto m1 = serial::column_mean(rows, kDim);
  const auto m2 = parallel::column_mean(rows, kDim);
  ASSERT_EQ(m1.size(), m2.size());
  for (std::size_t j = 0; j < kDim; ++j) EXPECT_NEAR(m1[j], m2[j], 1e-12);
  const auto c1 = serial::covariance(rows, kDim, m1);
  const auto c2 = parallel::covariance(rows, kDim, m1);
  for (std::size_t k = 0; k < c1.size(); ++k) EXPECT_NEAR(c1[k], c2[k], 1e-12);
  // Parallel results do not depend on the thread count.
  omp_set_num_threads(1);
  EXPECT_EQ(parallel::column_mean(rows, kDim), m2);
  EXPECT_EQ(parallel::covariance(rows, kDim, m1), c2);
}

TEST_P(KernelParity, ElementWise) {
  const auto a = random_floats(50'001, 3);
  const auto b = random_floats(50'001, 4);
  EXPECT_EQ(serial::max_abs(a), parallel::max_abs(a));
  const double scale = serial::max_abs(a) / 127.0;
  std::vector<float> q1(a.size()), q2(a.size());
  serial::quantize(a, scale, 127, q1);
  parallel::quantize(a, scale, 127, q2);
  EXPECT_EQ(q1, q2);
  serial::blend(a, b, 0.3, q1);
  parallel::blend(a, b, 0.3, q2);
  EXPECT_EQ(q1, q2);
  auto x1 = a, x2 = a;
  serial::affine(x1, -1.5, 0.25);
  parallel::affine(x2, -1.5, 0.25);
  EXPECT_EQ(x1, x2);
}

TEST_P(KernelParity, CountTokens) {
  std::vector<std::string> docs;
  const CounterRng rng(5);
  for (std::size_t d = 0; d < 500; ++d) {
    std::string doc;
    for (std::size_t k = 0; k < 30; ++k) doc += "t" + std::to_string(rng.word_at(d * 30 + k) % 97) + " ";
    docs.push_back(doc);
  }
  EXPECT_EQ(serial::count_tokens(docs), parallel::count_tokens(docs));
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelParity, ::testing::Values(1, 2, 4));

TEST(Kernels, QuantizeZeroScaleCopies) {
  const std::vector<float> zeros(10, 0.0f);
  std::vector<float> out(10, 1.0f);
  serial::quantize(zeros, 0.0, 127, out);
  EXPECT_EQ(out, zeros);
}

}  // namespace
}  // namespace embmark::kernels
