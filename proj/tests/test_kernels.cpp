#include <gtest/gtest.h>

#include <cstring>

#include <omp.h>

#include <atomic>
#include <stdexcept>

#include "steerkit/kernels.hpp"
#include "steerkit/random.hpp"

using namespace steerkit;

namespace {

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a.data()[i], &b.data()[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

class KernelParity : public ::testing::TestWithParam<std::tuple<int, int, int>> {};

TEST_P(KernelParity, SerialAndOmpBitwiseEqual) {
  const auto [m, k, n] = GetParam();
  Rng rng(static_cast<std::uint64_t>(m * 10000 + k * 100 + n));
  const Matrix a = random_normal(rng, m, k);
  const Matrix b = random_normal(rng, k, n);
  const Matrix at = a.transposed();
  const Matrix bt = b.transposed();
  const Vector x = random_normal_vector(rng, k);
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    Matrix c1(m, n), c2(m, n);
    kernels::serial::gemm(m, k, n, a.data(), b.data(), c1.data());
    kernels::omp::gemm(m, k, n, a.data(), b.data(), c2.data());
    EXPECT_TRUE(bitwise_equal(c1, c2));
    kernels::serial::gemm_tn(m, k, n, at.data(), b.data(), c1.data());
    kernels::omp::gemm_tn(m, k, n, at.data(), b.data(), c2.data());
    EXPECT_TRUE(bitwise_equal(c1, c2));
    kernels::serial::gemm_nt(m, k, n, a.data(), bt.data(), c1.data());
    kernels::omp::gemm_nt(m, k, n, a.data(), bt.data(), c2.data());
    EXPECT_TRUE(bitwise_equal(c1, c2));
    Matrix y1(m, 1), y2(m, 1);
    kernels::serial::gemv(m, k, a.data(), x, y1.data());
    kernels::omp::gemv(m, k, a.data(), x, y2.data());
    EXPECT_TRUE(bitwise_equal(y1, y2));
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, KernelParity,
                         ::testing::Values(std::tuple{1, 1, 1}, std::tuple{1, 64, 64},
                                           std::tuple{7, 3, 5}, std::tuple{33, 17, 65},
                                           std::tuple{64, 64, 64}, std::tuple{128, 31, 9}));

TEST(ForEachIndex, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  kernels::omp::for_each_index(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  kernels::omp::for_each_index(0, [](std::size_t) { FAIL(); });
}

TEST(ForEachIndex, RethrowsBodyException) {
  EXPECT_THROW(kernels::omp::for_each_index(50,
                                            [](std::size_t i) {
                                              if (i == 17) throw std::runtime_error("boom");
                                            }),
               std::runtime_error);
  EXPECT_THROW(kernels::serial::for_each_index(
                   3, [](std::size_t) { throw std::logic_error("x"); }),
               std::logic_error);
}
