#pragma once

// Data-parallel kernels. Each routine exists twice: `serial` is the reference
// kept for tests and benchmarks, `omp` is the OpenMP version used by the
// library. Both accumulate every output element in the same order, so their
// results are bitwise identical regardless of the thread count.
//
// All matrices are row-major spans with explicit dimensions.

#include <cstddef>
#include <functional>
#include <span>

namespace steerkit::kernels {

namespace serial {

// c (m x n) = a (m x k) * b (k x n)
void gemm(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
          std::span<const double> b, std::span<double> c);
// c (m x n) = a^T * b with a stored k x m
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
// c (m x n) = a * b^T with b stored n x k
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
// y (m) = a (m x n) * x
void gemv(std::size_t m, std::size_t n, std::span<const double> a, std::span<const double> x,
          std::span<double> y);

// Calls body(i) for i in [0, count).
void for_each_index(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace serial

namespace omp {

void gemm(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
          std::span<const double> b, std::span<double> c);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
void gemv(std::size_t m, std::size_t n, std::span<const double> a, std::span<const double> x,
          std::span<double> y);

// Parallel over indices; body must only write to slots owned by its index.
// The first exception thrown by any body is rethrown on the calling thread.
void for_each_index(std::size_t count, const std::function<void(std::size_t)>& body);

// Work below this many multiply-adds stays on one thread.
inline constexpr std::size_t kParallelThreshold = 32 * 32 * 32;

}  // namespace omp

}  // namespace steerkit::kernels
