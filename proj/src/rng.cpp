#include "steerkit/rng.hpp"

#include <cmath>
#include <numbers>

namespace steerkit {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_(stream_id), key_(mix64(seed ^ mix64(stream_id + kGolden))) {}

Rng Rng::split(std::uint64_t stream_id) const {
  // Nested streams: derive from this stream's key so split(a).split(b) differs
  // from split(b).split(a).
  return Rng(key_, stream_id);
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::uniform_int(std::uint64_t lo, std::uint64_t hi) {
  const std::uint64_t span = hi - lo + 1;
  if (span == 0) return next_u64();  // full 64-bit range
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return lo + x % span;
}

}  // namespace steerkit

#include "steerkit/random.hpp"

namespace steerkit {

Matrix random_normal(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = stddev * rng.normal();
  return m;
}

Vector random_normal_vector(Rng& rng, std::size_t n, double stddev) {
  Vector v(n);
  for (double& x : v) x = stddev * rng.normal();
  return v;
}

Matrix random_uniform(Rng& rng, std::size_t rows, std::size_t cols, double half_width) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.uniform(-half_width, half_width);
  return m;
}

Vector random_unit_vector(Rng& rng, std::size_t n) {
  for (;;) {
    Vector v = random_normal_vector(rng, n);
    const double nv = norm2(v);
    if (nv > 1e-8) return scaled(v, 1.0 / nv);
  }
}

Matrix random_orthonormal(Rng& rng, std::size_t n, std::size_t k) {
  for (;;) {
    Matrix q = orthonormal_basis(random_normal(rng, n, k));
    if (q.cols() == k) return q;
  }
}

}  // namespace steerkit
