#pragma once

#include <cstdint>

namespace steerkit {

// Counter-based generator: the n-th draw of stream (seed, stream_id) is a pure
// function of (seed, stream_id, n), so results do not depend on the platform,
// the standard library's distribution code, or the order threads run in.
//
// Draw n is splitmix64's finalizer applied to key + (n + 1) * golden, where the
// key mixes the seed and the stream id.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0);

  // Independent stream for per-trial work inside a seeded scan.
  Rng split(std::uint64_t stream_id) const;

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (both outputs used).
  double normal();
  // Uniform integer in [lo, hi].
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace steerkit
