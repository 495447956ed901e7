#pragma once

#include "steerkit/numkit.hpp"
#include "steerkit/rng.hpp"

namespace steerkit {

// i.i.d. N(0, stddev^2) entries, filled row-major.
Matrix random_normal(Rng& rng, std::size_t rows, std::size_t cols, double stddev = 1.0);
Vector random_normal_vector(Rng& rng, std::size_t n, double stddev = 1.0);
// i.i.d. uniform on [-half_width, half_width].
Matrix random_uniform(Rng& rng, std::size_t rows, std::size_t cols, double half_width);
// Uniform on the unit sphere.
Vector random_unit_vector(Rng& rng, std::size_t n);
// Haar-ish orthonormal n x k basis (orthonormalised Gaussian).
Matrix random_orthonormal(Rng& rng, std::size_t n, std::size_t k);

}  // namespace steerkit
