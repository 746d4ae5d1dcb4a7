// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "mxkit/matrix.hpp"

namespace mxkit {

/// Deterministic generator for (seed, stream). Distinct streams are
/// statistically independent, which lets parallel chunks derive their own
/// generators from one root seed.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Independent child seed, e.g. one per trial of a study.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// T x D matrix of i.i.d. N(0, sigma^2) samples.
RowMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                          double sigma = 1.0);

}  // namespace mxkit
