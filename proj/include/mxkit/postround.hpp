// SPDX-License-Identifier: Apache-2.0
//
// Post-round MXNorm: recovers the RMS of a Gaussian row from its
// power-of-two-rounded block absmaxes by inverting
//
//   f(sigma) = E[max_b r(|X_b|)],  X_b ~ N(0, sigma^2),  r(x) = 2^floor(log2 x)
//
// f(2 sigma) = 2 f(sigma), so f^-1 is tabulated on [1, 2] and extended to all
// positive arguments by power-of-two rescaling.
#pragma once

#include <cstddef>
#include <vector>

#include "mxkit/matrix.hpp"
#include "mxkit/mx_tensor.hpp"
#include "mxkit/norms.hpp"

namespace mxkit {

inline constexpr int kDefaultTableResolution = 64;
inline constexpr int kDefaultTruncation = 40;

/// P(max_b r(|X_b|) = 2^j) for j = -J .. J-1 after sigma is rescaled into
/// [1, 2). Entry i holds j = i - J. Each mass is
/// F(2^(j+1))^B - F(2^j)^B with F(x) = 2 Phi(x / sigma) - 1.
std::vector<double> rounded_scale_masses(double sigma, std::size_t block_size,
                                         int truncation = kDefaultTruncation);

/// Expected maximum of the floor-rounded absolute values of a Gaussian block.
double f_expected_max_scale(double sigma, std::size_t block_size,
                            int truncation = kDefaultTruncation);

/// f^-1(y) by bisection to `rel_width` relative bracket width.
double f_inverse_bisect(double y, std::size_t block_size, int truncation = kDefaultTruncation,
                        double rel_width = 1e-12);

struct PostRoundTable {
  std::size_t block_size = 0;
  int resolution = kDefaultTableResolution;
  int truncation = kDefaultTruncation;
  std::vector<double> grid;  // grid[i] = f^-1(2^(i / resolution)), i = 0..resolution

  static PostRoundTable build(std::size_t block_size, int resolution = kDefaultTableResolution,
                              int truncation = kDefaultTruncation);

  /// Shape and monotonicity checks; throws on failure.
  void validate() const;

  friend bool operator==(const PostRoundTable&, const PostRoundTable&) = default;
};

/// Interpolated f^-1 for finite y > 0.
double f_inverse(double y, const PostRoundTable& table);

struct PostRoundResult {
  MxTensor q;
  std::vector<float> rho;  // 1 / estimated RMS per row
};

/// Per-row inverse-RMS estimate from floor-rounded block absmaxes. Rounded
/// exponents are clamped to the range an E8M0 scale can express, so an
/// all-zero row still yields a finite estimate.
std::vector<float> postround_inverse_rms(const RowMatrix& x, const NormSpec& spec,
                                         const PostRoundTable& table);

PostRoundResult postround_mxnorm(const RowMatrix& x, const NormSpec& spec,
                                 const PostRoundTable& table);

}  // namespace mxkit
