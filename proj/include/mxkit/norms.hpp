// SPDX-License-Identifier: Apache-2.0
//
// RMSNorm and MXNorm. MXNorm estimates the inverse RMS of each row from the
// generalized p-mean of its MX block absmaxes, corrected by a constant c that
// depends only on (p, B), and emits the normalized row directly in MX form.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mxkit/format.hpp"
#include "mxkit/matrix.hpp"
#include "mxkit/mx_tensor.hpp"
#include "mxkit/traffic.hpp"

namespace mxkit {

inline constexpr double kDefaultEpsilon = 1e-12;

struct NormSpec {
  double p = 2.0;
  std::size_t block_size = 32;
  double c = 1.0;  // estimate of the limit of p-mean(block absmax) / RMS
  double eps = kDefaultEpsilon;
  FormatId value_format = FormatId::kE4M3;
  ScaleRounding scale_rounding = ScaleRounding::kRceil;

  const MiniFloatFormat& format() const { return format_of(value_format); }
  void validate() const;

  friend bool operator==(const NormSpec&, const NormSpec&) = default;
};

struct RmsNormResult {
  RowMatrix y;
  std::vector<float> rho;  // inverse RMS per row
};

/// y[t, d] = rho_t * x[t, d] * gamma[d], rho_t = (mean_d x^2 + eps)^(-1/2).
RmsNormResult rmsnorm(const RowMatrix& x, std::span<const float> gamma,
                      double eps = kDefaultEpsilon, AccessCounter* counter = nullptr);

/// Generalized p-mean of each row of a T x K absmax matrix.
std::vector<double> pmean_absmax(const RowMatrix& absmax, double p);

struct CorrectionEstimate {
  double c;
  double standard_error;  // delta-method standard error of c
};

/// Monte Carlo estimate of (E[max_b |Z_b|^p])^(1/p) for Z ~ N(0, 1) in blocks
/// of B, using n_blocks blocks. Deterministic for (p, B, n_blocks, seed)
/// regardless of the thread count.
CorrectionEstimate estimate_c_with_error(double p, std::size_t block_size,
                                         std::uint64_t n_blocks, std::uint64_t seed);
double estimate_c(double p, std::size_t block_size, std::uint64_t n_blocks, std::uint64_t seed);

/// rho~ = c / (p-mean(absmax) + eps) for one row of block absmaxes.
float inverse_rms_estimate(std::span<const float> absmax, const NormSpec& spec);

struct MxNormResult {
  MxTensor q;
  std::vector<float> rho;  // estimated inverse RMS per row
};

/// Fused normalize-and-quantize. No gain is applied here.
MxNormResult mxnorm(const RowMatrix& x, const NormSpec& spec, AccessCounter* counter = nullptr);

/// Quantizes rho_t * x[t, :] with the same scale/value rules as mxnorm.
MxTensor quantize_normalized(const RowMatrix& x, std::span<const float> rho,
                             std::size_t block_size, const MiniFloatFormat& fmt);

/// Infinity-norm bound c * K^(1/p) on the unrounded MXNorm output.
double mxnorm_bound(const NormSpec& spec, std::size_t blocks_per_row);

/// Infinity-norm bound sqrt(D) on the RMSNorm output (unit gain).
double rmsnorm_bound(std::size_t cols);

/// Backward pass of y = rmsnorm(x) * gamma given the gradient with respect to
/// y and a per-row inverse RMS (exact or estimated):
///   grad_gamma_j = sum_t rho_t x[t, j] grad_y[t, j]
///   grad_xbar    = grad_y * gamma
///   grad_x       = rho * grad_xbar - (1/D) rho^3 (sum_d grad_xbar x) x
struct RmsNormGrads {
  RowMatrix grad_x;
  std::vector<float> grad_gamma;
};
RmsNormGrads rmsnorm_backward(const RowMatrix& x, std::span<const float> rho,
                              std::span<const float> gamma, const RowMatrix& grad_y);

}  // namespace mxkit
