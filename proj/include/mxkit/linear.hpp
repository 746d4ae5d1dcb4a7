// SPDX-License-Identifier: Apache-2.0
//
// Norm + Linear layers with MX-quantized matmuls.
//
// kMxNorm:   H = dequant(MXNorm(X)) . dequant(MXCast(W * gamma))^T
// kPostRound: as kMxNorm, with the inverse RMS recovered from rounded scales
// kRmsNormReference:
//            H = dequant(MXCast(RMSNorm(X) * gamma)) . dequant(MXCast(W))^T
//
// Every variant backpropagates through the RMSNorm gradient formulas using the
// cached inverse-RMS (straight-through for the estimated variants). All
// quantized matmuls are emulated as dequantize-then-multiply with blocks along
// the contraction axis.
#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "mxkit/format.hpp"
#include "mxkit/matrix.hpp"
#include "mxkit/norms.hpp"
#include "mxkit/postround.hpp"

namespace mxkit {

enum class NormKind : std::uint8_t { kMxNorm, kPostRound, kRmsNormReference };

/// Only the layer input and the per-row inverse RMS are kept for backward.
struct LinearCache {
  RowMatrix x;
  std::vector<float> rho;
};

struct LinearState {
  RowMatrix weight;          // out_features x in_features
  std::vector<float> gamma;  // in_features
  NormSpec spec;
  FormatId grad_format = FormatId::kE4M3;
  NormKind norm = NormKind::kMxNorm;
  bool quantize = true;  // false replaces every cast by the identity
  std::shared_ptr<const PostRoundTable> table;  // required for kPostRound
  std::optional<LinearCache> cache;

  std::size_t in_features() const { return weight.cols(); }
  std::size_t out_features() const { return weight.rows(); }

  /// Shape invariants: gamma length == in_features, block size divides
  /// in_features, table present and matching for kPostRound.
  void validate() const;
};

struct LinearGrads {
  RowMatrix grad_x;
  RowMatrix grad_w;
  std::vector<float> grad_gamma;
};

/// Runs the configured variant. With training set, caches (x, rho) for
/// backward; otherwise clears any cache.
RowMatrix forward(LinearState& state, const RowMatrix& x, bool training);

/// RMSNorm + MXCast reference path for the state's weights, without caching.
RowMatrix reference_forward(const LinearState& state, const RowMatrix& x);

/// Throws "backward without forward" when no cache is present. With
/// quantization on, the token count and out_features must be multiples of the
/// block size (they are contraction axes of the gradient matmuls).
LinearGrads backward(const LinearState& state, const RowMatrix& grad_h);

}  // namespace mxkit
