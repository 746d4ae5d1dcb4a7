// SPDX-License-Identifier: Apache-2.0
#include "mxkit/linear.hpp"

#include <string>

#include "mxkit/mx_tensor.hpp"

namespace mxkit {
namespace {

// Quantize-dequantize with blocks along rows, or the identity.
RowMatrix fake_quant(const RowMatrix& m, std::size_t block_size, const MiniFloatFormat& fmt,
                     bool enabled) {
  return enabled ? dequant(mxcast(m, block_size, fmt)) : m;
}

std::vector<float> estimated_rho(const RowMatrix& x, const NormSpec& spec) {
  const BlockedView view = block(x, spec.block_size);
  const RowMatrix absmax = block_absmax(view);
  std::vector<float> rho(x.rows());
  for (std::size_t t = 0; t < x.rows(); ++t) rho[t] = inverse_rms_estimate(absmax.row(t), spec);
  return rho;
}

void check_input(const LinearState& state, const RowMatrix& x) {
  state.validate();
  if (x.cols() != state.in_features()) {
    throw Error("input has " + std::to_string(x.cols()) + " features, layer expects " +
                std::to_string(state.in_features()));
  }
}

}  // namespace

void LinearState::validate() const {
  spec.validate();
  if (gamma.size() != weight.cols()) throw Error("gain length does not match weight columns");
  if (weight.cols() % spec.block_size != 0) {
    throw Error("hidden dimension not divisible by block size");
  }
  if (norm == NormKind::kPostRound) {
    if (!table) throw Error("post-round layer needs a post-round table");
    if (table->block_size != spec.block_size) throw Error("post-round table block size mismatch");
  }
}

RowMatrix reference_forward(const LinearState& state, const RowMatrix& x) {
  check_input(state, x);
  const MiniFloatFormat& fmt = state.spec.format();
  const RmsNormResult normed = rmsnorm(x, state.gamma, state.spec.eps);
  const RowMatrix a = fake_quant(normed.y, state.spec.block_size, fmt, state.quantize);
  const RowMatrix w = fake_quant(state.weight, state.spec.block_size, fmt, state.quantize);
  return matmul_nt(a, w);
}

RowMatrix forward(LinearState& state, const RowMatrix& x, bool training) {
  check_input(state, x);
  const MiniFloatFormat& fmt = state.spec.format();
  const std::size_t bs = state.spec.block_size;
  RowMatrix a;
  RowMatrix w;
  std::vector<float> rho;
  switch (state.norm) {
    case NormKind::kRmsNormReference: {
      RmsNormResult normed = rmsnorm(x, state.gamma, state.spec.eps);
      a = fake_quant(normed.y, bs, fmt, state.quantize);
      w = fake_quant(state.weight, bs, fmt, state.quantize);
      rho = std::move(normed.rho);
      break;
    }
    case NormKind::kMxNorm: {
      if (state.quantize) {
        MxNormResult normed = mxnorm(x, state.spec);
        a = dequant(normed.q);
        rho = std::move(normed.rho);
      } else {
        rho = estimated_rho(x, state.spec);
        a = scale_rows(x, rho);
      }
      w = fake_quant(scale_columns(state.weight, state.gamma), bs, fmt, state.quantize);
      break;
    }
    case NormKind::kPostRound: {
      rho = postround_inverse_rms(x, state.spec, *state.table);
      a = state.quantize ? dequant(quantize_normalized(x, rho, bs, fmt)) : scale_rows(x, rho);
      w = fake_quant(scale_columns(state.weight, state.gamma), bs, fmt, state.quantize);
      break;
    }
  }
  RowMatrix h = matmul_nt(a, w);
  if (training) {
    state.cache = LinearCache{x, std::move(rho)};
  } else {
    state.cache.reset();
  }
  return h;
}

LinearGrads backward(const LinearState& state, const RowMatrix& grad_h) {
  if (!state.cache) throw Error("backward without forward");
  state.validate();
  const LinearCache& cache = *state.cache;
  if (grad_h.rows() != cache.x.rows() || grad_h.cols() != state.out_features()) {
    throw Error("gradient shape does not match layer output");
  }
  const MiniFloatFormat& vfmt = state.spec.format();
  const MiniFloatFormat& gfmt = format_of(state.grad_format);
  const std::size_t bs = state.spec.block_size;
  const bool q = state.quantize;

  // dgrad: contraction over out_features, so both operands are blocked along it.
  const RowMatrix grad_h_q = fake_quant(grad_h, bs, gfmt, q);
  const RowMatrix weight_t_q = fake_quant(state.weight.transposed(), bs, vfmt, q);
  const RowMatrix grad_z = matmul_nt(grad_h_q, weight_t_q);

  RmsNormGrads norm_grads = rmsnorm_backward(cache.x, cache.rho, state.gamma, grad_z);

  // wgrad: contraction over tokens, so both operands are re-blocked along it.
  const RowMatrix grad_h_t_q = fake_quant(grad_h.transposed(), bs, gfmt, q);
  const RowMatrix x_bar = scale_rows(cache.x, cache.rho);
  RowMatrix grad_w;
  if (state.norm == NormKind::kRmsNormReference) {
    const RowMatrix y = scale_columns(x_bar, state.gamma);
    grad_w = matmul_nt(grad_h_t_q, fake_quant(y.transposed(), bs, vfmt, q));
  } else {
    grad_w = matmul_nt(grad_h_t_q, fake_quant(x_bar.transposed(), bs, vfmt, q));
    grad_w = scale_columns(grad_w, state.gamma);
  }
  return LinearGrads{std::move(norm_grads.grad_x), std::move(grad_w),
                     std::move(norm_grads.grad_gamma)};
}

}  // namespace mxkit
