// SPDX-License-Identifier: Apache-2.0
#include "mxkit/norms.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mxkit/parallel.hpp"
#include "mxkit/random.hpp"
#include "row_kernels.hpp"

namespace mxkit {
namespace {

double pow_p(double v, double p) {
  if (p == 1.0) return v;
  if (p == 2.0) return v * v;
  return std::pow(v, p);
}

double root_p(double v, double p) {
  if (p == 1.0) return v;
  if (p == 2.0) return std::sqrt(v);
  return std::pow(v, 1.0 / p);
}

double row_pmean(std::span<const float> absmax, double p) {
  double acc = 0.0;
  for (float m : absmax) acc += pow_p(m, p);
  return root_p(acc / static_cast<double>(absmax.size()), p);
}

constexpr std::uint64_t kBlocksPerChunk = 1u << 14;

}  // namespace

void NormSpec::validate() const {
  if (!(p > 0.0) || !std::isfinite(p)) throw Error("norm exponent p must be positive");
  if (block_size == 0) throw Error("block size must be positive");
  if (!(c > 0.0) || !std::isfinite(c)) throw Error("correction constant c must be positive");
  if (!(eps > 0.0)) throw Error("epsilon must be positive");
}

RmsNormResult rmsnorm(const RowMatrix& x, std::span<const float> gamma, double eps,
                      AccessCounter* counter) {
  if (gamma.size() != x.cols()) throw Error("gain length does not match hidden dimension");
  RmsNormResult out{RowMatrix(x.rows(), x.cols()), std::vector<float>(x.rows())};
  const std::size_t d = x.cols();
  parallel_for(x.rows(), [&](std::size_t lo, std::size_t hi) {
    AccessCounter local;
    for (std::size_t t = lo; t < hi; ++t) {
      const auto row = x.row(t);
      double sum_sq = 0.0;
      for (float v : row) sum_sq += static_cast<double>(v) * v;
      local.reads += d;
      const float rho = static_cast<float>(1.0 / std::sqrt(sum_sq / static_cast<double>(d) + eps));
      out.rho[t] = rho;
      auto y = out.y.row(t);
      for (std::size_t j = 0; j < d; ++j) y[j] = row[j] * rho * gamma[j];
      local.reads += d;
      local.writes += d;
    }
    detail::merge_counter(counter, local);
  });
  return out;
}

std::vector<double> pmean_absmax(const RowMatrix& absmax, double p) {
  if (!(p > 0.0)) throw Error("norm exponent p must be positive");
  std::vector<double> out(absmax.rows());
  for (std::size_t t = 0; t < absmax.rows(); ++t) {
    for (float m : absmax.row(t)) {
      if (m < 0.0f) throw Error("block absmax must be non-negative");
    }
    out[t] = row_pmean(absmax.row(t), p);
  }
  return out;
}

CorrectionEstimate estimate_c_with_error(double p, std::size_t block_size,
                                         std::uint64_t n_blocks, std::uint64_t seed) {
  if (n_blocks == 0) throw Error("estimate_c needs at least one block");
  if (block_size == 0) throw Error("block size must be positive");
  if (!(p > 0.0)) throw Error("norm exponent p must be positive");
  const std::uint64_t chunks = (n_blocks + kBlocksPerChunk - 1) / kBlocksPerChunk;
  std::vector<double> sums(chunks), sums_sq(chunks);
  parallel_for(chunks, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t chunk = lo; chunk < hi; ++chunk) {
      auto rng = make_rng(seed, chunk);
      std::normal_distribution<double> normal;
      const std::uint64_t begin = chunk * kBlocksPerChunk;
      const std::uint64_t end = std::min(n_blocks, begin + kBlocksPerChunk);
      double s = 0.0, s2 = 0.0;
      for (std::uint64_t k = begin; k < end; ++k) {
        double mu = 0.0;
        for (std::size_t b = 0; b < block_size; ++b) mu = std::max(mu, std::fabs(normal(rng)));
        const double v = pow_p(mu, p);
        s += v;
        s2 += v * v;
      }
      sums[chunk] = s;
      sums_sq[chunk] = s2;
    }
  });
  double s = 0.0, s2 = 0.0;
  for (std::uint64_t i = 0; i < chunks; ++i) {
    s += sums[i];
    s2 += sums_sq[i];
  }
  const double n = static_cast<double>(n_blocks);
  const double mean = s / n;
  const double var = n > 1 ? std::max(0.0, (s2 - n * mean * mean) / (n - 1)) : 0.0;
  const double c = root_p(mean, p);
  // d/dM M^(1/p) = (1/p) M^(1/p - 1)
  const double dc = c / (p * mean);
  return {c, dc * std::sqrt(var / n)};
}

double estimate_c(double p, std::size_t block_size, std::uint64_t n_blocks, std::uint64_t seed) {
  return estimate_c_with_error(p, block_size, n_blocks, seed).c;
}

float inverse_rms_estimate(std::span<const float> absmax, const NormSpec& spec) {
  return static_cast<float>(spec.c / (row_pmean(absmax, spec.p) + spec.eps));
}

MxNormResult mxnorm(const RowMatrix& x, const NormSpec& spec, AccessCounter* counter) {
  spec.validate();
  const BlockedView view = block(x, spec.block_size);
  const MiniFloatFormat& fmt = spec.format();
  const std::size_t k_count = view.blocks_per_row;
  const std::size_t d = x.cols();
  MxNormResult out;
  out.q.rows = x.rows();
  out.q.blocks_per_row = k_count;
  out.q.block_size = spec.block_size;
  out.q.value_format = fmt.id;
  out.q.scales.resize(x.rows() * k_count);
  out.q.values.resize(x.rows() * d);
  out.rho.resize(x.rows());
  parallel_for(x.rows(), [&](std::size_t lo, std::size_t hi) {
    std::vector<float> absmax(k_count);
    AccessCounter local;
    for (std::size_t t = lo; t < hi; ++t) {
      detail::row_absmax(x.row(t), spec.block_size, absmax);
      local.reads += d;
      const float rho = inverse_rms_estimate(absmax, spec);
      local.reads += k_count;
      out.rho[t] = rho;
      detail::quantize_scaled_row(x.row(t), absmax, rho, spec.block_size, fmt,
                                  out.q.scales.data() + t * k_count,
                                  out.q.values.data() + t * d);
      local.reads += d;
      local.writes += d;
    }
    detail::merge_counter(counter, local);
  });
  return out;
}

MxTensor quantize_normalized(const RowMatrix& x, std::span<const float> rho,
                             std::size_t block_size, const MiniFloatFormat& fmt) {
  if (rho.size() != x.rows()) throw Error("inverse RMS length does not match row count");
  const BlockedView view = block(x, block_size);
  const std::size_t k_count = view.blocks_per_row;
  const std::size_t d = x.cols();
  MxTensor q;
  q.rows = x.rows();
  q.blocks_per_row = k_count;
  q.block_size = block_size;
  q.value_format = fmt.id;
  q.scales.resize(q.rows * k_count);
  q.values.resize(q.rows * d);
  parallel_for(q.rows, [&](std::size_t lo, std::size_t hi) {
    std::vector<float> absmax(k_count);
    for (std::size_t t = lo; t < hi; ++t) {
      detail::row_absmax(x.row(t), block_size, absmax);
      detail::quantize_scaled_row(x.row(t), absmax, rho[t], block_size, fmt,
                                  q.scales.data() + t * k_count, q.values.data() + t * d);
    }
  });
  return q;
}

double mxnorm_bound(const NormSpec& spec, std::size_t blocks_per_row) {
  if (blocks_per_row == 0) throw Error("block count must be positive");
  return spec.c * root_p(static_cast<double>(blocks_per_row), spec.p);
}

double rmsnorm_bound(std::size_t cols) { return std::sqrt(static_cast<double>(cols)); }

RmsNormGrads rmsnorm_backward(const RowMatrix& x, std::span<const float> rho,
                              std::span<const float> gamma, const RowMatrix& grad_y) {
  const std::size_t t_count = x.rows();
  const std::size_t d = x.cols();
  if (rho.size() != t_count || gamma.size() != d || grad_y.rows() != t_count ||
      grad_y.cols() != d) {
    throw Error("rmsnorm backward shape mismatch");
  }
  RmsNormGrads g{RowMatrix(t_count, d), std::vector<float>(d)};
  std::vector<double> gamma_acc(d, 0.0);
  const double inv_d = 1.0 / static_cast<double>(d);
  std::vector<float> grad_xbar(d);
  for (std::size_t t = 0; t < t_count; ++t) {
    const auto xr = x.row(t);
    const auto gy = grad_y.row(t);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const float xbar = rho[t] * xr[j];
      gamma_acc[j] += static_cast<double>(xbar) * gy[j];
      grad_xbar[j] = gy[j] * gamma[j];
      s += static_cast<double>(grad_xbar[j]) * xr[j];
    }
    const double r = rho[t];
    const double r3 = r * r * r;
    auto gx = g.grad_x.row(t);
    for (std::size_t j = 0; j < d; ++j) {
      const double u = s * xr[j];
      gx[j] = static_cast<float>(r * grad_xbar[j] - inv_d * r3 * u);
    }
  }
  for (std::size_t j = 0; j < d; ++j) g.grad_gamma[j] = static_cast<float>(gamma_acc[j]);
  return g;
}

}  // namespace mxkit
