// SPDX-License-Identifier: Apache-2.0
#include "mxkit/postround.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mxkit/parallel.hpp"
#include "row_kernels.hpp"

namespace mxkit {
namespace {

// log P(|X| < x)^B for X ~ N(0, sigma^2), accurate at both tails.
double log_cdf_pow(double x, double sigma, std::size_t block_size) {
  const double z = x / (sigma * std::sqrt(2.0));
  const double tail = std::erfc(z);
  const double log_f = tail < 0.5 ? std::log1p(-tail) : std::log(std::erf(z));
  return static_cast<double>(block_size) * log_f;
}

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error("sigma must be positive and finite");
}

// sigma = 2^k * s with s in [1, 2).
double reduce_to_unit_octave(double sigma, int& k) {
  int e;
  const double fr = std::frexp(sigma, &e);
  k = e - 1;
  return 2.0 * fr;
}

}  // namespace

std::vector<double> rounded_scale_masses(double sigma, std::size_t block_size, int truncation) {
  check_sigma(sigma);
  if (block_size == 0) throw Error("block size must be positive");
  if (truncation <= 0) throw Error("truncation must be positive");
  int k;
  const double s = reduce_to_unit_octave(sigma, k);
  std::vector<double> masses(2 * static_cast<std::size_t>(truncation));
  double log_lo = log_cdf_pow(std::ldexp(1.0, -truncation), s, block_size);
  for (int j = -truncation; j < truncation; ++j) {
    const double log_hi = log_cdf_pow(std::ldexp(1.0, j + 1), s, block_size);
    double mass;
    if (log_lo == -std::numeric_limits<double>::infinity()) {
      mass = std::exp(log_hi);
    } else {
      mass = std::exp(log_lo) * std::expm1(log_hi - log_lo);
    }
    masses[static_cast<std::size_t>(j + truncation)] = mass;
    log_lo = log_hi;
  }
  return masses;
}

double f_expected_max_scale(double sigma, std::size_t block_size, int truncation) {
  check_sigma(sigma);
  int k;
  reduce_to_unit_octave(sigma, k);
  const auto masses = rounded_scale_masses(sigma, block_size, truncation);
  double acc = 0.0;
  for (int j = -truncation; j < truncation; ++j) {
    acc += std::ldexp(masses[static_cast<std::size_t>(j + truncation)], j);
  }
  return std::ldexp(acc, k);
}

double f_inverse_bisect(double y, std::size_t block_size, int truncation, double rel_width) {
  if (!(y > 0.0) || !std::isfinite(y)) throw Error("f_inverse needs a positive finite argument");
  double lo = y, hi = y;
  while (f_expected_max_scale(lo, block_size, truncation) >= y) lo *= 0.5;
  while (f_expected_max_scale(hi, block_size, truncation) <= y) hi *= 2.0;
  while (hi - lo > rel_width * hi) {
    const double mid = 0.5 * (lo + hi);
    if (f_expected_max_scale(mid, block_size, truncation) < y) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

PostRoundTable PostRoundTable::build(std::size_t block_size, int resolution, int truncation) {
  if (resolution <= 0) throw Error("table resolution must be positive");
  PostRoundTable table;
  table.block_size = block_size;
  table.resolution = resolution;
  table.truncation = truncation;
  table.grid.resize(static_cast<std::size_t>(resolution) + 1);
  parallel_for(table.grid.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const double y = std::exp2(static_cast<double>(i) / resolution);
      table.grid[i] = f_inverse_bisect(y, block_size, truncation);
    }
  });
  return table;
}

void PostRoundTable::validate() const {
  if (block_size == 0) throw Error("post-round table block size must be positive");
  if (resolution <= 0 || grid.size() != static_cast<std::size_t>(resolution) + 1) {
    throw Error("post-round table grid has wrong length");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) throw Error("post-round grid not positive");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw Error("post-round grid not strictly increasing");
  }
}

double f_inverse(double y, const PostRoundTable& table) {
  if (!(y > 0.0) || !std::isfinite(y)) throw Error("f_inverse needs a positive finite argument");
  int e;
  const double u = 2.0 * std::frexp(y, &e);  // y = u * 2^(e-1), u in [1, 2)
  const int a = table.resolution;
  auto node = [a](int i) { return std::exp2(static_cast<double>(i) / a); };
  int i = std::clamp(static_cast<int>(std::floor(std::log2(u) * a)), 0, a - 1);
  while (i > 0 && u < node(i)) --i;
  while (i < a - 1 && u >= node(i + 1)) ++i;
  const double x0 = node(i);
  const double x1 = node(i + 1);
  const double w = (u - x0) / (x1 - x0);
  const auto ui = static_cast<std::size_t>(i);
  const double v = table.grid[ui] + w * (table.grid[ui + 1] - table.grid[ui]);
  return std::ldexp(v, e - 1);
}

std::vector<float> postround_inverse_rms(const RowMatrix& x, const NormSpec& spec,
                                         const PostRoundTable& table) {
  spec.validate();
  if (table.block_size != spec.block_size) throw Error("post-round table block size mismatch");
  const BlockedView view = block(x, spec.block_size);
  const int shift = spec.format().largest_pow2_log2;
  const int lo_exp = E8M0::kMinExponent + shift;
  const int hi_exp = E8M0::kMaxExponent + shift;
  std::vector<float> rho(x.rows());
  parallel_for(x.rows(), [&](std::size_t lo, std::size_t hi) {
    std::vector<float> absmax(view.blocks_per_row);
    for (std::size_t t = lo; t < hi; ++t) {
      detail::row_absmax(x.row(t), spec.block_size, absmax);
      double acc = 0.0;
      for (float m : absmax) {
        const int e = m > 0.0f ? std::clamp(floor_log2(m), lo_exp, hi_exp) : lo_exp;
        acc += std::ldexp(1.0, e);
      }
      const double mean = acc / static_cast<double>(absmax.size());
      rho[t] = static_cast<float>(1.0 / f_inverse(mean, table));
    }
  });
  return rho;
}

PostRoundResult postround_mxnorm(const RowMatrix& x, const NormSpec& spec,
                                 const PostRoundTable& table) {
  PostRoundResult out;
  out.rho = postround_inverse_rms(x, spec, table);
  out.q = quantize_normalized(x, out.rho, spec.block_size, spec.format());
  return out;
}

}  // namespace mxkit
