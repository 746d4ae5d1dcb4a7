// SPDX-License-Identifier: Apache-2.0
#include "mxkit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <random>

#include "mxkit/error.hpp"
#include "mxkit/mx_tensor.hpp"
#include "mxkit/parallel.hpp"
#include "mxkit/random.hpp"

namespace mxkit {

double r_squared(std::span<const float> prediction, std::span<const float> target) {
  if (prediction.size() != target.size()) throw Error("r^2 inputs differ in length");
  if (target.empty()) throw Error("degenerate target");
  double mean = 0.0;
  for (float v : target) mean += v;
  mean /= static_cast<double>(target.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double dt = target[i] - mean;
    const double dr = static_cast<double>(target[i]) - prediction[i];
    ss_tot += dt * dt;
    ss_res += dr * dr;
  }
  if (!(ss_tot > 0.0)) throw Error("degenerate target");
  return 1.0 - ss_res / ss_tot;
}

double r2_fidelity(const RowMatrix& x, const NormSpec& spec) {
  const RowMatrix fused = dequant(mxnorm(x, spec).q);
  const std::vector<float> ones(x.cols(), 1.0f);
  const RmsNormResult normed = rmsnorm(x, ones, spec.eps);
  const RowMatrix reference = dequant(mxcast(normed.y, spec.block_size, spec.format()));
  return r_squared(fused.data(), reference.data());
}

std::vector<ConvergencePoint> convergence_ratio(double p, std::size_t block_size,
                                                std::span<const std::size_t> block_counts,
                                                std::uint64_t seed) {
  if (block_counts.empty()) throw Error("block count list is empty");
  if (!(p > 0.0)) throw Error("norm exponent p must be positive");
  std::vector<ConvergencePoint> out;
  out.reserve(block_counts.size());
  for (std::size_t i = 0; i < block_counts.size(); ++i) {
    const std::size_t k_count = block_counts[i];
    if (k_count == 0) throw Error("block count must be positive");
    auto rng = make_rng(seed, i);
    std::normal_distribution<double> normal;
    double sum_sq = 0.0, sum_p = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      double m = 0.0;
      for (std::size_t b = 0; b < block_size; ++b) {
        const double v = normal(rng);
        sum_sq += v * v;
        m = std::max(m, std::fabs(v));
      }
      sum_p += std::pow(m, p);
    }
    const double n = static_cast<double>(k_count * block_size);
    const double rms = std::sqrt(sum_sq / n);
    const double g = std::pow(sum_p / static_cast<double>(k_count), 1.0 / p);
    out.push_back({k_count, g / rms});
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return values[lo] + w * (values[hi] - values[lo]);
}

std::vector<ConvergenceSummary> convergence_study(double p, std::size_t block_size,
                                                  std::span<const std::size_t> block_counts,
                                                  std::size_t n_seeds, std::uint64_t seed) {
  if (n_seeds == 0) throw Error("convergence study needs at least one seed");
  std::vector<std::vector<double>> ratios(block_counts.size(), std::vector<double>(n_seeds));
  parallel_for(n_seeds, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t s = lo; s < hi; ++s) {
      const auto pts = convergence_ratio(p, block_size, block_counts, derive_seed(seed, s));
      for (std::size_t i = 0; i < pts.size(); ++i) ratios[i][s] = pts[i].ratio;
    }
  });
  std::vector<ConvergenceSummary> out;
  for (std::size_t i = 0; i < block_counts.size(); ++i) {
    out.push_back({block_counts[i], quantile(ratios[i], 0.5), quantile(ratios[i], 0.1),
                   quantile(ratios[i], 0.9)});
  }
  return out;
}

std::vector<FidelitySummary> fidelity_study(const NormSpec& spec,
                                            std::span<const std::size_t> block_counts,
                                            std::size_t rows, std::size_t trials,
                                            std::uint64_t seed) {
  if (trials == 0 || rows == 0) throw Error("fidelity study needs rows and trials");
  std::vector<FidelitySummary> out;
  for (std::size_t i = 0; i < block_counts.size(); ++i) {
    const std::size_t d = block_counts[i] * spec.block_size;
    if (d == 0) throw Error("block count must be positive");
    std::vector<double> r2(trials);
    for (std::size_t k = 0; k < trials; ++k) {
      const RowMatrix x = gaussian_matrix(rows, d, derive_seed(seed, i * trials + k));
      r2[k] = r2_fidelity(x, spec);
    }
    out.push_back({block_counts[i], quantile(r2, 0.5), *std::min_element(r2.begin(), r2.end()),
                   *std::max_element(r2.begin(), r2.end())});
  }
  return out;
}

namespace {

void accumulate_bounds(const RowMatrix& x, const NormSpec& spec, BoundsReport& r,
                       bool onehot) {
  const std::vector<float> ones(x.cols(), 1.0f);
  const RmsNormResult normed = rmsnorm(x, ones, spec.eps);
  double rms_max = 0.0;
  for (float v : normed.y.data()) rms_max = std::max(rms_max, static_cast<double>(std::fabs(v)));
  const MxNormResult fused = mxnorm(x, spec);
  double pre_max = 0.0;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    for (float v : x.row(t)) {
      pre_max = std::max(pre_max, static_cast<double>(std::fabs(v * fused.rho[t])));
    }
  }
  double post_max = 0.0;
  const RowMatrix restored = dequant(fused.q);
  for (float v : restored.data()) {
    post_max = std::max(post_max, static_cast<double>(std::fabs(v)));
  }
  r.rmsnorm_max = std::max(r.rmsnorm_max, rms_max);
  r.mxnorm_max = std::max(r.mxnorm_max, pre_max);
  r.mxnorm_dequant_max = std::max(r.mxnorm_dequant_max, post_max);
  if (onehot) {
    r.rmsnorm_onehot_max = std::max(r.rmsnorm_onehot_max, rms_max);
    r.mxnorm_onehot_max = std::max(r.mxnorm_onehot_max, pre_max);
  }
  r.rows_checked += x.rows();
}

}  // namespace

BoundsReport bounds_check(const NormSpec& spec, std::size_t cols, std::size_t random_rows,
                          std::uint64_t seed) {
  spec.validate();
  if (cols == 0 || cols % spec.block_size != 0) {
    throw Error("hidden dimension not divisible by block size");
  }
  BoundsReport r;
  r.rmsnorm_bound = rmsnorm_bound(cols);
  r.mxnorm_bound = mxnorm_bound(spec, cols / spec.block_size);

  constexpr std::size_t kChunkRows = 1024;
  const std::size_t chunks = (random_rows + kChunkRows - 1) / kChunkRows;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t rows = std::min(kChunkRows, random_rows - c * kChunkRows);
    RowMatrix x = gaussian_matrix(rows, cols, derive_seed(seed, c));
    auto rng = make_rng(seed, chunks + c);
    std::uniform_real_distribution<double> octave(-8.0, 8.0);
    for (std::size_t t = 0; t < rows; ++t) {
      const auto s = static_cast<float>(std::exp2(octave(rng)));
      for (float& v : x.row(t)) v *= s;
    }
    accumulate_bounds(x, spec, r, false);
  }

  // One spike per block position, with a few magnitudes and both signs.
  const float magnitudes[] = {1.0f, -3.0f, 1e-3f, 4096.0f};
  RowMatrix spikes(cols * std::size(magnitudes), cols);
  std::size_t t = 0;
  for (float a : magnitudes) {
    for (std::size_t j = 0; j < cols; ++j) spikes(t++, j) = a;
  }
  accumulate_bounds(spikes, spec, r, true);
  return r;
}

double spike_score(std::span<const double> losses, const SpikeScoreOptions& options) {
  const std::size_t n = losses.size();
  if (options.window == 0) throw Error("spike score window must be positive");
  // Guard against 0.3 * 100 evaluating to 30.000000000000004.
  const auto tail =
      static_cast<std::size_t>(std::ceil(options.tail_fraction * static_cast<double>(n) - 1e-9));
  if (n < options.window || tail < 2 || tail > n) throw Error("loss series too short");
  for (double l : losses) {
    if (!std::isfinite(l)) throw Error("loss series contains non-finite values");
  }
  double mean = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) mean += losses[i];
  mean /= static_cast<double>(tail);
  double var = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) var += (losses[i] - mean) * (losses[i] - mean);
  const double sigma = std::max(std::sqrt(var / static_cast<double>(tail)), 1e-12);

  double score = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t begin = t + 1 >= options.window ? t + 1 - options.window : 0;
    const double rolling_min = *std::min_element(losses.begin() + static_cast<std::ptrdiff_t>(begin),
                                                 losses.begin() + static_cast<std::ptrdiff_t>(t) + 1);
    score += std::max((losses[t] - rolling_min) / sigma - options.threshold, 0.0);
  }
  return score;
}

std::uint64_t ActivationStats::total() const {
  std::uint64_t n = zero_count;
  for (auto c : histogram) n += c;
  return n;
}

double ActivationStats::bin_lower_edge(std::size_t i) {
  const double span = kHistogramMaxLog2 - kHistogramMinLog2;
  return std::exp2(kHistogramMinLog2 + span * static_cast<double>(i) / kHistogramBins);
}

ActivationStats activation_stats(const RowMatrix& outputs) {
  if (!outputs.all_finite()) throw Error("activation statistics need finite input");
  ActivationStats s;
  s.histogram.assign(kHistogramBins, 0);
  if (outputs.rows() == 0 || outputs.cols() == 0) return s;
  s.rms_min = std::numeric_limits<double>::infinity();
  s.rms_max = 0.0;
  const double bins_per_octave =
      kHistogramBins / static_cast<double>(kHistogramMaxLog2 - kHistogramMinLog2);
  for (std::size_t t = 0; t < outputs.rows(); ++t) {
    double sum_sq = 0.0;
    for (float v : outputs.row(t)) {
      sum_sq += static_cast<double>(v) * v;
      const double a = std::fabs(v);
      s.abs_max = std::max(s.abs_max, a);
      if (a == 0.0) {
        ++s.zero_count;
        continue;
      }
      const double pos = std::floor((std::log2(a) - kHistogramMinLog2) * bins_per_octave);
      const auto bin = static_cast<std::size_t>(
          std::clamp(pos, 0.0, static_cast<double>(kHistogramBins - 1)));
      ++s.histogram[bin];
    }
    const double rms = std::sqrt(sum_sq / static_cast<double>(outputs.cols()));
    s.rms_mean += rms;
    s.rms_min = std::min(s.rms_min, rms);
    s.rms_max = std::max(s.rms_max, rms);
  }
  s.rms_mean /= static_cast<double>(outputs.rows());
  return s;
}

TrafficComparison traffic_model(std::size_t rows, std::size_t cols, std::size_t block_size,
                                std::size_t element_bytes) {
  if (block_size == 0 || cols % block_size != 0) {
    throw Error("hidden dimension not divisible by block size");
  }
  const std::uint64_t elems = static_cast<std::uint64_t>(rows) * cols;
  const std::uint64_t blocks = static_cast<std::uint64_t>(rows) * (cols / block_size);
  TrafficComparison out;
  out.baseline = {"rmsnorm+mxcast", 4 * elems, 2 * elems, element_bytes};
  out.fused = {"mxnorm", 2 * elems + blocks, elems, element_bytes};
  return out;
}

TrafficComparison measure_traffic(std::size_t rows, std::size_t cols, std::size_t block_size,
                                  std::size_t element_bytes, std::uint64_t seed) {
  const RowMatrix x = gaussian_matrix(rows, cols, seed);
  const std::vector<float> ones(cols, 1.0f);
  AccessCounter base;
  const RmsNormResult normed = rmsnorm(x, ones, kDefaultEpsilon, &base);
  mxcast(normed.y, block_size, kE4M3, &base);
  AccessCounter fused;
  NormSpec spec;
  spec.block_size = block_size;
  mxnorm(x, spec, &fused);
  TrafficComparison out;
  out.baseline = {"rmsnorm+mxcast", base.reads, base.writes, element_bytes};
  out.fused = {"mxnorm", fused.reads, fused.writes, element_bytes};
  return out;
}

}  // namespace mxkit
