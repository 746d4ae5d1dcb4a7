// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mxkit/matrix.hpp"
#include "mxkit/norms.hpp"

namespace mxkit {

/// Coefficient of determination 1 - SS_res / SS_tot with `target` as the
/// reference. Throws "degenerate target" when the target has zero variance.
double r_squared(std::span<const float> prediction, std::span<const float> target);

/// r^2 of dequant(mxnorm(x)) against dequant(mxcast(rmsnorm(x, 1))).
double r2_fidelity(const RowMatrix& x, const NormSpec& spec);

struct ConvergencePoint {
  std::size_t blocks;
  double ratio;  // p-mean of block absmaxes / RMS
};

/// One fresh Gaussian row of K*B elements per entry of `block_counts`.
std::vector<ConvergencePoint> convergence_ratio(double p, std::size_t block_size,
                                                std::span<const std::size_t> block_counts,
                                                std::uint64_t seed);

struct ConvergenceSummary {
  std::size_t blocks;
  double median;
  double p10;
  double p90;
  double interdecile() const { return p90 - p10; }
};

/// convergence_ratio repeated over `n_seeds` derived seeds, summarized per K.
std::vector<ConvergenceSummary> convergence_study(double p, std::size_t block_size,
                                                  std::span<const std::size_t> block_counts,
                                                  std::size_t n_seeds, std::uint64_t seed);

struct FidelitySummary {
  std::size_t blocks;
  double median;
  double min;
  double max;
};

/// r2_fidelity on `trials` Gaussian rows x (K * B) matrices per K.
std::vector<FidelitySummary> fidelity_study(const NormSpec& spec,
                                            std::span<const std::size_t> block_counts,
                                            std::size_t rows, std::size_t trials,
                                            std::uint64_t seed);

/// Linear-interpolated quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct BoundsReport {
  std::size_t rows_checked = 0;
  double rmsnorm_max = 0.0;
  double rmsnorm_bound = 0.0;
  double rmsnorm_onehot_max = 0.0;
  double mxnorm_max = 0.0;  // |x * rho| before the value cast
  double mxnorm_dequant_max = 0.0;
  double mxnorm_bound = 0.0;
  double mxnorm_onehot_max = 0.0;
};

/// Infinity norms of RMSNorm and MXNorm outputs over `random_rows` Gaussian
/// rows with per-row scales in [2^-8, 2^8], plus one-hot rows at every block
/// position. Rows are processed in chunks, so large counts are fine.
BoundsReport bounds_check(const NormSpec& spec, std::size_t cols, std::size_t random_rows,
                          std::uint64_t seed);

struct SpikeScoreOptions {
  std::size_t window = 8;
  double tail_fraction = 0.3;
  double threshold = 3.0;
};

/// sum_t max((L_t - m_t) / sigma - threshold, 0), m_t the trailing inclusive
/// rolling minimum, sigma the population standard deviation of the last
/// ceil(tail_fraction * N) losses (floored at 1e-12).
double spike_score(std::span<const double> losses, const SpikeScoreOptions& options = {});

inline constexpr std::size_t kHistogramBins = 256;
inline constexpr int kHistogramMinLog2 = -30;
inline constexpr int kHistogramMaxLog2 = 10;

struct ActivationStats {
  double rms_mean = 0.0;
  double rms_min = 0.0;
  double rms_max = 0.0;
  double abs_max = 0.0;
  std::uint64_t zero_count = 0;
  /// Log-spaced magnitude bins over [2^-30, 2^10]; out-of-range magnitudes
  /// land in the first or last bin.
  std::vector<std::uint64_t> histogram;

  std::uint64_t total() const;
  /// Lower edge of magnitude bin i.
  static double bin_lower_edge(std::size_t i);
};

ActivationStats activation_stats(const RowMatrix& outputs);

struct TrafficReport {
  std::string scheme;
  std::uint64_t element_reads = 0;
  std::uint64_t element_writes = 0;
  std::size_t element_bytes = 4;

  std::uint64_t bytes_read() const { return element_reads * element_bytes; }
  std::uint64_t bytes_written() const { return element_writes * element_bytes; }
};

struct TrafficComparison {
  TrafficReport baseline;  // "rmsnorm+mxcast"
  TrafficReport fused;     // "mxnorm"
};

/// Analytic access counts. Baseline: 4 reads and 2 writes per element
/// (sum of squares, normalize, absmax, cast). Fused: 2 reads and 1 write per
/// element plus one read per block for the inverse-RMS reduction.
TrafficComparison traffic_model(std::size_t rows, std::size_t cols, std::size_t block_size,
                                std::size_t element_bytes);

/// Runs both pipelines on a Gaussian input with instrumented counters.
TrafficComparison measure_traffic(std::size_t rows, std::size_t cols, std::size_t block_size,
                                  std::size_t element_bytes, std::uint64_t seed);

}  // namespace mxkit
