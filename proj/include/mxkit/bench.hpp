// SPDX-License-Identifier: Apache-2.0
//
// CPU timing harness: fused MXNorm against RMSNorm followed by MXCast over a
// grid of (tokens, hidden dim, block size, value format) cells. Per-cell
// speedups are aggregated with the geometric mean per (block size, format).
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mxkit/format.hpp"
#include "mxkit/matrix.hpp"

namespace mxkit {

struct BenchGrid {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> hidden_dims;
  std::vector<std::size_t> block_sizes;
  std::vector<FormatId> formats;
  std::size_t repetitions = 20;
  std::size_t warmup = 3;

  /// Tokens 2^12..2^16; hidden dims k * 2^r for k in {1, 3, 5, 7} within
  /// [2^10, 2^14]; block sizes {16, 32, 64}; formats {e4m3, e2m1}.
  static BenchGrid standard();

  /// Same grid with token counts multiplied by `factor` (at least 1 token).
  BenchGrid scaled(double factor) const;

  void validate() const;
  std::size_t cell_count() const;
};

/// Powers of two in [lo, hi] plus three evenly spaced points inside each octave.
std::vector<std::size_t> hidden_dim_grid(std::size_t lo, std::size_t hi);

using BenchKernel = std::function<void(const RowMatrix&, std::size_t block_size,
                                       const MiniFloatFormat& fmt)>;

/// fused: mxnorm with p = 2 (the constant c does not affect cost).
BenchKernel fused_kernel();
/// baseline: rmsnorm with unit gain, then mxcast.
BenchKernel baseline_kernel();

struct BenchOptions {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Cells whose median time for either scheme is below this are marked
  /// unreliable. Zero selects 100x the measured clock resolution (min 1 us).
  double min_reliable_ns = 0.0;
  BenchKernel fused = fused_kernel();
  BenchKernel baseline = baseline_kernel();
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct BenchCell {
  std::size_t tokens = 0;
  std::size_t hidden_dim = 0;
  std::size_t block_size = 0;
  FormatId format = FormatId::kE4M3;
  double t_fused_ns = 0.0;
  double t_baseline_ns = 0.0;
  double speedup = 0.0;  // t_baseline / t_fused
  bool reliable = true;
};

struct BenchGroup {
  std::size_t block_size = 0;
  FormatId format = FormatId::kE4M3;
  double geomean_speedup = 0.0;  // over reliable cells; NaN if none
  std::size_t reliable_cells = 0;
  std::size_t unreliable_cells = 0;
};

struct BenchReport {
  std::vector<BenchCell> cells;
  std::vector<BenchGroup> groups;
  std::size_t unreliable_count = 0;
};

double geometric_mean(std::span<const double> values);

/// Smallest observed nonzero step of the steady clock, in nanoseconds.
double timer_resolution_ns();

struct PairTiming {
  double median_a_ns = 0.0;
  double median_b_ns = 0.0;
};

/// Times two callables with interleaved repetitions after `warmup` untimed
/// rounds of each; returns the medians.
PairTiming time_pair(const std::function<void()>& a, const std::function<void()>& b,
                     std::size_t repetitions, std::size_t warmup);

BenchReport run_bench(const BenchGrid& grid, const BenchOptions& options = {});

/// tokens,hidden_dim,block_size,vfmt,t_fused_ns,t_baseline_ns,speedup,reliable
std::string bench_csv(const BenchReport& report);

}  // namespace mxkit
