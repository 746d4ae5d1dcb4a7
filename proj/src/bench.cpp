// SPDX-License-Identifier: Apache-2.0
#include "mxkit/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "mxkit/error.hpp"
#include "mxkit/mx_tensor.hpp"
#include "mxkit/norms.hpp"
#include "mxkit/parallel.hpp"
#include "mxkit/random.hpp"

namespace mxkit {
namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

class ThreadCountGuard {
 public:
  explicit ThreadCountGuard(std::size_t n) : saved_(thread_count()) { set_thread_count(n); }
  ~ThreadCountGuard() { set_thread_count(saved_); }
  ThreadCountGuard(const ThreadCountGuard&) = delete;
  ThreadCountGuard& operator=(const ThreadCountGuard&) = delete;

 private:
  std::size_t saved_;
};

}  // namespace

std::vector<std::size_t> hidden_dim_grid(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> dims;
  for (std::size_t base = lo; base <= hi; base *= 2) {
    dims.push_back(base);
    if (base * 2 > hi) break;
    // Evenly spaced interior points: 5/4, 3/2 and 7/4 of the octave base.
    dims.push_back(base * 5 / 4);
    dims.push_back(base * 3 / 2);
    dims.push_back(base * 7 / 4);
  }
  std::sort(dims.begin(), dims.end());
  return dims;
}

BenchGrid BenchGrid::standard() {
  BenchGrid g;
  for (std::size_t t = 1u << 12; t <= (1u << 16); t *= 2) g.tokens.push_back(t);
  g.hidden_dims = hidden_dim_grid(1u << 10, 1u << 14);
  g.block_sizes = {16, 32, 64};
  g.formats = {FormatId::kE4M3, FormatId::kE2M1};
  return g;
}

BenchGrid BenchGrid::scaled(double factor) const {
  if (!(factor > 0.0)) throw Error("scale factor must be positive");
  BenchGrid g = *this;
  for (std::size_t& t : g.tokens) {
    t = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(t * factor)));
  }
  return g;
}

void BenchGrid::validate() const {
  if (tokens.empty() || hidden_dims.empty() || block_sizes.empty() || formats.empty()) {
    throw Error("benchmark grid has an empty axis");
  }
  if (repetitions == 0) throw Error("benchmark needs at least one repetition");
  for (std::size_t d : hidden_dims) {
    for (std::size_t b : block_sizes) {
      if (b == 0 || d % b != 0) {
        throw Error("hidden dim " + std::to_string(d) + " not divisible by block size " +
                    std::to_string(b));
      }
    }
  }
}

std::size_t BenchGrid::cell_count() const {
  return tokens.size() * hidden_dims.size() * block_sizes.size() * formats.size();
}

BenchKernel fused_kernel() {
  return [](const RowMatrix& x, std::size_t block_size, const MiniFloatFormat& fmt) {
    NormSpec spec;
    spec.block_size = block_size;
    spec.value_format = fmt.id;
    const MxNormResult r = mxnorm(x, spec);
    (void)r;
  };
}

BenchKernel baseline_kernel() {
  return [](const RowMatrix& x, std::size_t block_size, const MiniFloatFormat& fmt) {
    const std::vector<float> ones(x.cols(), 1.0f);
    const RmsNormResult normed = rmsnorm(x, ones);
    const MxTensor q = mxcast(normed.y, block_size, fmt);
    (void)q;
  };
}

double geometric_mean(std::span<const double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (double v : values) {
    if (!(v > 0.0)) throw Error("geometric mean needs positive values");
    acc += std::log(v);
  }
  return std::exp(acc / static_cast<double>(values.size()));
}

double timer_resolution_ns() {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 200; ++i) {
    const auto t0 = Clock::now();
    auto t1 = Clock::now();
    while (t1 == t0) t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  return best;
}

PairTiming time_pair(const std::function<void()>& a, const std::function<void()>& b,
                     std::size_t repetitions, std::size_t warmup) {
  for (std::size_t i = 0; i < warmup; ++i) {
    a();
    b();
  }
  std::vector<double> ta, tb;
  ta.reserve(repetitions);
  tb.reserve(repetitions);
  for (std::size_t i = 0; i < repetitions; ++i) {
    // Alternate which side runs first to cancel ordering effects.
    const bool a_first = i % 2 == 0;
    for (int side = 0; side < 2; ++side) {
      const bool run_a = (side == 0) == a_first;
      const auto t0 = Clock::now();
      run_a ? a() : b();
      const auto t1 = Clock::now();
      (run_a ? ta : tb).push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
    }
  }
  return {median(std::move(ta)), median(std::move(tb))};
}

BenchReport run_bench(const BenchGrid& grid, const BenchOptions& options) {
  grid.validate();
  ThreadCountGuard guard(options.threads);
  const double threshold =
      options.min_reliable_ns > 0.0 ? options.min_reliable_ns
                                    : std::max(1000.0, 100.0 * timer_resolution_ns());
  BenchReport report;
  const std::size_t total = grid.cell_count();
  std::uint64_t input_index = 0;
  for (std::size_t tokens : grid.tokens) {
    for (std::size_t dim : grid.hidden_dims) {
      const RowMatrix x = gaussian_matrix(tokens, dim, options.seed + input_index++);
      for (std::size_t bs : grid.block_sizes) {
        for (FormatId fid : grid.formats) {
          const MiniFloatFormat& fmt = format_of(fid);
          const PairTiming t = time_pair([&] { options.fused(x, bs, fmt); },
                                         [&] { options.baseline(x, bs, fmt); },
                                         grid.repetitions, grid.warmup);
          BenchCell cell{tokens, dim, bs, fid, t.median_a_ns, t.median_b_ns, 0.0, true};
          cell.reliable = t.median_a_ns >= threshold && t.median_b_ns >= threshold;
          cell.speedup = t.median_a_ns > 0.0 ? t.median_b_ns / t.median_a_ns : 0.0;
          report.cells.push_back(cell);
          if (options.progress) options.progress(report.cells.size(), total);
        }
      }
    }
  }

  std::map<std::pair<std::size_t, int>, std::vector<const BenchCell*>> by_group;
  for (const BenchCell& c : report.cells) {
    by_group[{c.block_size, static_cast<int>(c.format)}].push_back(&c);
  }
  for (const auto& [key, cells] : by_group) {
    BenchGroup g;
    g.block_size = key.first;
    g.format = static_cast<FormatId>(key.second);
    std::vector<double> speedups;
    for (const BenchCell* c : cells) {
      if (c->reliable && c->speedup > 0.0) {
        speedups.push_back(c->speedup);
      } else {
        ++g.unreliable_cells;
      }
    }
    g.reliable_cells = speedups.size();
    g.geomean_speedup = geometric_mean(speedups);
    report.unreliable_count += g.unreliable_cells;
    report.groups.push_back(g);
  }
  return report;
}

std::string bench_csv(const BenchReport& report) {
  std::ostringstream os;
  os.precision(10);
  os << "tokens,hidden_dim,block_size,vfmt,t_fused_ns,t_baseline_ns,speedup,reliable\n";
  for (const BenchCell& c : report.cells) {
    os << c.tokens << ',' << c.hidden_dim << ',' << c.block_size << ','
       << format_of(c.format).name << ',' << c.t_fused_ns << ',' << c.t_baseline_ns << ','
       << c.speedup << ',' << (c.reliable ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace mxkit
