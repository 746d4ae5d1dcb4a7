// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mxkit/analysis.hpp"
#include "mxkit/random.hpp"
#include "oracles.hpp"

namespace mxkit {
namespace {

TEST(RSquared, IdenticalAndDegenerate) {
  const std::vector<float> a{1, 2, 3, 4};
  EXPECT_EQ(r_squared(a, a), 1.0);
  const std::vector<float> flat{2, 2, 2, 2};
  try {
    r_squared(a, flat);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "degenerate target");
  }
  // A constant offset is penalized (unlike squared correlation).
  const std::vector<float> shifted{2, 3, 4, 5};
  EXPECT_NEAR(r_squared(shifted, a), 1.0 - 4.0 / 5.0, 1e-12);
}

TEST(Fidelity, GaussianRowsAt1024) {
  NormSpec spec;
  spec.block_size = 32;
  spec.c = oracle::correction_by_quadrature(2.0, 32);
  EXPECT_GT(r2_fidelity(gaussian_matrix(64, 1024, 3), spec), 0.99);
}

TEST(Fidelity, PowerOfTwoInvariance) {
  NormSpec spec;
  spec.block_size = 32;
  spec.c = oracle::correction_by_quadrature(2.0, 32);
  const RowMatrix x = gaussian_matrix(16, 256, 4);
  const double base = r2_fidelity(x, spec);
  for (int e : {-6, 3, 12}) {
    RowMatrix xs = x;
    for (float& v : xs.data()) v = std::ldexp(v, e);
    EXPECT_EQ(r2_fidelity(xs, spec), base);
  }
}

TEST(Convergence, SingletonBlocksGiveOne) {
  const std::size_t ks[] = {1, 10, 1000};
  for (const auto& pt : convergence_ratio(2.0, 1, ks, 3)) EXPECT_NEAR(pt.ratio, 1.0, 1e-12);
}

TEST(Convergence, LargeKApproachesConstant) {
  const std::size_t ks[] = {4096};
  const double c = oracle::correction_by_quadrature(2.0, 16);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_NEAR(convergence_ratio(2.0, 16, ks, seed)[0].ratio, c, 0.01 * c);
  }
}

TEST(Convergence, DispersionShrinks) {
  const std::size_t ks[] = {64, 256, 1024};
  const auto s = convergence_study(2.0, 16, ks, 100, 9);
  EXPECT_GT(s[0].interdecile(), s[1].interdecile());
  EXPECT_GT(s[1].interdecile(), s[2].interdecile());
  EXPECT_THROW(convergence_ratio(2.0, 16, std::span<const std::size_t>{}, 1), Error);
}

TEST(Quantile, Interpolates) {
  EXPECT_EQ(quantile({3, 1, 2}, 0.5), 2.0);
  EXPECT_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_EQ(quantile({5}, 0.9), 5.0);
  EXPECT_THROW(quantile({}, 0.5), Error);
}

std::vector<double> spike_series() {
  std::vector<double> l(100, 1.0);
  for (int t = 70; t < 100; ++t) l[t] = t % 2 == 0 ? 0.9 : 1.1;
  l[50] = 2.0;
  return l;
}

TEST(SpikeScore, ConstantSeriesIsZero) {
  EXPECT_EQ(spike_score(std::vector<double>(50, 3.0)), 0.0);
}

TEST(SpikeScore, SingleSpikeHandComputed) {
  EXPECT_NEAR(spike_score(spike_series()), 7.0, 1e-12);
}

TEST(SpikeScore, AffineInvariance) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> l(60);
    for (auto& v : l) v = n(rng);
    l[20] += 8.0;
    const double a = u(rng), b = 10 * n(rng);
    std::vector<double> m = l;
    for (auto& v : m) v = a * v + b;
    const double s = spike_score(l);
    EXPECT_NEAR(spike_score(m), s, 1e-9 * std::max(1.0, s));
    EXPECT_GE(s, 0.0);
  }
}

TEST(SpikeScore, ZeroIffNoExceedance) {
  // Losses that only ever decrease never exceed their rolling minimum.
  std::vector<double> l(40);
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = 10.0 - 0.1 * double(i) + 0.01 * (i % 3);
  for (std::size_t i = 1; i < l.size(); ++i) l[i] = std::min(l[i], l[i - 1]);
  EXPECT_EQ(spike_score(l), 0.0);
}

TEST(SpikeScore, TooShort) {
  EXPECT_THROW(spike_score(std::vector<double>(5, 1.0)), Error);
  EXPECT_THROW(spike_score(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}, {8, 0.1, 3}), Error);
}

TEST(ActivationStats, RmsAndConservation) {
  const RowMatrix x = gaussian_matrix(16, 64, 1, 1e-3);
  const ActivationStats s = activation_stats(x);
  EXPECT_EQ(s.total(), x.size());
  RowMatrix ones(4, 8, -1.0f);
  ones(0, 0) = 0.0f;
  const ActivationStats o = activation_stats(ones);
  EXPECT_EQ(o.zero_count, 1u);
  EXPECT_DOUBLE_EQ(o.rms_max, 1.0);
  EXPECT_EQ(o.total(), 32u);
  EXPECT_EQ(ActivationStats::bin_lower_edge(0), std::exp2(-30.0));
  EXPECT_EQ(ActivationStats::bin_lower_edge(kHistogramBins), std::exp2(10.0));
}

TEST(ActivationStats, RmsNormOutputHasUnitRms) {
  const RowMatrix x = gaussian_matrix(8, 128, 5, 30.0);
  const std::vector<float> ones(128, 1.0f);
  const ActivationStats s = activation_stats(rmsnorm(x, ones).y);
  EXPECT_NEAR(s.rms_min, 1.0, 1e-6);
  EXPECT_NEAR(s.rms_max, 1.0, 1e-6);
}

TEST(Bounds, SmallRun) {
  NormSpec spec;
  spec.block_size = 16;
  spec.c = oracle::correction_by_quadrature(2.0, 16);
  const BoundsReport r = bounds_check(spec, 1024, 3000, 1);
  EXPECT_EQ(r.rows_checked, 3000u + 4 * 1024);
  EXPECT_LE(r.rmsnorm_max, r.rmsnorm_bound * (1 + 1e-6));
  EXPECT_LE(r.mxnorm_max, r.mxnorm_bound * (1 + 1e-3));
  EXPECT_GE(r.rmsnorm_onehot_max, 0.99 * r.rmsnorm_bound);
  EXPECT_GE(r.mxnorm_onehot_max, 0.99 * r.mxnorm_bound);
  EXPECT_NEAR(r.mxnorm_bound, 17.06, 0.01);
}

TEST(Traffic, ModelExamples) {
  const TrafficComparison m = traffic_model(1, 1024, 32, 4);
  EXPECT_EQ(m.fused.element_reads, 2048u + 32);
  EXPECT_EQ(m.baseline.element_reads, 4096u);
  EXPECT_EQ(m.fused.element_writes, 1024u);
  EXPECT_EQ(m.baseline.element_writes, 2048u);
  EXPECT_EQ(m.fused.bytes_read(), 4 * m.fused.element_reads);
  const TrafficComparison big = traffic_model(1, 1 << 20, 32, 1);
  EXPECT_NEAR(double(big.fused.element_reads) / double(big.baseline.element_reads), 0.5, 0.01);
  EXPECT_THROW(traffic_model(1, 30, 32, 4), Error);
}

TEST(Traffic, InstrumentedCountersMatchModel) {
  for (std::size_t t : {1u, 7u}) {
    for (std::size_t d : {64u, 1024u}) {
      for (std::size_t b : {16u, 32u}) {
        const TrafficComparison m = traffic_model(t, d, b, 2);
        const TrafficComparison c = measure_traffic(t, d, b, 2, 3);
        EXPECT_EQ(c.fused.element_reads, m.fused.element_reads);
        EXPECT_EQ(c.fused.element_writes, m.fused.element_writes);
        EXPECT_EQ(c.baseline.element_reads, m.baseline.element_reads);
        EXPECT_EQ(c.baseline.element_writes, m.baseline.element_writes);
      }
    }
  }
}

}  // namespace
}  // namespace mxkit
