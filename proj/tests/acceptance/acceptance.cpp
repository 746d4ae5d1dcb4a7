// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
// if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "linear_oracle.hpp"
#include "mxkit/analysis.hpp"
#include "mxkit/bench.hpp"
#include "mxkit/io.hpp"
#include "mxkit/norms.hpp"
#include "mxkit/parallel.hpp"
#include "mxkit/postround.hpp"
#include "mxkit/traintoy.hpp"
#include "oracles.hpp"

namespace mxkit {
namespace {

// Collects the first few failure descriptions plus a summary line.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) detail_ += (detail_.empty() ? "" : "; ") + what;
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }
  bool passed() const { return failures_ == 0; }
  std::string text() const {
    if (passed()) return notes_;
    return std::to_string(failures_) + " failure(s): " + detail_ +
           (notes_.empty() ? "" : " [" + notes_ + "]");
  }

 private:
  int failures_ = 0;
  std::string detail_, notes_;
};

std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

const MiniFloatFormat* const kValueFormats[] = {&kE4M3, &kE5M2, &kE2M1};

void formats(Check& ck) {
  std::size_t checked = 0;
  for (const MiniFloatFormat* f : kValueFormats) {
    auto codes = oracle::finite_codes(*f);
    std::vector<double> vals;
    for (const auto& cv : codes) {
      ck.expect(decode(cv.code, *f) == cv.value, std::string(f->name) + " decode " + std::to_string(cv.code));
      ck.expect(encode(cv.value, *f) == cv.code, std::string(f->name) + " encode " + std::to_string(cv.code));
      vals.push_back(cv.value);
      ++checked;
    }
    for (unsigned c = 0; c < (f->width() == 4 ? 16u : 256u); ++c) {
      if (f->is_nan_code(c)) continue;
      ck.expect(encode(decode(c, *f), *f) == c, std::string(f->name) + " roundtrip " + std::to_string(c));
    }
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
      const double mid = 0.5 * (vals[i] + vals[i + 1]);
      for (double x : {mid, std::nextafter(mid, -1e9), std::nextafter(mid, 1e9)}) {
        ck.expect(encode(x, *f) == oracle::nearest_code(x, *f), std::string(f->name) + " x=" + fmt(x));
      }
    }
    for (double x : {f->max_finite * 1.01, f->max_finite * 2, 1e30, -1e30}) {
      ck.expect(std::fabs(decode(encode(x, *f), *f)) == f->max_finite, std::string(f->name) + " saturate");
      ck.expect(encode(x, *f) == oracle::nearest_code(x, *f), std::string(f->name) + " saturate oracle");
    }
  }
  for (unsigned c = 0; c < 255; ++c) {
    const E8M0 s{static_cast<std::uint8_t>(c)};
    ck.expect(s.value() == std::ldexp(1.0, static_cast<int>(c) - 127), "e8m0 value");
    ck.expect(E8M0::from_exponent(s.exponent()) == s, "e8m0 roundtrip");
    for (const MiniFloatFormat* f : kValueFormats) {
      const double a = s.value() * 0.75;
      ck.expect(e8m0_rceil(a, *f).exponent() == oracle::rceil_exponent(a, *f), "rceil");
    }
    ++checked;
  }
  ck.note(std::to_string(checked) + " codes");
}

struct PB {
  double p;
  std::size_t b;
};
const PB kConvergenceCases[] = {{1, 16}, {2, 16}, {2, 32}};

void convergence(Check& ck) {
  const std::vector<std::size_t> big{4096};
  for (const PB& pb : kConvergenceCases) {
    const double c = estimate_c(pb.p, pb.b, 1000000, 42);
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const double r = convergence_ratio(pb.p, pb.b, big, 1000 + seed)[0].ratio;
      worst = std::max(worst, std::fabs(r / c - 1.0));
    }
    ck.expect(worst <= 0.01, "p=" + fmt(pb.p) + " B=" + std::to_string(pb.b) +
                                 " worst rel dev " + fmt(worst));
    ck.note("(" + fmt(pb.p) + "," + std::to_string(pb.b) + ") worst " + fmt(worst, 3));

    std::vector<std::size_t> ks;
    for (std::size_t k = 64; k <= 4096; k *= 2) ks.push_back(k);
    const auto study = convergence_study(pb.p, pb.b, ks, 100, 77);
    for (std::size_t i = 1; i < study.size(); ++i) {
      ck.expect(study[i].interdecile() < study[i - 1].interdecile(),
                "dispersion not shrinking at K=" + std::to_string(study[i].blocks));
    }
  }
}

void constants(Check& ck) {
  const double inv2 = 1.0 / estimate_c(2, 16, 10000000, 20250601);
  const double inv1 = 1.0 / estimate_c(1, 16, 10000000, 20250601);
  ck.expect(std::fabs(inv2 - 0.4688) <= 0.002, "1/c(2,16)=" + fmt(inv2));
  ck.expect(std::fabs(inv1 - 0.4814) <= 0.002, "1/c(1,16)=" + fmt(inv1));
  ck.note("1/c(2,16)=" + fmt(inv2, 5) + ", 1/c(1,16)=" + fmt(inv1, 5));
}

void bounds(Check& ck) {
  for (double p : {2.0, 1.0}) {
    NormSpec spec;
    spec.p = p;
    spec.block_size = 16;
    spec.c = estimate_c(p, 16, 1000000, 5);
    const BoundsReport r = bounds_check(spec, 1024, 100000, 9);
    const std::string tag = "p=" + fmt(p) + " ";
    ck.expect(r.rmsnorm_max <= r.rmsnorm_bound * (1 + 1e-6), tag + "rmsnorm " + fmt(r.rmsnorm_max));
    ck.expect(r.mxnorm_max <= r.mxnorm_bound * (1 + 1e-3), tag + "mxnorm " + fmt(r.mxnorm_max));
    ck.expect(r.rmsnorm_onehot_max >= 0.99 * r.rmsnorm_bound, tag + "rmsnorm one-hot");
    ck.expect(r.mxnorm_onehot_max >= 0.99 * r.mxnorm_bound, tag + "mxnorm one-hot");
    ck.note(tag + "mx " + fmt(r.mxnorm_max, 5) + "/" + fmt(r.mxnorm_bound, 5) + " (after cast " +
            fmt(r.mxnorm_dequant_max, 5) + "), rows " + std::to_string(r.rows_checked));
  }
}

void fidelity(Check& ck) {
  NormSpec spec;
  spec.block_size = 32;
  spec.c = estimate_c(2, 32, 1000000, 3);
  const std::vector<std::size_t> at1024{32};
  const auto one = fidelity_study(spec, at1024, 16, 100, 11)[0];
  ck.expect(one.min > 0.99, "min r2 at D=1024 " + fmt(one.min));
  ck.note("D=1024 r2 min " + fmt(one.min, 5) + " median " + fmt(one.median, 5));

  const std::vector<std::size_t> ks{2, 4, 8, 16, 32, 64};
  const auto sweep = fidelity_study(spec, ks, 16, 100, 12);
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    ck.expect(sweep[i].median >= sweep[i - 1].median,
              "median r2 fell at K=" + std::to_string(sweep[i].blocks));
  }
  ck.note("K=2 median " + fmt(sweep.front().median, 4));
}

void gradients(Check& ck) {
  using namespace oracle;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    LinearState s = make_state(16, 32, 16, NormKind::kRmsNormReference, 10 + seed);
    s.quantize = false;
    const RowMatrix x = gaussian_matrix(8, 32, 20 + seed, 1.5);
    const RowMatrix gh = gaussian_matrix(8, 16, 30 + seed);
    forward(s, x, true);
    const LinearGrads g = backward(s, gh);
    DoubleLayer m{8, 32, 16, {}, {}, {}, {}, s.spec.eps};
    for (float v : x.data()) m.x.push_back(v);
    for (float v : s.weight.data()) m.w.push_back(v);
    for (float v : s.gamma) m.g.push_back(v);
    for (float v : gh.data()) m.dl.push_back(v);
    for (double e : {rel_err(g.grad_x.data(), m.fd(m.x)), rel_err(g.grad_w.data(), m.fd(m.w)),
                     rel_err(g.grad_gamma, m.fd(m.g))}) {
      worst = std::max(worst, e);
    }
  }
  ck.expect(worst <= 1e-4, "finite-difference rel err " + fmt(worst));
  ck.note("fd rel err " + fmt(worst, 3));

  for (FormatId gf : {FormatId::kE4M3, FormatId::kE5M2}) {
    for (NormKind kind : {NormKind::kMxNorm, NormKind::kPostRound}) {
      LinearState s = make_state(32, 64, 16, kind, 7);
      s.grad_format = gf;
      const RowMatrix x = gaussian_matrix(32, 64, 8, 3.0);
      const RowMatrix gh = gaussian_matrix(32, 32, 9, 1e-3);
      forward(s, x, true);
      const LinearGrads g = backward(s, gh);
      const LinearGrads want = transcribed_backward(s, x, s.cache->rho, gh);
      ck.expect(g.grad_x == want.grad_x && g.grad_w == want.grad_w &&
                    g.grad_gamma == want.grad_gamma,
                "quantized backward differs from transcription");
    }
  }
}

double monte_carlo_f(double sigma, std::size_t block_size, std::size_t blocks,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  double acc = 0.0;
  for (std::size_t k = 0; k < blocks; ++k) {
    double m = 0.0;
    for (std::size_t b = 0; b < block_size; ++b) m = std::max(m, std::fabs(normal(rng)));
    int e;
    std::frexp(m, &e);
    acc += std::ldexp(1.0, e - 1);
  }
  return acc / double(blocks);
}

void postround(Check& ck) {
  for (std::size_t b : {1u, 16u, 32u, 64u}) {
    for (double sigma : {1e-3, 0.37, 1.0, 3.3, 1e3}) {
      double total = 0;
      for (double m : rounded_scale_masses(sigma, b)) total += m;
      ck.expect(total >= 1 - 1e-9, "mass sum " + fmt(total, 12));
      const double f1 = f_expected_max_scale(sigma, b), f2 = f_expected_max_scale(2 * sigma, b);
      ck.expect(std::fabs(f2 - 2 * f1) <= 1e-9 * f2, "homogeneity");
    }
  }
  double worst_rt = 0;
  for (std::size_t b : {16u, 32u}) {
    const PostRoundTable t = PostRoundTable::build(b);
    for (int i = 0; i <= 400; ++i) {
      const double sigma = std::exp2(-10.0 + 20.0 * i / 400.0);
      worst_rt = std::max(worst_rt, std::fabs(f_inverse(f_expected_max_scale(sigma, b), t) /
                                                  sigma - 1.0));
    }
  }
  ck.expect(worst_rt <= 1e-3, "inverse roundtrip " + fmt(worst_rt));

  const double mc = monte_carlo_f(1.0, 32, 10000000, 17);
  const double f = f_expected_max_scale(1.0, 32);
  ck.expect(std::fabs(f / mc - 1.0) <= 0.002, "f vs Monte Carlo " + fmt(f) + " vs " + fmt(mc));

  NormSpec spec;
  spec.block_size = 16;
  const PostRoundTable t16 = PostRoundTable::build(16);
  const RowMatrix x = gaussian_matrix(2000, 1024, 8);
  const auto r = postround_mxnorm(x, spec, t16);
  std::vector<double> err;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double acc = 0;
    for (float v : x.row(i)) acc += double(v) * v;
    err.push_back(std::fabs(1.0 / (r.rho[i] * std::sqrt(acc / 1024)) - 1.0));
  }
  const double med = quantile(err, 0.5);
  ck.expect(med <= 0.02, "median rho error " + fmt(med));
  ck.note("roundtrip " + fmt(worst_rt, 3) + ", MC rel " + fmt(std::fabs(f / mc - 1), 3) +
          ", median err " + fmt(med, 3));
}

void spikes(Check& ck) {
  ck.expect(spike_score(std::vector<double>(50, 3.0)) == 0.0, "constant series");
  std::vector<double> l(100, 1.0);
  for (int t = 70; t < 100; ++t) l[t] = t % 2 == 0 ? 0.9 : 1.1;
  l[50] = 2.0;
  const double s = spike_score(l);
  ck.expect(std::fabs(s - 7.0) <= 1e-12, "single spike " + fmt(s, 17));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(60);
    for (auto& v : a) v = n(rng);
    a[20] += 8.0;
    const double k = u(rng), off = 10 * n(rng);
    std::vector<double> b = a;
    for (auto& v : b) v = k * v + off;
    const double sa = spike_score(a);
    ck.expect(std::fabs(spike_score(b) - sa) <= 1e-9 * std::max(1.0, sa), "affine invariance");
  }
}

void traffic(Check& ck) {
  int cells = 0;
  for (std::size_t t : {1u, 7u, 32u}) {
    for (std::size_t d : {64u, 1024u}) {
      for (std::size_t b : {16u, 32u}) {
        const TrafficComparison m = traffic_model(t, d, b, 4);
        const TrafficComparison c = measure_traffic(t, d, b, 4, 3);
        ck.expect(c.fused.element_reads == m.fused.element_reads &&
                      c.fused.element_writes == m.fused.element_writes &&
                      c.baseline.element_reads == m.baseline.element_reads &&
                      c.baseline.element_writes == m.baseline.element_writes,
                  "counters differ at T=" + std::to_string(t) + " D=" + std::to_string(d));
        ++cells;
      }
    }
  }
  const TrafficComparison m = traffic_model(1, 1024, 32, 4);
  const double ratio = double(m.fused.element_reads) / double(m.baseline.element_reads);
  ck.expect(ratio <= 0.52, "read ratio " + fmt(ratio));
  ck.note(std::to_string(cells) + " cells, read ratio " + fmt(ratio, 4));
}

void toy(Check& ck) {
  std::ifstream in(MXKIT_DEFAULT_CONSTANTS);
  const CorrectionTable table = correction_table_from_json(nlohmann::json::parse(in));
  ToyModelConfig base;
  base.seed = 1;
  base.correction_p1 = lookup_correction(table, 1.0, base.block_size);
  base.correction_p2 = lookup_correction(table, 2.0, base.block_size);
  double ref = 0, p2 = 0;
  for (NormVariant v : {NormVariant::kRmsNormRef, NormVariant::kMxNormP1, NormVariant::kMxNormP2,
                        NormVariant::kPostRound}) {
    ToyModelConfig c = base;
    c.variant = v;
    const TrainResult r = train(c);
    const double ratio = r.losses.back() / r.losses.front();
    ck.expect(r.losses.size() <= 500 && ratio <= 0.5,
              std::string(variant_name(v)) + " final/initial " + fmt(ratio));
    if (v == NormVariant::kRmsNormRef) ref = r.losses.back();
    if (v == NormVariant::kMxNormP2) {
      p2 = r.losses.back();
      const TrainResult again = train(c);
      ck.expect(again.losses == r.losses && again.layer1.weight == r.layer1.weight &&
                    again.layer2.weight == r.layer2.weight,
                "rerun not bit-identical");
    }
  }
  const double rel = std::fabs(p2 - ref) / ref;
  ck.expect(rel <= 0.2, "rmsnorm-ref vs mxnorm-p2 " + fmt(rel));
  ck.note("final ref " + fmt(ref, 4) + " p2 " + fmt(p2, 4));
}

void bench(Check& ck) {
  BenchGrid grid = BenchGrid::standard().scaled(1.0 / 256);
  grid.repetitions = 5;
  grid.warmup = 1;
  BenchOptions opts;
  opts.seed = 3;
  const BenchReport rep = run_bench(grid, opts);
  ck.expect(rep.cells.size() == grid.cell_count(), "incomplete grid");
  std::size_t counted = 0;
  for (const BenchGroup& g : rep.groups) {
    std::vector<double> s;
    for (const BenchCell& c : rep.cells) {
      if (c.block_size == g.block_size && c.format == g.format && c.reliable) {
        s.push_back(c.speedup);
      }
    }
    counted += g.reliable_cells + g.unreliable_cells;
    ck.expect(s.size() == g.reliable_cells, "reliable count");
    if (!s.empty()) {
      ck.expect(std::fabs(geometric_mean(s) - g.geomean_speedup) <= 1e-12 * g.geomean_speedup,
                "group geomean");
    }
    ck.note("B=" + std::to_string(g.block_size) + "/" + std::string(format_of(g.format).name) + " " +
            fmt(g.geomean_speedup, 3) + "x");
  }
  ck.expect(counted == rep.cells.size(), "groups do not cover all cells");

  // Exclusion: an impossible reliability floor must empty every group.
  BenchGrid tiny = grid;
  tiny.tokens = {16};
  tiny.hidden_dims = {1024};
  BenchOptions strict = opts;
  strict.min_reliable_ns = 1e15;
  const BenchReport none = run_bench(tiny, strict);
  ck.expect(none.unreliable_count == none.cells.size(), "unreliable cells not flagged");
  for (const BenchGroup& g : none.groups) {
    ck.expect(g.reliable_cells == 0 && std::isnan(g.geomean_speedup), "unreliable not excluded");
  }

  const RowMatrix x = gaussian_matrix(256, 4096, 4);
  const BenchKernel k = fused_kernel();
  const PairTiming self = time_pair([&] { k(x, 32, kE4M3); }, [&] { k(x, 32, kE4M3); }, 31, 3);
  const double speed = self.median_b_ns / self.median_a_ns;
  ck.expect(std::fabs(speed - 1.0) <= 0.05, "self-comparison " + fmt(speed));
  ck.note("self " + fmt(speed, 4) + ", " + std::to_string(rep.unreliable_count) +
          " unreliable of " + std::to_string(rep.cells.size()));
}

}  // namespace
}  // namespace mxkit

int main() {
  using namespace mxkit;
  const std::pair<const char*, std::function<void(Check&)>> criteria[] = {
      {"format conformance", formats},      {"block-statistic convergence", convergence},
      {"correction constants", constants},  {"output bounds", bounds},
      {"fidelity", fidelity},               {"gradient correctness", gradients},
      {"post-round estimator", postround},  {"spike score", spikes},
      {"traffic model", traffic},           {"toy training", toy},
      {"bench harness", bench}};
  int failed = 0;
  int n = 0;
  for (const auto& [name, run] : criteria) {
    ++n;
    Check ck;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      run(ck);
    } catch (const std::exception& e) {
      ck.expect(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s  %s (%.1fs) %s\n", n, ck.passed() ? "PASS" : "FAIL", name, secs,
                ck.text().c_str());
    std::fflush(stdout);
    failed += !ck.passed();
  }
  return failed == 0 ? 0 : 1;
}
