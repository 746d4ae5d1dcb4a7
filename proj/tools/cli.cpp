// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mxkit/analysis.hpp"
#include "mxkit/bench.hpp"
#include "mxkit/io.hpp"
#include "mxkit/norms.hpp"
#include "mxkit/parallel.hpp"
#include "mxkit/postround.hpp"
#include "mxkit/random.hpp"
#include "mxkit/traintoy.hpp"

#ifndef MXKIT_DEFAULT_CONSTANTS
#define MXKIT_DEFAULT_CONSTANTS "config/correction_constants.json"
#endif

namespace mxkit::cli {
namespace {

// Output objects keep insertion order so human output reads top to bottom.
using json = nlohmann::ordered_json;

// Thrown for flag combinations CLI11 cannot express; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string num17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_text(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  return os;
}

std::vector<float> load_gamma(const std::string& path, std::size_t cols) {
  const RowMatrix g = load_tensor(path);
  if (g.rows() != 1 || g.cols() != cols) throw Error("gain tensor must have shape [1, D]");
  return {g.data().begin(), g.data().end()};
}

// Options that describe one NormSpec plus where its constant comes from.
struct SpecFlags {
  double p = 2.0;
  std::size_t block = 32;
  std::string vfmt = "e4m3";
  std::optional<double> c;
  std::string constants = MXKIT_DEFAULT_CONSTANTS;
  double eps = kDefaultEpsilon;

  void add_to(CLI::App* cmd, std::size_t default_block) {
    block = default_block;
    cmd->add_option("--p", p, "p-mean exponent")->capture_default_str();
    cmd->add_option("--block", block, "block size")->capture_default_str();
    cmd->add_option("--vfmt", vfmt, "value format")
        ->check(CLI::IsMember({"e4m3", "e5m2", "e2m1"}))
        ->capture_default_str();
    cmd->add_option("--c", c, "correction constant (default: looked up in --constants)");
    cmd->add_option("--constants", constants, "correction constant table (JSON)")
        ->capture_default_str();
    cmd->add_option("--eps", eps, "epsilon added to the RMS estimate")->capture_default_str();
  }

  double resolve_c(double for_p) const {
    if (c) return *c;
    const auto table = correction_table_from_json(read_json_file(constants));
    return lookup_correction(table, for_p, block);
  }

  NormSpec spec(bool needs_c = true) const {
    NormSpec s;
    s.p = p;
    s.block_size = block;
    s.value_format = parse_format(vfmt).id;
    s.eps = eps;
    s.c = needs_c ? resolve_c(p) : 1.0;
    s.validate();
    return s;
  }
};

json stats_json(const ActivationStats& s) {
  return {{"rms_mean", s.rms_mean}, {"rms_min", s.rms_min}, {"rms_max", s.rms_max},
          {"abs_max", s.abs_max},   {"zero_count", s.zero_count}};
}

// Human output: "key: value" lines in insertion order.
void print_fields(std::ostream& out, const json& j) {
  for (const auto& [key, v] : j.items()) {
    if (v.is_number_float()) {
      out << key << ": " << num(v.get<double>()) << '\n';
    } else if (v.is_string()) {
      out << key << ": " << v.get<std::string>() << '\n';
    } else {
      out << key << ": " << v.dump() << '\n';
    }
  }
}

void emit(std::ostream& out, bool as_json, const json& j) {
  if (as_json) {
    out << j.dump(2) << '\n';
  } else {
    print_fields(out, j);
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"MX block quantization and MXNorm toolkit", "mxkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();

  bool as_json = false;
  std::optional<std::size_t> threads;
  app.add_flag("--json", as_json, "machine-readable JSON on standard output");
  app.add_option("--threads", threads, "worker threads (fallback: MXKIT_THREADS)")
      ->check(CLI::PositiveNumber);

  std::uint64_t seed = 0;
  auto add_seed = [&seed](CLI::App* cmd, bool required) {
    auto* o = cmd->add_option("--seed", seed, "random seed");
    if (required) o->required();
    return o;
  };

  // random-tensor
  auto* rnd = app.add_subcommand("random-tensor", "write a Gaussian tensor file");
  std::size_t rnd_rows = 0, rnd_cols = 0;
  double rnd_sigma = 1.0;
  std::string rnd_out;
  rnd->add_option("--rows", rnd_rows)->required()->check(CLI::PositiveNumber);
  rnd->add_option("--cols", rnd_cols)->required()->check(CLI::PositiveNumber);
  rnd->add_option("--sigma", rnd_sigma)->check(CLI::PositiveNumber);
  rnd->add_option("--out", rnd_out)->required();
  add_seed(rnd, true);

  // quantize / dequantize
  auto* quant = app.add_subcommand("quantize", "MX-cast a tensor file");
  std::string q_in, q_out, q_vfmt = "e4m3";
  std::size_t q_block = 32;
  quant->add_option("--in", q_in)->required()->check(CLI::ExistingFile);
  quant->add_option("--out", q_out)->required();
  quant->add_option("--block", q_block)->check(CLI::PositiveNumber);
  quant->add_option("--vfmt", q_vfmt)->check(CLI::IsMember({"e4m3", "e5m2", "e2m1"}));

  auto* deq = app.add_subcommand("dequantize", "expand an MX file to a tensor file");
  std::string dq_in, dq_out, dq_ref;
  deq->add_option("--in", dq_in)->required()->check(CLI::ExistingFile);
  deq->add_option("--out", dq_out)->required();
  deq->add_option("--reference", dq_ref, "tensor to report the reconstruction error against")
      ->check(CLI::ExistingFile);

  // norm
  auto* norm = app.add_subcommand("norm", "normalize a tensor file");
  std::string n_kind, n_in, n_out, n_gamma, n_table, n_rho_out;
  SpecFlags n_flags;
  norm->add_option("kind", n_kind, "rmsnorm | mxnorm | postround")
      ->required()
      ->check(CLI::IsMember({"rmsnorm", "mxnorm", "postround"}));
  norm->add_option("--in", n_in)->required()->check(CLI::ExistingFile);
  norm->add_option("--out", n_out)->required();
  n_flags.add_to(norm, 32);
  norm->add_option("--gamma", n_gamma, "gain tensor [1, D] (rmsnorm only)")
      ->check(CLI::ExistingFile);
  norm->add_option("--table", n_table, "post-round table JSON (default: built on the fly)")
      ->check(CLI::ExistingFile);
  norm->add_option("--rho-out", n_rho_out, "CSV of per-row inverse RMS");

  // estimate-c
  auto* est = app.add_subcommand("estimate-c", "Monte Carlo correction constant");
  std::vector<double> e_p;
  std::vector<std::size_t> e_b;
  std::uint64_t e_blocks = 1000000;
  std::string e_out;
  est->add_option("--p", e_p, "one or more exponents")->required();
  est->add_option("--b", e_b, "one or more block sizes")->required();
  est->add_option("--blocks", e_blocks, "sampled blocks per constant")
      ->check(CLI::PositiveNumber);
  est->add_option("--out", e_out, "write a correction table JSON");
  add_seed(est, true);

  // fidelity
  auto* fid = app.add_subcommand("fidelity", "r^2 of MXNorm against RMSNorm + MXCast");
  SpecFlags f_flags;
  std::vector<std::size_t> f_blocks{2, 4, 8, 16, 32, 64};
  std::size_t f_rows = 16, f_trials = 100;
  std::string f_in;
  f_flags.add_to(fid, 32);
  fid->add_option("--blocks", f_blocks, "blocks per row to sweep");
  fid->add_option("--rows", f_rows)->check(CLI::PositiveNumber);
  fid->add_option("--trials", f_trials)->check(CLI::PositiveNumber);
  fid->add_option("--in", f_in, "score one tensor file instead of a sweep")
      ->check(CLI::ExistingFile);
  auto* f_seed = add_seed(fid, false);

  // convergence
  auto* conv = app.add_subcommand("convergence", "p-mean / RMS ratio against block count");
  double c_p = 2.0;
  std::size_t c_b = 16, c_seeds = 100;
  std::vector<std::size_t> c_blocks{64, 128, 256, 512, 1024, 2048, 4096};
  conv->add_option("--p", c_p);
  conv->add_option("--b", c_b)->check(CLI::PositiveNumber);
  conv->add_option("--blocks", c_blocks);
  conv->add_option("--seeds", c_seeds)->check(CLI::PositiveNumber);
  add_seed(conv, true);

  // bounds-check
  auto* bnd = app.add_subcommand("bounds-check", "output infinity-norm bounds");
  SpecFlags b_flags;
  std::size_t b_d = 1024, b_rows = 100000;
  b_flags.add_to(bnd, 16);
  bnd->add_option("--d", b_d, "hidden dimension")->check(CLI::PositiveNumber);
  bnd->add_option("--rows", b_rows, "random rows");
  add_seed(bnd, true);

  // spike-score
  auto* spk = app.add_subcommand("spike-score", "instability score of a loss CSV");
  std::string s_in;
  SpikeScoreOptions s_opts;
  spk->add_option("--in", s_in)->required()->check(CLI::ExistingFile);
  spk->add_option("--window", s_opts.window)->check(CLI::PositiveNumber);
  spk->add_option("--tail", s_opts.tail_fraction);
  spk->add_option("--threshold", s_opts.threshold);

  // train-toy
  auto* toy = app.add_subcommand("train-toy", "train the two-layer toy model");
  ToyModelConfig t_cfg;
  std::string t_variant = "mxnorm-p2", t_out, t_stats,
              t_constants = MXKIT_DEFAULT_CONSTANTS;
  toy->add_option("--variant", t_variant)
      ->check(CLI::IsMember({"rmsnorm-ref", "mxnorm-p1", "mxnorm-p2", "postround"}));
  toy->add_option("--steps", t_cfg.steps);
  toy->add_option("--lr", t_cfg.learning_rate);
  toy->add_option("--batch", t_cfg.batch_size)->check(CLI::PositiveNumber);
  toy->add_option("--block", t_cfg.block_size)->check(CLI::PositiveNumber);
  toy->add_option("--input-dim", t_cfg.input_dim)->check(CLI::PositiveNumber);
  toy->add_option("--hidden-dim", t_cfg.hidden_dim)->check(CLI::PositiveNumber);
  toy->add_option("--output-dim", t_cfg.output_dim)->check(CLI::PositiveNumber);
  toy->add_option("--constants", t_constants);
  toy->add_option("--out", t_out, "loss CSV (step,loss)");
  toy->add_option("--stats-out", t_stats, "per-step gradient and activation CSV");
  add_seed(toy, true);

  // bench
  auto* bench = app.add_subcommand("bench", "time fused MXNorm against RMSNorm + MXCast");
  double bn_scale = 1.0 / 16.0;
  std::size_t bn_reps = 20, bn_warmup = 3;
  bool bn_parallel = false;
  std::string bn_out;
  std::vector<std::size_t> bn_dims, bn_blocks;
  std::vector<std::string> bn_vfmts;
  bench->add_option("--scale", bn_scale, "token count multiplier")->check(CLI::PositiveNumber);
  bench->add_option("--reps", bn_reps)->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bn_warmup);
  bench->add_option("--dims", bn_dims, "override hidden dims");
  bench->add_option("--blocks", bn_blocks, "override block sizes");
  bench->add_option("--vfmt", bn_vfmts, "override value formats")
      ->check(CLI::IsMember({"e4m3", "e5m2", "e2m1"}));
  bench->add_flag("--parallel", bn_parallel, "row-parallel pipelines on --threads workers");
  bench->add_option("--out", bn_out, "per-cell CSV");
  add_seed(bench, true);

  // postround-table
  auto* prt = app.add_subcommand("postround-table", "tabulate f^-1 for post-round MXNorm");
  std::size_t pt_block = 32;
  int pt_resolution = kDefaultTableResolution, pt_truncation = kDefaultTruncation;
  std::string pt_out;
  prt->add_option("--block", pt_block)->check(CLI::PositiveNumber);
  prt->add_option("--resolution", pt_resolution)->check(CLI::PositiveNumber);
  prt->add_option("--truncation", pt_truncation)->check(CLI::PositiveNumber);
  prt->add_option("--out", pt_out, "write JSON here instead of standard output");

  // traffic
  auto* trf = app.add_subcommand("traffic", "element access counts of both pipelines");
  std::size_t tr_t = 1, tr_d = 1024, tr_b = 32, tr_bytes = 4;
  bool tr_measure = false;
  trf->add_option("--t", tr_t)->check(CLI::PositiveNumber);
  trf->add_option("--d", tr_d)->check(CLI::PositiveNumber);
  trf->add_option("--block", tr_b)->check(CLI::PositiveNumber);
  trf->add_option("--bytes", tr_bytes)->check(CLI::PositiveNumber);
  trf->add_flag("--measure", tr_measure, "also run instrumented pipelines (needs --seed)");
  auto* tr_seed = add_seed(trf, false);

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (threads) set_thread_count(*threads);

    if (*rnd) {
      save_tensor(rnd_out, gaussian_matrix(rnd_rows, rnd_cols, seed, rnd_sigma));
      emit(out, as_json, {{"rows", rnd_rows}, {"cols", rnd_cols}, {"out", rnd_out}});
    } else if (*quant) {
      const RowMatrix x = load_tensor(q_in);
      const MxTensor q = mxcast(x, q_block, parse_format(q_vfmt));
      save_mx(q_out, q);
      emit(out, as_json,
           {{"rows", q.rows}, {"cols", q.cols()}, {"block_size", q.block_size},
            {"blocks_per_row", q.blocks_per_row}, {"vfmt", q_vfmt}, {"out", q_out}});
    } else if (*deq) {
      const MxTensor q = load_mx(dq_in);
      const RowMatrix y = dequant(q);
      save_tensor(dq_out, y);
      json j = {{"rows", y.rows()}, {"cols", y.cols()}, {"vfmt", q.format().name}, {"out", dq_out}};
      if (!dq_ref.empty()) {
        const RowMatrix x = load_tensor(dq_ref);
        if (x.rows() != y.rows() || x.cols() != y.cols()) {
          throw Error("reference shape does not match the MX tensor");
        }
        // Error relative to each block's scale, in units of the format's
        // largest power of two.
        double max_abs = 0.0, max_scaled = 0.0;
        for (std::size_t t = 0; t < y.rows(); ++t) {
          for (std::size_t d = 0; d < y.cols(); ++d) {
            const double e = std::fabs(static_cast<double>(x(t, d)) - y(t, d));
            max_abs = std::max(max_abs, e);
            max_scaled = std::max(max_scaled, e / q.scale(t, d / q.block_size).value());
          }
        }
        j["max_abs_error"] = max_abs;
        j["max_error_in_scale_units"] = max_scaled;
      }
      emit(out, as_json, j);
    } else if (*norm) {
      const RowMatrix x = load_tensor(n_in);
      std::vector<float> rho;
      if (n_kind == "rmsnorm") {
        const std::vector<float> gamma =
            n_gamma.empty() ? std::vector<float>(x.cols(), 1.0f) : load_gamma(n_gamma, x.cols());
        RmsNormResult r = rmsnorm(x, gamma, n_flags.eps);
        save_tensor(n_out, r.y);
        rho = std::move(r.rho);
      } else if (n_kind == "mxnorm") {
        if (!n_gamma.empty()) throw UsageError("--gamma applies to rmsnorm only");
        MxNormResult r = mxnorm(x, n_flags.spec());
        save_mx(n_out, r.q);
        rho = std::move(r.rho);
      } else {
        if (!n_gamma.empty()) throw UsageError("--gamma applies to rmsnorm only");
        const NormSpec spec = n_flags.spec(false);
        const PostRoundTable table = n_table.empty()
                                         ? PostRoundTable::build(spec.block_size)
                                         : postround_table_from_json(read_json_file(n_table));
        PostRoundResult r = postround_mxnorm(x, spec, table);
        save_mx(n_out, r.q);
        rho = std::move(r.rho);
      }
      if (!n_rho_out.empty()) {
        auto os = open_text(n_rho_out);
        os << "row,inverse_rms\n";
        for (std::size_t t = 0; t < rho.size(); ++t) os << t << ',' << num17(rho[t]) << '\n';
      }
      const auto [lo, hi] = std::minmax_element(rho.begin(), rho.end());
      emit(out, as_json,
           {{"kind", n_kind}, {"rows", x.rows()}, {"cols", x.cols()},
            {"inverse_rms_min", *lo}, {"inverse_rms_max", *hi}, {"out", n_out}});
    } else if (*est) {
      CorrectionTable table;
      json rows = json::array();
      if (!as_json) out << "p,block_size,c,inverse_c,standard_error\n";
      for (double p : e_p) {
        for (std::size_t b : e_b) {
          const CorrectionEstimate e = estimate_c_with_error(p, b, e_blocks, seed);
          table[{p, b}] = e.c;
          rows.push_back({{"p", p}, {"block_size", b}, {"c", e.c}, {"inverse_c", 1.0 / e.c},
                          {"standard_error", e.standard_error}});
          if (!as_json) {
            out << num(p) << ',' << b << ',' << num(e.c) << ',' << num(1.0 / e.c) << ','
                << num(e.standard_error) << '\n';
          }
        }
      }
      if (!e_out.empty()) {
        nlohmann::json j = correction_table_to_json(table);
        j["blocks"] = e_blocks;
        j["seed"] = seed;
        auto os = open_text(e_out);
        os << j.dump(2) << '\n';
      }
      if (as_json) out << json{{"blocks", e_blocks}, {"seed", seed}, {"constants", rows}}.dump(2)
                       << '\n';
    } else if (*fid) {
      const NormSpec spec = f_flags.spec();
      if (!f_in.empty()) {
        const double r2 = r2_fidelity(load_tensor(f_in), spec);
        emit(out, as_json, {{"r2", r2}});
      } else {
        if (f_seed->count() == 0) throw UsageError("--seed is required for a fidelity sweep");
        const auto res = fidelity_study(spec, f_blocks, f_rows, f_trials, seed);
        json rows = json::array();
        if (!as_json) out << "blocks,hidden_dim,median_r2,min_r2,max_r2\n";
        for (const auto& r : res) {
          rows.push_back({{"blocks", r.blocks}, {"hidden_dim", r.blocks * spec.block_size},
                          {"median_r2", r.median}, {"min_r2", r.min}, {"max_r2", r.max}});
          if (!as_json) {
            out << r.blocks << ',' << r.blocks * spec.block_size << ',' << num(r.median) << ','
                << num(r.min) << ',' << num(r.max) << '\n';
          }
        }
        if (as_json) out << rows.dump(2) << '\n';
      }
    } else if (*conv) {
      const auto res = convergence_study(c_p, c_b, c_blocks, c_seeds, seed);
      json rows = json::array();
      if (!as_json) out << "blocks,median_ratio,p10,p90,interdecile\n";
      for (const auto& r : res) {
        rows.push_back({{"blocks", r.blocks}, {"median_ratio", r.median}, {"p10", r.p10},
                        {"p90", r.p90}, {"interdecile", r.interdecile()}});
        if (!as_json) {
          out << r.blocks << ',' << num(r.median) << ',' << num(r.p10) << ',' << num(r.p90) << ','
              << num(r.interdecile()) << '\n';
        }
      }
      if (as_json) out << rows.dump(2) << '\n';
    } else if (*bnd) {
      const NormSpec spec = b_flags.spec();
      const BoundsReport r = bounds_check(spec, b_d, b_rows, seed);
      const bool rms_ok = r.rmsnorm_max <= r.rmsnorm_bound * (1.0 + 1e-6);
      const bool mx_ok = r.mxnorm_max <= r.mxnorm_bound * (1.0 + 1e-3);
      emit(out, as_json,
           {{"rows_checked", r.rows_checked},
            {"rmsnorm_max", r.rmsnorm_max},
            {"rmsnorm_bound", r.rmsnorm_bound},
            {"rmsnorm_onehot_fraction", r.rmsnorm_onehot_max / r.rmsnorm_bound},
            {"mxnorm_max", r.mxnorm_max},
            {"mxnorm_dequant_max", r.mxnorm_dequant_max},
            {"mxnorm_bound", r.mxnorm_bound},
            {"mxnorm_onehot_fraction", r.mxnorm_onehot_max / r.mxnorm_bound},
            {"within_bounds", rms_ok && mx_ok}});
      if (!(rms_ok && mx_ok)) throw Error("output bound violated");
    } else if (*spk) {
      std::ifstream is(s_in);
      const std::vector<double> losses = read_loss_csv(is);
      const double score = spike_score(losses, s_opts);
      emit(out, as_json, {{"steps", losses.size()}, {"spike_score", score}});
    } else if (*toy) {
      t_cfg.variant = parse_variant(t_variant);
      t_cfg.seed = seed;
      if (t_cfg.variant == NormVariant::kMxNormP1 || t_cfg.variant == NormVariant::kMxNormP2) {
        const auto table = correction_table_from_json(read_json_file(t_constants));
        const double p = t_cfg.variant == NormVariant::kMxNormP1 ? 1.0 : 2.0;
        (p == 1.0 ? t_cfg.correction_p1 : t_cfg.correction_p2) =
            lookup_correction(table, p, t_cfg.block_size);
      }
      const TrainResult r = train(t_cfg);
      if (!t_out.empty()) {
        auto os = open_text(t_out);
        write_loss_csv(os, r.losses);
      }
      if (!t_stats.empty()) {
        auto os = open_text(t_stats);
        os << "step,loss,grad_w1_norm,grad_w2_norm,hidden_rms_mean,hidden_abs_max,"
              "output_rms_mean,output_abs_max\n";
        for (std::size_t i = 0; i < r.steps.size(); ++i) {
          const StepRecord& s = r.steps[i];
          os << i << ',' << num17(s.loss) << ',' << num17(s.grad_w_norm[0]) << ','
             << num17(s.grad_w_norm[1]) << ',' << num17(s.hidden.rms_mean) << ','
             << num17(s.hidden.abs_max) << ',' << num17(s.output.rms_mean) << ','
             << num17(s.output.abs_max) << '\n';
        }
      }
      const double first = r.losses.front(), last = r.losses.back();
      json j = {{"variant", t_variant},
                {"steps", r.losses.size()},
                {"initial_loss", first},
                {"final_loss", last},
                {"final_over_initial", last / first}};
      if (!r.steps.empty()) j["final_hidden"] = stats_json(r.steps.back().hidden);
      emit(out, as_json, j);
    } else if (*bench) {
      BenchGrid grid = BenchGrid::standard().scaled(bn_scale);
      grid.repetitions = bn_reps;
      grid.warmup = bn_warmup;
      if (!bn_dims.empty()) grid.hidden_dims = bn_dims;
      if (!bn_blocks.empty()) grid.block_sizes = bn_blocks;
      if (!bn_vfmts.empty()) {
        grid.formats.clear();
        for (const auto& f : bn_vfmts) grid.formats.push_back(parse_format(f).id);
      }
      BenchOptions opts;
      opts.seed = seed;
      opts.threads = bn_parallel ? thread_count() : 1;
      const BenchReport report = run_bench(grid, opts);
      if (!bn_out.empty()) {
        auto os = open_text(bn_out);
        os << bench_csv(report);
      }
      json groups = json::array();
      for (const auto& g : report.groups) {
        groups.push_back({{"block_size", g.block_size},
                          {"vfmt", format_of(g.format).name},
                          {"geomean_speedup", std::isfinite(g.geomean_speedup)
                                                  ? json(g.geomean_speedup)
                                                  : json(nullptr)},
                          {"reliable_cells", g.reliable_cells},
                          {"unreliable_cells", g.unreliable_cells}});
      }
      if (as_json) {
        out << json{{"cells", report.cells.size()},
                    {"unreliable", report.unreliable_count},
                    {"threads", opts.threads},
                    {"groups", groups}}
                   .dump(2)
            << '\n';
      } else {
        out << "# CPU timings, " << opts.threads << " thread(s); not comparable to GPU kernels\n";
        out << "block_size,vfmt,geomean_speedup,reliable_cells,unreliable_cells\n";
        for (const auto& g : report.groups) {
          out << g.block_size << ',' << format_of(g.format).name << ','
              << num(g.geomean_speedup) << ',' << g.reliable_cells << ',' << g.unreliable_cells
              << '\n';
        }
      }
    } else if (*prt) {
      const PostRoundTable table = PostRoundTable::build(pt_block, pt_resolution, pt_truncation);
      const std::string text = postround_table_to_json(table).dump(2);
      if (pt_out.empty()) {
        out << text << '\n';
      } else {
        auto os = open_text(pt_out);
        os << text << '\n';
        emit(out, as_json, {{"block_size", pt_block}, {"entries", table.grid.size()},
                            {"out", pt_out}});
      }
    } else if (*trf) {
      if (tr_measure && tr_seed->count() == 0) throw UsageError("--measure requires --seed");
      const TrafficComparison model = traffic_model(tr_t, tr_d, tr_b, tr_bytes);
      std::optional<TrafficComparison> measured;
      if (tr_measure) measured = measure_traffic(tr_t, tr_d, tr_b, tr_bytes, seed);
      json rows = json::array();
      if (!as_json) {
        out << "scheme,element_reads,element_writes,bytes_read,bytes_written";
        out << (measured ? ",measured_reads,measured_writes\n" : "\n");
      }
      for (int i = 0; i < 2; ++i) {
        const TrafficReport& r = i == 0 ? model.baseline : model.fused;
        json row = {{"scheme", r.scheme},
                    {"element_reads", r.element_reads},
                    {"element_writes", r.element_writes},
                    {"bytes_read", r.bytes_read()},
                    {"bytes_written", r.bytes_written()}};
        if (!as_json) {
          out << r.scheme << ',' << r.element_reads << ',' << r.element_writes << ','
              << r.bytes_read() << ',' << r.bytes_written();
        }
        if (measured) {
          const TrafficReport& m = i == 0 ? measured->baseline : measured->fused;
          row["measured_reads"] = m.element_reads;
          row["measured_writes"] = m.element_writes;
          if (!as_json) out << ',' << m.element_reads << ',' << m.element_writes;
        }
        if (!as_json) out << '\n';
        rows.push_back(row);
      }
      if (as_json) out << rows.dump(2) << '\n';
    }
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mxkit::cli
