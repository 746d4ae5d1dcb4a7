// SPDX-License-Identifier: Apache-2.0
#include "mxkit/traintoy.hpp"

#include <cmath>
#include <random>
#include <string>

#include "mxkit/random.hpp"

namespace mxkit {
namespace {

RowMatrix random_weight(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  RowMatrix w(out, in);
  for (float& v : w.data()) v = static_cast<float>(normal(rng));
  return w;
}

LinearState make_layer(RowMatrix weight, const ToyModelConfig& config,
                       const std::shared_ptr<const PostRoundTable>& table) {
  LinearState layer;
  layer.gamma.assign(weight.cols(), 1.0f);
  layer.weight = std::move(weight);
  layer.spec = config.norm_spec();
  layer.grad_format = config.grad_format;
  switch (config.variant) {
    case NormVariant::kRmsNormRef:
      layer.norm = NormKind::kRmsNormReference;
      break;
    case NormVariant::kMxNormP1:
    case NormVariant::kMxNormP2:
      layer.norm = NormKind::kMxNorm;
      break;
    case NormVariant::kPostRound:
      layer.norm = NormKind::kPostRound;
      layer.table = table;
      break;
  }
  return layer;
}

double frobenius(const RowMatrix& m) {
  double acc = 0.0;
  for (float v : m.data()) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

void sgd_update(LinearState& layer, const LinearGrads& g, double lr) {
  auto w = layer.weight.data();
  auto gw = g.grad_w.data();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= static_cast<float>(lr * gw[i]);
  for (std::size_t i = 0; i < layer.gamma.size(); ++i) {
    layer.gamma[i] -= static_cast<float>(lr * g.grad_gamma[i]);
  }
}

}  // namespace

std::string_view variant_name(NormVariant v) {
  switch (v) {
    case NormVariant::kRmsNormRef:
      return "rmsnorm-ref";
    case NormVariant::kMxNormP1:
      return "mxnorm-p1";
    case NormVariant::kMxNormP2:
      return "mxnorm-p2";
    case NormVariant::kPostRound:
      return "postround";
  }
  return "unknown";
}

NormVariant parse_variant(std::string_view name) {
  for (NormVariant v : {NormVariant::kRmsNormRef, NormVariant::kMxNormP1, NormVariant::kMxNormP2,
                        NormVariant::kPostRound}) {
    if (variant_name(v) == name) return v;
  }
  throw Error("unknown norm variant '" + std::string(name) + "'");
}

void ToyModelConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0) throw Error("widths must be positive");
  if (block_size == 0) throw Error("block size must be positive");
  for (std::size_t w : {input_dim, hidden_dim, output_dim, batch_size}) {
    if (w % block_size != 0) {
      throw Error("widths and batch size must be divisible by the block size");
    }
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error("learning rate must be non-negative");
  }
  if (variant == NormVariant::kMxNormP1 && !(correction_p1 > 0.0)) {
    throw Error("mxnorm-p1 needs a positive correction constant");
  }
  if (variant == NormVariant::kMxNormP2 && !(correction_p2 > 0.0)) {
    throw Error("mxnorm-p2 needs a positive correction constant");
  }
}

NormSpec ToyModelConfig::norm_spec() const {
  NormSpec spec;
  spec.block_size = block_size;
  spec.eps = eps;
  spec.value_format = value_format;
  spec.p = variant == NormVariant::kMxNormP1 ? 1.0 : 2.0;
  switch (variant) {
    case NormVariant::kMxNormP1:
      spec.c = correction_p1;
      break;
    case NormVariant::kMxNormP2:
      spec.c = correction_p2;
      break;
    default:
      spec.c = 1.0;  // unused by the reference and post-round paths
      break;
  }
  return spec;
}

TrainResult train(const ToyModelConfig& config) {
  config.validate();
  std::shared_ptr<const PostRoundTable> table;
  if (config.variant == NormVariant::kPostRound) {
    table = std::make_shared<const PostRoundTable>(PostRoundTable::build(config.block_size));
  }

  auto init_rng = make_rng(config.seed, 0);
  const RowMatrix teacher = random_weight(config.output_dim, config.input_dim, init_rng);
  TrainResult result{
      {},
      {},
      make_layer(random_weight(config.hidden_dim, config.input_dim, init_rng), config, table),
      make_layer(random_weight(config.output_dim, config.hidden_dim, init_rng), config, table)};

  auto data_rng = make_rng(config.seed, 1);
  std::normal_distribution<double> normal;
  const std::size_t t_count = config.batch_size;
  const double inv_n = 1.0 / static_cast<double>(t_count * config.output_dim);

  for (std::size_t step = 0; step < config.steps; ++step) {
    RowMatrix x(t_count, config.input_dim);
    for (float& v : x.data()) v = static_cast<float>(normal(data_rng));
    RowMatrix target = matmul_nt(x, teacher);
    for (float& v : target.data()) v += static_cast<float>(config.target_noise * normal(data_rng));

    // Config was validated up front, so a throw here means activations blew up.
    RowMatrix h1, out;
    try {
      h1 = forward(result.layer1, x, true);
      RowMatrix a1 = h1;
      for (float& v : a1.data()) v = v > 0.0f ? v : 0.0f;
      out = forward(result.layer2, a1, true);
    } catch (const Error& e) {
      throw Error("training diverged at step " + std::to_string(step) + ": " + e.what());
    }

    double loss = 0.0;
    RowMatrix grad_out(t_count, config.output_dim);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double diff = static_cast<double>(out.data()[i]) - target.data()[i];
      loss += diff * diff;
      grad_out.data()[i] = static_cast<float>(2.0 * diff * inv_n);
    }
    loss *= inv_n;
    if (!std::isfinite(loss)) throw Error("training diverged at step " + std::to_string(step));

    LinearGrads g1, g2;
    try {
      g2 = backward(result.layer2, grad_out);
      RowMatrix grad_h1 = g2.grad_x;
      for (std::size_t i = 0; i < grad_h1.size(); ++i) {
        if (!(h1.data()[i] > 0.0f)) grad_h1.data()[i] = 0.0f;
      }
      g1 = backward(result.layer1, grad_h1);
    } catch (const Error& e) {
      throw Error("training diverged at step " + std::to_string(step) + ": " + e.what());
    }

    StepRecord record;
    record.loss = loss;
    record.grad_w_norm = {frobenius(g1.grad_w), frobenius(g2.grad_w)};
    record.hidden = activation_stats(h1);
    record.output = activation_stats(out);
    result.steps.push_back(std::move(record));
    result.losses.push_back(loss);

    sgd_update(result.layer1, g1, config.learning_rate);
    sgd_update(result.layer2, g2, config.learning_rate);
  }
  result.layer1.cache.reset();
  result.layer2.cache.reset();
  return result;
}

}  // namespace mxkit
