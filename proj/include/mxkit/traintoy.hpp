// SPDX-License-Identifier: Apache-2.0
//
// Two-layer regression network (norm-linear -> ReLU -> norm-linear) trained by
// plain gradient descent on seeded synthetic data. Exercises every forward and
// backward path of the norm-linear layer end to end.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "mxkit/analysis.hpp"
#include "mxkit/linear.hpp"

namespace mxkit {

enum class NormVariant : std::uint8_t { kRmsNormRef, kMxNormP1, kMxNormP2, kPostRound };

std::string_view variant_name(NormVariant v);
/// "rmsnorm-ref", "mxnorm-p1", "mxnorm-p2", "postround".
NormVariant parse_variant(std::string_view name);

struct ToyModelConfig {
  std::size_t input_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t output_dim = 16;
  NormVariant variant = NormVariant::kMxNormP2;
  std::size_t block_size = 16;
  FormatId value_format = FormatId::kE4M3;
  FormatId grad_format = FormatId::kE4M3;
  double correction_p1 = 0.0;  // c for p = 1 at block_size; required for mxnorm-p1
  double correction_p2 = 0.0;  // c for p = 2 at block_size; required for mxnorm-p2
  double eps = kDefaultEpsilon;
  double learning_rate = 0.5;
  std::size_t steps = 500;
  std::size_t batch_size = 32;
  double target_noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  /// Norm parameters for the configured variant.
  NormSpec norm_spec() const;
};

struct StepRecord {
  double loss = 0.0;
  std::array<double, 2> grad_w_norm{};  // Frobenius norm of each layer's weight gradient
  ActivationStats hidden;               // first layer output (pre-activation)
  ActivationStats output;
};

struct TrainResult {
  std::vector<double> losses;
  std::vector<StepRecord> steps;
  LinearState layer1;
  LinearState layer2;
};

/// Deterministic for a fixed config, independent of the thread count. Throws
/// "training diverged at step N" if the loss becomes non-finite.
TrainResult train(const ToyModelConfig& config);

}  // namespace mxkit
