// SPDX-License-Identifier: Apache-2.0
#include "mxkit/random.hpp"

namespace mxkit {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x6d786b74u};
  return std::mt19937_64(seq);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  auto rng = make_rng(seed, stream ^ 0x5eed5eed00000000ull);
  return rng();
}

RowMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double sigma) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  RowMatrix out(rows, cols);
  for (float& v : out.data()) v = static_cast<float>(normal(rng));
  return out;
}

}  // namespace mxkit
