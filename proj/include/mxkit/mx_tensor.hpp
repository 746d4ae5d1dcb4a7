// SPDX-License-Identifier: Apache-2.0
//
// Row-blocked MX tensors: each row of D = K*B elements is split into K
// contiguous blocks that share one E8M0 scale; elements are stored as
// minifloat codes, one code per byte.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mxkit/format.hpp"
#include "mxkit/matrix.hpp"
#include "mxkit/traffic.hpp"

namespace mxkit {

struct MxTensor {
  std::size_t rows = 0;
  std::size_t blocks_per_row = 0;
  std::size_t block_size = 0;
  FormatId value_format = FormatId::kE4M3;
  std::vector<E8M0> scales;           // rows x blocks_per_row
  std::vector<std::uint8_t> values;   // rows x blocks_per_row x block_size

  std::size_t cols() const { return blocks_per_row * block_size; }
  const MiniFloatFormat& format() const { return format_of(value_format); }

  E8M0 scale(std::size_t t, std::size_t k) const { return scales[t * blocks_per_row + k]; }
  std::uint8_t value(std::size_t t, std::size_t k, std::size_t b) const {
    return values[(t * blocks_per_row + k) * block_size + b];
  }

  /// Checks shape consistency and that no code is NaN/255. Throws on failure.
  void validate() const;

  friend bool operator==(const MxTensor&, const MxTensor&) = default;
};

/// Read-only (T, K, B) view over a row-major matrix.
struct BlockedView {
  const RowMatrix* matrix = nullptr;
  std::size_t rows = 0;
  std::size_t blocks_per_row = 0;
  std::size_t block_size = 0;

  float at(std::size_t t, std::size_t k, std::size_t b) const {
    return (*matrix)(t, k * block_size + b);
  }
  std::span<const float> block_span(std::size_t t, std::size_t k) const {
    return matrix->row(t).subspan(k * block_size, block_size);
  }
};

/// Throws "hidden dimension not divisible by block size" unless B divides D.
BlockedView block(const RowMatrix& x, std::size_t block_size);

/// T x K matrix of max_b |x[t, k, b]|. Throws on non-finite input.
RowMatrix block_absmax(const BlockedView& x, AccessCounter* counter = nullptr);

MxTensor mxcast(const RowMatrix& x, std::size_t block_size, const MiniFloatFormat& fmt,
                AccessCounter* counter = nullptr);

/// MX-quantizes x^T, i.e. blocks run down the columns of x.
MxTensor mxcast_transposed(const RowMatrix& x, std::size_t block_size,
                           const MiniFloatFormat& fmt);

RowMatrix dequant(const MxTensor& q);

namespace detail {

/// Quantizes one row scaled by rho: scales from fl(absmax[k] * rho), values
/// from fl(x[d] * rho) / scale. rho == 1 gives a plain MX cast. Because
/// float multiplication by a positive factor is monotone, fl(absmax * rho)
/// equals the absmax of the scaled row exactly.
void quantize_scaled_row(std::span<const float> x, std::span<const float> absmax, float rho,
                         std::size_t block_size, const MiniFloatFormat& fmt, E8M0* scales,
                         std::uint8_t* values);

}  // namespace detail

}  // namespace mxkit
