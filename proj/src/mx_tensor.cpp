// SPDX-License-Identifier: Apache-2.0
#include "mxkit/mx_tensor.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <mutex>
#include <string>

#include "mxkit/parallel.hpp"
#include "row_kernels.hpp"

namespace mxkit {
namespace {

std::array<float, 256> build_decode_table(const MiniFloatFormat& fmt) {
  std::array<float, 256> table{};
  table.fill(std::numeric_limits<float>::quiet_NaN());
  for (unsigned c = 0; c < fmt.code_count(); ++c) {
    if (!fmt.is_nan_code(c)) table[c] = static_cast<float>(decode(c, fmt));
  }
  return table;
}

const std::array<float, 256>& decode_table(FormatId id) {
  static const std::array<float, 256> e4m3 = build_decode_table(kE4M3);
  static const std::array<float, 256> e5m2 = build_decode_table(kE5M2);
  static const std::array<float, 256> e2m1 = build_decode_table(kE2M1);
  switch (id) {
    case FormatId::kE4M3:
      return e4m3;
    case FormatId::kE5M2:
      return e5m2;
    case FormatId::kE2M1:
      return e2m1;
  }
  throw Error("unknown format id");
}

}  // namespace

namespace detail {

void row_absmax(std::span<const float> row, std::size_t block_size, std::span<float> out) {
  bool finite = true;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const float* blk = row.data() + k * block_size;
    float m = 0.0f;
    for (std::size_t b = 0; b < block_size; ++b) {
      const float a = std::fabs(blk[b]);
      finite &= a <= std::numeric_limits<float>::max();
      m = a > m ? a : m;
    }
    out[k] = m;
  }
  if (!finite) throw Error("non-finite input to cast");
}

void quantize_scaled_row(std::span<const float> x, std::span<const float> absmax, float rho,
                         std::size_t block_size, const MiniFloatFormat& fmt, E8M0* scales,
                         std::uint8_t* values) {
  for (std::size_t k = 0; k < absmax.size(); ++k) {
    const E8M0 s = rceil_unchecked(static_cast<double>(absmax[k] * rho), fmt);
    scales[k] = s;
    const double inv_scale = std::ldexp(1.0, -s.exponent());
    const float* blk = x.data() + k * block_size;
    std::uint8_t* out = values + k * block_size;
    for (std::size_t b = 0; b < block_size; ++b) {
      const float v = blk[b] * rho;
      out[b] = encode_finite(static_cast<double>(v) * inv_scale, fmt);
    }
  }
}

void merge_counter(AccessCounter* into, const AccessCounter& local) {
  if (into == nullptr) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  into->reads += local.reads;
  into->writes += local.writes;
}

}  // namespace detail

void MxTensor::validate() const {
  if (rows == 0 || blocks_per_row == 0 || block_size == 0) {
    throw Error("MX tensor dimensions must be positive");
  }
  if (scales.size() != rows * blocks_per_row) throw Error("MX scale array has wrong size");
  if (values.size() != rows * blocks_per_row * block_size) {
    throw Error("MX value array has wrong size");
  }
  for (E8M0 s : scales) {
    if (s.code == 255) throw Error("MX tensor contains NaN scale");
  }
  const MiniFloatFormat& fmt = format();
  for (std::uint8_t v : values) {
    if (v >= fmt.code_count() || fmt.is_nan_code(v)) {
      throw Error("MX tensor contains invalid value code " + std::to_string(v));
    }
  }
}

BlockedView block(const RowMatrix& x, std::size_t block_size) {
  if (block_size == 0) throw Error("block size must be positive");
  if (x.cols() % block_size != 0) throw Error("hidden dimension not divisible by block size");
  return BlockedView{&x, x.rows(), x.cols() / block_size, block_size};
}

RowMatrix block_absmax(const BlockedView& x, AccessCounter* counter) {
  RowMatrix out(x.rows, x.blocks_per_row);
  for (std::size_t t = 0; t < x.rows; ++t) {
    detail::row_absmax(x.matrix->row(t), x.block_size, out.row(t));
  }
  if (counter != nullptr) counter->reads += x.rows * x.blocks_per_row * x.block_size;
  return out;
}

MxTensor mxcast(const RowMatrix& x, std::size_t block_size, const MiniFloatFormat& fmt,
                AccessCounter* counter) {
  const BlockedView view = block(x, block_size);
  MxTensor q;
  q.rows = view.rows;
  q.blocks_per_row = view.blocks_per_row;
  q.block_size = block_size;
  q.value_format = fmt.id;
  q.scales.resize(q.rows * q.blocks_per_row);
  q.values.resize(q.rows * q.cols());
  const std::size_t k_count = view.blocks_per_row;
  const std::size_t d = x.cols();
  parallel_for(q.rows, [&](std::size_t lo, std::size_t hi) {
    std::vector<float> absmax(k_count);
    AccessCounter local;
    for (std::size_t t = lo; t < hi; ++t) {
      detail::row_absmax(x.row(t), block_size, absmax);
      local.reads += d;
      detail::quantize_scaled_row(x.row(t), absmax, 1.0f, block_size, fmt,
                                  q.scales.data() + t * k_count, q.values.data() + t * d);
      local.reads += d;
      local.writes += d;
    }
    detail::merge_counter(counter, local);
  });
  return q;
}

MxTensor mxcast_transposed(const RowMatrix& x, std::size_t block_size,
                           const MiniFloatFormat& fmt) {
  return mxcast(x.transposed(), block_size, fmt);
}

RowMatrix dequant(const MxTensor& q) {
  const auto& table = decode_table(q.value_format);
  RowMatrix out(q.rows, q.cols());
  const std::size_t d = q.cols();
  parallel_for(q.rows, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t t = lo; t < hi; ++t) {
      float* row = out.row(t).data();
      for (std::size_t k = 0; k < q.blocks_per_row; ++k) {
        const double scale = q.scale(t, k).value();
        const std::uint8_t* codes = q.values.data() + t * d + k * q.block_size;
        for (std::size_t b = 0; b < q.block_size; ++b) {
          row[k * q.block_size + b] = static_cast<float>(table[codes[b]] * scale);
        }
      }
    }
  });
  return out;
}

}  // namespace mxkit
