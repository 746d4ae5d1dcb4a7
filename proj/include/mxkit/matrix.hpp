// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mxkit {

/// Dense row-major matrix of 32-bit floats. This is the wide-precision type
/// for every unquantized tensor in the library.
class RowMatrix {
 public:
  RowMatrix() = default;
  RowMatrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
  RowMatrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  float& operator()(std::size_t t, std::size_t d) { return data_[t * cols_ + d]; }
  float operator()(std::size_t t, std::size_t d) const { return data_[t * cols_ + d]; }

  std::span<float> row(std::size_t t) { return {data_.data() + t * cols_, cols_}; }
  std::span<const float> row(std::size_t t) const { return {data_.data() + t * cols_, cols_}; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  RowMatrix transposed() const;
  bool all_finite() const;

  friend bool operator==(const RowMatrix&, const RowMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// out[t, o] = sum_k a[t, k] * b[o, k], accumulated in double sequentially
/// over k. Rows of the output are computed in parallel; the result does not
/// depend on the thread count.
RowMatrix matmul_nt(const RowMatrix& a, const RowMatrix& b);

/// Multiplies every row elementwise by `v` (length cols).
RowMatrix scale_columns(const RowMatrix& x, std::span<const float> v);

/// Multiplies row t by s[t].
RowMatrix scale_rows(const RowMatrix& x, std::span<const float> s);

}  // namespace mxkit
