// SPDX-License-Identifier: Apache-2.0
#include "mxkit/matrix.hpp"

#include <cmath>
#include <string>

#include "mxkit/error.hpp"
#include "mxkit/parallel.hpp"

namespace mxkit {

RowMatrix::RowMatrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

RowMatrix::RowMatrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error("matrix data has " + std::to_string(data_.size()) + " elements, expected " +
                std::to_string(rows * cols));
  }
}

RowMatrix RowMatrix::transposed() const {
  RowMatrix out(cols_, rows_);
  for (std::size_t t = 0; t < rows_; ++t) {
    for (std::size_t d = 0; d < cols_; ++d) out(d, t) = (*this)(t, d);
  }
  return out;
}

bool RowMatrix::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

RowMatrix matmul_nt(const RowMatrix& a, const RowMatrix& b) {
  if (a.cols() != b.cols()) {
    throw Error("matmul contraction mismatch: " + std::to_string(a.cols()) + " vs " +
                std::to_string(b.cols()));
  }
  RowMatrix out(a.rows(), b.rows());
  const std::size_t k = a.cols();
  parallel_for(a.rows(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t t = lo; t < hi; ++t) {
      const float* ar = a.row(t).data();
      for (std::size_t o = 0; o < b.rows(); ++o) {
        const float* br = b.row(o).data();
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) acc += static_cast<double>(ar[i]) * br[i];
        out(t, o) = static_cast<float>(acc);
      }
    }
  });
  return out;
}

RowMatrix scale_columns(const RowMatrix& x, std::span<const float> v) {
  if (v.size() != x.cols()) throw Error("column scale length mismatch");
  RowMatrix out = x;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto r = out.row(t);
    for (std::size_t d = 0; d < r.size(); ++d) r[d] *= v[d];
  }
  return out;
}

RowMatrix scale_rows(const RowMatrix& x, std::span<const float> s) {
  if (s.size() != x.rows()) throw Error("row scale length mismatch");
  RowMatrix out = x;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    for (float& v : out.row(t)) v *= s[t];
  }
  return out;
}

}  // namespace mxkit
