// SPDX-License-Identifier: Apache-2.0
// Row-level kernels shared by the cast and normalization pipelines.
#pragma once

#include <cstddef>
#include <span>

#include "mxkit/traffic.hpp"

namespace mxkit::detail {

/// out[k] = max_b |row[k*B + b]|; throws "non-finite input to cast".
void row_absmax(std::span<const float> row, std::size_t block_size, std::span<float> out);

/// Thread-safe accumulation of a worker-local counter into `into` (may be null).
void merge_counter(AccessCounter* into, const AccessCounter& local);

}  // namespace mxkit::detail
