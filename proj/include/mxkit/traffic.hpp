// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace mxkit {

/// Instrumentation hook for the normalization and cast kernels. Counts
/// element accesses to row-sized tensors (input, intermediate, value codes)
/// plus reads of the per-block statistics during the inverse-RMS reduction.
/// Scale-code writes are not counted.
struct AccessCounter {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
};

}  // namespace mxkit
