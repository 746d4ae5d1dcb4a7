// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace mxkit::cli {

/// Entry point shared by the executable and the tests. Returns the process
/// exit code: 0 on success, 1 on data or validation errors, 2 on usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mxkit::cli
