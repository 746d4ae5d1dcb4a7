// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats. Binary files start with one JSON header line followed by
// little-endian payload bytes:
//
//   tensor:  {"shape":[T,D],"dtype":"f32","order":"row-major","version":1}
//            then T*D float32 values
//   mx:      {"t":T,"k":K,"b":B,"vfmt":"e4m3","version":1}
//            then T*K E8M0 scale bytes, then value codes (two per byte for
//            e2m1, element 2i in the low nibble)
//   layer:   {"out":O,"in":D,"spec":{...},"grad_vfmt":"e4m3","norm":"mxnorm","version":1}
//            then O*D weight floats, then D gain floats
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mxkit/linear.hpp"
#include "mxkit/matrix.hpp"
#include "mxkit/mx_tensor.hpp"
#include "mxkit/norms.hpp"
#include "mxkit/postround.hpp"

namespace mxkit {

void write_tensor(std::ostream& os, const RowMatrix& m);
RowMatrix read_tensor(std::istream& is);
void save_tensor(const std::filesystem::path& path, const RowMatrix& m);
RowMatrix load_tensor(const std::filesystem::path& path);

void write_mx(std::ostream& os, const MxTensor& q);
MxTensor read_mx(std::istream& is);
void save_mx(const std::filesystem::path& path, const MxTensor& q);
MxTensor load_mx(const std::filesystem::path& path);

nlohmann::json norm_spec_to_json(const NormSpec& spec);
NormSpec norm_spec_from_json(const nlohmann::json& j);

nlohmann::json postround_table_to_json(const PostRoundTable& table);
PostRoundTable postround_table_from_json(const nlohmann::json& j);

/// Weights, gains and configuration only; caches and tables are not stored.
void write_linear(std::ostream& os, const LinearState& state);
LinearState read_linear(std::istream& is);

/// Correction constants keyed by (p, block size).
using CorrectionTable = std::map<std::pair<double, std::size_t>, double>;
nlohmann::json correction_table_to_json(const CorrectionTable& table);
CorrectionTable correction_table_from_json(const nlohmann::json& j);
/// Throws if (p, block_size) is missing.
double lookup_correction(const CorrectionTable& table, double p, std::size_t block_size);

/// CSV with header "step,loss" (a single "loss" column is also accepted).
void write_loss_csv(std::ostream& os, std::span<const double> losses);
std::vector<double> read_loss_csv(std::istream& is);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace mxkit
