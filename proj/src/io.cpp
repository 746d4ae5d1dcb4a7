// SPDX-License-Identifier: Apache-2.0
#include "mxkit/io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace mxkit {
namespace {

using nlohmann::json;

constexpr std::size_t kMaxHeaderBytes = 1 << 16;

json read_header(std::istream& is) {
  std::string line;
  char ch;
  while (is.get(ch)) {
    if (ch == '\n') break;
    line.push_back(ch);
    if (line.size() > kMaxHeaderBytes) throw Error("file header too long");
  }
  if (line.empty()) throw Error("missing file header");
  try {
    json j = json::parse(line);
    if (!j.is_object()) throw Error("file header is not a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed file header: ") + e.what());
  }
}

// Fails before any allocation when the stream is seekable and too short.
void require_payload(std::istream& is, std::uint64_t bytes) {
  const auto here = is.tellg();
  if (here < 0) return;
  is.seekg(0, std::ios::end);
  const auto end = is.tellg();
  is.seekg(here);
  if (end < 0) return;
  const auto available = static_cast<std::uint64_t>(end - here);
  if (available < bytes) {
    throw Error("truncated file: expected " + std::to_string(bytes) + " payload bytes, found " +
                std::to_string(available));
  }
  if (available > bytes) throw Error("trailing bytes after payload");
}

void read_exact(std::istream& is, void* dst, std::size_t n) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw Error("truncated file payload");
}

void write_f32(std::ostream& os, std::span<const float> values) {
  std::vector<char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) buf[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xFFu);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void read_f32(std::istream& is, std::span<float> out) {
  std::vector<unsigned char> buf(out.size() * 4);
  read_exact(is, buf.data(), buf.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(buf[i * 4 + b]) << (8 * b);
    out[i] = std::bit_cast<float>(u);
  }
}

std::size_t positive_size(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_unsigned() || j[key].get<std::uint64_t>() == 0) {
    throw Error(std::string("header field '") + key + "' must be a positive integer");
  }
  return j[key].get<std::size_t>();
}

void check_version(const json& j) {
  if (!j.contains("version") || j["version"] != 1) throw Error("unsupported file version");
}

std::size_t packed_value_bytes(std::size_t count, const MiniFloatFormat& fmt) {
  return fmt.id == FormatId::kE2M1 ? (count + 1) / 2 : count;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path.string() + "'");
  return is;
}

std::string_view norm_kind_name(NormKind k) {
  switch (k) {
    case NormKind::kMxNorm:
      return "mxnorm";
    case NormKind::kPostRound:
      return "postround";
    case NormKind::kRmsNormReference:
      return "rmsnorm";
  }
  return "mxnorm";
}

NormKind parse_norm_kind(const std::string& s) {
  for (NormKind k : {NormKind::kMxNorm, NormKind::kPostRound, NormKind::kRmsNormReference}) {
    if (norm_kind_name(k) == s) return k;
  }
  throw Error("unknown norm kind '" + s + "'");
}

}  // namespace

void write_tensor(std::ostream& os, const RowMatrix& m) {
  json header = {{"shape", {m.rows(), m.cols()}},
                 {"dtype", "f32"},
                 {"order", "row-major"},
                 {"version", 1}};
  os << header.dump() << '\n';
  write_f32(os, m.data());
  if (!os) throw Error("failed writing tensor");
}

RowMatrix read_tensor(std::istream& is) {
  const json h = read_header(is);
  check_version(h);
  if (h.value("dtype", "") != "f32") throw Error("tensor dtype must be f32");
  if (h.value("order", "") != "row-major") throw Error("tensor order must be row-major");
  if (!h.contains("shape") || !h["shape"].is_array() || h["shape"].size() != 2) {
    throw Error("tensor shape must be [T, D]");
  }
  for (const auto& v : h["shape"]) {
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0) {
      throw Error("tensor shape entries must be positive integers");
    }
  }
  const auto rows = h["shape"][0].get<std::size_t>();
  const auto cols = h["shape"][1].get<std::size_t>();
  require_payload(is, static_cast<std::uint64_t>(rows) * cols * 4);
  RowMatrix m(rows, cols);
  read_f32(is, m.data());
  return m;
}

void save_tensor(const std::filesystem::path& path, const RowMatrix& m) {
  auto os = open_out(path);
  write_tensor(os, m);
}

RowMatrix load_tensor(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_tensor(is);
}

void write_mx(std::ostream& os, const MxTensor& q) {
  q.validate();
  const MiniFloatFormat& fmt = q.format();
  json header = {{"t", q.rows},
                 {"k", q.blocks_per_row},
                 {"b", q.block_size},
                 {"vfmt", std::string(fmt.name)},
                 {"version", 1}};
  os << header.dump() << '\n';
  std::vector<char> scales(q.scales.size());
  for (std::size_t i = 0; i < scales.size(); ++i) scales[i] = static_cast<char>(q.scales[i].code);
  os.write(scales.data(), static_cast<std::streamsize>(scales.size()));
  std::vector<char> values(packed_value_bytes(q.values.size(), fmt), 0);
  if (fmt.id == FormatId::kE2M1) {
    for (std::size_t i = 0; i < q.values.size(); ++i) {
      const unsigned nibble = q.values[i] & 0x0Fu;
      values[i / 2] = static_cast<char>(static_cast<unsigned char>(values[i / 2]) |
                                        (i % 2 == 0 ? nibble : nibble << 4));
    }
  } else {
    for (std::size_t i = 0; i < q.values.size(); ++i) values[i] = static_cast<char>(q.values[i]);
  }
  os.write(values.data(), static_cast<std::streamsize>(values.size()));
  if (!os) throw Error("failed writing MX tensor");
}

MxTensor read_mx(std::istream& is) {
  const json h = read_header(is);
  check_version(h);
  MxTensor q;
  q.rows = positive_size(h, "t");
  q.blocks_per_row = positive_size(h, "k");
  q.block_size = positive_size(h, "b");
  if (!h.contains("vfmt") || !h["vfmt"].is_string()) throw Error("missing value format");
  const MiniFloatFormat& fmt = parse_format(h["vfmt"].get<std::string>());
  q.value_format = fmt.id;
  const std::size_t n_scales = q.rows * q.blocks_per_row;
  const std::size_t n_values = n_scales * q.block_size;
  const std::size_t value_bytes = packed_value_bytes(n_values, fmt);
  require_payload(is, static_cast<std::uint64_t>(n_scales) + value_bytes);
  std::vector<unsigned char> scales(n_scales);
  read_exact(is, scales.data(), scales.size());
  q.scales.resize(n_scales);
  for (std::size_t i = 0; i < n_scales; ++i) q.scales[i] = E8M0{scales[i]};
  std::vector<unsigned char> values(value_bytes);
  read_exact(is, values.data(), values.size());
  q.values.resize(n_values);
  if (fmt.id == FormatId::kE2M1) {
    for (std::size_t i = 0; i < n_values; ++i) {
      q.values[i] = static_cast<std::uint8_t>(i % 2 == 0 ? values[i / 2] & 0x0Fu
                                                         : values[i / 2] >> 4);
    }
  } else {
    for (std::size_t i = 0; i < n_values; ++i) q.values[i] = values[i];
  }
  q.validate();
  return q;
}

void save_mx(const std::filesystem::path& path, const MxTensor& q) {
  auto os = open_out(path);
  write_mx(os, q);
}

MxTensor load_mx(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_mx(is);
}

json norm_spec_to_json(const NormSpec& spec) {
  return {{"p", spec.p},
          {"block_size", spec.block_size},
          {"c", spec.c},
          {"eps", spec.eps},
          {"vfmt", std::string(spec.format().name)}};
}

NormSpec norm_spec_from_json(const json& j) {
  try {
    NormSpec spec;
    spec.p = j.at("p").get<double>();
    spec.block_size = j.at("block_size").get<std::size_t>();
    spec.c = j.at("c").get<double>();
    spec.eps = j.value("eps", kDefaultEpsilon);
    spec.value_format = parse_format(j.value("vfmt", std::string("e4m3"))).id;
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw Error(std::string("invalid norm spec: ") + e.what());
  }
}

json postround_table_to_json(const PostRoundTable& table) {
  return {{"block_size", table.block_size},
          {"A", table.resolution},
          {"J", table.truncation},
          {"grid", table.grid}};
}

PostRoundTable postround_table_from_json(const json& j) {
  try {
    PostRoundTable t;
    t.block_size = j.at("block_size").get<std::size_t>();
    t.resolution = j.at("A").get<int>();
    t.truncation = j.value("J", kDefaultTruncation);
    t.grid = j.at("grid").get<std::vector<double>>();
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw Error(std::string("invalid post-round table: ") + e.what());
  }
}

void write_linear(std::ostream& os, const LinearState& state) {
  state.validate();
  json header = {{"out", state.out_features()},
                 {"in", state.in_features()},
                 {"spec", norm_spec_to_json(state.spec)},
                 {"grad_vfmt", std::string(format_of(state.grad_format).name)},
                 {"norm", std::string(norm_kind_name(state.norm))},
                 {"version", 1}};
  os << header.dump() << '\n';
  write_f32(os, state.weight.data());
  write_f32(os, state.gamma);
  if (!os) throw Error("failed writing layer checkpoint");
}

LinearState read_linear(std::istream& is) {
  const json h = read_header(is);
  check_version(h);
  const std::size_t out = positive_size(h, "out");
  const std::size_t in = positive_size(h, "in");
  LinearState state;
  state.spec = norm_spec_from_json(h.at("spec"));
  state.grad_format = parse_format(h.value("grad_vfmt", std::string("e4m3"))).id;
  state.norm = parse_norm_kind(h.value("norm", std::string("mxnorm")));
  require_payload(is, (static_cast<std::uint64_t>(out) * in + in) * 4);
  state.weight = RowMatrix(out, in);
  read_f32(is, state.weight.data());
  state.gamma.resize(in);
  read_f32(is, state.gamma);
  if (state.norm != NormKind::kPostRound) state.validate();
  return state;
}

json correction_table_to_json(const CorrectionTable& table) {
  json entries = json::array();
  for (const auto& [key, c] : table) {
    entries.push_back({{"p", key.first}, {"block_size", key.second}, {"c", c}});
  }
  return {{"constants", entries}};
}

CorrectionTable correction_table_from_json(const json& j) {
  try {
    CorrectionTable table;
    for (const auto& e : j.at("constants")) {
      table[{e.at("p").get<double>(), e.at("block_size").get<std::size_t>()}] =
          e.at("c").get<double>();
    }
    return table;
  } catch (const json::exception& e) {
    throw Error(std::string("invalid correction table: ") + e.what());
  }
}

double lookup_correction(const CorrectionTable& table, double p, std::size_t block_size) {
  const auto it = table.find({p, block_size});
  if (it == table.end()) {
    std::ostringstream os;
    os << "no correction constant for p=" << p << ", block size " << block_size;
    throw Error(os.str());
  }
  return it->second;
}

void write_loss_csv(std::ostream& os, std::span<const double> losses) {
  os << "step,loss\n";
  os.precision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) os << i << ',' << losses[i] << '\n';
}

std::vector<double> read_loss_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("empty loss CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  int loss_column;
  if (line == "step,loss") {
    loss_column = 1;
  } else if (line == "loss") {
    loss_column = 0;
  } else {
    throw Error("loss CSV header must be 'step,loss' or 'loss'");
  }
  std::vector<double> losses;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string field = line;
    if (loss_column == 1) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) {
        throw Error("loss CSV line " + std::to_string(lineno) + " has no loss column");
      }
      field = line.substr(comma + 1);
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(field, &used);
      if (used != field.size()) throw std::invalid_argument("trailing characters");
      losses.push_back(v);
    } catch (const std::exception&) {
      throw Error("loss CSV line " + std::to_string(lineno) + " is not a number");
    }
  }
  return losses;
}

json read_json_file(const std::filesystem::path& path) {
  auto is = open_in(path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw Error("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

}  // namespace mxkit
