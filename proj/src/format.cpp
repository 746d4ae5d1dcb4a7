// SPDX-License-Identifier: Apache-2.0
#include "mxkit/format.hpp"

#include <string>

namespace mxkit {

const MiniFloatFormat& format_of(FormatId id) {
  switch (id) {
    case FormatId::kE4M3:
      return kE4M3;
    case FormatId::kE5M2:
      return kE5M2;
    case FormatId::kE2M1:
      return kE2M1;
  }
  throw Error("unknown format id");
}

const MiniFloatFormat& parse_format(std::string_view name) {
  for (const MiniFloatFormat* f : {&kE4M3, &kE5M2, &kE2M1}) {
    if (f->name == name) return *f;
  }
  throw Error("unknown value format '" + std::string(name) + "'");
}

double decode(unsigned code, const MiniFloatFormat& fmt) {
  if (code >= fmt.code_count()) {
    throw Error("code " + std::to_string(code) + " out of range for " + std::string(fmt.name));
  }
  if (fmt.is_nan_code(code)) {
    throw Error("code " + std::to_string(code) + " is not finite in " + std::string(fmt.name));
  }
  const int m = fmt.mantissa_bits;
  const unsigned exp_field = (code >> m) & ((1u << fmt.exponent_bits) - 1);
  const unsigned man_field = code & ((1u << m) - 1);
  const bool negative = (code >> (fmt.exponent_bits + m)) & 1u;
  double magnitude;
  if (exp_field == 0) {
    magnitude = std::ldexp(static_cast<double>(man_field), fmt.min_normal_exponent() - m);
  } else {
    const double significand = static_cast<double>((1u << m) | man_field);
    magnitude = std::ldexp(significand, static_cast<int>(exp_field) - fmt.exponent_bias - m);
  }
  return negative ? -magnitude : magnitude;
}

E8M0 E8M0::from_exponent(int e) {
  if (e < kMinExponent || e > kMaxExponent) {
    throw Error("exponent " + std::to_string(e) + " outside the E8M0 range");
  }
  return E8M0{static_cast<std::uint8_t>(e + 127)};
}

double E8M0::value() const {
  if (code == 255) throw Error("E8M0 code 255 is NaN");
  return std::ldexp(1.0, exponent());
}

int ceil_log2(double x) {
  int e;
  const double f = std::frexp(x, &e);  // x = f * 2^e, f in [0.5, 1)
  return f == 0.5 ? e - 1 : e;
}

int floor_log2(double x) {
  int e;
  std::frexp(x, &e);
  return e - 1;
}

E8M0 e8m0_rceil(double absmax, const MiniFloatFormat& fmt, ScaleRounding mode) {
  if (!std::isfinite(absmax)) throw Error("non-finite block absmax");
  if (absmax < 0.0) throw Error("negative block absmax");
  switch (mode) {
    case ScaleRounding::kRceil:
      return detail::rceil_unchecked(absmax, fmt);
  }
  throw Error("unsupported scale rounding mode");
}

}  // namespace mxkit
