// SPDX-License-Identifier: Apache-2.0
//
// Minifloat value formats (E4M3, E5M2, E2M1) and the E8M0 power-of-two scale
// format used by MX block quantization. All casts are bit-exact emulations
// evaluated in double precision.
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string_view>

#include "mxkit/error.hpp"

namespace mxkit {

enum class FormatId : std::uint8_t { kE4M3, kE5M2, kE2M1 };

enum class NanConvention : std::uint8_t {
  kAllOnesMantissaIsNan,  // E4M3: S.1111.111 is NaN, no infinities
  kReservedInfAndNan,     // E5M2: IEEE-style, top exponent reserved
  kNone,                  // E2M1: every code is finite
};

/// Only RCEIL is implemented; the field exists so other power-of-two
/// rounding rules can be added without changing signatures.
enum class ScaleRounding : std::uint8_t { kRceil };

struct MiniFloatFormat {
  FormatId id;
  std::string_view name;
  int exponent_bits;
  int mantissa_bits;
  int exponent_bias;
  double max_finite;
  double largest_pow2;
  int largest_pow2_log2;
  std::uint8_t max_code;  // positive code of max_finite
  NanConvention nan_convention;
  bool saturating_cast = true;

  constexpr int width() const { return 1 + exponent_bits + mantissa_bits; }
  constexpr unsigned code_count() const { return 1u << width(); }
  constexpr int min_normal_exponent() const { return 1 - exponent_bias; }

  constexpr bool is_nan_code(unsigned code) const {
    const unsigned exp_mask = (1u << exponent_bits) - 1;
    const unsigned man_mask = (1u << mantissa_bits) - 1;
    const unsigned exp_field = (code >> mantissa_bits) & exp_mask;
    const unsigned man_field = code & man_mask;
    switch (nan_convention) {
      case NanConvention::kAllOnesMantissaIsNan:
        return exp_field == exp_mask && man_field == man_mask;
      case NanConvention::kReservedInfAndNan:
        return exp_field == exp_mask;
      case NanConvention::kNone:
        return false;
    }
    return false;
  }

  friend constexpr bool operator==(const MiniFloatFormat& a, const MiniFloatFormat& b) {
    return a.id == b.id;
  }
};

inline constexpr MiniFloatFormat kE4M3{FormatId::kE4M3, "e4m3", 4, 3, 7, 448.0, 256.0, 8, 0x7E,
                                       NanConvention::kAllOnesMantissaIsNan};
inline constexpr MiniFloatFormat kE5M2{FormatId::kE5M2, "e5m2", 5, 2, 15, 57344.0, 32768.0, 15, 0x7B,
                                       NanConvention::kReservedInfAndNan};
inline constexpr MiniFloatFormat kE2M1{FormatId::kE2M1, "e2m1", 2, 1, 1, 6.0, 4.0, 2, 0x07,
                                       NanConvention::kNone};

const MiniFloatFormat& format_of(FormatId id);

/// Accepts "e4m3", "e5m2", "e2m1". Throws on anything else.
const MiniFloatFormat& parse_format(std::string_view name);

namespace detail {

// Caller guarantees |value| is finite. Round-to-nearest-even, saturating.
inline std::uint8_t encode_finite(double value, const MiniFloatFormat& fmt) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
  const unsigned sign = (bits >> 63) ? (1u << (fmt.exponent_bits + fmt.mantissa_bits)) : 0u;
  std::uint64_t abits = bits & ~(std::uint64_t{1} << 63);
  const double a = std::bit_cast<double>(abits);
  if (a >= fmt.max_finite) return static_cast<std::uint8_t>(sign | fmt.max_code);

  const int m = fmt.mantissa_bits;
  const int exp = static_cast<int>(abits >> 52) - 1023;
  if (exp < fmt.min_normal_exponent()) {
    // Subnormal range of the target: count units of 2^(emin - m). A result
    // of 2^m lands exactly on the smallest normal code.
    const double units = std::ldexp(a, m - fmt.min_normal_exponent());
    const double rounded = (units + 0x1p52) - 0x1p52;
    return static_cast<std::uint8_t>(sign | static_cast<unsigned>(rounded));
  }
  const int shift = 52 - m;
  const std::uint64_t lsb = (abits >> shift) & 1u;
  abits += (std::uint64_t{1} << (shift - 1)) - 1 + lsb;
  const std::uint64_t rebias = static_cast<std::uint64_t>(1023 - fmt.exponent_bias) << m;
  return static_cast<std::uint8_t>(sign | static_cast<unsigned>((abits >> shift) - rebias));
}

}  // namespace detail

/// Nearest representable code under round-to-nearest-even; magnitudes above
/// max_finite saturate. Throws "non-finite input to cast" for inf/NaN.
inline std::uint8_t encode(double value, const MiniFloatFormat& fmt) {
  if (!std::isfinite(value)) throw Error("non-finite input to cast");
  return detail::encode_finite(value, fmt);
}

/// Exact value of a code. Throws for out-of-range codes and NaN/Inf codes.
double decode(unsigned code, const MiniFloatFormat& fmt);

/// Unsigned exponent-only scale: value 2^(code - 127). Code 255 is NaN.
struct E8M0 {
  std::uint8_t code = 127;

  static constexpr int kMinExponent = -127;
  static constexpr int kMaxExponent = 127;

  static E8M0 from_exponent(int e);
  constexpr int exponent() const { return static_cast<int>(code) - 127; }
  double value() const;

  friend constexpr bool operator==(E8M0, E8M0) = default;
};

/// ceil(log2(x)) / floor(log2(x)) for finite x > 0, read off the bit pattern
/// so the result is exact at powers of two.
int ceil_log2(double x);
int floor_log2(double x);

/// Block scale via RCEIL: 2^ceil(log2(absmax / largest_pow2)) clamped to the
/// E8M0 range. absmax == 0 yields 2^-127.
E8M0 e8m0_rceil(double absmax, const MiniFloatFormat& fmt,
                ScaleRounding mode = ScaleRounding::kRceil);

namespace detail {

// Hot-path variant without argument validation; absmax must be finite, >= 0.
inline E8M0 rceil_unchecked(double absmax, const MiniFloatFormat& fmt) {
  if (absmax == 0.0) return E8M0{0};
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(absmax);
  const int biased = static_cast<int>(bits >> 52);
  int e;
  if (biased == 0) {
    e = ceil_log2(absmax);
  } else {
    e = biased - 1023 + ((bits & 0xFFFFFFFFFFFFFull) != 0 ? 1 : 0);
  }
  e -= fmt.largest_pow2_log2;
  if (e < E8M0::kMinExponent) e = E8M0::kMinExponent;
  if (e > E8M0::kMaxExponent) e = E8M0::kMaxExponent;
  return E8M0{static_cast<std::uint8_t>(e + 127)};
}

}  // namespace detail

}  // namespace mxkit
