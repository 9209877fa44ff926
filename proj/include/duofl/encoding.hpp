#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "duofl/bigint.hpp"

namespace duofl {

using Residue = std::uint64_t;

// Residue ring Z_q with q <= 2^64. q = 2^64 is encoded as raw == 0 so the
// default mask modulus (kappa2 = 64) is just native wraparound.
class Modulus {
 public:
  constexpr Modulus() : q_(0) {}
  constexpr explicit Modulus(std::uint64_t q) : q_(q) {}

  static constexpr Modulus pow2(unsigned bits) {
    if (bits == 0 || bits > 64)
      throw std::invalid_argument("modulus: bits must be in [1, 64]");
    return Modulus(bits == 64 ? 0 : (std::uint64_t{1} << bits));
  }

  bool is_native() const { return q_ == 0; }
  bool is_pow2() const { return q_ == 0 || (q_ & (q_ - 1)) == 0; }
  std::uint64_t raw() const { return q_; }

  Bigint value_big() const {
    return is_native() ? Bigint::pow2(64) : Bigint::from_u64(q_);
  }

  double value_double() const { return is_native() ? 0x1.0p64 : static_cast<double>(q_); }

  Residue reduce_u64(std::uint64_t v) const { return is_native() ? v : v % q_; }

  Residue reduce_u128(unsigned __int128 v) const {
    return is_native() ? static_cast<std::uint64_t>(v)
                       : static_cast<std::uint64_t>(v % q_);
  }

  Residue reduce_big(const Bigint& v) const {
    if (is_native()) return v.low_u64();
    return v.mod(Bigint::from_u64(q_)).low_u64();
  }

  // Representative of a possibly negative value.
  Residue reduce_i128(__int128 v) const {
    if (is_native()) return static_cast<std::uint64_t>(v);
    __int128 q = static_cast<__int128>(q_);
    __int128 r = v % q;
    if (r < 0) r += q;
    return static_cast<std::uint64_t>(r);
  }

  Residue add(Residue a, Residue b) const {
    if (is_native()) return a + b;
    return reduce_u128(static_cast<unsigned __int128>(a) + b);
  }

  Residue sub(Residue a, Residue b) const {
    if (is_native()) return a - b;
    return a >= b ? a - b : a + (q_ - b);
  }

  Residue mul(Residue a, Residue b) const {
    return reduce_u128(static_cast<unsigned __int128>(a) * b);
  }

  bool contains(Residue v) const { return is_native() || v < q_; }

  // Unique representative in [-q/2, q/2).
  std::int64_t center_lift(Residue v) const {
    if (is_native()) return static_cast<std::int64_t>(v);
    if (!contains(v)) throw std::invalid_argument("modulus: residue out of range");
    std::uint64_t half = q_ - q_ / 2;  // ceil(q/2); v >= half lifts negative
    if (v < half) return static_cast<std::int64_t>(v);
    return static_cast<std::int64_t>(v) - static_cast<std::int64_t>(q_);
  }

  friend bool operator==(const Modulus& a, const Modulus& b) { return a.q_ == b.q_; }

 private:
  std::uint64_t q_;
};

inline std::int64_t center_lift(Residue v, const Modulus& q) { return q.center_lift(v); }

struct FixedPointParams {
  unsigned kappa2 = 64;        // bit length of q; q = 2^kappa2
  unsigned frac_bits = 16;     // f, fractional bits for gradient values
  unsigned weight_frac_bits = 20;  // fw, fractional bits for aggregation weights
  double clip = 8.0;           // gradient clipping bound

  Modulus modulus() const {
    if (kappa2 == 0 || kappa2 > 64 || kappa2 % 8 != 0)
      throw std::invalid_argument(
          "fixed-point: kappa2 for runs must be a multiple of 8 in [8, 64]");
    return Modulus::pow2(kappa2);
  }

  unsigned residue_bytes() const { return kappa2 / 8; }

  double scale() const { return std::ldexp(1.0, static_cast<int>(frac_bits)); }
  double weight_scale() const { return std::ldexp(1.0, static_cast<int>(weight_frac_bits)); }
};

struct QuantizedVector {
  std::vector<Residue> residues;
  FixedPointParams params;

  std::size_t dim() const { return residues.size(); }
};

// residue = round(x * 2^f) mod q, clamping |x| to clip first. Clamps are
// silent; the caller counts them through encode_vector's saturation output.
inline Residue encode(double x, const FixedPointParams& params, const Modulus& q,
                      bool* saturated = nullptr) {
  double clamped = x;
  if (clamped > params.clip) clamped = params.clip;
  if (clamped < -params.clip) clamped = -params.clip;
  if (saturated) *saturated = (clamped != x);
  long long v = std::llround(clamped * params.scale());
  return q.reduce_i128(static_cast<__int128>(v));
}

inline double decode(Residue v, const FixedPointParams& params, const Modulus& q) {
  if (!q.contains(v)) throw std::invalid_argument("decode: residue out of range");
  return static_cast<double>(q.center_lift(v)) / params.scale();
}

inline QuantizedVector encode_vector(std::span<const double> values,
                                     const FixedPointParams& params,
                                     std::uint64_t* saturation_count = nullptr) {
  Modulus q = params.modulus();
  QuantizedVector out;
  out.params = params;
  out.residues.reserve(values.size());
  for (double x : values) {
    bool sat = false;
    out.residues.push_back(encode(x, params, q, &sat));
    if (sat && saturation_count) ++*saturation_count;
  }
  return out;
}

inline std::vector<double> decode_vector(const QuantizedVector& v) {
  Modulus q = v.params.modulus();
  std::vector<double> out;
  out.reserve(v.residues.size());
  for (Residue r : v.residues) out.push_back(decode(r, v.params, q));
  return out;
}

inline Residue dot_mod(std::span<const Residue> a, std::span<const Residue> b,
                       const Modulus& q) {
  if (a.size() != b.size()) throw std::invalid_argument("dot_mod: dimension mismatch");
  if (q.is_native()) {
    std::uint64_t acc = 0;
    for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
    return acc;
  }
  Residue acc = 0;
  for (std::size_t j = 0; j < a.size(); ++j) acc = q.add(acc, q.mul(a[j], b[j]));
  return acc;
}

inline Residue sum_squares_mod(std::span<const Residue> a, const Modulus& q) {
  return dot_mod(a, a, q);
}

// Exactness validation for SecNorm / SecCos / SecAgg arithmetic. All four
// inequalities must hold for modular results to lift to the true integers.
struct BoundCheck {
  std::string name;
  long margin_bits;  // bit_length(limit) - bit_length(value); pass needs value < limit
  bool pass;
};

struct ValidationReport {
  bool pass = false;
  std::string first_violation;  // empty when pass
  std::vector<BoundCheck> bounds;

  std::string summary() const {
    std::string s = pass ? "PASS" : ("FAIL on bound " + first_violation);
    for (const auto& b : bounds) {
      s += "; " + b.name + (b.pass ? " ok" : " VIOLATED") + " margin " +
           std::to_string(b.margin_bits) + " bits";
    }
    return s;
  }
};

namespace detail {

// Integer bound on |round(clip * 2^f)|.
inline Bigint coeff_bound(const FixedPointParams& p) {
  double b = std::ceil(p.clip * p.scale());
  if (!(b >= 1.0) || b > 0x1.0p62)
    throw std::invalid_argument("fixed-point: clip * 2^f out of sane range");
  return Bigint::from_u64(static_cast<std::uint64_t>(b));
}

}  // namespace detail

inline ValidationReport validate_parameters(std::uint64_t d, std::uint64_t k,
                                            std::uint64_t n,
                                            const FixedPointParams& params,
                                            unsigned n_bits) {
  if (d == 0 || k == 0 || n == 0 || n_bits == 0)
    throw std::invalid_argument("validate_parameters: arguments must be positive");
  Bigint q_half = Bigint::pow2(params.kappa2 - 1);
  Bigint q = Bigint::pow2(params.kappa2);
  Bigint B = detail::coeff_bound(params);
  Bigint dB = Bigint::from_u64(d) * B;

  ValidationReport report;
  auto check = [&](const std::string& name, const Bigint& value, const Bigint& limit) {
    bool ok = value < limit;
    long margin = static_cast<long>(limit.bit_length()) -
                  static_cast<long>(value.bit_length());
    report.bounds.push_back({name, margin, ok});
    if (!ok && report.first_violation.empty()) report.first_violation = name;
  };

  check("(a) squared-norm", Bigint::from_u64(k) * dB * dB, q_half);
  check("(b) inner-product", Bigint::from_u64(d) * B * B, q_half);
  check("(c) aggregation",
        Bigint::from_u64(n) * Bigint::pow2(params.weight_frac_bits) * B, q_half);
  check("(d) paillier-lift", Bigint::from_u64(k) * q * q, Bigint::pow2(n_bits));

  report.pass = report.first_violation.empty();
  return report;
}

// The uncompressed protocol has no projection: every "compressed"
// coordinate is a single signed term, and the Paillier sum runs over d
// products, so bounds (a) and (d) take their k = d single-term forms.
inline ValidationReport validate_parameters_uncompressed(std::uint64_t d,
                                                         std::uint64_t n,
                                                         const FixedPointParams& params,
                                                         unsigned n_bits) {
  if (d == 0 || n == 0 || n_bits == 0)
    throw std::invalid_argument("validate_parameters: arguments must be positive");
  Bigint q_half = Bigint::pow2(params.kappa2 - 1);
  Bigint q = Bigint::pow2(params.kappa2);
  Bigint B = detail::coeff_bound(params);

  ValidationReport report;
  auto check = [&](const std::string& name, const Bigint& value, const Bigint& limit) {
    bool ok = value < limit;
    long margin = static_cast<long>(limit.bit_length()) -
                  static_cast<long>(value.bit_length());
    report.bounds.push_back({name, margin, ok});
    if (!ok && report.first_violation.empty()) report.first_violation = name;
  };
  check("(a) squared-norm", Bigint::from_u64(d) * B * B, q_half);
  check("(b) inner-product", Bigint::from_u64(d) * B * B, q_half);
  check("(c) aggregation",
        Bigint::from_u64(n) * Bigint::pow2(params.weight_frac_bits) * B, q_half);
  check("(d) paillier-lift", Bigint::from_u64(d) * q * q, Bigint::pow2(n_bits));
  report.pass = report.first_violation.empty();
  return report;
}

// Smallest wire-aligned kappa2 passing all four bounds, if any.
inline std::optional<unsigned> suggest_min_kappa2(std::uint64_t d, std::uint64_t k,
                                                  std::uint64_t n,
                                                  const FixedPointParams& base,
                                                  unsigned n_bits) {
  for (unsigned kappa2 = 8; kappa2 <= 128; kappa2 += 8) {
    FixedPointParams p = base;
    p.kappa2 = kappa2;
    if (validate_parameters(d, k, n, p, n_bits).pass) return kappa2;
  }
  return std::nullopt;
}

// Wire form: 4-byte big-endian dim, then dim residues of kappa2/8
// big-endian bytes each.
inline void append_residue(std::vector<std::uint8_t>& out, Residue v, unsigned nbytes) {
  for (unsigned i = 0; i < nbytes; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * (nbytes - 1 - i))));
}

inline Residue read_residue(std::span<const std::uint8_t> in, std::size_t& offset,
                            unsigned nbytes) {
  if (offset + nbytes > in.size())
    throw std::runtime_error("quantized vector: truncated residue");
  Residue v = 0;
  for (unsigned i = 0; i < nbytes; ++i) v = (v << 8) | in[offset + i];
  offset += nbytes;
  return v;
}

inline void append_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t read_u32_be(std::span<const std::uint8_t> in, std::size_t& offset) {
  if (offset + 4 > in.size()) throw std::runtime_error("wire: truncated u32");
  std::uint32_t v = static_cast<std::uint32_t>(in[offset]) << 24 |
                    static_cast<std::uint32_t>(in[offset + 1]) << 16 |
                    static_cast<std::uint32_t>(in[offset + 2]) << 8 |
                    static_cast<std::uint32_t>(in[offset + 3]);
  offset += 4;
  return v;
}

inline std::vector<std::uint8_t> quantized_to_bytes(const QuantizedVector& v) {
  std::vector<std::uint8_t> out;
  unsigned nbytes = v.params.residue_bytes();
  out.reserve(4 + v.residues.size() * nbytes);
  append_u32_be(out, static_cast<std::uint32_t>(v.residues.size()));
  for (Residue r : v.residues) append_residue(out, r, nbytes);
  return out;
}

inline QuantizedVector quantized_from_bytes(std::span<const std::uint8_t> in,
                                            std::size_t& offset,
                                            const FixedPointParams& params) {
  QuantizedVector v;
  v.params = params;
  std::uint32_t dim = read_u32_be(in, offset);
  unsigned nbytes = params.residue_bytes();
  v.residues.reserve(dim);
  for (std::uint32_t i = 0; i < dim; ++i)
    v.residues.push_back(read_residue(in, offset, nbytes));
  return v;
}

}  // namespace duofl
