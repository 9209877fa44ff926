#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "duofl/encoding.hpp"
#include "duofl/rng.hpp"

namespace duofl::jl {

// k >= (4 + 2 ln(1/delta)) / eps^2 keeps squared-norm distortion within
// (1 +- eps) with probability at least 1 - delta.
inline std::uint32_t required_dimension(double epsilon, double delta) {
  if (!(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("required_dimension: epsilon, delta must be in (0,1)");
  double k = (4.0 + 2.0 * std::log(1.0 / delta)) / (epsilon * epsilon);
  return static_cast<std::uint32_t>(std::ceil(k));
}

// Rademacher +-1 matrix generated on the fly from a public seed. Row l's
// sign bits are the keyed ChaCha stream for stream id l, so any row block
// can be regenerated independently on either server. The 1/sqrt(k) scale
// is deferred to the real domain (project_real and the norm estimator);
// the mod-q path stays integer so projection commutes with masking.
class ProjectionMatrix {
 public:
  ProjectionMatrix() = default;

  ProjectionMatrix(const Seed32& seed, std::uint32_t k, std::uint32_t d)
      : seed_(seed), k_(k), d_(d) {
    if (k == 0 || k > d)
      throw std::invalid_argument("projection: need 1 <= k <= d");
  }

  const Seed32& seed() const { return seed_; }
  std::uint32_t k() const { return k_; }
  std::uint32_t d() const { return d_; }

  // d sign bits for one output row, packed little-endian into 64-bit words.
  std::vector<std::uint64_t> row_words(std::uint32_t row) const {
    std::size_t nwords = (d_ + 63) / 64;
    std::vector<std::uint64_t> words(nwords);
    KeyedStream ks(seed_, row);
    ks.bytes_at(0, std::span<std::uint8_t>(reinterpret_cast<std::uint8_t*>(words.data()),
                                           nwords * 8));
    return words;
  }

  // entry in {-1, +1}
  int entry(std::uint32_t row, std::uint32_t col) const {
    std::uint8_t block[64];
    KeyedStream ks(seed_, row);
    ks.block(col / 512, block);
    std::uint32_t bit = col % 512;
    return (block[bit / 8] >> (bit % 8)) & 1 ? -1 : 1;
  }

 private:
  Seed32 seed_{};
  std::uint32_t k_ = 0;
  std::uint32_t d_ = 0;
};

inline ProjectionMatrix sample_matrix(const Seed32& seed, std::uint32_t k,
                                      std::uint32_t d) {
  return ProjectionMatrix(seed, k, d);
}

// sum_j s_j * v_j mod q for one row of sign bits (bit set = -1).
inline Residue project_row_mod_q(std::span<const std::uint64_t> sign_words,
                                 std::span<const Residue> v, const Modulus& q) {
  if (q.is_native()) {
    std::uint64_t acc = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      std::uint64_t bit = (sign_words[j / 64] >> (j % 64)) & 1;
      acc += bit ? static_cast<std::uint64_t>(0) - v[j] : v[j];
    }
    return acc;
  }
  // |acc| <= d * q stays far below the i128 range for any realistic d.
  __int128 acc = 0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    std::uint64_t bit = (sign_words[j / 64] >> (j % 64)) & 1;
    acc += bit ? -static_cast<__int128>(v[j]) : static_cast<__int128>(v[j]);
  }
  return q.reduce_i128(acc);
}

inline std::vector<Residue> project_mod_q(const ProjectionMatrix& R,
                                          std::span<const Residue> v,
                                          const Modulus& q) {
  if (v.size() != R.d())
    throw std::invalid_argument("project_mod_q: dimension mismatch");
  std::vector<Residue> out(R.k());
  for (std::uint32_t row = 0; row < R.k(); ++row) {
    auto words = R.row_words(row);
    out[row] = project_row_mod_q(words, v, q);
  }
  return out;
}

inline QuantizedVector project_mod_q(const ProjectionMatrix& R, const QuantizedVector& v) {
  QuantizedVector out;
  out.params = v.params;
  out.residues = project_mod_q(R, std::span<const Residue>(v.residues), v.params.modulus());
  return out;
}

// (1/sqrt(k)) * sum_j s_j * v_j per row, real domain. The two-accumulator
// form keeps the inner loop branch-free.
inline double project_row_real(std::span<const std::uint64_t> sign_words,
                               std::span<const double> v) {
  double plus = 0.0, flagged = 0.0;
  std::size_t j = 0;
  const std::size_t d = v.size();
  for (std::size_t w = 0; w < sign_words.size(); ++w) {
    std::uint64_t word = sign_words[w];
    std::size_t limit = std::min<std::size_t>(64, d - j);
    for (std::size_t b = 0; b < limit; ++b, ++j) {
      double x = v[j];
      plus += x;
      flagged += static_cast<double>((word >> b) & 1) * x;
    }
  }
  return plus - 2.0 * flagged;
}

inline std::vector<double> project_real(const ProjectionMatrix& R,
                                        std::span<const double> v) {
  if (v.size() != R.d())
    throw std::invalid_argument("project_real: dimension mismatch");
  std::vector<double> out(R.k());
  double scale = 1.0 / std::sqrt(static_cast<double>(R.k()));
  for (std::uint32_t row = 0; row < R.k(); ++row) {
    auto words = R.row_words(row);
    out[row] = scale * project_row_real(words, v);
  }
  return out;
}

// Recovers ||g|| from the centered lift of the unscaled integer projection's
// squared norm: sqrt(lift / k) / 2^f. A compressed squared norm can only
// lift negative if the exactness bounds were violated upstream.
inline double norm_estimate_from_projection(Residue sq_norm_mod, std::uint32_t k,
                                            const FixedPointParams& params,
                                            const Modulus& q) {
  std::int64_t lift = q.center_lift(sq_norm_mod);
  if (lift < 0)
    throw std::runtime_error(
        "norm estimate: negative squared-norm lift (parameter bounds violated)");
  return std::sqrt(static_cast<double>(lift) / static_cast<double>(k)) / params.scale();
}

// Same, for the uncompressed path (no k-descaling).
inline double norm_from_squared_lift(Residue sq_norm_mod, const FixedPointParams& params,
                                     const Modulus& q) {
  std::int64_t lift = q.center_lift(sq_norm_mod);
  if (lift < 0)
    throw std::runtime_error(
        "norm estimate: negative squared-norm lift (parameter bounds violated)");
  return std::sqrt(static_cast<double>(lift)) / params.scale();
}

}  // namespace duofl::jl
