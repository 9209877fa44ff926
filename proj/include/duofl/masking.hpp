#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "duofl/encoding.hpp"
#include "duofl/rng.hpp"

namespace duofl::masking {

struct MaskSeed {
  std::uint32_t client_id = 0;
  Seed32 seed{};
};

namespace detail {

// Stream id namespacing: one mask stream per round, disjoint from every
// other use of the client seed.
inline constexpr std::uint64_t kMaskStreamTag = 0x6d61736b00000000ull;  // "mask"

}  // namespace detail

// r_i^t = G(s_i, t) mod q: uniform residues, deterministic in
// (seed, round, d, q), block-indexed so generation parallelizes. Masks are
// derived by absolute round index regardless of client selection.
inline std::vector<Residue> derive_mask(const MaskSeed& seed, std::uint32_t round,
                                        std::size_t d, const Modulus& q) {
  std::vector<Residue> out(d);
  KeyedStream ks(seed.seed, detail::kMaskStreamTag | round);
  if (q.is_pow2()) {
    // kappa2-bit truncation of the stream is exactly uniform mod 2^kappa2.
    unsigned nbytes = 8;
    std::uint64_t mask = ~std::uint64_t{0};
    if (!q.is_native()) {
      std::uint64_t qv = q.raw();
      mask = qv - 1;
      unsigned bits = 0;
      while ((std::uint64_t{1} << bits) != qv) ++bits;
      nbytes = (bits + 7) / 8;
    }
    std::vector<std::uint8_t> buf(d * nbytes);
    ks.bytes_at(0, buf);
    for (std::size_t j = 0; j < d; ++j) {
      std::uint64_t v = 0;
      for (unsigned b = 0; b < nbytes; ++b)
        v |= static_cast<std::uint64_t>(buf[j * nbytes + b]) << (8 * b);
      out[j] = v & mask;
    }
    return out;
  }
  // Odd moduli (tests): 8-byte draws with rejection, sequentially.
  std::uint64_t qv = q.raw();
  std::uint64_t limit = qv * (UINT64_MAX / qv);
  std::uint64_t offset = 0;
  for (std::size_t j = 0; j < d; ++j) {
    std::uint64_t v;
    do {
      std::uint8_t b[8];
      ks.bytes_at(offset, b);
      offset += 8;
      v = 0;
      for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    } while (v >= limit);
    out[j] = v % qv;
  }
  return out;
}

inline std::vector<Residue> apply_mask(std::span<const Residue> g,
                                       std::span<const Residue> r, const Modulus& q) {
  if (g.size() != r.size())
    throw std::invalid_argument("apply_mask: dimension mismatch");
  std::vector<Residue> out(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) out[j] = q.add(g[j], r[j]);
  return out;
}

inline std::vector<Residue> remove_mask(std::span<const Residue> masked,
                                        std::span<const Residue> r, const Modulus& q) {
  if (masked.size() != r.size())
    throw std::invalid_argument("remove_mask: dimension mismatch");
  std::vector<Residue> out(masked.size());
  for (std::size_t j = 0; j < masked.size(); ++j) out[j] = q.sub(masked[j], r[j]);
  return out;
}

}  // namespace duofl::masking
