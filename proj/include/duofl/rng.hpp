#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <vector>

#include "duofl/bigint.hpp"

namespace duofl {

using Seed32 = std::array<std::uint8_t, 32>;

// SplitMix-style combiner for deriving per-(entity, round) sub-seeds from a
// 64-bit base seed.
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t x = a;
  auto stir = [](std::uint64_t v) {
    v += 0x9e3779b97f4a7c15ull;
    v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ull;
    v = (v ^ (v >> 27)) * 0x94d049bb133111ebull;
    return v ^ (v >> 31);
  };
  x = stir(x ^ stir(b));
  x = stir(x ^ stir(c ^ 0xd1b54a32d192ed03ull));
  return x;
}

namespace detail {

inline std::uint32_t rotl32(std::uint32_t x, int n) { return (x << n) | (x >> (32 - n)); }

// ChaCha20 block function. Every random value in the project flows
// through this so that runs are reproducible from explicit seeds.
inline void chacha20_block(const std::uint32_t key[8], std::uint64_t stream,
                           std::uint64_t counter, std::uint8_t out[64]) {
  std::uint32_t s[16] = {
      0x61707865u, 0x3320646eu, 0x79622d32u, 0x6b206574u,
      key[0], key[1], key[2], key[3], key[4], key[5], key[6], key[7],
      static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t x[16];
  std::memcpy(x, s, sizeof(x));
  auto quarter = [&](int a, int b, int c, int d) {
    x[a] += x[b]; x[d] = rotl32(x[d] ^ x[a], 16);
    x[c] += x[d]; x[b] = rotl32(x[b] ^ x[c], 12);
    x[a] += x[b]; x[d] = rotl32(x[d] ^ x[a], 8);
    x[c] += x[d]; x[b] = rotl32(x[b] ^ x[c], 7);
  };
  for (int round = 0; round < 10; ++round) {
    quarter(0, 4, 8, 12);
    quarter(1, 5, 9, 13);
    quarter(2, 6, 10, 14);
    quarter(3, 7, 11, 15);
    quarter(0, 5, 10, 15);
    quarter(1, 6, 11, 12);
    quarter(2, 7, 8, 13);
    quarter(3, 4, 9, 14);
  }
  for (int i = 0; i < 16; ++i) {
    std::uint32_t v = x[i] + s[i];
    out[4 * i + 0] = static_cast<std::uint8_t>(v);
    out[4 * i + 1] = static_cast<std::uint8_t>(v >> 8);
    out[4 * i + 2] = static_cast<std::uint8_t>(v >> 16);
    out[4 * i + 3] = static_cast<std::uint8_t>(v >> 24);
  }
}

inline void key_from_seed(const Seed32& seed, std::uint32_t key[8]) {
  for (int i = 0; i < 8; ++i) {
    key[i] = static_cast<std::uint32_t>(seed[4 * i]) |
             static_cast<std::uint32_t>(seed[4 * i + 1]) << 8 |
             static_cast<std::uint32_t>(seed[4 * i + 2]) << 16 |
             static_cast<std::uint32_t>(seed[4 * i + 3]) << 24;
  }
}

}  // namespace detail

// Random-access keyed stream: byte i of stream `stream_id` under `seed` is
// the same no matter how it is reached, which is what lets masks be
// generated per coordinate block in parallel.
class KeyedStream {
 public:
  KeyedStream(const Seed32& seed, std::uint64_t stream_id) : stream_(stream_id) {
    detail::key_from_seed(seed, key_);
  }

  void block(std::uint64_t index, std::uint8_t out[64]) const {
    detail::chacha20_block(key_, stream_, index, out);
  }

  void bytes_at(std::uint64_t offset, std::span<std::uint8_t> out) const {
    std::uint8_t buf[64];
    std::size_t written = 0;
    while (written < out.size()) {
      std::uint64_t blk = (offset + written) / 64;
      std::size_t in_block = static_cast<std::size_t>((offset + written) % 64);
      block(blk, buf);
      std::size_t take = std::min<std::size_t>(64 - in_block, out.size() - written);
      std::memcpy(out.data() + written, buf + in_block, take);
      written += take;
    }
  }

 private:
  std::uint32_t key_[8];
  std::uint64_t stream_;
};

// Sequential PRNG view over a KeyedStream, with the usual sampling helpers.
class Rng {
 public:
  explicit Rng(const Seed32& seed, std::uint64_t stream_id = 0)
      : stream_(seed, stream_id) {}

  static Rng from_u64(std::uint64_t s, std::uint64_t stream_id = 0) {
    Seed32 seed{};
    for (int i = 0; i < 8; ++i) seed[i] = static_cast<std::uint8_t>(s >> (8 * i));
    return Rng(seed, stream_id);
  }

  std::uint64_t next_u64() {
    if (pos_ + 8 > 64) refill();
    std::uint64_t v;
    std::memcpy(&v, buf_ + pos_, 8);
    pos_ += 8;
    return v;
  }

  std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64()); }

  void fill_bytes(std::span<std::uint8_t> out) {
    for (auto& b : out) {
      if (pos_ >= 64) refill();
      b = buf_[pos_++];
    }
  }

  Seed32 next_seed() {
    Seed32 s;
    fill_bytes(s);
    return s;
  }

  // Uniform in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("rng: zero bound");
    std::uint64_t limit = bound * (UINT64_MAX / bound);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % bound;
  }

  double uniform01() {  // in [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 == 0.0) u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Marsaglia-Tsang; boosts shape < 1 through the power trick.
  double gamma(double shape) {
    if (shape <= 0) throw std::invalid_argument("rng: gamma shape must be positive");
    if (shape < 1.0) {
      double u = uniform01();
      while (u == 0.0) u = uniform01();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = gaussian();
      double v = 1.0 + c * x;
      if (v <= 0) continue;
      v = v * v * v;
      double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::vector<double> dirichlet(double alpha, std::size_t count) {
    std::vector<double> out(count);
    double total = 0.0;
    for (auto& v : out) {
      v = gamma(alpha);
      total += v;
    }
    if (total <= 0) {  // degenerate draw; fall back to uniform
      for (auto& v : out) v = 1.0 / static_cast<double>(count);
      return out;
    }
    for (auto& v : out) v /= total;
    return out;
  }

  // Uniform Bigint in [0, bound).
  Bigint below_big(const Bigint& bound) {
    if (bound.is_zero() || bound.is_negative())
      throw std::invalid_argument("rng: bound must be positive");
    std::size_t bits = bound.bit_length();
    std::size_t nbytes = (bits + 7) / 8;
    std::vector<std::uint8_t> buf(nbytes);
    unsigned drop = static_cast<unsigned>(nbytes * 8 - bits);
    for (;;) {
      fill_bytes(buf);
      buf[0] = static_cast<std::uint8_t>(buf[0] & (0xFFu >> drop));
      Bigint candidate = Bigint::from_bytes_be(buf);
      if (candidate < bound) return candidate;
    }
  }

  // Random integer with exactly `bits` bits and the top two bits set so that
  // products of two such integers always reach full width.
  Bigint odd_with_bits(unsigned bits) {
    if (bits < 3) throw std::invalid_argument("rng: need at least 3 bits");
    std::size_t nbytes = (bits + 7) / 8;
    std::vector<std::uint8_t> buf(nbytes);
    fill_bytes(buf);
    Bigint v = Bigint::from_bytes_be(buf).mod(Bigint::pow2(bits));
    v.set_bit(bits - 1);
    v.set_bit(bits - 2);
    v.set_bit(0);
    return v;
  }

  // Derive an independent child seed for the given domain tag.
  static Seed32 derive(const Seed32& parent, std::uint64_t tag, std::uint64_t index = 0) {
    KeyedStream ks(parent, tag);
    std::uint8_t out[64];
    ks.block(index, out);
    Seed32 s;
    std::memcpy(s.data(), out, 32);
    return s;
  }

 private:
  void refill() {
    stream_.block(counter_++, buf_);
    pos_ = 0;
  }

  KeyedStream stream_;
  std::uint8_t buf_[64];
  std::size_t pos_ = 64;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace duofl
