#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "duofl/bigint.hpp"
#include "duofl/rng.hpp"

namespace duofl::paillier {

class KeygenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecryptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PublicKey {
  Bigint n;          // modulus, bit length 2*kappa1
  Bigint n_squared;  // cached n^2; g is fixed to n+1
};

struct SecretKey {
  Bigint lambda;  // lcm(p-1, q-1)
  Bigint mu;      // lambda^{-1} mod n, precomputed at keygen
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
};

struct Ciphertext {
  Bigint value;  // in [0, n^2)
};

// Counters for the complexity-table measurements: every modular
// exponentiation and every ciphertext-space multiplication.
struct OpCounters {
  std::atomic<std::uint64_t> exps{0};
  std::atomic<std::uint64_t> muls{0};

  void reset() {
    exps.store(0, std::memory_order_relaxed);
    muls.store(0, std::memory_order_relaxed);
  }
};

inline OpCounters& op_counters() {
  static OpCounters counters;
  return counters;
}

namespace detail {

inline constexpr std::uint32_t kSmallPrimes[] = {
    3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,  43,  47,  53,
    59,  61,  67,  71,  73,  79,  83,  89,  97,  101, 103, 107, 109, 113, 127,
    131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199,
    211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283,
    293, 307, 311, 313, 317, 331, 337, 347, 349, 353, 359, 367, 373, 379, 383,
    389, 397, 401, 409, 419, 421, 431, 433, 439, 443, 449, 457, 461, 463, 467,
    479, 487, 491, 499, 503, 509, 521, 523, 541};

inline bool miller_rabin(const Bigint& n, unsigned rounds, Rng& rng) {
  const Bigint one{1ul};
  const Bigint two{2ul};
  Bigint n_minus_1 = n - one;
  unsigned long s = n_minus_1.trailing_zeros();
  Bigint d = n_minus_1.shifted_right(s);
  Bigint n_minus_3 = n - Bigint{3ul};
  for (unsigned round = 0; round < rounds; ++round) {
    Bigint a = rng.below_big(n_minus_3) + two;  // uniform in [2, n-2]
    Bigint x = Bigint::powm(a, d, n);
    if (x == one || x == n_minus_1) continue;
    bool composite = true;
    for (unsigned long i = 0; i + 1 < s; ++i) {
      x = x.mul_mod(x, n);
      if (x == n_minus_1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

inline bool is_probable_prime(const Bigint& n, Rng& rng) {
  for (std::uint32_t p : kSmallPrimes) {
    Bigint bp{static_cast<unsigned long>(p)};
    if (n == bp) return true;
    if (n.mod(bp).is_zero()) return false;
  }
  return miller_rabin(n, 40, rng);
}

inline Bigint random_prime(unsigned bits, Rng& rng) {
  // Prime density near 2^bits is ~1/(bits*ln2); this allowance makes a
  // miss astronomically unlikely while still bounding the loop.
  const unsigned max_tries = 200 * bits + 1000;
  for (unsigned attempt = 0; attempt < max_tries; ++attempt) {
    Bigint candidate = rng.odd_with_bits(bits);
    if (is_probable_prime(candidate, rng)) return candidate;
  }
  throw KeygenError("paillier: prime generation failed after bounded retries");
}

}  // namespace detail

// Key sizes below 128 bits are only for fast tests and must be requested
// explicitly.
inline constexpr unsigned kMinProductionKappa1 = 128;
inline constexpr unsigned kMinTestKappa1 = 16;

inline KeyPair keygen(unsigned kappa1, Rng& rng, bool insecure_test_keys = false) {
  if (kappa1 < kMinTestKappa1)
    throw std::invalid_argument("paillier: kappa1 must be at least 16");
  if (kappa1 < kMinProductionKappa1 && !insecure_test_keys)
    throw std::invalid_argument(
        "paillier: kappa1 < 128 requires the insecure-test-keys flag");

  const Bigint one{1ul};
  for (int attempt = 0; attempt < 64; ++attempt) {
    Bigint p = detail::random_prime(kappa1, rng);
    Bigint q = detail::random_prime(kappa1, rng);
    if (p == q) continue;
    Bigint n = p * q;
    Bigint lambda = Bigint::lcm(p - one, q - one);
    if (Bigint::gcd(lambda, n) != one) continue;
    KeyPair kp;
    kp.pk.n_squared = n * n;
    kp.pk.n = std::move(n);
    kp.sk.mu = lambda.invert_mod(kp.pk.n);
    kp.sk.lambda = std::move(lambda);
    return kp;
  }
  throw KeygenError("paillier: could not find a valid p, q pair");
}

// c = (n+1)^m * r^n mod n^2, with (n+1)^m expanded to 1 + m*n.
inline Ciphertext encrypt(const Bigint& m, const PublicKey& pk, Rng& rng) {
  if (m.is_negative() || m >= pk.n)
    throw std::invalid_argument("paillier: plaintext out of [0, n)");
  const Bigint one{1ul};
  Bigint r = rng.below_big(pk.n);
  while (r.is_zero() || Bigint::gcd(r, pk.n) != one) r = rng.below_big(pk.n);
  Bigint g_pow_m = (one + m * pk.n).mod(pk.n_squared);
  Bigint r_pow_n = Bigint::powm(r, pk.n, pk.n_squared);
  op_counters().exps.fetch_add(1, std::memory_order_relaxed);
  op_counters().muls.fetch_add(1, std::memory_order_relaxed);
  return Ciphertext{g_pow_m.mul_mod(r_pow_n, pk.n_squared)};
}

inline Bigint decrypt(const Ciphertext& c, const SecretKey& sk, const PublicKey& pk) {
  if (c.value.is_negative() || c.value >= pk.n_squared)
    throw DecryptionError("paillier: ciphertext out of range");
  Bigint u = Bigint::powm(c.value, sk.lambda, pk.n_squared);
  op_counters().exps.fetch_add(1, std::memory_order_relaxed);
  Bigint u_minus_1 = u - Bigint{1ul};
  if (!u_minus_1.divisible_by(pk.n))
    throw DecryptionError("paillier: malformed ciphertext (L not integral)");
  return u_minus_1.div_exact(pk.n).mul_mod(sk.mu, pk.n);
}

inline Ciphertext add_ct(std::span<const Ciphertext> cs, const PublicKey& pk) {
  if (cs.empty()) throw std::invalid_argument("paillier: add_ct on empty list");
  Bigint acc = cs[0].value;
  for (std::size_t i = 1; i < cs.size(); ++i) {
    acc = acc.mul_mod(cs[i].value, pk.n_squared);
    op_counters().muls.fetch_add(1, std::memory_order_relaxed);
  }
  return Ciphertext{std::move(acc)};
}

inline Ciphertext scalar_mul(const Ciphertext& c, const Bigint& k, const PublicKey& pk) {
  if (k.is_negative() || k >= pk.n)
    throw std::invalid_argument("paillier: scalar out of [0, n)");
  op_counters().exps.fetch_add(1, std::memory_order_relaxed);
  return Ciphertext{Bigint::powm(c.value, k, pk.n_squared)};
}

inline std::vector<Ciphertext> encrypt_vector(std::span<const Bigint> values,
                                              const PublicKey& pk, Rng& rng) {
  std::vector<Ciphertext> out;
  out.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].is_negative() || values[i] >= pk.n)
      throw std::invalid_argument("paillier: component " + std::to_string(i) +
                                  " out of [0, n)");
    out.push_back(encrypt(values[i], pk, rng));
  }
  return out;
}

// Wire form shared by ciphertexts and public keys: 4-byte big-endian byte
// count, then the big-endian magnitude.
inline void append_bigint(std::vector<std::uint8_t>& out, const Bigint& v) {
  auto bytes = v.to_bytes_be();
  std::uint32_t len = static_cast<std::uint32_t>(bytes.size());
  out.push_back(static_cast<std::uint8_t>(len >> 24));
  out.push_back(static_cast<std::uint8_t>(len >> 16));
  out.push_back(static_cast<std::uint8_t>(len >> 8));
  out.push_back(static_cast<std::uint8_t>(len));
  out.insert(out.end(), bytes.begin(), bytes.end());
}

inline Bigint read_bigint(std::span<const std::uint8_t> in, std::size_t& offset) {
  if (offset + 4 > in.size())
    throw std::runtime_error("paillier: truncated length prefix");
  std::uint32_t len = static_cast<std::uint32_t>(in[offset]) << 24 |
                      static_cast<std::uint32_t>(in[offset + 1]) << 16 |
                      static_cast<std::uint32_t>(in[offset + 2]) << 8 |
                      static_cast<std::uint32_t>(in[offset + 3]);
  offset += 4;
  if (offset + len > in.size()) throw std::runtime_error("paillier: truncated value");
  Bigint v = Bigint::from_bytes_be(in.subspan(offset, len));
  offset += len;
  return v;
}

inline std::vector<std::uint8_t> ciphertext_to_bytes(const Ciphertext& c) {
  std::vector<std::uint8_t> out;
  append_bigint(out, c.value);
  return out;
}

inline Ciphertext ciphertext_from_bytes(std::span<const std::uint8_t> in,
                                        std::size_t& offset) {
  return Ciphertext{read_bigint(in, offset)};
}

inline std::vector<std::uint8_t> public_key_to_bytes(const PublicKey& pk) {
  std::vector<std::uint8_t> out;
  append_bigint(out, pk.n);
  return out;
}

inline PublicKey public_key_from_bytes(std::span<const std::uint8_t> in,
                                       std::size_t& offset) {
  PublicKey pk;
  pk.n = read_bigint(in, offset);
  pk.n_squared = pk.n * pk.n;
  return pk;
}

}  // namespace duofl::paillier
