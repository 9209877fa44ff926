#pragma once

#include <gmp.h>

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace duofl {

// Value-semantic wrapper over GMP's mpz_t. Only the operations the
// protocol needs; everything is non-negative unless noted.
class Bigint {
 public:
  Bigint() { mpz_init(z_); }
  explicit Bigint(unsigned long v) { mpz_init_set_ui(z_, v); }
  explicit Bigint(long v) { mpz_init_set_si(z_, v); }

  static Bigint from_u64(std::uint64_t v) {
    Bigint r;
    mpz_import(r.z_, 1, 1, sizeof(v), 0, 0, &v);
    return r;
  }

  static Bigint from_u128(unsigned __int128 v) {
    std::uint64_t hi = static_cast<std::uint64_t>(v >> 64);
    std::uint64_t lo = static_cast<std::uint64_t>(v);
    Bigint r = from_u64(hi);
    mpz_mul_2exp(r.z_, r.z_, 64);
    Bigint low = from_u64(lo);
    mpz_add(r.z_, r.z_, low.z_);
    return r;
  }

  // 2^bits
  static Bigint pow2(unsigned bits) {
    Bigint r{1ul};
    mpz_mul_2exp(r.z_, r.z_, bits);
    return r;
  }

  Bigint(const Bigint& o) { mpz_init_set(z_, o.z_); }
  Bigint(Bigint&& o) noexcept {
    mpz_init(z_);
    mpz_swap(z_, o.z_);
  }
  Bigint& operator=(const Bigint& o) {
    if (this != &o) mpz_set(z_, o.z_);
    return *this;
  }
  Bigint& operator=(Bigint&& o) noexcept {
    mpz_swap(z_, o.z_);
    return *this;
  }
  ~Bigint() { mpz_clear(z_); }

  friend Bigint operator+(const Bigint& a, const Bigint& b) {
    Bigint r;
    mpz_add(r.z_, a.z_, b.z_);
    return r;
  }
  friend Bigint operator-(const Bigint& a, const Bigint& b) {
    Bigint r;
    mpz_sub(r.z_, a.z_, b.z_);
    return r;
  }
  friend Bigint operator*(const Bigint& a, const Bigint& b) {
    Bigint r;
    mpz_mul(r.z_, a.z_, b.z_);
    return r;
  }
  Bigint& operator+=(const Bigint& b) {
    mpz_add(z_, z_, b.z_);
    return *this;
  }
  Bigint& operator-=(const Bigint& b) {
    mpz_sub(z_, z_, b.z_);
    return *this;
  }

  // Floor mod; result in [0, m) for m > 0.
  Bigint mod(const Bigint& m) const {
    Bigint r;
    mpz_fdiv_r(r.z_, z_, m.z_);
    return r;
  }

  Bigint mul_mod(const Bigint& b, const Bigint& m) const {
    Bigint r;
    mpz_mul(r.z_, z_, b.z_);
    mpz_fdiv_r(r.z_, r.z_, m.z_);
    return r;
  }

  // Exact division (caller guarantees divisibility).
  Bigint div_exact(const Bigint& d) const {
    Bigint r;
    mpz_divexact(r.z_, z_, d.z_);
    return r;
  }

  bool divisible_by(const Bigint& d) const { return mpz_divisible_p(z_, d.z_) != 0; }

  static Bigint powm(const Bigint& base, const Bigint& exp, const Bigint& m) {
    Bigint r;
    mpz_powm(r.z_, base.z_, exp.z_, m.z_);
    return r;
  }

  // Modular inverse; throws if it does not exist.
  Bigint invert_mod(const Bigint& m) const {
    Bigint r;
    if (mpz_invert(r.z_, z_, m.z_) == 0)
      throw std::domain_error("bigint: modular inverse does not exist");
    return r;
  }

  static Bigint gcd(const Bigint& a, const Bigint& b) {
    Bigint r;
    mpz_gcd(r.z_, a.z_, b.z_);
    return r;
  }
  static Bigint lcm(const Bigint& a, const Bigint& b) {
    Bigint r;
    mpz_lcm(r.z_, a.z_, b.z_);
    return r;
  }

  int cmp(const Bigint& o) const { return mpz_cmp(z_, o.z_); }
  friend bool operator==(const Bigint& a, const Bigint& b) { return a.cmp(b) == 0; }
  friend bool operator!=(const Bigint& a, const Bigint& b) { return a.cmp(b) != 0; }
  friend bool operator<(const Bigint& a, const Bigint& b) { return a.cmp(b) < 0; }
  friend bool operator<=(const Bigint& a, const Bigint& b) { return a.cmp(b) <= 0; }
  friend bool operator>(const Bigint& a, const Bigint& b) { return a.cmp(b) > 0; }
  friend bool operator>=(const Bigint& a, const Bigint& b) { return a.cmp(b) >= 0; }

  bool is_zero() const { return mpz_sgn(z_) == 0; }
  bool is_odd() const { return mpz_odd_p(z_) != 0; }
  bool is_negative() const { return mpz_sgn(z_) < 0; }

  std::size_t bit_length() const { return is_zero() ? 0 : mpz_sizeinbase(z_, 2); }
  bool test_bit(unsigned long i) const { return mpz_tstbit(z_, i) != 0; }
  void set_bit(unsigned long i) { mpz_setbit(z_, i); }

  // Number of trailing zero bits (value must be nonzero).
  unsigned long trailing_zeros() const { return mpz_scan1(z_, 0); }

  Bigint shifted_right(unsigned long bits) const {
    Bigint r;
    mpz_fdiv_q_2exp(r.z_, z_, bits);
    return r;
  }

  std::uint64_t low_u64() const {
    std::uint64_t out = 0;
    Bigint low;
    mpz_fdiv_r_2exp(low.z_, z_, 64);
    std::size_t count = 0;
    mpz_export(&out, &count, -1, sizeof(out), 0, 0, low.z_);
    return out;
  }

  // value mod 2^64 then truncated; for full reduction use mod() first.
  std::uint64_t to_u64_checked() const {
    if (is_negative() || bit_length() > 64)
      throw std::overflow_error("bigint: value does not fit in u64");
    return low_u64();
  }

  double to_double() const { return mpz_get_d(z_); }

  std::string to_string() const {
    char* s = mpz_get_str(nullptr, 10, z_);
    std::string out{s};
    void (*freefn)(void*, std::size_t);
    mp_get_memory_functions(nullptr, nullptr, &freefn);
    freefn(s, std::strlen(s) + 1);
    return out;
  }

  // Big-endian magnitude, minimal length (empty for zero).
  std::vector<std::uint8_t> to_bytes_be() const {
    std::size_t count = (bit_length() + 7) / 8;
    std::vector<std::uint8_t> out(count);
    if (count > 0) mpz_export(out.data(), &count, 1, 1, 1, 0, z_);
    return out;
  }

  static Bigint from_bytes_be(std::span<const std::uint8_t> bytes) {
    Bigint r;
    if (!bytes.empty()) mpz_import(r.z_, bytes.size(), 1, 1, 1, 0, bytes.data());
    return r;
  }

  mpz_srcptr raw() const { return z_; }
  mpz_ptr raw() { return z_; }

 private:
  mpz_t z_;
};

}  // namespace duofl
