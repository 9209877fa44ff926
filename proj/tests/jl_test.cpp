#include "duofl/jl.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "duofl/rng.hpp"
#include "duofl/vecmath.hpp"

using namespace duofl;

namespace {

TEST(RequiredDimension, KnownValues) {
  EXPECT_EQ(jl::required_dimension(0.2, 0.01), 331u);
  EXPECT_EQ(jl::required_dimension(0.1, 0.01), 1322u);
  // loosest sensible bound still lands at a small constant >= 5
  std::uint32_t loosest = jl::required_dimension(1.0 - 1e-9, 0.99);
  EXPECT_GE(loosest, 5u);
  EXPECT_EQ(loosest, 5u);
}

TEST(RequiredDimension, RejectsOutOfRange) {
  EXPECT_THROW(jl::required_dimension(0.0, 0.5), std::invalid_argument);
  EXPECT_THROW(jl::required_dimension(1.0, 0.5), std::invalid_argument);
  EXPECT_THROW(jl::required_dimension(0.5, 0.0), std::invalid_argument);
  EXPECT_THROW(jl::required_dimension(0.5, 1.0), std::invalid_argument);
}

TEST(SampleMatrix, DeterministicInSeed) {
  Seed32 seed = Rng::from_u64(5).next_seed();
  auto a = jl::sample_matrix(seed, 2, 4);
  auto b = jl::sample_matrix(seed, 2, 4);
  for (std::uint32_t r = 0; r < 2; ++r) EXPECT_EQ(a.row_words(r), b.row_words(r));
  for (std::uint32_t r = 0; r < 2; ++r)
    for (std::uint32_t c = 0; c < 4; ++c) EXPECT_EQ(a.entry(r, c), b.entry(r, c));
}

TEST(SampleMatrix, RejectsBadShapes) {
  Seed32 seed{};
  EXPECT_THROW(jl::sample_matrix(seed, 5, 4), std::invalid_argument);
  EXPECT_THROW(jl::sample_matrix(seed, 0, 4), std::invalid_argument);
}

TEST(SampleMatrix, EntriesAreUnbiased) {
  Seed32 seed = Rng::from_u64(6).next_seed();
  const std::uint32_t k = 16, d = 62500;  // 10^6 entries
  auto R = jl::sample_matrix(seed, k, d);
  long long total = 0;
  for (std::uint32_t r = 0; r < k; ++r) {
    auto words = R.row_words(r);
    long long minus = 0;
    for (std::uint32_t c = 0; c < d; ++c)
      minus += (words[c / 64] >> (c % 64)) & 1;
    total += static_cast<long long>(d) - 2 * minus;
  }
  double mean = static_cast<double>(total) / (static_cast<double>(k) * d);
  EXPECT_LT(std::abs(mean), 0.01);
}

TEST(SampleMatrix, RowWordsMatchEntryBits) {
  Seed32 seed = Rng::from_u64(7).next_seed();
  auto R = jl::sample_matrix(seed, 3, 700);  // crosses a ChaCha block boundary
  for (std::uint32_t r = 0; r < 3; ++r) {
    auto words = R.row_words(r);
    for (std::uint32_t c = 0; c < 700; ++c) {
      int sign = (words[c / 64] >> (c % 64)) & 1 ? -1 : 1;
      EXPECT_EQ(sign, R.entry(r, c));
    }
  }
}

TEST(ProjectModQ, HandCheckedRow) {
  // row (+1, -1) applied to (3, 4) mod 101: 3 - 4 = -1 = 100
  std::vector<std::uint64_t> signs{0b10};
  std::vector<Residue> v{3, 4};
  EXPECT_EQ(jl::project_row_mod_q(signs, v, Modulus(101)), 100u);
}

TEST(ProjectModQ, BasisVectorsPickColumns) {
  Seed32 seed = Rng::from_u64(8).next_seed();
  auto R = jl::sample_matrix(seed, 4, 4);
  Modulus q(101);
  for (std::uint32_t j = 0; j < 4; ++j) {
    std::vector<Residue> e(4, 0);
    e[j] = 1;
    auto out = jl::project_mod_q(R, e, q);
    for (std::uint32_t r = 0; r < 4; ++r) {
      std::int64_t lift = q.center_lift(out[r]);
      EXPECT_EQ(lift, R.entry(r, j));
    }
  }
}

TEST(ProjectModQ, ZeroVectorAndDimensionMismatch) {
  Seed32 seed = Rng::from_u64(9).next_seed();
  auto R = jl::sample_matrix(seed, 2, 8);
  Modulus q(101);
  std::vector<Residue> zero(8, 0);
  for (Residue r : jl::project_mod_q(R, zero, q)) EXPECT_EQ(r, 0u);
  std::vector<Residue> wrong(7, 0);
  EXPECT_THROW(jl::project_mod_q(R, wrong, q), std::invalid_argument);
}

TEST(ProjectModQ, CommutesWithMasking) {
  Seed32 seed = Rng::from_u64(10).next_seed();
  auto R = jl::sample_matrix(seed, 5, 32);
  Modulus q(101);
  Rng rng = Rng::from_u64(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Residue> g(32), r(32), sum(32);
    for (std::size_t j = 0; j < 32; ++j) {
      g[j] = rng.below(101);
      r[j] = rng.below(101);
      sum[j] = q.add(g[j], r[j]);
    }
    auto pg = jl::project_mod_q(R, g, q);
    auto pr = jl::project_mod_q(R, r, q);
    auto ps = jl::project_mod_q(R, sum, q);
    for (std::size_t row = 0; row < 5; ++row)
      EXPECT_EQ(ps[row], q.add(pg[row], pr[row]));
  }
}

TEST(ProjectModQ, NativeModulusMatchesGenericPath) {
  Seed32 seed = Rng::from_u64(12).next_seed();
  auto R = jl::sample_matrix(seed, 3, 16);
  Rng rng = Rng::from_u64(13);
  Modulus native = Modulus::pow2(64);
  std::vector<Residue> v(16);
  for (auto& x : v) x = rng.below(1u << 30);
  auto fast = jl::project_mod_q(R, v, native);
  // reference: signed i128 accumulation reduced mod 2^64
  for (std::uint32_t row = 0; row < 3; ++row) {
    __int128 acc = 0;
    for (std::uint32_t c = 0; c < 16; ++c)
      acc += static_cast<__int128>(R.entry(row, c)) * static_cast<__int128>(v[c]);
    EXPECT_EQ(fast[row], static_cast<Residue>(acc));
  }
}

TEST(ProjectReal, ZeroAndMismatch) {
  Seed32 seed = Rng::from_u64(14).next_seed();
  auto R = jl::sample_matrix(seed, 2, 8);
  std::vector<double> zero(8, 0.0);
  for (double v : jl::project_real(R, zero)) EXPECT_DOUBLE_EQ(v, 0.0);
  std::vector<double> wrong(5, 1.0);
  EXPECT_THROW(jl::project_real(R, wrong), std::invalid_argument);
}

TEST(ProjectReal, MatchesEntrywiseSum) {
  Seed32 seed = Rng::from_u64(15).next_seed();
  auto R = jl::sample_matrix(seed, 4, 130);
  Rng rng = Rng::from_u64(16);
  std::vector<double> v(130);
  for (auto& x : v) x = rng.gaussian();
  auto out = jl::project_real(R, v);
  double scale = 1.0 / std::sqrt(4.0);
  for (std::uint32_t row = 0; row < 4; ++row) {
    double expect = 0.0;
    for (std::uint32_t c = 0; c < 130; ++c) expect += R.entry(row, c) * v[c];
    EXPECT_NEAR(out[row], scale * expect, 1e-9 * (1.0 + std::abs(expect)));
  }
}

TEST(NormEstimate, SingleRowCase) {
  FixedPointParams p{64, 8, 8, 8.0};
  Modulus q = p.modulus();
  Residue value = encode(5.0, p, q);  // 5 * 2^8
  Residue sq = q.mul(value, value);
  EXPECT_DOUBLE_EQ(jl::norm_estimate_from_projection(sq, 1, p, q), 5.0);
}

TEST(NormEstimate, IdentityDoubleToy) {
  // ||(3,4)||^2 = 25 with k = d = 2, f = 0: estimate sqrt(25/2)
  FixedPointParams p{64, 0, 0, 8.0};
  Modulus q(101);
  EXPECT_DOUBLE_EQ(jl::norm_estimate_from_projection(25, 2, p, q), std::sqrt(12.5));
  EXPECT_DOUBLE_EQ(jl::norm_from_squared_lift(25, p, q), 5.0);
}

TEST(NormEstimate, NegativeLiftIsIntegrityError) {
  FixedPointParams p{64, 0, 0, 8.0};
  Modulus q(101);
  EXPECT_THROW(jl::norm_estimate_from_projection(100, 2, p, q), std::runtime_error);
}

// Decode-then-project_real agrees with descale-then-lift of project_mod_q
// up to the deferred 1/sqrt(k).
TEST(Consistency, RealAndModularPathsAgree) {
  Seed32 seed = Rng::from_u64(17).next_seed();
  const std::uint32_t k = 8, d = 200;
  auto R = jl::sample_matrix(seed, k, d);
  FixedPointParams p{64, 12, 12, 4.0};
  Modulus q = p.modulus();
  Rng rng = Rng::from_u64(18);
  std::vector<double> x(d);
  for (auto& v : x) v = rng.uniform(-2.0, 2.0);
  QuantizedVector enc = encode_vector(x, p, nullptr);
  auto decoded = decode_vector(enc);
  auto modular = jl::project_mod_q(R, enc.residues, q);
  auto real = jl::project_real(R, decoded);
  double sqrt_k = std::sqrt(static_cast<double>(k));
  for (std::uint32_t row = 0; row < k; ++row) {
    double lifted = static_cast<double>(q.center_lift(modular[row])) / p.scale();
    EXPECT_NEAR(lifted, real[row] * sqrt_k, 1e-9);
  }
}

// Smoke-scale tail check; the 1000-trial d=10^5 version is acceptance
// criterion material.
TEST(TailBound, SmallMonteCarlo) {
  const std::uint32_t k = jl::required_dimension(0.2, 0.01);
  const std::uint32_t d = 2000;
  const int trials = 200;
  Rng rng = Rng::from_u64(19);
  int violations = 0;
  for (int t = 0; t < trials; ++t) {
    Seed32 seed = rng.next_seed();
    auto R = jl::sample_matrix(seed, k, d);
    std::vector<double> v(d);
    for (auto& x : v) x = rng.gaussian();
    double n = vec::norm(v);
    for (auto& x : v) x /= n;
    double out_norm_sq = 0.0;
    auto out = jl::project_real(R, v);
    for (double y : out) out_norm_sq += y * y;
    if (out_norm_sq < 0.8 || out_norm_sq > 1.2) ++violations;
  }
  // delta * trials = 2 expected; 3-sigma allowance on top
  double allowance = trials * 0.01 + 3.0 * std::sqrt(trials * 0.01 * 0.99);
  EXPECT_LE(violations, static_cast<int>(allowance) + 1);
}

}  // namespace
