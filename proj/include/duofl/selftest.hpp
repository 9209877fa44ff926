#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "duofl/experiment.hpp"

namespace duofl::selftest {

struct CheckResult {
  std::string module;
  bool pass = false;
  std::string detail;
};

struct SelftestReport {
  bool pass = false;
  std::vector<CheckResult> checks;

  std::string summary() const {
    std::string out;
    for (const auto& c : checks)
      out += std::string(c.pass ? "PASS " : "FAIL ") + c.module +
             (c.detail.empty() ? "" : " (" + c.detail + ")") + "\n";
    out += pass ? "selftest: PASS\n" : "selftest: FAIL\n";
    return out;
  }
};

namespace detail {

inline CheckResult check_paillier(bool inject) {
  CheckResult res{"paillier", true, ""};
  Rng rng = Rng::from_u64(101);
  auto kp = paillier::keygen(16, rng, /*insecure_test_keys=*/true);
  for (int i = 0; i < 200 && res.pass; ++i) {
    Bigint m = rng.below_big(kp.pk.n);
    auto c = paillier::encrypt(m, kp.pk, rng);
    if (inject) c.value = c.value + Bigint{1ul};
    try {
      if (paillier::decrypt(c, kp.sk, kp.pk) != m) {
        res.pass = false;
        res.detail = "decrypt(encrypt(m)) != m";
      }
    } catch (const paillier::DecryptionError&) {
      res.pass = false;
      res.detail = "decryption error";
    }
  }
  if (res.pass) {
    Bigint a{17ul}, b{25ul};
    std::vector<paillier::Ciphertext> cs;
    cs.push_back(paillier::encrypt(a, kp.pk, rng));
    cs.push_back(paillier::encrypt(b, kp.pk, rng));
    if (paillier::decrypt(paillier::add_ct(cs, kp.pk), kp.sk, kp.pk) !=
        (a + b).mod(kp.pk.n)) {
      res.pass = false;
      res.detail = "additive homomorphism";
    }
    auto scaled = paillier::scalar_mul(cs[0], Bigint{3ul}, kp.pk);
    if (paillier::decrypt(scaled, kp.sk, kp.pk) != Bigint{51ul}.mod(kp.pk.n)) {
      res.pass = false;
      res.detail = "scalar homomorphism";
    }
  }
  return res;
}

inline CheckResult check_encoding(bool inject) {
  CheckResult res{"encoding", true, ""};
  FixedPointParams fp{32, 10, 12, 2.0};
  Modulus q = fp.modulus();
  Rng rng = Rng::from_u64(202);
  for (int i = 0; i < 500 && res.pass; ++i) {
    double x = rng.uniform(-2.0, 2.0);
    Residue v = encode(x, fp, q);
    if (inject) v = q.add(v, 1);
    if (std::abs(decode(v, fp, q) - x) > std::ldexp(1.0, -11) + 1e-12) {
      res.pass = false;
      res.detail = "encode/decode round trip";
    }
  }
  if (res.pass) {
    auto report = validate_parameters(1, 1, 1, FixedPointParams{64, 0, 0, 1.0}, 1024);
    if (!report.pass) {
      res.pass = false;
      res.detail = "tiny-instance validator";
    }
  }
  return res;
}

inline CheckResult check_jl(bool inject) {
  CheckResult res{"jl", true, ""};
  if (jl::required_dimension(0.2, 0.01) != 331) {
    res.pass = false;
    res.detail = "dimension bound";
    return res;
  }
  Seed32 seed = Rng::from_u64(303).next_seed();
  auto R1 = jl::sample_matrix(seed, 4, 16);
  auto R2 = jl::sample_matrix(seed, 4, 16);
  for (std::uint32_t r = 0; r < 4; ++r)
    if (R1.row_words(r) != R2.row_words(r)) {
      res.pass = false;
      res.detail = "determinism";
      return res;
    }
  // Linearity mod q on random pairs.
  Modulus q(101);
  Rng rng = Rng::from_u64(304);
  std::vector<Residue> a(16), b(16), sum(16);
  for (std::size_t j = 0; j < 16; ++j) {
    a[j] = rng.below(101);
    b[j] = rng.below(101);
    sum[j] = q.add(a[j], b[j]);
  }
  if (inject) sum[0] = q.add(sum[0], 1);
  auto pa = jl::project_mod_q(R1, a, q);
  auto pb = jl::project_mod_q(R1, b, q);
  auto ps = jl::project_mod_q(R1, sum, q);
  for (std::size_t r = 0; r < 4; ++r)
    if (ps[r] != q.add(pa[r], pb[r])) {
      res.pass = false;
      res.detail = "mod-q linearity";
    }
  return res;
}

inline CheckResult check_masking(bool inject) {
  CheckResult res{"masking", true, ""};
  Modulus q = Modulus::pow2(32);
  masking::MaskSeed seed{7, Rng::from_u64(404).next_seed()};
  auto r1 = masking::derive_mask(seed, 3, 64, q);
  auto r2 = masking::derive_mask(seed, 3, 64, q);
  if (inject) r2[0] = q.add(r2[0], 1);
  if (r1 != r2) {
    res.pass = false;
    res.detail = "client/S1 mask divergence";
    return res;
  }
  Rng rng = Rng::from_u64(405);
  std::vector<Residue> g(64);
  for (auto& v : g) v = rng.below(1u << 16);
  auto masked = masking::apply_mask(g, r1, q);
  auto back = masking::remove_mask(masked, r1, q);
  if (back != g) {
    res.pass = false;
    res.detail = "mask removal";
  }
  return res;
}

inline CheckResult check_transport(bool inject) {
  CheckResult res{"transport", true, ""};
  Rng rng = Rng::from_u64(505);
  for (int i = 0; i < 50 && res.pass; ++i) {
    transport::Frame f;
    f.msg_type = transport::MessageType::COS_P0;
    f.round = rng.next_u32();
    f.sender_id = rng.next_u32();
    f.payload.resize(rng.below(200));
    rng.fill_bytes(f.payload);
    auto bytes = transport::encode_frame(f);
    if (inject && !bytes.empty()) bytes[bytes.size() / 2] ^= 0x40;
    auto back = transport::decode_frame(bytes);
    if (!back || !(*back == f)) {
      res.pass = false;
      res.detail = "frame codec round trip";
    }
  }
  for (int i = 0; i < 200; ++i) {
    std::vector<std::uint8_t> junk(rng.below(64));
    rng.fill_bytes(junk);
    (void)transport::decode_frame(junk);  // must not crash
  }
  return res;
}

inline CheckResult check_oracle(bool inject) {
  CheckResult res{"oracle", true, ""};
  std::vector<double> g_std{3.0, 4.0, 0.0};
  std::vector<std::vector<double>> grads{{1.5, 2.0, 0.0}};
  auto r = oracle::fltrust_plain(grads, g_std);
  double expect = vec::norm(g_std) / vec::norm(grads[0]);
  if (inject) expect += 0.1;
  if (std::abs(r.weights[0] - expect) > 1e-12) {
    res.pass = false;
    res.detail = "single-client weight collapse";
    return res;
  }
  auto psi = oracle::construct_equivalent_gradient(2.5, 1.7, g_std, 99);
  if (std::abs(vec::dot(psi, g_std) - 2.5) > 1e-9 * 2.5 ||
      std::abs(vec::norm(psi) - 1.7) > 1e-9 * 1.7) {
    res.pass = false;
    res.detail = "psi observables";
  }
  return res;
}

inline CheckResult check_protocol(bool inject) {
  CheckResult res{"protocol", true, ""};
  config::ExperimentConfig cfg;
  cfg.name = "selftest";
  cfg.clients = 3;
  cfg.rounds = 2;
  cfg.selection_fraction = 1.0;
  cfg.features = 2;
  cfg.classes = 3;
  cfg.samples = 60;
  cfg.test_samples = 60;
  cfg.trusted_samples = 30;
  cfg.separation = 5.0;
  cfg.batch_size = 8;
  cfg.kappa1 = 32;
  cfg.insecure_test_keys = true;
  cfg.kappa2 = 24;
  cfg.frac_bits = 4;
  cfg.weight_frac_bits = 8;
  cfg.clip = 1.0;
  cfg.k = 4;
  auto run = [&] {
    auto result = experiment::run_experiment(cfg, /*write_files=*/false);
    if (result.exit_code != 0) throw std::runtime_error(result.error);
    return result;
  };
  auto r1 = run();
  auto r2 = run();
  for (std::size_t i = 0; i < r1.transcripts.size() && res.pass; ++i) {
    auto b1 = r1.transcripts[i].serialize();
    auto b2 = r2.transcripts[i].serialize();
    if (inject && !b2.empty()) b2[b2.size() / 2] ^= 1;
    if (b1 != b2) {
      res.pass = false;
      res.detail = "transcript determinism";
    }
    std::string why;
    if (res.pass && !protocol::audit_privacy(r1.transcripts[i], &why)) {
      res.pass = false;
      res.detail = "privacy audit: " + why;
    }
  }
  return res;
}

}  // namespace detail

// Full invariant suite at tiny parameters. `inject_fault` names a module
// whose check input gets corrupted; the report must then fail with that
// module named.
inline SelftestReport selftest(const std::string& inject_fault = "") {
  SelftestReport report;
  report.checks.push_back(detail::check_paillier(inject_fault == "paillier"));
  report.checks.push_back(detail::check_encoding(inject_fault == "encoding"));
  report.checks.push_back(detail::check_jl(inject_fault == "jl"));
  report.checks.push_back(detail::check_masking(inject_fault == "masking"));
  report.checks.push_back(detail::check_transport(inject_fault == "transport"));
  report.checks.push_back(detail::check_oracle(inject_fault == "oracle"));
  report.checks.push_back(detail::check_protocol(inject_fault == "protocol"));
  report.pass = true;
  for (const auto& c : report.checks) report.pass = report.pass && c.pass;
  return report;
}

}  // namespace duofl::selftest
