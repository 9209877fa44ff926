#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "duofl/attacks.hpp"
#include "duofl/encoding.hpp"
#include "duofl/jl.hpp"
#include "duofl/learning.hpp"
#include "duofl/masking.hpp"
#include "duofl/oracle.hpp"
#include "duofl/paillier.hpp"
#include "duofl/rng.hpp"
#include "duofl/transport.hpp"
#include "duofl/vecmath.hpp"

namespace duofl::protocol {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrityError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

class ClientError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

// Public parameters every entity is configured with out of band;
// seeds and keys still travel as messages during initialization.
struct ProtocolParams {
  std::uint32_t n_clients = 0;
  std::uint32_t rounds = 1;
  double selection_fraction = 1.0;
  FixedPointParams fp;
  std::uint32_t d = 0;  // model dimension
  std::uint32_t k = 0;  // compressed dimension (ignored when !compressed)
  bool compressed = true;
  unsigned kappa1 = 512;
  bool insecure_test_keys = false;
  double eta = 0.1;
  std::uint32_t batch_size = 32;
  bool force_uniform_weights = false;  // test hook: FedAvg recovery
  Seed32 protocol_seed{};

  Modulus modulus() const { return fp.modulus(); }
  std::uint32_t compressed_dim() const { return compressed ? k : d; }
};

namespace tags {
inline constexpr std::uint64_t kMaskSeed = 0x01;
inline constexpr std::uint64_t kProjSeed = 0x02;
inline constexpr std::uint64_t kPaillier = 0x03;
inline constexpr std::uint64_t kSelection = 0x04;
inline constexpr std::uint64_t kModelInit = 0x05;
inline constexpr std::uint64_t kEncryption = 0x06;
}  // namespace tags

// Deterministic public selection: every entity derives the same subset.
inline std::vector<std::uint32_t> select_clients(const ProtocolParams& p,
                                                 std::uint32_t round) {
  auto count = static_cast<std::size_t>(
      std::llround(p.selection_fraction * static_cast<double>(p.n_clients)));
  count = std::min<std::size_t>(count, p.n_clients);
  std::vector<std::uint32_t> ids(p.n_clients);
  for (std::uint32_t i = 0; i < p.n_clients; ++i) ids[i] = i;
  if (count == p.n_clients) return ids;
  Rng rng(Rng::derive(p.protocol_seed, tags::kSelection, round));
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + rng.below(p.n_clients - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------
// Wire payloads
// ---------------------------------------------------------------------------

namespace wire {

inline void append_double(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline double read_double(std::span<const std::uint8_t> in, std::size_t& offset) {
  if (offset + 8 > in.size()) throw std::runtime_error("wire: truncated double");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits = (bits << 8) | in[offset + i];
  offset += 8;
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t read_u64(std::span<const std::uint8_t> in, std::size_t& offset) {
  if (offset + 8 > in.size()) throw std::runtime_error("wire: truncated u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | in[offset + i];
  offset += 8;
  return v;
}

inline std::vector<std::uint8_t> model_payload(std::span<const double> w) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 8 * w.size());
  append_u32_be(out, static_cast<std::uint32_t>(w.size()));
  for (double v : w) append_double(out, v);
  return out;
}

inline std::vector<double> parse_model(std::span<const std::uint8_t> in) {
  std::size_t offset = 0;
  std::uint32_t d = read_u32_be(in, offset);
  std::vector<double> w(d);
  for (auto& v : w) v = read_double(in, offset);
  return w;
}

inline std::vector<std::uint8_t> seed_reg_payload(std::uint32_t client_id,
                                                  const Seed32& seed) {
  std::vector<std::uint8_t> out;
  append_u32_be(out, client_id);
  out.insert(out.end(), seed.begin(), seed.end());
  return out;
}

inline std::pair<std::uint32_t, Seed32> parse_seed_reg(std::span<const std::uint8_t> in) {
  if (in.size() != 36) throw std::runtime_error("wire: bad SEED_REG size");
  std::size_t offset = 0;
  std::uint32_t id = read_u32_be(in, offset);
  Seed32 seed;
  std::copy(in.begin() + 4, in.end(), seed.begin());
  return {id, seed};
}

struct MaskPack {
  std::uint32_t client_id;
  std::vector<paillier::Ciphertext> ciphertexts;
};

inline std::vector<std::uint8_t> mask_pack_payload(std::uint32_t client_id,
                                                   std::span<const paillier::Ciphertext> cts) {
  std::vector<std::uint8_t> out;
  append_u32_be(out, client_id);
  append_u32_be(out, static_cast<std::uint32_t>(cts.size()));
  for (const auto& ct : cts) paillier::append_bigint(out, ct.value);
  return out;
}

inline MaskPack parse_mask_pack(std::span<const std::uint8_t> in) {
  MaskPack pack;
  std::size_t offset = 0;
  pack.client_id = read_u32_be(in, offset);
  std::uint32_t count = read_u32_be(in, offset);
  pack.ciphertexts.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i)
    pack.ciphertexts.push_back(paillier::ciphertext_from_bytes(in, offset));
  return pack;
}

struct NormPair {
  std::uint32_t client_id;
  paillier::Ciphertext c_sum;
  Residue masked_sq_norm;
};

inline std::vector<std::uint8_t> norm_pair_payload(const NormPair& np,
                                                   unsigned residue_bytes) {
  std::vector<std::uint8_t> out;
  append_u32_be(out, np.client_id);
  paillier::append_bigint(out, np.c_sum.value);
  append_residue(out, np.masked_sq_norm, residue_bytes);
  return out;
}

inline NormPair parse_norm_pair(std::span<const std::uint8_t> in, unsigned residue_bytes) {
  NormPair np;
  std::size_t offset = 0;
  np.client_id = read_u32_be(in, offset);
  np.c_sum = paillier::ciphertext_from_bytes(in, offset);
  np.masked_sq_norm = read_residue(in, offset, residue_bytes);
  return np;
}

inline std::vector<std::uint8_t> cos_p0_payload(std::uint32_t client_id, Residue p0,
                                                unsigned residue_bytes) {
  std::vector<std::uint8_t> out;
  append_u32_be(out, client_id);
  append_residue(out, p0, residue_bytes);
  return out;
}

inline std::pair<std::uint32_t, Residue> parse_cos_p0(std::span<const std::uint8_t> in,
                                                      unsigned residue_bytes) {
  std::size_t offset = 0;
  std::uint32_t id = read_u32_be(in, offset);
  Residue p0 = read_residue(in, offset, residue_bytes);
  return {id, p0};
}

struct WeightsAndMaskSum {
  std::vector<std::pair<std::uint32_t, std::uint64_t>> weights;  // (client, omega_q)
  QuantizedVector mask_sum;
};

inline std::vector<std::uint8_t> weights_payload(const WeightsAndMaskSum& w) {
  std::vector<std::uint8_t> out;
  append_u32_be(out, static_cast<std::uint32_t>(w.weights.size()));
  for (const auto& [id, wq] : w.weights) {
    append_u32_be(out, id);
    append_u64(out, wq);
  }
  auto v = quantized_to_bytes(w.mask_sum);
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

inline WeightsAndMaskSum parse_weights(std::span<const std::uint8_t> in,
                                       const FixedPointParams& fp) {
  WeightsAndMaskSum w;
  std::size_t offset = 0;
  std::uint32_t count = read_u32_be(in, offset);
  w.weights.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t id = read_u32_be(in, offset);
    std::uint64_t wq = read_u64(in, offset);
    w.weights.emplace_back(id, wq);
  }
  w.mask_sum = quantized_from_bytes(in, offset, fp);
  return w;
}

}  // namespace wire

// ---------------------------------------------------------------------------
// Protocol arithmetic (free functions so unit tests can drive
// hand-checked toy instances directly, at any modulus)
// ---------------------------------------------------------------------------

struct SecNormS0Out {
  paillier::Ciphertext c_sum;
  Residue masked_sq_norm;
};

// S0 side: ||m*||^2 mod q and Enc(sum_j m*_j r*_j) via homomorphic ops.
inline SecNormS0Out secnorm_s0(std::span<const Residue> masked_compressed,
                               std::span<const paillier::Ciphertext> enc_mask,
                               const paillier::PublicKey& pk, const Modulus& q) {
  if (masked_compressed.size() != enc_mask.size())
    throw std::invalid_argument("secnorm: compressed dimension mismatch");
  SecNormS0Out out;
  out.masked_sq_norm = sum_squares_mod(masked_compressed, q);
  std::vector<paillier::Ciphertext> terms;
  terms.reserve(enc_mask.size());
  for (std::size_t j = 0; j < enc_mask.size(); ++j)
    terms.push_back(
        paillier::scalar_mul(enc_mask[j], Bigint::from_u64(masked_compressed[j]), pk));
  out.c_sum = paillier::add_ct(terms, pk);
  return out;
}

// S1 side: ||g*||^2 = ||m*||^2 + ||r*||^2 - 2 (m* . r*) mod q.
inline Residue secnorm_s1(const paillier::Ciphertext& c_sum, Residue masked_sq_norm,
                          std::span<const Residue> mask_compressed,
                          const paillier::SecretKey& sk, const paillier::PublicKey& pk,
                          const Modulus& q) {
  Bigint dot = paillier::decrypt(c_sum, sk, pk);
  Residue dot_q = q.reduce_big(dot);
  Residue mask_sq = sum_squares_mod(mask_compressed, q);
  Residue twice_dot = q.add(dot_q, dot_q);
  return q.sub(q.add(masked_sq_norm, mask_sq), twice_dot);
}

// S0 side of SecCos: p0 = (g + r) . g_standard mod q.
inline Residue seccos_p0(std::span<const Residue> masked_full,
                         std::span<const Residue> std_grad_q, const Modulus& q) {
  return dot_mod(masked_full, std_grad_q, q);
}

// S1 side: centered lift of p0 - p1, the exact integer g~ . g~_standard.
inline std::int64_t seccos_inner_lift(Residue p0, std::span<const Residue> mask_full,
                                      std::span<const Residue> std_grad_q,
                                      const Modulus& q) {
  Residue p1 = dot_mod(mask_full, std_grad_q, q);
  return q.center_lift(q.sub(p0, p1));
}

// ---------------------------------------------------------------------------
// Entities
// ---------------------------------------------------------------------------

class ClientNode {
 public:
  ClientNode(std::uint32_t id, const ProtocolParams& params,
             learning::ModelSpec model_spec, learning::Dataset shard)
      : id_(id),
        params_(params),
        model_{model_spec, {}},
        shard_(std::move(shard)),
        q_(params.modulus()) {
    mask_seed_.client_id = id;
    mask_seed_.seed = Rng::derive(params.protocol_seed, tags::kMaskSeed, id);
  }

  std::uint32_t id() const { return id_; }
  const masking::MaskSeed& mask_seed() const { return mask_seed_; }
  const learning::Model& model() const { return model_; }
  const learning::Dataset& shard() const { return shard_; }
  std::uint64_t saturation_count() const { return saturation_count_; }

  void replace_shard(learning::Dataset shard) { shard_ = std::move(shard); }

  transport::Frame seed_registration() const {
    return {transport::MessageType::SEED_REG, 0, id_,
            wire::seed_reg_payload(id_, mask_seed_.seed)};
  }

  void install_model(const transport::Frame& f) {
    model_.w = wire::parse_model(f.payload);
    if (model_.w.size() != params_.d)
      throw ProtocolError("client: model dimension mismatch");
  }

  std::vector<double> compute_local_gradient(std::uint32_t round,
                                             std::uint64_t data_seed) const {
    auto g = learning::compute_gradient(model_, shard_, params_.batch_size,
                                        mix64(data_seed, id_, round));
    if (!vec::all_finite(g)) throw ClientError("client: non-finite gradient");
    return g;
  }

  transport::Frame masked_update(std::uint32_t round, std::span<const double> gradient) {
    if (!vec::all_finite(gradient)) throw ClientError("client: non-finite gradient");
    QuantizedVector g = encode_vector(gradient, params_.fp, &saturation_count_);
    auto r = masking::derive_mask(mask_seed_, round, params_.d, q_);
    auto masked = masking::apply_mask(g.residues, r, q_);
    QuantizedVector out{std::move(masked), params_.fp};
    return {transport::MessageType::MASKED_UPDATE, round, id_, quantized_to_bytes(out)};
  }

  // W <- W - eta * lift / 2^{f+fw}
  void apply_global(const transport::Frame& f) {
    std::size_t offset = 0;
    QuantizedVector v = quantized_from_bytes(f.payload, offset, params_.fp);
    if (v.dim() != params_.d) throw ProtocolError("client: global gradient dim mismatch");
    double descale =
        std::ldexp(1.0, -static_cast<int>(params_.fp.frac_bits +
                                          params_.fp.weight_frac_bits));
    for (std::size_t j = 0; j < v.dim(); ++j)
      model_.w[j] -=
          params_.eta * (static_cast<double>(q_.center_lift(v.residues[j])) * descale);
  }

 private:
  std::uint32_t id_;
  ProtocolParams params_;
  learning::Model model_;
  learning::Dataset shard_;
  masking::MaskSeed mask_seed_;
  Modulus q_;
  std::uint64_t saturation_count_ = 0;
};

// Aggregation server. Holds the projection matrix, the Paillier public key
// and the encrypted compressed masks; never a secret key, a mask, or an
// unmasked gradient.
class ServerS0 {
 public:
  explicit ServerS0(const ProtocolParams& params)
      : params_(params), q_(params.modulus()) {
    proj_seed_ = Rng::derive(params.protocol_seed, tags::kProjSeed);
    if (params_.compressed)
      matrix_ = jl::sample_matrix(proj_seed_, params_.k, params_.d);
  }

  transport::Frame proj_seed_frame() const {
    std::vector<std::uint8_t> payload(proj_seed_.begin(), proj_seed_.end());
    return {transport::MessageType::INIT_PROJ_SEED, 0, transport::kServerS0Id, payload};
  }

  transport::Frame init_model_frame(std::span<const double> w0) const {
    return {transport::MessageType::INIT_MODEL, 0, transport::kServerS0Id,
            wire::model_payload(w0)};
  }

  void install_pk(const transport::Frame& f) {
    std::size_t offset = 0;
    pk_ = paillier::public_key_from_bytes(f.payload, offset);
  }

  void store_mask_pack(const transport::Frame& f) {
    std::size_t offset = 0;
    std::uint32_t client_id = read_u32_be(f.payload, offset);
    mask_packs_[pack_key(client_id, f.round)] = f.payload;
  }

  void receive_masked_update(const transport::Frame& f) {
    std::size_t offset = 0;
    QuantizedVector v = quantized_from_bytes(f.payload, offset, params_.fp);
    if (v.dim() != params_.d) throw ProtocolError("s0: masked update dim mismatch");
    round_updates_[f.sender_id] = std::move(v.residues);
  }

  void receive_std_grad(const transport::Frame& f) {
    std::size_t offset = 0;
    QuantizedVector v = quantized_from_bytes(f.payload, offset, params_.fp);
    if (v.dim() != params_.d) throw ProtocolError("s0: std grad dim mismatch");
    std_grad_ = std::move(v.residues);
  }

  // Algorithm 1's dimension-compression step, run before SecNorm.
  void compress_update(std::uint32_t client_id) {
    if (!params_.compressed) return;
    compressed_updates_[client_id] = jl::project_mod_q(matrix_, round_update(client_id), q_);
  }

  transport::Frame sec_norm_frame(std::uint32_t client_id, std::uint32_t round) {
    const std::vector<Residue>* compressed;
    if (params_.compressed) {
      auto it = compressed_updates_.find(client_id);
      if (it == compressed_updates_.end())
        throw ProtocolError("s0: update not compressed before SecNorm");
      compressed = &it->second;
    } else {
      compressed = &round_update(client_id);
    }
    auto pack = stored_pack(client_id, round);
    auto out = secnorm_s0(*compressed, pack.ciphertexts, pk(), q_);
    wire::NormPair np{client_id, std::move(out.c_sum), out.masked_sq_norm};
    return {transport::MessageType::NORM_PAIR, round, transport::kServerS0Id,
            wire::norm_pair_payload(np, params_.fp.residue_bytes())};
  }

  transport::Frame sec_cos_frame(std::uint32_t client_id, std::uint32_t round) {
    if (std_grad_.empty()) throw ProtocolError("s0: reference gradient not received");
    Residue p0 = seccos_p0(round_update(client_id), std_grad_, q_);
    return {transport::MessageType::COS_P0, round, transport::kServerS0Id,
            wire::cos_p0_payload(client_id, p0, params_.fp.residue_bytes())};
  }

  // g_global residues: sum_i w~_i (g_i + r_i) - m mod q.
  transport::Frame aggregate_frame(const transport::Frame& weights_frame,
                                   std::uint32_t round) {
    auto w = wire::parse_weights(weights_frame.payload, params_.fp);
    if (w.mask_sum.dim() != params_.d)
      throw ProtocolError("s0: weighted mask sum dim mismatch");
    std::vector<Residue> acc(params_.d, 0);
    for (const auto& [client_id, wq] : w.weights) {
      if (wq == 0) continue;
      const auto& masked = round_update(client_id);
      if (q_.is_native()) {
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += wq * masked[j];
      } else {
        for (std::size_t j = 0; j < acc.size(); ++j)
          acc[j] = q_.add(acc[j], q_.mul(wq, masked[j]));
      }
    }
    for (std::size_t j = 0; j < acc.size(); ++j)
      acc[j] = q_.sub(acc[j], w.mask_sum.residues[j]);
    QuantizedVector out{std::move(acc), params_.fp};
    round_updates_.clear();
    compressed_updates_.clear();
    std_grad_.clear();
    return {transport::MessageType::GLOBAL_GRAD, round, transport::kServerS0Id,
            quantized_to_bytes(out)};
  }

  const paillier::PublicKey& pk() const {
    if (!pk_) throw ProtocolError("s0: public key not installed");
    return *pk_;
  }

  const jl::ProjectionMatrix& matrix() const { return matrix_; }
  const Seed32& proj_seed() const { return proj_seed_; }

  // Test hook: stored offline pack for one (client, round).
  wire::MaskPack stored_pack(std::uint32_t client_id, std::uint32_t round) const {
    auto it = mask_packs_.find(pack_key(client_id, round));
    if (it == mask_packs_.end())
      throw ProtocolError("s0: missing encrypted mask pack for client " +
                          std::to_string(client_id));
    return wire::parse_mask_pack(it->second);
  }

 private:
  static std::uint64_t pack_key(std::uint32_t client, std::uint32_t round) {
    return (static_cast<std::uint64_t>(client) << 32) | round;
  }

  const std::vector<Residue>& round_update(std::uint32_t client_id) const {
    auto it = round_updates_.find(client_id);
    if (it == round_updates_.end())
      throw ProtocolError("s0: no masked update from client " + std::to_string(client_id));
    return it->second;
  }

  ProtocolParams params_;
  Modulus q_;
  Seed32 proj_seed_{};
  jl::ProjectionMatrix matrix_;
  std::optional<paillier::PublicKey> pk_;
  // Serialized pack payloads keyed by (client, round); parsed lazily.
  std::map<std::uint64_t, std::vector<std::uint8_t>> mask_packs_;
  std::map<std::uint32_t, std::vector<Residue>> round_updates_;
  std::map<std::uint32_t, std::vector<Residue>> compressed_updates_;
  std::vector<Residue> std_grad_;
};

// Defence server. Holds the Paillier key pair, every client's mask seed and
// the trusted dataset; never sees a full-dimension masked gradient.
class ServerS1 {
 public:
  ServerS1(const ProtocolParams& params, learning::ModelSpec model_spec,
           learning::Dataset trusted)
      : params_(params),
        q_(params.modulus()),
        model_{model_spec, {}},
        trusted_(std::move(trusted)) {
    if (trusted_.size() == 0) throw ProtocolError("s1: empty trusted dataset");
    Rng key_rng(Rng::derive(params.protocol_seed, tags::kPaillier));
    keys_ = paillier::keygen(params.kappa1, key_rng, params.insecure_test_keys);
  }

  transport::Frame pk_frame() const {
    return {transport::MessageType::INIT_PK, 0, transport::kServerS1Id,
            paillier::public_key_to_bytes(keys_.pk)};
  }

  void install_proj_seed(const transport::Frame& f) {
    if (f.payload.size() != 32) throw ProtocolError("s1: bad projection seed size");
    std::copy(f.payload.begin(), f.payload.end(), proj_seed_.begin());
    if (params_.compressed)
      matrix_ = jl::sample_matrix(proj_seed_, params_.k, params_.d);
  }

  void install_model(const transport::Frame& f) {
    model_.w = wire::parse_model(f.payload);
    if (model_.w.size() != params_.d) throw ProtocolError("s1: model dimension mismatch");
  }

  void register_seed(const transport::Frame& f) {
    auto [id, seed] = wire::parse_seed_reg(f.payload);
    if (mask_seeds_.count(id)) throw ProtocolError("s1: duplicate client id");
    mask_seeds_[id] = masking::MaskSeed{id, seed};
  }

  std::size_t registered_clients() const { return mask_seeds_.size(); }

  // Offline phase: for every client and round, derive the mask, compress,
  // encrypt componentwise, and emit the pack for S0. The compressed masks
  // are kept for SecNorm's ||r*||^2. Each (client, round) pack draws its
  // encryption randomness from its own derived stream, so the work splits
  // across threads without changing any byte of the output.
  std::vector<transport::Frame> offline_precompute(unsigned threads = 2) {
    struct Job {
      std::uint32_t client;
      std::uint32_t round;
      masking::MaskSeed seed;
    };
    std::vector<Job> jobs;
    jobs.reserve(static_cast<std::size_t>(mask_seeds_.size()) * params_.rounds);
    for (const auto& [id, seed] : mask_seeds_)
      for (std::uint32_t t = 0; t < params_.rounds; ++t) jobs.push_back({id, t, seed});

    std::vector<transport::Frame> frames(jobs.size());
    std::vector<std::vector<Residue>> kept(jobs.size());
    auto work = [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const Job& job = jobs[i];
        auto r = masking::derive_mask(job.seed, job.round, params_.d, q_);
        std::vector<Residue> r_star =
            params_.compressed ? jl::project_mod_q(matrix_, r, q_) : std::move(r);
        std::vector<Bigint> plain;
        plain.reserve(r_star.size());
        for (Residue v : r_star) plain.push_back(Bigint::from_u64(v));
        Rng rng(Rng::derive(params_.protocol_seed, tags::kEncryption,
                            (static_cast<std::uint64_t>(job.client) << 32) | job.round));
        auto cts = paillier::encrypt_vector(plain, keys_.pk, rng);
        frames[i] = {transport::MessageType::ENC_MASK_PACK, job.round,
                     transport::kServerS1Id, wire::mask_pack_payload(job.client, cts)};
        kept[i] = std::move(r_star);
      }
    };
    if (threads <= 1 || jobs.size() < 4) {
      work(0, jobs.size());
    } else {
      std::vector<std::thread> pool;
      std::size_t per = (jobs.size() + threads - 1) / threads;
      for (unsigned w = 0; w < threads; ++w) {
        std::size_t begin = std::min(jobs.size(), w * per);
        std::size_t end = std::min(jobs.size(), begin + per);
        if (begin < end) pool.emplace_back(work, begin, end);
      }
      for (auto& th : pool) th.join();
    }
    for (std::size_t i = 0; i < jobs.size(); ++i)
      compressed_masks_[pack_key(jobs[i].client, jobs[i].round)] = std::move(kept[i]);
    return frames;
  }

  transport::Frame std_grad_frame(std::uint32_t round) {
    auto g = learning::full_gradient(model_, trusted_);
    QuantizedVector gq = encode_vector(g, params_.fp, nullptr);
    std_grad_ = gq.residues;
    std_grad_real_ = decode_vector(gq);
    norm_std_ = vec::norm(std_grad_real_);
    if (norm_std_ == 0.0) throw ProtocolError("s1: degenerate reference gradient");
    round_records_.clear();
    return {transport::MessageType::STD_GRAD, round, transport::kServerS1Id,
            quantized_to_bytes(gq)};
  }

  void handle_norm_pair(const transport::Frame& f) {
    auto np = wire::parse_norm_pair(f.payload, params_.fp.residue_bytes());
    const auto& r_star = compressed_mask(np.client_id, f.round);
    Residue sq = secnorm_s1(np.c_sum, np.masked_sq_norm, r_star, keys_.sk, keys_.pk, q_);
    double norm = params_.compressed
                      ? jl::norm_estimate_from_projection(sq, params_.k, params_.fp, q_)
                      : jl::norm_from_squared_lift(sq, params_.fp, q_);
    round_records_[np.client_id].norm_estimate = norm;
    round_records_[np.client_id].has_norm = true;
  }

  void handle_cos_p0(const transport::Frame& f) {
    auto [client_id, p0] = wire::parse_cos_p0(f.payload, params_.fp.residue_bytes());
    auto it = mask_seeds_.find(client_id);
    if (it == mask_seeds_.end()) throw ProtocolError("s1: unknown client in COS_P0");
    auto& rec = round_records_[client_id];
    if (!rec.has_norm) throw ProtocolError("s1: COS_P0 before norm for client " +
                                           std::to_string(client_id));
    auto r = masking::derive_mask(it->second, f.round, params_.d, q_);
    std::int64_t inner = seccos_inner_lift(p0, r, std_grad_, q_);
    double inner_real =
        static_cast<double>(inner) /
        std::ldexp(1.0, 2 * static_cast<int>(params_.fp.frac_bits));
    rec.inner = inner_real;
    rec.cosine = oracle::cosine_from(inner_real, rec.norm_estimate, norm_std_);
    rec.has_cos = true;
  }

  // Weight computation plus the weighted mask sum m = sum_i w~_i r_i.
  transport::Frame weights_frame(std::uint32_t round,
                                 std::span<const std::uint32_t> selected) {
    std::vector<double> cosines, norms;
    cosines.reserve(selected.size());
    norms.reserve(selected.size());
    for (std::uint32_t id : selected) {
      auto it = round_records_.find(id);
      if (it == round_records_.end() || !it->second.has_cos)
        throw ProtocolError("s1: missing metrics for client " + std::to_string(id));
      cosines.push_back(it->second.cosine);
      norms.push_back(it->second.norm_estimate);
    }
    oracle::TrustWeights tw;
    if (params_.force_uniform_weights) {
      tw.trust_scores.assign(selected.size(), 1.0);
      tw.weights.assign(selected.size(),
                        1.0 / static_cast<double>(selected.size()));
    } else {
      tw = oracle::fltrust_weights(cosines, norms, norm_std_);
    }
    no_trust_ = tw.no_trust;

    wire::WeightsAndMaskSum out;
    std::vector<Residue> mask_sum(params_.d, 0);
    double wscale = params_.fp.weight_scale();
    std::uint64_t budget = 0;
    for (std::size_t idx = 0; idx < selected.size(); ++idx) {
      std::uint32_t id = selected[idx];
      auto& rec = round_records_[id];
      rec.trust_score = tw.trust_scores[idx];
      rec.weight = tw.weights[idx];
      rec.weight_q = static_cast<std::uint64_t>(std::llround(tw.weights[idx] * wscale));
      budget += rec.weight_q;
      out.weights.emplace_back(id, rec.weight_q);
      if (rec.weight_q != 0) {
        auto r = masking::derive_mask(mask_seeds_.at(id), round, params_.d, q_);
        if (q_.is_native()) {
          for (std::size_t j = 0; j < mask_sum.size(); ++j)
            mask_sum[j] += rec.weight_q * r[j];
        } else {
          for (std::size_t j = 0; j < mask_sum.size(); ++j)
            mask_sum[j] = q_.add(mask_sum[j], q_.mul(rec.weight_q, r[j]));
        }
      }
    }
    // Bound (c) certifies lifts only up to a total weight of n * 2^fw.
    std::uint64_t limit = static_cast<std::uint64_t>(params_.n_clients)
                          << params_.fp.weight_frac_bits;
    if (budget > limit)
      throw IntegrityError("s1: aggregation weights exceed the validated budget");
    out.mask_sum = QuantizedVector{std::move(mask_sum), params_.fp};
    return {transport::MessageType::WEIGHTS_AND_MASKSUM, round, transport::kServerS1Id,
            wire::weights_payload(out)};
  }

  void apply_global(const transport::Frame& f) {
    std::size_t offset = 0;
    QuantizedVector v = quantized_from_bytes(f.payload, offset, params_.fp);
    double descale =
        std::ldexp(1.0, -static_cast<int>(params_.fp.frac_bits +
                                          params_.fp.weight_frac_bits));
    for (std::size_t j = 0; j < v.dim(); ++j)
      model_.w[j] -=
          params_.eta * (static_cast<double>(q_.center_lift(v.residues[j])) * descale);
  }

  struct ClientRecord {
    double norm_estimate = 0.0;
    double inner = 0.0;
    double cosine = 0.0;
    double trust_score = 0.0;
    double weight = 0.0;
    std::uint64_t weight_q = 0;
    bool has_norm = false;
    bool has_cos = false;
  };

  const ClientRecord& record(std::uint32_t client_id) const {
    return round_records_.at(client_id);
  }
  bool no_trust() const { return no_trust_; }
  double norm_std() const { return norm_std_; }
  const learning::Model& model() const { return model_; }
  const paillier::KeyPair& keys() const { return keys_; }  // test-only inspection
  const std::vector<Residue>& compressed_mask(std::uint32_t client,
                                              std::uint32_t round) const {
    auto it = compressed_masks_.find(pack_key(client, round));
    if (it == compressed_masks_.end())
      throw ProtocolError("s1: missing compressed mask");
    return it->second;
  }

 private:
  static std::uint64_t pack_key(std::uint32_t client, std::uint32_t round) {
    return (static_cast<std::uint64_t>(client) << 32) | round;
  }

  ProtocolParams params_;
  Modulus q_;
  learning::Model model_;
  learning::Dataset trusted_;
  paillier::KeyPair keys_;
  Seed32 proj_seed_{};
  jl::ProjectionMatrix matrix_;
  std::map<std::uint32_t, masking::MaskSeed> mask_seeds_;
  std::map<std::uint64_t, std::vector<Residue>> compressed_masks_;
  std::map<std::uint32_t, ClientRecord> round_records_;
  std::vector<Residue> std_grad_;
  std::vector<double> std_grad_real_;
  double norm_std_ = 0.0;
  bool no_trust_ = false;
};

}  // namespace duofl::protocol
