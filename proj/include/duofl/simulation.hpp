#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "duofl/protocol.hpp"

namespace duofl::protocol {

enum class Direction : std::uint8_t {
  client_to_s0 = 0,
  s0_to_s1 = 1,
  s1_to_s0 = 2,
  s0_to_clients = 3,
  client_to_s1 = 4,
};

struct LoggedMessage {
  Direction direction;
  transport::Frame frame;
};

struct ClientRoundRecord {
  std::uint32_t client_id = 0;
  double norm_estimate = 0.0;
  double oracle_norm = 0.0;  // true plaintext norm, filled by the harness
  double cosine = 0.0;
  double trust_score = 0.0;
  double weight = 0.0;
  std::uint64_t weight_q = 0;
};

// Complete record of one round: every message in canonical order plus all
// derived values. Re-running the round from the same seeds reproduces it
// bit for bit. Wall-clock and operation counts are carried for metrics but
// excluded from serialization.
struct RoundTranscript {
  std::uint32_t round = 0;
  bool failed = false;
  bool no_trust = false;
  bool no_clients = false;
  std::string error;
  std::vector<std::uint32_t> selected;
  std::vector<LoggedMessage> messages;
  std::vector<ClientRoundRecord> clients;
  std::vector<Residue> weighted_mask_sum;
  std::vector<Residue> global_grad_residues;
  std::vector<double> global_gradient;
  std::uint64_t saturation_count = 0;
  transport::ByteAccounting bytes;

  // not serialized
  double online_ms = 0.0;
  double compression_ms = 0.0;
  double secnorm_ms = 0.0;
  std::uint64_t secnorm_exp_ops = 0;

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'D', 'F', 'T', 'R'});
    append_u32_be(out, 1);  // version
    append_u32_be(out, round);
    std::uint8_t flags = (failed ? 1 : 0) | (no_trust ? 2 : 0) | (no_clients ? 4 : 0);
    out.push_back(flags);
    append_u32_be(out, static_cast<std::uint32_t>(selected.size()));
    for (auto id : selected) append_u32_be(out, id);
    append_u32_be(out, static_cast<std::uint32_t>(messages.size()));
    for (const auto& m : messages) {
      out.push_back(static_cast<std::uint8_t>(m.direction));
      auto bytes_ = transport::encode_frame(m.frame);
      append_u32_be(out, static_cast<std::uint32_t>(bytes_.size()));
      out.insert(out.end(), bytes_.begin(), bytes_.end());
    }
    append_u32_be(out, static_cast<std::uint32_t>(clients.size()));
    for (const auto& c : clients) {
      append_u32_be(out, c.client_id);
      wire::append_double(out, c.norm_estimate);
      wire::append_double(out, c.oracle_norm);
      wire::append_double(out, c.cosine);
      wire::append_double(out, c.trust_score);
      wire::append_double(out, c.weight);
      wire::append_u64(out, c.weight_q);
    }
    append_u32_be(out, static_cast<std::uint32_t>(weighted_mask_sum.size()));
    for (Residue r : weighted_mask_sum) wire::append_u64(out, r);
    append_u32_be(out, static_cast<std::uint32_t>(global_grad_residues.size()));
    for (Residue r : global_grad_residues) wire::append_u64(out, r);
    append_u32_be(out, static_cast<std::uint32_t>(global_gradient.size()));
    for (double v : global_gradient) wire::append_double(out, v);
    wire::append_u64(out, saturation_count);
    wire::append_u64(out, bytes.clients_to_s0);
    wire::append_u64(out, bytes.s0_to_s1);
    wire::append_u64(out, bytes.s1_to_s0);
    wire::append_u64(out, bytes.s0_to_clients);
    return out;
  }
};

// Structural privacy audit: every message type is only ever carried on the
// links the protocol allows. In particular no mask seed or masked
// full-dimension gradient ever flows toward the wrong server.
inline bool audit_privacy(const RoundTranscript& t, std::string* why = nullptr) {
  using transport::MessageType;
  auto fail = [&](const LoggedMessage& m) {
    if (why)
      *why = std::string("illegal direction for ") +
             transport::message_type_name(m.frame.msg_type);
    return false;
  };
  for (const auto& m : t.messages) {
    switch (m.frame.msg_type) {
      case MessageType::INIT_MODEL:
        if (m.direction != Direction::s0_to_clients && m.direction != Direction::s0_to_s1)
          return fail(m);
        break;
      case MessageType::INIT_PROJ_SEED:
        if (m.direction != Direction::s0_to_s1) return fail(m);
        break;
      case MessageType::INIT_PK:
      case MessageType::ENC_MASK_PACK:
      case MessageType::STD_GRAD:
      case MessageType::WEIGHTS_AND_MASKSUM:
        if (m.direction != Direction::s1_to_s0) return fail(m);
        break;
      case MessageType::SEED_REG:
        if (m.direction != Direction::client_to_s1) return fail(m);
        break;
      case MessageType::MASKED_UPDATE:
        if (m.direction != Direction::client_to_s0) return fail(m);
        break;
      case MessageType::NORM_PAIR:
      case MessageType::COS_P0:
        if (m.direction != Direction::s0_to_s1) return fail(m);
        break;
      case MessageType::GLOBAL_GRAD:
        if (m.direction != Direction::s0_to_clients && m.direction != Direction::s0_to_s1)
          return fail(m);
        break;
    }
  }
  return true;
}

// Byzantine gradient substitution, applied before quantization and masking.
// Label flipping poisons shards at setup instead and is a no-op here.
inline void apply_attack_plan(const attacks::AttackPlan& plan, std::uint32_t round,
                              std::span<const std::uint32_t> selected,
                              std::map<std::uint32_t, std::vector<double>>& gradients) {
  using attacks::AttackKind;
  if (plan.kind == AttackKind::none || plan.kind == AttackKind::labelflip) return;
  std::vector<std::uint32_t> byz;
  for (std::uint32_t id : selected)
    if (plan.is_attacker(id)) byz.push_back(id);
  if (byz.empty()) return;
  switch (plan.kind) {
    case AttackKind::signflip:
      for (std::uint32_t id : byz) gradients[id] = attacks::sign_flip(gradients[id]);
      break;
    case AttackKind::scaling:
      for (std::uint32_t id : byz)
        gradients[id] = attacks::scaling_attack(gradients[id], plan.scale_c);
      break;
    case AttackKind::gaussian:
      for (std::uint32_t id : byz)
        gradients[id] =
            attacks::gaussian_attack(gradients[id], mix64(plan.seed, round, id));
      break;
    case AttackKind::minmax:
    case AttackKind::minsum: {
      if (byz.size() < 2) return;  // collusion attacks need partners
      std::vector<std::vector<double>> benign;
      benign.reserve(byz.size());
      for (std::uint32_t id : byz) benign.push_back(gradients[id]);
      auto crafted = plan.kind == AttackKind::minmax
                         ? attacks::min_max(benign, mix64(plan.seed, round))
                         : attacks::min_sum(benign, mix64(plan.seed, round));
      for (std::uint32_t id : byz) gradients[id] = crafted;
      break;
    }
    default:
      break;
  }
}

inline std::vector<learning::Dataset> poison_labels_if_needed(
    std::vector<learning::Dataset> shards, const attacks::AttackPlan& plan) {
  if (plan.kind != attacks::AttackKind::labelflip) return shards;
  for (std::uint32_t id : plan.attacker_ids) {
    if (id < shards.size()) {
      auto flipped = attacks::label_flip(shards[id].labels,
                                         static_cast<int>(shards[id].n_classes));
      shards[id].labels = std::move(flipped);
    }
  }
  return shards;
}

struct SimulationSetup {
  ProtocolParams params;
  learning::ModelSpec model_spec;
  std::vector<learning::Dataset> shards;  // one per client, already poisoned if labelflip
  learning::Dataset trusted;              // D_s, held by S1
  attacks::AttackPlan plan;
  transport::TransportKind transport = transport::TransportKind::memory;
  std::uint64_t data_seed = 1;  // batch sampling stream
};

// Drives clients, S0 and S1 through the channels a round at a time. All
// entities run in one process; the stream transport still pushes every
// frame through a real socket pair.
class Simulation {
 public:
  explicit Simulation(SimulationSetup setup)
      : setup_(std::move(setup)), s0_(setup_.params) {
    const auto& p = setup_.params;
    if (p.n_clients == 0) throw ProtocolError("simulation: need at least one client");
    if (setup_.shards.size() != p.n_clients)
      throw ProtocolError("simulation: shard count != client count");
    if (setup_.model_spec.dim() != p.d)
      throw ProtocolError("simulation: model dim != protocol d");
    s1_ = std::make_unique<ServerS1>(p, setup_.model_spec, setup_.trusted);
    clients_.reserve(p.n_clients);
    for (std::uint32_t i = 0; i < p.n_clients; ++i)
      clients_.emplace_back(i, p, setup_.model_spec, std::move(setup_.shards[i]));
    for (std::uint32_t i = 0; i < p.n_clients; ++i) {
      c_to_s0_.push_back(transport::make_channel(setup_.transport));
      s0_to_c_.push_back(transport::make_channel(setup_.transport));
      c_to_s1_.push_back(transport::make_channel(setup_.transport));
    }
    s0_to_s1_ = transport::make_channel(setup_.transport);
    s1_to_s0_ = transport::make_channel(setup_.transport);
  }

  // Algorithm 2: system setup plus the offline mask precompute. Refuses to
  // start unless the exactness bounds validate.
  void initialize() {
    if (initialized_) return;
    const auto& p = setup_.params;
    ValidationReport validation =
        p.compressed
            ? validate_parameters(p.d, p.k, p.n_clients, p.fp, 2 * p.kappa1)
            : validate_parameters_uncompressed(p.d, p.n_clients, p.fp, 2 * p.kappa1);
    if (!validation.pass)
      throw ProtocolError("initialize: " + validation.summary());

    auto w0 = learning::Model::random_init(setup_.model_spec,
                                           mix64(seed_u64(), 0x6d6f646c))
                  .w;
    transport::Frame model_frame = s0_.init_model_frame(w0);
    for (auto& c : clients_) {
      s0_to_c_[c.id()]->send(model_frame);
      c.install_model(s0_to_c_[c.id()]->recv());
    }
    s0_to_s1_->send(model_frame);
    s1_->install_model(s0_to_s1_->recv());

    s0_to_s1_->send(s0_.proj_seed_frame());
    s1_->install_proj_seed(s0_to_s1_->recv());

    s1_to_s0_->send(s1_->pk_frame());
    s0_.install_pk(s1_to_s0_->recv());

    for (auto& c : clients_) {
      c_to_s1_[c.id()]->send(c.seed_registration());
      s1_->register_seed(c_to_s1_[c.id()]->recv());
    }

    auto t0 = std::chrono::steady_clock::now();
    auto exp0 = paillier::op_counters().exps.load();
    auto packs = s1_->offline_precompute();
    for (auto& f : packs) {
      s1_to_s0_->send(f);
      s0_.store_mask_pack(s1_to_s0_->recv());
    }
    auto t1 = std::chrono::steady_clock::now();
    offline_ms_ = std::chrono::duration<double, std::milli>(t1 - t0).count();
    offline_exp_ops_ = paillier::op_counters().exps.load() - exp0;
    offline_bytes_s1_to_s0_ = s1_to_s0_->bytes_sent();

    for (auto& ch : c_to_s0_) ch->reset_counters();
    for (auto& ch : s0_to_c_) ch->reset_counters();
    s0_to_s1_->reset_counters();
    s1_to_s0_->reset_counters();
    initialized_ = true;
  }

  RoundTranscript run_round(std::uint32_t round) {
    if (!initialized_) initialize();
    auto selected = select_clients(setup_.params, round);
    std::map<std::uint32_t, std::vector<double>> gradients;
    try {
      // Local training, with Byzantine substitution before masking.
      for (std::uint32_t id : selected)
        gradients[id] = clients_[id].compute_local_gradient(round, setup_.data_seed);
      apply_attack_plan(setup_.plan, round, selected, gradients);
    } catch (const std::exception& e) {
      RoundTranscript tr;
      tr.round = round;
      tr.selected = selected;
      tr.failed = true;
      tr.error = e.what();
      return tr;
    }
    return run_round_with(round, gradients);
  }

  // Test hook: run one round with the submitted gradients supplied directly.
  RoundTranscript run_round_with(std::uint32_t round,
                                 const std::map<std::uint32_t, std::vector<double>>& gradients) {
    if (!initialized_) initialize();
    const auto& p = setup_.params;
    RoundTranscript tr;
    tr.round = round;
    tr.selected = select_clients(p, round);
    if (tr.selected.empty()) {
      tr.no_clients = true;
      return tr;
    }
    auto bytes_before = snapshot_bytes();
    std::uint64_t sat_before = total_saturation();
    auto t_start = std::chrono::steady_clock::now();
    try {
      std::map<std::uint32_t, double> oracle_norms;
      for (std::uint32_t id : tr.selected)
        oracle_norms[id] = vec::norm(gradients.at(id));

      for (std::uint32_t id : tr.selected) {
        auto f = clients_[id].masked_update(round, gradients.at(id));
        c_to_s0_[id]->send(f);
        auto received = c_to_s0_[id]->recv();
        s0_.receive_masked_update(received);
        tr.messages.push_back({Direction::client_to_s0, std::move(received)});
      }

      {
        auto f = s1_->std_grad_frame(round);
        s1_to_s0_->send(f);
        auto received = s1_to_s0_->recv();
        s0_.receive_std_grad(received);
        tr.messages.push_back({Direction::s1_to_s0, std::move(received)});
      }

      {
        auto tc0 = std::chrono::steady_clock::now();
        for (std::uint32_t id : tr.selected) s0_.compress_update(id);
        auto tc1 = std::chrono::steady_clock::now();
        tr.compression_ms = std::chrono::duration<double, std::milli>(tc1 - tc0).count();
      }

      {
        auto exp0 = paillier::op_counters().exps.load();
        auto t0 = std::chrono::steady_clock::now();
        for (std::uint32_t id : tr.selected) {
          auto f = s0_.sec_norm_frame(id, round);
          s0_to_s1_->send(f);
          auto received = s0_to_s1_->recv();
          s1_->handle_norm_pair(received);
          tr.messages.push_back({Direction::s0_to_s1, std::move(received)});
        }
        auto t1 = std::chrono::steady_clock::now();
        tr.secnorm_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        tr.secnorm_exp_ops = paillier::op_counters().exps.load() - exp0;
      }

      for (std::uint32_t id : tr.selected) {
        auto f = s0_.sec_cos_frame(id, round);
        s0_to_s1_->send(f);
        auto received = s0_to_s1_->recv();
        s1_->handle_cos_p0(received);
        tr.messages.push_back({Direction::s0_to_s1, std::move(received)});
      }

      transport::Frame weights_received;
      {
        auto f = s1_->weights_frame(round, tr.selected);
        s1_to_s0_->send(f);
        weights_received = s1_to_s0_->recv();
        tr.messages.push_back({Direction::s1_to_s0, weights_received});
      }
      tr.no_trust = s1_->no_trust();

      auto global = s0_.aggregate_frame(weights_received, round);
      for (auto& c : clients_) {
        s0_to_c_[c.id()]->send(global);
        c.apply_global(s0_to_c_[c.id()]->recv());
      }
      s0_to_s1_->send(global);
      s1_->apply_global(s0_to_s1_->recv());
      tr.messages.push_back({Direction::s0_to_clients, global});

      for (std::uint32_t id : tr.selected) {
        const auto& rec = s1_->record(id);
        tr.clients.push_back({id, rec.norm_estimate, oracle_norms[id], rec.cosine,
                              rec.trust_score, rec.weight, rec.weight_q});
      }
      auto parsed = wire::parse_weights(weights_received.payload, p.fp);
      tr.weighted_mask_sum = std::move(parsed.mask_sum.residues);
      std::size_t offset = 0;
      QuantizedVector gg = quantized_from_bytes(global.payload, offset, p.fp);
      tr.global_grad_residues = gg.residues;
      Modulus q = p.modulus();
      double descale = std::ldexp(
          1.0, -static_cast<int>(p.fp.frac_bits + p.fp.weight_frac_bits));
      tr.global_gradient.reserve(gg.dim());
      for (Residue r : gg.residues)
        tr.global_gradient.push_back(static_cast<double>(q.center_lift(r)) * descale);
    } catch (const std::exception& e) {
      tr.failed = true;
      tr.error = e.what();
    }
    auto t_end = std::chrono::steady_clock::now();
    tr.online_ms = std::chrono::duration<double, std::milli>(t_end - t_start).count();
    tr.saturation_count = total_saturation() - sat_before;
    auto bytes_after = snapshot_bytes();
    tr.bytes.clients_to_s0 = bytes_after.clients_to_s0 - bytes_before.clients_to_s0;
    tr.bytes.s0_to_s1 = bytes_after.s0_to_s1 - bytes_before.s0_to_s1;
    tr.bytes.s1_to_s0 = bytes_after.s1_to_s0 - bytes_before.s1_to_s0;
    tr.bytes.s0_to_clients = bytes_after.s0_to_clients - bytes_before.s0_to_clients;
    return tr;
  }

  std::vector<RoundTranscript> run_all() {
    initialize();
    std::vector<RoundTranscript> out;
    out.reserve(setup_.params.rounds);
    for (std::uint32_t t = 0; t < setup_.params.rounds; ++t)
      out.push_back(run_round(t));
    return out;
  }

  const learning::Model& global_model() const { return clients_.front().model(); }
  const std::vector<ClientNode>& clients() const { return clients_; }
  ClientNode& client(std::uint32_t id) { return clients_.at(id); }
  const ServerS0& s0() const { return s0_; }
  const ServerS1& s1() const { return *s1_; }
  double offline_ms() const { return offline_ms_; }
  std::uint64_t offline_exp_ops() const { return offline_exp_ops_; }
  std::uint64_t offline_bytes_s1_to_s0() const { return offline_bytes_s1_to_s0_; }
  const ProtocolParams& params() const { return setup_.params; }

 private:
  std::uint64_t seed_u64() const {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(setup_.params.protocol_seed[i]) << (8 * i);
    return v;
  }

  transport::ByteAccounting snapshot_bytes() const {
    transport::ByteAccounting b;
    for (const auto& ch : c_to_s0_) b.clients_to_s0 += ch->bytes_sent();
    for (const auto& ch : s0_to_c_) b.s0_to_clients += ch->bytes_sent();
    b.s0_to_s1 = s0_to_s1_->bytes_sent();
    b.s1_to_s0 = s1_to_s0_->bytes_sent();
    return b;
  }

  std::uint64_t total_saturation() const {
    std::uint64_t s = 0;
    for (const auto& c : clients_) s += c.saturation_count();
    return s;
  }

  SimulationSetup setup_;
  ServerS0 s0_;
  std::unique_ptr<ServerS1> s1_;
  std::vector<ClientNode> clients_;
  std::vector<std::unique_ptr<transport::Channel>> c_to_s0_;
  std::vector<std::unique_ptr<transport::Channel>> s0_to_c_;
  std::vector<std::unique_ptr<transport::Channel>> c_to_s1_;
  std::unique_ptr<transport::Channel> s0_to_s1_;
  std::unique_ptr<transport::Channel> s1_to_s0_;
  bool initialized_ = false;
  double offline_ms_ = 0.0;
  std::uint64_t offline_exp_ops_ = 0;
  std::uint64_t offline_bytes_s1_to_s0_ = 0;
};

}  // namespace duofl::protocol
