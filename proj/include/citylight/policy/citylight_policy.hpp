#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "citylight/nn/param_store.hpp"
#include "citylight/nn/tape.hpp"
#include "citylight/obs/observation.hpp"

namespace citylight::policy {

using nn::Tape;
using nn::Tensor;
using nn::Var;

struct PolicyConfig {
  int k = 32;
  int decoder_hidden = 64;
  double distance_norm_m = 1000.0;
  double lane_norm = 4.0;
  double queue_norm = 10.0;
  double slot_lane_norm = 4.0;
  // ablation switches; all on is the full model
  bool relation_projector = true;
  bool connectivity = true;
  bool competitive_aggregator = true;

  void validate() const {
    if (k <= 0 || decoder_hidden <= 0) throw std::invalid_argument("PolicyConfig: k and decoder_hidden must be > 0");
    if (!(distance_norm_m > 0.0) || !(lane_norm > 0.0) || !(queue_norm > 0.0) || !(slot_lane_norm > 0.0)) {
      throw std::invalid_argument("PolicyConfig: normalization constants must be > 0");
    }
  }
};

inline nlohmann::json to_json(const PolicyConfig& c) {
  return {{"k", c.k},
          {"decoder_hidden", c.decoder_hidden},
          {"distance_norm_m", c.distance_norm_m},
          {"lane_norm", c.lane_norm},
          {"queue_norm", c.queue_norm},
          {"slot_lane_norm", c.slot_lane_norm},
          {"relation_projector", c.relation_projector},
          {"connectivity", c.connectivity},
          {"competitive_aggregator", c.competitive_aggregator}};
}

inline PolicyConfig policy_config_from_json(const nlohmann::json& j) {
  PolicyConfig c;
  const auto known = to_json(c);
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("policy config: unknown field '" + key + "'");
  }
  c.k = j.value("k", c.k);
  c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
  c.distance_norm_m = j.value("distance_norm_m", c.distance_norm_m);
  c.lane_norm = j.value("lane_norm", c.lane_norm);
  c.queue_norm = j.value("queue_norm", c.queue_norm);
  c.slot_lane_norm = j.value("slot_lane_norm", c.slot_lane_norm);
  c.relation_projector = j.value("relation_projector", c.relation_projector);
  c.connectivity = j.value("connectivity", c.connectivity);
  c.competitive_aggregator = j.value("competitive_aggregator", c.competitive_aggregator);
  c.validate();
  return c;
}

inline constexpr long kSlots = 4;
inline constexpr long kGroups = 2;
inline constexpr long kGroupSize = 2;
inline constexpr long kNeighborSlots = kGroups * kGroupSize;  // [g0m0, g0m1, g1m0, g1m1]

/// Normalized inputs for B contexts.
struct ContextBatch {
  long B = 0;
  std::array<Tensor, kSlots> ego;        // per slot: B×3
  std::array<Tensor, kSlots> neighbor;   // per slot: (B·4)×3, neighbor row b·4+n
  Tensor relation;                       // (B·4)×1
  Tensor connectivity;                   // (B·4)×2
  std::vector<std::uint8_t> present;     // B·4 neighbor presence
  std::vector<std::uint8_t> action_mask; // B·4
};

/// Slot features (queue/qn, flag, lanes/ln); absent slots stay (−1,−1,−1).
inline std::array<double, 3> normalize_slot(const obs::PhaseObservation& o, int slot, const PolicyConfig& c) {
  if (!o.action_mask[static_cast<std::size_t>(slot)]) return {obs::kPad, obs::kPad, obs::kPad};
  return {o.queue(slot) / c.queue_norm, o.passing(slot), o.lanes(slot) / c.slot_lane_norm};
}

inline ContextBatch make_batch(std::span<const obs::NeighborContext> contexts, const PolicyConfig& c) {
  ContextBatch b;
  b.B = static_cast<long>(contexts.size());
  for (long s = 0; s < kSlots; ++s) {
    b.ego[static_cast<std::size_t>(s)] = Tensor::Zero(b.B, 3);
    b.neighbor[static_cast<std::size_t>(s)] = Tensor::Zero(b.B * kNeighborSlots, 3);
  }
  b.relation = Tensor::Zero(b.B * kNeighborSlots, 1);
  b.connectivity = Tensor::Zero(b.B * kNeighborSlots, 2);
  b.present.assign(static_cast<std::size_t>(b.B * kNeighborSlots), 0);
  b.action_mask.assign(static_cast<std::size_t>(b.B * kSlots), 0);
  for (long i = 0; i < b.B; ++i) {
    const auto& ctx = contexts[static_cast<std::size_t>(i)];
    for (int s = 0; s < kSlots; ++s) {
      const auto f = normalize_slot(ctx.ego, s, c);
      for (int d = 0; d < 3; ++d) b.ego[static_cast<std::size_t>(s)](i, d) = f[static_cast<std::size_t>(d)];
      b.action_mask[static_cast<std::size_t>(i * kSlots + s)] = ctx.ego.action_mask[static_cast<std::size_t>(s)] ? 1 : 0;
    }
    for (long g = 0; g < kGroups; ++g) {
      const auto& members = ctx.groups[static_cast<std::size_t>(g)];
      if (members.size() > static_cast<std::size_t>(kGroupSize)) throw std::invalid_argument("make_batch: group larger than 2");
      for (std::size_t m = 0; m < members.size(); ++m) {
        const long row = i * kNeighborSlots + g * kGroupSize + static_cast<long>(m);
        const auto& e = members[m];
        for (int s = 0; s < kSlots; ++s) {
          const auto f = normalize_slot(e.obs, s, c);
          for (int d = 0; d < 3; ++d) b.neighbor[static_cast<std::size_t>(s)](row, d) = f[static_cast<std::size_t>(d)];
        }
        b.relation(row, 0) = e.relation_s;
        b.connectivity(row, 0) = e.connectivity.distance_m / c.distance_norm_m;
        b.connectivity(row, 1) = e.connectivity.connecting_lane_count / c.lane_norm;
        b.present[static_cast<std::size_t>(row)] = 1;
      }
    }
  }
  return b;
}

/// Intermediate values of one encoder pass, kept for inspection.
struct Encoding {
  Var ego_tokens;     // (B·4)×k after self-attention
  Var x_i;            // B×k
  Var x_r;            // (B·4·T)×k, T = 4 tokens (1 without the relation projector)
  Var x_n;            // (B·4)×k
  Var scores;         // (B·4)×1, a_j
  Var representation; // B×3k
  Tensor group_weights;  // (B·4)×1, s_j
};

struct ActionDistribution {
  std::array<double, 4> probs{};
  std::array<bool, 4> mask{};
};

/// Actor-critic with the neighbor influence encoder and competing-group
/// aggregator. Actor and critic live in one store under "actor/" and
/// "critic/" and share no weights.
class CityLightPolicy {
 public:
  explicit CityLightPolicy(PolicyConfig cfg = {}, std::uint64_t seed = 0) : cfg_(cfg), store_(seed) {
    cfg_.validate();
    for (const char* net : {"actor", "critic"}) add_encoder(net);
    add_head("actor", 4);
    add_head("critic", 1);
  }

  CityLightPolicy(PolicyConfig cfg, nn::ParameterStore store) : cfg_(cfg), store_(std::move(store)) { cfg_.validate(); }

  const PolicyConfig& config() const { return cfg_; }
  PolicyConfig& config() { return cfg_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }

  // ---- batched graph builders --------------------------------------------------

  /// Runs the encoder of `net` ("actor" or "critic") on a batch.
  Encoding encode(Tape& t, const std::string& net, const ContextBatch& b) {
    const long k = cfg_.k;
    Encoding e;
    // ego: per-slot embedding, self-attention, mean pool
    std::array<Var, kSlots> ego_parts;
    for (long s = 0; s < kSlots; ++s) ego_parts[static_cast<std::size_t>(s)] = embed_slot(t, net, s, t.constant(b.ego[static_cast<std::size_t>(s)]));
    const Var ego_tok = nn::interleave_rows(ego_parts);
    e.ego_tokens = self_attention(t, net + "/ego_sa", ego_tok, kSlots);
    e.x_i = nn::block_mean_rows(e.ego_tokens, kSlots);

    // relation-aware neighbor tokens
    std::array<Var, kSlots> nb_parts;
    for (long s = 0; s < kSlots; ++s) {
      nb_parts[static_cast<std::size_t>(s)] = embed_slot(t, net, s, t.constant(b.neighbor[static_cast<std::size_t>(s)]));
    }
    const Var nb_tok = nn::interleave_rows(nb_parts);  // (B·4·4)×k
    long tokens = kSlots;
    if (cfg_.relation_projector) {
      const Var fs = nn::linear(t.constant(b.relation), p(t, net + "/f_S.W"), p(t, net + "/f_S.b"));
      const Var q_in = nn::add(nb_tok, nn::repeat_rows(fs, kSlots));
      const Var ca = nn::block_attention(nn::matmul(q_in, p(t, net + "/rel_ca.Wq")), nn::matmul(nb_tok, p(t, net + "/rel_ca.Wk")),
                                         nn::matmul(nb_tok, p(t, net + "/rel_ca.Wv")), kSlots, kSlots);
      e.x_r = self_attention(t, net + "/rel_sa", ca, kSlots);
    } else {
      e.x_r = nn::block_mean_rows(nb_tok, kSlots);
      tokens = 1;
    }

    // connectivity-informed influence, one query per neighbor
    const Var xi_rep = nn::repeat_rows(e.x_i, kNeighborSlots);
    Var fc = nn::linear(t.constant(b.connectivity), p(t, net + "/f_C.W"), p(t, net + "/f_C.b"));
    if (!cfg_.connectivity) fc = t.constant(Tensor::Zero(b.B * kNeighborSlots, k));
    const Var q = nn::matmul(nn::concat_cols({xi_rep, fc}), p(t, net + "/inf_ca.Wq"));
    e.x_n = nn::block_attention(q, nn::matmul(e.x_r, p(t, net + "/inf_ca.Wk")), nn::matmul(e.x_r, p(t, net + "/inf_ca.Wv")), 1,
                                tokens);

    // attentive pooling within each competing group
    e.scores = nn::mul_scalar(nn::tanh(nn::linear(e.x_n, p(t, net + "/agg.W"), p(t, net + "/agg.b"))), p(t, net + "/agg.c"));
    Var groups;
    if (cfg_.competitive_aggregator) {
      groups = nn::fold_rows(nn::group_aggregate(e.x_n, e.scores, b.present, kGroupSize, &e.group_weights), kGroups);
    } else {
      const Var mean_all = nn::group_mean(e.x_n, b.present, kNeighborSlots);
      groups = nn::concat_cols({mean_all, t.constant(Tensor::Zero(b.B, k))});
    }
    e.representation = nn::concat_cols({e.x_i, groups});
    return e;
  }

  /// Masked log-probabilities, B×4 (absent slots hold 0 and have probability 0).
  Var actor_log_probs(Tape& t, const ContextBatch& b, Encoding* enc = nullptr) {
    Encoding e = encode(t, "actor", b);
    const Var logits = head(t, "actor", e.representation);
    if (enc) *enc = e;
    return nn::masked_log_softmax(logits, b.action_mask);
  }

  /// State values, B×1.
  Var critic_values(Tape& t, const ContextBatch& b, Encoding* enc = nullptr) {
    Encoding e = encode(t, "critic", b);
    if (enc) *enc = e;
    return head(t, "critic", e.representation);
  }

  // ---- single-context conveniences -----------------------------------------------

  ActionDistribution forward_actor(const obs::NeighborContext& ctx) {
    Tape t;
    const auto b = make_batch(std::span<const obs::NeighborContext>(&ctx, 1), cfg_);
    const Tensor& lp = actor_log_probs(t, b).value();
    ActionDistribution d;
    for (std::size_t s = 0; s < 4; ++s) {
      d.mask[s] = b.action_mask[s] != 0;
      d.probs[s] = d.mask[s] ? std::exp(lp(0, static_cast<long>(s))) : 0.0;
    }
    return d;
  }

  double forward_critic(const obs::NeighborContext& ctx) {
    Tape t;
    const auto b = make_batch(std::span<const obs::NeighborContext>(&ctx, 1), cfg_);
    return critic_values(t, b).value()(0, 0);
  }

  // ---- component views (actor weights) --------------------------------------------

  /// Ego tokens after self-attention (4×k) and their mean X_i (1×k).
  std::pair<Tensor, Tensor> embed_ego(const obs::PhaseObservation& o, const std::string& net = "actor") {
    Tape t;
    const Var tok = self_attention(t, net + "/ego_sa", embed_observation(t, net, o), kSlots);
    return {tok.value(), nn::block_mean_rows(tok, kSlots).value()};
  }

  /// X_j^r: 4×k relation-aware tokens of one neighbor.
  Tensor encode_neighbor_relation(const obs::PhaseObservation& o, int relation_s, const std::string& net = "actor") {
    Tape t;
    const Var tok = embed_observation(t, net, o);
    Tensor s(1, 1);
    s(0, 0) = relation_s;
    const Var fs = nn::linear(t.constant(s), p(t, net + "/f_S.W"), p(t, net + "/f_S.b"));
    const Var q_in = nn::add(tok, nn::repeat_rows(fs, kSlots));
    const Var ca = nn::attention(nn::matmul(q_in, p(t, net + "/rel_ca.Wq")), nn::matmul(tok, p(t, net + "/rel_ca.Wk")),
                                 nn::matmul(tok, p(t, net + "/rel_ca.Wv")));
    return self_attention(t, net + "/rel_sa", ca, kSlots).value();
  }

  /// X_j^n (1×k) from relation tokens (T×k), pooled ego X_i (1×k) and raw
  /// connectivity (distance_m, lane_count).
  Tensor encode_influence(const Tensor& x_r, const Tensor& x_i, Connectivity c, const std::string& net = "actor") {
    Tape t;
    Tensor cn(1, 2);
    cn << c.distance_m / cfg_.distance_norm_m, c.connecting_lane_count / cfg_.lane_norm;
    const Var fc = nn::linear(t.constant(cn), p(t, net + "/f_C.W"), p(t, net + "/f_C.b"));
    const Var q = nn::matmul(nn::concat_cols({t.constant(x_i), fc}), p(t, net + "/inf_ca.Wq"));
    const Var xr = t.constant(x_r);
    return nn::attention(q, nn::matmul(xr, p(t, net + "/inf_ca.Wk")), nn::matmul(xr, p(t, net + "/inf_ca.Wv"))).value();
  }

  /// g = Σ softmax(a_j)·X_j^n over one group (rows of `members`); zeros when empty.
  Tensor aggregate_group(const Tensor& members, Tensor* weights = nullptr, const std::string& net = "actor") {
    if (members.rows() == 0) {
      if (weights) *weights = Tensor(0, 1);
      return Tensor::Zero(1, cfg_.k);
    }
    Tape t;
    const Var m = t.constant(members);
    const Var a = nn::mul_scalar(nn::tanh(nn::linear(m, p(t, net + "/agg.W"), p(t, net + "/agg.b"))), p(t, net + "/agg.c"));
    std::vector<std::uint8_t> present(static_cast<std::size_t>(members.rows()), 1);
    return nn::group_aggregate(m, a, present, members.rows(), weights).value();
  }

  // ---- checkpoint ------------------------------------------------------------

  nlohmann::json to_json() const { return store_.to_json({{"policy", policy::to_json(cfg_)}}); }

  static CityLightPolicy from_json(const nlohmann::json& j) {
    return CityLightPolicy(policy_config_from_json(j.at("meta").at("policy")), nn::ParameterStore::from_json(j));
  }

  void save(const std::filesystem::path& path) const { store_.save(path, {{"policy", policy::to_json(cfg_)}}); }
  static CityLightPolicy load(const std::filesystem::path& path) { return from_json(nn::ParameterStore::read_json(path)); }

 private:
  Var p(Tape& t, const std::string& name) { return t.param(store_.get(name)); }

  void dense(const std::string& name, long in, long out, bool bias = true) {
    store_.add_uniform(name + ".W", in, out, in);
    if (bias) store_.add_uniform(name + ".b", 1, out, in);
  }

  void add_encoder(const std::string& net) {
    const long k = cfg_.k;
    for (long s = 0; s < kSlots; ++s) dense(net + "/embed" + std::to_string(s), 3, k);
    dense(net + "/f_S", 1, k);
    dense(net + "/f_C", 2, k);
    for (const char* blk : {"/ego_sa", "/rel_ca", "/rel_sa"}) {
      for (const char* w : {".Wq", ".Wk", ".Wv"}) store_.add_uniform(net + blk + w, k, k, k);
    }
    store_.add_uniform(net + "/inf_ca.Wq", 2 * k, k, 2 * k);
    store_.add_uniform(net + "/inf_ca.Wk", k, k, k);
    store_.add_uniform(net + "/inf_ca.Wv", k, k, k);
    dense(net + "/agg", k, 1);
    store_.add_constant(net + "/agg.c", 1, 1, 1.0);
  }

  void add_head(const std::string& net, long out) {
    dense(net + "/head1", 3 * cfg_.k, cfg_.decoder_hidden);
    dense(net + "/head2", cfg_.decoder_hidden, out);
  }

  Var embed_slot(Tape& t, const std::string& net, long s, Var x) {
    const std::string name = net + "/embed" + std::to_string(s);
    return nn::linear(x, p(t, name + ".W"), p(t, name + ".b"));
  }

  Var embed_observation(Tape& t, const std::string& net, const obs::PhaseObservation& o) {
    std::array<Var, kSlots> parts;
    for (int s = 0; s < kSlots; ++s) {
      const auto f = normalize_slot(o, s, cfg_);
      Tensor x(1, 3);
      x << f[0], f[1], f[2];
      parts[static_cast<std::size_t>(s)] = embed_slot(t, net, s, t.constant(x));
    }
    return nn::interleave_rows(parts);
  }

  Var self_attention(Tape& t, const std::string& blk, Var x, long block) {
    return nn::block_attention(nn::matmul(x, p(t, blk + ".Wq")), nn::matmul(x, p(t, blk + ".Wk")),
                               nn::matmul(x, p(t, blk + ".Wv")), block, block);
  }

  Var head(Tape& t, const std::string& net, Var rep) {
    const Var h = nn::tanh(nn::linear(rep, p(t, net + "/head1.W"), p(t, net + "/head1.b")));
    return nn::linear(h, p(t, net + "/head2.W"), p(t, net + "/head2.b"));
  }

  PolicyConfig cfg_;
  nn::ParameterStore store_;
};

}  // namespace citylight::policy
