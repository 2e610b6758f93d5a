#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "citylight/obs/observation.hpp"
#include "citylight/policy/citylight_policy.hpp"
#include "citylight/sim/world.hpp"

namespace citylight::train {

using policy::CityLightPolicy;

struct TrainerConfig {
  double lr = 5e-4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 1.0;
  int ppo_epochs = 5;
  int minibatch_count = 4;
  int episodes = 100;
  int parallel_envs = 1;
  double alpha = 0.2;
  std::uint64_t seed = 0;
  double max_grad_norm = 10.0;  // <= 0 disables clipping
  bool value_normalization = true;
  bool reward_normalization = false;
  policy::PolicyConfig policy;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("TrainerConfig: gamma must be in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("TrainerConfig: gae_lambda must be in [0, 1]");
    if (!(clip_eps > 0.0)) throw std::invalid_argument("TrainerConfig: clip_eps must be > 0");
    if (!(alpha >= 0.0)) throw std::invalid_argument("TrainerConfig: alpha must be >= 0");
    if (!(lr > 0.0)) throw std::invalid_argument("TrainerConfig: lr must be > 0");
    if (ppo_epochs < 1 || minibatch_count < 1 || episodes < 0 || parallel_envs < 1) {
      throw std::invalid_argument("TrainerConfig: epochs, minibatches and envs must be >= 1, episodes >= 0");
    }
    policy.validate();
  }
};

inline nlohmann::json to_json(const TrainerConfig& c) {
  return {{"lr", c.lr},
          {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_eps", c.clip_eps},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"ppo_epochs", c.ppo_epochs},
          {"minibatch_count", c.minibatch_count},
          {"episodes", c.episodes},
          {"parallel_envs", c.parallel_envs},
          {"alpha", c.alpha},
          {"seed", c.seed},
          {"max_grad_norm", c.max_grad_norm},
          {"value_normalization", c.value_normalization},
          {"reward_normalization", c.reward_normalization},
          {"policy", policy::to_json(c.policy)}};
}

inline TrainerConfig trainer_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{"lr",           "gamma",         "gae_lambda",          "clip_eps",
                                              "entropy_coef", "value_coef",    "ppo_epochs",          "minibatch_count",
                                              "episodes",     "parallel_envs", "alpha",               "seed",
                                              "max_grad_norm", "value_normalization", "reward_normalization", "policy"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("TrainerConfig: unknown field '" + key + "'");
    }
  }
  TrainerConfig c;
  c.lr = j.value("lr", c.lr);
  c.gamma = j.value("gamma", c.gamma);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.clip_eps = j.value("clip_eps", c.clip_eps);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.ppo_epochs = j.value("ppo_epochs", c.ppo_epochs);
  c.minibatch_count = j.value("minibatch_count", c.minibatch_count);
  c.episodes = j.value("episodes", c.episodes);
  c.parallel_envs = j.value("parallel_envs", c.parallel_envs);
  c.alpha = j.value("alpha", c.alpha);
  c.seed = j.value("seed", c.seed);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.value_normalization = j.value("value_normalization", c.value_normalization);
  c.reward_normalization = j.value("reward_normalization", c.reward_normalization);
  if (j.contains("policy")) c.policy = policy::policy_config_from_json(j.at("policy"));
  c.validate();
  return c;
}

// ---- reward -----------------------------------------------------------------------

/// R_i = q_i + α·mean(q_j); R_i = q_i without neighbors.
inline double reward_from_local(double q_i, std::span<const double> q_neighbors, double alpha) {
  if (q_neighbors.empty()) return q_i;
  double s = 0.0;
  for (double q : q_neighbors) s += q;
  return q_i + alpha * (s / static_cast<double>(q_neighbors.size()));
}

/// Local metric: negated mean total queue over the last decision interval.
inline double local_metric(const sim::World& world, std::size_t intersection) {
  return -world.last_interval_queue(intersection);
}

inline double compute_reward(const sim::World& world, std::size_t intersection, double alpha) {
  std::vector<double> nb;
  for (const NeighborLink& l : world.network().neighbors_of(intersection)) nb.push_back(local_metric(world, l.neighbor_index));
  return reward_from_local(local_metric(world, intersection), nb, alpha);
}

// ---- advantages ---------------------------------------------------------------------

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// δ_t = r_t + γV_{t+1} − V_t, A_t = δ_t + γλA_{t+1}, V_T = 0. Returns are A + V.
inline GaeResult gae(std::span<const double> rewards, std::span<const double> values, double gamma, double lambda) {
  if (rewards.size() != values.size()) throw std::invalid_argument("gae: rewards and values differ in length");
  const std::size_t T = rewards.size();
  GaeResult r;
  r.advantages.assign(T, 0.0);
  r.returns.assign(T, 0.0);
  double next_adv = 0.0, next_value = 0.0;
  for (std::size_t i = T; i-- > 0;) {
    const double delta = rewards[i] + gamma * next_value - values[i];
    next_adv = delta + gamma * lambda * next_adv;
    r.advantages[i] = next_adv;
    r.returns[i] = next_adv + values[i];
    next_value = values[i];
  }
  return r;
}

/// In-place standardization to mean 0 and std 1 (population std).
inline void normalize_advantages(std::vector<double>& a) {
  if (a.empty()) return;
  const double n = static_cast<double>(a.size());
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  for (double& x : a) x = sd > 1e-12 ? (x - mean) / sd : x - mean;
}

/// Running mean/variance used to keep critic targets O(1).
class RunningNorm {
 public:
  void update(std::span<const double> xs) {
    for (double x : xs) {
      ++n_;
      const double d = x - mean_;
      mean_ += d / static_cast<double>(n_);
      m2_ += d * (x - mean_);
    }
  }
  double mean() const { return mean_; }
  double std() const { return n_ > 1 ? std::max(std::sqrt(m2_ / static_cast<double>(n_)), 1e-6) : 1.0; }
  double normalize(double x) const { return (x - mean_) / std(); }
  double denormalize(double y) const { return y * std() + mean_; }
  nlohmann::json to_json() const { return {{"n", n_}, {"mean", mean_}, {"m2", m2_}}; }
  void from_json(const nlohmann::json& j) {
    n_ = j.at("n").get<long>();
    mean_ = j.at("mean").get<double>();
    m2_ = j.at("m2").get<double>();
  }

 private:
  long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// ---- rollouts -----------------------------------------------------------------------

struct Transition {
  obs::NeighborContext context;
  int action = 0;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;  // critic output in raw reward units
  bool done = false;
};

/// Transitions of one store, grouped per trajectory (one per agent and env),
/// plus flattened advantages/returns once finalized.
struct RolloutBatch {
  std::vector<std::vector<Transition>> trajectories;
  std::vector<const Transition*> flat;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return flat.size(); }
};

inline void finalize_batch(RolloutBatch& b, double gamma, double lambda) {
  b.flat.clear();
  b.advantages.clear();
  b.returns.clear();
  for (const auto& traj : b.trajectories) {
    std::vector<double> r, v;
    for (const auto& t : traj) {
      r.push_back(t.reward);
      v.push_back(t.value);
    }
    auto g = gae(r, v, gamma, lambda);
    for (std::size_t i = 0; i < traj.size(); ++i) {
      b.flat.push_back(&traj[i]);
      b.advantages.push_back(g.advantages[i]);
      b.returns.push_back(g.returns[i]);
    }
  }
}

/// Policy set with intersection → store assignment (one store per group).
struct PolicySet {
  std::vector<CityLightPolicy> policies;
  std::vector<int> assignment;  // per intersection
  std::vector<RunningNorm> value_norms;

  std::size_t groups() const { return policies.size(); }
};

struct ActStep {
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<obs::NeighborContext> contexts;
};

/// One decision for every intersection of a world. Sampling draws from `rng`;
/// greedy mode takes the most probable present slot (ties to the lowest).
inline ActStep act(PolicySet& ps, const sim::World& world, std::mt19937_64* rng, bool with_values) {
  const std::size_t N = world.network().intersections().size();
  ActStep st;
  st.contexts.reserve(N);
  for (std::size_t i = 0; i < N; ++i) st.contexts.push_back(obs::build_context(world, i));
  st.actions.assign(N, 0);
  st.log_probs.assign(N, 0.0);
  st.values.assign(N, 0.0);
  for (std::size_t g = 0; g < ps.groups(); ++g) {
    std::vector<std::size_t> members;
    std::vector<obs::NeighborContext> ctxs;
    for (std::size_t i = 0; i < N; ++i) {
      if (static_cast<std::size_t>(ps.assignment[i]) == g) {
        members.push_back(i);
        ctxs.push_back(st.contexts[i]);
      }
    }
    if (members.empty()) continue;
    auto& pol = ps.policies[g];
    const auto batch = policy::make_batch(ctxs, pol.config());
    nn::Tape tape;
    const nn::Tensor lp = pol.actor_log_probs(tape, batch).value();
    nn::Tensor v;
    if (with_values) v = pol.critic_values(tape, batch).value();
    for (std::size_t m = 0; m < members.size(); ++m) {
      const long r = static_cast<long>(m);
      int a = -1;
      if (rng) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double x = u(*rng), acc = 0.0;
        for (int s = 0; s < 4; ++s) {
          if (!batch.action_mask[m * 4 + static_cast<std::size_t>(s)]) continue;
          acc += std::exp(lp(r, s));
          a = s;
          if (x < acc) break;
        }
      } else {
        for (int s = 0; s < 4; ++s) {
          if (!batch.action_mask[m * 4 + static_cast<std::size_t>(s)]) continue;
          if (a < 0 || lp(r, s) > lp(r, a)) a = s;
        }
      }
      st.actions[members[m]] = a;
      st.log_probs[members[m]] = lp(r, a);
      if (with_values) {
        const double raw = v(r, 0);
        st.values[members[m]] = ps.value_norms.empty() ? raw : ps.value_norms[g].denormalize(raw);
      }
    }
  }
  return st;
}

/// Runs one episode; when `batches` is given, appends every agent's
/// trajectory to the batch of its store.
inline sim::SimMetrics run_policy_episode(PolicySet& ps, sim::World& world, std::mt19937_64* rng, double alpha,
                                          std::vector<RolloutBatch>* batches, double* mean_reward = nullptr) {
  const std::size_t N = world.network().intersections().size();
  if (ps.assignment.size() != N) throw std::invalid_argument("policy assignment does not match the network");
  std::vector<std::vector<Transition>> traj(N);
  double reward_sum = 0.0;
  long reward_n = 0;
  const int steps = world.config().decisions_per_episode();
  for (int d = 0; d < steps; ++d) {
    ActStep st = act(ps, world, rng, batches != nullptr);
    for (std::size_t i = 0; i < N; ++i) world.apply_action(i, st.actions[i]);
    world.run_interval();
    for (std::size_t i = 0; i < N; ++i) {
      const double r = compute_reward(world, i, alpha);
      reward_sum += r;
      ++reward_n;
      if (batches) {
        traj[i].push_back({std::move(st.contexts[i]), st.actions[i], st.log_probs[i], r, st.values[i], d + 1 == steps});
      }
    }
  }
  if (!world.episode_done()) throw std::logic_error("rollout: episode length does not match the decision count");
  if (batches) {
    for (std::size_t i = 0; i < N; ++i) {
      (*batches)[static_cast<std::size_t>(ps.assignment[i])].trajectories.push_back(std::move(traj[i]));
    }
  }
  if (mean_reward) *mean_reward = reward_n ? reward_sum / static_cast<double>(reward_n) : 0.0;
  return world.finalize_metrics();
}

// ---- PPO ------------------------------------------------------------------------------

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  int updates = 0;
};

struct LossTerms {
  nn::Var total, policy_loss, value_loss, entropy;
  nn::Tensor ratio;
};

/// Builds the PPO loss on a tape for a minibatch: clipped surrogate +
/// value_coef·MSE − entropy_coef·entropy.
inline LossTerms ppo_loss(nn::Tape& t, CityLightPolicy& pol, std::span<const Transition* const> items,
                          std::span<const double> advantages, std::span<const double> value_targets,
                          const TrainerConfig& cfg) {
  std::vector<obs::NeighborContext> ctxs;
  std::vector<int> actions;
  nn::Tensor old_lp(static_cast<long>(items.size()), 1), adv(static_cast<long>(items.size()), 1),
      target(static_cast<long>(items.size()), 1);
  for (std::size_t i = 0; i < items.size(); ++i) {
    ctxs.push_back(items[i]->context);
    actions.push_back(items[i]->action);
    old_lp(static_cast<long>(i), 0) = items[i]->log_prob;
    adv(static_cast<long>(i), 0) = advantages[i];
    target(static_cast<long>(i), 0) = value_targets[i];
  }
  const auto batch = policy::make_batch(ctxs, pol.config());
  LossTerms L;
  const nn::Var logp = pol.actor_log_probs(t, batch);
  const nn::Var lp_a = nn::gather_cols(logp, actions);
  const nn::Var ratio = nn::exp(nn::sub(lp_a, t.constant(old_lp)));
  const nn::Var A = t.constant(adv);
  const nn::Var s1 = nn::mul(ratio, A);
  const nn::Var s2 = nn::mul(nn::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), A);
  L.policy_loss = nn::scale(nn::mean(nn::minimum(s1, s2)), -1.0);
  L.entropy = nn::scale(nn::mean(nn::row_sum(nn::mul(nn::exp(logp), logp))), -1.0);
  const nn::Var v = pol.critic_values(t, batch);
  const nn::Var err = nn::sub(v, t.constant(target));
  L.value_loss = nn::mean(nn::mul(err, err));
  L.total = nn::sub(nn::add(L.policy_loss, nn::scale(L.value_loss, cfg.value_coef)), nn::scale(L.entropy, cfg.entropy_coef));
  L.ratio = ratio.value();
  return L;
}

/// ppo_epochs passes over minibatch_count shuffled minibatches of one store's
/// batch. Advantages are standardized over the whole batch first.
inline PpoStats ppo_update(CityLightPolicy& pol, RolloutBatch& batch, const TrainerConfig& cfg, std::mt19937_64& rng,
                           RunningNorm* value_norm = nullptr) {
  PpoStats stats;
  const std::size_t n = batch.size();
  if (n == 0) return stats;
  std::vector<double> adv = batch.advantages;
  normalize_advantages(adv);
  std::vector<double> targets = batch.returns;
  if (value_norm) {
    value_norm->update(batch.returns);
    for (double& x : targets) x = value_norm->normalize(x);
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  const std::size_t mb_count = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatch_count), n);
  const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t mb = 0; mb < mb_count; ++mb) {
      const std::size_t lo = mb * n / mb_count, hi = (mb + 1) * n / mb_count;
      std::vector<const Transition*> items;
      std::vector<double> a, tg;
      for (std::size_t k = lo; k < hi; ++k) {
        items.push_back(batch.flat[idx[k]]);
        a.push_back(adv[idx[k]]);
        tg.push_back(targets[idx[k]]);
      }
      nn::Tape tape;
      LossTerms L = ppo_loss(tape, pol, items, a, tg, cfg);
      const double total = L.total.value()(0, 0);
      if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "ppo_update: non-finite loss (policy " << L.policy_loss.value()(0, 0) << ", value "
            << L.value_loss.value()(0, 0) << ", entropy " << L.entropy.value()(0, 0) << ") at epoch " << epoch;
        throw nn::NumericError(msg.str());
      }
      pol.store().zero_grad();
      tape.backward(L.total);
      if (cfg.max_grad_norm > 0.0) pol.store().clip_grad_norm(cfg.max_grad_norm);
      pol.store().adam_step(adam);
      stats.policy_loss += L.policy_loss.value()(0, 0);
      stats.value_loss += L.value_loss.value()(0, 0);
      stats.entropy += L.entropy.value()(0, 0);
      double kl = 0.0, clipped = 0.0;
      for (long r = 0; r < L.ratio.rows(); ++r) {
        const double q = L.ratio(r, 0);
        kl += (q - 1.0) - std::log(q);
        clipped += std::abs(q - 1.0) > cfg.clip_eps ? 1.0 : 0.0;
      }
      stats.approx_kl += kl / static_cast<double>(L.ratio.rows());
      stats.clip_fraction += clipped / static_cast<double>(L.ratio.rows());
      ++stats.updates;
    }
  }
  if (stats.updates > 0) {
    const double u = stats.updates;
    stats.policy_loss /= u;
    stats.value_loss /= u;
    stats.entropy /= u;
    stats.approx_kl /= u;
    stats.clip_fraction /= u;
  }
  return stats;
}

// ---- policy-set checkpoints ---------------------------------------------------------------

inline nlohmann::json policy_set_to_json(const PolicySet& ps) {
  nlohmann::json pols = nlohmann::json::array();
  for (const auto& p : ps.policies) pols.push_back(p.to_json());
  nlohmann::json norms = nlohmann::json::array();
  for (const auto& n : ps.value_norms) norms.push_back(n.to_json());
  return {{"format", "citylight-policy-set"}, {"version", 1}, {"assignment", ps.assignment}, {"policies", pols},
          {"value_norms", norms}};
}

inline PolicySet policy_set_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "citylight-policy-set") throw std::runtime_error("checkpoint: not a policy set");
  PolicySet ps;
  for (const auto& p : j.at("policies")) ps.policies.push_back(CityLightPolicy::from_json(p));
  ps.assignment = j.at("assignment").get<std::vector<int>>();
  for (const auto& n : j.at("value_norms")) {
    ps.value_norms.emplace_back();
    ps.value_norms.back().from_json(n);
  }
  return ps;
}

inline void save_policy_set(const PolicySet& ps, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << policy_set_to_json(ps).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

inline PolicySet load_policy_set(const std::filesystem::path& path) {
  return policy_set_from_json(nn::ParameterStore::read_json(path));
}

/// Applies a single-store checkpoint to every intersection of a network.
inline PolicySet universal_for(const PolicySet& trained, std::size_t intersections) {
  if (trained.groups() != 1) throw std::invalid_argument("transfer requires a single universal store");
  PolicySet ps = policy_set_from_json(policy_set_to_json(trained));
  ps.assignment.assign(intersections, 0);
  return ps;
}

// ---- training loop ------------------------------------------------------------------------

struct CurvePoint {
  int episode = 0;
  double mean_reward = 0.0;
  int eval_throughput = 0;
  double eval_att = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  PolicySet best;
  int best_episode = -1;  // -1: initialization
  sim::SimMetrics best_eval;
};

inline std::string curve_csv(std::span<const CurvePoint> curve) {
  std::ostringstream out;
  out.precision(10);
  out << "episode,mean_reward,eval_throughput,eval_att\n";
  for (const auto& p : curve) out << p.episode << ',' << p.mean_reward << ',' << p.eval_throughput << ',' << p.eval_att << '\n';
  return out.str();
}

inline PolicySet make_policy_set(const TrainerConfig& cfg, std::vector<int> assignment) {
  PolicySet ps;
  int groups = 0;
  for (int a : assignment) {
    if (a < 0) throw std::invalid_argument("group assignment must be >= 0");
    groups = std::max(groups, a + 1);
  }
  if (assignment.empty()) groups = 1;
  for (int g = 0; g < groups; ++g) ps.policies.emplace_back(cfg.policy, cfg.seed * 1000003ULL + static_cast<std::uint64_t>(g));
  ps.value_norms.resize(static_cast<std::size_t>(groups));
  ps.assignment = std::move(assignment);
  return ps;
}

struct TrainHooks {
  std::function<void(const CurvePoint&, const std::vector<PpoStats>&)> on_episode;
};

inline bool better_eval(const sim::SimMetrics& a, const sim::SimMetrics& b) {
  return a.throughput > b.throughput || (a.throughput == b.throughput && a.att_s < b.att_s);
}

/// Parameter-shared MAPPO. After each episode's update the policy is evaluated
/// greedily; the best evaluated policy (by throughput, then ATT) is kept.
inline TrainResult train(std::shared_ptr<const RoadNetwork> net, const sim::Demand& demand, const sim::SimConfig& sim_cfg,
                         const TrainerConfig& cfg, std::vector<int> assignment = {}, TrainHooks hooks = {}) {
  cfg.validate();
  nn::tune_allocator();
  const std::size_t N = net->intersections().size();
  if (assignment.empty()) assignment.assign(N, 0);
  if (assignment.size() != N) throw std::invalid_argument("train: assignment size does not match intersections");
  PolicySet ps = make_policy_set(cfg, std::move(assignment));
  std::mt19937_64 rng(cfg.seed);

  TrainResult res;
  {
    // the untrained policy is evaluated as episode 0
    sim::World w(net, demand, sim_cfg);
    double mr = 0.0;
    res.best_eval = run_policy_episode(ps, w, nullptr, cfg.alpha, nullptr, &mr);
    res.best = policy_set_from_json(policy_set_to_json(ps));
    res.curve.push_back({0, mr, res.best_eval.throughput, res.best_eval.att_s});
    if (hooks.on_episode) hooks.on_episode(res.curve.back(), {});
  }
  for (int ep = 1; ep <= cfg.episodes; ++ep) {
    std::vector<RolloutBatch> batches(ps.groups());
    double mean_reward = 0.0;
    for (int e = 0; e < cfg.parallel_envs; ++e) {
      sim::World w(net, demand, sim_cfg);
      double mr = 0.0;
      run_policy_episode(ps, w, &rng, cfg.alpha, &batches, &mr);
      mean_reward += mr / cfg.parallel_envs;
    }
    std::vector<PpoStats> stats;
    for (std::size_t g = 0; g < ps.groups(); ++g) {
      finalize_batch(batches[g], cfg.gamma, cfg.gae_lambda);
      stats.push_back(ppo_update(ps.policies[g], batches[g], cfg, rng, cfg.value_normalization ? &ps.value_norms[g] : nullptr));
    }
    sim::World w(net, demand, sim_cfg);
    const auto m = run_policy_episode(ps, w, nullptr, cfg.alpha, nullptr);
    CurvePoint pt{ep, mean_reward, m.throughput, m.att_s};
    res.curve.push_back(pt);
    if (better_eval(m, res.best_eval)) {
      res.best_eval = m;
      res.best_episode = ep;
      res.best = policy_set_from_json(policy_set_to_json(ps));
    }
    if (hooks.on_episode) hooks.on_episode(pt, stats);
  }
  return res;
}

/// Greedy evaluation of a policy set on one scenario.
inline sim::SimMetrics evaluate(PolicySet& ps, std::shared_ptr<const RoadNetwork> net, const sim::Demand& demand,
                                const sim::SimConfig& sim_cfg, double alpha = 0.0) {
  sim::World w(std::move(net), demand, sim_cfg);
  return run_policy_episode(ps, w, nullptr, alpha, nullptr);
}

}  // namespace citylight::train
