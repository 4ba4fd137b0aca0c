#pragma once

// End-to-end reinforcement fine-tuning loop: sample a group per instruction,
// audit, route by scenario, assemble the objective, update the policy.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "saca/advantage.hpp"
#include "saca/generate.hpp"
#include "saca/grouping.hpp"
#include "saca/objectives.hpp"
#include "saca/policy.hpp"

namespace saca {

struct Toggles {
  bool use_soft_score = true;  // SS: process-score-driven anchor / negative selection
  bool use_afr = true;         // AFR: all-failure rescue
  bool use_rr = true;          // RR: repair resampling
};

struct PoolConfig {
  MapConfig map;
  std::uint64_t seed = 2024;
  int train_maps = 30;
  int heldout_maps = 20;
  int train_episodes_per_map = 4;
  int heldout_episodes_per_map = 1;
};

struct TrainConfig {
  int group_size = 8;
  double eta = 0.5;
  int n_rep = 3;
  int m_neg = 3;
  double lambda_neg = 0.5;  // hard-negative balance between prefix similarity and process gap
  ScorerConfig scorer;
  PerceptionConfig perception;
  AdvantageConfig advantage;
  LossWeights loss;
  AdamWConfig optimizer;
  double max_grad_norm = 1.0;
  int hidden_dim = 32;
  int iterations = 300;
  int episodes_per_iteration = 1;
  int warm_start_iterations = 200;
  int warm_start_episodes = 32;
  double warm_start_lr = 1e-2;
  int eval_every = 10;
  int eval_samples = 8;  // 0 = greedy decoding
  std::uint64_t seed = 0;
  Toggles toggles;
  PoolConfig pool;

  EnvConfig env() const { return {perception, scorer}; }

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw Error(field + ": " + why); };
    if (group_size < 2) fail("group_size", "must be >= 2");
    if (eta < 0 || eta > 1) fail("eta", "must lie in [0, 1]");
    if (n_rep < 1) fail("n_rep", "must be >= 1");
    if (m_neg < 1) fail("m_neg", "must be >= 1");
    if (m_neg > group_size - 1) fail("m_neg", "must be <= group_size - 1");
    if (lambda_neg < 0 || lambda_neg > 1) fail("lambda", "must lie in [0, 1]");
    scorer.validate();
    advantage.validate();
    loss.validate();
    if (!(optimizer.lr > 0)) fail("optimizer.lr", "must be > 0");
    if (optimizer.weight_decay < 0) fail("optimizer.weight_decay", "must be >= 0");
    if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1)) fail("optimizer.beta1", "must lie in [0, 1)");
    if (!(optimizer.beta2 >= 0 && optimizer.beta2 < 1)) fail("optimizer.beta2", "must lie in [0, 1)");
    if (hidden_dim < 1) fail("hidden_dim", "must be >= 1");
    if (iterations < 0) fail("iterations", "must be >= 0");
    if (episodes_per_iteration < 1) fail("episodes_per_iteration", "must be >= 1");
    if (warm_start_iterations < 0) fail("warm_start_iterations", "must be >= 0");
    if (warm_start_episodes < 1) fail("warm_start_episodes", "must be >= 1");
    if (eval_every < 1) fail("eval_every", "must be >= 1");
    if (eval_samples < 0) fail("eval_samples", "must be >= 0");
    if (perception.vis_radius <= 0) fail("perception.vis_radius", "must be > 0");
    if (perception.corridor_width < 0) fail("perception.corridor_width", "must be >= 0");
    pool.map.validate();
    if (pool.train_maps < 1) fail("pool.train_maps", "must be >= 1");
    if (pool.heldout_maps < 1) fail("pool.heldout_maps", "must be >= 1");
  }
};

enum class Role {
  Success,        // outcome 1, trained by outcome advantage
  Failure,        // outcome 0 in a mixed group, trained by outcome advantage
  Repaired,       // near-miss with a successful repair
  RepairFailed,   // near-miss whose repairs all failed; original retained
  Anchor,         // pseudo-anchor of the reflection sub-group
  Negative,       // mined hard negative
  Unselected,     // all-failure member outside the sub-group
  NoSignal,       // all-failure group with rescue disabled
};

inline constexpr const char* to_string(Role r) {
  switch (r) {
    case Role::Success: return "success";
    case Role::Failure: return "failure";
    case Role::Repaired: return "repaired";
    case Role::RepairFailed: return "repair_failed";
    case Role::Anchor: return "anchor";
    case Role::Negative: return "negative";
    case Role::Unselected: return "unselected";
    case Role::NoSignal: return "no_signal";
  }
  return "?";
}

struct IterationReport {
  int iteration = 0;
  Scenario scenario = Scenario::Mixed;
  int spec_id = 0;
  std::vector<int> outcomes;
  std::vector<double> r_procs;
  std::vector<Role> roles;
  std::optional<AdvantageVector> advantages;
  LossBreakdown loss;
  int repairs_attempted = 0;
  int repairs_succeeded = 0;
  double grad_norm = 0.0;
  bool updated = false;
  GroupPlan plan;
};

struct EvalRow {
  int spec_id = 0;
  Metrics metrics;
  std::size_t steps = 0;
};

struct EvalResult {
  Metrics mean;
  std::vector<EvalRow> rows;
};

// Each episode is rolled out `repeats` times from a fixed seed; the mean row
// per episode is reported.
template <RolloutPolicy Policy>
EvalResult evaluate(Policy& policy, const std::vector<EpisodeSpec>& pool, const EnvConfig& env, int repeats = 1) {
  if (pool.empty()) throw Error("evaluate: empty episode pool");
  if (repeats < 1) throw Error("evaluate: repeats must be >= 1");
  EvalResult out;
  Rng rng(0);
  for (const auto& spec : pool) {
    EvalRow row{spec.id, {}, 0};
    for (int k = 0; k < repeats; ++k) {
      const Trajectory traj = rollout(policy, spec, env, rng);
      const Metrics m = compute_metrics(traj, spec);
      row.metrics.success += m.success / repeats;
      row.metrics.spl += m.spl / repeats;
      row.metrics.navigation_error += m.navigation_error / repeats;
      row.metrics.ndtw += m.ndtw / repeats;
      row.steps += traj.steps.size();
    }
    row.steps /= static_cast<std::size_t>(repeats);
    out.mean.success += row.metrics.success;
    out.mean.spl += row.metrics.spl;
    out.mean.navigation_error += row.metrics.navigation_error;
    out.mean.ndtw += row.metrics.ndtw;
    out.rows.push_back(row);
  }
  const double n = static_cast<double>(pool.size());
  out.mean.success /= n;
  out.mean.spl /= n;
  out.mean.navigation_error /= n;
  out.mean.ndtw /= n;
  return out;
}

// samples == 0 decodes greedily; otherwise the stochastic policy is averaged
// over `samples` rollouts per episode.
inline EvalResult evaluate(const PolicyParams& params, const std::vector<EpisodeSpec>& pool, const EnvConfig& env,
                           int samples = 0) {
  if (samples == 0) {
    GreedyPolicy greedy{&params};
    return evaluate(greedy, pool, env);
  }
  StochasticPolicy sampler{&params};
  return evaluate(sampler, pool, env, samples);
}

struct TrainState {
  PolicyParams policy;
  PolicyParams reference;
  OptimizerState optimizer;
  Rng rng;
  std::vector<EpisodeSpec> train_pool;
  std::vector<EpisodeSpec> heldout_pool;
  int iteration = 0;
};

struct Pools {
  std::vector<EpisodeSpec> train;
  std::vector<EpisodeSpec> heldout;
};

inline Pools make_pools(const TrainConfig& cfg) {
  const EnvConfig env = cfg.env();
  Pools p;
  p.train = generate_pool(cfg.pool.seed, cfg.pool.train_maps, cfg.pool.map, env, cfg.pool.train_episodes_per_map, 0);
  p.heldout = generate_pool(derive_seed(cfg.pool.seed, 0x68656c64), cfg.pool.heldout_maps, cfg.pool.map, env,
                            cfg.pool.heldout_episodes_per_map, 100000);
  return p;
}

struct WarmStartStats {
  int iterations = 0;
  double final_loss = 0.0;
};

// Supervised cloning of teacher actions; stands in for the SFT stage.
inline WarmStartStats warm_start(PolicyParams& params, const std::vector<EpisodeSpec>& pool, const TrainConfig& cfg,
                                 Rng& rng) {
  WarmStartStats stats;
  if (cfg.warm_start_iterations == 0) return stats;
  AdamWConfig opt_cfg = cfg.optimizer;
  opt_cfg.lr = cfg.warm_start_lr;
  OptimizerState opt = OptimizerState::for_params(params, opt_cfg);
  const EnvConfig env = cfg.env();
  TeacherPolicy teacher;
  for (int it = 0; it < cfg.warm_start_iterations; ++it) {
    ParamGradients grad = ParamGradients::zeros_like(params);
    double loss = 0.0;
    std::size_t steps = 0;
    std::vector<Trajectory> demos;
    for (int e = 0; e < cfg.warm_start_episodes; ++e) {
      demos.push_back(rollout(teacher, pool[rng.index(pool.size())], env, rng));
      steps += demos.back().steps.size();
    }
    const double inv = 1.0 / static_cast<double>(steps);
    for (const auto& d : demos) loss += loss_cloning(d, 0, d.steps.size(), params, &grad, inv) * inv;
    clip_grad_norm(grad, cfg.max_grad_norm);
    optimizer_step(params, grad, opt);
    stats.final_loss = loss;
    ++stats.iterations;
  }
  return stats;
}

inline TrainState init_train_state(const TrainConfig& cfg, Pools pools) {
  TrainState s{PolicyParams::random(cfg.hidden_dim, cfg.seed), {}, {}, Rng(derive_seed(cfg.seed, 0x7472)),
               std::move(pools.train), std::move(pools.heldout), 0};
  if (s.train_pool.empty()) throw Error("train pool is empty");
  s.optimizer = OptimizerState::for_params(s.policy, cfg.optimizer);
  s.reference = s.policy;
  return s;
}

// Samples and audits K trajectories for one episode.
inline Group sample_group(const PolicyParams& params, const EpisodeSpec& spec, const EnvConfig& env, int k, Rng& rng) {
  Group g;
  StochasticPolicy policy{&params};
  for (int i = 0; i < k; ++i) {
    auto r = rollout_audited(policy, spec, env, rng);
    g.outcomes.push_back(outcome_reward(r.trajectory, spec));
    g.trajectories.push_back(std::move(r.trajectory));
    g.audits.push_back(std::move(r.audit));
  }
  return g;
}

struct GroupUpdate {
  IterationReport report;
  ParamGradients grad;
};

// Builds the plan, advantages and gradient for one sampled group.
inline GroupUpdate process_group(const Group& group, const EpisodeSpec& spec, const PolicyParams& policy,
                                 const PolicyParams& reference, const TrainConfig& cfg, Rng& rng) {
  GroupUpdate u{{}, ParamGradients::zeros_like(policy)};
  IterationReport& rep = u.report;
  rep.spec_id = spec.id;
  rep.outcomes = group.outcomes;
  rep.r_procs = group.process_scores();
  rep.roles.assign(group.size(), Role::NoSignal);
  GroupPlan& plan = rep.plan;
  plan.scenario = rep.scenario = classify_scenario(group);
  const EnvConfig env = cfg.env();

  auto kls_for = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> kls;
    for (std::size_t i : idx) kls.push_back(trajectory_kl(group.trajectories[i], policy, reference));
    return kls;
  };

  if (plan.scenario == Scenario::Mixed) {
    std::vector<std::size_t> all(group.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      all[i] = i;
      rep.roles[i] = group.outcomes[i] == 1 ? Role::Success : Role::Failure;
    }
    AdvantageVector adv = normalize_outcome(group.outcomes, cfg.advantage.epsilon0);
    adv = apply_kl_penalty(std::move(adv), kls_for(all), cfg.advantage.beta_kl);
    if (cfg.toggles.use_rr) {
      plan.near_miss_indices = select_near_miss(group, cfg.eta);
      StochasticPolicy sampler{&policy};
      for (std::size_t i : plan.near_miss_indices) {
        ++plan.repairs_attempted;
        auto repaired = repair_resample(group.trajectories[i], group.audits[i], spec, env, sampler, cfg.n_rep, rng);
        if (repaired) {
          rep.roles[i] = Role::Repaired;
          plan.repaired.emplace_back(i, std::move(*repaired));
        } else {
          rep.roles[i] = Role::RepairFailed;
        }
      }
    }
    rep.loss = loss_mixed(group, plan, adv, policy, cfg.loss, &u.grad);
    rep.advantages = std::move(adv);
  } else if (cfg.toggles.use_afr) {
    if (cfg.toggles.use_soft_score) {
      build_reflection_subgroup(group, select_pseudo_anchor(group), cfg.m_neg, cfg.lambda_neg, plan);
    } else {
      build_random_subgroup(group, cfg.m_neg, rng, plan);
    }
    for (std::size_t i = 0; i < group.size(); ++i) rep.roles[i] = Role::Unselected;
    rep.roles[*plan.anchor_index] = Role::Anchor;
    for (std::size_t i : plan.negative_indices) rep.roles[i] = Role::Negative;

    std::vector<double> sub_rprocs, neg_rprocs;
    for (std::size_t i : plan.subgroup_indices) sub_rprocs.push_back(group.audits[i].r_proc);
    for (std::size_t i : plan.negative_indices) neg_rprocs.push_back(group.audits[i].r_proc);
    AdvantageVector adv = normalize_process(sub_rprocs, cfg.advantage.epsilon0);
    adv = margin_rescue(std::move(adv), group.audits[*plan.anchor_index].r_proc, neg_rprocs, cfg.advantage);
    adv = negative_only_scale(std::move(adv), cfg.advantage.s_neg);
    adv = apply_kl_penalty(std::move(adv), kls_for(plan.subgroup_indices), cfg.advantage.beta_kl);
    rep.loss = loss_fail(group, plan, adv, spec, policy, cfg.loss, &u.grad);
    rep.advantages = std::move(adv);
  }
  rep.repairs_attempted = plan.repairs_attempted;
  rep.repairs_succeeded = static_cast<int>(plan.repaired.size());
  return u;
}

using GroupSink = std::function<void(const Group&, const EpisodeSpec&)>;

inline IterationReport train_iteration(TrainState& state, const TrainConfig& cfg, const GroupSink& on_group = {}) {
  const EnvConfig env = cfg.env();
  ParamGradients total = ParamGradients::zeros_like(state.policy);
  IterationReport report;
  for (int e = 0; e < cfg.episodes_per_iteration; ++e) {
    const EpisodeSpec& spec = state.train_pool[state.rng.index(state.train_pool.size())];
    const Group group = sample_group(state.policy, spec, env, cfg.group_size, state.rng);
    if (on_group) on_group(group, spec);
    GroupUpdate u = process_group(group, spec, state.policy, state.reference, cfg, state.rng);
    total += u.grad;
    if (e == 0) {
      report = std::move(u.report);
    } else {
      report.repairs_attempted += u.report.repairs_attempted;
      report.repairs_succeeded += u.report.repairs_succeeded;
    }
  }
  if (cfg.episodes_per_iteration > 1) total *= 1.0 / cfg.episodes_per_iteration;
  report.iteration = state.iteration;
  report.grad_norm = clip_grad_norm(total, cfg.max_grad_norm);
  if (report.grad_norm > 0.0) {
    optimizer_step(state.policy, total, state.optimizer);
    report.updated = true;
  }
  ++state.iteration;
  return report;
}

struct CurvePoint {
  int iteration = 0;
  Metrics metrics;
};

struct RunReport {
  WarmStartStats warm_start;
  Metrics warm_start_eval;
  std::vector<IterationReport> iterations;
  std::vector<CurvePoint> curve;  // held-out evaluation, iteration 0 = after warm start
  PolicyParams final_policy;
  PolicyParams reference;
  int all_fail_groups = 0;
  int mixed_groups = 0;
};

// Observer hooks let callers stream reports (CSV, JSONL) without buffering.
struct RunObserver {
  std::function<void(const IterationReport&, const std::optional<Metrics>&)> on_iteration;
  GroupSink on_group;  // sampled groups, before any update
};

inline RunReport train(const TrainConfig& cfg, const Pools& pools, const RunObserver& observer = {}) {
  cfg.validate();
  TrainState state = init_train_state(cfg, pools);
  RunReport run;
  const EnvConfig env = cfg.env();
  Rng warm_rng(derive_seed(cfg.seed, 0x7761726d));
  run.warm_start = warm_start(state.policy, state.train_pool, cfg, warm_rng);
  state.reference = state.policy;  // frozen for the rest of the run
  run.warm_start_eval = evaluate(state.policy, state.heldout_pool, env, cfg.eval_samples).mean;
  run.curve.push_back({0, run.warm_start_eval});
  for (int it = 1; it <= cfg.iterations; ++it) {
    IterationReport rep = train_iteration(state, cfg, observer.on_group);
    rep.iteration = it;
    (rep.scenario == Scenario::Mixed ? run.mixed_groups : run.all_fail_groups)++;
    std::optional<Metrics> eval;
    if (it % cfg.eval_every == 0 || it == cfg.iterations) {
      eval = evaluate(state.policy, state.heldout_pool, env, cfg.eval_samples).mean;
      run.curve.push_back({it, *eval});
    }
    if (observer.on_iteration) observer.on_iteration(rep, eval);
    rep.plan.repaired.clear();  // repaired trajectories are not retained in the run report
    run.iterations.push_back(std::move(rep));
  }
  run.final_policy = state.policy;
  run.reference = state.reference;
  return run;
}

inline RunReport train(const TrainConfig& cfg) { return train(cfg, make_pools(cfg)); }

}  // namespace saca
