#pragma once

// Scenario-conditioned group construction: mixed/all-failure routing, repair
// resampling of near-miss failures, and the reflection sub-group built from a
// pseudo-anchor plus mined hard negatives.

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "saca/auditor.hpp"
#include "saca/rollout.hpp"

namespace saca {

enum class Scenario { Mixed, AllFail };

inline constexpr const char* to_string(Scenario s) { return s == Scenario::Mixed ? "mixed" : "all_fail"; }

struct Group {
  std::vector<Trajectory> trajectories;
  std::vector<AuditReport> audits;
  std::vector<int> outcomes;

  std::size_t size() const { return trajectories.size(); }

  void validate() const {
    if (audits.size() != trajectories.size() || outcomes.size() != trajectories.size()) {
      throw Error("group: trajectories, audits and outcomes differ in length");
    }
    if (trajectories.size() < 2) throw Error("group: needs at least two trajectories");
  }

  std::vector<double> process_scores() const {
    std::vector<double> r;
    r.reserve(audits.size());
    for (const auto& a : audits) r.push_back(a.r_proc);
    return r;
  }
};

struct RepairedTrajectory {
  std::size_t prefix_len = 0;  // steps kept from the original
  Trajectory full;             // prefix + resampled suffix
  int attempts_used = 0;
};

struct GroupPlan {
  Scenario scenario = Scenario::Mixed;
  // Mixed
  std::vector<std::size_t> near_miss_indices;
  std::vector<std::pair<std::size_t, RepairedTrajectory>> repaired;
  int repairs_attempted = 0;
  // AllFail
  std::optional<std::size_t> anchor_index;
  std::vector<std::size_t> negative_indices;
  std::vector<std::size_t> subgroup_indices;  // anchor first, then negatives
};

inline Scenario classify_scenario(const Group& group) {
  if (group.size() < 2) throw Error("classify_scenario: group needs at least two trajectories");
  return std::any_of(group.outcomes.begin(), group.outcomes.end(), [](int r) { return r == 1; }) ? Scenario::Mixed
                                                                                                 : Scenario::AllFail;
}

// Failed trajectories whose valid-prefix ratio t_div / T strictly exceeds eta.
inline std::vector<std::size_t> select_near_miss(const Group& group, double eta) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group.outcomes[i] == 0 && group.audits[i].valid_prefix_ratio() > eta) out.push_back(i);
  }
  return out;
}

// Step (1-based) at which resampling starts: the divergence point, or the last
// step for a failure that never diverged.
inline std::size_t repair_point(const AuditReport& audit) { return std::min(audit.t_div, audit.length()); }

// Truncates `original` before its repair point, rebuilds the environment and
// tracker state by replaying the kept prefix, then samples up to n_rep fresh
// suffixes. Returns the first concatenation that succeeds, or nullopt.
template <RolloutPolicy Policy>
std::optional<RepairedTrajectory> repair_resample(const Trajectory& original, const AuditReport& audit,
                                                  const EpisodeSpec& spec, const EnvConfig& env, Policy& policy,
                                                  int n_rep, Rng& rng) {
  if (original.steps.empty()) throw Error("repair_resample: empty trajectory");
  const std::size_t prefix_len = repair_point(audit) - 1;
  std::vector<double> prefix_scores;
  std::vector<int> prefix_trace;
  const NavState state = replay_prefix(original, spec, env.scorer, prefix_len, &prefix_scores, &prefix_trace);
  for (int attempt = 1; attempt <= n_rep; ++attempt) {
    Trajectory candidate;
    candidate.spec_id = original.spec_id;
    candidate.steps.assign(original.steps.begin(), original.steps.begin() + static_cast<std::ptrdiff_t>(prefix_len));
    candidate.final_pose = state.pose;
    candidate.stopped = false;
    std::vector<double> scores = prefix_scores;
    std::vector<int> trace = prefix_trace;
    continue_rollout(policy, spec, env, state, candidate, scores, trace, rng);
    if (outcome_reward(candidate, spec) == 1) return RepairedTrajectory{prefix_len, std::move(candidate), attempt};
  }
  return std::nullopt;
}

// LCS length over action sequences divided by the longer length.
inline double lcs_prefix_similarity(std::span<const Action> a, std::span<const Action> b) {
  if (a.empty() || b.empty()) throw Error("lcs_prefix_similarity: empty sequence");
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[b.size()]) / static_cast<double>(std::max(a.size(), b.size()));
}

inline std::vector<Action> action_sequence(const Trajectory& t) {
  std::vector<Action> out;
  out.reserve(t.steps.size());
  for (const auto& s : t.steps) out.push_back(s.action);
  return out;
}

inline double score_hard_negative(double prefix_sim, double anchor_rproc, double rproc, double lambda) {
  return lambda * prefix_sim - (1.0 - lambda) * (anchor_rproc - rproc);
}

inline double score_hard_negative(const Trajectory& t, const AuditReport& t_audit, const Trajectory& anchor,
                                  const AuditReport& anchor_audit, double lambda) {
  const double sim = lcs_prefix_similarity(action_sequence(t), action_sequence(anchor));
  return score_hard_negative(sim, anchor_audit.r_proc, t_audit.r_proc, lambda);
}

// Highest process score; ties go to the longer trajectory, then the lower index.
inline std::size_t select_pseudo_anchor(const Group& group) {
  if (group.size() == 0) throw Error("select_pseudo_anchor: empty group");
  std::size_t best = 0;
  for (std::size_t i = 1; i < group.size(); ++i) {
    const double r = group.audits[i].r_proc, rb = group.audits[best].r_proc;
    if (r > rb || (r == rb && group.trajectories[i].length() > group.trajectories[best].length())) best = i;
  }
  return best;
}

// Fills anchor / negatives / subgroup for an all-failure group. Negatives are
// the top-m_neg non-anchor trajectories by hard-negative score, ordered by
// descending score (ties by lower index).
inline void build_reflection_subgroup(const Group& group, std::size_t anchor, int m_neg, double lambda, GroupPlan& plan) {
  if (group.size() < 2) throw Error("build_reflection_subgroup: group needs at least two trajectories");
  if (m_neg < 1) throw Error("build_reflection_subgroup: m_neg must be >= 1");
  if (anchor >= group.size()) throw Error("build_reflection_subgroup: anchor out of range");
  const auto anchor_actions = action_sequence(group.trajectories[anchor]);
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (i == anchor) continue;
    const double sim = lcs_prefix_similarity(action_sequence(group.trajectories[i]), anchor_actions);
    scored.emplace_back(score_hard_negative(sim, group.audits[anchor].r_proc, group.audits[i].r_proc, lambda), i);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(m_neg), scored.size());
  plan.anchor_index = anchor;
  plan.negative_indices.clear();
  for (std::size_t k = 0; k < take; ++k) plan.negative_indices.push_back(scored[k].second);
  plan.subgroup_indices = {anchor};
  plan.subgroup_indices.insert(plan.subgroup_indices.end(), plan.negative_indices.begin(), plan.negative_indices.end());
}

// Uniform-random anchor and negatives; used when soft-score selection is ablated.
inline void build_random_subgroup(const Group& group, int m_neg, Rng& rng, GroupPlan& plan) {
  if (group.size() < 2) throw Error("build_random_subgroup: group needs at least two trajectories");
  std::vector<std::size_t> order(group.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(m_neg), group.size() - 1);
  plan.anchor_index = order[0];
  plan.negative_indices.assign(order.begin() + 1, order.begin() + 1 + static_cast<std::ptrdiff_t>(take));
  plan.subgroup_indices.assign(order.begin(), order.begin() + 1 + static_cast<std::ptrdiff_t>(take));
}

}  // namespace saca
