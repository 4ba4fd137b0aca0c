#pragma once

#include <concepts>
#include <optional>
#include <vector>

#include "saca/auditor.hpp"
#include "saca/episode.hpp"
#include "saca/perception.hpp"
#include "saca/rng.hpp"

namespace saca {

struct EnvConfig {
  PerceptionConfig perception;
  ScorerConfig scorer;
};

struct Observation {
  const std::vector<double>& features;
  const Pose& pose;
  const EpisodeSpec& spec;
  TrackerState tracker;
};

struct Decision {
  Action action = Action::Stop;
  double log_prob = 0.0;
};

template <typename P>
concept RolloutPolicy = requires(P& policy, const Observation& obs, Rng& rng) {
  { policy.decide(obs, rng) } -> std::same_as<Decision>;
};

// Shortest-path expert; deterministic, so every decision has log-probability 0.
struct TeacherPolicy {
  Decision decide(const Observation& obs, Rng&) const {
    return {teacher_action(obs.pose, obs.spec, obs.tracker.active), 0.0};
  }
};

// Live navigation state: pose, landmark tracker, and the cell where the
// current corridor starts (episode start or the pose at which the last
// landmark transition fired).
struct NavState {
  Pose pose;
  TrackerState tracker;
  Pose checkpoint;
};

inline NavState initial_state(const EpisodeSpec& spec) { return {spec.start, {}, spec.start}; }

class CorridorCache {
 public:
  const Corridor& get(const GridMap& map, const Pose& from, Cell to, int width) {
    for (const auto& c : entries_) {
      if (c.from() == from && c.to() == to) return c;
    }
    entries_.emplace_back(map, from, to, width);
    return entries_.back();
  }

 private:
  std::vector<Corridor> entries_;
};

struct AuditedRollout {
  Trajectory trajectory;
  AuditReport audit;
};

// Executes one step and records it; returns the score the auditor assigns.
template <RolloutPolicy Policy>
double take_step(Policy& policy, const EpisodeSpec& spec, const EnvConfig& cfg, NavState& state, CorridorCache& corridors,
                 Trajectory& traj, std::vector<int>& trace, Rng& rng) {
  Step step;
  step.features = observation_features(state.pose, spec, state.tracker.active, cfg.perception.vis_radius);
  const Decision decision = policy.decide(Observation{step.features, state.pose, spec, state.tracker}, rng);
  step.action = decision.action;
  step.log_prob = decision.log_prob;
  step.pose_after = transition(state.pose, decision.action, spec.map);

  const Cell target = spec.target_cell(state.tracker.active);
  const Corridor& corridor = corridors.get(spec.map, state.checkpoint, target, cfg.perception.corridor_width);
  step.measurement = measure(step.pose_after, target, corridor, spec.map, cfg.perception, cfg.scorer.tau_det, &rng);
  if (cfg.perception.ground_stop && !stop_decision_grounded(state.pose, decision.action, spec, state.tracker.active)) {
    step.measurement = PerceptionMeasurement{};
  }
  const double score = composite_soft_score(step.measurement, cfg.scorer);

  trace.push_back(state.tracker.active);
  const TrackerState next = track_landmarks(state.tracker, score, cfg.scorer, spec.num_landmarks());
  if (next.active != state.tracker.active) state.checkpoint = step.pose_after;
  state.tracker = next;
  state.pose = step.pose_after;

  traj.stopped = decision.action == Action::Stop;
  traj.final_pose = step.pose_after;
  traj.steps.push_back(std::move(step));
  return score;
}

// Continues `traj` from `state` until STOP or the episode step budget.
template <RolloutPolicy Policy>
void continue_rollout(Policy& policy, const EpisodeSpec& spec, const EnvConfig& cfg, NavState state, Trajectory& traj,
                      std::vector<double>& scores, std::vector<int>& trace, Rng& rng) {
  CorridorCache corridors;
  while (traj.steps.size() < static_cast<std::size_t>(spec.max_steps) && !traj.stopped) {
    scores.push_back(take_step(policy, spec, cfg, state, corridors, traj, trace, rng));
  }
}

template <RolloutPolicy Policy>
AuditedRollout rollout_audited(Policy& policy, const EpisodeSpec& spec, const EnvConfig& cfg, Rng& rng) {
  Trajectory traj;
  traj.spec_id = spec.id;
  traj.final_pose = spec.start;
  std::vector<double> scores;
  std::vector<int> trace;
  continue_rollout(policy, spec, cfg, initial_state(spec), traj, scores, trace, rng);
  AuditReport audit = audit_scores(std::move(scores), std::move(trace), cfg.scorer);
  return {std::move(traj), std::move(audit)};
}

template <RolloutPolicy Policy>
Trajectory rollout(Policy& policy, const EpisodeSpec& spec, const EnvConfig& cfg, Rng& rng) {
  return rollout_audited(policy, spec, cfg, rng).trajectory;
}

struct ReplayResult {
  bool ok = true;
  std::optional<std::size_t> first_mismatch;  // 0-based step index

  explicit operator bool() const { return ok; }
};

inline ReplayResult replay(const Trajectory& traj, const EpisodeSpec& spec) {
  Pose pose = spec.start;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const Step& s = traj.steps[t];
    pose = transition(pose, s.action, spec.map);
    const bool stop_inside = s.action == Action::Stop && t + 1 != traj.steps.size();
    if (!(pose == s.pose_after) || stop_inside) return {false, t};
  }
  if (!traj.steps.empty() && !(traj.final_pose == pose)) return {false, traj.steps.size() - 1};
  return {};
}

// Rebuilds the navigation state after the first `prefix_len` recorded steps,
// re-deriving the landmark tracker from the recorded measurements.
inline NavState replay_prefix(const Trajectory& traj, const EpisodeSpec& spec, const ScorerConfig& scorer,
                              std::size_t prefix_len, std::vector<double>* scores = nullptr,
                              std::vector<int>* trace = nullptr) {
  if (prefix_len > traj.steps.size()) throw Error("replay_prefix: prefix longer than trajectory");
  NavState state = initial_state(spec);
  for (std::size_t t = 0; t < prefix_len; ++t) {
    const Step& s = traj.steps[t];
    const Pose next = transition(state.pose, s.action, spec.map);
    if (!(next == s.pose_after)) throw Error("replay_prefix: pose mismatch at step " + std::to_string(t + 1));
    const double score = composite_soft_score(s.measurement, scorer);
    if (scores) scores->push_back(score);
    if (trace) trace->push_back(state.tracker.active);
    const TrackerState tr = track_landmarks(state.tracker, score, scorer, spec.num_landmarks());
    if (tr.active != state.tracker.active) state.checkpoint = next;
    state.tracker = tr;
    state.pose = next;
  }
  return state;
}

}  // namespace saca
