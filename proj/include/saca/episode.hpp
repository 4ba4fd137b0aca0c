#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "saca/grid.hpp"
#include "saca/perception.hpp"

namespace saca {

inline constexpr int kFeatureDim = 18;

struct EpisodeSpec {
  int id = 0;
  GridMap map;
  Pose start;
  std::vector<int> instruction;  // landmark ids, visited in order
  int shortest_path_length = 0;  // cells: start -> landmarks in order -> goal
  int max_steps = 60;
  double goal_radius = 3.0;

  int num_landmarks() const { return static_cast<int>(instruction.size()); }

  // Active index in [0, m]; m means the goal.
  Cell target_cell(int active_index) const {
    if (active_index >= num_landmarks()) return map.goal;
    return map.landmark(instruction[static_cast<std::size_t>(active_index)]).cell;
  }

  friend bool operator==(const EpisodeSpec&, const EpisodeSpec&) = default;
};

struct Step {
  std::vector<double> features;
  PerceptionMeasurement measurement;
  Action action = Action::Stop;
  double log_prob = 0.0;
  Pose pose_after;

  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  int spec_id = 0;
  std::vector<Step> steps;
  bool stopped = false;
  Pose final_pose;

  std::size_t length() const { return steps.size(); }
  // Pose before step t (0-based).
  Pose pose_before(std::size_t t, const Pose& start) const { return t == 0 ? start : steps[t - 1].pose_after; }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Metrics {
  double success = 0.0;
  double spl = 0.0;
  double navigation_error = 0.0;
  double ndtw = 0.0;
};

// Sum of BFS optima between consecutive waypoints.
inline int compute_shortest_path_length(const GridMap& map, const Pose& start, const std::vector<int>& instruction) {
  Cell from = start.cell();
  int total = 0;
  auto leg = [&](Cell to) {
    const int d = shortest_cells(map, from, to);
    if (d == kUnreachable) throw Error("episode waypoint unreachable");
    total += d;
    from = to;
  };
  for (int id : instruction) leg(map.landmark(id).cell);
  leg(map.goal);
  return total;
}

inline std::vector<Cell> reference_path(const EpisodeSpec& spec) {
  std::vector<Cell> path{spec.start.cell()};
  Cell from = spec.start.cell();
  for (int i = 0; i <= spec.num_landmarks(); ++i) {
    const Cell to = spec.target_cell(i);
    const auto leg = shortest_cell_path(spec.map, from, to);
    path.insert(path.end(), leg.begin() + 1, leg.end());
    from = to;
  }
  return path;
}

inline void validate_episode(const EpisodeSpec& spec) {
  if (spec.instruction.empty()) throw Error("episode " + std::to_string(spec.id) + ": empty instruction");
  for (int id : spec.instruction) {
    if (!spec.map.has_landmark(id)) throw Error("episode " + std::to_string(spec.id) + ": unknown landmark " + std::to_string(id));
  }
  if (spec.map.blocked(spec.start.cell())) throw Error("episode " + std::to_string(spec.id) + ": start cell blocked");
  if (spec.max_steps < 1) throw Error("episode " + std::to_string(spec.id) + ": max_steps must be >= 1");
  if (compute_shortest_path_length(spec.map, spec.start, spec.instruction) != spec.shortest_path_length) {
    throw Error("episode " + std::to_string(spec.id) + ": shortest_path_length does not match BFS optimum");
  }
}

// Observation vector: target offset (2), goal offset (2), heading one-hot (4),
// egocentric 3x3 occupancy (9, front row first, left to right), visibility (1).
inline std::vector<double> observation_features(const Pose& pose, const EpisodeSpec& spec, int active_index,
                                                double vis_radius) {
  std::vector<double> f(kFeatureDim, 0.0);
  const GridMap& map = spec.map;
  const Cell target = spec.target_cell(active_index);
  const double sx = 1.0 / map.width, sy = 1.0 / map.height;
  f[0] = (target.x - pose.x) * sx;
  f[1] = (target.y - pose.y) * sy;
  f[2] = (map.goal.x - pose.x) * sx;
  f[3] = (map.goal.y - pose.y) * sy;
  f[4 + static_cast<int>(pose.heading)] = 1.0;
  const Cell fwd = heading_delta(pose.heading);
  const Cell right = heading_delta(turn_right(pose.heading));
  int k = 8;
  for (int ahead = 1; ahead >= -1; --ahead) {
    for (int lateral = -1; lateral <= 1; ++lateral) {
      const Cell c{pose.x + ahead * fwd.x + lateral * right.x, pose.y + ahead * fwd.y + lateral * right.y};
      f[k++] = map.blocked(c) ? 1.0 : 0.0;
    }
  }
  f[17] = target_visible(map, pose.cell(), target, vis_radius) ? 1.0 : 0.0;
  return f;
}

// First action of a minimal-cost (FORWARD = 1, TURN = 1) sequence toward the
// active target. Ties prefer FORWARD, then TURN_LEFT, then TURN_RIGHT. On the
// landmark cell itself the teacher turns in place so the tracker can register
// the visit.
inline Action teacher_action(const Pose& pose, const EpisodeSpec& spec, int active_index) {
  if (active_index < 0 || active_index > spec.num_landmarks()) throw Error("teacher_action: active index out of range");
  const GridMap& map = spec.map;
  if (active_index == spec.num_landmarks() && euclidean(pose.cell(), map.goal) <= spec.goal_radius) return Action::Stop;
  const Cell target = spec.target_cell(active_index);
  if (pose.cell() == target) return Action::TurnLeft;
  const auto cost = pose_cost_to_target(map, target);
  if (cost[pose_index(map, pose)] == kUnreachable) throw Error("teacher_action: target unreachable");
  Action best = Action::Forward;
  int best_cost = kUnreachable;
  for (Action a : {Action::Forward, Action::TurnLeft, Action::TurnRight}) {
    const int c = cost[pose_index(map, transition(pose, a, map))];
    if (c < best_cost) {
      best_cost = c;
      best = a;
    }
  }
  return best;
}

// Whether a terminal decision is consistent with arrival: STOP only inside the
// goal radius, and no further movement once the goal is active and in reach.
inline bool stop_decision_grounded(const Pose& before, Action action, const EpisodeSpec& spec, int active_index) {
  const bool in_reach = euclidean(before.cell(), spec.map.goal) <= spec.goal_radius;
  if (action == Action::Stop) return in_reach;
  return !(in_reach && active_index == spec.num_landmarks());
}

inline int outcome_reward(const Trajectory& traj, const EpisodeSpec& spec) {
  return traj.stopped && euclidean(traj.final_pose.cell(), spec.map.goal) <= spec.goal_radius ? 1 : 0;
}

// Normalized DTW over cell sequences with threshold distance `threshold`.
inline double ndtw(const std::vector<Cell>& predicted, const std::vector<Cell>& reference, double threshold) {
  const std::size_t n = predicted.size(), m = reference.size();
  if (n == 0 || m == 0) return 0.0;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = euclidean(predicted[i - 1], reference[j - 1]) + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  if (prev[m] == 0.0) return 1.0;
  if (threshold <= 0.0) return 0.0;  // limit of exp(-c / (m * th)) as th -> 0
  return std::exp(-prev[m] / (static_cast<double>(m) * threshold));
}

inline std::vector<Cell> visited_cells(const Trajectory& traj, const Pose& start) {
  std::vector<Cell> cells{start.cell()};
  for (const auto& s : traj.steps) {
    if (!(s.pose_after.cell() == cells.back())) cells.push_back(s.pose_after.cell());
  }
  return cells;
}

inline Metrics compute_metrics(const Trajectory& traj, const EpisodeSpec& spec) {
  Metrics m;
  m.success = outcome_reward(traj, spec);
  const auto moves = std::count_if(traj.steps.begin(), traj.steps.end(),
                                   [](const Step& s) { return s.action == Action::Forward; });
  const double shortest = spec.shortest_path_length;
  const double taken = static_cast<double>(moves);
  const double denom = std::max(taken, shortest);
  m.spl = denom > 0.0 ? m.success * shortest / denom : m.success;
  m.navigation_error = euclidean(traj.final_pose.cell(), spec.map.goal);
  m.ndtw = ndtw(visited_cells(traj, spec.start), reference_path(spec), spec.goal_radius);
  return m;
}

}  // namespace saca
