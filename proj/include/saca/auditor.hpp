#pragma once

// Step-aware trajectory auditor: composite soft scores, the gated process
// score, the sticky hard mask with its divergence point, and landmark
// transition tracking.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saca/episode.hpp"
#include "saca/perception.hpp"

namespace saca {

struct ScorerConfig {
  double w1 = 0.3;
  double w2 = 0.3;
  double w3 = 0.4;
  double tau_det = 0.3;
  double tau_s = 0.2;
  double tau_h = 0.25;
  double tau_reach = 0.7;
  int c_consec = 2;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw Error("scorer." + field + ": " + why); };
    if (w1 < 0) fail("w1", "must be >= 0");
    if (w2 < 0) fail("w2", "must be >= 0");
    if (w3 < 0) fail("w3", "must be >= 0");
    if (tau_det < 0 || tau_det > 1) fail("tau_det", "must lie in [0, 1]");
    if (tau_s < 0) fail("tau_s", "must be >= 0");
    if (!(tau_s < tau_h)) fail("tau_h", "must exceed tau_s");
    if (!(tau_h < tau_reach)) fail("tau_reach", "must exceed tau_h");
    if (tau_reach > w1 + w2 + w3) fail("tau_reach", "must not exceed w1 + w2 + w3");
    if (c_consec < 1) fail("c_consec", "must be >= 1");
  }
};

inline double composite_soft_score(const PerceptionMeasurement& m, const ScorerConfig& cfg) {
  double s = cfg.w1 * m.s_global;
  if (m.c_det >= cfg.tau_det) s += cfg.w2 * m.c_det + cfg.w3 * (m.c_iou * m.s_local);
  return s;
}

inline double process_score(std::span<const double> soft_scores, double tau_s) {
  if (soft_scores.empty()) throw Error("process_score: empty score sequence");
  double acc = 0.0;
  for (double s : soft_scores) acc += std::max(0.0, s - tau_s);
  return acc / static_cast<double>(soft_scores.size());
}

struct DivergenceResult {
  std::vector<std::uint8_t> mask;
  std::size_t t_div = 1;  // 1-based; T + 1 when no divergence
};

// Sticky scan: once a score drops strictly below tau_h the mask stays 0.
inline DivergenceResult divergence_scan(std::span<const double> soft_scores, double tau_h) {
  DivergenceResult r;
  r.mask.assign(soft_scores.size(), 1);
  r.t_div = soft_scores.size() + 1;
  bool diverged = false;
  for (std::size_t t = 0; t < soft_scores.size(); ++t) {
    if (!diverged && soft_scores[t] < tau_h) {
      diverged = true;
      r.t_div = t + 1;
    }
    if (diverged) r.mask[t] = 0;
  }
  return r;
}

struct TrackerState {
  int active = 0;       // index into the instruction; m means the goal
  int consecutive = 0;  // steps in a row above tau_reach

  friend bool operator==(const TrackerState&, const TrackerState&) = default;
};

inline TrackerState track_landmarks(TrackerState state, double score, const ScorerConfig& cfg, int num_landmarks) {
  if (state.active >= num_landmarks) return {num_landmarks, 0};
  state.consecutive = score > cfg.tau_reach ? state.consecutive + 1 : 0;
  if (state.consecutive >= cfg.c_consec) {
    ++state.active;
    state.consecutive = 0;
  }
  return state;
}

struct AuditReport {
  std::vector<double> soft_scores;
  std::vector<std::uint8_t> mask;
  std::size_t t_div = 1;
  double r_proc = 0.0;
  std::vector<int> landmark_trace;  // active index used to score each step

  std::size_t length() const { return soft_scores.size(); }
  bool diverged() const { return t_div <= soft_scores.size(); }
  // Number of steps before the divergence point.
  std::size_t valid_prefix() const { return t_div - 1; }
  double valid_prefix_ratio() const { return static_cast<double>(t_div) / static_cast<double>(soft_scores.size()); }

  friend bool operator==(const AuditReport&, const AuditReport&) = default;
};

inline AuditReport audit_scores(std::vector<double> soft_scores, std::vector<int> landmark_trace, const ScorerConfig& cfg) {
  AuditReport report;
  report.r_proc = process_score(soft_scores, cfg.tau_s);
  auto div = divergence_scan(soft_scores, cfg.tau_h);
  report.mask = std::move(div.mask);
  report.t_div = div.t_div;
  report.soft_scores = std::move(soft_scores);
  report.landmark_trace = std::move(landmark_trace);
  return report;
}

// Offline audit from the measurements recorded in the trajectory. Produces the
// same report as the online audit performed during rollout.
inline AuditReport audit_trajectory(const Trajectory& traj, const EpisodeSpec& spec, const ScorerConfig& cfg) {
  if (traj.steps.empty()) throw Error("audit_trajectory: empty trajectory");
  std::vector<double> scores;
  std::vector<int> trace;
  scores.reserve(traj.steps.size());
  trace.reserve(traj.steps.size());
  TrackerState tracker;
  for (const auto& step : traj.steps) {
    const double s = composite_soft_score(step.measurement, cfg);
    scores.push_back(s);
    trace.push_back(tracker.active);
    tracker = track_landmarks(tracker, s, cfg, spec.num_landmarks());
  }
  return audit_scores(std::move(scores), std::move(trace), cfg);
}

}  // namespace saca
