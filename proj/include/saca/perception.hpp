#pragma once

// Geometric perception oracle. Stands in for the detector / segmenter /
// image-text similarity stack: every component is derived from the distance
// to the active target, line of sight, and membership in the instruction
// corridor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "saca/grid.hpp"
#include "saca/rng.hpp"

namespace saca {

struct PerceptionMeasurement {
  double s_global = 0.0;  // global similarity
  double c_det = 0.0;     // detection confidence
  double c_iou = 0.0;     // mask quality
  double s_local = 0.0;   // masked local similarity

  friend bool operator==(const PerceptionMeasurement&, const PerceptionMeasurement&) = default;
};

struct PerceptionConfig {
  double vis_radius = 6.0;
  int corridor_width = 1;
  // Share of s_global carried by corridor membership; the remainder decays with distance.
  double corridor_weight = 0.85;
  double detected_iou = 0.9;
  double local_gain = 1.2;
  double undetected_confidence = 0.05;
  double noise_std = 0.0;
  // Terminal-decision check: a STOP outside the goal radius, or any other action
  // once the goal is active and within reach, measures as all zeros.
  bool ground_stop = true;
};

// Cells within `width` (Chebyshev) of some minimal-action-cost route
// (FORWARD = 1, TURN = 1) from the pose `from` to the cell `to`.
class Corridor {
 public:
  Corridor() = default;
  Corridor(const GridMap& map, const Pose& from, Cell to, int width) : width_(map.width), from_(from), to_(to) {
    const auto c_from = pose_cost_from(map, from);
    const auto c_to = pose_cost_to_target(map, to);
    const int total = c_to[pose_index(map, from)];
    if (total == kUnreachable) throw Error("corridor endpoints are disconnected");
    std::vector<std::uint8_t> core(map.cell_count(), 0);
    for (std::size_t i = 0; i < c_from.size(); ++i) {
      if (c_from[i] != kUnreachable && c_to[i] != kUnreachable && c_from[i] + c_to[i] == total) core[i / kNumHeadings] = 1;
    }
    member_.assign(map.cell_count(), 0);
    for (int y = 0; y < map.height; ++y) {
      for (int x = 0; x < map.width; ++x) {
        if (!core[map.index({x, y})]) continue;
        for (int dy = -width; dy <= width; ++dy) {
          for (int dx = -width; dx <= width; ++dx) {
            const Cell n{x + dx, y + dy};
            if (map.in_bounds(n)) member_[map.index(n)] = 1;
          }
        }
      }
    }
  }

  bool contains(Cell c) const {
    if (c.x < 0 || c.y < 0 || c.x >= width_) return false;
    const auto i = static_cast<std::size_t>(c.y) * width_ + c.x;
    return i < member_.size() && member_[i] != 0;
  }
  const Pose& from() const { return from_; }
  Cell to() const { return to_; }

 private:
  int width_ = 0;
  Pose from_;
  Cell to_;
  std::vector<std::uint8_t> member_;
};

inline bool target_visible(const GridMap& map, Cell at, Cell target, double vis_radius) {
  return euclidean(at, target) <= vis_radius && line_of_sight(map, at, target);
}

// `detection_threshold` gates c_iou and s_local exactly as the scorer gates
// the local terms. Pass an rng only when noise_std > 0.
inline PerceptionMeasurement measure(const Pose& pose, Cell target, const Corridor& corridor, const GridMap& map,
                                     const PerceptionConfig& cfg, double detection_threshold, Rng* rng = nullptr) {
  const Cell at = pose.cell();
  const double d = euclidean(at, target);
  const double on_corridor = corridor.contains(at) ? 1.0 : 0.0;
  const bool visible = target_visible(map, at, target, cfg.vis_radius);

  PerceptionMeasurement m;
  m.s_global = std::min(1.0, (1.0 - cfg.corridor_weight) * std::exp(-d / cfg.vis_radius) + cfg.corridor_weight * on_corridor);
  m.c_det = visible ? 1.0 - d / cfg.vis_radius : cfg.undetected_confidence;
  const bool detected = m.c_det >= detection_threshold;
  m.c_iou = detected ? cfg.detected_iou : 0.0;
  m.s_local = detected ? std::min(1.0, cfg.local_gain * (1.0 - d / (2.0 * cfg.vis_radius))) : 0.0;

  if (cfg.noise_std > 0.0 && rng != nullptr) {
    for (double* v : {&m.s_global, &m.c_det, &m.c_iou, &m.s_local}) *v += cfg.noise_std * rng->normal();
  }
  for (double* v : {&m.s_global, &m.c_det, &m.c_iou, &m.s_local}) *v = std::clamp(*v, 0.0, 1.0);
  return m;
}

}  // namespace saca
