#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace saca {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class Heading : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };

enum class Action : std::uint8_t { Forward = 0, TurnLeft = 1, TurnRight = 2, Stop = 3 };

inline constexpr int kNumActions = 4;
inline constexpr int kNumHeadings = 4;
inline constexpr std::array<Action, kNumActions> kAllActions = {Action::Forward, Action::TurnLeft,
                                                              Action::TurnRight, Action::Stop};

struct Pose {
  int x = 0;
  int y = 0;
  Heading heading = Heading::N;

  Cell cell() const { return {x, y}; }
  friend bool operator==(const Pose&, const Pose&) = default;
};

inline constexpr std::string_view to_string(Action a) {
  switch (a) {
    case Action::Forward: return "FORWARD";
    case Action::TurnLeft: return "TURN_LEFT";
    case Action::TurnRight: return "TURN_RIGHT";
    case Action::Stop: return "STOP";
  }
  return "?";
}

inline Action action_from_string(std::string_view s) {
  for (Action a : kAllActions) {
    if (to_string(a) == s) return a;
  }
  throw Error("unknown action '" + std::string(s) + "'");
}

inline constexpr std::string_view to_string(Heading h) {
  constexpr std::array<std::string_view, 4> names = {"N", "E", "S", "W"};
  return names[static_cast<int>(h)];
}

inline Heading heading_from_string(std::string_view s) {
  for (int i = 0; i < kNumHeadings; ++i) {
    if (to_string(static_cast<Heading>(i)) == s) return static_cast<Heading>(i);
  }
  throw Error("unknown heading '" + std::string(s) + "'");
}

inline constexpr Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
inline constexpr Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }

// y grows downward, so north is -y.
inline constexpr Cell heading_delta(Heading h) {
  constexpr std::array<Cell, 4> d = {Cell{0, -1}, Cell{1, 0}, Cell{0, 1}, Cell{-1, 0}};
  return d[static_cast<int>(h)];
}

struct Landmark {
  int id = 0;
  Cell cell;
  friend bool operator==(const Landmark&, const Landmark&) = default;
};

struct GridMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> occupancy;  // row-major, 1 = blocked
  std::vector<Landmark> landmarks;
  Cell goal;

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * width + c.x; }
  bool blocked(Cell c) const { return !in_bounds(c) || occupancy[index(c)] != 0; }
  bool free(Cell c) const { return !blocked(c); }
  std::size_t cell_count() const { return static_cast<std::size_t>(width) * height; }

  const Landmark& landmark(int id) const {
    for (const auto& l : landmarks) {
      if (l.id == id) return l;
    }
    throw Error("landmark id " + std::to_string(id) + " not on map");
  }
  bool has_landmark(int id) const {
    return std::any_of(landmarks.begin(), landmarks.end(), [id](const Landmark& l) { return l.id == id; });
  }

  friend bool operator==(const GridMap&, const GridMap&) = default;
};

inline Pose transition(const Pose& pose, Action action, const GridMap& map) {
  Pose next = pose;
  switch (action) {
    case Action::Forward: {
      const Cell d = heading_delta(pose.heading);
      const Cell target{pose.x + d.x, pose.y + d.y};
      if (map.free(target)) {
        next.x = target.x;
        next.y = target.y;
      }
      break;
    }
    case Action::TurnLeft: next.heading = turn_left(pose.heading); break;
    case Action::TurnRight: next.heading = turn_right(pose.heading); break;
    case Action::Stop: break;
  }
  return next;
}

inline double euclidean(Cell a, Cell b) { return std::hypot(double(a.x - b.x), double(a.y - b.y)); }

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

// 4-connected BFS distances (in cells) from `source` to every cell.
inline std::vector<int> cell_distances(const GridMap& map, Cell source) {
  std::vector<int> dist(map.cell_count(), kUnreachable);
  if (map.blocked(source)) return dist;
  std::deque<Cell> queue{source};
  dist[map.index(source)] = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (int h = 0; h < kNumHeadings; ++h) {
      const Cell d = heading_delta(static_cast<Heading>(h));
      const Cell n{c.x + d.x, c.y + d.y};
      if (map.free(n) && dist[map.index(n)] == kUnreachable) {
        dist[map.index(n)] = dist[map.index(c)] + 1;
        queue.push_back(n);
      }
    }
  }
  return dist;
}

inline int shortest_cells(const GridMap& map, Cell from, Cell to) { return cell_distances(map, from)[map.index(to)]; }

// One canonical shortest cell path (inclusive of both ends). Neighbours are
// expanded in N, E, S, W order so the result is deterministic.
inline std::vector<Cell> shortest_cell_path(const GridMap& map, Cell from, Cell to) {
  const auto dist = cell_distances(map, to);
  if (dist[map.index(from)] == kUnreachable) throw Error("no path between cells");
  std::vector<Cell> path{from};
  Cell c = from;
  while (!(c == to)) {
    for (int h = 0; h < kNumHeadings; ++h) {
      const Cell d = heading_delta(static_cast<Heading>(h));
      const Cell n{c.x + d.x, c.y + d.y};
      if (map.free(n) && dist[map.index(n)] == dist[map.index(c)] - 1) {
        c = n;
        break;
      }
    }
    path.push_back(c);
  }
  return path;
}

// Line of sight between cell centres: every cell touched by the segment is free.
inline bool line_of_sight(const GridMap& map, Cell a, Cell b) {
  const double ax = a.x + 0.5, ay = a.y + 0.5;
  const double dx = b.x - a.x, dy = b.y - a.y;
  const int samples = 4 * (std::abs(b.x - a.x) + std::abs(b.y - a.y)) + 1;
  for (int i = 0; i <= samples; ++i) {
    const double t = static_cast<double>(i) / samples;
    const Cell c{static_cast<int>(std::floor(ax + t * dx)), static_cast<int>(std::floor(ay + t * dy))};
    if (map.blocked(c)) return false;
  }
  return true;
}

inline std::size_t pose_index(const GridMap& map, const Pose& p) {
  return map.index(p.cell()) * kNumHeadings + static_cast<int>(p.heading);
}

// Minimal action cost (FORWARD = 1, TURN = 1) from every pose to any pose on
// `target`, computed by reverse BFS over the pose graph.
inline std::vector<int> pose_cost_to_target(const GridMap& map, Cell target) {
  std::vector<int> cost(map.cell_count() * kNumHeadings, kUnreachable);
  if (map.blocked(target)) return cost;
  std::deque<Pose> queue;
  for (int h = 0; h < kNumHeadings; ++h) {
    const Pose p{target.x, target.y, static_cast<Heading>(h)};
    cost[pose_index(map, p)] = 0;
    queue.push_back(p);
  }
  while (!queue.empty()) {
    const Pose q = queue.front();
    queue.pop_front();
    const int next_cost = cost[pose_index(map, q)] + 1;
    // Predecessors of q: a turn that lands on q's heading, or a forward move into q.
    const Cell back = heading_delta(q.heading);
    const std::array<Pose, 3> preds = {Pose{q.x, q.y, turn_right(q.heading)},
                                       Pose{q.x, q.y, turn_left(q.heading)},
                                       Pose{q.x - back.x, q.y - back.y, q.heading}};
    for (const Pose& p : preds) {
      if (map.blocked(p.cell())) continue;
      auto& c = cost[pose_index(map, p)];
      if (c == kUnreachable) {
        c = next_cost;
        queue.push_back(p);
      }
    }
  }
  return cost;
}

// Minimal action cost from `source` to every pose (forward BFS).
inline std::vector<int> pose_cost_from(const GridMap& map, const Pose& source) {
  std::vector<int> cost(map.cell_count() * kNumHeadings, kUnreachable);
  if (map.blocked(source.cell())) return cost;
  std::deque<Pose> queue{source};
  cost[pose_index(map, source)] = 0;
  while (!queue.empty()) {
    const Pose p = queue.front();
    queue.pop_front();
    const int next_cost = cost[pose_index(map, p)] + 1;
    for (Action a : {Action::Forward, Action::TurnLeft, Action::TurnRight}) {
      const Pose q = transition(p, a, map);
      auto& c = cost[pose_index(map, q)];
      if (c == kUnreachable) {
        c = next_cost;
        queue.push_back(q);
      }
    }
  }
  return cost;
}

}  // namespace saca
