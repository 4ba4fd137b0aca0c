#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saca/rollout.hpp"

namespace saca {

struct MapConfig {
  int width = 12;
  int height = 12;
  int num_landmarks = 4;           // landmarks placed on each map
  double obstacle_density = 0.15;  // in [0, 0.4]
  int episodes_per_map = 4;
  int min_instruction = 2;
  int max_instruction = 3;
  int max_steps = 60;
  double goal_radius = 3.0;
  int min_landmark_spacing = 3;    // Manhattan distance between landmark/goal cells
  int max_retries = 200;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw Error("map." + field + ": " + why); };
    if (width < 3) fail("width", "must be >= 3");
    if (height < 3) fail("height", "must be >= 3");
    if (num_landmarks < 1) fail("num_landmarks", "must be >= 1");
    if (obstacle_density < 0.0 || obstacle_density > 0.4) fail("obstacle_density", "must lie in [0, 0.4]");
    if (episodes_per_map < 1) fail("episodes_per_map", "must be >= 1");
    if (min_instruction < 1) fail("min_instruction", "must be >= 1");
    if (max_instruction < min_instruction) fail("max_instruction", "must be >= min_instruction");
    if (max_instruction > num_landmarks) fail("max_instruction", "must not exceed num_landmarks");
    if (max_steps < 1) fail("max_steps", "must be >= 1");
    if (goal_radius < 0) fail("goal_radius", "must be >= 0");
    if (max_retries < 1) fail("max_retries", "must be >= 1");
  }
};

struct GeneratedMap {
  GridMap map;
  std::vector<EpisodeSpec> episodes;
  int rejections = 0;  // attempts discarded before success
};

namespace detail {

inline std::vector<Cell> free_cells(const GridMap& map) {
  std::vector<Cell> cells;
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      if (map.free({x, y})) cells.push_back({x, y});
  return cells;
}

// Blocks every free cell outside the largest 4-connected component.
inline void keep_largest_component(GridMap& map) {
  std::vector<int> label(map.cell_count(), -1);
  int best_label = -1;
  std::size_t best_size = 0;
  int next = 0;
  for (const Cell c : free_cells(map)) {
    if (label[map.index(c)] >= 0) continue;
    const auto dist = cell_distances(map, c);
    std::size_t size = 0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i] != kUnreachable) {
        label[i] = next;
        ++size;
      }
    }
    if (size > best_size) {
      best_size = size;
      best_label = next;
    }
    ++next;
  }
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (map.occupancy[i] == 0 && label[i] != best_label) map.occupancy[i] = 1;
  }
}

inline int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

inline bool try_generate(Rng& rng, const MapConfig& cfg, const EnvConfig& env, GeneratedMap& out) {
  GridMap map;
  map.width = cfg.width;
  map.height = cfg.height;
  map.occupancy.assign(map.cell_count(), 0);
  for (auto& o : map.occupancy) o = rng.bernoulli(cfg.obstacle_density) ? 1 : 0;
  keep_largest_component(map);
  auto cells = free_cells(map);
  if (cells.size() * 2 < map.cell_count()) return false;

  // Goal and landmarks on distinct, spaced-out cells.
  rng.shuffle(cells.begin(), cells.end());
  std::vector<Cell> anchors;
  for (const Cell c : cells) {
    bool spaced = true;
    for (const Cell a : anchors) spaced = spaced && manhattan(a, c) >= cfg.min_landmark_spacing;
    if (spaced) anchors.push_back(c);
    if (static_cast<int>(anchors.size()) == cfg.num_landmarks + 1) break;
  }
  if (static_cast<int>(anchors.size()) != cfg.num_landmarks + 1) return false;
  map.goal = anchors[0];
  for (int i = 0; i < cfg.num_landmarks; ++i) map.landmarks.push_back({i, anchors[static_cast<std::size_t>(i) + 1]});

  TeacherPolicy teacher;
  std::vector<EpisodeSpec> episodes;
  int attempts = 0;
  while (static_cast<int>(episodes.size()) < cfg.episodes_per_map) {
    if (++attempts > 20 * cfg.episodes_per_map) return false;
    EpisodeSpec spec;
    spec.id = static_cast<int>(episodes.size());
    spec.map = map;
    spec.max_steps = cfg.max_steps;
    spec.goal_radius = cfg.goal_radius;
    const Cell start = cells[rng.index(cells.size())];
    if (euclidean(start, map.goal) <= cfg.goal_radius) continue;
    spec.start = {start.x, start.y, static_cast<Heading>(rng.index(kNumHeadings))};
    const int m = cfg.min_instruction + static_cast<int>(rng.index(cfg.max_instruction - cfg.min_instruction + 1));
    std::vector<int> ids(static_cast<std::size_t>(cfg.num_landmarks));
    for (int i = 0; i < cfg.num_landmarks; ++i) ids[static_cast<std::size_t>(i)] = i;
    rng.shuffle(ids.begin(), ids.end());
    spec.instruction.assign(ids.begin(), ids.begin() + m);
    spec.shortest_path_length = compute_shortest_path_length(map, spec.start, spec.instruction);
    // The expert must finish inside the step budget.
    Rng unused(0);
    if (outcome_reward(rollout(teacher, spec, env, unused), spec) != 1) continue;
    episodes.push_back(std::move(spec));
  }
  out.map = std::move(map);
  out.episodes = std::move(episodes);
  return true;
}

}  // namespace detail

inline GeneratedMap generate_map(std::uint64_t seed, const MapConfig& cfg, const EnvConfig& env = {}) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x6d6170));
  GeneratedMap out;
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    if (detail::try_generate(rng, cfg, env, out)) {
      out.rejections = attempt;
      return out;
    }
  }
  throw Error("map generation failed for seed " + std::to_string(seed) + " after " + std::to_string(cfg.max_retries) +
              " attempts");
}

// Concatenates the episodes of `num_maps` maps into one pool with globally
// unique episode ids starting at `first_id`.
inline std::vector<EpisodeSpec> generate_pool(std::uint64_t seed, int num_maps, const MapConfig& cfg,
                                              const EnvConfig& env = {}, int episodes_per_map = -1, int first_id = 0) {
  MapConfig c = cfg;
  if (episodes_per_map > 0) c.episodes_per_map = episodes_per_map;
  std::vector<EpisodeSpec> pool;
  int id = first_id;
  for (int i = 0; i < num_maps; ++i) {
    auto gen = generate_map(derive_seed(seed, static_cast<std::uint64_t>(i), 0x706f6f6c), c, env);
    for (auto& e : gen.episodes) {
      e.id = id++;
      pool.push_back(std::move(e));
    }
  }
  return pool;
}

}  // namespace saca
