#pragma once

// File formats: JSON pools and checkpoints, JSON-lines trajectories and audit
// reports, the run config, metrics / eval CSVs and the valid-prefix statistics.

#include <array>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saca/trainer.hpp"

namespace saca {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Value types

inline void to_json(json& j, const Cell& c) { j = json::array({c.x, c.y}); }
inline void from_json(const json& j, Cell& c) {
  if (!j.is_array() || j.size() != 2) throw Error("cell: expected [x, y]");
  c = {j[0].get<int>(), j[1].get<int>()};
}

inline void to_json(json& j, const Pose& p) { j = {{"x", p.x}, {"y", p.y}, {"heading", std::string(to_string(p.heading))}}; }
inline void from_json(const json& j, Pose& p) {
  p.x = j.at("x").get<int>();
  p.y = j.at("y").get<int>();
  p.heading = heading_from_string(j.at("heading").get<std::string>());
}

inline void to_json(json& j, const Landmark& l) { j = {{"id", l.id}, {"cell", l.cell}}; }
inline void from_json(const json& j, Landmark& l) {
  l.id = j.at("id").get<int>();
  l.cell = j.at("cell").get<Cell>();
}

// Occupancy is written as one string per row, '#' blocked and '.' free.
inline void to_json(json& j, const GridMap& m) {
  json rows = json::array();
  for (int y = 0; y < m.height; ++y) {
    std::string row(static_cast<std::size_t>(m.width), '.');
    for (int x = 0; x < m.width; ++x) {
      if (m.occupancy[m.index({x, y})]) row[static_cast<std::size_t>(x)] = '#';
    }
    rows.push_back(row);
  }
  j = {{"width", m.width}, {"height", m.height}, {"rows", rows}, {"landmarks", m.landmarks}, {"goal", m.goal}};
}
inline void from_json(const json& j, GridMap& m) {
  m.width = j.at("width").get<int>();
  m.height = j.at("height").get<int>();
  const auto& rows = j.at("rows");
  if (!rows.is_array() || static_cast<int>(rows.size()) != m.height) throw Error("map: row count != height");
  m.occupancy.assign(static_cast<std::size_t>(m.width) * m.height, 0);
  for (int y = 0; y < m.height; ++y) {
    const auto row = rows[static_cast<std::size_t>(y)].get<std::string>();
    if (static_cast<int>(row.size()) != m.width) throw Error("map: row " + std::to_string(y) + " has wrong width");
    for (int x = 0; x < m.width; ++x) {
      const char c = row[static_cast<std::size_t>(x)];
      if (c != '#' && c != '.') throw Error("map: bad occupancy character in row " + std::to_string(y));
      m.occupancy[m.index({x, y})] = c == '#' ? 1 : 0;
    }
  }
  m.landmarks = j.at("landmarks").get<std::vector<Landmark>>();
  m.goal = j.at("goal").get<Cell>();
}

inline void to_json(json& j, const EpisodeSpec& e) {
  j = {{"id", e.id},
       {"map", e.map},
       {"start", e.start},
       {"instruction", e.instruction},
       {"shortest_path_length", e.shortest_path_length},
       {"max_steps", e.max_steps},
       {"goal_radius", e.goal_radius}};
}
inline void from_json(const json& j, EpisodeSpec& e) {
  e.id = j.at("id").get<int>();
  e.map = j.at("map").get<GridMap>();
  e.start = j.at("start").get<Pose>();
  e.instruction = j.at("instruction").get<std::vector<int>>();
  e.shortest_path_length = j.at("shortest_path_length").get<int>();
  e.max_steps = j.at("max_steps").get<int>();
  e.goal_radius = j.at("goal_radius").get<double>();
}

inline void to_json(json& j, const PerceptionMeasurement& m) {
  j = {{"s_global", m.s_global}, {"c_det", m.c_det}, {"c_iou", m.c_iou}, {"s_local", m.s_local}};
}
inline void from_json(const json& j, PerceptionMeasurement& m) {
  m.s_global = j.at("s_global").get<double>();
  m.c_det = j.at("c_det").get<double>();
  m.c_iou = j.at("c_iou").get<double>();
  m.s_local = j.at("s_local").get<double>();
}

inline void to_json(json& j, const Step& s) {
  j = {{"features", s.features},
       {"measurement", s.measurement},
       {"action", std::string(to_string(s.action))},
       {"log_prob", s.log_prob},
       {"pose_after", s.pose_after}};
}
inline void from_json(const json& j, Step& s) {
  s.features = j.at("features").get<std::vector<double>>();
  s.measurement = j.at("measurement").get<PerceptionMeasurement>();
  s.action = action_from_string(j.at("action").get<std::string>());
  s.log_prob = j.at("log_prob").get<double>();
  s.pose_after = j.at("pose_after").get<Pose>();
}

inline void to_json(json& j, const Trajectory& t) {
  j = {{"spec_id", t.spec_id}, {"steps", t.steps}, {"stopped", t.stopped}, {"final_pose", t.final_pose}};
}
inline void from_json(const json& j, Trajectory& t) {
  t.spec_id = j.at("spec_id").get<int>();
  t.steps = j.at("steps").get<std::vector<Step>>();
  t.stopped = j.at("stopped").get<bool>();
  // final_pose is optional on input; it defaults to the last step's pose.
  if (j.contains("final_pose")) {
    t.final_pose = j.at("final_pose").get<Pose>();
  } else {
    t.final_pose = t.steps.empty() ? Pose{} : t.steps.back().pose_after;
  }
}

inline void to_json(json& j, const AuditReport& a) {
  j = {{"soft_scores", a.soft_scores},
       {"mask", a.mask},
       {"t_div", a.t_div},
       {"r_proc", a.r_proc},
       {"landmark_trace", a.landmark_trace}};
}
inline void from_json(const json& j, AuditReport& a) {
  a.soft_scores = j.at("soft_scores").get<std::vector<double>>();
  a.mask = j.at("mask").get<std::vector<std::uint8_t>>();
  a.t_div = j.at("t_div").get<std::size_t>();
  a.r_proc = j.at("r_proc").get<double>();
  a.landmark_trace = j.at("landmark_trace").get<std::vector<int>>();
  if (a.mask.size() != a.soft_scores.size() || a.landmark_trace.size() != a.soft_scores.size()) {
    throw Error("audit report: field lengths differ");
  }
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed: " + path);
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(what + ": " + e.what());
  }
}

// JSON-lines: one record per non-blank line. Errors carry the 1-based line.
template <typename T>
std::vector<T> parse_jsonl(std::istream& in) {
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line).get<T>());
    } catch (const std::exception& e) {
      throw Error("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
void dump_jsonl(std::ostream& out, const std::vector<T>& records) {
  for (const auto& r : records) out << json(r).dump() << '\n';
}

template <typename T>
std::vector<T> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return parse_jsonl<T>(in);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

// Pools: {"train": [...], "heldout": [...]}; a bare array loads as `train`.
inline json pools_to_json(const Pools& p) { return {{"train", p.train}, {"heldout", p.heldout}}; }

inline Pools pools_from_json(const json& j) {
  Pools p;
  if (j.is_array()) {
    p.train = j.get<std::vector<EpisodeSpec>>();
  } else {
    if (j.contains("train")) p.train = j.at("train").get<std::vector<EpisodeSpec>>();
    if (j.contains("heldout")) p.heldout = j.at("heldout").get<std::vector<EpisodeSpec>>();
  }
  for (const auto& e : p.train) validate_episode(e);
  for (const auto& e : p.heldout) validate_episode(e);
  return p;
}

inline Pools load_pools(const std::string& path) {
  try {
    return pools_from_json(parse_json(read_file(path), path));
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: {"format": "saca-policy", "tensors": {name: {"shape": [r, c], "data": [...]}}}

namespace detail {

inline json tensor_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

inline Eigen::MatrixXd tensor_from_json(const json& j, const std::string& name) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw Error("tensor " + name + ": bad shape");
  if (static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1]) throw Error("tensor " + name + ": data size != shape");
  Eigen::MatrixXd m(shape[0], shape[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < shape[0]; ++r) {
    for (Eigen::Index c = 0; c < shape[1]; ++c) m(r, c) = data[k++];
  }
  return m;
}

}  // namespace detail

inline json params_to_json(const PolicyParams& p) {
  return {{"format", "saca-policy"},
          {"tensors",
           {{"W1", detail::tensor_json(p.W1)},
            {"b1", detail::tensor_json(p.b1)},
            {"W2", detail::tensor_json(p.W2)},
            {"b2", detail::tensor_json(p.b2)},
            {"E", detail::tensor_json(p.E)}}}};
}

inline PolicyParams params_from_json(const json& j) {
  if (j.value("format", "") != "saca-policy") throw Error("checkpoint: missing format tag");
  const auto& t = j.at("tensors");
  PolicyParams p;
  p.W1 = detail::tensor_from_json(t.at("W1"), "W1");
  p.W2 = detail::tensor_from_json(t.at("W2"), "W2");
  p.E = detail::tensor_from_json(t.at("E"), "E");
  const Eigen::MatrixXd b1 = detail::tensor_from_json(t.at("b1"), "b1");
  const Eigen::MatrixXd b2 = detail::tensor_from_json(t.at("b2"), "b2");
  if (b1.cols() != 1 || b2.cols() != 1) throw Error("checkpoint: biases must be column vectors");
  p.b1 = b1.col(0);
  p.b2 = b2.col(0);
  const auto h = p.W1.rows();
  if (p.b1.size() != h || p.W2.rows() != kNumActions || p.W2.cols() != h || p.b2.size() != kNumActions ||
      p.E.rows() != kNumActions || p.E.cols() != h) {
    throw Error("checkpoint: inconsistent tensor shapes");
  }
  if (!p.all_finite()) throw Error("checkpoint: non-finite parameter");
  return p;
}

inline PolicyParams load_checkpoint(const std::string& path) {
  try {
    return params_from_json(parse_json(read_file(path), path));
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const PolicyParams& p) { write_file(path, params_to_json(p).dump() + "\n"); }

// ---------------------------------------------------------------------------
// Config. Every key is optional; unknown keys are rejected by name.

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw Error((prefix_.empty() ? std::string("config") : prefix_) + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(name(key) + ": wrong type");
    }
  }

  ConfigReader child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return ConfigReader(j_.contains(key) ? j_.at(key) : empty, name(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw Error(name(k.c_str()) + ": unknown field");
    }
  }

 private:
  std::string name(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  detail::ConfigReader r(j, "");
  r.read("group_size", c.group_size);
  r.read("eta", c.eta);
  r.read("n_rep", c.n_rep);
  r.read("m_neg", c.m_neg);
  r.read("lambda", c.lambda_neg);
  r.read("max_grad_norm", c.max_grad_norm);
  r.read("hidden_dim", c.hidden_dim);
  r.read("iterations", c.iterations);
  r.read("episodes_per_iteration", c.episodes_per_iteration);
  r.read("eval_every", c.eval_every);
  r.read("eval_samples", c.eval_samples);
  r.read("seed", c.seed);

  auto ws = r.child("warm_start");
  ws.read("iterations", c.warm_start_iterations);
  ws.read("episodes", c.warm_start_episodes);
  ws.read("lr", c.warm_start_lr);
  ws.finish();

  auto sc = r.child("scorer");
  sc.read("w1", c.scorer.w1);
  sc.read("w2", c.scorer.w2);
  sc.read("w3", c.scorer.w3);
  sc.read("tau_det", c.scorer.tau_det);
  sc.read("tau_s", c.scorer.tau_s);
  sc.read("tau_h", c.scorer.tau_h);
  sc.read("tau_reach", c.scorer.tau_reach);
  sc.read("c_consec", c.scorer.c_consec);
  sc.finish();

  auto pe = r.child("perception");
  pe.read("vis_radius", c.perception.vis_radius);
  pe.read("corridor_width", c.perception.corridor_width);
  pe.read("corridor_weight", c.perception.corridor_weight);
  pe.read("detected_iou", c.perception.detected_iou);
  pe.read("local_gain", c.perception.local_gain);
  pe.read("undetected_confidence", c.perception.undetected_confidence);
  pe.read("noise_std", c.perception.noise_std);
  pe.read("ground_stop", c.perception.ground_stop);
  pe.finish();

  auto ad = r.child("advantage");
  ad.read("epsilon0", c.advantage.epsilon0);
  ad.read("delta", c.advantage.delta);
  ad.read("kappa", c.advantage.kappa);
  ad.read("s_neg", c.advantage.s_neg);
  ad.read("beta_kl", c.advantage.beta_kl);
  ad.finish();

  auto lo = r.child("loss");
  lo.read("lambda_rep", c.loss.lambda_rep);
  lo.read("lambda_1", c.loss.lambda_1);
  lo.read("lambda_2", c.loss.lambda_2);
  lo.read("alpha", c.loss.alpha);
  lo.read("clip_eps", c.loss.clip_eps);
  lo.finish();

  auto op = r.child("optimizer");
  op.read("lr", c.optimizer.lr);
  op.read("beta1", c.optimizer.beta1);
  op.read("beta2", c.optimizer.beta2);
  op.read("eps", c.optimizer.eps);
  op.read("weight_decay", c.optimizer.weight_decay);
  op.finish();

  auto tg = r.child("toggles");
  tg.read("soft_score", c.toggles.use_soft_score);
  tg.read("afr", c.toggles.use_afr);
  tg.read("rr", c.toggles.use_rr);
  tg.finish();

  auto po = r.child("pool");
  po.read("seed", c.pool.seed);
  po.read("train_maps", c.pool.train_maps);
  po.read("heldout_maps", c.pool.heldout_maps);
  po.read("train_episodes_per_map", c.pool.train_episodes_per_map);
  po.read("heldout_episodes_per_map", c.pool.heldout_episodes_per_map);
  auto mp = po.child("map");
  mp.read("width", c.pool.map.width);
  mp.read("height", c.pool.map.height);
  mp.read("num_landmarks", c.pool.map.num_landmarks);
  mp.read("obstacle_density", c.pool.map.obstacle_density);
  mp.read("min_instruction", c.pool.map.min_instruction);
  mp.read("max_instruction", c.pool.map.max_instruction);
  mp.read("max_steps", c.pool.map.max_steps);
  mp.read("goal_radius", c.pool.map.goal_radius);
  mp.read("min_landmark_spacing", c.pool.map.min_landmark_spacing);
  mp.read("max_retries", c.pool.map.max_retries);
  mp.finish();
  po.finish();

  r.finish();
  c.validate();
  return c;
}

inline json config_to_json(const TrainConfig& c) {
  return {
      {"group_size", c.group_size},
      {"eta", c.eta},
      {"n_rep", c.n_rep},
      {"m_neg", c.m_neg},
      {"lambda", c.lambda_neg},
      {"max_grad_norm", c.max_grad_norm},
      {"hidden_dim", c.hidden_dim},
      {"iterations", c.iterations},
      {"episodes_per_iteration", c.episodes_per_iteration},
      {"eval_every", c.eval_every},
      {"eval_samples", c.eval_samples},
      {"seed", c.seed},
      {"warm_start", {{"iterations", c.warm_start_iterations}, {"episodes", c.warm_start_episodes}, {"lr", c.warm_start_lr}}},
      {"scorer",
       {{"w1", c.scorer.w1},
        {"w2", c.scorer.w2},
        {"w3", c.scorer.w3},
        {"tau_det", c.scorer.tau_det},
        {"tau_s", c.scorer.tau_s},
        {"tau_h", c.scorer.tau_h},
        {"tau_reach", c.scorer.tau_reach},
        {"c_consec", c.scorer.c_consec}}},
      {"perception",
       {{"vis_radius", c.perception.vis_radius},
        {"corridor_width", c.perception.corridor_width},
        {"corridor_weight", c.perception.corridor_weight},
        {"detected_iou", c.perception.detected_iou},
        {"local_gain", c.perception.local_gain},
        {"undetected_confidence", c.perception.undetected_confidence},
        {"noise_std", c.perception.noise_std},
        {"ground_stop", c.perception.ground_stop}}},
      {"advantage",
       {{"epsilon0", c.advantage.epsilon0},
        {"delta", c.advantage.delta},
        {"kappa", c.advantage.kappa},
        {"s_neg", c.advantage.s_neg},
        {"beta_kl", c.advantage.beta_kl}}},
      {"loss",
       {{"lambda_rep", c.loss.lambda_rep},
        {"lambda_1", c.loss.lambda_1},
        {"lambda_2", c.loss.lambda_2},
        {"alpha", c.loss.alpha},
        {"clip_eps", c.loss.clip_eps}}},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"eps", c.optimizer.eps},
        {"weight_decay", c.optimizer.weight_decay}}},
      {"toggles", {{"soft_score", c.toggles.use_soft_score}, {"afr", c.toggles.use_afr}, {"rr", c.toggles.use_rr}}},
      {"pool",
       {{"seed", c.pool.seed},
        {"train_maps", c.pool.train_maps},
        {"heldout_maps", c.pool.heldout_maps},
        {"train_episodes_per_map", c.pool.train_episodes_per_map},
        {"heldout_episodes_per_map", c.pool.heldout_episodes_per_map},
        {"map",
         {{"width", c.pool.map.width},
          {"height", c.pool.map.height},
          {"num_landmarks", c.pool.map.num_landmarks},
          {"obstacle_density", c.pool.map.obstacle_density},
          {"min_instruction", c.pool.map.min_instruction},
          {"max_instruction", c.pool.map.max_instruction},
          {"max_steps", c.pool.map.max_steps},
          {"goal_radius", c.pool.map.goal_radius},
          {"min_landmark_spacing", c.pool.map.min_landmark_spacing},
          {"max_retries", c.pool.map.max_retries}}}}},
  };
}

// An empty or whitespace-only file yields the defaults.
inline TrainConfig load_config(const std::string& path) {
  const std::string text = read_file(path);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return config_from_json(json::object());
  return config_from_json(parse_json(text, path));
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kMetricsHeader =
    "iteration,scenario,sr,spl,ne,ndtw,group_success,grpo,align,corr,repair,total,grad_norm,"
    "repairs_attempted,repairs_succeeded,adv_stage,adv_min,adv_mean,adv_max,margin,shrunk";

// One row per iteration; evaluation columns are empty between evaluation points.
inline std::string metrics_row(const IterationReport& r, const std::optional<Metrics>& eval) {
  using detail::fmt;
  std::ostringstream os;
  os << r.iteration << ',' << to_string(r.scenario) << ',';
  if (eval) {
    os << fmt(eval->success) << ',' << fmt(eval->spl) << ',' << fmt(eval->navigation_error) << ',' << fmt(eval->ndtw);
  } else {
    os << ",,,";
  }
  double wins = 0;
  for (int o : r.outcomes) wins += o;
  os << ',' << fmt(r.outcomes.empty() ? 0.0 : wins / static_cast<double>(r.outcomes.size()));
  os << ',' << fmt(r.loss.grpo_term) << ',' << fmt(r.loss.align_term) << ',' << fmt(r.loss.corr_term) << ','
     << fmt(r.loss.repair_term) << ',' << fmt(r.loss.total) << ',' << fmt(r.grad_norm) << ',' << r.repairs_attempted << ','
     << r.repairs_succeeded << ',';
  if (r.advantages) {
    const auto& a = *r.advantages;
    os << to_string(a.stage) << ',' << fmt(a.min()) << ',' << fmt(a.mean()) << ',' << fmt(a.max()) << ','
       << (std::isnan(a.margin) ? std::string() : fmt(a.margin)) << ',' << (a.shrunk ? 1 : 0);
  } else {
    os << "none,,,,,0";
  }
  return os.str();
}

inline constexpr const char* kEvalHeader = "spec_id,success,spl,ne,ndtw,steps";

inline std::string eval_csv(const EvalResult& r) {
  using detail::fmt;
  std::ostringstream os;
  os << kEvalHeader << '\n';
  for (const auto& row : r.rows) {
    os << row.spec_id << ',' << fmt(row.metrics.success) << ',' << fmt(row.metrics.spl) << ','
       << fmt(row.metrics.navigation_error) << ',' << fmt(row.metrics.ndtw) << ',' << row.steps << '\n';
  }
  os << "mean," << fmt(r.mean.success) << ',' << fmt(r.mean.spl) << ',' << fmt(r.mean.navigation_error) << ','
     << fmt(r.mean.ndtw) << ",\n";
  return os.str();
}

// Per-iteration group trace: roles, plan indices and process scores.
inline json plan_trace(const IterationReport& r) {
  json roles = json::array();
  for (Role role : r.roles) roles.push_back(to_string(role));
  json repaired = json::array();
  for (const auto& [i, rep] : r.plan.repaired) {
    repaired.push_back({{"index", i}, {"prefix_len", rep.prefix_len}, {"attempts", rep.attempts_used}});
  }
  json j = {{"iteration", r.iteration},
            {"spec_id", r.spec_id},
            {"scenario", to_string(r.scenario)},
            {"outcomes", r.outcomes},
            {"r_proc", r.r_procs},
            {"roles", roles},
            {"near_miss", r.plan.near_miss_indices},
            {"repaired", repaired},
            {"negatives", r.plan.negative_indices},
            {"subgroup", r.plan.subgroup_indices}};
  j["anchor"] = r.plan.anchor_index ? json(*r.plan.anchor_index) : json(nullptr);
  if (r.advantages) j["advantages"] = r.advantages->values;
  return j;
}

// ---------------------------------------------------------------------------
// Valid-prefix statistics over failed trajectories.

struct PrefixStats {
  std::size_t failures = 0;
  std::size_t total = 0;
  std::array<std::size_t, 10> counts{};
  double eta = 0.5;
  double above_eta = 0.0;  // fraction of failures with t_div / T > eta

  bool empty() const { return failures == 0; }
  double fraction(std::size_t bin) const { return failures ? static_cast<double>(counts[bin]) / failures : 0.0; }
};

// Bin k covers [k/10, (k+1)/10); a ratio of exactly 1 lands in the last bin.
// Ratios above 1 (no divergence: t_div = T + 1) are clamped into the last bin.
inline std::size_t decile(double ratio) {
  if (ratio < 0) throw Error("decile: negative ratio");
  return std::min<std::size_t>(9, static_cast<std::size_t>(ratio * 10.0));
}

inline PrefixStats prefix_stats(const std::vector<AuditReport>& audits, const std::vector<int>& outcomes, double eta) {
  if (audits.size() != outcomes.size()) throw Error("prefix_stats: audits and outcomes differ in length");
  PrefixStats s;
  s.eta = eta;
  s.total = audits.size();
  std::size_t above = 0;
  for (std::size_t i = 0; i < audits.size(); ++i) {
    if (outcomes[i] == 1 || audits[i].length() == 0) continue;
    const double ratio = audits[i].valid_prefix_ratio();
    ++s.failures;
    ++s.counts[decile(ratio)];
    if (ratio > eta) ++above;
  }
  s.above_eta = s.failures ? static_cast<double>(above) / s.failures : 0.0;
  return s;
}

// Trajectories are re-audited with `scorer`; outcomes need the episode pool.
inline PrefixStats run_stats(const std::vector<Trajectory>& trajs, const std::map<int, EpisodeSpec>& specs,
                             const ScorerConfig& scorer, double eta) {
  std::vector<AuditReport> audits;
  std::vector<int> outcomes;
  for (const auto& t : trajs) {
    const auto it = specs.find(t.spec_id);
    if (it == specs.end()) throw Error("run_stats: unknown spec_id " + std::to_string(t.spec_id));
    if (t.steps.empty()) continue;
    audits.push_back(audit_trajectory(t, it->second, scorer));
    outcomes.push_back(outcome_reward(t, it->second));
  }
  return prefix_stats(audits, outcomes, eta);
}

inline json stats_json(const PrefixStats& s) {
  json bins = json::array();
  for (std::size_t k = 0; k < s.counts.size(); ++k) {
    bins.push_back({{"lo", k / 10.0}, {"hi", (k + 1) / 10.0}, {"count", s.counts[k]}, {"fraction", s.fraction(k)}});
  }
  return {{"trajectories", s.total},
          {"failures", s.failures},
          {"eta", s.eta},
          {"above_eta_fraction", s.above_eta},
          {"bins", bins},
          {"empty", s.empty()}};
}

inline std::string stats_table(const PrefixStats& s) {
  std::ostringstream os;
  if (s.empty()) {
    os << "no failed trajectories (" << s.total << " total); nothing to report\n";
    return os.str();
  }
  char buf[96];
  os << "valid-prefix ratio t_div/T over " << s.failures << " failed of " << s.total << " trajectories\n";
  os << "  bin          count  fraction\n";
  for (std::size_t k = 0; k < s.counts.size(); ++k) {
    std::snprintf(buf, sizeof buf, "  [%.1f, %.1f%c  %6zu  %8.4f\n", k / 10.0, (k + 1) / 10.0, k == 9 ? ']' : ')', s.counts[k],
                  s.fraction(k));
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "  ratio > %.2f: %.4f\n", s.eta, s.above_eta);
  os << buf;
  return os.str();
}

}  // namespace saca
