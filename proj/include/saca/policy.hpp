#pragma once

// Two-layer stochastic policy over the four navigation actions, its
// per-trajectory losses with hand-written reverse-mode gradients, the exact
// categorical KL, and an AdamW optimizer.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <span>
#include <string>

#include "saca/auditor.hpp"
#include "saca/episode.hpp"
#include "saca/rng.hpp"
#include "saca/rollout.hpp"

namespace saca {

using Vector4 = Eigen::Matrix<double, kNumActions, 1>;

inline int& verbosity() {
  static int level = 0;
  return level;
}

inline void notice(const std::string& msg) {
  if (verbosity() > 0) std::clog << "[saca] " << msg << '\n';
}

struct PolicyParams {
  Eigen::MatrixXd W1;  // H x D
  Eigen::VectorXd b1;  // H
  Eigen::MatrixXd W2;  // 4 x H
  Eigen::VectorXd b2;  // 4
  Eigen::MatrixXd E;   // 4 x H, per-action embeddings for the contrastive term

  int hidden_dim() const { return static_cast<int>(W1.rows()); }
  int feature_dim() const { return static_cast<int>(W1.cols()); }

  static PolicyParams zeros(int hidden_dim, int feature_dim = kFeatureDim) {
    PolicyParams p;
    p.W1 = Eigen::MatrixXd::Zero(hidden_dim, feature_dim);
    p.b1 = Eigen::VectorXd::Zero(hidden_dim);
    p.W2 = Eigen::MatrixXd::Zero(kNumActions, hidden_dim);
    p.b2 = Eigen::VectorXd::Zero(kNumActions);
    p.E = Eigen::MatrixXd::Zero(kNumActions, hidden_dim);
    return p;
  }

  static PolicyParams zeros_like(const PolicyParams& other) { return zeros(other.hidden_dim(), other.feature_dim()); }

  // Scaled-normal initialization; output layer starts small so the initial
  // policy is close to uniform.
  static PolicyParams random(int hidden_dim, std::uint64_t seed, int feature_dim = kFeatureDim) {
    Rng rng(derive_seed(seed, 0x706f6c));
    PolicyParams p = zeros(hidden_dim, feature_dim);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(feature_dim));
    for (Eigen::Index i = 0; i < p.W1.size(); ++i) p.W1.data()[i] = s1 * rng.normal();
    const double s2 = 0.1 / std::sqrt(static_cast<double>(hidden_dim));
    for (Eigen::Index i = 0; i < p.W2.size(); ++i) p.W2.data()[i] = s2 * rng.normal();
    for (Eigen::Index i = 0; i < p.E.size(); ++i) p.E.data()[i] = rng.normal();
    return p;
  }

  template <typename F>
  void for_each(F&& f) {
    f("W1", W1);
    f("b1", b1);
    f("W2", W2);
    f("b2", b2);
    f("E", E);
  }
  template <typename F>
  void for_each(F&& f) const {
    f("W1", W1);
    f("b1", b1);
    f("W2", W2);
    f("b2", b2);
    f("E", E);
  }

  template <typename F>
  friend void zip(PolicyParams& a, const PolicyParams& b, F&& f) {
    f(a.W1, b.W1);
    f(a.b1, b.b1);
    f(a.W2, b.W2);
    f(a.b2, b.b2);
    f(a.E, b.E);
  }

  std::size_t size() const { return W1.size() + b1.size() + W2.size() + b2.size() + E.size(); }

  double squared_norm() const {
    double s = 0.0;
    for_each([&](const char*, const auto& t) { s += t.squaredNorm(); });
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const char*, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  PolicyParams& operator+=(const PolicyParams& o) {
    zip(*this, o, [](auto& x, const auto& y) { x += y; });
    return *this;
  }
  PolicyParams& operator*=(double s) {
    for_each([s](const char*, auto& t) { t *= s; });
    return *this;
  }

  bool operator==(const PolicyParams& o) const {
    return W1 == o.W1 && b1 == o.b1 && W2 == o.W2 && b2 == o.b2 && E == o.E;
  }
};

using ParamGradients = PolicyParams;

struct ActionDistribution {
  Vector4 logits = Vector4::Zero();
  Vector4 probs = Vector4::Constant(0.25);

  static ActionDistribution from_logits(const Vector4& logits) {
    ActionDistribution d;
    d.logits = logits;
    const double mx = logits.maxCoeff();
    const Vector4 e = (logits.array() - mx).exp();
    d.probs = e / e.sum();
    return d;
  }

  double log_prob(Action a) const {
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    const double lp = logits[static_cast<int>(a)] - lse;
    return lp > 0.0 ? 0.0 : lp;  // keeps NaN visible, unlike std::min
  }

  Action argmax() const {
    Eigen::Index i = 0;
    probs.maxCoeff(&i);
    return static_cast<Action>(i);
  }

  // Inverse CDF over the four categories.
  Action sample(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    for (int a = 0; a < kNumActions - 1; ++a) {
      acc += probs[a];
      if (u < acc) return static_cast<Action>(a);
    }
    return static_cast<Action>(kNumActions - 1);
  }
};

inline double exact_kl(const ActionDistribution& p, const ActionDistribution& q) {
  double kl = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    if (p.probs[a] > 0.0) kl += p.probs[a] * (p.log_prob(static_cast<Action>(a)) - q.log_prob(static_cast<Action>(a)));
  }
  return std::max(0.0, kl);
}

struct ForwardPass {
  Eigen::VectorXd hidden;
  ActionDistribution dist;
};

inline ForwardPass forward(const PolicyParams& params, std::span<const double> features) {
  if (static_cast<Eigen::Index>(features.size()) != params.W1.cols()) {
    throw Error("forward: feature dimension " + std::to_string(features.size()) + " != " +
                std::to_string(params.W1.cols()));
  }
  const Eigen::Map<const Eigen::VectorXd> x(features.data(), static_cast<Eigen::Index>(features.size()));
  ForwardPass out;
  out.hidden = (params.W1 * x + params.b1).array().tanh();
  out.dist = ActionDistribution::from_logits(params.W2 * out.hidden + params.b2);
  return out;
}

namespace detail {

// Accumulates d(coeff * v . hidden)/d(W1, b1) given dL/dhidden = g_hidden.
inline void backprop_hidden(const ForwardPass& fp, std::span<const double> features, const Eigen::VectorXd& g_hidden,
                            ParamGradients& grad) {
  const Eigen::Map<const Eigen::VectorXd> x(features.data(), static_cast<Eigen::Index>(features.size()));
  const Eigen::VectorXd g_z = g_hidden.array() * (1.0 - fp.hidden.array().square());
  grad.W1.noalias() += g_z * x.transpose();
  grad.b1 += g_z;
}

// grad += coeff * d log pi(a | x) / d params
inline void accumulate_log_prob_grad(const PolicyParams& params, const ForwardPass& fp, std::span<const double> features,
                                     Action action, double coeff, ParamGradients& grad) {
  Vector4 g_logits = -coeff * fp.dist.probs;
  g_logits[static_cast<int>(action)] += coeff;
  grad.W2.noalias() += g_logits * fp.hidden.transpose();
  grad.b2 += g_logits;
  const Eigen::VectorXd g_hidden = params.W2.transpose() * g_logits;
  backprop_hidden(fp, features, g_hidden, grad);
}

inline constexpr double kNormFloor = 1e-12;

}  // namespace detail

// Mean over steps of the clipped policy-ratio loss.
inline double loss_grpo(const Trajectory& traj, double advantage, const PolicyParams& params, double clip_eps,
                        ParamGradients* grad = nullptr, double scale = 1.0) {
  if (traj.steps.empty()) return 0.0;
  const double inv_t = 1.0 / static_cast<double>(traj.steps.size());
  double total = 0.0;
  for (const Step& step : traj.steps) {
    const ForwardPass fp = forward(params, step.features);
    const double ratio = std::exp(fp.dist.log_prob(step.action) - step.log_prob);
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    const double unclipped_obj = ratio * advantage;
    const double clipped_obj = clipped * advantage;
    total += -std::min(unclipped_obj, clipped_obj);
    // The gradient flows only through the unclipped branch, and only when it is the active minimum.
    if (grad != nullptr && advantage != 0.0 && unclipped_obj <= clipped_obj) {
      detail::accumulate_log_prob_grad(params, fp, step.features, step.action, -scale * inv_t * advantage * ratio, *grad);
    }
  }
  return total * inv_t;
}

// Negative log-likelihood of the recorded actions on steps [first, last).
inline double loss_cloning(const Trajectory& traj, std::size_t first, std::size_t last, const PolicyParams& params,
                           ParamGradients* grad = nullptr, double scale = 1.0) {
  last = std::min(last, traj.steps.size());
  double total = 0.0;
  for (std::size_t t = first; t < last; ++t) {
    const Step& step = traj.steps[t];
    const ForwardPass fp = forward(params, step.features);
    total -= fp.dist.log_prob(step.action);
    if (grad != nullptr) detail::accumulate_log_prob_grad(params, fp, step.features, step.action, -scale, *grad);
  }
  return total;
}

// Behaviour cloning on the valid prefix (steps before the divergence point).
inline double loss_align(const Trajectory& anchor, const AuditReport& audit, const PolicyParams& params,
                         ParamGradients* grad = nullptr, double scale = 1.0) {
  if (audit.valid_prefix() == 0) {
    notice("loss_align: empty valid prefix, term is zero");
    return 0.0;
  }
  return loss_cloning(anchor, 0, audit.valid_prefix(), params, grad, scale);
}

struct CosineParts {
  double value = 0.0;
  Eigen::VectorXd d_h;  // d cos / d h
  Eigen::VectorXd d_u;  // d cos / d u
};

inline CosineParts cosine(const Eigen::VectorXd& h, const Eigen::VectorXd& u) {
  const double nh = std::max(h.norm(), detail::kNormFloor);
  const double nu = std::max(u.norm(), detail::kNormFloor);
  CosineParts c;
  c.value = h.dot(u) / (nh * nu);
  c.d_h = u / (nh * nu) - c.value * h / (nh * nh);
  c.d_u = h / (nh * nu) - c.value * u / (nu * nu);
  return c;
}

// Two-way contrastive loss at the divergence point between the teacher
// action (positive) and the action actually taken (negative).
inline double loss_corr(const Trajectory& anchor, const AuditReport& audit, Action teacher, const PolicyParams& params,
                        double alpha, ParamGradients* grad = nullptr, double scale = 1.0) {
  if (!audit.diverged()) {
    notice("loss_corr: no divergence point, term is zero");
    return 0.0;
  }
  const Step& step = anchor.steps[audit.t_div - 1];
  const Action negative = step.action;
  if (negative == teacher) {
    notice("loss_corr: teacher agrees with the taken action, degenerate pair");
    return 0.0;
  }
  const ForwardPass fp = forward(params, step.features);
  const int ip = static_cast<int>(teacher), in = static_cast<int>(negative);
  const Eigen::VectorXd e_pos = params.E.row(ip).transpose();
  const Eigen::VectorXd e_neg = params.E.row(in).transpose();
  const CosineParts sp = cosine(fp.hidden, e_pos);
  const CosineParts sn = cosine(fp.hidden, e_neg);
  const double margin = (sp.value - sn.value) / alpha;
  // -log sigmoid(margin), computed stably.
  const double loss = margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
  if (grad != nullptr) {
    const double sig_neg = 1.0 / (1.0 + std::exp(margin));  // 1 - sigmoid(margin)
    const double d_margin = -scale * sig_neg / alpha;
    const Eigen::VectorXd g_hidden = d_margin * (sp.d_h - sn.d_h);
    grad->E.row(ip) += d_margin * sp.d_u.transpose();
    grad->E.row(in) -= d_margin * sn.d_u.transpose();
    detail::backprop_hidden(fp, step.features, g_hidden, *grad);
  }
  return loss;
}

// Mean per-step KL(current || reference) along a trajectory.
inline double trajectory_kl(const Trajectory& traj, const PolicyParams& current, const PolicyParams& reference) {
  if (traj.steps.empty()) return 0.0;
  double acc = 0.0;
  for (const Step& s : traj.steps) acc += exact_kl(forward(current, s.features).dist, forward(reference, s.features).dist);
  return acc / static_cast<double>(traj.steps.size());
}

// Samples from the policy's action distribution.
struct StochasticPolicy {
  const PolicyParams* params;
  Decision decide(const Observation& obs, Rng& rng) const {
    const ForwardPass fp = forward(*params, obs.features);
    const Action a = fp.dist.sample(rng);
    return {a, fp.dist.log_prob(a)};
  }
};

struct GreedyPolicy {
  const PolicyParams* params;
  Decision decide(const Observation& obs, Rng&) const {
    const ForwardPass fp = forward(*params, obs.features);
    const Action a = fp.dist.argmax();
    return {a, fp.dist.log_prob(a)};
  }
};

struct AdamWConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  AdamWConfig cfg;
  PolicyParams m;
  PolicyParams v;
  long step = 0;

  static OptimizerState for_params(const PolicyParams& p, AdamWConfig cfg) {
    return {cfg, PolicyParams::zeros_like(p), PolicyParams::zeros_like(p), 0};
  }
};

// Decoupled weight decay, bias-corrected moments.
inline void optimizer_step(PolicyParams& params, const ParamGradients& grads, OptimizerState& state) {
  ++state.step;
  const auto& c = state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v.array() = c.beta2 * v.array() + (1.0 - c.beta2) * g.array().square();
    theta *= (1.0 - c.lr * c.weight_decay);
    theta.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
  };
  update(params.W1, grads.W1, state.m.W1, state.v.W1);
  update(params.b1, grads.b1, state.m.b1, state.v.b1);
  update(params.W2, grads.W2, state.m.W2, state.v.W2);
  update(params.b2, grads.b2, state.m.b2, state.v.b2);
  update(params.E, grads.E, state.m.E, state.v.E);
}

// Rescales `grad` in place so its global norm does not exceed `max_norm`;
// returns the norm before clipping. max_norm <= 0 disables clipping.
inline double clip_grad_norm(ParamGradients& grad, double max_norm) {
  const double n = grad.norm();
  if (max_norm > 0.0 && n > max_norm) grad *= max_norm / n;
  return n;
}

}  // namespace saca
