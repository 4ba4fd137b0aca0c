#pragma once

// Scenario objectives assembled from the per-trajectory losses. Passing a
// gradient buffer runs the reverse pass; each term is differentiated into its
// own buffer first so a non-finite term can be reported by name.

#include <optional>
#include <string>

#include "saca/advantage.hpp"
#include "saca/grouping.hpp"
#include "saca/policy.hpp"

namespace saca {

struct LossWeights {
  double lambda_rep = 1.0;
  double lambda_1 = 1.0;  // consistency alignment
  double lambda_2 = 1.0;  // contrastive correction
  double alpha = 0.1;     // contrastive temperature
  double clip_eps = 0.2;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw Error("loss." + field + ": " + why); };
    if (lambda_rep < 0) fail("lambda_rep", "must be >= 0");
    if (lambda_1 < 0) fail("lambda_1", "must be >= 0");
    if (lambda_2 < 0) fail("lambda_2", "must be >= 0");
    if (!(alpha > 0)) fail("alpha", "must be > 0");
    if (!(clip_eps > 0 && clip_eps < 1)) fail("clip_eps", "must lie in (0, 1)");
  }
};

struct LossBreakdown {
  double grpo_term = 0.0;
  double align_term = 0.0;
  double corr_term = 0.0;
  double repair_term = 0.0;
  double total = 0.0;
};

inline double combine(const LossBreakdown& b, const LossWeights& w) {
  return b.grpo_term + w.lambda_rep * b.repair_term + w.lambda_1 * b.align_term + w.lambda_2 * b.corr_term;
}

namespace detail {

template <typename F>
double differentiate_term(const char* name, const PolicyParams& params, ParamGradients* grad, F&& term) {
  if (grad == nullptr) return term(nullptr);
  ParamGradients local = ParamGradients::zeros_like(params);
  const double value = term(&local);
  if (!local.all_finite() || !std::isfinite(value)) throw Error(std::string("non-finite gradient in term ") + name);
  *grad += local;
  return value;
}

}  // namespace detail

// Teacher action at the pose just before the divergence point, aimed at the
// landmark that was active there.
inline std::optional<Action> divergence_teacher_action(const Trajectory& traj, const AuditReport& audit,
                                                       const EpisodeSpec& spec) {
  if (!audit.diverged()) return std::nullopt;
  const std::size_t t = audit.t_div - 1;
  return teacher_action(traj.pose_before(t, spec.start), spec, audit.landmark_trace[t]);
}

// Group-mean clipped loss with outcome advantages plus suffix cloning on the
// repaired trajectories.
inline LossBreakdown loss_mixed(const Group& group, const GroupPlan& plan, const AdvantageVector& advantages,
                                const PolicyParams& params, const LossWeights& w, ParamGradients* grad = nullptr) {
  if (advantages.values.size() != group.size()) throw Error("loss_mixed: advantage count != group size");
  LossBreakdown b;
  const double inv_g = 1.0 / static_cast<double>(group.size());
  b.grpo_term = detail::differentiate_term("grpo", params, grad, [&](ParamGradients* g) {
    double acc = 0.0;
    for (std::size_t i = 0; i < group.size(); ++i) {
      acc += loss_grpo(group.trajectories[i], advantages.values[i], params, w.clip_eps, g, inv_g);
    }
    return acc * inv_g;
  });
  if (!plan.repaired.empty()) {
    const double inv_r = 1.0 / static_cast<double>(plan.repaired.size());
    b.repair_term = detail::differentiate_term("repair", params, grad, [&](ParamGradients* g) {
      double acc = 0.0;
      for (const auto& [index, rep] : plan.repaired) {
        acc += loss_cloning(rep.full, rep.prefix_len, rep.full.steps.size(), params, g, w.lambda_rep * inv_r);
      }
      return acc * inv_r;
    });
  }
  b.total = combine(b, w);
  return b;
}

// Sub-group clipped loss with process advantages plus the anchor's alignment
// and contrastive terms. `advantages` follow plan.subgroup_indices order.
inline LossBreakdown loss_fail(const Group& group, const GroupPlan& plan, const AdvantageVector& advantages,
                               const EpisodeSpec& spec, const PolicyParams& params, const LossWeights& w,
                               ParamGradients* grad = nullptr) {
  if (!plan.anchor_index) throw Error("loss_fail: plan has no anchor");
  if (advantages.values.size() != plan.subgroup_indices.size()) throw Error("loss_fail: advantage count != subgroup size");
  LossBreakdown b;
  const double inv_g = 1.0 / static_cast<double>(plan.subgroup_indices.size());
  b.grpo_term = detail::differentiate_term("grpo", params, grad, [&](ParamGradients* g) {
    double acc = 0.0;
    for (std::size_t k = 0; k < plan.subgroup_indices.size(); ++k) {
      acc += loss_grpo(group.trajectories[plan.subgroup_indices[k]], advantages.values[k], params, w.clip_eps, g, inv_g);
    }
    return acc * inv_g;
  });
  const Trajectory& anchor = group.trajectories[*plan.anchor_index];
  const AuditReport& audit = group.audits[*plan.anchor_index];
  b.align_term = detail::differentiate_term("align", params, grad, [&](ParamGradients* g) {
    return loss_align(anchor, audit, params, g, w.lambda_1);
  });
  if (const auto teacher = divergence_teacher_action(anchor, audit, spec)) {
    b.corr_term = detail::differentiate_term("corr", params, grad, [&](ParamGradients* g) {
      return loss_corr(anchor, audit, *teacher, params, w.alpha, g, w.lambda_2);
    });
  }
  b.total = combine(b, w);
  return b;
}

}  // namespace saca
