#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "saca/grid.hpp"

namespace saca {

struct AdvantageConfig {
  double epsilon0 = 1e-8;
  double delta = 0.1;   // margin threshold
  double kappa = 0.5;   // shrink temperature
  double s_neg = 0.5;   // negative attenuation
  double beta_kl = 0.04;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw Error("advantage." + field + ": " + why); };
    if (!(epsilon0 > 0)) fail("epsilon0", "must be > 0");
    if (!(kappa > 0 && kappa < 1)) fail("kappa", "must lie in (0, 1)");
    if (!(s_neg > 0 && s_neg <= 1)) fail("s_neg", "must lie in (0, 1]");
    if (beta_kl < 0) fail("beta_kl", "must be >= 0");
  }
};

enum class AdvantageStage { Raw = 0, Rescued = 1, Scaled = 2, KlAdjusted = 3 };
enum class AdvantageSource { Outcome, Process };

inline constexpr const char* to_string(AdvantageStage s) {
  switch (s) {
    case AdvantageStage::Raw: return "raw";
    case AdvantageStage::Rescued: return "rescued";
    case AdvantageStage::Scaled: return "scaled";
    case AdvantageStage::KlAdjusted: return "kl_adjusted";
  }
  return "?";
}

struct AdvantageVector {
  std::vector<double> values;
  AdvantageStage stage = AdvantageStage::Raw;
  AdvantageSource source = AdvantageSource::Outcome;
  // Margin-rescue diagnostics (process advantages only).
  double margin = std::numeric_limits<double>::quiet_NaN();
  bool shrunk = false;

  double min() const { return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end()); }
  double max() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }
  double mean() const {
    return values.empty() ? 0.0 : std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  }
};

struct GroupStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

inline GroupStats population_stats(std::span<const double> xs) {
  GroupStats s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

inline std::vector<double> group_normalize(std::span<const double> xs, double epsilon0) {
  if (xs.size() < 2) throw Error("group normalization needs at least two members");
  const GroupStats s = population_stats(xs);
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (xs[i] - s.mean) / (s.stddev + epsilon0);
  return out;
}

inline AdvantageVector normalize_outcome(std::span<const int> outcomes, double epsilon0) {
  std::vector<double> r(outcomes.begin(), outcomes.end());
  return {group_normalize(r, epsilon0), AdvantageStage::Raw, AdvantageSource::Outcome};
}

inline AdvantageVector normalize_process(std::span<const double> r_procs, double epsilon0) {
  return {group_normalize(r_procs, epsilon0), AdvantageStage::Raw, AdvantageSource::Process};
}

// Shrinks every advantage by kappa when the anchor's process-score margin over
// the mean negative is below delta.
inline AdvantageVector margin_rescue(AdvantageVector raw, double anchor_rproc, std::span<const double> neg_rprocs,
                                     const AdvantageConfig& cfg) {
  if (raw.stage != AdvantageStage::Raw) throw Error("margin_rescue: expected raw advantages");
  if (neg_rprocs.empty()) throw Error("margin_rescue: empty negative set");
  const double neg_mean = std::accumulate(neg_rprocs.begin(), neg_rprocs.end(), 0.0) / static_cast<double>(neg_rprocs.size());
  raw.margin = anchor_rproc - neg_mean;
  raw.shrunk = raw.margin < cfg.delta;
  if (raw.shrunk) {
    for (double& v : raw.values) v *= cfg.kappa;
  }
  raw.stage = AdvantageStage::Rescued;
  return raw;
}

inline AdvantageVector negative_only_scale(AdvantageVector rescued, double s_neg) {
  if (rescued.stage != AdvantageStage::Rescued) throw Error("negative_only_scale: expected rescued advantages");
  for (double& v : rescued.values) {
    if (v < 0.0) v *= s_neg;
  }
  rescued.stage = AdvantageStage::Scaled;
  return rescued;
}

// value_i - beta * KL_i, with KL_i the mean per-step KL to the frozen reference.
inline AdvantageVector apply_kl_penalty(AdvantageVector adv, std::span<const double> kls, double beta_kl) {
  const bool outcome_ready = adv.source == AdvantageSource::Outcome && adv.stage == AdvantageStage::Raw;
  if (!outcome_ready && adv.stage != AdvantageStage::Scaled) {
    throw Error(std::string("apply_kl_penalty: unexpected stage ") + to_string(adv.stage));
  }
  if (kls.size() != adv.values.size()) throw Error("apply_kl_penalty: KL vector size mismatch");
  for (std::size_t i = 0; i < kls.size(); ++i) {
    if (kls[i] < 0.0) throw Error("apply_kl_penalty: negative KL value");
    adv.values[i] -= beta_kl * kls[i];
  }
  adv.stage = AdvantageStage::KlAdjusted;
  return adv;
}

}  // namespace saca
