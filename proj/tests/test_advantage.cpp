#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace saca;

namespace {

AdvantageVector staged(std::vector<double> v, AdvantageStage st, AdvantageSource src = AdvantageSource::Process) {
  AdvantageVector a;
  a.values = std::move(v);
  a.stage = st;
  a.source = src;
  return a;
}

}  // namespace

TEST(NormalizeOutcome, OneSuccessOfFour) {
  const std::vector<int> r = {1, 0, 0, 0};
  const auto a = normalize_outcome(r, 1e-8);
  const double sd = std::sqrt(0.1875);
  EXPECT_NEAR(a.values[0], 0.75 / sd, 1e-7);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(a.values[i], -0.25 / sd, 1e-7);
  EXPECT_NEAR(a.values[0], 1.7320508, 1e-6);
  EXPECT_NEAR(a.values[1], -0.5773503, 1e-6);
  EXPECT_EQ(a.stage, AdvantageStage::Raw);
}

TEST(NormalizeOutcome, AllFailureCollapses) {
  const std::vector<int> r = {0, 0, 0, 0};
  for (double v : normalize_outcome(r, 1e-8).values) EXPECT_EQ(v, 0.0);
}

TEST(NormalizeOutcome, TwoPoint) {
  const std::vector<int> r = {1, 0};
  const auto a = normalize_outcome(r, 1e-8);
  EXPECT_NEAR(a.values[0], 1.0, 1e-7);
  EXPECT_NEAR(a.values[1], -1.0, 1e-7);
  EXPECT_THROW(normalize_outcome(std::vector<int>{1}, 1e-8), Error);
}

TEST(NormalizeProcess, Examples) {
  const std::vector<double> two = {1.0, 0.0};
  const auto a = normalize_process(two, 1e-8);
  EXPECT_NEAR(a.values[0], 1.0, 1e-7);
  EXPECT_NEAR(a.values[1], -1.0, 1e-7);
  const std::vector<double> flat = {0.3, 0.3, 0.3};
  for (double v : normalize_process(flat, 1e-8).values) EXPECT_EQ(v, 0.0);
}

TEST(NormalizeProcess, MatchesDirectStatistics) {
  Rng rng(13);
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> x(2 + rng.index(9));
    for (auto& v : x) v = rng.uniform();
    const auto got = normalize_process(x, 1e-8).values;
    const auto want = oracle::zscore(x, 1e-8);
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-9);
    // standardised: mean 0, population std sd / (sd + eps)
    auto moments = [](const std::vector<double>& v) {
      double m = 0, ss = 0;
      for (double e : v) m += e;
      m /= v.size();
      for (double e : v) ss += (e - m) * (e - m);
      return std::pair{m, std::sqrt(ss / v.size())};
    };
    const auto [m, sd_out] = moments(got);
    const double sd_in = moments(x).second;
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(sd_out, sd_in / (sd_in + 1e-8), 1e-9);
  }
}

TEST(NormalizeProcess, ShiftAndScaleInvariance) {
  Rng rng(17);
  for (int k = 0; k < 500; ++k) {
    std::vector<double> x(2 + rng.index(9));
    for (auto& v : x) v = rng.uniform();
    const auto base = normalize_process(x, 1e-8).values;
    auto shifted = x, scaled = x;
    const double c = 2 * rng.uniform() - 1, s = 0.5 + 2 * rng.uniform();
    for (auto& v : shifted) v += c;
    for (auto& v : scaled) v *= s;
    const auto a = normalize_process(shifted, 1e-8).values, b = normalize_process(scaled, 1e-8).values;
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_LT(std::abs(a[i] - base[i]), 1e-6);
      EXPECT_LT(std::abs(b[i] - base[i]), 1e-6);
    }
  }
}

TEST(MarginRescue, ShrinksBelowMargin) {
  const AdvantageConfig cfg;  // delta 0.1, kappa 0.5
  const std::vector<double> negs = {0.4, 0.5};
  const auto r = margin_rescue(staged({1.2, -0.6, -0.6}, AdvantageStage::Raw), 0.5, negs, cfg);
  EXPECT_NEAR(r.margin, 0.05, 1e-12);
  EXPECT_TRUE(r.shrunk);
  EXPECT_NEAR(r.values[0], 0.6, 1e-12);
  EXPECT_NEAR(r.values[1], -0.3, 1e-12);
  EXPECT_EQ(r.stage, AdvantageStage::Rescued);
}

TEST(MarginRescue, BoundaryAndLargeMargin) {
  const AdvantageConfig cfg;
  // margin exactly delta (binary-exact values) keeps the advantages
  AdvantageConfig c2 = cfg;
  c2.delta = 0.25;
  const std::vector<double> negs = {0.25};
  const auto r = margin_rescue(staged({1.0, -1.0}, AdvantageStage::Raw), 0.5, negs, c2);
  EXPECT_FALSE(r.shrunk);
  EXPECT_EQ(r.values, (std::vector<double>{1.0, -1.0}));
  const std::vector<double> far = {0.0};
  EXPECT_EQ(margin_rescue(staged({1.0, -1.0}, AdvantageStage::Raw), 0.9, far, cfg).values,
            (std::vector<double>{1.0, -1.0}));
  EXPECT_THROW(margin_rescue(staged({1.0, -1.0}, AdvantageStage::Raw), 0.9, std::vector<double>{}, cfg), Error);
}

TEST(NegativeScale, Examples) {
  EXPECT_EQ(negative_only_scale(staged({1.2, -0.8}, AdvantageStage::Rescued), 0.5).values,
            (std::vector<double>{1.2, -0.4}));
  EXPECT_EQ(negative_only_scale(staged({0.3, 0.0, 2.0}, AdvantageStage::Rescued), 0.5).values,
            (std::vector<double>{0.3, 0.0, 2.0}));
}

TEST(KlPenalty, Examples) {
  const std::vector<double> zero = {0.0, 0.0};
  EXPECT_EQ(apply_kl_penalty(staged({1.0, -0.5}, AdvantageStage::Scaled), zero, 0.04).values,
            (std::vector<double>{1.0, -0.5}));
  const std::vector<double> kl = {2.5};
  EXPECT_NEAR(apply_kl_penalty(staged({1.0}, AdvantageStage::Scaled), kl, 0.04).values[0], 0.9, 1e-12);
  EXPECT_EQ(apply_kl_penalty(staged({1.0}, AdvantageStage::Scaled), kl, 0.0).values[0], 1.0);
  EXPECT_THROW(apply_kl_penalty(staged({1.0}, AdvantageStage::Scaled), std::vector<double>{-0.1}, 0.04), Error);
  // outcome advantages go straight from raw to KL-adjusted
  const auto out = apply_kl_penalty(staged({1.0}, AdvantageStage::Raw, AdvantageSource::Outcome), kl, 0.04);
  EXPECT_EQ(out.stage, AdvantageStage::KlAdjusted);
}

TEST(Stages, OrderIsEnforced) {
  const AdvantageConfig cfg;
  const std::vector<double> negs = {0.1};
  EXPECT_THROW(negative_only_scale(staged({1.0}, AdvantageStage::Raw), 0.5), Error);
  EXPECT_THROW(margin_rescue(staged({1.0}, AdvantageStage::Scaled), 0.5, negs, cfg), Error);
  EXPECT_THROW(apply_kl_penalty(staged({1.0}, AdvantageStage::Raw), std::vector<double>{0.0}, 0.04), Error);
  EXPECT_THROW(apply_kl_penalty(staged({1.0}, AdvantageStage::KlAdjusted), std::vector<double>{0.0}, 0.04), Error);
}

TEST(Stages, ArgmaxAndSignPreserved) {
  const AdvantageConfig cfg;
  Rng rng(23);
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> r(2 + rng.index(6));
    for (auto& v : r) v = rng.uniform();
    const auto raw = normalize_process(r, cfg.epsilon0);
    std::vector<double> negs(r.begin() + 1, r.end());
    const auto res = margin_rescue(raw, r[0], negs, cfg);
    const auto sc = negative_only_scale(res, cfg.s_neg);
    auto argmax = [](const std::vector<double>& v) { return std::max_element(v.begin(), v.end()) - v.begin(); };
    EXPECT_EQ(argmax(raw.values), argmax(res.values));
    EXPECT_EQ(argmax(raw.values), argmax(sc.values));
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_EQ(std::signbit(raw.values[i]), std::signbit(res.values[i]));
      EXPECT_EQ(std::signbit(raw.values[i]), std::signbit(sc.values[i]));
    }
  }
}

TEST(AdvantageConfig, Validation) {
  AdvantageConfig c;
  EXPECT_NO_THROW(c.validate());
  c.kappa = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.s_neg = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.epsilon0 = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.beta_kl = -1;
  EXPECT_THROW(c.validate(), Error);
}
