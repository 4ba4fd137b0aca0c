#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace saca;

TEST(CompositeScore, HandEvaluatedExample) {
  const ScorerConfig cfg;  // w = (0.3, 0.3, 0.4), tau_det = 0.3
  const PerceptionMeasurement m{0.5, 0.4, 0.9, 0.6};
  EXPECT_NEAR(composite_soft_score(m, cfg), 0.15 + 0.12 + 0.216, 1e-12);
  EXPECT_NEAR(composite_soft_score(m, cfg), 0.486, 1e-12);
}

TEST(CompositeScore, GateClosedBelowDetectionThreshold) {
  const ScorerConfig cfg;
  EXPECT_DOUBLE_EQ(composite_soft_score({0.7, 0.2, 0.9, 0.9}, cfg), 0.3 * 0.7);
  // gate is inclusive at tau_det
  EXPECT_NEAR(composite_soft_score({0.0, 0.3, 1.0, 1.0}, cfg), 0.3 * 0.3 + 0.4, 1e-12);
}

TEST(CompositeScore, ZeroInputAndNonNegative) {
  const ScorerConfig cfg;
  EXPECT_EQ(composite_soft_score({}, cfg), 0.0);
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const PerceptionMeasurement m{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    EXPECT_GE(composite_soft_score(m, cfg), 0.0);
    EXPECT_LE(composite_soft_score(m, cfg), cfg.w1 + cfg.w2 + cfg.w3 + 1e-12);
  }
}

TEST(ProcessScore, Examples) {
  const std::vector<double> s = {0.5, 0.1, 0.3};
  EXPECT_NEAR(process_score(s, 0.2), (0.3 + 0.0 + 0.1) / 3.0, 1e-12);
  const std::vector<double> low = {0.1, 0.2, 0.05};
  EXPECT_EQ(process_score(low, 0.2), 0.0);
  const std::vector<double> one = {0.75};
  EXPECT_NEAR(process_score(one, 0.2), 0.55, 1e-12);
  EXPECT_THROW(process_score(std::vector<double>{}, 0.2), Error);
}

TEST(DivergenceScan, StickyFlag) {
  const std::vector<double> s = {0.5, 0.4, 0.1, 0.5};
  const auto r = divergence_scan(s, 0.25);
  EXPECT_EQ(r.t_div, 3u);
  EXPECT_EQ(r.mask, (std::vector<std::uint8_t>{1, 1, 0, 0}));
}

TEST(DivergenceScan, NoDivergenceAndImmediate) {
  const std::vector<double> high = {0.3, 0.25, 0.9};  // 0.25 == tau_h is not a divergence
  const auto a = divergence_scan(high, 0.25);
  EXPECT_EQ(a.t_div, 4u);
  EXPECT_EQ(a.mask, (std::vector<std::uint8_t>{1, 1, 1}));
  const std::vector<double> first = {0.1, 0.9};
  const auto b = divergence_scan(first, 0.25);
  EXPECT_EQ(b.t_div, 1u);
  EXPECT_EQ(b.mask, (std::vector<std::uint8_t>{0, 0}));
}

TEST(DivergenceScan, MatchesBruteForceOracle) {
  Rng rng(7);
  for (int k = 0; k < 2000; ++k) {
    std::vector<double> s(1 + rng.index(40));
    for (auto& v : s) v = rng.uniform();
    const double tau = rng.uniform();
    const auto r = divergence_scan(s, tau);
    ASSERT_EQ(r.t_div, oracle::first_divergence(s, tau));
    for (std::size_t t = 0; t < s.size(); ++t) ASSERT_EQ(r.mask[t], t + 1 < r.t_div ? 1 : 0);
  }
}

// Raising tau_h can only move the divergence point earlier.
TEST(DivergenceScan, MonotoneInThreshold) {
  Rng rng(9);
  for (int k = 0; k < 500; ++k) {
    std::vector<double> s(1 + rng.index(30));
    for (auto& v : s) v = rng.uniform();
    std::size_t prev = s.size() + 1;
    for (double tau = 0.0; tau <= 1.0; tau += 0.05) {
      const std::size_t t = divergence_scan(s, tau).t_div;
      EXPECT_LE(t, prev);
      prev = t;
    }
  }
}

TEST(Tracker, AdvancesAfterConsecutiveReaches) {
  const ScorerConfig cfg;  // c_consec = 2, tau_reach = 0.7
  TrackerState st;
  st = track_landmarks(st, 0.8, cfg, 2);
  EXPECT_EQ(st.active, 0);
  EXPECT_EQ(st.consecutive, 1);
  st = track_landmarks(st, 0.8, cfg, 2);
  EXPECT_EQ(st.active, 1);
  EXPECT_EQ(st.consecutive, 0);
}

TEST(Tracker, InterruptedRunResets) {
  const ScorerConfig cfg;
  TrackerState st;
  for (double s : {0.8, 0.1, 0.8}) st = track_landmarks(st, s, cfg, 2);
  EXPECT_EQ(st.active, 0);
  EXPECT_EQ(st.consecutive, 1);
  // tau_reach itself is not "above"
  st = {};
  for (double s : {0.7, 0.7, 0.7}) st = track_landmarks(st, s, cfg, 2);
  EXPECT_EQ(st.active, 0);
}

TEST(Tracker, GoalIsTerminal) {
  const ScorerConfig cfg;
  TrackerState st{2, 0};
  for (int k = 0; k < 5; ++k) st = track_landmarks(st, 0.95, cfg, 2);
  EXPECT_EQ(st.active, 2);
}

TEST(AuditReport, SingleStepReduction) {
  Trajectory t;
  Step s;
  s.measurement = {0.9, 0.8, 0.9, 0.7};
  t.steps.push_back(s);
  EpisodeSpec spec;
  spec.instruction = {0};
  const ScorerConfig cfg;
  const auto a = audit_trajectory(t, spec, cfg);
  const double S = composite_soft_score(s.measurement, cfg);
  EXPECT_NEAR(a.r_proc, std::max(0.0, S - cfg.tau_s), 1e-15);
  EXPECT_EQ(a.t_div, 2u);
  EXPECT_THROW(audit_trajectory(Trajectory{}, spec, cfg), Error);
}

TEST(AuditReport, InvariantsOnRollouts) {
  const PolicyParams p = PolicyParams::random(32, 1);
  StochasticPolicy pol{&p};
  const EnvConfig env;
  Rng rng(5);
  for (const auto& spec : fixture::small_pool()) {
    for (int k = 0; k < 6; ++k) {
      const auto r = rollout_audited(pol, spec, env, rng);
      const auto& a = r.audit;
      ASSERT_EQ(a.length(), r.trajectory.length());
      // sticky mask
      for (std::size_t t = 1; t < a.mask.size(); ++t) EXPECT_LE(a.mask[t], a.mask[t - 1]);
      EXPECT_EQ(a.t_div, oracle::first_divergence(a.soft_scores, env.scorer.tau_h));
      // process score, recomputed
      double acc = 0;
      for (double s : a.soft_scores) acc += s > env.scorer.tau_s ? s - env.scorer.tau_s : 0.0;
      EXPECT_NEAR(a.r_proc, acc / a.length(), 1e-12);
      // online and offline audits agree exactly
      EXPECT_EQ(audit_trajectory(r.trajectory, spec, env.scorer), a);
      // recorded scores really are the scorer applied to the recorded measurements
      for (std::size_t t = 0; t < a.length(); ++t) {
        EXPECT_EQ(a.soft_scores[t], composite_soft_score(r.trajectory.steps[t].measurement, env.scorer));
      }
    }
  }
}

TEST(AuditReport, TeacherNeverDiverges) {
  TeacherPolicy teacher;
  const EnvConfig env;
  Rng rng(0);
  for (const auto& spec : fixture::small_pool()) {
    const auto r = rollout_audited(teacher, spec, env, rng);
    EXPECT_EQ(r.audit.t_div, r.trajectory.length() + 1);
    EXPECT_FALSE(r.audit.diverged());
    // every landmark consumed by the time the expert stops
    EXPECT_EQ(r.audit.landmark_trace.back(), spec.num_landmarks());
  }
}

TEST(ScorerConfig, Validation) {
  ScorerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tau_h = 0.1;  // below tau_s
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.tau_reach = 2.0;  // not attainable
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.c_consec = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.w2 = -0.1;
  EXPECT_THROW(c.validate(), Error);
}
