#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "oracles.hpp"

using namespace saca;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "saca_io_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Jsonl, TrajectoryAndAuditRoundTrip) {
  const PolicyParams p = PolicyParams::random(16, 2);
  StochasticPolicy pol{&p};
  Rng rng(3);
  std::vector<Trajectory> trajs;
  std::vector<AuditReport> audits;
  for (const auto& spec : fixture::small_pool()) {
    auto r = rollout_audited(pol, spec, EnvConfig{}, rng);
    trajs.push_back(std::move(r.trajectory));
    audits.push_back(std::move(r.audit));
  }
  std::stringstream ts, as;
  dump_jsonl(ts, trajs);
  dump_jsonl(as, audits);
  const auto t2 = parse_jsonl<Trajectory>(ts);
  const auto a2 = parse_jsonl<AuditReport>(as);
  ASSERT_EQ(t2.size(), trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    EXPECT_EQ(t2[i], trajs[i]);
    EXPECT_EQ(a2[i], audits[i]);
  }
}

TEST(Jsonl, EmptyInputAndLineNumberedErrors) {
  std::stringstream empty;
  EXPECT_TRUE(parse_jsonl<Trajectory>(empty).empty());
  std::stringstream blank("\n  \n");
  EXPECT_TRUE(parse_jsonl<Trajectory>(blank).empty());

  const std::vector<double> s = {0.5, 0.1};
  std::stringstream bad;
  bad << json(audit_scores(s, std::vector<int>{0, 0}, ScorerConfig{})).dump() << "\n{\"soft_scores\": [0.1\n";
  const std::string msg = error_of([&] { parse_jsonl<AuditReport>(bad); });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;

  std::stringstream mismatched(R"({"soft_scores":[0.1],"mask":[1,1],"t_div":3,"r_proc":0,"landmark_trace":[0]})");
  EXPECT_NE(error_of([&] { parse_jsonl<AuditReport>(mismatched); }).find("line 1"), std::string::npos);
  EXPECT_THROW(load_jsonl<Trajectory>("/nonexistent/trajs.jsonl"), Error);
}

TEST(Config, EmptyObjectGivesDocumentedDefaults) {
  const TrainConfig c = config_from_json(json::object());
  EXPECT_EQ(c.group_size, 8);
  EXPECT_EQ(c.eta, 0.5);
  EXPECT_EQ(c.n_rep, 3);
  EXPECT_EQ(c.scorer.tau_s, 0.2);
  EXPECT_EQ(c.scorer.tau_h, 0.25);
  EXPECT_EQ(c.scorer.tau_det, 0.3);
  EXPECT_EQ(c.scorer.w1, 0.3);
  EXPECT_EQ(c.scorer.w2, 0.3);
  EXPECT_EQ(c.scorer.w3, 0.4);
  EXPECT_EQ(c.advantage.delta, 0.1);
  EXPECT_EQ(c.advantage.kappa, 0.5);
  EXPECT_EQ(c.advantage.s_neg, 0.5);
  EXPECT_EQ(c.advantage.beta_kl, 0.04);
  EXPECT_EQ(c.optimizer.weight_decay, 0.01);

  const auto path = scratch("empty.json");
  write_file(path.string(), "  \n");
  EXPECT_EQ(config_to_json(load_config(path.string())), config_to_json(TrainConfig{}));
}

TEST(Config, RoundTripAndRejections) {
  TrainConfig c;
  c.group_size = 6;
  c.scorer.tau_h = 0.3;
  c.toggles.use_rr = false;
  c.pool.map.width = 9;
  const TrainConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));

  EXPECT_NE(error_of([] { config_from_json(json::parse(R"({"scorer": {"tau_h": 0.1}})")); }).find("tau_h"),
            std::string::npos);
  EXPECT_NE(error_of([] { config_from_json(json::parse(R"({"group_size": 1})")); }).find("group_size"),
            std::string::npos);
  EXPECT_NE(error_of([] { config_from_json(json::parse(R"({"loss": {"lambda_9": 1}})")); }).find("loss.lambda_9"),
            std::string::npos);
  EXPECT_NE(error_of([] { config_from_json(json::parse(R"({"eta": "half"})")); }).find("eta"), std::string::npos);
}

TEST(Stats, HandCountedFractions) {
  Rng rng(1);
  std::vector<AuditReport> audits;
  for (std::size_t t_div : {8u, 6u, 2u}) audits.push_back(fixture::audit_with_divergence(rng, 10, t_div));
  const auto s = prefix_stats(audits, {0, 0, 0}, 0.5);
  EXPECT_EQ(s.failures, 3u);
  EXPECT_NEAR(s.above_eta, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(s.counts[8], 1u);
  EXPECT_EQ(s.counts[6], 1u);
  EXPECT_EQ(s.counts[2], 1u);
  // exactly eta is not above it
  audits.push_back(fixture::audit_with_divergence(rng, 10, 5));
  EXPECT_NEAR(prefix_stats(audits, {0, 0, 0, 0}, 0.5).above_eta, 0.5, 1e-12);
}

TEST(Stats, SuccessesAreExcluded) {
  Rng rng(2);
  std::vector<AuditReport> audits;
  for (int i = 0; i < 4; ++i) audits.push_back(fixture::audit_with_divergence(rng, 10, 3));
  const auto s = prefix_stats(audits, {1, 1, 1, 1}, 0.5);
  EXPECT_TRUE(s.empty());
  EXPECT_EQ(s.total, 4u);
  EXPECT_NE(stats_table(s).find("nothing to report"), std::string::npos);
  EXPECT_TRUE(stats_json(s)["empty"].get<bool>());
}

TEST(Stats, FractionsPartitionFailures) {
  Rng rng(4);
  for (int k = 0; k < 100; ++k) {
    std::vector<AuditReport> audits;
    std::vector<int> outcomes;
    for (std::size_t i = 0, n = 1 + rng.index(30); i < n; ++i) {
      const std::size_t len = 1 + rng.index(20);
      audits.push_back(fixture::audit_with_divergence(rng, len, 1 + rng.index(len + 1)));
      outcomes.push_back(rng.bernoulli(0.3));
    }
    const auto s = prefix_stats(audits, outcomes, 0.5);
    if (s.empty()) continue;
    double sum = 0;
    for (std::size_t b = 0; b < 10; ++b) sum += s.fraction(b);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const PolicyParams p = fixture::random_params(9, 12);
  const auto path = scratch("policy.json");
  save_checkpoint(path.string(), p);
  EXPECT_EQ(load_checkpoint(path.string()), p);
  write_file(path.string(), R"({"format": "other"})");
  EXPECT_THROW(load_checkpoint(path.string()), Error);
}

TEST(Pools, RoundTrip) {
  TrainConfig c;
  c.pool.train_maps = 2;
  c.pool.heldout_maps = 1;
  const Pools p = make_pools(c);
  const auto path = scratch("pools.json");
  write_file(path.string(), pools_to_json(p).dump());
  const Pools q = load_pools(path.string());
  ASSERT_EQ(q.train.size(), p.train.size());
  ASSERT_EQ(q.heldout.size(), p.heldout.size());
  for (std::size_t i = 0; i < p.train.size(); ++i) EXPECT_EQ(json(q.train[i]), json(p.train[i]));
}

TEST(MetricsCsv, RowShape) {
  const auto columns = [](const std::string& s) { return std::count(s.begin(), s.end(), ',') + 1; };
  IterationReport r;
  r.iteration = 3;
  r.outcomes = {1, 0};
  const std::string plain = metrics_row(r, std::nullopt);
  EXPECT_EQ(columns(plain), columns(kMetricsHeader));
  EXPECT_EQ(plain.rfind("3,mixed,,,,,0.500000,", 0), 0u) << plain;
  AdvantageVector a;
  a.values = {1.0, -1.0};
  a.stage = AdvantageStage::KlAdjusted;
  r.advantages = a;
  const std::string full = metrics_row(r, Metrics{1.0, 0.5, 2.0, 0.75});
  EXPECT_EQ(columns(full), columns(kMetricsHeader));
  EXPECT_NE(full.find("1.000000,0.500000,2.000000,0.750000"), std::string::npos);
}
