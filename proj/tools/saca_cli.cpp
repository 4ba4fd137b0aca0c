// saca_cli: map generation, training runs, evaluation, offline auditing and
// valid-prefix statistics.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "saca/saca.hpp"

namespace fs = std::filesystem;
using namespace saca;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int verbose = 0;
};

TrainConfig resolve_config(const Common& c) {
  TrainConfig cfg = c.config_path.empty() ? config_from_json(json::object()) : load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir + ": " + ec.message());
}

// The pool next to a trajectory file (as written by `train`) unless given.
Pools pools_for(const std::string& pool_path, const std::string& near) {
  if (!pool_path.empty()) return load_pools(pool_path);
  const fs::path guess = fs::path(near).parent_path() / "pool.json";
  if (fs::exists(guess)) return load_pools(guess.string());
  throw Error("no episode pool: pass --pool (looked for " + guess.string() + ")");
}

std::map<int, EpisodeSpec> index_pools(const Pools& p) {
  std::map<int, EpisodeSpec> out;
  for (const auto* v : {&p.train, &p.heldout}) {
    for (const auto& e : *v) out.emplace(e.id, e);
  }
  return out;
}

int cmd_gen_maps(const Common& c, const std::string& out) {
  TrainConfig cfg = resolve_config(c);
  if (c.seed) cfg.pool.seed = *c.seed;
  ensure_dir(out);
  const Pools pools = make_pools(cfg);
  write_file((fs::path(out) / "pool.json").string(), pools_to_json(pools).dump() + "\n");
  std::cout << "wrote " << pools.train.size() << " train and " << pools.heldout.size() << " held-out episodes to "
            << (fs::path(out) / "pool.json").string() << '\n';
  return 0;
}

int cmd_train(const Common& c, const std::string& out, const std::string& pool_path, bool dump_trajectories) {
  const TrainConfig cfg = resolve_config(c);
  ensure_dir(out);
  const fs::path dir(out);
  const Pools pools = pool_path.empty() ? make_pools(cfg) : load_pools(pool_path);
  if (pools.heldout.empty()) throw Error("pool has no held-out episodes");
  write_file((dir / "config.json").string(), config_to_json(cfg).dump(2) + "\n");
  write_file((dir / "pool.json").string(), pools_to_json(pools).dump() + "\n");

  std::ofstream metrics(dir / "metrics.csv");
  std::ofstream groups(dir / "groups.jsonl");
  std::ofstream trajs;
  if (dump_trajectories) trajs.open(dir / "trajectories.jsonl");
  if (!metrics || !groups || (dump_trajectories && !trajs)) throw Error("cannot open outputs in " + out);
  metrics << kMetricsHeader << '\n';

  RunObserver obs;
  obs.on_iteration = [&](const IterationReport& r, const std::optional<Metrics>& eval) {
    metrics << metrics_row(r, eval) << '\n';
    groups << plan_trace(r).dump() << '\n';
    if (eval && verbosity() > 0) {
      std::clog << "iter " << r.iteration << " held-out SR " << eval->success << " SPL " << eval->spl << '\n';
    }
  };
  if (dump_trajectories) {
    obs.on_group = [&](const Group& g, const EpisodeSpec&) {
      for (const auto& t : g.trajectories) trajs << json(t).dump() << '\n';
    };
  }
  const RunReport run = train(cfg, pools, obs);
  save_checkpoint((dir / "checkpoint.json").string(), run.final_policy);
  save_checkpoint((dir / "reference.json").string(), run.reference);

  std::ofstream curve(dir / "curve.csv");
  curve << "iteration,sr,spl,ne,ndtw\n";
  for (const auto& p : run.curve) {
    curve << p.iteration << ',' << detail::fmt(p.metrics.success) << ',' << detail::fmt(p.metrics.spl) << ','
          << detail::fmt(p.metrics.navigation_error) << ',' << detail::fmt(p.metrics.ndtw) << '\n';
  }
  std::cout << "warm start SR " << run.warm_start_eval.success << ", final SR " << run.curve.back().metrics.success
            << " (" << run.mixed_groups << " mixed / " << run.all_fail_groups << " all-failure groups)\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& pool_path, const std::string& split,
             std::optional<int> samples, const std::string& out) {
  TrainConfig cfg = resolve_config(c);
  if (samples) cfg.eval_samples = *samples;
  const PolicyParams params = load_checkpoint(checkpoint);
  const Pools pools = load_pools(pool_path);
  const auto& pool = split == "train" ? pools.train : (pools.heldout.empty() ? pools.train : pools.heldout);
  const EvalResult r = evaluate(params, pool, cfg.env(), cfg.eval_samples);
  const std::string csv = eval_csv(r);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_file(out, csv);
  }
  std::cerr << "SR " << r.mean.success << " SPL " << r.mean.spl << " NE " << r.mean.navigation_error << " nDTW "
            << r.mean.ndtw << " over " << pool.size() << " episodes\n";
  return 0;
}

int cmd_audit(const Common& c, const std::string& in, const std::string& out, const std::string& pool_path) {
  const TrainConfig cfg = resolve_config(c);
  const auto specs = index_pools(pools_for(pool_path, in));
  const auto trajs = load_jsonl<Trajectory>(in);
  std::ofstream os(out);
  if (!os) throw Error("cannot write " + out);
  std::size_t n = 0;
  for (const auto& t : trajs) {
    const auto it = specs.find(t.spec_id);
    if (it == specs.end()) throw Error("trajectory " + std::to_string(n + 1) + ": unknown spec_id " + std::to_string(t.spec_id));
    os << json(audit_trajectory(t, it->second, cfg.scorer)).dump() << '\n';
    ++n;
  }
  std::cout << "audited " << n << " trajectories\n";
  return 0;
}

int cmd_stats(const Common& c, const std::string& in, const std::string& pool_path, const std::string& json_out) {
  const TrainConfig cfg = resolve_config(c);
  const auto specs = index_pools(pools_for(pool_path, in));
  const PrefixStats s = run_stats(load_jsonl<Trajectory>(in), specs, cfg.scorer, cfg.eta);
  std::cout << stats_table(s);
  const std::string j = stats_json(s).dump(2) + "\n";
  if (json_out.empty()) {
    std::cout << j;
  } else {
    write_file(json_out, j);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SACA gridworld lab"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "JSON config (missing keys take defaults)");
  app.add_option("--seed", common.seed, "seed override");
  app.add_flag("-v,--verbose", common.verbose, "more logging (repeatable)");

  std::string out, in, pool, checkpoint, split = "heldout", json_out;
  std::optional<int> samples;
  bool dump_trajectories = false;

  auto* gen = app.add_subcommand("gen-maps", "generate train / held-out episode pools");
  gen->add_option("--out", out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "warm start + reinforcement fine-tuning");
  tr->add_option("--out", out, "run directory")->required();
  tr->add_option("--pool", pool, "episode pool JSON (default: generate from config)");
  tr->add_flag("--trajectories", dump_trajectories, "dump every sampled trajectory as JSON lines");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a pool");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--pool", pool)->required();
  ev->add_option("--split", split)->check(CLI::IsMember({"train", "heldout"}));
  ev->add_option("--samples", samples, "rollouts per episode; 0 = greedy");
  ev->add_option("--out", out, "CSV output (default stdout)");

  auto* au = app.add_subcommand("audit", "audit trajectory JSON lines offline");
  au->add_option("--in", in)->required();
  au->add_option("--out", out)->required();
  au->add_option("--pool", pool, "episode pool (default: pool.json beside --in)");

  auto* st = app.add_subcommand("stats", "valid-prefix histogram over failed trajectories");
  st->add_option("--in", in)->required();
  st->add_option("--pool", pool, "episode pool (default: pool.json beside --in)");
  st->add_option("--json", json_out, "write the JSON report here instead of stdout");

  CLI11_PARSE(app, argc, argv);
  verbosity() = common.verbose;

  try {
    if (*gen) return cmd_gen_maps(common, out);
    if (*tr) return cmd_train(common, out, pool, dump_trajectories);
    if (*ev) return cmd_eval(common, checkpoint, pool, split, samples, out);
    if (*au) return cmd_audit(common, in, out, pool);
    if (*st) return cmd_stats(common, in, pool, json_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
