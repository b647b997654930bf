#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "chanalloc/harness.hpp"
#include "oracles.hpp"

using namespace chanalloc;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "chanalloc_harness" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

// small enough to train in well under a second
ExperimentConfig tiny_experiment(const std::string& out) {
  ExperimentConfig cfg;
  cfg.env.topology.n_aps = 4;
  cfg.env.topology.n_channels = 2;
  cfg.env.reward_k = 2;
  cfg.env.episode_horizon = 5;
  cfg.agent.batch_size = 8;
  cfg.agent.max_steps = 60;
  cfg.agent.eval_interval = 30;
  cfg.agent.eval_episodes = 3;
  cfg.agent.patience = 1000000;
  cfg.agent.target_sync_interval = 20;
  cfg.method = Method::gcn_sap;
  cfg.seed = 3;
  cfg.out_dir = out;
  cfg.final_eval_episodes = 40;
  cfg.eval_horizon = 5;
  return cfg;
}

}  // namespace

TEST_CASE("method names round trip") {
  for (Method m : {Method::gcn_sap, Method::gcn_eps, Method::mlp_sap, Method::mlp_eps,
                   Method::sap_only, Method::random})
    CHECK(method_from_name(method_name(m)) == m);
  CHECK_THROWS_AS(method_from_name("nope"), std::invalid_argument);
  CHECK(is_learning_method(Method::mlp_eps));
  CHECK_FALSE(is_learning_method(Method::random));
}

TEST_CASE("experiment config JSON round trip with defaults") {
  ExperimentConfig cfg = tiny_experiment("somewhere");
  nlohmann::json j = experiment_to_json(cfg);
  ExperimentConfig back = experiment_from_json(j);
  CHECK(experiment_to_json(back) == j);

  // missing sections fall back to defaults
  ExperimentConfig defaults = experiment_from_json(nlohmann::json::object());
  CHECK(defaults.env.topology.n_aps == 10);
  CHECK(defaults.env.topology.n_channels == 3);
  CHECK(defaults.agent.gamma == 0.9);
  CHECK(defaults.agent.replay_capacity == 1000);
  CHECK(defaults.network.gcn_width == 32);

  // partial override keeps the rest at defaults
  ExperimentConfig partial = experiment_from_json(nlohmann::json{{"env", {{"n_aps", 6}}}});
  CHECK(partial.env.topology.n_aps == 6);
  CHECK(partial.env.topology.region_side == 1000.0);

  CHECK_THROWS(experiment_from_json(nlohmann::json{{"agent", {{"td_variant", "bogus"}}}}));
}

TEST_CASE("run_train writes the full artifact set") {
  const std::string out = fresh_dir("train_artifacts");
  ExperimentConfig cfg = tiny_experiment(out);
  RunArtifacts art = run_train(cfg);

  CHECK(std::filesystem::exists(art.config_path));
  CHECK(std::filesystem::exists(art.learning_curve_path));
  CHECK(std::filesystem::exists(art.checkpoint_path));
  CHECK(std::filesystem::exists(art.final_rewards_path));
  CHECK(std::filesystem::exists(art.nth_lowest_path));

  const std::string curve = slurp(art.learning_curve_path);
  CHECK(curve.rfind("step,R_m\n", 0) == 0);
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 3);  // header + 2 eval points

  const std::string rewards = slurp(art.final_rewards_path);
  CHECK(std::count(rewards.begin(), rewards.end(), '\n') == 40);

  // nth_lowest: one row per rank, means non-decreasing in the rank
  std::ifstream nth(art.nth_lowest_path);
  std::string line;
  std::getline(nth, line);
  CHECK(line == "n,mean_nth_lowest_throughput");
  double prev = -1.0;
  int rows = 0;
  while (std::getline(nth, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    CHECK(std::stoi(line.substr(0, comma)) == rows + 1);
    const double mean = std::stod(line.substr(comma + 1));
    CHECK(mean >= prev);
    prev = mean;
    ++rows;
  }
  CHECK(rows == 4);

  // the resolved config replays to byte-identical artifacts
  ExperimentConfig replay = load_experiment_config(art.config_path);
  replay.out_dir = fresh_dir("train_artifacts_replay");
  RunArtifacts art2 = run_train(replay);
  CHECK(slurp(art2.learning_curve_path) == curve);
  CHECK(slurp(art2.final_rewards_path) == rewards);
  CHECK(slurp(art2.nth_lowest_path) == slurp(art.nth_lowest_path));
  CHECK(slurp(art2.checkpoint_path) == slurp(art.checkpoint_path));
}

TEST_CASE("run_train rejects non-learning methods; patience zero means one eval") {
  ExperimentConfig cfg = tiny_experiment(fresh_dir("bad_method"));
  cfg.method = Method::random;
  CHECK_THROWS_AS(run_train(cfg), std::invalid_argument);

  ExperimentConfig one = tiny_experiment(fresh_dir("patience_zero"));
  one.agent.patience = 0;
  one.agent.max_steps = 0;
  RunArtifacts art = run_train(one);
  const std::string curve = slurp(art.learning_curve_path);
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 2);  // header + exactly one point
}

TEST_CASE("run_eval on a trained checkpoint") {
  const std::string out = fresh_dir("eval_src");
  ExperimentConfig cfg = tiny_experiment(out);
  RunArtifacts trained = run_train(cfg);

  const std::string eval_dir = fresh_dir("eval_out");
  RunArtifacts ev = run_eval(trained.checkpoint_path, cfg, 1, 5, 11, eval_dir);
  const std::string rewards = slurp(ev.final_rewards_path);
  CHECK(std::count(rewards.begin(), rewards.end(), '\n') == 1);  // episodes = 1 -> one line

  // architecture mismatch: same checkpoint, bigger environment
  ExperimentConfig big = cfg;
  big.env.topology.n_aps = 5;
  CHECK_THROWS_AS(run_eval(trained.checkpoint_path, big, 1, 5, 11, fresh_dir("eval_bad")),
                  std::runtime_error);
}

TEST_CASE("baselines: determinism and the M=1 no-op world") {
  ExperimentConfig cfg = tiny_experiment("");
  cfg.env.topology.n_channels = 1;
  cfg.env.reward_k = 2;

  RunArtifacts a = run_baseline(Method::random, cfg, 30, 5, 5, fresh_dir("base_a"));
  RunArtifacts b = run_baseline(Method::random, cfg, 30, 5, 5, fresh_dir("base_b"));
  CHECK(slurp(a.final_rewards_path) == slurp(b.final_rewards_path));

  // with one channel every action is a no-op: horizon must not matter
  RunArtifacts h1 = run_baseline(Method::random, cfg, 30, 1, 5, fresh_dir("base_h1"));
  CHECK(slurp(a.final_rewards_path) == slurp(h1.final_rewards_path));

  CHECK_THROWS_AS(run_baseline(Method::gcn_sap, cfg, 3, 5, 5, fresh_dir("base_bad")),
                  std::invalid_argument);
}

TEST_CASE("a constant-Q checkpoint is distributionally a random policy") {
  ExperimentConfig cfg = tiny_experiment("");
  cfg.env.topology.n_aps = 5;
  cfg.env.topology.n_channels = 2;
  cfg.env.reward_k = 3;

  QNetworkConfig nn = cfg.network_config();
  QNetwork net(nn, 1);
  oracle::set_constant_outputs(net, 0.0, std::vector<double>(nn.n_actions(), 0.0));
  const std::string ckpt_dir = fresh_dir("const_ckpt");
  const std::string ckpt = ckpt_dir + "/checkpoint.bin";
  net.save(ckpt);

  const int episodes = 400;
  RunArtifacts greedy = run_eval(ckpt, cfg, episodes, 5, 21, fresh_dir("const_eval"));
  RunArtifacts rnd = run_baseline(Method::random, cfg, episodes, 5, 22, fresh_dir("const_rand"));

  std::vector<double> a, b;
  {
    std::ifstream ia(greedy.final_rewards_path), ib(rnd.final_rewards_path);
    for (std::string line; std::getline(ia, line);)
      if (!line.empty()) a.push_back(std::stod(line));
    for (std::string line; std::getline(ib, line);)
      if (!line.empty()) b.push_back(std::stod(line));
  }
  REQUIRE(a.size() == episodes);
  REQUIRE(b.size() == episodes);

  // two-sample KS at alpha = 0.001: c(alpha) * sqrt((n+m)/(n m))
  const double d_crit = 1.9495 * std::sqrt(2.0 / episodes);
  CHECK(oracle::ks_distance(a, b) < d_crit);
}

TEST_CASE("compare: stats, ratios and env mismatch") {
  ExperimentConfig cfg = tiny_experiment("");
  const std::string d1 = fresh_dir("cmp_1");
  const std::string d2 = fresh_dir("cmp_2");
  run_baseline(Method::random, cfg, 20, 5, 5, d1);
  run_baseline(Method::random, cfg, 20, 5, 5, d2);  // identical inputs

  CompareResult res = compare({d1, d2});
  REQUIRE(res.rows.size() == 2);
  REQUIRE(res.pairs.size() == 1);
  CHECK(res.pairs[0].final_reward_ratio == doctest::Approx(1.0));
  CHECK(res.pairs[0].lowest_throughput_ratio == doctest::Approx(1.0));
  CHECK(res.rows[0].method == "random");
  CHECK(res.text_table().find("pairwise") != std::string::npos);
  CHECK(res.csv().find("run,method,") == 0);

  CHECK_THROWS_AS(compare({d1}), std::invalid_argument);

  // different env config: explicit failure
  ExperimentConfig other = cfg;
  other.env.topology.cs_range = 100.0;
  const std::string d3 = fresh_dir("cmp_3");
  run_baseline(Method::random, other, 20, 5, 5, d3);
  CHECK_THROWS_AS(compare({d1, d3}), std::runtime_error);
}

TEST_CASE("trace files are valid JSON lines") {
  ExperimentConfig cfg = tiny_experiment("");
  const std::string dir = fresh_dir("traced");
  const std::string trace = dir + "/trace.jsonl";
  run_baseline(Method::sap_only, cfg, 3, 5, 5, dir, trace);

  std::ifstream is(trace);
  REQUIRE(is);
  int lines = 0;
  for (std::string line; std::getline(is, line);) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j.contains("state_hash"));
    CHECK(j.contains("action"));
    CHECK(j.contains("reward"));
    ++lines;
  }
  CHECK(lines == 3 * 5);  // episodes x horizon
}

TEST_CASE("cli: subcommands wire through and errors are one-line") {
  const std::string dir = fresh_dir("cli");
  const std::string cfg_path = dir + "/cfg.json";
  ExperimentConfig cfg = tiny_experiment(dir + "/run");
  {
    std::ofstream os(cfg_path);
    os << experiment_to_json(cfg).dump(2) << "\n";
  }

  auto run_cli = [](std::vector<std::string> args) {
    std::vector<char*> argv;
    args.insert(args.begin(), "chanalloc");
    for (auto& a : args) argv.push_back(a.data());
    return cli_main(static_cast<int>(argv.size()), argv.data());
  };

  CHECK(run_cli({"train", "--config", cfg_path}) == 0);
  CHECK(std::filesystem::exists(dir + "/run/checkpoint.bin"));
  CHECK(run_cli({"eval", "--run", dir + "/run", "--episodes", "2", "--horizon", "3"}) == 0);
  CHECK(std::filesystem::exists(dir + "/run/eval/final_rewards.csv"));
  CHECK(run_cli({"baseline", "--config", cfg_path, "--method", "random", "--episodes", "2",
                 "--out", dir + "/rand"}) == 0);
  CHECK(run_cli({"compare", dir + "/run", dir + "/rand", "--out", dir + "/summary.csv"}) == 0);
  CHECK(std::filesystem::exists(dir + "/summary.csv"));

  // failures surface as exit code 1
  CHECK(run_cli({"train", "--config", dir + "/missing.json"}) == 1);
  CHECK(run_cli({"baseline", "--config", cfg_path, "--method", "gcn_sap", "--out", dir + "/x"}) ==
        1);
  CHECK(run_cli({"eval", "--run", dir + "/nonexistent"}) == 1);
}
