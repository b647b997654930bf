#include "chanalloc/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

namespace chanalloc {

namespace {
constexpr std::uint64_t kFinalEvalStream = 0x50;
constexpr std::uint64_t kBaselineStream = 0x51;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
  if (!os) throw std::runtime_error("failed writing: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::gcn_sap: return "gcn_sap";
    case Method::gcn_eps: return "gcn_eps";
    case Method::mlp_sap: return "mlp_sap";
    case Method::mlp_eps: return "mlp_eps";
    case Method::sap_only: return "sap_only";
    case Method::random: return "random";
  }
  throw std::logic_error("method_name: bad enum");
}

Method method_from_name(const std::string& name) {
  for (Method m : {Method::gcn_sap, Method::gcn_eps, Method::mlp_sap, Method::mlp_eps,
                   Method::sap_only, Method::random})
    if (method_name(m) == name) return m;
  throw std::invalid_argument("unknown method: " + name);
}

bool is_learning_method(Method m) {
  return m == Method::gcn_sap || m == Method::gcn_eps || m == Method::mlp_sap ||
         m == Method::mlp_eps;
}

QNetworkConfig ExperimentConfig::network_config() const {
  QNetworkConfig nn;
  nn.kind = (method == Method::gcn_sap || method == Method::gcn_eps) ? QNetworkConfig::Kind::gcn
                                                                     : QNetworkConfig::Kind::mlp;
  nn.n_aps = env.topology.n_aps;
  nn.n_channels = env.topology.n_channels;
  nn.gcn_width = network.gcn_width;
  nn.trunk_width = network.trunk_width;
  nn.head_width = network.head_width;
  return nn;
}

void ExperimentConfig::validate() const {
  env.validate();
  agent.validate();
  if (network.gcn_width < 1 || network.trunk_width < 1 || network.head_width < 1)
    throw std::invalid_argument("ExperimentConfig: network widths must be >= 1");
  if (final_eval_episodes < 1)
    throw std::invalid_argument("ExperimentConfig: final_eval_episodes must be >= 1");
  if (eval_horizon < 1) throw std::invalid_argument("ExperimentConfig: eval_horizon must be >= 1");
}

nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["method"] = method_name(cfg.method);
  j["seed"] = cfg.seed;
  j["out"] = cfg.out_dir;
  j["final_eval_episodes"] = cfg.final_eval_episodes;
  j["eval_horizon"] = cfg.eval_horizon;
  j["env"] = {{"n_aps", cfg.env.topology.n_aps},
              {"region_side", cfg.env.topology.region_side},
              {"cs_range", cfg.env.topology.cs_range},
              {"n_channels", cfg.env.topology.n_channels},
              {"reward_k", cfg.env.reward_k},
              {"access_intensity", cfg.env.access_intensity},
              {"episode_horizon", cfg.env.episode_horizon},
              {"resample_topology_each_episode", cfg.env.resample_topology_each_episode}};
  j["agent"] = {{"gamma", cfg.agent.gamma},
                {"epsilon", cfg.agent.epsilon},
                {"beta_sap", cfg.agent.beta_sap},
                {"target_sync_interval", cfg.agent.target_sync_interval},
                {"batch_size", cfg.agent.batch_size},
                {"eval_interval", cfg.agent.eval_interval},
                {"eval_episodes", cfg.agent.eval_episodes},
                {"patience", cfg.agent.patience},
                {"max_steps", cfg.agent.max_steps},
                {"learning_rate", cfg.agent.learning_rate},
                {"replay_capacity", cfg.agent.replay_capacity},
                {"per_lambda", cfg.agent.per_lambda},
                {"per_min_priority", cfg.agent.per_min_priority},
                {"td_variant", cfg.agent.td_variant == TdVariant::main_network ? "main" : "target"}};
  j["network"] = {{"gcn_width", cfg.network.gcn_width},
                  {"trunk_width", cfg.network.trunk_width},
                  {"head_width", cfg.network.head_width}};
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.method = method_from_name(j.value("method", method_name(cfg.method)));
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out", cfg.out_dir);
  cfg.final_eval_episodes = j.value("final_eval_episodes", cfg.final_eval_episodes);
  cfg.eval_horizon = j.value("eval_horizon", cfg.eval_horizon);
  if (j.contains("env")) {
    const auto& e = j.at("env");
    cfg.env.topology.n_aps = e.value("n_aps", cfg.env.topology.n_aps);
    cfg.env.topology.region_side = e.value("region_side", cfg.env.topology.region_side);
    cfg.env.topology.cs_range = e.value("cs_range", cfg.env.topology.cs_range);
    cfg.env.topology.n_channels = e.value("n_channels", cfg.env.topology.n_channels);
    cfg.env.reward_k = e.value("reward_k", cfg.env.reward_k);
    cfg.env.access_intensity = e.value("access_intensity", cfg.env.access_intensity);
    cfg.env.episode_horizon = e.value("episode_horizon", cfg.env.episode_horizon);
    cfg.env.resample_topology_each_episode =
        e.value("resample_topology_each_episode", cfg.env.resample_topology_each_episode);
  }
  if (j.contains("agent")) {
    const auto& a = j.at("agent");
    cfg.agent.gamma = a.value("gamma", cfg.agent.gamma);
    cfg.agent.epsilon = a.value("epsilon", cfg.agent.epsilon);
    cfg.agent.beta_sap = a.value("beta_sap", cfg.agent.beta_sap);
    cfg.agent.target_sync_interval = a.value("target_sync_interval", cfg.agent.target_sync_interval);
    cfg.agent.batch_size = a.value("batch_size", cfg.agent.batch_size);
    cfg.agent.eval_interval = a.value("eval_interval", cfg.agent.eval_interval);
    cfg.agent.eval_episodes = a.value("eval_episodes", cfg.agent.eval_episodes);
    cfg.agent.patience = a.value("patience", cfg.agent.patience);
    cfg.agent.max_steps = a.value("max_steps", cfg.agent.max_steps);
    cfg.agent.learning_rate = a.value("learning_rate", cfg.agent.learning_rate);
    cfg.agent.replay_capacity = a.value("replay_capacity", cfg.agent.replay_capacity);
    cfg.agent.per_lambda = a.value("per_lambda", cfg.agent.per_lambda);
    cfg.agent.per_min_priority = a.value("per_min_priority", cfg.agent.per_min_priority);
    const std::string tv = a.value("td_variant", std::string("main"));
    if (tv == "main") {
      cfg.agent.td_variant = TdVariant::main_network;
    } else if (tv == "target") {
      cfg.agent.td_variant = TdVariant::target_network;
    } else {
      throw std::invalid_argument("agent.td_variant must be \"main\" or \"target\"");
    }
  }
  if (j.contains("network")) {
    const auto& n = j.at("network");
    cfg.network.gcn_width = n.value("gcn_width", cfg.network.gcn_width);
    cfg.network.trunk_width = n.value("trunk_width", cfg.network.trunk_width);
    cfg.network.head_width = n.value("head_width", cfg.network.head_width);
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("bad config " + path + ": " + e.what());
  }
  return experiment_from_json(j);
}

namespace {

std::string rewards_csv(const std::vector<double>& rewards) {
  std::string s;
  for (double r : rewards) {
    s += fmt_double(r);
    s += '\n';
  }
  return s;
}

std::string nth_lowest_csv(const std::vector<std::vector<double>>& sorted_throughputs) {
  std::string s = "n,mean_nth_lowest_throughput\n";
  if (sorted_throughputs.empty()) return s;
  const std::size_t n = sorted_throughputs.front().size();
  for (std::size_t rank = 0; rank < n; ++rank) {
    double sum = 0.0;
    for (const auto& tp : sorted_throughputs) sum += tp.at(rank);
    s += std::to_string(rank + 1);
    s += ',';
    s += fmt_double(sum / sorted_throughputs.size());
    s += '\n';
  }
  return s;
}

std::string curve_csv(const std::vector<LearningCurvePoint>& curve) {
  std::string s = "step,R_m\n";
  for (const auto& p : curve) {
    s += std::to_string(p.step);
    s += ',';
    s += fmt_double(p.mean_reward);
    s += '\n';
  }
  return s;
}

std::string traces_jsonl(const std::vector<std::vector<TraceRecord>>& traces) {
  std::ostringstream os;
  for (const auto& episode : traces)
    for (const auto& rec : episode) write_trace_line(os, rec);
  return os.str();
}

void write_config(const std::string& path, const ExperimentConfig& cfg) {
  write_file(path, experiment_to_json(cfg).dump(2) + "\n");
}

RunArtifacts write_eval_artifacts(const std::string& out_dir, const ExperimentConfig& resolved,
                                  const EpisodeRunResult& result, const std::string& trace_path) {
  std::filesystem::create_directories(out_dir);
  RunArtifacts art;
  art.dir = out_dir;
  art.config_path = out_dir + "/config.json";
  art.final_rewards_path = out_dir + "/final_rewards.csv";
  art.nth_lowest_path = out_dir + "/nth_lowest.csv";
  write_config(art.config_path, resolved);
  write_file(art.final_rewards_path, rewards_csv(result.final_rewards));
  write_file(art.nth_lowest_path, nth_lowest_csv(result.final_sorted_throughput));
  if (!trace_path.empty()) write_file(trace_path, traces_jsonl(result.traces));
  return art;
}

}  // namespace

RunArtifacts run_train(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!is_learning_method(cfg.method))
    throw std::invalid_argument("run_train: method " + method_name(cfg.method) +
                                " is not a learning method");
  if (cfg.out_dir.empty()) throw std::invalid_argument("run_train: output directory not set");

  const Behavior behavior = (cfg.method == Method::gcn_sap || cfg.method == Method::mlp_sap)
                                ? Behavior::sap
                                : Behavior::epsilon_greedy;
  TrainResult tr = train(cfg.env, cfg.agent, cfg.network_config(), behavior, cfg.seed);

  std::filesystem::create_directories(cfg.out_dir);
  RunArtifacts art;
  art.dir = cfg.out_dir;
  art.config_path = cfg.out_dir + "/config.json";
  art.learning_curve_path = cfg.out_dir + "/learning_curve.csv";
  art.checkpoint_path = cfg.out_dir + "/checkpoint.bin";
  art.final_rewards_path = cfg.out_dir + "/final_rewards.csv";
  art.nth_lowest_path = cfg.out_dir + "/nth_lowest.csv";

  write_config(art.config_path, cfg);
  write_file(art.learning_curve_path, curve_csv(tr.curve));
  tr.network.save(art.checkpoint_path);

  const EpisodeRunResult ev = evaluate(tr.network, cfg.env, cfg.final_eval_episodes,
                                       cfg.eval_horizon, derive_seed(cfg.seed, kFinalEvalStream));
  write_file(art.final_rewards_path, rewards_csv(ev.final_rewards));
  write_file(art.nth_lowest_path, nth_lowest_csv(ev.final_sorted_throughput));
  return art;
}

RunArtifacts run_eval(const std::string& checkpoint_path, const ExperimentConfig& cfg,
                      int episodes, int horizon, std::uint64_t seed, const std::string& out_dir,
                      const std::string& trace_path) {
  cfg.env.validate();
  QNetwork net = QNetwork::load(checkpoint_path);
  if (net.config().n_aps != cfg.env.topology.n_aps ||
      net.config().n_channels != cfg.env.topology.n_channels)
    throw std::runtime_error("run_eval: checkpoint architecture does not match environment (" +
                             checkpoint_path + ")");

  const EpisodeRunResult result =
      run_episodes(greedy_policy(net), cfg.env, episodes, horizon,
                   derive_seed(seed, kFinalEvalStream), Exec::parallel, !trace_path.empty());

  ExperimentConfig resolved = cfg;
  resolved.seed = seed;
  resolved.out_dir = out_dir;
  resolved.final_eval_episodes = episodes;
  resolved.eval_horizon = horizon;
  RunArtifacts art = write_eval_artifacts(out_dir, resolved, result, trace_path);
  art.checkpoint_path = checkpoint_path;
  return art;
}

RunArtifacts run_baseline(Method method, const ExperimentConfig& cfg, int episodes, int horizon,
                          std::uint64_t seed, const std::string& out_dir,
                          const std::string& trace_path) {
  cfg.env.validate();
  PolicyFactory policy;
  if (method == Method::sap_only) {
    policy = sap_policy(cfg.agent.beta_sap);
  } else if (method == Method::random) {
    policy = random_policy();
  } else {
    throw std::invalid_argument("run_baseline: method must be sap_only or random");
  }

  const EpisodeRunResult result =
      run_episodes(policy, cfg.env, episodes, horizon, derive_seed(seed, kBaselineStream),
                   Exec::parallel, !trace_path.empty());

  ExperimentConfig resolved = cfg;
  resolved.method = method;
  resolved.seed = seed;
  resolved.out_dir = out_dir;
  resolved.final_eval_episodes = episodes;
  resolved.eval_horizon = horizon;
  return write_eval_artifacts(out_dir, resolved, result, trace_path);
}

namespace {

std::vector<double> read_rewards_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::vector<double> rewards;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    rewards.push_back(std::stod(line));
  }
  if (rewards.empty()) throw std::runtime_error("no rewards in " + path);
  return rewards;
}

double read_mean_lowest(const std::string& nth_lowest_path) {
  std::ifstream is(nth_lowest_path);
  if (!is) throw std::runtime_error("cannot open: " + nth_lowest_path);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) break;
    if (std::stoi(line.substr(0, comma)) == 1) return std::stod(line.substr(comma + 1));
  }
  throw std::runtime_error("no rank-1 row in " + nth_lowest_path);
}

}  // namespace

std::string CompareResult::text_table() const {
  std::ostringstream os;
  os << "run  method  mean_final_reward  median_final_reward  mean_lowest_throughput\n";
  for (const auto& r : rows)
    os << r.dir << "  " << r.method << "  " << fmt_double(r.mean_final_reward) << "  "
       << fmt_double(r.median_final_reward) << "  " << fmt_double(r.mean_lowest_throughput)
       << "\n";
  os << "\npairwise ratios (a/b)\n";
  for (const auto& p : pairs)
    os << p.dir_a << " vs " << p.dir_b << ": final_reward " << fmt_double(p.final_reward_ratio)
       << ", lowest_throughput " << fmt_double(p.lowest_throughput_ratio) << "\n";
  return os.str();
}

std::string CompareResult::csv() const {
  std::string s = "run,method,mean_final_reward,median_final_reward,mean_lowest_throughput\n";
  for (const auto& r : rows)
    s += r.dir + "," + r.method + "," + fmt_double(r.mean_final_reward) + "," +
         fmt_double(r.median_final_reward) + "," + fmt_double(r.mean_lowest_throughput) + "\n";
  s += "\nrun_a,run_b,final_reward_ratio,lowest_throughput_ratio\n";
  for (const auto& p : pairs)
    s += p.dir_a + "," + p.dir_b + "," + fmt_double(p.final_reward_ratio) + "," +
         fmt_double(p.lowest_throughput_ratio) + "\n";
  return s;
}

CompareResult compare(const std::vector<std::string>& artifact_dirs) {
  if (artifact_dirs.size() < 2) throw std::invalid_argument("compare: need at least 2 runs");

  CompareResult result;
  nlohmann::json reference_env;
  for (const std::string& dir : artifact_dirs) {
    const nlohmann::json cfg = nlohmann::json::parse(read_file(dir + "/config.json"));
    if (reference_env.is_null()) {
      reference_env = cfg.at("env");
    } else if (cfg.at("env") != reference_env) {
      throw std::runtime_error("compare: env config of " + dir + " differs from " +
                               artifact_dirs.front());
    }
    std::vector<double> rewards = read_rewards_csv(dir + "/final_rewards.csv");
    std::sort(rewards.begin(), rewards.end());
    double sum = 0.0;
    for (double r : rewards) sum += r;
    const std::size_t n = rewards.size();
    CompareRow row;
    row.dir = dir;
    row.method = cfg.value("method", std::string("?"));
    row.mean_final_reward = sum / n;
    row.median_final_reward =
        n % 2 == 1 ? rewards[n / 2] : 0.5 * (rewards[n / 2 - 1] + rewards[n / 2]);
    row.mean_lowest_throughput = read_mean_lowest(dir + "/nth_lowest.csv");
    result.rows.push_back(std::move(row));
  }

  for (std::size_t a = 0; a < result.rows.size(); ++a) {
    for (std::size_t b = a + 1; b < result.rows.size(); ++b) {
      ComparePair p;
      p.dir_a = result.rows[a].dir;
      p.dir_b = result.rows[b].dir;
      p.final_reward_ratio = result.rows[a].mean_final_reward / result.rows[b].mean_final_reward;
      p.lowest_throughput_ratio =
          result.rows[a].mean_lowest_throughput / result.rows[b].mean_lowest_throughput;
      result.pairs.push_back(std::move(p));
    }
  }
  return result;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"deep-RL channel allocation for dense WLANs"};
  app.require_subcommand(1);

  std::string config_path, out_dir, method_override, trace_path, checkpoint_path, compare_out;
  std::uint64_t seed_override = 0;
  bool seed_set = false, out_set = false, method_set = false;
  int episodes = 0, horizon = 0;
  std::vector<std::string> compare_dirs;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    cmd->add_option("--config", config_path, "experiment config JSON")->required(config_required);
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { seed_override = s; seed_set = true; }, "seed override");
    cmd->add_option_function<std::string>(
        "--out", [&](const std::string& s) { out_dir = s; out_set = true; }, "output directory");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a learning method, write artifacts");
  add_common(train_cmd, true);
  train_cmd->add_option_function<std::string>(
      "--method", [&](const std::string& s) { method_override = s; method_set = true; },
      "method override (gcn_sap|gcn_eps|mlp_sap|mlp_eps)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint greedily");
  add_common(eval_cmd, false);
  eval_cmd->add_option("--run", checkpoint_path,
                       "run directory holding checkpoint.bin and config.json");
  eval_cmd->add_option("--episodes", episodes, "evaluation episodes (default 1000)");
  eval_cmd->add_option("--horizon", horizon, "steps per episode (default 20)");
  eval_cmd->add_option("--trace", trace_path, "write a JSON-lines episode trace to this file");

  CLI::App* baseline_cmd = app.add_subcommand("baseline", "run the sap_only or random baseline");
  add_common(baseline_cmd, true);
  baseline_cmd
      ->add_option_function<std::string>(
          "--method", [&](const std::string& s) { method_override = s; method_set = true; },
          "sap_only|random")
      ->required(false);
  baseline_cmd->add_option("--episodes", episodes, "episodes (default final_eval_episodes)");
  baseline_cmd->add_option("--horizon", horizon, "steps per episode (default eval_horizon)");
  baseline_cmd->add_option("--trace", trace_path, "write a JSON-lines episode trace to this file");

  CLI::App* compare_cmd = app.add_subcommand("compare", "summarize and compare artifact dirs");
  compare_cmd->add_option("dirs", compare_dirs, "artifact directories")->expected(-2);
  compare_cmd->add_option("--out", compare_out, "also write the summary CSV to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (app.got_subcommand(train_cmd)) {
      ExperimentConfig cfg = load_experiment_config(config_path);
      if (seed_set) cfg.seed = seed_override;
      if (out_set) cfg.out_dir = out_dir;
      if (method_set) cfg.method = method_from_name(method_override);
      RunArtifacts art = run_train(cfg);
      std::printf("wrote %s\n", art.dir.c_str());
    } else if (app.got_subcommand(eval_cmd)) {
      std::string run_dir = checkpoint_path;
      std::string ckpt, cfg_path = config_path;
      if (!run_dir.empty()) {
        ckpt = run_dir + "/checkpoint.bin";
        if (cfg_path.empty()) cfg_path = run_dir + "/config.json";
      }
      if (ckpt.empty() || cfg_path.empty())
        throw std::runtime_error("eval: need --run DIR (or --config plus a run directory)");
      ExperimentConfig cfg = load_experiment_config(cfg_path);
      const int n_episodes = episodes > 0 ? episodes : 1000;
      const int n_horizon = horizon > 0 ? horizon : 20;
      const std::uint64_t seed = seed_set ? seed_override : cfg.seed;
      const std::string dest = out_set ? out_dir : run_dir + "/eval";
      RunArtifacts art = run_eval(ckpt, cfg, n_episodes, n_horizon, seed, dest, trace_path);
      std::printf("wrote %s\n", art.dir.c_str());
    } else if (app.got_subcommand(baseline_cmd)) {
      ExperimentConfig cfg = load_experiment_config(config_path);
      if (seed_set) cfg.seed = seed_override;
      const Method m = method_set ? method_from_name(method_override) : cfg.method;
      const int n_episodes = episodes > 0 ? episodes : cfg.final_eval_episodes;
      const int n_horizon = horizon > 0 ? horizon : cfg.eval_horizon;
      if (!out_set) {
        if (cfg.out_dir.empty()) throw std::runtime_error("baseline: no output directory");
        out_dir = cfg.out_dir;
      }
      RunArtifacts art =
          run_baseline(m, cfg, n_episodes, n_horizon, cfg.seed, out_dir, trace_path);
      std::printf("wrote %s\n", art.dir.c_str());
    } else if (app.got_subcommand(compare_cmd)) {
      CompareResult result = compare(compare_dirs);
      std::fputs(result.text_table().c_str(), stdout);
      if (!compare_out.empty()) write_file(compare_out, result.csv());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace chanalloc
