#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "chanalloc/rl.hpp"

namespace chanalloc {

enum class Method { gcn_sap, gcn_eps, mlp_sap, mlp_eps, sap_only, random };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
bool is_learning_method(Method m);

struct NetworkWidths {
  int gcn_width = 32;
  int trunk_width = 128;
  int head_width = 64;
};

struct ExperimentConfig {
  EnvConfig env;
  AgentConfig agent;
  NetworkWidths network;
  Method method = Method::gcn_sap;
  std::uint64_t seed = 1;
  std::string out_dir;
  int final_eval_episodes = 1000;
  int eval_horizon = 20;

  QNetworkConfig network_config() const;
  void validate() const;
};

nlohmann::json experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

struct RunArtifacts {
  std::string dir;
  std::string config_path;
  std::string learning_curve_path;  // empty for eval/baseline artifacts
  std::string final_rewards_path;
  std::string nth_lowest_path;
  std::string checkpoint_path;  // empty for baseline artifacts
};

// Trains the configured learning method, then evaluates the trained network;
// writes config.json, learning_curve.csv, checkpoint.bin, final_rewards.csv
// and nth_lowest.csv under cfg.out_dir.
RunArtifacts run_train(const ExperimentConfig& cfg);

// Evaluates a saved checkpoint for `episodes` greedy episodes.
RunArtifacts run_eval(const std::string& checkpoint_path, const ExperimentConfig& cfg,
                      int episodes, int horizon, std::uint64_t seed, const std::string& out_dir,
                      const std::string& trace_path = "");

// sap_only / random rollouts with the same CSV outputs as run_eval.
RunArtifacts run_baseline(Method method, const ExperimentConfig& cfg, int episodes, int horizon,
                          std::uint64_t seed, const std::string& out_dir,
                          const std::string& trace_path = "");

struct CompareRow {
  std::string dir;
  std::string method;
  double mean_final_reward = 0.0;
  double median_final_reward = 0.0;
  double mean_lowest_throughput = 0.0;
};

struct ComparePair {
  std::string dir_a, dir_b;
  double final_reward_ratio = 0.0;       // mean(a) / mean(b)
  double lowest_throughput_ratio = 0.0;  // mean lowest(a) / mean lowest(b)
};

struct CompareResult {
  std::vector<CompareRow> rows;
  std::vector<ComparePair> pairs;

  std::string text_table() const;
  std::string csv() const;
};

// Reads >= 2 artifact directories; fails if their env configs differ.
CompareResult compare(const std::vector<std::string>& artifact_dirs);

// CLI entry point (train / eval / baseline / compare subcommands)
int cli_main(int argc, char** argv);

}  // namespace chanalloc
