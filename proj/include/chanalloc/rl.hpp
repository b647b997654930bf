#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "chanalloc/env.hpp"
#include "chanalloc/nn.hpp"
#include "chanalloc/parallel.hpp"
#include "chanalloc/rng.hpp"

namespace chanalloc {

struct Transition {
  CanonicalState state;
  int action = 0;  // flat index
  double reward = 0.0;
  CanonicalState next_state;
};

// Ring buffer with proportional prioritization: P(i) = p_i^lambda / sum_k
// p_k^lambda, p_i = |td_error_i| + min_priority. New entries get the current
// max priority (1.0 when empty).
class PrioritizedReplayBuffer {
 public:
  explicit PrioritizedReplayBuffer(std::size_t capacity = 1000, double lambda = 0.6,
                                   double min_priority = 1e-3);

  void insert(Transition t);

  struct Sample {
    std::vector<std::size_t> indices;
    std::vector<const Transition*> transitions;
    std::vector<double> probabilities;
  };
  // batch draws with replacement; throws std::logic_error on an empty buffer
  Sample sample(std::size_t batch_size, Rng& rng) const;

  void update_priorities(const std::vector<std::size_t>& indices,
                         const std::vector<double>& td_errors);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  double priority(std::size_t i) const { return priorities_.at(i); }
  double lambda() const { return lambda_; }
  double min_priority() const { return min_priority_; }
  const Transition& transition(std::size_t i) const { return entries_.at(i); }

 private:
  std::size_t capacity_;
  double lambda_;
  double min_priority_;
  std::vector<Transition> entries_;
  std::vector<double> priorities_;
  std::size_t next_slot_ = 0;
};

// Which Q evaluates the subtracted term of the TD error used for
// priorities. `main_network` pairs with the training loss; `target_network`
// is the literal published form, kept selectable.
enum class TdVariant { main_network, target_network };

struct AgentConfig {
  double gamma = 0.9;
  double epsilon = 0.1;
  double beta_sap = 0.1;
  long target_sync_interval = 100000;
  int batch_size = 32;
  long eval_interval = 10000;
  int eval_episodes = 100;
  long patience = 300000;
  long max_steps = 0;  // 0: run until patience stops improvement
  double learning_rate = 0.001;
  std::size_t replay_capacity = 1000;
  double per_lambda = 0.6;
  double per_min_priority = 1e-3;
  TdVariant td_variant = TdVariant::main_network;

  void validate() const;
};

// Y = r + gamma * Q_target(s', argmax_a Q_main(s', a)); argmax ties break to
// the lowest flat index.
std::vector<double> ddqn_target(const std::vector<const Transition*>& batch,
                                const QNetwork& main_net, const QNetwork& target_net,
                                double gamma, Exec exec = Exec::parallel);
double ddqn_target_single(const Transition& t, const QNetwork& main_net,
                          const QNetwork& target_net, double gamma);

double td_error(const Transition& t, const QNetwork& main_net, const QNetwork& target_net,
                double gamma, TdVariant variant = TdVariant::main_network);

// uniform with probability epsilon, else argmax with uniform tie-breaking
int epsilon_greedy(const std::vector<double>& q_values, double epsilon, Rng& rng);

// Boltzmann channel distribution of one AP given everyone else's channels
std::vector<double> sap_channel_distribution(const ColoredGraph& graph, int ap, int n_channels,
                                             double beta);
// one AP picked uniformly, its channel sampled from the payoff Boltzmann
int sap_select(const CanonicalState& state, double beta, Rng& rng);

// policy = per-episode closure; factory gives each episode its own instance
using Policy = std::function<int(const CanonicalState&, Rng&)>;
using PolicyFactory = std::function<Policy()>;

PolicyFactory greedy_policy(const QNetwork& net);
PolicyFactory sap_policy(double beta);
PolicyFactory random_policy();

struct EpisodeRunResult {
  double mean_final_reward = 0.0;
  std::vector<double> final_rewards;                       // one per episode
  std::vector<std::vector<double>> final_sorted_throughput;  // ascending, one per episode
  std::vector<std::vector<TraceRecord>> traces;            // filled when requested
};

// Runs `episodes` independent episodes of `horizon` steps; episode e is a
// pure function of (config, base_seed, e), so slots can run in parallel and
// the result never depends on scheduling.
EpisodeRunResult run_episodes(const PolicyFactory& make_policy, const EnvConfig& env_config,
                              int episodes, int horizon, std::uint64_t base_seed,
                              Exec exec = Exec::parallel, bool record_traces = false);

EpisodeRunResult evaluate(const QNetwork& net, const EnvConfig& env_config, int episodes,
                          int horizon, std::uint64_t base_seed, Exec exec = Exec::parallel);

enum class Behavior { sap, epsilon_greedy };

struct LearningCurvePoint {
  long step;
  double mean_reward;
};

struct TrainResult {
  QNetwork network;
  std::vector<LearningCurvePoint> curve;
  long steps_run = 0;
};

// Observation points for tests and diagnostics; no-ops when unset.
struct TrainHooks {
  std::function<void(long step, const QNetwork& main_net, const QNetwork& target_net)> after_step;
  std::function<void(long step, double loss)> after_update;
};

// One DDQN training run: behavior policy collects transitions, PER batches
// drive Adam updates of the main network, the target network syncs every
// target_sync_interval steps, the learning curve records periodic greedy
// evaluations. Deterministic in `seed`.
TrainResult train(const EnvConfig& env_config, const AgentConfig& agent_config,
                  const QNetworkConfig& nn_config, Behavior behavior, std::uint64_t seed,
                  const TrainHooks& hooks = {});

}  // namespace chanalloc
