#include "chanalloc/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

namespace chanalloc {

namespace {
constexpr std::uint64_t kInitStream = 0x30;
constexpr std::uint64_t kBehaviorStream = 0x31;
constexpr std::uint64_t kSampleStream = 0x32;
constexpr std::uint64_t kResetStream = 0x33;
constexpr std::uint64_t kEvalStream = 0x34;
constexpr std::uint64_t kEpisodeResetStream = 0x40;
constexpr std::uint64_t kEpisodePolicyStream = 0x41;
}  // namespace

PrioritizedReplayBuffer::PrioritizedReplayBuffer(std::size_t capacity, double lambda,
                                                 double min_priority)
    : capacity_(capacity), lambda_(lambda), min_priority_(min_priority) {
  if (capacity_ == 0) throw std::invalid_argument("replay buffer: capacity must be > 0");
  if (lambda_ < 0.0) throw std::invalid_argument("replay buffer: lambda must be >= 0");
  if (min_priority_ < 0.0)
    throw std::invalid_argument("replay buffer: min_priority must be >= 0");
}

void PrioritizedReplayBuffer::insert(Transition t) {
  double p = 1.0;
  if (!priorities_.empty()) p = *std::max_element(priorities_.begin(), priorities_.end());
  if (entries_.size() < capacity_) {
    entries_.push_back(std::move(t));
    priorities_.push_back(p);
  } else {
    entries_[next_slot_] = std::move(t);
    priorities_[next_slot_] = p;
  }
  next_slot_ = (next_slot_ + 1) % capacity_;
}

PrioritizedReplayBuffer::Sample PrioritizedReplayBuffer::sample(std::size_t batch_size,
                                                                Rng& rng) const {
  if (entries_.empty()) throw std::logic_error("replay buffer: sample from empty buffer");
  std::vector<double> cumulative(entries_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    total += std::pow(priorities_[i], lambda_);
    cumulative[i] = total;
  }
  Sample s;
  s.indices.reserve(batch_size);
  s.transitions.reserve(batch_size);
  s.probabilities.reserve(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const double r = rng.uniform01() * total;
    const std::size_t idx = static_cast<std::size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
    const std::size_t clamped = std::min(idx, entries_.size() - 1);
    s.indices.push_back(clamped);
    s.transitions.push_back(&entries_[clamped]);
    const double prev = clamped == 0 ? 0.0 : cumulative[clamped - 1];
    s.probabilities.push_back((cumulative[clamped] - prev) / total);
  }
  return s;
}

void PrioritizedReplayBuffer::update_priorities(const std::vector<std::size_t>& indices,
                                                const std::vector<double>& td_errors) {
  if (indices.size() != td_errors.size())
    throw std::invalid_argument("replay buffer: index/error size mismatch");
  for (std::size_t k = 0; k < indices.size(); ++k)
    priorities_.at(indices[k]) = std::fabs(td_errors[k]) + min_priority_;
}

void AgentConfig::validate() const {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("AgentConfig: gamma must be in [0,1]");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("AgentConfig: epsilon must be in [0,1]");
  if (beta_sap < 0.0) throw std::invalid_argument("AgentConfig: beta_sap must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("AgentConfig: batch_size must be >= 1");
  if (target_sync_interval < 1)
    throw std::invalid_argument("AgentConfig: target_sync_interval must be >= 1");
  if (eval_interval < 1) throw std::invalid_argument("AgentConfig: eval_interval must be >= 1");
  if (eval_episodes < 1) throw std::invalid_argument("AgentConfig: eval_episodes must be >= 1");
  if (patience < 0) throw std::invalid_argument("AgentConfig: patience must be >= 0");
  if (max_steps < 0) throw std::invalid_argument("AgentConfig: max_steps must be >= 0");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("AgentConfig: learning_rate must be >= 0");
}

namespace {

int argmax_lowest_index(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

double ddqn_target_single(const Transition& t, const QNetwork& main_net,
                          const QNetwork& target_net, double gamma) {
  Workspace ws;
  const std::vector<double> q_main = main_net.forward(t.next_state, ws);
  const int a_star = argmax_lowest_index(q_main);
  const std::vector<double> q_target = target_net.forward(t.next_state, ws);
  return t.reward + gamma * q_target[a_star];
}

std::vector<double> ddqn_target(const std::vector<const Transition*>& batch,
                                const QNetwork& main_net, const QNetwork& target_net, double gamma,
                                Exec exec) {
  std::vector<double> y(batch.size());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(batch.size()); ++k)
      y[k] = ddqn_target_single(*batch[k], main_net, target_net, gamma);
  } else {
    for (std::size_t k = 0; k < batch.size(); ++k)
      y[k] = ddqn_target_single(*batch[k], main_net, target_net, gamma);
  }
  return y;
}

double td_error(const Transition& t, const QNetwork& main_net, const QNetwork& target_net,
                double gamma, TdVariant variant) {
  const double y = ddqn_target_single(t, main_net, target_net, gamma);
  const QNetwork& evaluator = variant == TdVariant::main_network ? main_net : target_net;
  Workspace ws;
  return y - evaluator.forward(t.state, ws)[t.action];
}

int epsilon_greedy(const std::vector<double>& q_values, double epsilon, Rng& rng) {
  if (q_values.empty()) throw std::invalid_argument("epsilon_greedy: empty q values");
  if (rng.uniform01() < epsilon) return rng.index(static_cast<int>(q_values.size()));
  const double best = *std::max_element(q_values.begin(), q_values.end());
  std::vector<int> ties;
  for (int i = 0; i < static_cast<int>(q_values.size()); ++i)
    if (q_values[i] == best) ties.push_back(i);
  if (ties.size() == 1) return ties[0];
  return ties[rng.index(static_cast<int>(ties.size()))];
}

std::vector<double> sap_channel_distribution(const ColoredGraph& graph, int ap, int n_channels,
                                             double beta) {
  if (ap < 0 || ap >= graph.n) throw std::out_of_range("sap_channel_distribution: ap out of range");
  std::vector<double> logit(n_channels);
  for (int c = 0; c < n_channels; ++c) {
    const double payoff =
        -same_channel_neighbors(graph.adjacency, graph.n, graph.colors, ap, c);
    logit[c] = beta * payoff;
  }
  const double max_logit = *std::max_element(logit.begin(), logit.end());
  double z = 0.0;
  std::vector<double> p(n_channels);
  for (int c = 0; c < n_channels; ++c) {
    p[c] = std::exp(logit[c] - max_logit);
    z += p[c];
  }
  for (double& v : p) v /= z;
  return p;
}

int sap_select(const CanonicalState& state, double beta, Rng& rng) {
  const int ap = rng.index(state.graph.n);
  const std::vector<double> dist = sap_channel_distribution(state.graph, ap, state.n_channels, beta);
  const double r = rng.uniform01();
  double acc = 0.0;
  int channel = state.n_channels - 1;
  for (int c = 0; c < state.n_channels; ++c) {
    acc += dist[c];
    if (r < acc) {
      channel = c;
      break;
    }
  }
  return encode_action(ap, channel, state.n_channels);
}

PolicyFactory greedy_policy(const QNetwork& net) {
  return [&net]() -> Policy {
    auto ws = std::make_shared<Workspace>();
    return [&net, ws](const CanonicalState& s, Rng& rng) {
      return epsilon_greedy(net.forward(s, *ws), 0.0, rng);
    };
  };
}

PolicyFactory sap_policy(double beta) {
  return [beta]() -> Policy {
    return [beta](const CanonicalState& s, Rng& rng) { return sap_select(s, beta, rng); };
  };
}

PolicyFactory random_policy() {
  return []() -> Policy {
    return [](const CanonicalState& s, Rng& rng) {
      return rng.index(s.graph.n * s.n_channels);
    };
  };
}

EpisodeRunResult run_episodes(const PolicyFactory& make_policy, const EnvConfig& env_config,
                              int episodes, int horizon, std::uint64_t base_seed, Exec exec,
                              bool record_traces) {
  if (episodes < 1) throw std::invalid_argument("run_episodes: episodes must be >= 1");
  if (horizon < 1) throw std::invalid_argument("run_episodes: horizon must be >= 1");

  EnvConfig cfg = env_config;
  cfg.episode_horizon = horizon;
  cfg.validate();

  EpisodeRunResult out;
  out.final_rewards.assign(episodes, 0.0);
  out.final_sorted_throughput.assign(episodes, {});
  if (record_traces) out.traces.assign(episodes, {});

  auto run_one = [&](int e) {
    Env env(cfg);
    CanonicalState state = env.reset(derive_seed(base_seed, kEpisodeResetStream, e));
    Rng rng(derive_seed(base_seed, kEpisodePolicyStream, e));
    Policy policy = make_policy();
    double reward = env.state_reward(state);
    for (int t = 0; t < horizon; ++t) {
      const int flat = policy(state, rng);
      const Action a = decode_action(flat, cfg.topology.n_channels, cfg.topology.n_aps);
      auto [next, r] = env.step(state, a);
      if (record_traces) out.traces[e].push_back({state.hash(), flat, r});
      state = std::move(next);
      reward = r;
    }
    out.final_rewards[e] = reward;
    std::vector<double> tp = env.state_throughput(state).values;
    std::sort(tp.begin(), tp.end());
    out.final_sorted_throughput[e] = std::move(tp);
  };

  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int e = 0; e < episodes; ++e) run_one(e);
  } else {
    for (int e = 0; e < episodes; ++e) run_one(e);
  }

  double sum = 0.0;
  for (double r : out.final_rewards) sum += r;
  out.mean_final_reward = sum / episodes;
  return out;
}

EpisodeRunResult evaluate(const QNetwork& net, const EnvConfig& env_config, int episodes,
                          int horizon, std::uint64_t base_seed, Exec exec) {
  return run_episodes(greedy_policy(net), env_config, episodes, horizon, base_seed, exec);
}

namespace {

// One PER batch update of the main network. Per-sample gradients go into
// fixed slots and are reduced in sample order, so thread count never changes
// the bytes. Scratch buffers persist across steps (backward overwrites every
// tensor, so no zeroing is needed).
struct StepStats {
  double loss = 0.0;
};

struct TrainScratch {
  std::vector<double> losses;
  std::vector<double> deltas;
  std::vector<GradBuffer> grads;
  std::vector<Workspace> workspaces;
  GradBuffer total;
};

StepStats train_step(const PrioritizedReplayBuffer::Sample& sample, QNetwork& main_net,
                     const QNetwork& target_net, const AgentConfig& cfg, AdamState& adam,
                     PrioritizedReplayBuffer& buffer, TrainScratch& scratch) {
  const int batch = static_cast<int>(sample.transitions.size());
  const int n_actions = main_net.n_actions();

  scratch.losses.assign(batch, 0.0);
  scratch.deltas.assign(batch, 0.0);
  if (scratch.grads.size() != static_cast<std::size_t>(batch)) {
    scratch.grads.assign(batch, GradBuffer{});
    scratch.workspaces.assign(batch, Workspace{});
  }

#pragma omp parallel for schedule(static)
  for (int k = 0; k < batch; ++k) {
    const Transition& tr = *sample.transitions[k];
    const double y = ddqn_target_single(tr, main_net, target_net, cfg.gamma);

    Workspace& ws = scratch.workspaces[k];
    const std::vector<double> q = main_net.forward(tr.state, ws);
    const HuberResult h = huber_loss(q[tr.action], y);
    scratch.losses[k] = h.loss;
    if (cfg.td_variant == TdVariant::main_network) {
      scratch.deltas[k] = y - q[tr.action];
    } else {
      Workspace ws_t;
      scratch.deltas[k] = y - target_net.forward(tr.state, ws_t)[tr.action];
    }

    std::vector<double> dq(n_actions, 0.0);
    dq[tr.action] = h.grad / batch;  // gradient of the batch-mean loss
    main_net.backward(ws, dq, scratch.grads[k]);
  }

  if (scratch.total.empty()) scratch.total = main_net.make_grad_buffer();
  GradBuffer& total = scratch.total;
  for (Matrix& t : total) t.fill(0.0);
  double loss_sum = 0.0;
  for (int k = 0; k < batch; ++k) {
    loss_sum += scratch.losses[k];
    for (std::size_t t = 0; t < total.size(); ++t) axpy(1.0, scratch.grads[k][t], total[t]);
  }

  StepStats stats;
  stats.loss = loss_sum / batch;
  if (!std::isfinite(stats.loss)) {
    char msg[160];
    std::snprintf(msg, sizeof(msg),
                  "train: non-finite loss (%.17g) after %ld optimizer steps; aborting",
                  stats.loss, adam.step_count());
    throw std::runtime_error(msg);
  }

  auto params = main_net.parameters();
  adam.step(params, total);
  buffer.update_priorities(sample.indices, scratch.deltas);
  return stats;
}

}  // namespace

TrainResult train(const EnvConfig& env_config, const AgentConfig& agent_config,
                  const QNetworkConfig& nn_config, Behavior behavior, std::uint64_t seed,
                  const TrainHooks& hooks) {
  env_config.validate();
  agent_config.validate();
  if (nn_config.n_aps != env_config.topology.n_aps ||
      nn_config.n_channels != env_config.topology.n_channels)
    throw std::invalid_argument("train: network dimensions must match the environment");

  QNetwork main_net(nn_config, derive_seed(seed, kInitStream));
  QNetwork target_net = main_net;

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = agent_config.learning_rate;
  AdamState adam(std::as_const(main_net).parameters(), adam_cfg);

  PrioritizedReplayBuffer buffer(agent_config.replay_capacity, agent_config.per_lambda,
                                 agent_config.per_min_priority);
  Env env(env_config);
  Rng rng_behavior(derive_seed(seed, kBehaviorStream));
  Rng rng_sample(derive_seed(seed, kSampleStream));
  const std::uint64_t eval_base = derive_seed(seed, kEvalStream);

  TrainResult result{main_net, {}, 0};
  long episode = 0;
  CanonicalState state = env.reset(derive_seed(seed, kResetStream, episode));

  // early stopping keeps the snapshot that scored the best evaluation
  QNetwork best_net = main_net;
  bool have_best = false;
  double best_eval = -1.0;
  long best_eval_step = 0;
  Workspace ws_behavior;
  TrainScratch scratch;

  for (long step = 1;; ++step) {
    int flat_action;
    if (behavior == Behavior::sap) {
      flat_action = sap_select(state, agent_config.beta_sap, rng_behavior);
    } else {
      flat_action =
          epsilon_greedy(main_net.forward(state, ws_behavior), agent_config.epsilon, rng_behavior);
    }
    const Action action =
        decode_action(flat_action, env_config.topology.n_channels, env_config.topology.n_aps);
    auto [next_state, reward] = env.step(state, action);
    buffer.insert(Transition{state, flat_action, reward, next_state});

    if (buffer.size() >= static_cast<std::size_t>(agent_config.batch_size)) {
      const auto sample = buffer.sample(agent_config.batch_size, rng_sample);
      const StepStats stats =
          train_step(sample, main_net, target_net, agent_config, adam, buffer, scratch);
      if (hooks.after_update) hooks.after_update(step, stats.loss);
    }

    if (step % agent_config.target_sync_interval == 0) target_net.copy_parameters_from(main_net);

    bool stop = false;
    if (step % agent_config.eval_interval == 0) {
      const EpisodeRunResult ev = evaluate(main_net, env_config, agent_config.eval_episodes,
                                           env_config.episode_horizon, eval_base);
      result.curve.push_back({step, ev.mean_final_reward});
      if (result.curve.size() == 1 || ev.mean_final_reward > best_eval) {
        best_eval = ev.mean_final_reward;
        best_eval_step = step;
        best_net.copy_parameters_from(main_net);
        have_best = true;
      }
      if (step - best_eval_step >= agent_config.patience) stop = true;
    }
    if (agent_config.max_steps > 0 && step >= agent_config.max_steps) stop = true;

    if (hooks.after_step) hooks.after_step(step, main_net, target_net);

    result.steps_run = step;
    if (stop) break;

    if (next_state.step_index >= env_config.episode_horizon) {
      state = env.reset(derive_seed(seed, kResetStream, ++episode));
    } else {
      state = std::move(next_state);
    }
  }

  result.network = have_best ? std::move(best_net) : std::move(main_net);
  return result;
}

}  // namespace chanalloc
