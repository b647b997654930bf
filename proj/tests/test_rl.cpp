#include <doctest.h>

#include <cmath>
#include <numeric>

#include "chanalloc/rl.hpp"
#include "oracles.hpp"

using namespace chanalloc;

namespace {

EnvConfig tiny_env(int n, int m, int k, int horizon) {
  EnvConfig cfg;
  cfg.topology.n_aps = n;
  cfg.topology.n_channels = m;
  cfg.reward_k = k;
  cfg.episode_horizon = horizon;
  return cfg;
}

// transition between two states of a degenerate 1-AP, 2-channel world
Transition dummy_transition(double reward, int action = 0) {
  EnvConfig cfg = tiny_env(1, 2, 1, 5);
  Env env(cfg);
  CanonicalState s = env.reset(1);
  auto [next, r] = env.step(s, Action{0, 1});
  (void)r;
  return Transition{s, action, reward, next};
}

bool within_3_sigma(const std::vector<long>& counts, const std::vector<double>& p, long total) {
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double expect = total * p[i];
    const double sigma = std::sqrt(total * p[i] * (1.0 - p[i]));
    if (std::fabs(counts[i] - expect) > 3.0 * sigma) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("replay buffer: insertion priorities and eviction") {
  PrioritizedReplayBuffer buf(3, 0.6, 1e-3);
  CHECK(buf.capacity() == 3);
  buf.insert(dummy_transition(0.1));
  CHECK(buf.priority(0) == 1.0);  // empty buffer bootstrap

  buf.update_priorities({0}, {4.0});
  CHECK(buf.priority(0) == doctest::Approx(4.0 + 1e-3));
  buf.insert(dummy_transition(0.2));
  CHECK(buf.priority(1) == doctest::Approx(4.0 + 1e-3));  // current max

  buf.insert(dummy_transition(0.3));
  buf.insert(dummy_transition(0.4));  // evicts the oldest (reward 0.1)
  CHECK(buf.size() == 3);
  CHECK(buf.transition(0).reward == 0.4);
  CHECK(buf.transition(1).reward == 0.2);

  for (std::size_t i = 0; i < buf.size(); ++i) CHECK(buf.priority(i) >= buf.min_priority());
}

TEST_CASE("replay buffer: priority update formula") {
  PrioritizedReplayBuffer buf(4, 0.6, 1e-3);
  for (int i = 0; i < 3; ++i) buf.insert(dummy_transition(0.1 * i));
  buf.update_priorities({0, 1, 2}, {0.0, -2.0, 2.0});
  CHECK(buf.priority(0) == doctest::Approx(1e-3));
  CHECK(buf.priority(1) == doctest::Approx(2.0 + 1e-3));
  CHECK(buf.priority(2) == doctest::Approx(2.0 + 1e-3));
  CHECK(buf.priority(1) == buf.priority(2));
}

TEST_CASE("replay buffer: sampling distribution") {
  Rng rng(3);
  PrioritizedReplayBuffer empty(4, 0.6, 1e-3);
  CHECK_THROWS_AS(empty.sample(2, rng), std::logic_error);

  // single entry: always index 0
  PrioritizedReplayBuffer one(4, 0.6, 1e-3);
  one.insert(dummy_transition(0.5));
  auto s1 = one.sample(8, rng);
  for (std::size_t idx : s1.indices) CHECK(idx == 0);

  // priorities (3, 1), lambda = 1, floor 0: P = (0.75, 0.25)
  PrioritizedReplayBuffer two(4, 1.0, 0.0);
  two.insert(dummy_transition(0.0));
  two.insert(dummy_transition(0.0));
  two.update_priorities({0, 1}, {3.0, 1.0});
  auto s2 = two.sample(4, rng);
  for (std::size_t k = 0; k < s2.indices.size(); ++k)
    CHECK(s2.probabilities[k] == doctest::Approx(s2.indices[k] == 0 ? 0.75 : 0.25));

  std::vector<long> counts(2, 0);
  for (int rep = 0; rep < 2000; ++rep) {
    auto s = two.sample(1, rng);
    ++counts[s.indices[0]];
  }
  CHECK(within_3_sigma(counts, {0.75, 0.25}, 2000));

  // lambda = 0: uniform regardless of priorities
  PrioritizedReplayBuffer uniform(4, 0.0, 0.0);
  uniform.insert(dummy_transition(0.0));
  uniform.insert(dummy_transition(0.0));
  uniform.update_priorities({0, 1}, {100.0, 0.01});
  auto s3 = uniform.sample(4, rng);
  for (double p : s3.probabilities) CHECK(p == doctest::Approx(0.5));
}

TEST_CASE("per-sample frequencies pass a chi-square test (lambda = 0.6)") {
  PrioritizedReplayBuffer buf(10, 0.6, 1e-3);
  std::vector<double> priorities{1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0};
  std::vector<std::size_t> idx(10);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < 10; ++i) buf.insert(dummy_transition(0.0));
  std::vector<double> deltas;
  for (double p : priorities) deltas.push_back(p - buf.min_priority());
  buf.update_priorities(idx, deltas);

  double z = 0.0;
  std::vector<double> expect(10);
  for (int i = 0; i < 10; ++i) z += std::pow(priorities[i], 0.6);
  for (int i = 0; i < 10; ++i) expect[i] = std::pow(priorities[i], 0.6) / z;

  Rng rng(7);
  std::vector<long> counts(10, 0);
  const int draws = 100000;
  auto s = buf.sample(draws, rng);
  for (std::size_t k : s.indices) ++counts[k];

  // chi-square critical value for df = 9, alpha = 0.001
  CHECK(oracle::chi_square_statistic(counts, expect) < 27.8771648702);
}

TEST_CASE("ddqn target: hand case, gamma collapse, main=target") {
  EnvConfig cfg = tiny_env(1, 2, 1, 5);
  Env env(cfg);
  CanonicalState s = env.reset(1);
  auto [next, r0] = env.step(s, Action{0, 1});
  (void)r0;
  Transition tr{s, 0, 1.0, next};

  QNetworkConfig nn;
  nn.n_aps = 1;
  nn.n_channels = 2;
  QNetwork main_net(nn, 1), target_net(nn, 2);
  oracle::set_constant_outputs(main_net, 0.35, {0.2, 0.5});   // argmax -> action 1
  oracle::set_constant_outputs(target_net, 0.2, {0.3, 0.1});  // evaluates action 1 as 0.1

  // Y = r + gamma * Q_target(s', argmax_a Q_main(s', a))
  CHECK(ddqn_target_single(tr, main_net, target_net, 0.9) == doctest::Approx(1.09).epsilon(1e-12));
  // swapping the roles would give 1 + 0.9*0.2 = 1.18, so this pins the wiring
  CHECK(ddqn_target_single(tr, target_net, main_net, 0.9) == doctest::Approx(1.18).epsilon(1e-12));

  // gamma = 0 collapses to the reward
  CHECK(ddqn_target_single(tr, main_net, target_net, 0.0) == doctest::Approx(1.0));

  // main = target: standard Q-target r + gamma * max Q
  CHECK(ddqn_target_single(tr, main_net, main_net, 0.9) == doctest::Approx(1.0 + 0.9 * 0.5));

  // batch wrapper agrees with the single-sample form, serial and parallel
  std::vector<const Transition*> batch{&tr, &tr, &tr};
  auto ys = ddqn_target(batch, main_net, target_net, 0.9, Exec::serial);
  auto yp = ddqn_target(batch, main_net, target_net, 0.9, Exec::parallel);
  CHECK(ys == yp);
  for (double y : ys) CHECK(y == doctest::Approx(1.09).epsilon(1e-12));
}

TEST_CASE("td error variants") {
  EnvConfig cfg = tiny_env(1, 2, 1, 5);
  Env env(cfg);
  CanonicalState s = env.reset(1);
  auto [next, r0] = env.step(s, Action{0, 1});
  (void)r0;

  QNetworkConfig nn;
  nn.n_aps = 1;
  nn.n_channels = 2;
  QNetwork main_net(nn, 1), target_net(nn, 2);
  oracle::set_constant_outputs(main_net, 1.0, {1.0, 1.0});    // Q_main == 1 everywhere
  oracle::set_constant_outputs(target_net, 1.0, {1.0, 1.0});  // Q_target == 1 everywhere

  // prediction equals target: r = c - gamma*d = 1 - 0.9 = 0.1
  Transition zero{s, 0, 0.1, next};
  CHECK(td_error(zero, main_net, target_net, 0.9) == doctest::Approx(0.0).epsilon(1e-12));

  // gamma = 0, r = 0, Q_main(s,a) = 0.5
  oracle::set_constant_outputs(main_net, 0.5, {0.5, 0.5});
  Transition neg{s, 0, 0.0, next};
  CHECK(td_error(neg, main_net, target_net, 0.0) == doctest::Approx(-0.5));

  // subtraction uses Y from the ddqn form
  oracle::set_constant_outputs(main_net, 0.35, {0.2, 0.5});
  oracle::set_constant_outputs(target_net, 0.2, {0.3, 0.1});
  Transition tr{s, 0, 1.0, next};
  const double y = ddqn_target_single(tr, main_net, target_net, 0.9);
  CHECK(td_error(tr, main_net, target_net, 0.9, TdVariant::main_network) ==
        doctest::Approx(y - 0.2).epsilon(1e-12));
  CHECK(td_error(tr, main_net, target_net, 0.9, TdVariant::target_network) ==
        doctest::Approx(y - 0.3).epsilon(1e-12));
}

TEST_CASE("epsilon greedy") {
  Rng rng(11);
  CHECK(epsilon_greedy({0.1, 0.9, 0.3}, 0.0, rng) == 1);

  // epsilon = 1: uniform over all actions
  std::vector<long> counts(3, 0);
  for (int i = 0; i < 100000; ++i) ++counts[epsilon_greedy({0.1, 0.9, 0.3}, 1.0, rng)];
  CHECK(within_3_sigma(counts, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 100000));

  // all-equal values, epsilon = 0: uniform among the exact ties
  std::vector<long> tie_counts(4, 0);
  for (int i = 0; i < 100000; ++i) ++tie_counts[epsilon_greedy({0.5, 0.5, 0.5, 0.5}, 0.0, rng)];
  CHECK(within_3_sigma(tie_counts, {0.25, 0.25, 0.25, 0.25}, 100000));
}

TEST_CASE("sap channel distribution") {
  // AP 0 with neighbor channels {0, 0, 1} out of M = 3
  ColoredGraph g;
  g.n = 4;
  g.adjacency.assign(16, 0);
  g.set_edge(0, 1);
  g.set_edge(0, 2);
  g.set_edge(0, 3);
  g.colors = {0, 0, 0, 1};

  // beta = 0: uniform
  for (double p : sap_channel_distribution(g, 0, 3, 0.0))
    CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));

  // beta = 0.1: P propto (e^-0.2, e^-0.1, e^0)
  const double z = std::exp(-0.2) + std::exp(-0.1) + 1.0;
  std::vector<double> p = sap_channel_distribution(g, 0, 3, 0.1);
  CHECK(p[0] == doctest::Approx(std::exp(-0.2) / z).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(std::exp(-0.1) / z).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(1.0 / z).epsilon(1e-12));
  CHECK(p[0] == doctest::Approx(0.3006).epsilon(2e-4));
  CHECK(p[1] == doctest::Approx(0.3322).epsilon(2e-4));
  CHECK(p[2] == doctest::Approx(0.3672).epsilon(2e-4));

  // beta -> infinity: the empty channel wins
  std::vector<double> hard = sap_channel_distribution(g, 0, 3, 1000.0);
  CHECK(hard[2] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sap improvement on a fixed topology") {
  TopologyConfig tc;  // Table-scale: 10 APs, 3 channels
  Topology topo = generate_topology(tc, 99);

  double initial_sum = 0.0, final_sum = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    ColoredGraph g;
    g.n = topo.n();
    g.adjacency = topo.adjacency;
    g.colors.resize(g.n);
    for (int& c : g.colors) c = rng.index(3);

    auto total_payoff = [&]() {
      int conflicts = 0;
      for (int i = 0; i < g.n; ++i)
        conflicts += same_channel_neighbors(g.adjacency, g.n, g.colors, i, g.colors[i]);
      return static_cast<double>(-conflicts);
    };

    initial_sum += total_payoff();
    CanonicalState wrapper{g, {}, 0, 3, nullptr};
    for (int step = 0; step < 500; ++step) {
      wrapper.graph = g;
      const int flat = sap_select(wrapper, 0.1, rng);
      const Action a = decode_action(flat, 3, g.n);
      g.colors[a.ap] = a.channel;
    }
    final_sum += total_payoff();
  }
  CHECK(final_sum / 100.0 > initial_sum / 100.0);
}

TEST_CASE("policies built from either behavior feed the same update machinery") {
  EnvConfig cfg = tiny_env(4, 2, 2, 5);
  Env env(cfg);
  QNetworkConfig nn;
  nn.n_aps = 4;
  nn.n_channels = 2;
  QNetwork main_net(nn, 31), target_net(nn, 32);

  auto fill = [&](PolicyFactory factory, std::uint64_t seed) {
    PrioritizedReplayBuffer buf(64, 0.6, 1e-3);
    Policy policy = factory();
    Rng rng(seed);
    CanonicalState s = env.reset(seed);
    for (int t = 0; t < 12; ++t) {
      const int flat = policy(s, rng);
      auto [next, r] = env.step(s, decode_action(flat, 2, 4));
      buf.insert(Transition{s, flat, r, next});
      s = next.step_index >= cfg.episode_horizon ? env.reset(seed + t) : next;
    }
    return buf;
  };

  PrioritizedReplayBuffer by_sap = fill(sap_policy(0.1), 5);
  PrioritizedReplayBuffer by_eps = fill(greedy_policy(main_net), 6);
  REQUIRE(by_sap.size() == 12);
  REQUIRE(by_eps.size() == 12);

  Rng rng(9);
  for (PrioritizedReplayBuffer* buf : {&by_sap, &by_eps}) {
    auto sample = buf->sample(8, rng);
    auto y = ddqn_target(sample.transitions, main_net, target_net, 0.9);
    for (double v : y) CHECK(std::isfinite(v));
    std::vector<double> deltas;
    for (std::size_t k = 0; k < sample.transitions.size(); ++k)
      deltas.push_back(td_error(*sample.transitions[k], main_net, target_net, 0.9));
    buf->update_priorities(sample.indices, deltas);
  }
}

TEST_CASE("evaluate: determinism, serial/parallel equality, degenerate env") {
  EnvConfig cfg = tiny_env(1, 2, 1, 5);
  QNetworkConfig nn;
  nn.n_aps = 1;
  nn.n_channels = 2;
  QNetwork net(nn, 3);
  oracle::set_constant_outputs(net, 0.0, {0.0, 0.0});

  EpisodeRunResult a = evaluate(net, cfg, 20, 5, 77);
  EpisodeRunResult b = evaluate(net, cfg, 20, 5, 77);
  CHECK(a.final_rewards == b.final_rewards);
  EpisodeRunResult c = evaluate(net, cfg, 20, 5, 77, Exec::serial);
  CHECK(a.final_rewards == c.final_rewards);
  CHECK(a.mean_final_reward == c.mean_final_reward);

  // single AP: ceiling no matter what the network does
  for (double r : a.final_rewards) CHECK(r == doctest::Approx(10.0 / 11.0).epsilon(1e-12));

  EpisodeRunResult single = evaluate(net, cfg, 1, 5, 5);
  CHECK(single.mean_final_reward == single.final_rewards[0]);
  CHECK(single.final_sorted_throughput.size() == 1);
}

TEST_CASE("train: zero learning rate leaves the network at its initialization") {
  EnvConfig cfg = tiny_env(4, 2, 2, 5);
  AgentConfig agent;
  agent.learning_rate = 0.0;
  agent.batch_size = 8;
  agent.max_steps = 60;
  agent.eval_interval = 30;
  agent.eval_episodes = 3;
  agent.patience = 1000000;
  agent.target_sync_interval = 10;
  QNetworkConfig nn;
  nn.n_aps = 4;
  nn.n_channels = 2;

  QNetwork snapshot(nn, 0);
  bool captured = false;
  TrainHooks hooks;
  hooks.after_step = [&](long step, const QNetwork& main_net, const QNetwork&) {
    if (step == 1) {
      snapshot.copy_parameters_from(main_net);
      captured = true;
    }
  };
  TrainResult res = train(cfg, agent, nn, Behavior::sap, 7, hooks);
  REQUIRE(captured);
  CHECK(res.network.parameters_equal(snapshot));
  CHECK(res.steps_run == 60);
}

TEST_CASE("train: target syncs every interval and matches the main network") {
  EnvConfig cfg = tiny_env(4, 2, 2, 5);
  AgentConfig agent;
  agent.batch_size = 8;
  agent.max_steps = 40;
  agent.eval_interval = 20;
  agent.eval_episodes = 2;
  agent.patience = 1000000;
  agent.target_sync_interval = 1;  // target equals main after every step
  QNetworkConfig nn;
  nn.n_aps = 4;
  nn.n_channels = 2;

  int sync_checks = 0;
  TrainHooks hooks;
  hooks.after_step = [&](long, const QNetwork& main_net, const QNetwork& target_net) {
    CHECK(target_net.parameters_equal(main_net));
    ++sync_checks;
  };
  train(cfg, agent, nn, Behavior::epsilon_greedy, 8, hooks);
  CHECK(sync_checks == 40);
}

TEST_CASE("train: sync interval > 1 keeps target fixed between syncs") {
  EnvConfig cfg = tiny_env(4, 2, 2, 5);
  AgentConfig agent;
  agent.batch_size = 8;
  agent.max_steps = 30;
  agent.eval_interval = 15;
  agent.eval_episodes = 2;
  agent.patience = 1000000;
  agent.target_sync_interval = 10;
  QNetworkConfig nn;
  nn.n_aps = 4;
  nn.n_channels = 2;

  QNetwork init(nn, 0);
  bool have_init = false;
  TrainHooks hooks;
  hooks.after_step = [&](long step, const QNetwork& main_net, const QNetwork& target_net) {
    if (step == 1) {
      // updates have not started (buffer below batch size): both nets are
      // still the initialization
      init.copy_parameters_from(target_net);
      have_init = true;
      CHECK(target_net.parameters_equal(main_net));
    }
    if (step == 9) {
      // learning began at step 8; the target still holds the initial weights
      CHECK(target_net.parameters_equal(init));
      CHECK_FALSE(target_net.parameters_equal(main_net));
    }
    if (step == 10) CHECK(target_net.parameters_equal(main_net));
  };
  train(cfg, agent, nn, Behavior::sap, 9, hooks);
  CHECK(have_init);
}

TEST_CASE("train: identical seeds give bit-identical learning curves") {
  EnvConfig cfg = tiny_env(4, 2, 2, 5);
  AgentConfig agent;
  agent.batch_size = 8;
  agent.max_steps = 90;
  agent.eval_interval = 30;
  agent.eval_episodes = 4;
  agent.patience = 1000000;
  agent.target_sync_interval = 20;
  QNetworkConfig nn;
  nn.n_aps = 4;
  nn.n_channels = 2;

  TrainResult a = train(cfg, agent, nn, Behavior::sap, 21);
  TrainResult b = train(cfg, agent, nn, Behavior::sap, 21);
  REQUIRE(a.curve.size() == b.curve.size());
  REQUIRE(a.curve.size() == 3);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].step == b.curve[i].step);
    CHECK(a.curve[i].mean_reward == b.curve[i].mean_reward);
  }
  CHECK(a.network.parameters_equal(b.network));

  TrainResult c = train(cfg, agent, nn, Behavior::sap, 22);
  CHECK_FALSE(a.network.parameters_equal(c.network));
}

TEST_CASE("train: patience stops at the first evaluation when zero") {
  EnvConfig cfg = tiny_env(4, 2, 2, 5);
  AgentConfig agent;
  agent.batch_size = 8;
  agent.eval_interval = 25;
  agent.eval_episodes = 2;
  agent.patience = 0;
  agent.max_steps = 0;  // patience alone must stop the run
  QNetworkConfig nn;
  nn.n_aps = 4;
  nn.n_channels = 2;
  TrainResult res = train(cfg, agent, nn, Behavior::sap, 5);
  CHECK(res.curve.size() == 1);
  CHECK(res.steps_run == 25);
}
