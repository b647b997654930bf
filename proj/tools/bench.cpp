// Times the OpenMP kernels against their serial reference paths and checks
// the outputs match bitwise. Also reports the canonical-labeling latency on
// typical states.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <vector>

#include <omp.h>

#include "chanalloc/canon.hpp"
#include "chanalloc/env.hpp"
#include "chanalloc/harness.hpp"
#include "chanalloc/rl.hpp"
#include "chanalloc/rng.hpp"
#include "chanalloc/throughput.hpp"

using namespace chanalloc;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename F>
double time_ms(F&& f, int reps) {
  const double t0 = now_ms();
  for (int i = 0; i < reps; ++i) f();
  return (now_ms() - t0) / reps;
}

void bench_throughput() {
  std::printf("csma_throughput, single channel (reps averaged)\n");
  std::printf("%6s %12s %12s %8s %s\n", "N", "serial(ms)", "parallel(ms)", "speedup", "match");
  for (int n : {14, 18, 20, 22}) {
    TopologyConfig tc{n, 1000.0, 420.0, 1};
    Topology topo = generate_topology(tc, 7);
    ChannelMatrix ch(1, std::vector<int>(n, 0));
    const int reps = n <= 18 ? 20 : 3;
    ThroughputVector serial, parallel;
    const double ts = time_ms([&] { serial = csma_throughput(topo, ch, 10.0, Exec::serial); }, reps);
    const double tp =
        time_ms([&] { parallel = csma_throughput(topo, ch, 10.0, Exec::parallel); }, reps);
    const bool match = serial.values == parallel.values;
    std::printf("%6d %12.3f %12.3f %8.2f %s\n", n, ts, tp, ts / tp, match ? "exact" : "DIFFER");
  }
}

void bench_evaluate() {
  std::printf("\ngreedy evaluation, N=10 M=3, 200 episodes x 20 steps\n");
  EnvConfig env;
  QNetworkConfig nn;
  QNetwork net(nn, 21);
  EpisodeRunResult rs, rp;
  const double ts = time_ms([&] { rs = evaluate(net, env, 200, 20, 5, Exec::serial); }, 1);
  const double tp = time_ms([&] { rp = evaluate(net, env, 200, 20, 5, Exec::parallel); }, 1);
  const bool match =
      rs.final_rewards == rp.final_rewards && rs.mean_final_reward == rp.mean_final_reward;
  std::printf("serial %.1f ms, parallel %.1f ms, speedup %.2f, %s\n", ts, tp, ts / tp,
              match ? "exact" : "DIFFER");
}

void bench_ddqn_target() {
  std::printf("\nddqn_target, batch 32, N=10 M=3\n");
  EnvConfig env_cfg;
  Env env(env_cfg);
  QNetworkConfig nn;
  QNetwork main_net(nn, 3), target_net(nn, 4);

  std::vector<Transition> storage;
  CanonicalState s = env.reset(11);
  Rng rng(13);
  for (int i = 0; i < 32; ++i) {
    const int a = rng.index(env.n_actions());
    auto [next, r] = env.step(s, decode_action(a, 3, 10));
    storage.push_back(Transition{s, a, r, next});
    s = next.step_index >= env_cfg.episode_horizon ? env.reset(100 + i) : next;
  }
  std::vector<const Transition*> batch;
  for (const auto& t : storage) batch.push_back(&t);

  std::vector<double> ys, yp;
  const double ts =
      time_ms([&] { ys = ddqn_target(batch, main_net, target_net, 0.9, Exec::serial); }, 20);
  const double tp =
      time_ms([&] { yp = ddqn_target(batch, main_net, target_net, 0.9, Exec::parallel); }, 20);
  std::printf("serial %.2f ms, parallel %.2f ms, speedup %.2f, %s\n", ts, tp, ts / tp,
              ys == yp ? "exact" : "DIFFER");
}

void report_canon_latency() {
  std::printf("\ncanonical_form on random N=10 M=3 states (reported, not asserted)\n");
  EnvConfig env_cfg;
  Env env(env_cfg);
  std::vector<double> samples;
  for (int i = 0; i < 200; ++i) {
    CanonicalState st = env.reset(1000 + i);
    ColoredGraph g = st.graph;
    const double t0 = now_ms();
    canonical_form(g);
    samples.push_back(now_ms() - t0);
  }
  std::sort(samples.begin(), samples.end());
  std::printf("median %.4f ms, p90 %.4f ms, max %.4f ms\n", samples[samples.size() / 2],
              samples[samples.size() * 9 / 10], samples.back());
}

}  // namespace

int main() {
  std::printf("threads: %d\n\n", omp_get_max_threads());
  bench_throughput();
  bench_evaluate();
  bench_ddqn_target();
  report_canon_latency();
  return 0;
}
