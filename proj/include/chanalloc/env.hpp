#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "chanalloc/canon.hpp"
#include "chanalloc/throughput.hpp"
#include "chanalloc/topology.hpp"

namespace chanalloc {

struct EnvConfig {
  TopologyConfig topology;
  int reward_k = 4;
  double access_intensity = 10.0;
  int episode_horizon = 20;
  bool resample_topology_each_episode = true;

  void validate() const;
};

// RL state: the contention graph with channel colors, in canonical node
// order. `perm` maps physical AP indices to canonical positions. The
// Laplacian decomposition of the canonical adjacency is attached when the
// state is built, so states can be shared read-only across threads.
struct CanonicalState {
  ColoredGraph graph;
  std::vector<int> perm;  // physical index -> canonical position
  int step_index = 0;
  int n_channels = 0;
  std::shared_ptr<const LaplacianDecomposition> decomposition;

  std::uint64_t hash() const { return fnv1a_hash(encode_colored_graph(graph)); }
};

// (AP, channel) in canonical node coordinates
struct Action {
  int ap = 0;
  int channel = 0;
};

int encode_action(int ap, int channel, int n_channels);
Action decode_action(int flat, int n_channels, int n_aps);

struct StateFeatures {
  std::shared_ptr<const LaplacianDecomposition> decomposition;
  Matrix node_features;  // N x M, row i = one-hot channel of canonical node i
};
StateFeatures state_features(const CanonicalState& state);

class Env {
 public:
  explicit Env(EnvConfig config);

  // Samples (or reuses) the topology and uniform i.i.d. channels.
  // Deterministic in `seed`.
  CanonicalState reset(std::uint64_t seed);

  // Applies the action (canonical coordinates), returns the re-canonicalized
  // state and the lower-k reward of the new configuration. Pure in
  // (state, action) for the current topology.
  std::pair<CanonicalState, double> step(const CanonicalState& state, const Action& action) const;

  int n_actions() const { return cfg_.topology.n_aps * cfg_.topology.n_channels; }
  const EnvConfig& config() const { return cfg_; }
  const Topology& topology() const;

  // physical channel assignment encoded in a state (inverse of perm)
  std::vector<int> physical_channels(const CanonicalState& state) const;
  ThroughputVector state_throughput(const CanonicalState& state) const;
  double state_reward(const CanonicalState& state) const;

 private:
  CanonicalState make_state(const std::vector<int>& physical_channels, int step_index) const;

  EnvConfig cfg_;
  std::optional<Topology> topo_;
};

struct TraceRecord {
  std::uint64_t state_hash;
  int action;
  double reward;
};
// one JSON object per line
void write_trace_line(std::ostream& os, const TraceRecord& r);

}  // namespace chanalloc
