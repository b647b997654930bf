#include "chanalloc/env.hpp"

#include <cinttypes>
#include <cstdio>
#include <stdexcept>

#include "chanalloc/rng.hpp"

namespace chanalloc {

namespace {
constexpr std::uint64_t kTopologyStream = 0x10;
constexpr std::uint64_t kChannelStream = 0x11;
}  // namespace

void EnvConfig::validate() const {
  topology.validate();
  if (reward_k < 1 || reward_k > topology.n_aps)
    throw std::invalid_argument("EnvConfig: reward_k must be in [1, n_aps]");
  if (!(access_intensity > 0.0))
    throw std::invalid_argument("EnvConfig: access_intensity must be > 0");
  if (episode_horizon < 1) throw std::invalid_argument("EnvConfig: episode_horizon must be >= 1");
}

int encode_action(int ap, int channel, int n_channels) {
  if (ap < 0 || channel < 0 || channel >= n_channels)
    throw std::out_of_range("encode_action: index out of range");
  return ap * n_channels + channel;
}

Action decode_action(int flat, int n_channels, int n_aps) {
  if (flat < 0 || flat >= n_aps * n_channels)
    throw std::out_of_range("decode_action: index out of range");
  return Action{flat / n_channels, flat % n_channels};
}

StateFeatures state_features(const CanonicalState& state) {
  StateFeatures f;
  f.decomposition = state.decomposition
                        ? state.decomposition
                        : std::make_shared<const LaplacianDecomposition>(
                              laplacian_decompose(state.graph.adjacency, state.graph.n));
  f.node_features = Matrix(state.graph.n, state.n_channels);
  for (int i = 0; i < state.graph.n; ++i) f.node_features(i, state.graph.colors[i]) = 1.0;
  return f;
}

Env::Env(EnvConfig config) : cfg_(std::move(config)) { cfg_.validate(); }

const Topology& Env::topology() const {
  if (!topo_) throw std::logic_error("Env: reset() must be called before use");
  return *topo_;
}

CanonicalState Env::make_state(const std::vector<int>& physical_channels, int step_index) const {
  ColoredGraph physical;
  physical.n = topo_->n();
  physical.adjacency = topo_->adjacency;
  physical.colors = physical_channels;
  CanonicalForm cf = canonical_form(physical);

  CanonicalState s;
  s.graph = apply_permutation(physical, cf.permutation);
  s.perm = std::move(cf.permutation);
  s.step_index = step_index;
  s.n_channels = cfg_.topology.n_channels;
  s.decomposition = std::make_shared<const LaplacianDecomposition>(
      laplacian_decompose(s.graph.adjacency, s.graph.n));
  return s;
}

CanonicalState Env::reset(std::uint64_t seed) {
  if (cfg_.resample_topology_each_episode || !topo_)
    topo_ = generate_topology(cfg_.topology, derive_seed(seed, kTopologyStream));
  Rng rng(derive_seed(seed, kChannelStream));
  std::vector<int> channels(cfg_.topology.n_aps);
  for (int& c : channels) c = rng.index(cfg_.topology.n_channels);
  return make_state(channels, 0);
}

std::vector<int> Env::physical_channels(const CanonicalState& state) const {
  std::vector<int> channels(state.graph.n);
  for (int i = 0; i < state.graph.n; ++i) channels[i] = state.graph.colors[state.perm[i]];
  return channels;
}

ThroughputVector Env::state_throughput(const CanonicalState& state) const {
  return csma_throughput(topology(), ChannelMatrix(cfg_.topology.n_channels, physical_channels(state)),
                         cfg_.access_intensity);
}

double Env::state_reward(const CanonicalState& state) const {
  return lower_k_reward(state_throughput(state), cfg_.reward_k);
}

std::pair<CanonicalState, double> Env::step(const CanonicalState& state,
                                            const Action& action) const {
  const Topology& topo = topology();
  const int n = topo.n();
  const int m = cfg_.topology.n_channels;
  if (action.ap < 0 || action.ap >= n || action.channel < 0 || action.channel >= m)
    throw std::out_of_range("Env::step: action out of range");
  if (state.step_index >= cfg_.episode_horizon)
    throw std::logic_error("Env::step: acting past episode horizon");

  std::vector<int> channels = physical_channels(state);
  int physical_ap = -1;
  for (int i = 0; i < n; ++i) {
    if (state.perm[i] == action.ap) {
      physical_ap = i;
      break;
    }
  }
  channels[physical_ap] = action.channel;

  const double reward =
      lower_k_reward(csma_throughput(topo, ChannelMatrix(m, channels), cfg_.access_intensity),
                     cfg_.reward_k);
  return {make_state(channels, state.step_index + 1), reward};
}

void write_trace_line(std::ostream& os, const TraceRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "{\"state_hash\":\"%016" PRIx64 "\",\"action\":%d,\"reward\":%.17g}",
                r.state_hash, r.action, r.reward);
  os << buf << '\n';
}

}  // namespace chanalloc
