#include "chanalloc/throughput.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace chanalloc {

ChannelMatrix::ChannelMatrix(int n_channels, std::vector<int> channel_of)
    : n_channels_(n_channels), channel_of_(std::move(channel_of)) {
  if (n_channels_ < 1) throw std::invalid_argument("ChannelMatrix: n_channels must be >= 1");
  for (int c : channel_of_)
    if (c < 0 || c >= n_channels_)
      throw std::invalid_argument("ChannelMatrix: channel index out of range");
}

ChannelMatrix ChannelMatrix::from_one_hot(const Matrix& m_by_n) {
  const int m = m_by_n.rows(), n = m_by_n.cols();
  std::vector<int> channels(n, -1);
  for (int j = 0; j < n; ++j) {
    int hot = -1;
    for (int i = 0; i < m; ++i) {
      const double v = m_by_n(i, j);
      if (v == 1.0) {
        if (hot >= 0) throw std::invalid_argument("ChannelMatrix: column not one-hot");
        hot = i;
      } else if (v != 0.0) {
        throw std::invalid_argument("ChannelMatrix: entries must be 0/1");
      }
    }
    if (hot < 0) throw std::invalid_argument("ChannelMatrix: column sums to zero");
    channels[j] = hot;
  }
  return ChannelMatrix(m, std::move(channels));
}

void ChannelMatrix::set_channel(int ap, int channel) {
  if (channel < 0 || channel >= n_channels_)
    throw std::out_of_range("ChannelMatrix: channel out of range");
  channel_of_.at(ap) = channel;
}

Matrix ChannelMatrix::one_hot() const {
  Matrix m(n_channels_, n_aps());
  for (int j = 0; j < n_aps(); ++j) m(channel_of_[j], j) = 1.0;
  return m;
}

int same_channel_neighbors(const std::vector<std::uint8_t>& adjacency, int n,
                           const std::vector<int>& channel_of, int ap, int channel) {
  int count = 0;
  for (int j = 0; j < n; ++j)
    if (j != ap && adjacency[static_cast<std::size_t>(ap) * n + j] && channel_of[j] == channel)
      ++count;
  return count;
}

int conflict_count(const Topology& topology, const ChannelMatrix& channels, int ap) {
  const int n = topology.n();
  if (ap < 0 || ap >= n) throw std::out_of_range("conflict_count: ap out of range");
  return same_channel_neighbors(topology.adjacency, n, channels.channels(), ap,
                                channels.channel_of(ap));
}

namespace {

// Accumulated weights for one slot of the subset enumeration: total partition
// weight and the per-node share of sets containing that node. Fixed-size
// storage keeps the hot loop allocation-free (subgraphs are capped at 25).
struct SlotSums {
  double z = 0.0;
  double node[25];
  bool used = false;
};

// Enumerate independent sets extending `prefix_mask` with nodes >= `first`,
// adding rho^|set| into the slot sums. `blocked` holds nodes adjacent to the
// current set.
void enumerate_extensions(int first, int n_sub, std::uint32_t set_mask, std::uint32_t blocked,
                          double weight, double rho, const std::vector<std::uint32_t>& nbr,
                          SlotSums& out) {
  if (first == n_sub) {
    out.z += weight;
    std::uint32_t m = set_mask;
    while (m) {
      const int i = __builtin_ctz(m);
      out.node[i] += weight;
      m &= m - 1;
    }
    return;
  }
  enumerate_extensions(first + 1, n_sub, set_mask, blocked, weight, rho, nbr, out);
  if (!(blocked >> first & 1u)) {
    enumerate_extensions(first + 1, n_sub, set_mask | (1u << first), blocked | nbr[first],
                         weight * rho, rho, nbr, out);
  }
}

// Per-channel kernel. Work is split over all assignments of the first
// `split` nodes (one slot per prefix mask); slots are combined in ascending
// order so serial and parallel runs produce identical bytes.
void channel_throughput(const std::vector<int>& members, const Topology& topo, double rho,
                        Exec exec, std::vector<double>& out_values) {
  const int n_sub = static_cast<int>(members.size());
  if (n_sub == 0) return;
  if (n_sub > 25)
    throw std::runtime_error("csma_throughput: instance too large (> 25 APs on one channel)");

  std::vector<std::uint32_t> nbr(n_sub, 0);
  for (int a = 0; a < n_sub; ++a)
    for (int b = 0; b < n_sub; ++b)
      if (a != b && topo.adjacent(members[a], members[b])) nbr[a] |= 1u << b;

  const int split = std::min(n_sub, 12);
  const std::uint32_t n_slots = 1u << split;
  std::vector<SlotSums> slots(n_slots);

  auto run_slot = [&](std::uint32_t prefix) {
    std::uint32_t blocked = 0;
    bool independent = true;
    double weight = 1.0;
    for (int i = 0; i < split && independent; ++i) {
      if (prefix >> i & 1u) {
        if (blocked >> i & 1u) {
          independent = false;
        } else {
          blocked |= nbr[i];
          weight *= rho;
        }
      }
    }
    if (!independent) return;
    SlotSums& s = slots[prefix];
    for (int i = 0; i < n_sub; ++i) s.node[i] = 0.0;
    s.used = true;
    enumerate_extensions(split, n_sub, prefix, blocked, weight, rho, nbr, s);
  };

  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(n_slots); ++p)
      run_slot(static_cast<std::uint32_t>(p));
  } else {
    for (std::uint32_t p = 0; p < n_slots; ++p) run_slot(p);
  }

  double z = 0.0;
  std::vector<double> node_sum(n_sub, 0.0);
  for (std::uint32_t p = 0; p < n_slots; ++p) {
    if (!slots[p].used) continue;
    z += slots[p].z;
    for (int i = 0; i < n_sub; ++i) node_sum[i] += slots[p].node[i];
  }
  for (int i = 0; i < n_sub; ++i) out_values[members[i]] = node_sum[i] / z;
}

}  // namespace

ThroughputVector csma_throughput(const Topology& topology, const ChannelMatrix& channels,
                                 double access_intensity, Exec exec) {
  const int n = topology.n();
  if (channels.n_aps() != n)
    throw std::invalid_argument("csma_throughput: channel matrix size mismatch");
  if (!(access_intensity > 0.0))
    throw std::invalid_argument("csma_throughput: access intensity must be > 0");

  ThroughputVector t;
  t.values.assign(n, 0.0);
  for (int m = 0; m < channels.n_channels(); ++m) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (channels.channel_of(i) == m) members.push_back(i);
    channel_throughput(members, topology, access_intensity, exec, t.values);
  }
  return t;
}

double lower_k_reward(const ThroughputVector& throughputs, int k) {
  const int n = static_cast<int>(throughputs.values.size());
  if (k < 1 || k > n) throw std::out_of_range("lower_k_reward: k out of range");
  std::vector<double> sorted = throughputs.values;
  std::sort(sorted.begin(), sorted.end());
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += sorted[i];
  return s / k;
}

}  // namespace chanalloc
