#pragma once

#include <vector>

#include "chanalloc/matrix.hpp"
#include "chanalloc/parallel.hpp"
#include "chanalloc/topology.hpp"

namespace chanalloc {

// One-hot M x N channel matrix, stored as one channel index per AP.
class ChannelMatrix {
 public:
  ChannelMatrix(int n_channels, std::vector<int> channel_of);
  // validates that every column of the M x N matrix is one-hot
  static ChannelMatrix from_one_hot(const Matrix& m_by_n);

  int n_channels() const { return n_channels_; }
  int n_aps() const { return static_cast<int>(channel_of_.size()); }
  int channel_of(int ap) const { return channel_of_.at(ap); }
  void set_channel(int ap, int channel);
  const std::vector<int>& channels() const { return channel_of_; }

  Matrix one_hot() const;  // M x N

 private:
  int n_channels_;
  std::vector<int> channel_of_;
};

struct ThroughputVector {
  std::vector<double> values;  // airtime fraction per AP, in [0, rho/(1+rho)]
};

// number of carrier-sensing neighbors of `ap` sharing its channel
int conflict_count(const Topology& topology, const ChannelMatrix& channels, int ap);

// neighbors of `ap` that sit on `channel` (ap's own assignment ignored);
// shared by conflict_count, the SAP payoff and the environment reward path
int same_channel_neighbors(const std::vector<std::uint8_t>& adjacency, int n,
                           const std::vector<int>& channel_of, int ap, int channel);

// Stationary per-AP airtime of the ideal CSMA (independent-set) model run
// separately on every same-channel subgraph: pi(sigma) proportional to
// rho^|sigma| over independent sets sigma. Throws std::runtime_error when a
// single channel carries more than 25 APs (2^N enumeration guard).
ThroughputVector csma_throughput(const Topology& topology, const ChannelMatrix& channels,
                                 double access_intensity, Exec exec = Exec::parallel);

// mean of the k smallest entries
double lower_k_reward(const ThroughputVector& throughputs, int k);

}  // namespace chanalloc
