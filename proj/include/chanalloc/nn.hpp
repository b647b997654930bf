#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chanalloc/env.hpp"
#include "chanalloc/matrix.hpp"
#include "chanalloc/topology.hpp"

namespace chanalloc {

// Spectral graph convolution parameters. theta row j holds the N
// per-eigenmode coefficients for input dimension j; mix_w/mix_b blend the
// filtered dimensions (1x1 convolution) before the ReLU.
struct GcnLayer {
  Matrix theta;  // d_in x N
  Matrix mix_w;  // d_in x d_out
  Matrix mix_b;  // 1 x d_out
};

struct DenseLayer {
  Matrix w;  // in x out
  Matrix b;  // 1 x out
};

struct DenseCache {
  Matrix in;   // 1 x fan_in
  Matrix pre;  // 1 x fan_out, pre-activation
  Matrix out;  // 1 x fan_out
};

// y = x w + b with optional ReLU, caching the activations
void dense_forward(const DenseLayer& layer, const Matrix& x, bool relu, DenseCache& cache);
// returns dL/dx and fills dL/dw, dL/db
Matrix dense_backward(const DenseLayer& layer, const DenseCache& cache, Matrix dout, bool relu,
                      Matrix& dw, Matrix& db);

// x -> U (theta_j (.) (U^T x_j)) applied per input dimension; no mixing, no
// activation
Matrix spectral_filter(const LaplacianDecomposition& decomp, const Matrix& x,
                       const Matrix& theta);

// full layer: spectral filter, dimension mix, bias, ReLU
Matrix gcn_forward(const LaplacianDecomposition& decomp, const Matrix& x, const GcnLayer& layer);

// q_a = value + advantage_a - mean(advantages)
std::vector<double> dueling_combine(double value, const std::vector<double>& advantages);

// Huber with threshold 1: returns the loss and d(loss)/d(prediction)
struct HuberResult {
  double loss;
  double grad;
};
HuberResult huber_loss(double prediction, double target);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed list of parameter tensors.
class AdamState {
 public:
  AdamState(const std::vector<const Matrix*>& params, AdamConfig config);

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);

  long step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
  long step_count_ = 0;
};

struct QNetworkConfig {
  enum class Kind { gcn, mlp };
  Kind kind = Kind::gcn;
  int n_aps = 10;
  int n_channels = 3;
  int gcn_width = 32;    // per-node width of both graph-conv layers
  int trunk_width = 128;
  int head_width = 64;

  int n_actions() const { return n_aps * n_channels; }
};

// Activation cache of one forward pass; backward() reads from it. One
// workspace per thread, networks themselves stay read-only during inference.
struct Workspace {
  std::shared_ptr<const LaplacianDecomposition> decomposition;
  Matrix input;  // gcn: N x M node features; mlp: 1 x (N*N + N*M) flat input
  struct GcnCache {
    Matrix ut_x;      // U^T x
    Matrix filtered;  // theta (.) ut_x, then U *
    Matrix pre;       // mixed + bias, pre-ReLU
    Matrix out;       // post-ReLU
  } gcn[2];
  DenseCache mlp[2], trunk, value_hidden, value_out, adv_hidden, adv_out;
  std::vector<double> q;
  bool valid = false;
};

// Parameter gradients in the same order as QNetwork::parameters().
using GradBuffer = std::vector<Matrix>;

// Dueling Q-network: two spectral GCN layers (or two dense layers of equal
// width for the mlp kind), a dense trunk and value/advantage streams.
class QNetwork {
 public:
  QNetwork(const QNetworkConfig& config, std::uint64_t seed);

  const QNetworkConfig& config() const { return cfg_; }
  int n_actions() const { return cfg_.n_actions(); }

  std::vector<double> forward(const CanonicalState& state, Workspace& ws) const;
  std::vector<double> forward(const CanonicalState& state) const;

  // dq = dL/dq from the forward cached in ws; writes parameter gradients
  void backward(const Workspace& ws, const std::vector<double>& dq, GradBuffer& grads) const;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
  GradBuffer make_grad_buffer() const;

  void copy_parameters_from(const QNetwork& other);
  bool parameters_equal(const QNetwork& other) const;

  void save(const std::string& path) const;
  static QNetwork load(const std::string& path);

 private:
  QNetworkConfig cfg_;
  GcnLayer gcn1_, gcn2_;
  DenseLayer mlp1_, mlp2_;
  DenseLayer trunk_;
  DenseLayer value_hidden_, value_out_;
  DenseLayer adv_hidden_, adv_out_;
};

}  // namespace chanalloc
