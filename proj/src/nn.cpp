#include "chanalloc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "chanalloc/rng.hpp"

namespace chanalloc {

Matrix spectral_filter(const LaplacianDecomposition& decomp, const Matrix& x,
                       const Matrix& theta) {
  const int n = x.rows(), d = x.cols();
  if (theta.rows() != d || theta.cols() != n)
    throw std::invalid_argument("spectral_filter: theta shape mismatch");
  Matrix ut_x = matmul_tn(decomp.eigenvectors, x);  // N x d
  Matrix s(n, d);
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < d; ++j) s(r, j) = theta(j, r) * ut_x(r, j);
  return matmul(decomp.eigenvectors, s);
}

Matrix gcn_forward(const LaplacianDecomposition& decomp, const Matrix& x, const GcnLayer& layer) {
  Matrix y = spectral_filter(decomp, x, layer.theta);
  Matrix z = matmul(y, layer.mix_w);
  for (int r = 0; r < z.rows(); ++r)
    for (int c = 0; c < z.cols(); ++c) z(r, c) = std::max(0.0, z(r, c) + layer.mix_b(0, c));
  return z;
}

std::vector<double> dueling_combine(double value, const std::vector<double>& advantages) {
  if (advantages.empty()) throw std::invalid_argument("dueling_combine: empty advantages");
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= static_cast<double>(advantages.size());
  std::vector<double> q(advantages.size());
  for (std::size_t i = 0; i < advantages.size(); ++i) q[i] = value + advantages[i] - mean;
  return q;
}

HuberResult huber_loss(double prediction, double target) {
  const double delta = prediction - target;
  if (std::fabs(delta) <= 1.0) return {0.5 * delta * delta, delta};
  return {std::fabs(delta) - 0.5, delta > 0.0 ? 1.0 : -1.0};
}

AdamState::AdamState(const std::vector<const Matrix*>& params, AdamConfig config) : cfg_(config) {
  first_moment_.reserve(params.size());
  second_moment_.reserve(params.size());
  for (const Matrix* p : params) {
    first_moment_.emplace_back(p->rows(), p->cols());
    second_moment_.emplace_back(p->rows(), p->cols());
  }
}

void AdamState::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
  if (params.size() != first_moment_.size() || grads.size() != first_moment_.size())
    throw std::invalid_argument("AdamState::step: tensor count mismatch");
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (std::size_t t = 0; t < params.size(); ++t) {
    Matrix& p = *params[t];
    const Matrix& g = grads[t];
    if (!p.same_shape(g)) throw std::invalid_argument("AdamState::step: gradient shape mismatch");
    Matrix& m = first_moment_[t];
    Matrix& v = second_moment_[t];
    double* pd = p.data();
    const double* gd = g.data();
    double* md = m.data();
    double* vd = v.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      md[i] = cfg_.beta1 * md[i] + (1.0 - cfg_.beta1) * gd[i];
      vd[i] = cfg_.beta2 * vd[i] + (1.0 - cfg_.beta2) * gd[i] * gd[i];
      const double mhat = md[i] / bc1;
      const double vhat = vd[i] / bc2;
      pd[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

namespace {

void glorot_init(Matrix& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / (w.rows() + w.cols()));
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
}

void theta_init(Matrix& theta, Rng& rng) {
  // identity filter plus small noise
  for (std::size_t i = 0; i < theta.size(); ++i) theta.data()[i] = 1.0 + rng.uniform(-0.01, 0.01);
}

DenseLayer make_dense(int fan_in, int fan_out, Rng& rng) {
  DenseLayer l{Matrix(fan_in, fan_out), Matrix(1, fan_out)};
  glorot_init(l.w, rng);
  return l;
}

}  // namespace

void dense_forward(const DenseLayer& layer, const Matrix& x, bool relu, DenseCache& cache) {
  cache.in = x;
  Matrix z = matmul(x, layer.w);
  for (int c = 0; c < z.cols(); ++c) z(0, c) += layer.b(0, c);
  cache.pre = z;
  if (relu)
    for (int c = 0; c < z.cols(); ++c) z(0, c) = std::max(0.0, z(0, c));
  cache.out = z;
}

Matrix dense_backward(const DenseLayer& layer, const DenseCache& cache, Matrix dout, bool relu,
                      Matrix& dw, Matrix& db) {
  if (relu)
    for (int c = 0; c < dout.cols(); ++c)
      if (cache.pre(0, c) <= 0.0) dout(0, c) = 0.0;
  dw = matmul_tn(cache.in, dout);
  db = dout;
  return matmul_nt(dout, layer.w);
}

QNetwork::QNetwork(const QNetworkConfig& config, std::uint64_t seed) : cfg_(config) {
  if (cfg_.n_aps < 1 || cfg_.n_channels < 1)
    throw std::invalid_argument("QNetwork: n_aps and n_channels must be >= 1");
  const int n = cfg_.n_aps, m = cfg_.n_channels, w = cfg_.gcn_width;
  Rng rng(derive_seed(seed, 0x20));
  if (cfg_.kind == QNetworkConfig::Kind::gcn) {
    gcn1_.theta = Matrix(m, n);
    gcn1_.mix_w = Matrix(m, w);
    gcn1_.mix_b = Matrix(1, w);
    gcn2_.theta = Matrix(w, n);
    gcn2_.mix_w = Matrix(w, w);
    gcn2_.mix_b = Matrix(1, w);
    theta_init(gcn1_.theta, rng);
    glorot_init(gcn1_.mix_w, rng);
    theta_init(gcn2_.theta, rng);
    glorot_init(gcn2_.mix_w, rng);
  } else {
    const int flat_in = n * n + n * m;
    mlp1_ = make_dense(flat_in, n * w, rng);
    mlp2_ = make_dense(n * w, n * w, rng);
  }
  trunk_ = make_dense(n * w, cfg_.trunk_width, rng);
  value_hidden_ = make_dense(cfg_.trunk_width, cfg_.head_width, rng);
  value_out_ = make_dense(cfg_.head_width, 1, rng);
  adv_hidden_ = make_dense(cfg_.trunk_width, cfg_.head_width, rng);
  adv_out_ = make_dense(cfg_.head_width, cfg_.n_actions(), rng);
}

std::vector<Matrix*> QNetwork::parameters() {
  std::vector<Matrix*> p;
  if (cfg_.kind == QNetworkConfig::Kind::gcn) {
    p = {&gcn1_.theta, &gcn1_.mix_w, &gcn1_.mix_b, &gcn2_.theta, &gcn2_.mix_w, &gcn2_.mix_b};
  } else {
    p = {&mlp1_.w, &mlp1_.b, &mlp2_.w, &mlp2_.b};
  }
  for (Matrix* t : {&trunk_.w, &trunk_.b, &value_hidden_.w, &value_hidden_.b, &value_out_.w,
                    &value_out_.b, &adv_hidden_.w, &adv_hidden_.b, &adv_out_.w, &adv_out_.b})
    p.push_back(t);
  return p;
}

std::vector<const Matrix*> QNetwork::parameters() const {
  std::vector<const Matrix*> out;
  for (Matrix* t : const_cast<QNetwork*>(this)->parameters()) out.push_back(t);
  return out;
}

std::vector<std::string> QNetwork::parameter_names() const {
  std::vector<std::string> names;
  if (cfg_.kind == QNetworkConfig::Kind::gcn) {
    names = {"gcn1.theta", "gcn1.mix_w", "gcn1.mix_b",
             "gcn2.theta", "gcn2.mix_w", "gcn2.mix_b"};
  } else {
    names = {"mlp1.w", "mlp1.b", "mlp2.w", "mlp2.b"};
  }
  for (const char* s : {"trunk.w", "trunk.b", "value_hidden.w", "value_hidden.b", "value_out.w",
                        "value_out.b", "adv_hidden.w", "adv_hidden.b", "adv_out.w", "adv_out.b"})
    names.emplace_back(s);
  return names;
}

GradBuffer QNetwork::make_grad_buffer() const {
  GradBuffer g;
  for (const Matrix* p : parameters()) g.emplace_back(p->rows(), p->cols());
  return g;
}

void QNetwork::copy_parameters_from(const QNetwork& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size())
    throw std::invalid_argument("copy_parameters_from: architecture mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!dst[i]->same_shape(*src[i]))
      throw std::invalid_argument("copy_parameters_from: shape mismatch");
    *dst[i] = *src[i];
  }
}

bool QNetwork::parameters_equal(const QNetwork& other) const {
  auto a = parameters();
  auto b = other.parameters();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(*a[i] == *b[i])) return false;
  return true;
}

std::vector<double> QNetwork::forward(const CanonicalState& state, Workspace& ws) const {
  const int n = cfg_.n_aps, m = cfg_.n_channels;
  if (state.graph.n != n || state.n_channels != m)
    throw std::invalid_argument("QNetwork::forward: state does not match network dimensions");

  StateFeatures feats = state_features(state);
  Matrix flat;
  if (cfg_.kind == QNetworkConfig::Kind::gcn) {
    ws.decomposition = feats.decomposition;
    ws.input = feats.node_features;
    const LaplacianDecomposition& dec = *ws.decomposition;
    const Matrix* x = &ws.input;
    const GcnLayer* layers[2] = {&gcn1_, &gcn2_};
    for (int li = 0; li < 2; ++li) {
      Workspace::GcnCache& c = ws.gcn[li];
      c.ut_x = matmul_tn(dec.eigenvectors, *x);
      Matrix s(c.ut_x.rows(), c.ut_x.cols());
      const Matrix& th = layers[li]->theta;
      for (int r = 0; r < s.rows(); ++r)
        for (int j = 0; j < s.cols(); ++j) s(r, j) = th(j, r) * c.ut_x(r, j);
      c.filtered = matmul(dec.eigenvectors, s);
      c.pre = matmul(c.filtered, layers[li]->mix_w);
      for (int r = 0; r < c.pre.rows(); ++r)
        for (int cc = 0; cc < c.pre.cols(); ++cc) c.pre(r, cc) += layers[li]->mix_b(0, cc);
      c.out = c.pre;
      for (std::size_t i = 0; i < c.out.size(); ++i)
        c.out.data()[i] = std::max(0.0, c.out.data()[i]);
      x = &c.out;
    }
    // row-major flatten: node-major
    flat = Matrix(1, n * cfg_.gcn_width);
    std::memcpy(flat.data(), ws.gcn[1].out.data(), flat.size() * sizeof(double));
  } else {
    // flat input: adjacency row-major, then node features row-major
    Matrix in(1, n * n + n * m);
    for (int i = 0; i < n * n; ++i) in(0, i) = state.graph.adjacency[i] ? 1.0 : 0.0;
    for (int i = 0; i < n; ++i) in(0, n * n + i * m + state.graph.colors[i]) = 1.0;
    ws.input = in;
    dense_forward(mlp1_, ws.input, true, ws.mlp[0]);
    dense_forward(mlp2_, ws.mlp[0].out, true, ws.mlp[1]);
    flat = ws.mlp[1].out;
  }

  dense_forward(trunk_, flat, true, ws.trunk);
  dense_forward(value_hidden_, ws.trunk.out, true, ws.value_hidden);
  dense_forward(value_out_, ws.value_hidden.out, false, ws.value_out);
  dense_forward(adv_hidden_, ws.trunk.out, true, ws.adv_hidden);
  dense_forward(adv_out_, ws.adv_hidden.out, false, ws.adv_out);

  std::vector<double> adv(cfg_.n_actions());
  for (int a = 0; a < cfg_.n_actions(); ++a) adv[a] = ws.adv_out.out(0, a);
  ws.q = dueling_combine(ws.value_out.out(0, 0), adv);
  ws.valid = true;
  return ws.q;
}

std::vector<double> QNetwork::forward(const CanonicalState& state) const {
  Workspace ws;
  return forward(state, ws);
}

void QNetwork::backward(const Workspace& ws, const std::vector<double>& dq,
                        GradBuffer& grads) const {
  if (!ws.valid) throw std::logic_error("QNetwork::backward: no cached forward pass");
  if (static_cast<int>(dq.size()) != cfg_.n_actions())
    throw std::invalid_argument("QNetwork::backward: dq size mismatch");
  if (grads.size() != parameters().size()) grads = make_grad_buffer();

  const int k = cfg_.n_actions();
  double dq_sum = 0.0;
  for (double d : dq) dq_sum += d;

  // q_a = V + A_a - mean(A)
  Matrix d_adv(1, k);
  for (int a = 0; a < k; ++a) d_adv(0, a) = dq[a] - dq_sum / k;
  Matrix d_value(1, 1);
  d_value(0, 0) = dq_sum;

  // gradient slots in parameters() order
  std::size_t base = cfg_.kind == QNetworkConfig::Kind::gcn ? 6 : 4;
  Matrix& d_trunk_w = grads[base + 0];
  Matrix& d_trunk_b = grads[base + 1];
  Matrix& d_vh_w = grads[base + 2];
  Matrix& d_vh_b = grads[base + 3];
  Matrix& d_vo_w = grads[base + 4];
  Matrix& d_vo_b = grads[base + 5];
  Matrix& d_ah_w = grads[base + 6];
  Matrix& d_ah_b = grads[base + 7];
  Matrix& d_ao_w = grads[base + 8];
  Matrix& d_ao_b = grads[base + 9];

  Matrix d_vh_out = dense_backward(value_out_, ws.value_out, d_value, false, d_vo_w, d_vo_b);
  Matrix d_trunk_out_v =
      dense_backward(value_hidden_, ws.value_hidden, d_vh_out, true, d_vh_w, d_vh_b);
  Matrix d_ah_out = dense_backward(adv_out_, ws.adv_out, d_adv, false, d_ao_w, d_ao_b);
  Matrix d_trunk_out_a = dense_backward(adv_hidden_, ws.adv_hidden, d_ah_out, true, d_ah_w, d_ah_b);

  Matrix d_trunk_out = d_trunk_out_v;
  axpy(1.0, d_trunk_out_a, d_trunk_out);
  Matrix d_flat = dense_backward(trunk_, ws.trunk, d_trunk_out, true, d_trunk_w, d_trunk_b);

  if (cfg_.kind == QNetworkConfig::Kind::mlp) {
    Matrix d = dense_backward(mlp2_, ws.mlp[1], d_flat, true, grads[2], grads[3]);
    dense_backward(mlp1_, ws.mlp[0], d, true, grads[0], grads[1]);
    return;
  }

  // unflatten to N x width
  const int n = cfg_.n_aps, w = cfg_.gcn_width;
  Matrix dout(n, w);
  std::memcpy(dout.data(), d_flat.data(), dout.size() * sizeof(double));

  const LaplacianDecomposition& dec = *ws.decomposition;
  for (int li = 1; li >= 0; --li) {
    const Workspace::GcnCache& c = ws.gcn[li];
    const GcnLayer& layer = li == 0 ? gcn1_ : gcn2_;
    Matrix& d_theta = grads[li * 3 + 0];
    Matrix& d_mix_w = grads[li * 3 + 1];
    Matrix& d_mix_b = grads[li * 3 + 2];

    Matrix dz = dout;
    for (std::size_t i = 0; i < dz.size(); ++i)
      if (c.pre.data()[i] <= 0.0) dz.data()[i] = 0.0;

    d_mix_w = matmul_tn(c.filtered, dz);
    d_mix_b = Matrix(1, dz.cols());
    for (int r = 0; r < dz.rows(); ++r)
      for (int cc = 0; cc < dz.cols(); ++cc) d_mix_b(0, cc) += dz(r, cc);

    Matrix dy = matmul_nt(dz, layer.mix_w);       // N x d_in
    Matrix ds = matmul_tn(dec.eigenvectors, dy);  // N x d_in

    d_theta = Matrix(layer.theta.rows(), layer.theta.cols());
    Matrix d_ut_x(ds.rows(), ds.cols());
    for (int r = 0; r < ds.rows(); ++r) {
      for (int j = 0; j < ds.cols(); ++j) {
        d_theta(j, r) = ds(r, j) * c.ut_x(r, j);
        d_ut_x(r, j) = ds(r, j) * layer.theta(j, r);
      }
    }
    if (li > 0) dout = matmul(dec.eigenvectors, d_ut_x);
  }
}

namespace {

constexpr char kMagic[12] = {'C', 'H', 'A', 'N', 'A', 'L', 'L', 'O', 'C', 'N', 'E', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8 & 0xff),
               static_cast<char>(v >> 16 & 0xff), static_cast<char>(v >> 24 & 0xff)};
  os.write(b, 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("weight file: truncated header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

void write_f64(std::ostream& os, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(u >> (8 * i) & 0xff);
  os.write(b, 8);
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("weight file: truncated parameter block");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

}  // namespace

void QNetwork::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open weight file for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kFormatVersion);
  write_u32(os, cfg_.kind == QNetworkConfig::Kind::gcn ? 0 : 1);
  write_u32(os, static_cast<std::uint32_t>(cfg_.n_aps));
  write_u32(os, static_cast<std::uint32_t>(cfg_.n_channels));
  write_u32(os, static_cast<std::uint32_t>(cfg_.gcn_width));
  write_u32(os, static_cast<std::uint32_t>(cfg_.trunk_width));
  write_u32(os, static_cast<std::uint32_t>(cfg_.head_width));

  auto params = parameters();
  auto names = parameter_names();
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    write_u32(os, static_cast<std::uint32_t>(names[i].size()));
    os.write(names[i].data(), static_cast<std::streamsize>(names[i].size()));
    write_u32(os, static_cast<std::uint32_t>(params[i]->rows()));
    write_u32(os, static_cast<std::uint32_t>(params[i]->cols()));
  }
  for (const Matrix* p : params)
    for (std::size_t i = 0; i < p->size(); ++i) write_f64(os, p->data()[i]);
  if (!os) throw std::runtime_error("failed writing weight file: " + path);
}

QNetwork QNetwork::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open weight file: " + path);
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("weight file: bad magic: " + path);
  if (read_u32(is) != kFormatVersion)
    throw std::runtime_error("weight file: unsupported format version: " + path);

  QNetworkConfig cfg;
  cfg.kind = read_u32(is) == 0 ? QNetworkConfig::Kind::gcn : QNetworkConfig::Kind::mlp;
  cfg.n_aps = static_cast<int>(read_u32(is));
  cfg.n_channels = static_cast<int>(read_u32(is));
  cfg.gcn_width = static_cast<int>(read_u32(is));
  cfg.trunk_width = static_cast<int>(read_u32(is));
  cfg.head_width = static_cast<int>(read_u32(is));

  QNetwork net(cfg, 0);
  auto params = net.parameters();
  auto names = net.parameter_names();
  const std::uint32_t count = read_u32(is);
  if (count != params.size()) throw std::runtime_error("weight file: tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rows = read_u32(is);
    const std::uint32_t cols = read_u32(is);
    if (!is || name != names[i] || rows != static_cast<std::uint32_t>(params[i]->rows()) ||
        cols != static_cast<std::uint32_t>(params[i]->cols()))
      throw std::runtime_error("weight file: tensor descriptor mismatch for " + names[i]);
  }
  for (Matrix* p : params)
    for (std::size_t i = 0; i < p->size(); ++i) p->data()[i] = read_f64(is);
  return net;
}

}  // namespace chanalloc
