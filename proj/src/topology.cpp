#include "chanalloc/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "chanalloc/rng.hpp"

namespace chanalloc {

void TopologyConfig::validate() const {
  if (n_aps < 1) throw std::invalid_argument("TopologyConfig: n_aps must be >= 1");
  if (!(region_side > 0.0)) throw std::invalid_argument("TopologyConfig: region_side must be > 0");
  if (!(cs_range > 0.0)) throw std::invalid_argument("TopologyConfig: cs_range must be > 0");
  if (n_channels < 1) throw std::invalid_argument("TopologyConfig: n_channels must be >= 1");
}

int Topology::edge_count() const {
  const int nn = n();
  int e = 0;
  for (int i = 0; i < nn; ++i)
    for (int j = i + 1; j < nn; ++j)
      if (adjacent(i, j)) ++e;
  return e;
}

std::vector<std::uint8_t> adjacency_from_positions(
    const std::vector<std::array<double, 2>>& positions, double cs_range) {
  const int n = static_cast<int>(positions.size());
  std::vector<std::uint8_t> adj(static_cast<std::size_t>(n) * n, 0);
  const double r2 = cs_range * cs_range;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dx = positions[i][0] - positions[j][0];
      const double dy = positions[i][1] - positions[j][1];
      if (dx * dx + dy * dy <= r2) {
        adj[static_cast<std::size_t>(i) * n + j] = 1;
        adj[static_cast<std::size_t>(j) * n + i] = 1;
      }
    }
  }
  return adj;
}

Topology generate_topology(const TopologyConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Topology t;
  t.positions.resize(config.n_aps);
  for (auto& p : t.positions) {
    p[0] = rng.uniform(0.0, config.region_side);
    p[1] = rng.uniform(0.0, config.region_side);
  }
  t.adjacency = adjacency_from_positions(t.positions, config.cs_range);
  return t;
}

JacobiResult jacobi_eigen(Matrix a, int max_sweeps, double tol) {
  const int n = a.rows();
  if (n != a.cols()) throw std::invalid_argument("jacobi_eigen: matrix must be square");
  Matrix v = Matrix::identity(n);

  auto offdiag_frobenius = [&a, n]() {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  while (offdiag_frobenius() > tol) {
    if (sweep++ >= max_sweeps)
      throw std::runtime_error("jacobi_eigen: no convergence after sweep cap");
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double sign = theta < 0.0 ? -1.0 : 1.0;
        const double t = sign / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);
        const double app = a(p, p), aqq = a(q, q);
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (int r = 0; r < n; ++r) {
          if (r != p && r != q) {
            const double arp = a(r, p), arq = a(r, q);
            a(r, p) = a(p, r) = arp - s * (arq + tau * arp);
            a(r, q) = a(q, r) = arq + s * (arp - tau * arq);
          }
          const double vrp = v(r, p), vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }

  // ascending order, deterministic sign
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&a](int x, int y) { return a(x, x) < a(y, y); });
  JacobiResult res;
  res.eigenvalues.resize(n);
  res.eigenvectors = Matrix(n, n);
  for (int k = 0; k < n; ++k) {
    const int src = order[k];
    res.eigenvalues[k] = a(src, src);
    double flip = 1.0;
    for (int r = 0; r < n; ++r) {
      if (std::fabs(v(r, src)) > 1e-12) {
        flip = v(r, src) > 0.0 ? 1.0 : -1.0;
        break;
      }
    }
    for (int r = 0; r < n; ++r) res.eigenvectors(r, k) = flip * v(r, src);
  }
  return res;
}

LaplacianDecomposition laplacian_decompose(const std::vector<std::uint8_t>& adjacency, int n) {
  LaplacianDecomposition d;
  d.degree = Matrix(n, n);
  d.laplacian = Matrix(n, n);
  for (int i = 0; i < n; ++i) {
    int deg = 0;
    for (int j = 0; j < n; ++j) deg += adjacency[static_cast<std::size_t>(i) * n + j] ? 1 : 0;
    d.degree(i, i) = deg;
    for (int j = 0; j < n; ++j) {
      const double aij = adjacency[static_cast<std::size_t>(i) * n + j] ? 1.0 : 0.0;
      d.laplacian(i, j) = (i == j ? deg : 0.0) - aij;
    }
  }
  JacobiResult jr = jacobi_eigen(d.laplacian);
  d.eigenvalues = std::move(jr.eigenvalues);
  d.eigenvectors = std::move(jr.eigenvectors);
  return d;
}

LaplacianDecomposition laplacian_decompose(const Topology& topology) {
  return laplacian_decompose(topology.adjacency, topology.n());
}

nlohmann::json topology_to_json(const Topology& t) {
  nlohmann::json j;
  j["positions"] = nlohmann::json::array();
  for (const auto& p : t.positions) j["positions"].push_back({p[0], p[1]});
  j["adjacency"] = nlohmann::json::array();
  const int n = t.n();
  for (int i = 0; i < n; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int jj = 0; jj < n; ++jj) row.push_back(t.adjacent(i, jj) ? 1 : 0);
    j["adjacency"].push_back(row);
  }
  return j;
}

Topology topology_from_json(const nlohmann::json& j) {
  Topology t;
  for (const auto& p : j.at("positions"))
    t.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  const int n = t.n();
  t.adjacency.assign(static_cast<std::size_t>(n) * n, 0);
  const auto& adj = j.at("adjacency");
  if (static_cast<int>(adj.size()) != n)
    throw std::invalid_argument("topology_from_json: adjacency size mismatch");
  for (int i = 0; i < n; ++i) {
    for (int jj = 0; jj < n; ++jj) {
      const int v = adj.at(i).at(jj).get<int>();
      if (v != 0 && v != 1) throw std::invalid_argument("topology_from_json: entries must be 0/1");
      t.adjacency[static_cast<std::size_t>(i) * n + jj] = static_cast<std::uint8_t>(v);
    }
  }
  for (int i = 0; i < n; ++i) {
    if (t.adjacency[static_cast<std::size_t>(i) * n + i] != 0)
      throw std::invalid_argument("topology_from_json: diagonal must be zero");
    for (int jj = 0; jj < n; ++jj)
      if (t.adjacency[static_cast<std::size_t>(i) * n + jj] !=
          t.adjacency[static_cast<std::size_t>(jj) * n + i])
        throw std::invalid_argument("topology_from_json: adjacency must be symmetric");
  }
  return t;
}

}  // namespace chanalloc
