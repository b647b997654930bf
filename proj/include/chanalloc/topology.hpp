#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "chanalloc/matrix.hpp"

namespace chanalloc {

struct TopologyConfig {
  int n_aps = 10;
  double region_side = 1000.0;
  double cs_range = 550.0;
  int n_channels = 3;

  // throws std::invalid_argument on a bad field
  void validate() const;
};

// AP placement plus the symmetric binary contention matrix. Two APs are
// adjacent iff their distance is <= cs_range (closed ball, ties adjacent).
struct Topology {
  std::vector<std::array<double, 2>> positions;
  std::vector<std::uint8_t> adjacency;  // n*n row-major, zero diagonal

  int n() const { return static_cast<int>(positions.size()); }
  bool adjacent(int i, int j) const {
    return adjacency[static_cast<std::size_t>(i) * positions.size() + j] != 0;
  }
  int edge_count() const;
};

struct LaplacianDecomposition {
  Matrix degree;                   // diagonal D
  Matrix laplacian;                // L = D - A
  std::vector<double> eigenvalues; // ascending
  Matrix eigenvectors;             // orthonormal, column k pairs with eigenvalue k
};

// closed-ball distance rule: A_ij = 1 iff i != j and dist(i, j) <= cs_range
std::vector<std::uint8_t> adjacency_from_positions(
    const std::vector<std::array<double, 2>>& positions, double cs_range);

Topology generate_topology(const TopologyConfig& config, std::uint64_t seed);

LaplacianDecomposition laplacian_decompose(const Topology& topology);
// same, for an adjacency matrix in byte form (canonical graphs)
LaplacianDecomposition laplacian_decompose(const std::vector<std::uint8_t>& adjacency, int n);

// Cyclic Jacobi rotations on a symmetric matrix. Sweeps until the
// off-diagonal Frobenius norm drops below tol; throws std::runtime_error if
// max_sweeps is exhausted first. Eigenvalues come back ascending and each
// eigenvector's first component above 1e-12 in magnitude is made positive,
// so the basis is deterministic.
struct JacobiResult {
  std::vector<double> eigenvalues;
  Matrix eigenvectors;
};
JacobiResult jacobi_eigen(Matrix symmetric, int max_sweeps = 100, double tol = 1e-12);

nlohmann::json topology_to_json(const Topology& t);
Topology topology_from_json(const nlohmann::json& j);

}  // namespace chanalloc
