#pragma once

#include <cstdint>
#include <vector>

namespace chanalloc {

// Contention graph with one channel color per node. Colors are semantic
// (channel identities), so canonicalization never renames them.
struct ColoredGraph {
  int n = 0;
  std::vector<std::uint8_t> adjacency;  // n*n row-major, symmetric, zero diagonal
  std::vector<int> colors;              // one per node

  bool adjacent(int i, int j) const {
    return adjacency[static_cast<std::size_t>(i) * n + j] != 0;
  }
  void set_edge(int i, int j) {
    adjacency[static_cast<std::size_t>(i) * n + j] = 1;
    adjacency[static_cast<std::size_t>(j) * n + i] = 1;
  }
  // throws std::invalid_argument if not symmetric / zero-diagonal / sized right
  void validate() const;
};

struct CanonicalForm {
  // n, then the permuted upper triangle packed big-endian, then one byte per color
  std::vector<std::uint8_t> canonical_bytes;
  std::vector<int> permutation;  // original index -> canonical position
};

// byte encoding of the graph as-is (no relabeling)
std::vector<std::uint8_t> encode_colored_graph(const ColoredGraph& g);

// relabel: node i of g becomes node perm[i]
ColoredGraph apply_permutation(const ColoredGraph& g, const std::vector<int>& perm);

// Individualization-refinement canonical labeling. Two graphs receive the
// same canonical_bytes iff they are color-isomorphic.
CanonicalForm canonical_form(const ColoredGraph& g);

bool is_isomorphic(const ColoredGraph& g1, const ColoredGraph& g2);

// FNV-1a over canonical bytes, used for state hashes in episode traces
std::uint64_t fnv1a_hash(const std::vector<std::uint8_t>& bytes);

}  // namespace chanalloc
