#include "chanalloc/canon.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace chanalloc {

void ColoredGraph::validate() const {
  if (n < 0 || n > 255) throw std::invalid_argument("ColoredGraph: n must be in [0, 255]");
  if (adjacency.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("ColoredGraph: adjacency size mismatch");
  if (colors.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("ColoredGraph: colors size mismatch");
  for (int i = 0; i < n; ++i) {
    if (adjacency[static_cast<std::size_t>(i) * n + i] != 0)
      throw std::invalid_argument("ColoredGraph: diagonal must be zero");
    if (colors[i] < 0 || colors[i] > 255)
      throw std::invalid_argument("ColoredGraph: color out of byte range");
    for (int j = 0; j < n; ++j) {
      const std::uint8_t aij = adjacency[static_cast<std::size_t>(i) * n + j];
      if (aij != 0 && aij != 1) throw std::invalid_argument("ColoredGraph: entries must be 0/1");
      if (aij != adjacency[static_cast<std::size_t>(j) * n + i])
        throw std::invalid_argument("ColoredGraph: adjacency must be symmetric");
    }
  }
}

std::vector<std::uint8_t> encode_colored_graph(const ColoredGraph& g) {
  std::vector<std::uint8_t> bytes;
  const int n = g.n;
  bytes.reserve(1 + (n * (n - 1) / 2 + 7) / 8 + n);
  bytes.push_back(static_cast<std::uint8_t>(n));
  std::uint8_t acc = 0;
  int filled = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      acc = static_cast<std::uint8_t>(acc << 1 | (g.adjacent(i, j) ? 1 : 0));
      if (++filled == 8) {
        bytes.push_back(acc);
        acc = 0;
        filled = 0;
      }
    }
  }
  if (filled > 0) bytes.push_back(static_cast<std::uint8_t>(acc << (8 - filled)));
  for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(g.colors[i]));
  return bytes;
}

ColoredGraph apply_permutation(const ColoredGraph& g, const std::vector<int>& perm) {
  ColoredGraph out;
  out.n = g.n;
  out.adjacency.assign(g.adjacency.size(), 0);
  out.colors.assign(g.n, 0);
  for (int i = 0; i < g.n; ++i) {
    out.colors[perm[i]] = g.colors[i];
    for (int j = 0; j < g.n; ++j)
      out.adjacency[static_cast<std::size_t>(perm[i]) * g.n + perm[j]] =
          g.adjacency[static_cast<std::size_t>(i) * g.n + j];
  }
  return out;
}

namespace {

using Partition = std::vector<std::vector<int>>;

// Equitable refinement: split cells by the multiset of neighbor counts
// toward every cell, until stable. Sub-cells are ordered by their count
// signature, which keeps the result isomorphism-invariant.
void refine(const ColoredGraph& g, Partition& cells) {
  bool changed = true;
  while (changed) {
    changed = false;
    const std::size_t n_cells = cells.size();
    for (std::size_t ci = 0; ci < n_cells; ++ci) {
      if (cells[ci].size() <= 1) continue;
      std::map<std::vector<int>, std::vector<int>> groups;
      for (int v : cells[ci]) {
        std::vector<int> sig(n_cells, 0);
        for (std::size_t cj = 0; cj < n_cells; ++cj)
          for (int u : cells[cj])
            if (g.adjacent(v, u)) ++sig[cj];
        groups[sig].push_back(v);
      }
      if (groups.size() > 1) {
        Partition replacement;
        replacement.reserve(n_cells + groups.size() - 1);
        for (std::size_t cj = 0; cj < ci; ++cj) replacement.push_back(std::move(cells[cj]));
        for (auto& [sig, members] : groups) replacement.push_back(std::move(members));
        for (std::size_t cj = ci + 1; cj < n_cells; ++cj)
          replacement.push_back(std::move(cells[cj]));
        cells = std::move(replacement);
        changed = true;
        break;
      }
    }
  }
}

struct SearchState {
  const ColoredGraph* g;
  std::vector<std::uint8_t> best_bytes;
  std::vector<int> best_perm;
  bool have_best = false;
};

void search(SearchState& st, Partition cells) {
  refine(*st.g, cells);

  std::size_t target = cells.size();
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    if (cells[ci].size() > 1) {
      target = ci;
      break;
    }
  }

  if (target == cells.size()) {
    // discrete partition: cell order is the canonical order
    std::vector<int> perm(st.g->n);
    for (std::size_t k = 0; k < cells.size(); ++k) perm[cells[k][0]] = static_cast<int>(k);
    std::vector<std::uint8_t> bytes = encode_colored_graph(apply_permutation(*st.g, perm));
    if (!st.have_best || bytes < st.best_bytes) {
      st.best_bytes = std::move(bytes);
      st.best_perm = std::move(perm);
      st.have_best = true;
    }
    return;
  }

  for (int v : cells[target]) {
    Partition next;
    next.reserve(cells.size() + 1);
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
      if (ci != target) {
        next.push_back(cells[ci]);
        continue;
      }
      next.push_back({v});
      std::vector<int> rest;
      for (int u : cells[ci])
        if (u != v) rest.push_back(u);
      next.push_back(std::move(rest));
    }
    search(st, std::move(next));
  }
}

}  // namespace

CanonicalForm canonical_form(const ColoredGraph& g) {
  g.validate();
  if (g.n == 0) return {encode_colored_graph(g), {}};

  // initial partition: one cell per present color, ascending color value
  std::map<int, std::vector<int>> by_color;
  for (int i = 0; i < g.n; ++i) by_color[g.colors[i]].push_back(i);
  Partition cells;
  cells.reserve(by_color.size());
  for (auto& [color, members] : by_color) cells.push_back(std::move(members));

  SearchState st;
  st.g = &g;
  search(st, std::move(cells));
  return {std::move(st.best_bytes), std::move(st.best_perm)};
}

bool is_isomorphic(const ColoredGraph& g1, const ColoredGraph& g2) {
  if (g1.n != g2.n) return false;
  return canonical_form(g1).canonical_bytes == canonical_form(g2).canonical_bytes;
}

std::uint64_t fnv1a_hash(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace chanalloc
