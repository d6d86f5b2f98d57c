// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/graph.hpp"

#include <algorithm>

#include "iposter/canvas.hpp"

namespace iposter {

LayoutGraph::LayoutGraph(std::vector<NodeKind> kinds) : kinds_(std::move(kinds)), adjacency_(kinds_.size()) {}

bool LayoutGraph::add_edge(int a, int b) {
  if (a < 0 || b < 0 || a >= num_nodes() || b >= num_nodes()) throw InvalidInput("add_edge: node out of range");
  if (a == b) return false;
  auto& na = adjacency_[a];
  if (std::find(na.begin(), na.end(), b) != na.end()) return false;
  na.push_back(b);
  adjacency_[b].push_back(a);
  edges_.emplace_back(std::min(a, b), std::max(a, b));
  return true;
}

LayoutGraph::Directed LayoutGraph::directed() const {
  Directed d;
  d.receivers.reserve(edges_.size() * 2);
  d.senders.reserve(edges_.size() * 2);
  for (const auto& [a, b] : edges_) {
    d.receivers.push_back(a);
    d.senders.push_back(b);
    d.receivers.push_back(b);
    d.senders.push_back(a);
  }
  return d;
}

LayoutGraph build_blm_graph(int n_elements) {
  if (n_elements < 0) throw InvalidInput("build_blm_graph: negative element count");
  std::vector<NodeKind> kinds(n_elements + 1, NodeKind::Element);
  kinds[0] = NodeKind::Salbox;
  LayoutGraph g(std::move(kinds));
  for (int i = 0; i <= n_elements; ++i) {
    for (int j = i + 1; j <= n_elements; ++j) g.add_edge(i, j);
  }
  return g;
}

LayoutGraph build_ilm_graph(int grid_rows, int grid_cols, int n_elements) {
  if (grid_rows < 1 || grid_cols < 1 || n_elements < 0) throw InvalidInput("build_ilm_graph: invalid sizes");
  const int m = grid_rows * grid_cols;
  std::vector<NodeKind> kinds(m + n_elements, NodeKind::Element);
  std::fill_n(kinds.begin(), m, NodeKind::Patch);
  LayoutGraph g(std::move(kinds));
  // (a) grid adjacency between patches
  for (int r = 0; r < grid_rows; ++r) {
    for (int c = 0; c < grid_cols; ++c) {
      const int p = r * grid_cols + c;
      if (c + 1 < grid_cols) g.add_edge(p, p + 1);
      if (r + 1 < grid_rows) g.add_edge(p, p + grid_cols);
    }
  }
  // (b) every patch to every element
  for (int p = 0; p < m; ++p) {
    for (int e = 0; e < n_elements; ++e) g.add_edge(p, m + e);
  }
  // (c) element clique
  for (int i = 0; i < n_elements; ++i) {
    for (int j = i + 1; j < n_elements; ++j) g.add_edge(m + i, m + j);
  }
  return g;
}

}  // namespace iposter
