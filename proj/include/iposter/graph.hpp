// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace iposter {

enum class NodeKind : std::uint8_t { Salbox, Element, Patch };

/// Undirected simple graph with tagged nodes. Edges are stored once as (lo, hi) pairs.
class LayoutGraph {
 public:
  LayoutGraph() = default;
  explicit LayoutGraph(std::vector<NodeKind> kinds);

  /// Adds {a, b}. Self-loops and duplicates are ignored; returns whether the edge was new.
  bool add_edge(int a, int b);

  int num_nodes() const { return static_cast<int>(kinds_.size()); }
  const std::vector<NodeKind>& node_kinds() const { return kinds_; }
  NodeKind kind(int node) const { return kinds_[node]; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int node) const { return adjacency_[node]; }
  int degree(int node) const { return static_cast<int>(adjacency_[node].size()); }

  /// Both directions of every edge, as parallel (receiver, sender) arrays.
  struct Directed {
    std::vector<int> receivers;
    std::vector<int> senders;
  };
  Directed directed() const;

  bool operator==(const LayoutGraph&) const = default;

 private:
  std::vector<NodeKind> kinds_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> adjacency_;
};

/// Node 0 is the salbox, nodes 1..N are elements; complete graph.
LayoutGraph build_blm_graph(int n_elements);

/// Patches first (row-major, 4-neighborhood grid), then N elements. Every patch links to
/// every element and the elements form a clique.
LayoutGraph build_ilm_graph(int grid_rows, int grid_cols, int n_elements);

}  // namespace iposter
