// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "iposter/graph.hpp"

using namespace iposter;

TEST_CASE("blm graph is complete over salbox and elements") {
  for (int n = 1; n <= 12; ++n) {
    const LayoutGraph g = build_blm_graph(n);
    CHECK(g.num_nodes() == n + 1);
    CHECK(g.edges().size() == static_cast<std::size_t>((n + 1) * n / 2));
    CHECK(g.kind(0) == NodeKind::Salbox);
    for (int v = 0; v <= n; ++v) CHECK(g.degree(v) == n);
  }
}

TEST_CASE("ilm graph: grid, bipartite patch-element links and element clique") {
  const int rows = 3, cols = 4, n = 5;
  const LayoutGraph g = build_ilm_graph(rows, cols, n);
  const int m = rows * cols;
  CHECK(g.num_nodes() == m + n);
  const std::size_t expected = rows * (cols - 1) + cols * (rows - 1) + m * n + n * (n - 1) / 2;
  CHECK(g.edges().size() == expected);
  // corner patch: 2 grid neighbours plus all elements
  CHECK(g.degree(0) == 2 + n);
  // interior patch (1, 1)
  CHECK(g.degree(cols + 1) == 4 + n);
  // element: every patch plus the other elements
  CHECK(g.degree(m) == m + n - 1);
  CHECK(g.kind(m) == NodeKind::Element);
  CHECK(g.kind(m - 1) == NodeKind::Patch);
}

TEST_CASE("edges are undirected and deduplicated") {
  LayoutGraph g({NodeKind::Element, NodeKind::Element, NodeKind::Element});
  CHECK(g.add_edge(0, 1));
  CHECK_FALSE(g.add_edge(1, 0));
  CHECK_FALSE(g.add_edge(2, 2));
  CHECK(g.edges().size() == 1);
  const auto d = g.directed();
  CHECK(d.receivers.size() == 2);
  CHECK(d.senders.size() == 2);
}
