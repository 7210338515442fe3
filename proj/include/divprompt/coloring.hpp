// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "divprompt/error.hpp"

namespace divprompt::coloring {

using Vertex = int;
using Color = int;
/// vertex -> color label (labels are positive integers, "Color n" -> n)
using Coloring = std::map<Vertex, Color>;

class Graph {
 public:
  Graph() = default;

  Graph(int n_vertices, std::vector<std::pair<Vertex, Vertex>> edges, int max_colors)
      : n_(n_vertices), max_colors_(max_colors) {
    if (n_ < 1) throw ConfigError("graph needs at least one vertex");
    if (max_colors_ < 1) throw ConfigError("color budget must be >= 1");
    for (auto [u, v] : edges) {
      if (u < 0 || v < 0 || u >= n_ || v >= n_)
        throw ConfigError("edge (" + std::to_string(u) + ", " + std::to_string(v) + ") out of range");
      if (u == v) throw ConfigError("self-loop at vertex " + std::to_string(u));
      edges_.insert({std::min(u, v), std::max(u, v)});
    }
  }

  int n_vertices() const { return n_; }
  int max_colors() const { return max_colors_; }
  /// Normalized (low, high) pairs, sorted.
  const std::set<std::pair<Vertex, Vertex>>& edges() const { return edges_; }

  std::vector<std::vector<Vertex>> adjacency() const {
    std::vector<std::vector<Vertex>> adj(n_);
    for (auto [u, v] : edges_) {
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
    return adj;
  }

 private:
  int n_ = 0;
  std::set<std::pair<Vertex, Vertex>> edges_;
  int max_colors_ = 1;
};

struct Verdict {
  std::vector<Vertex> missing;
  std::vector<Vertex> unknown;                       // colored vertices outside [0, n)
  std::vector<Color> over_budget;                    // labels beyond the first max_colors distinct ones
  std::vector<std::pair<Vertex, Vertex>> conflicts;  // monochromatic edges

  bool valid() const { return missing.empty() && unknown.empty() && over_budget.empty() && conflicts.empty(); }

  std::string summary() const {
    if (valid()) return "valid";
    std::string out = "invalid:";
    if (!missing.empty()) out += " " + std::to_string(missing.size()) + " missing vertices";
    if (!unknown.empty()) out += " " + std::to_string(unknown.size()) + " unknown vertices";
    if (!over_budget.empty()) out += " " + std::to_string(over_budget.size()) + " colors over budget";
    if (!conflicts.empty()) out += " " + std::to_string(conflicts.size()) + " conflicting edges";
    return out;
  }
};

inline Verdict verify_coloring(const Graph& g, const Coloring& c) {
  Verdict v;
  for (Vertex i = 0; i < g.n_vertices(); ++i)
    if (!c.count(i)) v.missing.push_back(i);
  std::vector<Color> distinct;
  for (const auto& [vertex, color] : c) {
    if (vertex < 0 || vertex >= g.n_vertices()) {
      v.unknown.push_back(vertex);
      continue;
    }
    if (std::find(distinct.begin(), distinct.end(), color) == distinct.end()) distinct.push_back(color);
  }
  if (static_cast<int>(distinct.size()) > g.max_colors()) {
    std::sort(distinct.begin(), distinct.end());
    v.over_budget.assign(distinct.begin() + g.max_colors(), distinct.end());
  }
  for (auto [a, b] : g.edges()) {
    auto ia = c.find(a), ib = c.find(b);
    if (ia != c.end() && ib != c.end() && ia->second == ib->second) v.conflicts.push_back({a, b});
  }
  return v;
}

/// First proper coloring with labels 1..k under vertex-order / color-order
/// backtracking, or nullopt when the chromatic number exceeds k (or the
/// node budget runs out).
inline std::optional<Coloring> oracle_color_exhaustive(const Graph& g, std::size_t node_budget = 50'000'000) {
  const int n = g.n_vertices(), k = g.max_colors();
  auto adj = g.adjacency();
  std::vector<Color> assigned(n, 0);
  std::size_t nodes = 0;
  // iterative backtracking over vertices 0..n-1
  int v = 0;
  while (v >= 0) {
    if (v == n) {
      Coloring out;
      for (int i = 0; i < n; ++i) out[i] = assigned[i];
      return out;
    }
    if (++nodes > node_budget) return std::nullopt;
    Color next = assigned[v] + 1;
    for (; next <= k; ++next) {
      bool ok = std::none_of(adj[v].begin(), adj[v].end(),
                             [&](Vertex u) { return u < v && assigned[u] == next; });
      if (ok) break;
    }
    if (next <= k) {
      assigned[v] = next;
      ++v;
    } else {
      assigned[v] = 0;
      --v;
    }
  }
  return std::nullopt;
}

/// {"id", "n_vertices", "edges": [[u, v], ...], "max_colors"}
inline Graph graph_from_json(const nlohmann::json& j) {
  std::vector<std::pair<Vertex, Vertex>> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw ConfigError("edge must be a [u, v] pair");
    edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  return Graph(j.at("n_vertices").get<int>(), std::move(edges), j.at("max_colors").get<int>());
}

inline nlohmann::json graph_to_json(const Graph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (auto [u, v] : g.edges()) edges.push_back({u, v});
  return {{"n_vertices", g.n_vertices()}, {"edges", edges}, {"max_colors", g.max_colors()}};
}

/// "0: Color 1\n1: Color 2\n..."
inline std::string render_coloring(const Coloring& c) {
  std::string out;
  for (const auto& [v, col] : c) out += std::to_string(v) + ": Color " + std::to_string(col) + "\n";
  return out;
}

/// Edge list in the prompt phrasing followed by the vertex-count reminder.
inline std::string describe_graph(const Graph& g) {
  std::string out = "You may use at most " + std::to_string(g.max_colors()) + " colors.\n";
  for (auto [u, v] : g.edges())
    out += "Vertex " + std::to_string(u) + " is connected to vertex " + std::to_string(v) + ".\n";
  out += "There are a total of " + std::to_string(g.n_vertices()) +
         " vertices. Please label every vertex, even if it is disconnected from the rest of the graph. "
         "Please provide each vertex's color. Do not skip any vertices. Each color must be provided on a "
         "new line in the response and should be formatted as "
         "\"{VERTEX NUMBER}: {VERTEX COLOR ASSIGNMENT (Color n)}\".\n";
  return out;
}

/// The 14-vertex, 3-color instance from the graph-coloring prompt.
inline Graph reference_graph() {
  return Graph(14,
               {{0, 7}, {0, 8}, {0, 9}, {0, 11}, {1, 13}, {2, 9}, {3, 8}, {3, 11}, {3, 12},
                {4, 12}, {5, 11}, {6, 9}, {7, 10}, {7, 13}, {9, 11}, {10, 13}, {11, 13}},
               3);
}

}  // namespace divprompt::coloring
