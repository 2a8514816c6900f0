#pragma once

// Primitive connection sets: i and j are connected when their closest
// endpoints are closer than epsilon. Per-point lists are then capped by
// random dropping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "sympoint/points.hpp"
#include "sympoint/rng.hpp"

namespace sympoint {

inline constexpr double kDefaultEpsilon = 1.0;
inline constexpr std::size_t kDefaultConnectionCap = 8;

struct ConnectionGraph {
  /// Sorted neighbor indices per point, after capping.
  std::vector<std::vector<std::size_t>> neighbors;
  /// d_ij parallel to `neighbors`.
  std::vector<std::vector<double>> distances;
  double epsilon = kDefaultEpsilon;
  std::size_t cap = kDefaultConnectionCap;

  std::size_t size() const { return neighbors.size(); }
  static ConnectionGraph empty(std::size_t n) {
    ConnectionGraph g;
    g.neighbors.resize(n);
    g.distances.resize(n);
    return g;
  }
};

/// Minimum endpoint-to-endpoint distance between two primitives.
inline double endpoint_distance(const Primitive& a, const Primitive& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& u : a.endpoints())
    for (const auto& v : b.endpoints()) best = std::min(best, distance(u, v));
  return best;
}

/// Uncapped, symmetric connection lists via a uniform grid of cell size
/// epsilon. Lists are sorted by index.
inline ConnectionGraph raw_connections(const Document& doc, double epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  const std::size_t n = doc.primitives.size();
  ConnectionGraph g = ConnectionGraph::empty(n);
  g.epsilon = epsilon;
  g.cap = std::numeric_limits<std::size_t>::max();

  auto cell_of = [epsilon](Vec2 p) {
    return std::pair<std::int64_t, std::int64_t>{static_cast<std::int64_t>(std::floor(p.x / epsilon)),
                                                 static_cast<std::int64_t>(std::floor(p.y / epsilon))};
  };
  auto key = [](std::int64_t cx, std::int64_t cy) {
    return (static_cast<std::uint64_t>(cx) * 0x9e3779b97f4a7c15ULL) ^ static_cast<std::uint64_t>(cy);
  };
  struct Entry {
    std::int64_t cx, cy;
    std::size_t prim;
  };
  std::unordered_map<std::uint64_t, std::vector<Entry>> grid;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& v : doc.primitives[i].endpoints()) {
      const auto [cx, cy] = cell_of(v);
      grid[key(cx, cy)].push_back({cx, cy, i});
    }
  }
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (const auto& v : doc.primitives[i].endpoints()) {
      const auto [cx, cy] = cell_of(v);
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          auto it = grid.find(key(cx + dx, cy + dy));
          if (it == grid.end()) continue;
          for (const auto& e : it->second)
            if (e.cx == cx + dx && e.cy == cy + dy && e.prim != i) cand.push_back(e.prim);
        }
      }
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    for (std::size_t j : cand) {
      const double d = endpoint_distance(doc.primitives[i], doc.primitives[j]);
      if (d < epsilon) {
        g.neighbors[i].push_back(j);
        g.distances[i].push_back(d);
      }
    }
  }
  return g;
}

/// Connection sets capped at `cap` entries per point. Points with more raw
/// connections keep a uniformly random subset; each point draws
/// independently, so the capped graph need not be symmetric.
inline ConnectionGraph build_connections(const PointSet& points, const Document& doc, double epsilon,
                                         std::size_t cap, std::uint64_t seed) {
  if (points.size() != doc.primitives.size()) throw std::invalid_argument("point set does not match document");
  if (cap < 1) throw std::invalid_argument("connection cap must be >= 1");
  ConnectionGraph g = raw_connections(doc, epsilon);
  g.cap = cap;
  Rng rng(seed);
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto& nb = g.neighbors[i];
    if (nb.size() <= cap) continue;
    std::vector<std::size_t> order(nb.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t k = 0; k < cap; ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng.below(order.size() - k));
      std::swap(order[k], order[pick]);
    }
    order.resize(cap);
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> kept;
    std::vector<double> dist;
    for (std::size_t k : order) {
      kept.push_back(nb[k]);
      dist.push_back(g.distances[i][k]);
    }
    nb = std::move(kept);
    g.distances[i] = std::move(dist);
  }
  return g;
}

struct ConnectionStats {
  /// histogram[d] = number of points with out-degree d.
  std::vector<std::size_t> degree_histogram;
  /// Connected components of the undirected closure, isolated points included.
  std::size_t components = 0;
  std::size_t edges = 0;
};

inline ConnectionStats connection_stats(const ConnectionGraph& g) {
  ConnectionStats s;
  const std::size_t n = g.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t d = g.neighbors[i].size();
    if (s.degree_histogram.size() <= d) s.degree_histogram.resize(d + 1, 0);
    ++s.degree_histogram[d];
    s.edges += d;
    for (std::size_t j : g.neighbors[i]) parent[find(i)] = find(j);
  }
  for (std::size_t i = 0; i < n; ++i) s.components += find(i) == i ? 1 : 0;
  return s;
}

}  // namespace sympoint
