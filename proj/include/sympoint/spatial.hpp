#pragma once

// Point-set geometry shared by the backbone and the head: k-nearest
// neighbours, farthest-point sampling, inverse-distance weights, and padded
// neighbourhood tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "sympoint/vgio.hpp"

namespace sympoint {

/// Distances below this count as an exact match.
inline constexpr double kExactMatchDistance = 1e-8;

/// For every query, the indices of its k nearest sources ordered by
/// (distance, index). k is clamped to the source count.
inline std::vector<std::vector<std::size_t>> knn_indices(const std::vector<Vec2>& sources,
                                                         const std::vector<Vec2>& queries, std::size_t k) {
  k = std::min(k, sources.size());
  std::vector<std::vector<std::size_t>> out(queries.size());
  using Item = std::pair<double, std::size_t>;  // max-heap on (d2, index)
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::priority_queue<Item> heap;
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const double dx = sources[s].x - queries[q].x;
      const double dy = sources[s].y - queries[q].y;
      const Item it{dx * dx + dy * dy, s};
      if (heap.size() < k) {
        heap.push(it);
      } else if (k > 0 && it < heap.top()) {
        heap.pop();
        heap.push(it);
      }
    }
    auto& row = out[q];
    row.resize(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
      row[i] = heap.top().second;
      heap.pop();
    }
  }
  return out;
}

/// Farthest-point sampling of `count` indices starting from `start`.
/// Ties go to the lowest index.
inline std::vector<std::size_t> farthest_point_sample(const std::vector<Vec2>& pts, std::size_t count,
                                                      std::size_t start) {
  const std::size_t n = pts.size();
  if (n == 0 || count == 0) return {};
  if (start >= n) throw std::invalid_argument("farthest_point_sample: start out of range");
  count = std::min(count, n);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> chosen{start};
  std::size_t cur = start;
  while (chosen.size() < count) {
    std::size_t pick = n;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], distance(pts[i], pts[cur]));
      if (best[i] > far) {
        far = best[i];
        pick = i;
      }
    }
    chosen.push_back(pick);
    cur = pick;
  }
  return chosen;
}

/// Sparse row-stochastic weights: row i mixes sources index[i*width + k].
struct SparseWeights {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<std::size_t> index;
  std::vector<double> weight;

  template <typename V>
  std::vector<V> apply(const std::vector<V>& src, std::size_t channels) const {
    std::vector<V> out(rows * channels, V(0));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < width; ++k) {
        const double w = weight[r * width + k];
        const V* s = src.data() + index[r * width + k] * channels;
        for (std::size_t c = 0; c < channels; ++c) out[r * channels + c] += V(w * double(s[c]));
      }
    return out;
  }
};

/// Inverse-distance weights over the k nearest sources of each target. A
/// target within kExactMatchDistance of a source takes that source alone.
inline SparseWeights idw_weights(const std::vector<Vec2>& sources, const std::vector<Vec2>& targets, std::size_t k) {
  if (sources.empty()) throw std::invalid_argument("idw_weights: empty source set");
  const auto nn = knn_indices(sources, targets, k);
  SparseWeights w;
  w.rows = targets.size();
  w.width = std::min(k, sources.size());
  w.index.resize(w.rows * w.width);
  w.weight.assign(w.rows * w.width, 0.0);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& row = nn[t];
    for (std::size_t j = 0; j < w.width; ++j) w.index[t * w.width + j] = row[j];
    const double d0 = distance(sources[row[0]], targets[t]);
    if (d0 < kExactMatchDistance) {
      w.weight[t * w.width] = 1.0;
      continue;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < w.width; ++j) total += 1.0 / distance(sources[row[j]], targets[t]);
    for (std::size_t j = 0; j < w.width; ++j)
      w.weight[t * w.width + j] = (1.0 / distance(sources[row[j]], targets[t])) / total;
  }
  return w;
}

/// Variable-size neighbour lists padded to a common width. Padding slots
/// point at the row itself and are flagged invalid.
struct Neighborhood {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<std::size_t> center;  // row index repeated per slot
  std::vector<std::size_t> index;
  std::vector<std::uint8_t> valid;

  static Neighborhood from_lists(const std::vector<std::vector<std::size_t>>& lists,
                                 const std::vector<std::size_t>* row_ids = nullptr) {
    Neighborhood nb;
    nb.rows = lists.size();
    for (const auto& l : lists) nb.width = std::max(nb.width, l.size());
    nb.width = std::max<std::size_t>(nb.width, 1);
    nb.center.resize(nb.rows * nb.width);
    nb.index.resize(nb.rows * nb.width);
    nb.valid.assign(nb.rows * nb.width, 0);
    for (std::size_t r = 0; r < nb.rows; ++r) {
      const std::size_t self = row_ids ? (*row_ids)[r] : r;
      for (std::size_t k = 0; k < nb.width; ++k) {
        nb.center[r * nb.width + k] = self;
        if (k < lists[r].size()) {
          nb.index[r * nb.width + k] = lists[r][k];
          nb.valid[r * nb.width + k] = 1;
        } else {
          nb.index[r * nb.width + k] = lists[r].empty() ? self : lists[r][0];
        }
      }
    }
    return nb;
  }

  std::vector<std::size_t> list(std::size_t r) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < width; ++k)
      if (valid[r * width + k]) out.push_back(index[r * width + k]);
    return out;
  }
};

/// Mean over points of the distance to the farthest listed neighbour;
/// falls back to 1 when every neighbourhood is degenerate.
inline double neighborhood_radius(const std::vector<Vec2>& centers, const std::vector<Vec2>& sources,
                                  const std::vector<std::vector<std::size_t>>& lists) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    double far = 0.0;
    for (std::size_t j : lists[i]) far = std::max(far, distance(centers[i], sources[j]));
    if (far > 0.0) {
      total += far;
      ++count;
    }
  }
  return count ? total / double(count) : 1.0;
}

}  // namespace sympoint
