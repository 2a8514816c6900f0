#pragma once

// Set-prediction training objective: Hungarian matching of queries to
// ground-truth symbols, mask BCE + dice, classification cross-entropy, and
// the contrastive connection loss on backbone features.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sympoint/backbone.hpp"
#include "sympoint/conngraph.hpp"
#include "sympoint/head.hpp"
#include "sympoint/optim.hpp"
#include "sympoint/tensor.hpp"

namespace sympoint {

struct MatchResult {
  /// (query, ground truth) sorted by query.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> unmatched;
  double total_cost = 0.0;
};

/// Minimum-cost injective assignment of an rows x cols cost matrix
/// (row-major) using shortest augmenting paths with potentials.
inline MatchResult hungarian_match(const std::vector<double>& cost, std::size_t rows, std::size_t cols) {
  if (cost.size() != rows * cols) throw std::invalid_argument("hungarian_match: cost has the wrong size");
  for (std::size_t i = 0; i < cost.size(); ++i)
    if (!std::isfinite(cost[i]))
      throw std::invalid_argument("hungarian_match: non-finite cost at (" + std::to_string(i / std::max<std::size_t>(cols, 1)) +
                                  ", " + std::to_string(i % std::max<std::size_t>(cols, 1)) + ")");
  MatchResult res;
  if (rows == 0 || cols == 0) {
    for (std::size_t q = 0; q < rows; ++q) res.unmatched.push_back(q);
    return res;
  }
  const bool flip = rows > cols;
  const std::size_t n = flip ? cols : rows, m = flip ? rows : cols;
  auto a = [&](std::size_t i, std::size_t j) { return flip ? cost[j * cols + i] : cost[i * cols + j]; };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::ptrdiff_t> gt_of(rows, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (!p[j]) continue;
    const std::size_t r = flip ? j - 1 : p[j] - 1;
    const std::size_t c = flip ? p[j] - 1 : j - 1;
    gt_of[r] = static_cast<std::ptrdiff_t>(c);
  }
  for (std::size_t q = 0; q < rows; ++q) {
    if (gt_of[q] < 0) {
      res.unmatched.push_back(q);
    } else {
      const auto g = static_cast<std::size_t>(gt_of[q]);
      res.pairs.emplace_back(q, g);
      res.total_cost += cost[q * cols + g];
    }
  }
  return res;
}

/// Ground-truth symbols as binary point masks, ordered by (class index,
/// instance). Stuff classes form one symbol per class.
struct SymbolTargets {
  std::size_t num_points = 0;
  std::vector<std::size_t> classes;  // index into the category table
  std::vector<std::vector<double>> masks;

  std::size_t size() const { return classes.size(); }
  std::vector<double> flat_masks() const {
    std::vector<double> out;
    out.reserve(size() * num_points);
    for (const auto& m : masks) out.insert(out.end(), m.begin(), m.end());
    return out;
  }
};

inline SymbolTargets build_targets(const std::vector<PointLabel>& labels, const std::vector<Category>& categories) {
  std::map<std::pair<std::size_t, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].semantic) continue;
    std::size_t ci = categories.size();
    for (std::size_t c = 0; c < categories.size(); ++c)
      if (categories[c].id == *labels[i].semantic) ci = c;
    if (ci == categories.size()) throw std::invalid_argument("label " + std::to_string(*labels[i].semantic) + " not in category table");
    groups[{ci, categories[ci].is_thing ? labels[i].instance : -1}].push_back(i);
  }
  SymbolTargets t;
  t.num_points = labels.size();
  for (const auto& [key, members] : groups) {
    t.classes.push_back(key.first);
    std::vector<double> m(labels.size(), 0.0);
    for (auto i : members) m[i] = 1.0;
    t.masks.push_back(std::move(m));
  }
  return t;
}

struct LossWeights {
  double bce = 5.0;
  double dice = 5.0;
  double cls = 2.0;
  double ccl = 8.0;
};

inline constexpr double kNoObjectWeight = 0.1;

/// O x G matrix of bce_w * BCE + dice_w * dice - cls_w * p(class), computed
/// on point-level mask logits.
template <typename T>
std::vector<double> matching_cost(const Tensor<T>& class_logits, const Tensor<T>& mask_logits, const SymbolTargets& gt,
                                  const LossWeights& w = {}) {
  const std::size_t o = mask_logits.dim(0), n = mask_logits.dim(1), g = gt.size();
  const auto probs = class_probabilities(class_logits);
  const std::size_t c1 = class_logits.dim(1);
  const auto z = mask_logits.values();
  std::vector<double> cost(o * g, 0.0);
  std::vector<double> sp(n), sig(n);
  for (std::size_t q = 0; q < o; ++q) {
    double sum_sig = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = z[q * n + i];
      sp[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
      sig[i] = 1.0 / (1.0 + std::exp(-x));
      sum_sig += sig[i];
    }
    for (std::size_t k = 0; k < g; ++k) {
      double bce = 0.0, inter = 0.0, gsum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = gt.masks[k][i];
        bce += sp[i] - gi * double(z[q * n + i]);
        inter += sig[i] * gi;
        gsum += gi;
      }
      bce /= double(std::max<std::size_t>(n, 1));
      const double dice = 1.0 - 2.0 * inter / (sum_sig + gsum);
      cost[q * g + k] = w.bce * bce + w.dice * dice - w.cls * probs[q * c1 + gt.classes[k]];
    }
  }
  return cost;
}

/// Mean BCE over points and matched pairs, and mean soft dice over pairs.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> mask_losses(const MatchResult& match, const Tensor<T>& mask_logits, const SymbolTargets& gt) {
  if (match.pairs.empty()) return {Tensor<T>::scalar(T(0)), Tensor<T>::scalar(T(0))};
  const std::size_t n = mask_logits.dim(1), p = match.pairs.size();
  std::vector<std::size_t> rows;
  std::vector<double> target;
  target.reserve(p * n);
  for (const auto& [q, k] : match.pairs) {
    rows.push_back(q);
    target.insert(target.end(), gt.masks[k].begin(), gt.masks[k].end());
  }
  auto z = gather_rows(mask_logits, std::span<const std::size_t>(rows));
  auto g = nn::constant<T>({p, n}, target);
  auto bce = mean(sub(softplus(z), mul(g, z)));
  auto s = sigmoid(z);
  auto inter = sum(mul(s, g), 1);
  auto denom = add(sum(s, 1), sum(g, 1));
  auto dice = mean(sub(Tensor<T>::full({p}, T(1)), div(scale(inter, T(2)), denom)));
  return {bce, dice};
}

/// Weighted cross-entropy: matched queries toward their symbol class,
/// unmatched toward no-object with weight kNoObjectWeight.
template <typename T>
Tensor<T> cls_loss(const Tensor<T>& class_logits, const MatchResult& match, const SymbolTargets& gt,
                   double no_object_weight = kNoObjectWeight) {
  const std::size_t o = class_logits.dim(0), c1 = class_logits.dim(1);
  std::vector<double> w(o * c1, 0.0);
  double total = 0.0;
  std::vector<char> matched(o, 0);
  for (const auto& [q, k] : match.pairs) {
    w[q * c1 + gt.classes[k]] = 1.0;
    matched[q] = 1;
    total += 1.0;
  }
  for (std::size_t q = 0; q < o; ++q) {
    if (matched[q]) continue;
    w[q * c1 + c1 - 1] = no_object_weight;
    total += no_object_weight;
  }
  auto ll = mul(log_softmax(class_logits, 1), nn::constant<T>({o, c1}, w));
  return scale(sum(ll), T(-1.0 / total));
}

/// Contrastive neighbourhoods: for each anchor, the kNN members (self
/// excluded) united with its connections.
struct ContrastSets {
  std::vector<std::vector<std::size_t>> members;
  static ContrastSets from(const std::vector<std::vector<std::size_t>>& knn, const ConnectionGraph* conn) {
    ContrastSets s;
    s.members.resize(knn.size());
    for (std::size_t i = 0; i < knn.size(); ++i) {
      for (auto j : knn[i])
        if (j != i) s.members[i].push_back(j);
      if (conn && i < conn->size())
        for (auto j : conn->neighbors[i])
          if (j != i && std::find(s.members[i].begin(), s.members[i].end(), j) == s.members[i].end())
            s.members[i].push_back(j);
    }
    return s;
  }
};

/// Mean over anchors of -log(sum_same exp(-d/tau) / sum_all exp(-d/tau)),
/// with d the distance between L2-normalized features. Anchors without a
/// same-label member are skipped; labels compare by value (background is
/// its own label).
template <typename T>
Tensor<T> ccl_loss(const Tensor<T>& features, const ContrastSets& sets, const std::vector<int>& labels, double tau = 1.0) {
  if (!(tau > 0.0)) throw std::invalid_argument("ccl temperature must be positive");
  const std::size_t n = features.dim(0);
  if (labels.size() != n || sets.members.size() != n) throw std::invalid_argument("ccl inputs disagree in size");
  std::vector<std::size_t> anchors;
  std::size_t width = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = sets.members[i];
    if (std::any_of(a.begin(), a.end(), [&](std::size_t j) { return labels[j] == labels[i]; })) {
      anchors.push_back(i);
      width = std::max(width, a.size());
    }
  }
  if (anchors.empty()) return Tensor<T>::scalar(T(0));
  const std::size_t na = anchors.size();
  std::vector<std::size_t> left(na * width), right(na * width);
  std::vector<double> pad(na * width, 0.0), positive(na * width, 0.0);
  for (std::size_t r = 0; r < na; ++r) {
    const std::size_t i = anchors[r];
    const auto& a = sets.members[i];
    for (std::size_t k = 0; k < width; ++k) {
      left[r * width + k] = i;
      if (k < a.size()) {
        right[r * width + k] = a[k];
        positive[r * width + k] = labels[a[k]] == labels[i] ? 1.0 : 0.0;
      } else {
        right[r * width + k] = a[0];
        pad[r * width + k] = kMaskedLogit;
      }
    }
  }
  auto norms = sqrt(add_scalar(sum(square(features), 1), T(1e-12)));
  auto unit = div(features, reshape(norms, {n, 1}));
  auto diff = sub(gather_rows(unit, std::span<const std::size_t>(left)), gather_rows(unit, std::span<const std::size_t>(right)));
  auto dist = sqrt(add_scalar(sum(square(diff), 1), T(1e-12)));
  auto logits = add(reshape(scale(dist, T(-1.0 / tau)), {na, width}), nn::constant<T>({na, width}, pad));
  // same-label mass over total mass, both summed in the same order so a
  // label-pure neighbourhood gives a ratio of exactly 1
  auto e = exp(sub(logits, reshape(max(logits, 1), {na, 1})));
  auto pos = div(sum(mul(e, nn::constant<T>({na, width}, positive)), 1), sum(e, 1));
  return scale(mean(log(pos)), T(-1));
}

struct LossBreakdown {
  double bce = 0.0, dice = 0.0, cls = 0.0, ccl = 0.0, total = 0.0;
};

template <typename T>
struct LossTerms {
  Tensor<T> bce, dice, cls, ccl;
};

/// Weighted sum of the four terms; throws NonFiniteError naming the first
/// non-finite term. A zero weight drops its term entirely.
template <typename T>
std::pair<Tensor<T>, LossBreakdown> total_loss(const LossTerms<T>& terms, const LossWeights& w = {}) {
  LossBreakdown b;
  const std::pair<const char*, const Tensor<T>*> named[] = {
      {"bce", &terms.bce}, {"dice", &terms.dice}, {"cls", &terms.cls}, {"ccl", &terms.ccl}};
  double* slots[] = {&b.bce, &b.dice, &b.cls, &b.ccl};
  const double weights[] = {w.bce, w.dice, w.cls, w.ccl};
  Tensor<T> total;
  for (std::size_t i = 0; i < 4; ++i) {
    const Tensor<T>* t = named[i].second;
    if (!t->defined() || weights[i] == 0.0) continue;
    const double v = double(t->item());
    if (!std::isfinite(v)) throw NonFiniteError(std::string("loss term '") + named[i].first + "' is not finite");
    *slots[i] = v;
    auto part = scale(*t, T(weights[i]));
    total = total.defined() ? add(total, part) : part;
  }
  if (!total.defined()) total = Tensor<T>::scalar(T(0));
  b.total = double(total.item());
  return {total, b};
}

/// Deep-supervised set loss over every prediction step of the head,
/// averaged, plus CCL on the final backbone features.
template <typename T>
std::pair<Tensor<T>, LossBreakdown> spotting_loss(const HeadOutput<T>& head, const SymbolTargets& gt,
                                                  const Tensor<T>& backbone_features, const ContrastSets* sets,
                                                  const std::vector<int>& ccl_labels, const LossWeights& w = {},
                                                  double tau = 1.0) {
  const std::size_t steps = head.steps();
  std::vector<Tensor<T>> bces, dices, clss;
  for (std::size_t s = 0; s < steps; ++s) {
    const auto cost = matching_cost(head.class_logits[s], head.mask_logits[s], gt, w);
    const auto match = hungarian_match(cost, head.class_logits[s].dim(0), gt.size());
    auto [b, d] = mask_losses(match, head.mask_logits[s], gt);
    bces.push_back(b);
    dices.push_back(d);
    clss.push_back(cls_loss(head.class_logits[s], match, gt));
  }
  auto average = [&](const std::vector<Tensor<T>>& v) {
    Tensor<T> acc = v[0];
    for (std::size_t i = 1; i < v.size(); ++i) acc = add(acc, v[i]);
    return scale(acc, T(1.0 / double(v.size())));
  };
  LossTerms<T> terms{average(bces), average(dices), average(clss), {}};
  if (w.ccl != 0.0 && sets) terms.ccl = ccl_loss(backbone_features, *sets, ccl_labels, tau);
  return total_loss(terms, w);
}

}  // namespace sympoint
