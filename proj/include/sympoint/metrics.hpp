#pragma once

// Panoptic quality over primitive segments with length-weighted IoU, and
// entity-level F1 / length-weighted F1.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <tuple>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "sympoint/vgio.hpp"

namespace sympoint {

struct SymbolSegment {
  int label = 0;
  int instance = -1;
  /// Sorted member entity indices.
  std::vector<std::size_t> members;
};

/// Groups labelled entities into segments: thing entities by (class,
/// instance), stuff entities by class alone. Background is skipped.
/// Segments come out ordered by (label, instance).
inline std::vector<SymbolSegment> collect_segments(const std::vector<EntityLabel>& labels,
                                                   const std::vector<Category>& categories) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].semantic) continue;
    const int l = *labels[i].semantic;
    bool thing = false;
    for (const auto& c : categories)
      if (c.id == l) thing = c.is_thing;
    groups[{l, thing ? labels[i].instance : -1}].push_back(i);
  }
  std::vector<SymbolSegment> out;
  for (auto& [key, members] : groups) out.push_back({key.first, key.second, std::move(members)});
  return out;
}

/// Length-weighted IoU: sum over the intersection of log(1 + L(e)) over the
/// same sum over the union.
inline double primitive_iou(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gt,
                            const std::vector<double>& lengths) {
  double inter = 0.0, uni = 0.0;
  std::size_t i = 0, j = 0;
  auto w = [&](std::size_t e) { return std::log1p(lengths.at(e)); };
  while (i < pred.size() || j < gt.size()) {
    if (j == gt.size() || (i < pred.size() && pred[i] < gt[j])) {
      uni += w(pred[i++]);
    } else if (i == pred.size() || gt[j] < pred[i]) {
      uni += w(gt[j++]);
    } else {
      inter += w(pred[i]);
      uni += w(pred[i]);
      ++i;
      ++j;
    }
  }
  return uni > 0.0 ? inter / uni : 0.0;
}

struct SegmentMatch {
  struct Pair {
    std::size_t pred;
    std::size_t gt;
    double iou;
  };
  std::vector<Pair> tp;
  std::vector<std::size_t> fp;  // unmatched predicted segments
  std::vector<std::size_t> fn;  // unmatched ground-truth segments
};

/// Same label and IoU strictly above 0.5. Such matches are unique, so a
/// greedy scan is exact.
inline SegmentMatch match_segments(const std::vector<SymbolSegment>& pred, const std::vector<SymbolSegment>& gt,
                                   const std::vector<double>& lengths) {
  SegmentMatch m;
  std::vector<char> taken(gt.size(), 0);
  for (std::size_t p = 0; p < pred.size(); ++p) {
    bool hit = false;
    for (std::size_t g = 0; g < gt.size() && !hit; ++g) {
      if (taken[g] || gt[g].label != pred[p].label) continue;
      const double iou = primitive_iou(pred[p].members, gt[g].members, lengths);
      if (iou > 0.5) {
        m.tp.push_back({p, g, iou});
        taken[g] = 1;
        hit = true;
      }
    }
    if (!hit) m.fp.push_back(p);
  }
  for (std::size_t g = 0; g < gt.size(); ++g)
    if (!taken[g]) m.fn.push_back(g);
  // ground-truth order, so IoU sums do not depend on predicted instance ids
  std::sort(m.tp.begin(), m.tp.end(), [](const auto& a, const auto& b) { return a.gt < b.gt; });
  return m;
}

struct QualityCounts {
  double tp = 0, fp = 0, fn = 0;
  double iou_sum = 0.0;

  double rq() const {
    const double d = tp + 0.5 * fp + 0.5 * fn;
    return d > 0 ? tp / d : 0.0;
  }
  double sq() const { return tp > 0 ? iou_sum / tp : 0.0; }
  double pq() const { return sq() * rq(); }
  QualityCounts& operator+=(const QualityCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    iou_sum += o.iou_sum;
    return *this;
  }
};

struct PanopticScore {
  double pq = 0.0, sq = 0.0, rq = 0.0;
  QualityCounts counts;
};

/// RQ = TP / (TP + FP/2 + FN/2), SQ = mean TP IoU, PQ = SQ * RQ; all zero
/// when there is nothing to count.
inline PanopticScore panoptic_quality(const std::vector<double>& tp_ious, double fp, double fn) {
  QualityCounts c;
  c.tp = double(tp_ious.size());
  c.fp = fp;
  c.fn = fn;
  for (double v : tp_ious) c.iou_sum += v;
  return {c.pq(), c.sq(), c.rq(), c};
}

inline PanopticScore score_from_counts(const QualityCounts& c) { return {c.pq(), c.sq(), c.rq(), c}; }

struct F1Counts {
  double tp = 0, pred_pos = 0, gt_pos = 0;
  double f1() const {
    const double p = pred_pos > 0 ? tp / pred_pos : 0.0;
    const double r = gt_pos > 0 ? tp / gt_pos : 0.0;
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  F1Counts& operator+=(const F1Counts& o) {
    tp += o.tp;
    pred_pos += o.pred_pos;
    gt_pos += o.gt_pos;
    return *this;
  }
};

/// Micro-averaged F1 over non-background entities (count and length weighted).
inline std::pair<F1Counts, F1Counts> semantic_f1_counts(const std::vector<std::optional<int>>& pred,
                                                        const std::vector<std::optional<int>>& gt,
                                                        const std::vector<double>& lengths) {
  if (pred.size() != gt.size() || lengths.size() != gt.size())
    throw std::invalid_argument("semantic_f1: label and length sequences differ in size");
  F1Counts plain, weighted;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double l = lengths[i];
    if (pred[i]) {
      plain.pred_pos += 1;
      weighted.pred_pos += l;
    }
    if (gt[i]) {
      plain.gt_pos += 1;
      weighted.gt_pos += l;
    }
    if (pred[i] && gt[i] && *pred[i] == *gt[i]) {
      plain.tp += 1;
      weighted.tp += l;
    }
  }
  return {plain, weighted};
}

inline std::pair<double, double> semantic_f1(const std::vector<std::optional<int>>& pred,
                                             const std::vector<std::optional<int>>& gt,
                                             const std::vector<double>& lengths) {
  const auto [plain, weighted] = semantic_f1_counts(pred, gt, lengths);
  return {plain.f1(), weighted.f1()};
}

/// Poolable per-document tallies.
struct DocumentScore {
  QualityCounts overall;
  std::map<int, QualityCounts> per_class;
  F1Counts f1, wf1;

  DocumentScore& operator+=(const DocumentScore& o) {
    overall += o.overall;
    for (const auto& [k, v] : o.per_class) per_class[k] += v;
    f1 += o.f1;
    wf1 += o.wf1;
    return *this;
  }
};

inline std::vector<double> entity_lengths(const Document& doc) {
  std::vector<double> l;
  l.reserve(doc.primitives.size());
  for (const auto& p : doc.primitives) l.push_back(p.arc_length);
  return l;
}

inline DocumentScore score_document(const Document& doc, const PanopticPrediction& pred) {
  if (pred.entities.size() != doc.primitives.size())
    throw std::invalid_argument("prediction for '" + doc.id + "' covers " + std::to_string(pred.entities.size()) +
                                " of " + std::to_string(doc.primitives.size()) + " primitives");
  const auto lengths = entity_lengths(doc);
  const auto gt_labels = ground_truth_labels(doc).entities;
  const auto ps = collect_segments(pred.entities, doc.categories);
  const auto gs = collect_segments(gt_labels, doc.categories);
  const auto m = match_segments(ps, gs, lengths);
  DocumentScore s;
  for (const auto& c : doc.categories) s.per_class[c.id];
  for (const auto& t : m.tp) {
    s.overall.tp += 1;
    s.overall.iou_sum += t.iou;
    s.per_class[gs[t.gt].label].tp += 1;
    s.per_class[gs[t.gt].label].iou_sum += t.iou;
  }
  for (auto p : m.fp) {
    s.overall.fp += 1;
    s.per_class[ps[p].label].fp += 1;
  }
  for (auto g : m.fn) {
    s.overall.fn += 1;
    s.per_class[gs[g].label].fn += 1;
  }
  std::vector<std::optional<int>> pl, gl;
  for (const auto& e : pred.entities) pl.push_back(e.semantic);
  for (const auto& e : gt_labels) gl.push_back(e.semantic);
  std::tie(s.f1, s.wf1) = semantic_f1_counts(pl, gl, lengths);
  return s;
}

/// Pools counts over documents in order, then applies the PQ formulas.
inline DocumentScore aggregate_scores(const std::vector<DocumentScore>& docs) {
  DocumentScore total;
  for (const auto& d : docs) total += d;
  return total;
}

inline nlohmann::json metrics_report(const DocumentScore& s, const std::vector<Category>& categories,
                                     std::size_t documents) {
  nlohmann::json j;
  const auto o = score_from_counts(s.overall);
  j["documents"] = documents;
  j["PQ"] = o.pq;
  j["SQ"] = o.sq;
  j["RQ"] = o.rq;
  j["F1"] = s.f1.f1();
  j["wF1"] = s.wf1.f1();
  j["TP"] = s.overall.tp;
  j["FP"] = s.overall.fp;
  j["FN"] = s.overall.fn;
  auto rows = nlohmann::json::array();
  for (const auto& c : categories) {
    const auto it = s.per_class.find(c.id);
    const QualityCounts q = it == s.per_class.end() ? QualityCounts{} : it->second;
    rows.push_back({{"id", c.id},
                    {"name", c.name},
                    {"is_thing", c.is_thing},
                    {"PQ", q.pq()},
                    {"SQ", q.sq()},
                    {"RQ", q.rq()},
                    {"TP", q.tp},
                    {"FP", q.fp},
                    {"FN", q.fn}});
  }
  j["per_class"] = rows;
  return j;
}

}  // namespace sympoint
