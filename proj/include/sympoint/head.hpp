#pragma once

// Masked-attention query decoder. Learned queries attend to the four
// coarsest pyramid levels in turn; the attention mask at each level comes
// from the previous mask prediction, downsampled to that level and
// thresholded.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sympoint/backbone.hpp"
#include "sympoint/nn.hpp"
#include "sympoint/spatial.hpp"

namespace sympoint {

enum class DownsampleMode { knn_interp, knn_max, knn_avg, bilinear_surrogate };

inline const char* downsample_name(DownsampleMode m) {
  switch (m) {
    case DownsampleMode::knn_interp: return "knn_interp";
    case DownsampleMode::knn_max: return "knn_max";
    case DownsampleMode::knn_avg: return "knn_avg";
    case DownsampleMode::bilinear_surrogate: return "bilinear_surrogate";
  }
  return "?";
}

inline DownsampleMode parse_downsample(const std::string& s) {
  if (s == "knn_interp" || s == "knn") return DownsampleMode::knn_interp;
  if (s == "knn_max" || s == "max") return DownsampleMode::knn_max;
  if (s == "knn_avg" || s == "avg") return DownsampleMode::knn_avg;
  if (s == "bilinear_surrogate" || s == "bilinear") return DownsampleMode::bilinear_surrogate;
  throw std::invalid_argument("unknown downsample mode '" + s + "'");
}

/// Number of level-0 neighbours used for level r: 4^r clamped to n0.
inline std::size_t mask_neighbors(std::size_t r, std::size_t n0, std::vector<std::string>* warnings = nullptr) {
  std::size_t k = 1;
  for (std::size_t i = 0; i < r && k <= n0; ++i) k *= 4;
  if (k > n0) {
    if (warnings)
      warnings->push_back("K=4^" + std::to_string(r) + " exceeds " + std::to_string(n0) + " points; clamped");
    k = n0;
  }
  return k;
}

/// Per-target source indices and weights that map an O x N0 mask to O x Nr.
struct MaskSampler {
  DownsampleMode mode = DownsampleMode::knn_interp;
  std::size_t targets = 0;
  std::size_t width = 0;
  std::vector<std::size_t> index;
  std::vector<double> weight;

  static MaskSampler build(DownsampleMode mode, const std::vector<Vec2>& coords0, const std::vector<Vec2>& coords_r,
                           std::size_t r, std::vector<std::string>* warnings = nullptr) {
    MaskSampler s;
    s.mode = mode;
    s.targets = coords_r.size();
    const std::size_t n0 = coords0.size();
    if (n0 == 0) throw std::invalid_argument("mask downsampling needs a nonempty level 0");
    if (mode == DownsampleMode::bilinear_surrogate) {
      // Linear interpolation along the primitive order, as a 1-D image
      // resize with half-pixel centers would do.
      s.width = 2;
      s.index.resize(s.targets * 2);
      s.weight.resize(s.targets * 2);
      const double ratio = double(n0) / double(std::max<std::size_t>(s.targets, 1));
      for (std::size_t t = 0; t < s.targets; ++t) {
        const double pos = std::clamp((double(t) + 0.5) * ratio - 0.5, 0.0, double(n0 - 1));
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, n0 - 1);
        const double frac = pos - double(lo);
        s.index[2 * t] = lo;
        s.index[2 * t + 1] = hi;
        s.weight[2 * t] = 1.0 - frac;
        s.weight[2 * t + 1] = frac;
      }
      return s;
    }
    const std::size_t k = mask_neighbors(r, n0, warnings);
    if (mode == DownsampleMode::knn_interp) {
      auto w = idw_weights(coords0, coords_r, k);
      s.width = w.width;
      s.index = std::move(w.index);
      s.weight = std::move(w.weight);
      return s;
    }
    const auto nn = knn_indices(coords0, coords_r, k);
    s.width = k;
    s.index.resize(s.targets * k);
    s.weight.assign(s.targets * k, 1.0 / double(k));
    for (std::size_t t = 0; t < s.targets; ++t)
      for (std::size_t j = 0; j < k; ++j) s.index[t * k + j] = nn[t][j];
    return s;
  }

  /// mask is rows x n0, row-major; result is rows x targets.
  std::vector<double> apply(const std::vector<double>& mask, std::size_t rows, std::size_t n0) const {
    std::vector<double> out(rows * targets, 0.0);
    for (std::size_t q = 0; q < rows; ++q) {
      const double* m = mask.data() + q * n0;
      for (std::size_t t = 0; t < targets; ++t) {
        double acc = mode == DownsampleMode::knn_max ? -std::numeric_limits<double>::infinity() : 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          const double v = m[index[t * width + j]];
          if (mode == DownsampleMode::knn_max) acc = std::max(acc, v);
          else acc += weight[t * width + j] * v;
        }
        out[q * targets + t] = acc;
      }
    }
    return out;
  }
};

/// Inverse-distance interpolation of level-0 mask values onto level-r
/// points over the K = 4^r nearest sources.
inline std::vector<double> knn_interpolate_mask(const std::vector<double>& mask, std::size_t rows,
                                                const std::vector<Vec2>& coords0, const std::vector<Vec2>& coords_r,
                                                std::size_t r, std::vector<std::string>* warnings = nullptr) {
  if (mask.size() != rows * coords0.size()) throw std::invalid_argument("mask shape does not match level 0");
  return MaskSampler::build(DownsampleMode::knn_interp, coords0, coords_r, r, warnings)
      .apply(mask, rows, coords0.size());
}

/// 0 where the mask is strictly above the threshold, kMaskedLogit elsewhere.
inline std::vector<double> threshold_attention_mask(const std::vector<double>& mask, double threshold = 0.5) {
  std::vector<double> a(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) a[i] = mask[i] > threshold ? 0.0 : kMaskedLogit;
  return a;
}

/// Rows with no visible entry are opened up completely.
inline void open_blind_rows(std::vector<double>& a, std::size_t rows, std::size_t cols) {
  for (std::size_t q = 0; q < rows; ++q) {
    auto* row = a.data() + q * cols;
    if (std::all_of(row, row + cols, [](double v) { return v <= kMaskedLogit; })) std::fill(row, row + cols, 0.0);
  }
}

struct HeadConfig {
  std::size_t num_queries = 16;
  std::size_t dim = 64;
  std::size_t layers = 3;
  bool share_weights = true;
  double mask_threshold = 0.5;
  DownsampleMode downsample = DownsampleMode::knn_interp;
  /// C; the class head has C + 1 outputs, the last being no-object.
  std::size_t num_classes = 1;
};

/// Masked cross-attention, then self-attention among queries, then a
/// feed-forward layer; each sublayer residual with a layer norm.
template <typename T>
struct QueryBlock {
  nn::Linear<T> fq, fk, fv;
  nn::LayerNorm<T> cross_norm;
  nn::Linear<T> sq, sk, sv, so;
  nn::LayerNorm<T> self_norm;
  nn::Mlp2<T> ffn;
  nn::LayerNorm<T> ffn_norm;

  QueryBlock() = default;
  QueryBlock(ParamStore<T>& store, const std::string& name, std::size_t d, Rng& rng)
      : fq(store, name + ".fq", d, d, rng),
        fk(store, name + ".fk", d, d, rng),
        fv(store, name + ".fv", d, d, rng),
        cross_norm(store, name + ".cross_norm", d),
        sq(store, name + ".sq", d, d, rng),
        sk(store, name + ".sk", d, d, rng),
        sv(store, name + ".sv", d, d, rng),
        so(store, name + ".so", d, d, rng),
        self_norm(store, name + ".self_norm", d),
        ffn(store, name + ".ffn", d, 2 * d, d, rng),
        ffn_norm(store, name + ".ffn_norm", d) {}

  /// softmax(A + Q K^T / sqrt(D)) V + X, before normalization.
  Tensor<T> cross_attention(const Tensor<T>& x, const Tensor<T>& query_pos, const Tensor<T>& features,
                            const std::vector<double>& attn_mask) const {
    const std::size_t d = x.dim(1);
    auto q = fq(query_pos.defined() ? add(x, query_pos) : x);
    auto logits = scale(matmul_nt(q, fk(features)), T(1.0 / std::sqrt(double(d))));
    if (!attn_mask.empty()) logits = add(logits, nn::constant<T>(logits.shape(), attn_mask));
    return add(matmul(softmax(logits, 1), fv(features)), x);
  }

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& query_pos, const Tensor<T>& features,
                       const std::vector<double>& attn_mask) const {
    const std::size_t d = x.dim(1);
    auto h = cross_norm(cross_attention(x, query_pos, features, attn_mask));
    auto hp = add(h, query_pos);
    auto att = softmax(scale(matmul_nt(sq(hp), sk(hp)), T(1.0 / std::sqrt(double(d)))), 1);
    h = self_norm(add(h, so(matmul(att, sv(h)))));
    return ffn_norm(add(h, ffn(h)));
  }
};

template <typename T>
struct HeadOutput {
  /// Per prediction step l = 0..4L: O x (C+1) class logits and O x N0 mask logits.
  std::vector<Tensor<T>> class_logits;
  std::vector<Tensor<T>> mask_logits;
  std::size_t updates = 0;
  std::vector<std::string> warnings;

  std::size_t steps() const { return class_logits.size(); }
  const Tensor<T>& final_classes() const { return class_logits.back(); }
  const Tensor<T>& final_masks() const { return mask_logits.back(); }
};

/// Row-wise softmax of class logits, in double.
template <typename T>
std::vector<double> class_probabilities(const Tensor<T>& logits) {
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<double> p(rows * cols);
  const auto v = logits.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, double(v[r * cols + c]));
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (p[r * cols + c] = std::exp(double(v[r * cols + c]) - mx));
    for (std::size_t c = 0; c < cols; ++c) p[r * cols + c] /= total;
  }
  return p;
}

template <typename T>
std::vector<double> mask_probabilities(const Tensor<T>& logits) {
  std::vector<double> p(logits.numel());
  const auto v = logits.values();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-double(v[i])));
  return p;
}

struct HeadRunOptions {
  /// Treat every predicted mask as 1 before downsampling.
  bool force_full_masks = false;
  /// Skip attention masking entirely (A = 0).
  bool disable_masking = false;
};

template <typename T>
class SpottingHead {
 public:
  SpottingHead() = default;
  SpottingHead(ParamStore<T>& store, const HeadConfig& cfg, const std::vector<std::size_t>& level_channels, Rng& rng)
      : cfg_(cfg) {
    if (level_channels.size() < 4) throw std::invalid_argument("head needs at least 4 pyramid levels");
    if (cfg.num_queries < 1 || cfg.dim < 1) throw std::invalid_argument("head needs queries and a positive width");
    const std::size_t d = cfg.dim;
    first_level_ = level_channels.size() - 4;
    for (std::size_t i = 0; i < 4; ++i)
      level_proj_.emplace_back(store, "head.level" + std::to_string(i), level_channels[first_level_ + i], d, rng);
    mask_proj_ = nn::Linear<T>(store, "head.mask_proj", level_channels[0], d, rng);
    queries_ = store.add("head.queries", nn::uniform_tensor<T>({cfg.num_queries, d}, 1.0, rng));
    query_pos_ = store.add("head.query_pos", nn::uniform_tensor<T>({cfg.num_queries, d}, 1.0, rng));
    out_norm_ = nn::LayerNorm<T>(store, "head.out_norm", d);
    class_fc_ = nn::Linear<T>(store, "head.class", d, cfg.num_classes + 1, rng);
    mask_mlp_ = nn::Mlp2<T>(store, "head.mask_mlp", d, d, d, rng);
    const std::size_t blocks = cfg.share_weights ? 4 : 4 * cfg.layers;
    for (std::size_t b = 0; b < blocks; ++b) blocks_.emplace_back(store, "head.block" + std::to_string(b), d, rng);
  }

  const HeadConfig& config() const { return cfg_; }

  /// Class logits and mask logits for query features x against F_mask.
  std::pair<Tensor<T>, Tensor<T>> predict(const Tensor<T>& x, const Tensor<T>& mask_features) const {
    auto h = out_norm_(x);
    return {class_fc_(h), matmul_nt(mask_mlp_(h), mask_features)};
  }

  HeadOutput<T> forward(const FeaturePyramid<T>& pyramid, const HeadRunOptions& opt = {}) const {
    const PyramidGeometry& g = *pyramid.geometry;
    if (pyramid.levels() < 4 || pyramid.levels() != first_level_ + 4)
      throw std::invalid_argument("pyramid level count does not match the head");
    HeadOutput<T> out;
    const std::size_t o = cfg_.num_queries, n0 = g.size(0);
    std::vector<Tensor<T>> feats(4);
    std::vector<MaskSampler> samplers(4);
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t r = first_level_ + i;
      feats[i] = level_proj_[i](pyramid.features[r]);
      samplers[i] = MaskSampler::build(cfg_.downsample, g.coords[0], g.coords[r], r, &out.warnings);
    }
    const auto mask_features = mask_proj_(pyramid.features[0]);
    Tensor<T> x = queries_;
    auto emit = [&](const Tensor<T>& q) {
      auto [cls, msk] = predict(q, mask_features);
      out.class_logits.push_back(cls);
      out.mask_logits.push_back(msk);
    };
    emit(x);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      for (std::size_t step = 0; step < 4; ++step) {
        const std::size_t i = 3 - step;  // coarse to fine
        std::vector<double> attn;
        if (!opt.disable_masking) {
          std::vector<double> m = opt.force_full_masks ? std::vector<double>(o * n0, 1.0)
                                                       : mask_probabilities(out.mask_logits.back());
          attn = threshold_attention_mask(samplers[i].apply(m, o, n0), cfg_.mask_threshold);
          open_blind_rows(attn, o, samplers[i].targets);
        }
        const auto& block = blocks_[cfg_.share_weights ? step : l * 4 + step];
        x = block(x, query_pos_, feats[i], attn);
        ++out.updates;
        emit(x);
      }
    }
    return out;
  }

 private:
  HeadConfig cfg_;
  std::size_t first_level_ = 0;
  std::vector<nn::Linear<T>> level_proj_;
  nn::Linear<T> mask_proj_;
  Tensor<T> queries_;
  Tensor<T> query_pos_;
  nn::LayerNorm<T> out_norm_;
  nn::Linear<T> class_fc_;
  nn::Mlp2<T> mask_mlp_;
  std::vector<QueryBlock<T>> blocks_;
};

/// Argmax assembly. class_probs is O x (C+1), mask_probs O x N; class
/// index c names categories[c], index C is no-object. Each point goes to
/// the kept query with the highest confidence x mask among those above the
/// threshold (ties: lowest query). Thing queries get per-class instance
/// ids in query order; stuff points carry instance -1.
inline PanopticPrediction assemble_panoptic(const std::vector<double>& class_probs, const std::vector<double>& mask_probs,
                                            std::size_t num_queries, std::size_t num_points,
                                            const std::vector<Category>& categories, const std::string& id = "",
                                            double threshold = 0.5) {
  const std::size_t c1 = categories.size() + 1;
  if (class_probs.size() != num_queries * c1) throw std::invalid_argument("class probabilities have the wrong shape");
  if (mask_probs.size() != num_queries * num_points) throw std::invalid_argument("mask probabilities have the wrong shape");
  std::vector<std::size_t> cls(num_queries);
  std::vector<double> conf(num_queries);
  for (std::size_t q = 0; q < num_queries; ++q) {
    const auto* row = class_probs.data() + q * c1;
    cls[q] = static_cast<std::size_t>(std::max_element(row, row + c1) - row);
    conf[q] = row[cls[q]];
  }
  std::vector<std::ptrdiff_t> owner(num_points, -1);
  for (std::size_t p = 0; p < num_points; ++p) {
    double best = -1.0;
    for (std::size_t q = 0; q < num_queries; ++q) {
      if (cls[q] + 1 == c1) continue;
      const double m = mask_probs[q * num_points + p];
      if (!(m > threshold)) continue;
      const double score = conf[q] * m;
      if (score > best) {
        best = score;
        owner[p] = static_cast<std::ptrdiff_t>(q);
      }
    }
  }
  std::vector<int> instance_of(num_queries, -1);
  std::vector<int> next(categories.size(), 0);
  std::vector<char> used(num_queries, 0);
  for (auto q : owner)
    if (q >= 0) used[static_cast<std::size_t>(q)] = 1;
  for (std::size_t q = 0; q < num_queries; ++q)
    if (used[q] && categories[cls[q]].is_thing) instance_of[q] = next[cls[q]]++;
  PanopticPrediction pred{id, std::vector<EntityLabel>(num_points)};
  for (std::size_t p = 0; p < num_points; ++p) {
    if (owner[p] < 0) continue;
    const auto q = static_cast<std::size_t>(owner[p]);
    pred.entities[p] = {categories[cls[q]].id, instance_of[q]};
  }
  return pred;
}

}  // namespace sympoint
