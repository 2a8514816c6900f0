#pragma once

// Symmetric point-transformer encoder/decoder over primitive points.
// Stage 0 of the encoder attends over kNN neighbours united with the
// primitive connection sets; every other stage uses plain kNN attention.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sympoint/conngraph.hpp"
#include "sympoint/nn.hpp"
#include "sympoint/points.hpp"
#include "sympoint/rng.hpp"
#include "sympoint/spatial.hpp"

namespace sympoint {

/// Large negative stand-in for -inf in additive attention masks.
inline constexpr double kMaskedLogit = -1e9;

struct BackboneConfig {
  std::vector<std::size_t> channels{32, 64, 128, 256};
  /// strides[0] is the level-0 ratio (always 1); strides[r] = N_r / N_{r-1}.
  std::vector<double> strides{1.0, 0.25, 0.25, 0.25};
  std::size_t k_nn = 8;
  bool use_acm = true;
  bool use_posenc = true;

  std::size_t stages() const { return channels.size(); }
  void validate() const {
    if (channels.empty()) throw std::invalid_argument("backbone needs at least one stage");
    if (strides.size() != channels.size()) throw std::invalid_argument("strides and channels differ in length");
    for (std::size_t r = 1; r < strides.size(); ++r)
      if (!(strides[r] > 0.0 && strides[r] <= 1.0)) throw std::invalid_argument("stride must be in (0, 1]");
    if (k_nn < 1) throw std::invalid_argument("k_nn must be >= 1");
  }
};

class BackboneInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Weight-independent geometry of one document: level coordinates, sampling
/// maps, neighbourhoods, and interpolation matrices.
struct PyramidGeometry {
  std::vector<std::vector<Vec2>> coords;
  std::vector<std::vector<std::size_t>> parent_index;  // level r -> index in level r-1
  std::vector<std::vector<std::size_t>> source_index;  // level r -> index in level 0
  std::vector<std::vector<std::vector<std::size_t>>> knn_lists;  // per level, self first
  std::vector<std::vector<std::size_t>> acm_lists;                // level 0: kNN ∪ connections
  std::vector<Neighborhood> attention;     // per level; level 0 uses acm_lists when enabled
  std::vector<Neighborhood> decoder_attention;
  std::vector<std::vector<double>> attention_rel;  // per level, P x 2, scaled offsets x_i - x_j
  std::vector<std::vector<double>> decoder_rel;
  std::vector<Neighborhood> down;                   // level r >= 1: neighbours in level r-1
  std::vector<std::vector<double>> down_rel;
  std::vector<std::vector<double>> up_dense;        // level r < R-1: N_r x N_{r+1}

  std::size_t levels() const { return coords.size(); }
  std::size_t size(std::size_t r) const { return coords[r].size(); }
};

inline std::vector<std::size_t> level_sizes(std::size_t n, const BackboneConfig& cfg) {
  std::vector<std::size_t> sizes{n};
  for (std::size_t r = 1; r < cfg.stages(); ++r)
    sizes.push_back(static_cast<std::size_t>(std::ceil(double(sizes.back()) * cfg.strides[r] - 1e-9)));
  return sizes;
}

namespace detail {

/// Self first, then the remaining k-1 nearest by (distance, index).
inline std::vector<std::vector<std::size_t>> self_knn(const std::vector<Vec2>& pts, std::size_t k) {
  auto nn = knn_indices(pts, pts, std::min(k + 1, pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    auto& row = nn[i];
    row.erase(std::remove(row.begin(), row.end(), i), row.end());
    row.insert(row.begin(), i);
    row.resize(std::min(k, pts.size()));
  }
  return nn;
}

inline std::vector<double> rel_offsets(const std::vector<Vec2>& centers, const std::vector<Vec2>& sources,
                                       const Neighborhood& nb, double radius) {
  std::vector<double> rel(nb.rows * nb.width * 2);
  for (std::size_t p = 0; p < nb.rows * nb.width; ++p) {
    const Vec2 d = centers[nb.center[p]] - sources[nb.index[p]];
    rel[2 * p] = d.x / radius;
    rel[2 * p + 1] = d.y / radius;
  }
  return rel;
}

}  // namespace detail

/// Unions kNN lists with connection lists, keeping kNN order and appending
/// new connections in index order.
inline std::vector<std::vector<std::size_t>> merge_neighborhoods(const std::vector<std::vector<std::size_t>>& knn,
                                                                 const ConnectionGraph& conn) {
  auto out = knn;
  for (std::size_t i = 0; i < out.size() && i < conn.size(); ++i) {
    for (std::size_t j : conn.neighbors[i])
      if (std::find(out[i].begin(), out[i].end(), j) == out[i].end()) out[i].push_back(j);
  }
  return out;
}

inline PyramidGeometry build_geometry(const std::vector<Vec2>& positions, const ConnectionGraph* connections,
                                      const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = positions.size();
  if (n < cfg.stages()) {
    throw BackboneInputError("document has " + std::to_string(n) + " primitives; the " +
                             std::to_string(cfg.stages()) + "-stage schedule needs at least " +
                             std::to_string(cfg.stages()));
  }
  PyramidGeometry g;
  const auto sizes = level_sizes(n, cfg);
  g.coords.push_back(positions);
  g.parent_index.emplace_back();
  g.source_index.emplace_back(n);
  std::iota(g.source_index[0].begin(), g.source_index[0].end(), std::size_t{0});
  for (std::size_t r = 1; r < sizes.size(); ++r) {
    const auto& prev = g.coords[r - 1];
    Rng rng(derive_seed(seed, 0x5f5, r));
    const auto start = static_cast<std::size_t>(rng.below(prev.size()));
    auto pick = farthest_point_sample(prev, sizes[r], start);
    std::vector<Vec2> c;
    std::vector<std::size_t> src;
    for (std::size_t i : pick) {
      c.push_back(prev[i]);
      src.push_back(g.source_index[r - 1][i]);
    }
    g.coords.push_back(std::move(c));
    g.parent_index.push_back(std::move(pick));
    g.source_index.push_back(std::move(src));
  }
  const std::size_t levels = g.levels();
  g.knn_lists.resize(levels);
  g.attention.resize(levels);
  g.decoder_attention.resize(levels);
  g.attention_rel.resize(levels);
  g.decoder_rel.resize(levels);
  g.down.resize(levels);
  g.down_rel.resize(levels);
  g.up_dense.resize(levels);
  for (std::size_t r = 0; r < levels; ++r) {
    const auto& c = g.coords[r];
    g.knn_lists[r] = detail::self_knn(c, cfg.k_nn);
    const double radius = neighborhood_radius(c, c, g.knn_lists[r]);
    g.decoder_attention[r] = Neighborhood::from_lists(g.knn_lists[r]);
    g.decoder_rel[r] = detail::rel_offsets(c, c, g.decoder_attention[r], radius);
    if (r == 0 && cfg.use_acm && connections) {
      g.acm_lists = merge_neighborhoods(g.knn_lists[0], *connections);
      g.attention[0] = Neighborhood::from_lists(g.acm_lists);
      g.attention_rel[0] = detail::rel_offsets(c, c, g.attention[0], radius);
    } else {
      if (r == 0) g.acm_lists = g.knn_lists[0];
      g.attention[r] = g.decoder_attention[r];
      g.attention_rel[r] = g.decoder_rel[r];
    }
    if (r >= 1) {
      const auto& prev = g.coords[r - 1];
      auto lists = knn_indices(prev, c, cfg.k_nn);
      const double rr = neighborhood_radius(c, prev, lists);
      g.down[r] = Neighborhood::from_lists(lists);
      // Neighborhood::center holds row ids; offsets are measured from level-r points.
      std::vector<double> rel(g.down[r].rows * g.down[r].width * 2);
      for (std::size_t p = 0; p < g.down[r].rows * g.down[r].width; ++p) {
        const Vec2 d = c[g.down[r].center[p]] - prev[g.down[r].index[p]];
        rel[2 * p] = d.x / rr;
        rel[2 * p + 1] = d.y / rr;
      }
      g.down_rel[r] = std::move(rel);
    }
  }
  for (std::size_t r = 0; r + 1 < levels; ++r) {
    const auto w = idw_weights(g.coords[r + 1], g.coords[r], 3);
    std::vector<double> dense(g.size(r) * g.size(r + 1), 0.0);
    for (std::size_t i = 0; i < w.rows; ++i)
      for (std::size_t k = 0; k < w.width; ++k) dense[i * g.size(r + 1) + w.index[i * w.width + k]] += w.weight[i * w.width + k];
    g.up_dense[r] = std::move(dense);
  }
  return g;
}

/// Network input per point: position relative to the canvas center over the
/// diagonal, angle / 2pi, length over the diagonal, kind one-hot.
template <typename T>
Tensor<T> input_features(const PointSet& points, double width, double height) {
  const double diag = std::hypot(width, height);
  std::vector<T> v;
  v.reserve(points.size() * 8);
  for (const auto& p : points.points) {
    v.push_back(T((p.position.x - width / 2.0) / diag));
    v.push_back(T((p.position.y - height / 2.0) / diag));
    v.push_back(T(p.feature[0] / kTwoPi));
    v.push_back(T(p.feature[1] / diag));
    for (std::size_t k = 2; k < 6; ++k) v.push_back(T(p.feature[k]));
  }
  return Tensor<T>({points.size(), 8}, std::move(v));
}

template <typename T>
Tensor<T> neighborhood_mask(const Neighborhood& nb, std::size_t channels) {
  std::vector<T> m(nb.rows * nb.width * channels, T(0));
  for (std::size_t p = 0; p < nb.rows * nb.width; ++p)
    if (!nb.valid[p]) std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(p * channels), channels, T(kMaskedLogit));
  return Tensor<T>({nb.rows, nb.width, channels}, std::move(m));
}

/// Vector attention over padded neighbourhoods:
/// out_i = sum_j softmax_j(omega(q_i - k_j + pe_ij)) ⊙ (v_j + pe_ij).
/// `pe` is P x C (P = rows * width) or undefined to omit position encoding.
template <typename T, typename Omega>
Tensor<T> vector_attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& pe,
                                const Neighborhood& nb, Omega&& omega) {
  const std::size_t c = q.dim(1);
  auto qg = gather_rows(q, std::span<const std::size_t>(nb.center));
  auto kg = gather_rows(k, std::span<const std::size_t>(nb.index));
  auto vg = gather_rows(v, std::span<const std::size_t>(nb.index));
  auto rel = sub(qg, kg);
  if (pe.defined()) {
    rel = add(rel, pe);
    vg = add(vg, pe);
  }
  auto logits = reshape(omega(rel), {nb.rows, nb.width, c});
  const bool padded = std::find(nb.valid.begin(), nb.valid.end(), 0) != nb.valid.end();
  if (padded) logits = add(logits, neighborhood_mask<T>(nb, c));
  auto weights = softmax(logits, 1);
  return sum(mul(weights, reshape(vg, {nb.rows, nb.width, c})), 1);
}

/// q/k/v projections, relational weight encoding omega (2-layer MLP), and
/// relative position encoding (2-layer MLP on scaled offsets).
template <typename T>
struct VectorAttention {
  nn::Linear<T> to_q, to_k, to_v;
  nn::Mlp2<T> omega;
  nn::Mlp2<T> posenc;
  bool use_posenc = true;

  VectorAttention() = default;
  VectorAttention(ParamStore<T>& store, const std::string& name, std::size_t c, bool posenc_on, Rng& rng)
      : to_q(store, name + ".q", c, c, rng),
        to_k(store, name + ".k", c, c, rng),
        to_v(store, name + ".v", c, c, rng),
        omega(store, name + ".omega", c, c, c, rng),
        posenc(store, name + ".posenc", 2, c, c, rng),
        use_posenc(posenc_on) {}

  Tensor<T> operator()(const Tensor<T>& x, const Neighborhood& nb, const std::vector<double>& rel) const {
    Tensor<T> pe;
    if (use_posenc) pe = posenc(nn::constant<T>({nb.rows * nb.width, 2}, rel));
    return vector_attention_core(to_q(x), to_k(x), to_v(x), pe, nb, [this](const Tensor<T>& r) { return omega(r); });
  }
};

/// Residual point-transformer block: linear, attention, linear, with
/// layer norms and ReLUs.
template <typename T>
struct PointBlock {
  nn::Linear<T> lin1, lin3;
  nn::LayerNorm<T> norm1, norm2, norm3;
  VectorAttention<T> attention;

  PointBlock() = default;
  PointBlock(ParamStore<T>& store, const std::string& name, std::size_t c, bool posenc, Rng& rng)
      : lin1(store, name + ".lin1", c, c, rng, false),
        lin3(store, name + ".lin3", c, c, rng, false),
        norm1(store, name + ".norm1", c),
        norm2(store, name + ".norm2", c),
        norm3(store, name + ".norm3", c),
        attention(store, name + ".attn", c, posenc, rng) {}

  Tensor<T> operator()(const Tensor<T>& x, const Neighborhood& nb, const std::vector<double>& rel) const {
    auto h = relu(norm1(lin1(x)));
    h = relu(norm2(attention(h, nb, rel)));
    return relu(add(x, norm3(lin3(h))));
  }
};

template <typename T>
struct TransitionDown {
  nn::Linear<T> lin;
  nn::LayerNorm<T> norm;

  TransitionDown() = default;
  TransitionDown(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : lin(store, name + ".lin", in + 2, out, rng, false), norm(store, name + ".norm", out) {}

  Tensor<T> operator()(const Tensor<T>& prev, const Neighborhood& nb, const std::vector<double>& rel) const {
    auto feats = gather_rows(prev, std::span<const std::size_t>(nb.index));
    auto offsets = nn::constant<T>({nb.rows * nb.width, 2}, rel);
    auto h = relu(norm(lin(concat<T>({offsets, feats}, 1))));
    return max(reshape(h, {nb.rows, nb.width, lin.out_features()}), 1);
  }
};

template <typename T>
struct TransitionUp {
  nn::Linear<T> coarse, skip;
  nn::LayerNorm<T> coarse_norm, skip_norm;

  TransitionUp() = default;
  TransitionUp(ParamStore<T>& store, const std::string& name, std::size_t coarse_c, std::size_t fine_c, Rng& rng)
      : coarse(store, name + ".coarse", coarse_c, fine_c, rng, false),
        skip(store, name + ".skip", fine_c, fine_c, rng, false),
        coarse_norm(store, name + ".coarse_norm", fine_c),
        skip_norm(store, name + ".skip_norm", fine_c) {}

  Tensor<T> operator()(const Tensor<T>& coarse_feats, const Tensor<T>& fine_skip, const std::vector<double>& dense,
                       std::size_t fine_n) const {
    auto c = relu(coarse_norm(coarse(coarse_feats)));
    auto interp = matmul(nn::constant<T>({fine_n, coarse_feats.dim(0)}, dense), c);
    return add(interp, relu(skip_norm(skip(fine_skip))));
  }
};

template <typename T>
struct FeaturePyramid {
  /// Decoder output per level, N_r x C_r.
  std::vector<Tensor<T>> features;
  /// Immediate output of the first encoder stage.
  Tensor<T> stage0;
  const PyramidGeometry* geometry = nullptr;

  std::size_t levels() const { return features.size(); }
};

template <typename T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(ParamStore<T>& store, const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const auto& ch = cfg.channels;
    in_proj_ = nn::Linear<T>(store, "backbone.in_proj", 8, ch[0], rng);
    in_norm_ = nn::LayerNorm<T>(store, "backbone.in_norm", ch[0]);
    for (std::size_t r = 0; r < ch.size(); ++r) {
      const std::string s = std::to_string(r);
      if (r > 0) down_.emplace_back(store, "backbone.down" + s, ch[r - 1], ch[r], rng);
      else down_.emplace_back();
      encoder_.emplace_back(store, "backbone.enc" + s, ch[r], cfg.use_posenc, rng);
    }
    for (std::size_t r = ch.size(); r-- > 0;) {
      const std::string s = std::to_string(r);
      decoder_.emplace_back(store, "backbone.dec" + s, ch[r], cfg.use_posenc, rng);
      if (r + 1 < ch.size()) up_.emplace_back(store, "backbone.up" + s, ch[r + 1], ch[r], rng);
      else up_.emplace_back();
    }
    std::reverse(decoder_.begin(), decoder_.end());
    std::reverse(up_.begin(), up_.end());
  }

  const BackboneConfig& config() const { return cfg_; }

  FeaturePyramid<T> forward(const PyramidGeometry& g, const Tensor<T>& input) const {
    const std::size_t levels = g.levels();
    if (levels != cfg_.stages()) throw std::invalid_argument("geometry built for a different stage count");
    std::vector<Tensor<T>> enc(levels);
    FeaturePyramid<T> out;
    out.geometry = &g;
    auto x = relu(in_norm_(in_proj_(input)));
    enc[0] = encoder_[0](x, g.attention[0], g.attention_rel[0]);
    out.stage0 = enc[0];
    for (std::size_t r = 1; r < levels; ++r) {
      auto h = down_[r](enc[r - 1], g.down[r], g.down_rel[r]);
      enc[r] = encoder_[r](h, g.attention[r], g.attention_rel[r]);
    }
    out.features.resize(levels);
    out.features[levels - 1] = decoder_[levels - 1](enc[levels - 1], g.decoder_attention[levels - 1], g.decoder_rel[levels - 1]);
    for (std::size_t r = levels - 1; r-- > 0;) {
      auto h = up_[r](out.features[r + 1], enc[r], g.up_dense[r], g.size(r));
      out.features[r] = decoder_[r](h, g.decoder_attention[r], g.decoder_rel[r]);
    }
    return out;
  }

 private:
  BackboneConfig cfg_;
  nn::Linear<T> in_proj_;
  nn::LayerNorm<T> in_norm_;
  std::vector<TransitionDown<T>> down_;
  std::vector<PointBlock<T>> encoder_;
  std::vector<PointBlock<T>> decoder_;
  std::vector<TransitionUp<T>> up_;
};

/// Inverse-distance interpolation of coarse features onto fine points
/// (3 nearest; exact matches copy).
template <typename V>
std::vector<V> upsample_interpolate(const std::vector<V>& coarse, std::size_t channels,
                                    const std::vector<Vec2>& coarse_coords, const std::vector<Vec2>& fine_coords) {
  return idw_weights(coarse_coords, fine_coords, 3).apply(coarse, channels);
}

}  // namespace sympoint
