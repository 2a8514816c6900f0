#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sympoint/head.hpp"
#include "oracles.hpp"
#include "testing.hpp"

using namespace sympoint;
using sympoint::testing::random_tensor;
using TD = Tensor<double>;

namespace {

std::vector<Vec2> random_points(Rng& rng, std::size_t n) {
  std::vector<Vec2> p(n);
  for (auto& v : p) v = {rng.uniform(0, 10), rng.uniform(0, 10)};
  return p;
}

std::vector<Category> two_classes() {
  return {{1, "door", true, "#ff0000"}, {2, "wall", false, "#00ff00"}};
}

struct ToyPyramid {
  PyramidGeometry geometry;
  FeaturePyramid<double> pyramid;
  std::vector<std::size_t> channels{5, 6, 7, 8};
};

ToyPyramid toy_pyramid(Rng& rng, std::size_t n) {
  ToyPyramid t;
  BackboneConfig cfg;
  cfg.channels = t.channels;
  t.geometry = build_geometry(random_points(rng, n), nullptr, cfg, 1);
  for (std::size_t r = 0; r < 4; ++r)
    t.pyramid.features.push_back(random_tensor({t.geometry.size(r), t.channels[r]}, rng));
  return t;
}

}  // namespace

TEST(MaskInterpolation, WorkedExamples) {
  // distances 1 and 3 to values 1 and 0
  const std::vector<Vec2> src{{0, 0}, {4, 0}}, dst{{1, 0}};
  const auto v = knn_interpolate_mask({1.0, 0.0}, 1, src, dst, 1);  // K = 4, clamped to 2
  EXPECT_DOUBLE_EQ(v[0], 0.75);
  EXPECT_DOUBLE_EQ(knn_interpolate_mask({1.0, 0.0}, 1, src, {{2, 0}}, 1)[0], 0.5);
  // r = 0 gives K = 1: the nearest source value
  EXPECT_DOUBLE_EQ(knn_interpolate_mask({0.2, 0.9}, 1, src, {{3.5, 1}}, 0)[0], 0.9);
}

TEST(MaskInterpolation, ClampWarnsWhenKExceedsLevelZero) {
  std::vector<std::string> warnings;
  EXPECT_EQ(mask_neighbors(2, 10, &warnings), 10u);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(mask_neighbors(1, 10, &warnings), 4u);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(MaskInterpolation, MatchesBruteForceOracleAndIsConvex) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n0 = 5 + rng.below(60), nt = 1 + rng.below(20), rows = 1 + rng.below(3), r = rng.below(4);
    auto src = random_points(rng, n0);
    auto dst = random_points(rng, nt);
    // some targets coincide with sources to exercise the exact-match rule
    for (std::size_t t = 0; t < nt; t += 3) dst[t] = src[rng.below(n0)];
    std::vector<double> mask(rows * n0);
    for (auto& m : mask) m = rng.uniform();
    const std::size_t k = std::min<std::size_t>(std::size_t(1) << (2 * r), n0);
    const auto got = knn_interpolate_mask(mask, rows, src, dst, r);
    const auto want = oracle::knn_interp(mask, rows, src, dst, k);
    const double lo = *std::min_element(mask.begin(), mask.end()), hi = *std::max_element(mask.begin(), mask.end());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_NEAR(got[i], want[i], 1e-12);
      EXPECT_GE(got[i], lo - 1e-12);
      EXPECT_LE(got[i], hi + 1e-12);
    }
  }
}

TEST(MaskInterpolation, BilinearSurrogateInterpolatesAlongIndex) {
  const std::vector<Vec2> src(4), dst(2);
  const auto s = MaskSampler::build(DownsampleMode::bilinear_surrogate, src, dst, 1);
  // half-pixel centres: targets sit at source positions 0.5 and 2.5
  const auto v = s.apply({0.0, 1.0, 2.0, 3.0}, 1, 4);
  EXPECT_DOUBLE_EQ(v[0], 0.5);
  EXPECT_DOUBLE_EQ(v[1], 2.5);
}

TEST(AttentionMask, StrictThreshold) {
  const auto a = threshold_attention_mask({0.6, 0.5, 0.0, 1.0});
  EXPECT_EQ(a[0], 0.0);
  EXPECT_EQ(a[1], kMaskedLogit);
  EXPECT_EQ(a[2], kMaskedLogit);
  EXPECT_EQ(a[3], 0.0);
  // re-thresholding a {0,1} mask reproduces it
  std::vector<double> binary;
  for (double v : a) binary.push_back(v == 0.0 ? 1.0 : 0.0);
  EXPECT_EQ(threshold_attention_mask(binary), a);
  auto blind = threshold_attention_mask({0.1, 0.2, 0.9, 0.1});
  open_blind_rows(blind, 2, 2);
  EXPECT_EQ(blind, (std::vector<double>{0.0, 0.0, 0.0, kMaskedLogit}));
}

TEST(QueryUpdate, CrossAttentionMaskIdentities) {
  Rng rng(2);
  ParamStore<double> store;
  QueryBlock<double> block(store, "b", 4, rng);
  const auto x = random_tensor({2, 4}, rng), f = random_tensor({3, 4}, rng);
  const auto plain = block.cross_attention(x, TD(), f, {});
  const auto zeros = block.cross_attention(x, TD(), f, std::vector<double>(6, 0.0));
  for (std::size_t i = 0; i < plain.numel(); ++i) EXPECT_EQ(plain[i], zeros[i]);
  // only key 1 visible: output = V_1 + X
  const std::vector<double> one{kMaskedLogit, 0, kMaskedLogit, kMaskedLogit, 0, kMaskedLogit};
  const auto y = block.cross_attention(x, TD(), f, one);
  const auto v = block.fv(f);
  for (std::size_t q = 0; q < 2; ++q)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y.at(q, c), v.at(1, c) + x.at(q, c), 1e-12);
}

TEST(QueryUpdate, HandSetSingleQueryTwoKeys) {
  Rng rng(3);
  ParamStore<double> store;
  QueryBlock<double> block(store, "b", 1, rng);
  // f_Q, f_K, f_V as scalars: q = 2x, k = f, v = 3f + 1
  block.fq.weight.mutable_values()[0] = 2;
  block.fk.weight.mutable_values()[0] = 1;
  block.fv.weight.mutable_values()[0] = 3;
  block.fv.bias.mutable_values()[0] = 1;
  const TD x({1, 1}, {0.5}), f({2, 1}, {1.0, -1.0});
  const auto y = block.cross_attention(x, TD(), f, {});
  // logits (1, -1); softmax weights e/(e+1/e), 1/e / (e + 1/e)
  const double e = std::exp(1.0), w0 = e / (e + 1 / e);
  EXPECT_NEAR(y[0], w0 * 4 + (1 - w0) * -2 + 0.5, 1e-12);
}

TEST(SpottingHead, PredictionShapesAndRanges) {
  Rng rng(4);
  auto toy = toy_pyramid(rng, 40);
  toy.pyramid.geometry = &toy.geometry;
  HeadConfig cfg;
  cfg.num_queries = 3;
  cfg.dim = 4;
  cfg.num_classes = 2;
  ParamStore<double> store;
  SpottingHead<double> head(store, cfg, toy.channels, rng);
  const auto out = head.forward(toy.pyramid);
  EXPECT_EQ(out.steps(), 1 + 4 * cfg.layers);
  for (std::size_t s = 0; s < out.steps(); ++s) {
    const auto p = class_probabilities(out.class_logits[s]);
    for (std::size_t q = 0; q < 3; ++q) EXPECT_NEAR(p[q * 3] + p[q * 3 + 1] + p[q * 3 + 2], 1.0, 1e-12);
    for (double m : mask_probabilities(out.mask_logits[s])) {
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, 1.0);
    }
  }
  // zero mask logits give 0.5 everywhere
  EXPECT_EQ(mask_probabilities(TD({1, 2}, {0, 0})), (std::vector<double>{0.5, 0.5}));
  // predict yields O x (C+1) class logits and O x N mask logits
  const auto xq = random_tensor({3, 4}, rng), fm = random_tensor({5, 4}, rng);
  const auto [cls, msk] = head.predict(xq, fm);
  EXPECT_EQ(cls.shape(), (Shape{3, 3}));
  EXPECT_EQ(msk.shape(), (Shape{3, 5}));
}

TEST(SpottingHead, UpdateCountsAndSharedParameters) {
  Rng rng(5);
  auto toy = toy_pyramid(rng, 40);
  toy.pyramid.geometry = &toy.geometry;
  std::size_t shared_params = 0;
  for (std::size_t layers : {1u, 3u}) {
    for (bool share : {true, false}) {
      HeadConfig cfg;
      cfg.num_queries = 2;
      cfg.dim = 4;
      cfg.layers = layers;
      cfg.share_weights = share;
      ParamStore<double> store;
      Rng init(1);
      SpottingHead<double> head(store, cfg, toy.channels, init);
      EXPECT_EQ(head.forward(toy.pyramid).updates, 4 * layers);
      if (share) {
        if (shared_params == 0) shared_params = store.scalar_count();
        EXPECT_EQ(store.scalar_count(), shared_params);
      } else if (layers == 3) {
        EXPECT_GT(store.scalar_count(), shared_params);
      }
    }
  }
}

TEST(SpottingHead, ForcedFullMasksEqualUnmaskedRun) {
  Rng rng(6);
  auto toy = toy_pyramid(rng, 50);
  toy.pyramid.geometry = &toy.geometry;
  HeadConfig cfg;
  cfg.num_queries = 4;
  cfg.dim = 6;
  ParamStore<double> store;
  SpottingHead<double> head(store, cfg, toy.channels, rng);
  const auto forced = head.forward(toy.pyramid, {.force_full_masks = true});
  const auto open = head.forward(toy.pyramid, {.disable_masking = true});
  const auto masked = head.forward(toy.pyramid);
  bool differs = false;
  for (std::size_t s = 0; s < forced.steps(); ++s) {
    const auto a = forced.mask_logits[s].values(), b = open.mask_logits[s].values(), c = masked.mask_logits[s].values();
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i], b[i]);
      differs = differs || a[i] != c[i];
    }
  }
  EXPECT_TRUE(differs);
}

TEST(SpottingHead, RejectsTooFewLevels) {
  Rng rng(7);
  ParamStore<double> store;
  EXPECT_THROW(SpottingHead<double>(store, HeadConfig{}, {4, 4, 4}, rng), std::invalid_argument);
}

TEST(Assemble, SingleDoorQuery) {
  // classes: door, wall, no-object; 2 queries over 4 points
  const std::vector<double> cls{0.9, 0.05, 0.05, 0.1, 0.1, 0.8};
  const std::vector<double> msk{0.2, 0.7, 0.9, 0.4, 0.9, 0.9, 0.9, 0.9};
  const auto p = assemble_panoptic(cls, msk, 2, 4, two_classes());
  EXPECT_FALSE(p.entities[0].semantic.has_value());
  EXPECT_EQ(p.entities[1], (EntityLabel{1, 0}));
  EXPECT_EQ(p.entities[2], (EntityLabel{1, 0}));
  EXPECT_FALSE(p.entities[3].semantic.has_value());
}

TEST(Assemble, AllNoObjectAndStuffMerge) {
  const std::vector<double> none{0.1, 0.1, 0.8, 0.2, 0.1, 0.7};
  const auto a = assemble_panoptic(none, std::vector<double>(8, 0.9), 2, 4, two_classes());
  for (const auto& e : a.entities) EXPECT_FALSE(e.semantic.has_value());
  // two wall queries over disjoint points: one class, no instance ids
  const std::vector<double> walls{0.1, 0.8, 0.1, 0.1, 0.7, 0.2};
  const std::vector<double> msk{0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.9, 0.9};
  const auto b = assemble_panoptic(walls, msk, 2, 4, two_classes());
  for (const auto& e : b.entities) EXPECT_EQ(e, (EntityLabel{2, -1}));
}

TEST(Assemble, HighestConfidenceTimesMaskWins) {
  const std::vector<double> cls{0.9, 0.05, 0.05, 0.6, 0.3, 0.1};
  const std::vector<double> msk{0.6, 0.95, 0.95, 0.6};
  const auto p = assemble_panoptic(cls, msk, 2, 2, two_classes());
  // point 0: 0.9 * 0.6 = 0.54 loses to 0.6 * 0.95 = 0.57; point 1: 0.855 beats 0.36
  EXPECT_EQ(p.entities[0], (EntityLabel{1, 1}));
  EXPECT_EQ(p.entities[1], (EntityLabel{1, 0}));
}
