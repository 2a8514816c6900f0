#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "sympoint/conngraph.hpp"
#include "sympoint/points.hpp"
#include "sympoint/rng.hpp"
#include "sympoint/synth.hpp"
#include "oracles.hpp"

using namespace sympoint;
using std::numbers::pi;

namespace {

Document doc_of(std::vector<Primitive> prims) {
  Document d;
  d.id = "t";
  d.width = d.height = 100;
  d.primitives = std::move(prims);
  return d;
}

Document star(std::size_t arms) {
  std::vector<Primitive> prims;
  for (std::size_t k = 0; k < arms; ++k) {
    const double a = 2 * pi * double(k) / double(arms);
    prims.push_back(Primitive::make_line({50, 50}, {50 + 10 * std::cos(a), 50 + 10 * std::sin(a)}));
  }
  return doc_of(std::move(prims));
}

}  // namespace

TEST(Points, PositionsFollowKind) {
  EXPECT_EQ(primitive_position(Primitive::make_line({0, 0}, {2, 2})), (Vec2{1, 1}));
  EXPECT_EQ(primitive_position(Primitive::make_circle({3, 4}, 1)), (Vec2{3, 4}));
  const auto arc = primitive_position(Primitive::make_arc({0, 0}, 1, 0, pi));
  EXPECT_NEAR(arc.x, 0, 1e-15);
  EXPECT_NEAR(arc.y, 0, 1e-15);
}

TEST(Points, FeatureExamples) {
  const PointFeature a = primitive_feature(Primitive::make_line({0, 0}, {4, 0}));
  EXPECT_EQ(a, (PointFeature{0, 4, 1, 0, 0, 0}));
  const PointFeature b = primitive_feature(Primitive::make_line({0, 0}, {0, -3}));
  EXPECT_NEAR(b[0], pi / 2, 1e-15);
  EXPECT_DOUBLE_EQ(b[1], 3);
  const PointFeature c = primitive_feature(Primitive::make_circle({0, 0}, 2));
  EXPECT_EQ(c, (PointFeature{0, 4, 0, 0, 1, 0}));
  const PointFeature e = primitive_feature(Primitive::make_ellipse({0, 0}, 1, 3, 0.2));
  EXPECT_EQ(e, (PointFeature{0, 6, 0, 0, 0, 1}));
}

TEST(Points, FeatureInvariantsOnRandomPrimitives) {
  Rng rng(11);
  const auto d = oracle::random_document(rng, 200, 50);
  const auto ps = build_point_set(d);
  ASSERT_EQ(ps.size(), 200u);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& f = ps.points[i].feature;
    EXPECT_EQ(ps.points[i].source_index, i);
    EXPECT_DOUBLE_EQ(f[2] + f[3] + f[4] + f[5], 1.0);
    EXPECT_GE(f[0], 0.0);
    EXPECT_LT(f[0], 2 * pi);
    EXPECT_GE(f[1], 0.0);
  }
  EXPECT_FALSE(ps.labels.has_value());
}

TEST(Points, TranslationInvariance) {
  Rng rng(12);
  // integer-valued coordinates keep the translated chord deltas exact
  std::vector<Primitive> prims;
  for (int i = 0; i < 50; ++i) {
    const Vec2 a{double(rng.range(0, 40)), double(rng.range(0, 40))};
    prims.push_back(Primitive::make_line(a, {a.x + rng.range(1, 5), a.y + rng.range(-5, 5)}));
    prims.push_back(Primitive::make_circle(a, rng.range(1, 4)));
  }
  auto d = doc_of(prims);
  auto moved = d;
  for (auto& p : moved.primitives) {
    p.v1 = p.v1 + Vec2{10, 10};
    p.v2 = p.v2 + Vec2{10, 10};
    p.center = p.center + Vec2{10, 10};
  }
  const auto a = build_point_set(d), b = build_point_set(moved);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.points[i].feature, b.points[i].feature);
    EXPECT_EQ(a.points[i].position + (Vec2{10, 10}), b.points[i].position);
  }
}

TEST(Points, RotationCovarianceAndScale) {
  Rng rng(13);
  for (int t = 0; t < 100; ++t) {
    const Vec2 a{rng.uniform(-5, 5), rng.uniform(-5, 5)}, b{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const double th = rng.uniform(-3, 3), s = rng.uniform(0.5, 2);
    auto rot = [&](Vec2 v) { return Vec2{v.x * std::cos(th) - v.y * std::sin(th), v.x * std::sin(th) + v.y * std::cos(th)}; };
    const auto f0 = primitive_feature(Primitive::make_line(a, b));
    const auto fr = primitive_feature(Primitive::make_line(rot(a), rot(b)));
    const auto fs = primitive_feature(Primitive::make_line(a * s, b * s));
    const double expected = wrap_angle(f0[0] - th);
    double diff = std::abs(fr[0] - expected);
    diff = std::min(diff, 2 * pi - diff);
    EXPECT_LT(diff, 1e-9);
    EXPECT_NEAR(fr[1], f0[1], 1e-9);
    EXPECT_NEAR(fs[1], s * f0[1], 1e-9);
    EXPECT_NEAR(fs[0], f0[0], 1e-9);
  }
}

TEST(Points, LabelsCopiedFromAnnotatedDocuments) {
  SynthConfig cfg;
  const auto d = generate_indexed(cfg, 0).doc;
  const auto ps = build_point_set(d);
  ASSERT_TRUE(ps.labels.has_value());
  for (std::size_t i = 0; i < d.primitives.size(); ++i) {
    EXPECT_EQ((*ps.labels)[i].semantic, d.primitives[i].semantic);
    EXPECT_EQ((*ps.labels)[i].instance, d.primitives[i].instance);
  }
}

TEST(Connections, SharedEndpointAndThreshold) {
  auto d = doc_of({Primitive::make_line({0, 0}, {1, 1}), Primitive::make_line({1, 1}, {3, 0}),
                   Primitive::make_line({5, 0}, {9, 0})});
  const auto g = build_connections(build_point_set(d), d, 1.0, 8, 0);
  EXPECT_EQ(g.neighbors[0], (std::vector<std::size_t>{1}));
  EXPECT_EQ(g.neighbors[1], (std::vector<std::size_t>{0}));
  EXPECT_TRUE(g.neighbors[2].empty());  // nearest endpoint is 2.0 away
  EXPECT_DOUBLE_EQ(g.distances[0][0], 0.0);
}

TEST(Connections, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(seed);
    const auto d = oracle::random_document(rng, 150, 30);
    for (double eps : {0.5, 1.0, 2.5}) {
      const auto g = raw_connections(d, eps);
      const auto want = oracle::connections(d, eps);
      for (std::size_t i = 0; i < d.primitives.size(); ++i) {
        EXPECT_EQ(std::set<std::size_t>(g.neighbors[i].begin(), g.neighbors[i].end()), want[i]) << "point " << i;
        for (std::size_t j : g.neighbors[i]) EXPECT_NE(i, j);
      }
    }
  }
}

TEST(Connections, EpsilonMonotoneAndSymmetricBeforeCap) {
  Rng rng(21);
  const auto d = oracle::random_document(rng, 120, 25);
  const auto small = raw_connections(d, 0.8), large = raw_connections(d, 1.6);
  for (std::size_t i = 0; i < d.primitives.size(); ++i) {
    std::set<std::size_t> big(large.neighbors[i].begin(), large.neighbors[i].end());
    for (std::size_t j : small.neighbors[i]) {
      EXPECT_TRUE(big.count(j));
      const auto& back = small.neighbors[j];
      EXPECT_NE(std::find(back.begin(), back.end(), i), back.end());
    }
  }
}

TEST(Connections, StarIsCappedAndDeterministic) {
  const auto d = star(12);
  const auto ps = build_point_set(d);
  const auto capped = build_connections(ps, d, 1.0, 8, 3);
  const auto open = build_connections(ps, d, 1.0, 20, 3);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_LE(capped.neighbors[i].size(), 8u);
    EXPECT_EQ(open.neighbors[i].size(), 11u);
    for (std::size_t j : capped.neighbors[i]) EXPECT_NE(i, j);
  }
  EXPECT_EQ(build_connections(ps, d, 1.0, 8, 3).neighbors, capped.neighbors);
  bool any_diff = false;
  for (std::uint64_t s = 4; s < 10 && !any_diff; ++s)
    any_diff = build_connections(ps, d, 1.0, 8, s).neighbors != capped.neighbors;
  EXPECT_TRUE(any_diff);
}

TEST(ConnectionStats, Examples) {
  const auto none = connection_stats(ConnectionGraph::empty(0));
  EXPECT_EQ(none.edges, 0u);
  EXPECT_EQ(none.components, 0u);
  for (auto c : none.degree_histogram) EXPECT_EQ(c, 0u);

  auto d = doc_of({Primitive::make_line({0, 0}, {1, 0}), Primitive::make_line({1, 0}, {2, 5})});
  const auto one = connection_stats(raw_connections(d, 1.0));
  ASSERT_GE(one.degree_histogram.size(), 2u);
  EXPECT_EQ(one.degree_histogram[1], 2u);
  EXPECT_EQ(one.components, 1u);

  // a hub line whose far end meets 11 spokes
  std::vector<Primitive> prims{Primitive::make_line({0, 0}, {50, 50})};
  for (int k = 0; k < 11; ++k) {
    const double a = 2 * pi * k / 11.0;
    prims.push_back(Primitive::make_line({50, 50}, {50 + 20 * std::cos(a), 50 + 20 * std::sin(a)}));
  }
  const auto s = connection_stats(raw_connections(doc_of(prims), 1.0));
  EXPECT_EQ(s.degree_histogram.at(11), 12u);
  EXPECT_EQ(s.components, 1u);
}
