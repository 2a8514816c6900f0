#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "sympoint/conngraph.hpp"
#include "sympoint/metrics.hpp"
#include "sympoint/points.hpp"
#include "sympoint/synth.hpp"

using namespace sympoint;
using std::numbers::pi;

namespace {

std::size_t components(const ConnectionGraph& g, const std::vector<std::size_t>& members) {
  std::set<std::size_t> in(members.begin(), members.end()), seen;
  std::size_t count = 0;
  for (auto s : members) {
    if (seen.count(s)) continue;
    ++count;
    std::vector<std::size_t> stack{s};
    seen.insert(s);
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (auto w : g.neighbors[v])
        if (in.count(w) && seen.insert(w).second) stack.push_back(w);
    }
  }
  return count;
}

double angle_gap(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 2 * pi - d);
}

}  // namespace

TEST(Synth, DeterministicBytesPerSeed) {
  SynthConfig cfg;
  cfg.seed = 42;
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_EQ(serialize_document(generate_indexed(cfg, i).doc), serialize_document(generate_indexed(cfg, i).doc));
  EXPECT_NE(serialize_document(generate_indexed(cfg, 0).doc), serialize_document(generate_indexed(cfg, 1).doc));
}

TEST(Synth, SingleDoorWithoutClutter) {
  SynthConfig cfg;
  cfg.thing_classes = 1;
  cfg.stuff_classes = 0;
  cfg.min_symbols = cfg.max_symbols = 1;
  cfg.clutter = 0;
  const auto doc = generate_document(cfg, 7).doc;
  Rng rng(0);
  EXPECT_EQ(doc.primitives.size(), default_templates()[0].build(20.0, rng).size());
  for (const auto& p : doc.primitives) {
    EXPECT_EQ(p.semantic, 1);
    EXPECT_EQ(p.instance, 0);
  }
}

TEST(Synth, DocumentsSatisfyInvariants) {
  SynthConfig cfg;
  cfg.seed = 5;
  for (std::size_t i = 0; i < 40; ++i) {
    const auto doc = generate_indexed(cfg, i).doc;
    EXPECT_NO_THROW(parse_document(serialize_document(doc)));
    std::map<int, std::set<int>> instances;
    for (const auto& p : doc.primitives) {
      if (!p.semantic) {
        EXPECT_EQ(p.instance, -1);
        continue;
      }
      if (doc.is_thing(*p.semantic)) {
        EXPECT_GE(p.instance, 0);
        instances[*p.semantic].insert(p.instance);
      } else {
        EXPECT_EQ(p.instance, -1);
      }
    }
    // dense instance ids 0..k-1 per thing class
    for (const auto& [cls, ids] : instances) EXPECT_EQ(*ids.rbegin() + 1, int(ids.size())) << "class " << cls;
  }
}

TEST(Synth, ThingInstancesAreConnected) {
  SynthConfig cfg;
  cfg.seed = 6;
  for (std::size_t i = 0; i < 40; ++i) {
    const auto doc = generate_indexed(cfg, i).doc;
    const auto g = raw_connections(doc, 1.0);
    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < doc.primitives.size(); ++k) {
      const auto& p = doc.primitives[k];
      if (p.semantic && doc.is_thing(*p.semantic)) groups[{*p.semantic, p.instance}].push_back(k);
    }
    for (const auto& [key, members] : groups) EXPECT_EQ(components(g, members), 1u) << "doc " << i;
  }
}

TEST(Synth, EveryClassAppearsInHundredDocuments) {
  SynthConfig cfg;
  std::set<int> seen;
  for (std::size_t i = 0; i < 100; ++i)
    for (const auto& p : generate_indexed(cfg, i).doc.primitives)
      if (p.semantic) seen.insert(*p.semantic);
  EXPECT_EQ(seen.size(), synth_categories(cfg).size());
}

TEST(Synth, GroundTruthScoresPerfectly) {
  SynthConfig cfg;
  cfg.seed = 77;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto doc = generate_indexed(cfg, i).doc;
    EXPECT_EQ(score_from_counts(score_document(doc, ground_truth_labels(doc)).overall).pq, 1.0);
  }
}

TEST(Synth, InvalidConfigsThrow) {
  SynthConfig cfg;
  cfg.thing_classes = 7;
  EXPECT_THROW(generate_document(cfg, 1), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.min_symbols = 5;
  cfg.max_symbols = 2;
  EXPECT_THROW(generate_document(cfg, 1), std::invalid_argument);
}

TEST(Augment, FullTurnRotationIsIdentityOnFeatures) {
  SynthConfig cfg;
  const auto doc = generate_indexed(cfg, 3).doc;
  Similarity t;
  t.theta = 2 * pi;
  const auto a = build_point_set(doc), b = build_point_set(transform_document(doc, t));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_LT(angle_gap(a.points[i].feature[0], b.points[i].feature[0]), 1e-9);
    for (std::size_t k = 1; k < 6; ++k) EXPECT_NEAR(a.points[i].feature[k], b.points[i].feature[k], 1e-9);
    EXPECT_NEAR(a.points[i].position.x, b.points[i].position.x, 1e-9);
  }
}

TEST(Augment, ScaleDoublesLengthsKeepsAngles) {
  SynthConfig cfg;
  const auto doc = generate_indexed(cfg, 4).doc;
  Similarity t;
  t.scale = 2;
  const auto a = build_point_set(doc), b = build_point_set(transform_document(doc, t));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(b.points[i].feature[1], 2 * a.points[i].feature[1], 1e-9);
    EXPECT_LT(angle_gap(a.points[i].feature[0], b.points[i].feature[0]), 1e-9);
  }
}

TEST(Augment, DoubleFlipIsIdentity) {
  SynthConfig cfg;
  const auto doc = generate_indexed(cfg, 5).doc;
  Similarity t;
  t.flip = true;
  const auto twice = transform_document(transform_document(doc, t), t);
  ASSERT_EQ(twice.primitives.size(), doc.primitives.size());
  for (std::size_t i = 0; i < doc.primitives.size(); ++i) {
    const auto &p = doc.primitives[i], &q = twice.primitives[i];
    EXPECT_NEAR(p.v1.x, q.v1.x, 1e-9);
    EXPECT_NEAR(p.v1.y, q.v1.y, 1e-9);
    EXPECT_NEAR(p.v2.y, q.v2.y, 1e-9);
    EXPECT_NEAR(p.center.y, q.center.y, 1e-9);
    EXPECT_NEAR(p.arc_length, q.arc_length, 1e-9);
  }
}

TEST(Augment, PreservesLabelsCountAndConnectivity) {
  SynthConfig cfg;
  AugmentConfig aug;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto doc = generate_indexed(cfg, i).doc;
    const auto out = augment(doc, aug, 100 + i);
    ASSERT_EQ(out.primitives.size(), doc.primitives.size());
    for (std::size_t k = 0; k < doc.primitives.size(); ++k) {
      EXPECT_EQ(out.primitives[k].semantic, doc.primitives[k].semantic);
      EXPECT_EQ(out.primitives[k].instance, doc.primitives[k].instance);
      EXPECT_EQ(out.primitives[k].kind, doc.primitives[k].kind);
    }
    // arc chord ends follow the mapped geometry
    const auto s = draw_similarity(aug, doc, 100 + i);
    for (std::size_t k = 0; k < doc.primitives.size(); ++k) {
      const auto& p = doc.primitives[k];
      if (p.kind != PrimitiveKind::arc) continue;
      Vec2 d = p.v1 - Vec2{doc.width / 2, doc.height / 2};
      if (s.flip) d.y = -d.y;
      const Vec2 m{s.scale * (d.x * std::cos(s.theta) - d.y * std::sin(s.theta)) + doc.width / 2 + s.shift.x,
                   s.scale * (d.x * std::sin(s.theta) + d.y * std::cos(s.theta)) + doc.height / 2 + s.shift.y};
      EXPECT_NEAR(out.primitives[k].v1.x, m.x, 1e-9);
      EXPECT_NEAR(out.primitives[k].v1.y, m.y, 1e-9);
    }
  }
}
