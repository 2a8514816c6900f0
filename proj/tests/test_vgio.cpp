#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sympoint/synth.hpp"
#include "sympoint/vgio.hpp"

using namespace sympoint;

namespace {

const char* kHeader = R"("id": "t", "width": 10, "height": 10,
  "categories": [{"id": 1, "name": "wall", "is_thing": false, "color": "#112233"},
                 {"id": 2, "name": "door", "is_thing": true, "color": "#445566"}])";

Document parse_prims(const std::string& prims) {
  return parse_document(std::string("{") + kHeader + R"(, "primitives": [)" + prims + "]}");
}

std::optional<std::size_t> error_index(const std::string& prims) {
  try {
    parse_prims(prims);
  } catch (const DocumentError& e) {
    return e.index();
  }
  ADD_FAILURE() << "expected a DocumentError";
  return std::nullopt;
}

}  // namespace

TEST(ParseDocument, SingleLineLength) {
  auto d = parse_prims(R"({"kind": "line", "x1": 0, "y1": 0, "x2": 2, "y2": 2, "semantic": 1, "instance": -1})");
  ASSERT_EQ(d.primitives.size(), 1u);
  EXPECT_EQ(d.primitives[0].kind, PrimitiveKind::line);
  EXPECT_DOUBLE_EQ(d.primitives[0].arc_length, 2 * std::sqrt(2.0));
  EXPECT_EQ(d.primitives[0].semantic, 1);
}

TEST(ParseDocument, PolylineDecomposesInPlace) {
  auto d = parse_prims(R"({"kind": "circle", "cx": 1, "cy": 1, "r": 1},
                          {"kind": "polyline", "pts": [[0,0],[3,0],[3,4]]},
                          {"kind": "line", "x1": 0, "y1": 0, "x2": 1, "y2": 0})");
  ASSERT_EQ(d.primitives.size(), 4u);
  EXPECT_EQ(d.primitives[0].kind, PrimitiveKind::circle);
  EXPECT_EQ(d.primitives[1].v2, (Vec2{3, 0}));
  EXPECT_EQ(d.primitives[2].v1, (Vec2{3, 0}));
  EXPECT_EQ(d.primitives[3].v2, (Vec2{1, 0}));
  // total length of the polyline equals the sum of its pieces
  EXPECT_DOUBLE_EQ(d.primitives[1].arc_length + d.primitives[2].arc_length, 7.0);
}

TEST(ParseDocument, ArcChordAndLength) {
  auto d = parse_prims(R"({"kind": "arc", "cx": 0, "cy": 0, "r": 1, "a0": 0, "a1": 3.141592653589793})");
  const auto& p = d.primitives.at(0);
  EXPECT_NEAR(p.v1.x, 1, 1e-15);
  EXPECT_NEAR(p.v1.y, 0, 1e-15);
  EXPECT_NEAR(p.v2.x, -1, 1e-15);
  EXPECT_NEAR(p.v2.y, 0, 1e-15);
  EXPECT_DOUBLE_EQ(p.arc_length, std::numbers::pi);
}

TEST(ParseDocument, ErrorsCarryPrimitiveIndex) {
  const std::string ok = R"({"kind": "line", "x1": 0, "y1": 0, "x2": 1, "y2": 0},)";
  EXPECT_EQ(error_index(ok + R"({"kind": "spline"})"), 1u);
  EXPECT_EQ(error_index(ok + R"({"kind": "line", "x1": 1, "y1": 1, "x2": 1, "y2": 1})"), 1u);
  EXPECT_EQ(error_index(ok + ok + R"({"kind": "line", "x1": 0, "y1": 0, "x2": 1, "y2": 0, "semantic": 9})"), 2u);
  EXPECT_EQ(error_index(R"({"kind": "circle", "cx": 0, "cy": 0, "r": -1})"), 0u);
  EXPECT_EQ(error_index(R"({"kind": "line", "x1": 0, "y1": 0, "x2": "a", "y2": 0})"), 0u);
  // thing primitives need an instance, stuff primitives must not have one
  EXPECT_EQ(error_index(R"({"kind": "line", "x1": 0, "y1": 0, "x2": 1, "y2": 0, "semantic": 2, "instance": -1})"), 0u);
  EXPECT_EQ(error_index(R"({"kind": "line", "x1": 0, "y1": 0, "x2": 1, "y2": 0, "semantic": 1, "instance": 4})"), 0u);
  EXPECT_THROW(parse_document("{not json"), DocumentError);
  EXPECT_THROW(parse_document(R"({"id": "x", "width": 1, "height": 1})"), DocumentError);
}

TEST(ParseDocument, SerializeRoundTripIsIdentity) {
  auto d = parse_prims(R"({"kind": "line", "x1": 0.1, "y1": 0.2, "x2": 2.3, "y2": 2, "semantic": 1, "instance": -1},
                          {"kind": "arc", "cx": 1, "cy": 2, "r": 0.7, "a0": 0.3, "a1": -2.1, "semantic": 2, "instance": 0},
                          {"kind": "ellipse", "cx": 4, "cy": 4, "rx": 2, "ry": 1, "rot": 0.4, "semantic": null},
                          {"kind": "circle", "cx": 5, "cy": 5, "r": 0.25, "semantic": 2, "instance": 3})");
  EXPECT_EQ(parse_document(serialize_document(d)), d);
  SynthConfig cfg;
  cfg.seed = 5;
  for (std::size_t i = 0; i < 10; ++i) {
    auto g = generate_indexed(cfg, i).doc;
    EXPECT_EQ(parse_document(serialize_document(g)), g);
  }
}

TEST(ImportSvg, SupportedAndSkippedElements) {
  auto a = import_svg(R"(<svg width="10" height="10"><line x1="0" y1="0" x2="4" y2="0"/></svg>)");
  ASSERT_EQ(a.doc.primitives.size(), 1u);
  EXPECT_DOUBLE_EQ(a.doc.primitives[0].arc_length, 4);
  EXPECT_EQ(a.warnings, 0u);
  auto b = import_svg(R"(<svg width="10" height="10"><rect x="0" y="0" width="2" height="2"/></svg>)");
  EXPECT_EQ(b.doc.primitives.size(), 0u);
  EXPECT_EQ(b.warnings, 1u);
  auto c = import_svg(R"(<svg width="10" height="10"><g><circle cx="3" cy="4" r="1"/></g></svg>)");
  ASSERT_EQ(c.doc.primitives.size(), 1u);
  EXPECT_EQ(c.doc.primitives[0].kind, PrimitiveKind::circle);
  EXPECT_EQ(c.doc.primitives[0].center, (Vec2{3, 4}));
  EXPECT_FALSE(c.doc.primitives[0].semantic.has_value());
  EXPECT_THROW(import_svg("<svg><line"), DocumentError);
}

TEST(ImportSvg, PolylineMatchesJsonDecomposition) {
  auto s = import_svg(R"(<svg width="10" height="10"><polyline points="0,0 3,0 3,4"/></svg>)");
  auto j = parse_prims(R"({"kind": "polyline", "pts": [[0,0],[3,0],[3,4]]})");
  ASSERT_EQ(s.doc.primitives.size(), j.primitives.size());
  for (std::size_t i = 0; i < j.primitives.size(); ++i) EXPECT_EQ(s.doc.primitives[i].v2, j.primitives[i].v2);
}

TEST(RenderPanoptic, ColorsAndDeterminism) {
  auto d = parse_prims(R"({"kind": "line", "x1": 0, "y1": 0, "x2": 2, "y2": 0, "semantic": 1, "instance": -1},
                          {"kind": "line", "x1": 0, "y1": 1, "x2": 2, "y2": 1, "semantic": 1, "instance": -1})");
  const auto pred = ground_truth_labels(d);
  const auto svg = render_panoptic(d, pred);
  std::size_t count = 0;
  for (std::size_t pos = 0; (pos = svg.find("stroke=\"#112233\"", pos)) != std::string::npos; ++pos) ++count;
  EXPECT_EQ(count, 2u);
  EXPECT_EQ(render_panoptic(d, pred), svg);
  PanopticPrediction short_pred{d.id, {pred.entities[0]}};
  EXPECT_THROW(render_panoptic(d, short_pred), DocumentError);
  Document empty;
  empty.width = empty.height = 5;
  const auto e = render_panoptic(empty, {});
  EXPECT_NE(e.find("<svg"), std::string::npos);
  EXPECT_NO_THROW(import_svg(e));
}

TEST(RenderPanoptic, ThingInstancesAreDistinguishable) {
  auto d = parse_prims(R"({"kind": "line", "x1": 0, "y1": 0, "x2": 2, "y2": 0, "semantic": 2, "instance": 0},
                          {"kind": "line", "x1": 0, "y1": 1, "x2": 2, "y2": 1, "semantic": 2, "instance": 1})");
  const auto svg = render_panoptic(d, ground_truth_labels(d));
  const auto first = svg.find("<line"), second = svg.find("<line", first + 1);
  auto stroke = [&](std::size_t at) { return svg.substr(svg.find("stroke=", at), 16); };
  EXPECT_NE(stroke(first), stroke(second));
}

TEST(Predictions, RoundTripAndMissingEntries) {
  PanopticPrediction p{"d", {{1, -1}, {std::nullopt, -1}, {2, 5}}};
  EXPECT_EQ(parse_prediction(serialize_prediction(p)), p);
  EXPECT_THROW(parse_prediction(R"({"id": "d", "entities": [{"index": 1, "semantic": 1, "instance": -1}]})"),
               DocumentError);
}
