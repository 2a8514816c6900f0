#pragma once

// Primitive -> point encoding: a position plus the 6-d feature
// [angle, length, onehot(kind)] per primitive.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "sympoint/vgio.hpp"

namespace sympoint {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

using PointFeature = std::array<double, 6>;

struct PrimitivePoint {
  Vec2 position;
  PointFeature feature{};
  std::size_t source_index = 0;

  double angle() const { return feature[0]; }
  double length() const { return feature[1]; }
};

struct PointLabel {
  std::optional<int> semantic;
  int instance = -1;
  bool operator==(const PointLabel&) const = default;
};

struct PointSet {
  std::vector<PrimitivePoint> points;
  std::optional<std::vector<PointLabel>> labels;

  std::size_t size() const { return points.size(); }
};

/// Wraps an angle into [0, 2pi).
inline double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Midpoint of the chord for lines and arcs; center for closed kinds.
inline Vec2 primitive_position(const Primitive& p) {
  if (p.is_closed()) return p.center;
  return {(p.v1.x + p.v2.x) / 2.0, (p.v1.y + p.v2.y) / 2.0};
}

/// Clockwise angle from +x to the chord v1->v2, chord length, and kind
/// one-hot in (line, arc, circle, ellipse) order. Closed kinds have no
/// chord: angle 0 and length 2r (2*max(rx, ry) for ellipses).
inline PointFeature primitive_feature(const Primitive& p) {
  PointFeature f{};
  switch (p.kind) {
    case PrimitiveKind::circle:
      f[0] = 0.0;
      f[1] = 2.0 * p.radius;
      break;
    case PrimitiveKind::ellipse:
      f[0] = 0.0;
      f[1] = 2.0 * std::max(p.rx, p.ry);
      break;
    default: {
      const Vec2 d = p.v2 - p.v1;
      f[0] = (d.x == 0.0 && d.y == 0.0) ? 0.0 : wrap_angle(-std::atan2(d.y, d.x));
      f[1] = d.norm();
    }
  }
  f[2 + static_cast<std::size_t>(p.kind)] = 1.0;
  return f;
}

inline PointSet build_point_set(const Document& doc) {
  PointSet set;
  set.points.reserve(doc.primitives.size());
  for (std::size_t i = 0; i < doc.primitives.size(); ++i) {
    const auto& p = doc.primitives[i];
    set.points.push_back({primitive_position(p), primitive_feature(p), i});
  }
  if (doc.annotated) {
    std::vector<PointLabel> labels;
    labels.reserve(doc.primitives.size());
    for (const auto& p : doc.primitives) labels.push_back({p.semantic, p.instance});
    set.labels = std::move(labels);
  }
  return set;
}

}  // namespace sympoint
