#pragma once

// Seeded synthetic floorplans: symbol templates placed without overlap on a
// canvas, long wall and railing runs as stuff, and isolated clutter as
// background. Plus rotate / flip / scale / shift augmentation.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "sympoint/rng.hpp"
#include "sympoint/vgio.hpp"

namespace sympoint {

struct SymbolTemplate {
  std::string name;
  bool is_thing = true;
  std::string color;
  /// Primitives in local coordinates around the origin for a nominal size
  /// (things) or run length (stuff). Endpoints of consecutive parts meet
  /// exactly, so the template is one connected component.
  std::function<std::vector<Primitive>(double size, Rng&)> build;
  double min_size = 16.0, max_size = 24.0;
};

namespace synth_detail {

inline Primitive L(double x1, double y1, double x2, double y2) { return Primitive::make_line({x1, y1}, {x2, y2}); }

inline std::vector<Primitive> door(double s, Rng&) {
  const double h = s / 2;
  // Leaf standing on the hinge, swing arc from the closed to the open position.
  return {L(-h, -h, -h, h), Primitive::make_arc({-h, -h}, s, std::numbers::pi / 2, 0.0), L(-h, -h, h - s * 0.25, -h)};
}

inline std::vector<Primitive> window(double s, Rng&) {
  const double w = 0.8 * s, t = 0.15 * s;
  return {L(-w, -t, w, -t), L(-w, 0, w, 0), L(-w, t, w, t),
          L(-w, -t, -w, 0), L(-w, 0, -w, t), L(w, -t, w, 0), L(w, 0, w, t)};
}

inline std::vector<Primitive> table(double s, Rng&) {
  const double w = 0.6 * s, h = 0.4 * s;
  return {L(-w, -h, w, -h), L(w, -h, w, h), L(w, h, -w, h), L(-w, h, -w, -h)};
}

inline std::vector<Primitive> chair(double s, Rng&) {
  const double a = 0.3 * s, b = 0.5 * s;
  return {L(-a, -a, a, -a), L(a, -a, a, a), L(a, a, -a, a), L(-a, a, -a, -a),
          L(-a, -a, -a, -b), L(-a, -b, a, -b), L(a, -b, a, -a)};
}

inline std::vector<Primitive> basin(double w, double h, Primitive bowl) {
  const Vec2 c = bowl.center;
  return {L(-w, -h, 0, -h), L(0, -h, w, -h), L(w, -h, w, h), L(w, h, -w, h), L(-w, h, -w, -h),
          bowl, L(c.x, c.y, 0, -h)};
}

inline std::vector<Primitive> sink(double s, Rng&) {
  return basin(0.45 * s, 0.35 * s, Primitive::make_circle({0, 0.05 * s}, 0.2 * s));
}

inline std::vector<Primitive> bath(double s, Rng&) {
  return basin(0.75 * s, 0.35 * s, Primitive::make_ellipse({0, 0.05 * s}, 0.55 * s, 0.2 * s, 0.0));
}

inline std::vector<Primitive> wall(double len, Rng&) {
  const double h = len / 2, t = 1.5;
  return {L(-h, -t, h, -t), L(h, -t, h, t), L(h, t, -h, t), L(-h, t, -h, -t)};
}

inline std::vector<Primitive> railing(double len, Rng&) {
  const int segs = 8;
  std::vector<Primitive> out;
  for (int i = 0; i < segs; ++i) {
    const double x0 = -len / 2 + len * i / segs, x1 = -len / 2 + len * (i + 1) / segs;
    out.push_back(L(x0, (i % 2) ? 2.0 : -2.0, x1, (i % 2) ? -2.0 : 2.0));
  }
  return out;
}

}  // namespace synth_detail

/// The eight built-in classes: six things, then two stuff classes.
inline std::vector<SymbolTemplate> default_templates() {
  using namespace synth_detail;
  return {
      {"door", true, "#e6194b", door},
      {"window", true, "#3cb44b", window},
      {"table", true, "#4363d8", table},
      {"chair", true, "#f58231", chair},
      {"sink", true, "#911eb4", sink},
      {"bath", true, "#42d4f4", bath},
      {"wall", false, "#000075", wall, 40.0, 90.0},
      {"railing", false, "#808000", railing, 36.0, 64.0},
  };
}

struct SynthConfig {
  std::size_t thing_classes = 6;
  std::size_t stuff_classes = 2;
  int min_symbols = 4, max_symbols = 8;  // things per document
  int min_stuff = 1, max_stuff = 3;      // stuff runs per document
  double canvas = 240.0;
  int clutter = 4;
  double margin = 4.0;
  double min_scale = 0.8, max_scale = 1.2;
  int max_retries = 60;
  bool shuffle = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (thing_classes < 1 || thing_classes > 6 || stuff_classes > 2)
      throw std::invalid_argument("synth supports 1-6 thing and 0-2 stuff classes");
    if (min_symbols < 0 || max_symbols < min_symbols || min_stuff < 0 || max_stuff < min_stuff || clutter < 0)
      throw std::invalid_argument("synth counts must be non-negative ranges");
    if (!(canvas >= 64.0)) throw std::invalid_argument("synth canvas must be at least 64 px");
    if (!(min_scale > 0 && max_scale >= min_scale)) throw std::invalid_argument("bad synth scale range");
  }
};

/// Category table for a config: ids 1.. in template order.
inline std::vector<Category> synth_categories(const SynthConfig& cfg) {
  const auto t = default_templates();
  std::vector<Category> out;
  for (std::size_t i = 0; i < cfg.thing_classes; ++i) out.push_back({int(i) + 1, t[i].name, true, t[i].color});
  for (std::size_t i = 0; i < cfg.stuff_classes; ++i) out.push_back({int(7 + i), t[6 + i].name, false, t[6 + i].color});
  return out;
}

namespace synth_detail {

inline Vec2 rotate(Vec2 p, double c, double s) { return {c * p.x - s * p.y, s * p.x + c * p.y}; }

/// Rigid placement: rotate by theta, then translate to `at`.
inline Primitive place(const Primitive& p, double theta, Vec2 at) {
  const double c = std::cos(theta), s = std::sin(theta);
  switch (p.kind) {
    case PrimitiveKind::line: return Primitive::make_line(rotate(p.v1, c, s) + at, rotate(p.v2, c, s) + at);
    case PrimitiveKind::arc:
      return Primitive::make_arc(rotate(p.center, c, s) + at, p.radius, p.start_angle + theta, p.end_angle + theta);
    case PrimitiveKind::circle: return Primitive::make_circle(rotate(p.center, c, s) + at, p.radius);
    case PrimitiveKind::ellipse: return Primitive::make_ellipse(rotate(p.center, c, s) + at, p.rx, p.ry, p.rotation + theta);
  }
  return p;
}

inline double extent(const std::vector<Primitive>& parts) {
  double r = 0.0;
  for (const auto& p : parts) {
    if (p.is_closed()) r = std::max(r, p.center.norm() + std::max({p.radius, p.rx, p.ry}));
    else if (p.kind == PrimitiveKind::arc) r = std::max(r, p.center.norm() + p.radius);
    else r = std::max({r, p.v1.norm(), p.v2.norm()});
  }
  return r;
}

}  // namespace synth_detail

struct SynthResult {
  Document doc;
  std::vector<std::string> warnings;
};

/// One annotated document, fully determined by (cfg, doc_seed).
inline SynthResult generate_document(const SynthConfig& cfg, std::uint64_t doc_seed, const std::string& id = "doc") {
  using namespace synth_detail;
  cfg.validate();
  Rng rng(doc_seed);
  const auto templates = default_templates();
  SynthResult res;
  Document& doc = res.doc;
  doc.id = id;
  doc.width = doc.height = cfg.canvas;
  doc.categories = synth_categories(cfg);
  doc.annotated = true;

  struct Disc {
    Vec2 c;
    double r;
  };
  std::vector<Disc> taken;
  std::vector<int> next_instance(cfg.thing_classes, 0);

  auto try_place = [&](const std::vector<Primitive>& parts, double theta, std::vector<Primitive>& out) {
    const double r = extent(parts);
    for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
      const Vec2 at{rng.uniform(r + 2.0, cfg.canvas - r - 2.0), rng.uniform(r + 2.0, cfg.canvas - r - 2.0)};
      bool clear = r * 2 + 4.0 < cfg.canvas;
      for (const auto& d : taken) clear = clear && distance(d.c, at) > d.r + r + cfg.margin;
      if (!clear) continue;
      taken.push_back({at, r});
      out.clear();
      for (const auto& p : parts) out.push_back(place(p, theta, at));
      return true;
    }
    return false;
  };

  struct Job {
    std::size_t tmpl;
    int category;
  };
  std::vector<Job> jobs;
  const int n_stuff = cfg.stuff_classes ? rng.range(cfg.min_stuff, cfg.max_stuff) : 0;
  for (int i = 0; i < n_stuff; ++i) {
    const auto k = static_cast<std::size_t>(rng.below(cfg.stuff_classes));
    jobs.push_back({6 + k, int(7 + k)});
  }
  const int n_things = rng.range(cfg.min_symbols, cfg.max_symbols);
  for (int i = 0; i < n_things; ++i) {
    const auto k = static_cast<std::size_t>(rng.below(cfg.thing_classes));
    jobs.push_back({k, int(k) + 1});
  }
  std::vector<Primitive> placed;
  for (const auto& job : jobs) {
    const auto& t = templates[job.tmpl];
    const double size = rng.uniform(t.min_size, t.max_size) * rng.uniform(cfg.min_scale, cfg.max_scale);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const auto parts = t.build(size, rng);
    if (!try_place(parts, theta, placed)) {
      res.warnings.push_back("could not place " + t.name + " after " + std::to_string(cfg.max_retries) + " tries");
      continue;
    }
    const int inst = t.is_thing ? next_instance[job.tmpl]++ : -1;
    for (auto& p : placed) doc.primitives.push_back(with_label(p, job.category, inst));
  }
  for (int i = 0; i < cfg.clutter; ++i) {
    const double len = rng.uniform(3.0, 8.0);
    std::vector<Primitive> parts;
    if (rng.coin(0.25)) parts.push_back(Primitive::make_arc({0, 0}, len / 2, 0.0, rng.uniform(1.0, 3.0)));
    else parts.push_back(Primitive::make_line({-len / 2, 0}, {len / 2, 0}));
    if (!try_place(parts, rng.uniform(0.0, 2.0 * std::numbers::pi), placed)) {
      res.warnings.push_back("could not place clutter after " + std::to_string(cfg.max_retries) + " tries");
      continue;
    }
    for (auto& p : placed) doc.primitives.push_back(with_label(p, std::nullopt, -1));
  }
  if (cfg.shuffle) {
    for (std::size_t i = doc.primitives.size(); i > 1; --i)
      std::swap(doc.primitives[i - 1], doc.primitives[static_cast<std::size_t>(rng.below(i))]);
  }
  return res;
}

inline std::string synth_document_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth_%05zu", index);
  return buf;
}

/// Document `index` of the corpus seeded by cfg.seed.
inline SynthResult generate_indexed(const SynthConfig& cfg, std::size_t index) {
  return generate_document(cfg, derive_seed(cfg.seed, 0x5e7, index), synth_document_id(index));
}

struct AugmentConfig {
  bool rotate = true;
  bool flip = true;
  bool scale = true;
  bool shift = true;
  double min_scale = 0.8, max_scale = 1.2;
  double max_shift = 0.1;  // fraction of the canvas size

  bool any() const { return rotate || flip || scale || shift; }
};

/// An explicit similarity transform about the canvas center:
/// p -> R(theta) * s * flip(p - c) + c + t, where flip mirrors y.
struct Similarity {
  double theta = 0.0;
  double scale = 1.0;
  bool flip = false;
  Vec2 shift;
};

inline Similarity draw_similarity(const AugmentConfig& cfg, const Document& doc, std::uint64_t seed) {
  Rng rng(seed);
  Similarity s;
  if (cfg.rotate) s.theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  if (cfg.flip) s.flip = rng.coin();
  if (cfg.scale) s.scale = rng.uniform(cfg.min_scale, cfg.max_scale);
  if (cfg.shift) {
    s.shift = {rng.uniform(-cfg.max_shift, cfg.max_shift) * doc.width, rng.uniform(-cfg.max_shift, cfg.max_shift) * doc.height};
  }
  return s;
}

/// Applies a similarity transform to every primitive; labels, order, and
/// categories are kept.
inline Document transform_document(const Document& doc, const Similarity& t) {
  const Vec2 c{doc.width / 2, doc.height / 2};
  const double cs = std::cos(t.theta), sn = std::sin(t.theta);
  auto map = [&](Vec2 p) {
    Vec2 d = p - c;
    if (t.flip) d.y = -d.y;
    return synth_detail::rotate(d * t.scale, cs, sn) + c + t.shift;
  };
  auto angle = [&](double a) { return (t.flip ? -a : a) + t.theta; };
  Document out = doc;
  for (auto& p : out.primitives) {
    Primitive q;
    switch (p.kind) {
      case PrimitiveKind::line: q = Primitive::make_line(map(p.v1), map(p.v2)); break;
      case PrimitiveKind::arc:
        q = Primitive::make_arc(map(p.center), p.radius * t.scale, angle(p.start_angle), angle(p.end_angle));
        break;
      case PrimitiveKind::circle: q = Primitive::make_circle(map(p.center), p.radius * t.scale); break;
      case PrimitiveKind::ellipse:
        q = Primitive::make_ellipse(map(p.center), p.rx * t.scale, p.ry * t.scale, angle(p.rotation));
        break;
    }
    p = with_label(q, p.semantic, p.instance);
  }
  return out;
}

inline Document augment(const Document& doc, const AugmentConfig& cfg, std::uint64_t seed) {
  return transform_document(doc, draw_similarity(cfg, doc, seed));
}

}  // namespace sympoint
