#pragma once

// Vector-graphics documents: the canonical JSON format, a best-effort SVG
// subset importer, prediction files, and colored SVG rendering of results.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "json.hpp"

namespace sympoint {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

enum class PrimitiveKind { line = 0, arc = 1, circle = 2, ellipse = 3 };
inline constexpr std::size_t kPrimitiveKinds = 4;

inline std::string_view kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::line: return "line";
    case PrimitiveKind::arc: return "arc";
    case PrimitiveKind::circle: return "circle";
    case PrimitiveKind::ellipse: return "ellipse";
  }
  return "?";
}

/// Thrown for schema and validation failures. `index` is the offending
/// input primitive when one applies.
class DocumentError : public std::runtime_error {
 public:
  explicit DocumentError(const std::string& what, std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(index ? "primitive " + std::to_string(*index) + ": " + what : what), index_(index) {}
  std::optional<std::size_t> index() const { return index_; }

 private:
  std::optional<std::size_t> index_;
};

/// Ramanujan's second approximation of an ellipse perimeter.
inline double ellipse_perimeter(double a, double b) {
  const double h = (a - b) * (a - b) / ((a + b) * (a + b));
  return std::numbers::pi * (a + b) * (1.0 + 3.0 * h / (10.0 + std::sqrt(4.0 - 3.0 * h)));
}

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::line;
  Vec2 v1, v2;            // segment ends (line) or chord ends (arc)
  Vec2 center;            // arc, circle, ellipse
  double radius = 0.0;    // arc, circle
  double rx = 0.0, ry = 0.0;
  double rotation = 0.0;  // ellipse, radians
  double start_angle = 0.0, end_angle = 0.0;  // arc, radians; sweep sign gives direction
  std::optional<int> semantic;  // nullopt: background
  int instance = -1;
  double arc_length = 0.0;

  bool operator==(const Primitive&) const = default;

  static Primitive make_line(Vec2 a, Vec2 b) {
    Primitive p;
    p.kind = PrimitiveKind::line;
    p.v1 = a;
    p.v2 = b;
    p.arc_length = distance(a, b);
    return p;
  }
  static Primitive make_circle(Vec2 c, double r) {
    Primitive p;
    p.kind = PrimitiveKind::circle;
    p.center = c;
    p.radius = r;
    p.arc_length = 2.0 * std::numbers::pi * r;
    return p;
  }
  static Primitive make_ellipse(Vec2 c, double rx, double ry, double rot) {
    Primitive p;
    p.kind = PrimitiveKind::ellipse;
    p.center = c;
    p.rx = rx;
    p.ry = ry;
    p.rotation = rot;
    p.arc_length = ellipse_perimeter(rx, ry);
    return p;
  }
  /// Arc from a0 to a1 (counterclockwise when a1 > a0). Chord ends are
  /// fixed here so nothing downstream re-derives them.
  static Primitive make_arc(Vec2 c, double r, double a0, double a1) {
    Primitive p;
    p.kind = PrimitiveKind::arc;
    p.center = c;
    p.radius = r;
    p.start_angle = a0;
    p.end_angle = a1;
    p.v1 = {c.x + r * std::cos(a0), c.y + r * std::sin(a0)};
    p.v2 = {c.x + r * std::cos(a1), c.y + r * std::sin(a1)};
    p.arc_length = r * std::abs(a1 - a0);
    return p;
  }

  bool is_closed() const { return kind == PrimitiveKind::circle || kind == PrimitiveKind::ellipse; }

  /// Endpoints used for connectivity; closed kinds contribute their center.
  std::vector<Vec2> endpoints() const {
    if (is_closed()) return {center};
    return {v1, v2};
  }
};

inline Primitive with_label(Primitive p, std::optional<int> semantic, int instance) {
  p.semantic = semantic;
  p.instance = instance;
  return p;
}

struct Category {
  int id = 0;
  std::string name;
  bool is_thing = false;
  std::string color = "#000000";
  bool operator==(const Category&) const = default;
};

struct Document {
  std::string id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Primitive> primitives;
  std::vector<Category> categories;
  /// True when the source carried semantic annotations.
  bool annotated = false;

  bool operator==(const Document&) const = default;

  const Category* category(int id) const {
    for (const auto& c : categories)
      if (c.id == id) return &c;
    return nullptr;
  }
  bool is_thing(int id) const {
    const auto* c = category(id);
    return c && c->is_thing;
  }
  double diagonal() const { return std::hypot(width, height); }
};

inline void validate_primitive(const Primitive& p, std::size_t index) {
  auto finite = [](double v) { return std::isfinite(v); };
  switch (p.kind) {
    case PrimitiveKind::line:
      if (!finite(p.v1.x) || !finite(p.v1.y) || !finite(p.v2.x) || !finite(p.v2.y))
        throw DocumentError("non-finite line coordinate", index);
      if (!(p.arc_length > 0.0)) throw DocumentError("degenerate zero-length line", index);
      break;
    case PrimitiveKind::arc:
      if (!finite(p.center.x) || !finite(p.center.y) || !finite(p.start_angle) || !finite(p.end_angle))
        throw DocumentError("non-finite arc parameter", index);
      if (!(p.radius > 0.0)) throw DocumentError("arc radius must be positive", index);
      if (!(std::abs(p.end_angle - p.start_angle) > 0.0) ||
          std::abs(p.end_angle - p.start_angle) > 2.0 * std::numbers::pi + 1e-12)
        throw DocumentError("arc angular span must be in (0, 2pi]", index);
      break;
    case PrimitiveKind::circle:
      if (!finite(p.center.x) || !finite(p.center.y)) throw DocumentError("non-finite circle center", index);
      if (!(p.radius > 0.0)) throw DocumentError("circle radius must be positive", index);
      break;
    case PrimitiveKind::ellipse:
      if (!finite(p.center.x) || !finite(p.center.y) || !finite(p.rotation))
        throw DocumentError("non-finite ellipse parameter", index);
      if (!(p.rx > 0.0) || !(p.ry > 0.0)) throw DocumentError("ellipse radii must be positive", index);
      break;
  }
}

inline void check_label(const Document& doc, std::optional<int> semantic, int instance, std::size_t index) {
  if (!semantic) {
    if (instance != -1) throw DocumentError("background primitive must have instance -1", index);
    return;
  }
  const auto* c = doc.category(*semantic);
  if (!c) throw DocumentError("unknown semantic id " + std::to_string(*semantic), index);
  if (c->is_thing && instance < 0) throw DocumentError("thing primitive needs instance >= 0", index);
  if (!c->is_thing && instance != -1) throw DocumentError("stuff primitive must have instance -1", index);
}

/// Checks label invariants against the category table.
inline void validate_labels(const Document& doc) {
  for (std::size_t i = 0; i < doc.primitives.size(); ++i)
    check_label(doc, doc.primitives[i].semantic, doc.primitives[i].instance, i);
}

namespace detail {

inline double num(const nlohmann::json& o, const char* key, std::size_t index) {
  auto it = o.find(key);
  if (it == o.end() || !it->is_number()) throw DocumentError(std::string("missing numeric field '") + key + "'", index);
  return it->get<double>();
}

}  // namespace detail

/// Parses a canonical JSON document. Polylines expand in place into lines.
inline Document parse_document(std::string_view bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw DocumentError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw DocumentError("document must be a JSON object");
  Document doc;
  try {
    doc.id = j.at("id").get<std::string>();
    doc.width = j.at("width").get<double>();
    doc.height = j.at("height").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DocumentError(std::string("header: ") + e.what());
  }
  if (!(doc.width > 0) || !(doc.height > 0)) throw DocumentError("width and height must be positive");
  if (j.contains("categories")) {
    if (!j["categories"].is_array()) throw DocumentError("'categories' must be an array");
    for (const auto& c : j["categories"]) {
      try {
        Category cat;
        cat.id = c.at("id").get<int>();
        cat.name = c.at("name").get<std::string>();
        cat.is_thing = c.at("is_thing").get<bool>();
        cat.color = c.value("color", std::string("#000000"));
        if (doc.category(cat.id)) throw DocumentError("duplicate category id " + std::to_string(cat.id));
        doc.categories.push_back(std::move(cat));
      } catch (const nlohmann::json::exception& e) {
        throw DocumentError(std::string("category: ") + e.what());
      }
    }
  }
  if (!j.contains("primitives") || !j["primitives"].is_array()) throw DocumentError("missing 'primitives' array");
  std::size_t index = 0;
  for (const auto& e : j["primitives"]) {
    if (!e.is_object()) throw DocumentError("primitive must be an object", index);
    if (!e.contains("kind") || !e["kind"].is_string()) throw DocumentError("missing 'kind'", index);
    const std::string kind = e["kind"].get<std::string>();
    std::optional<int> semantic;
    int instance = -1;
    if (e.contains("semantic")) {
      doc.annotated = true;
      if (!e["semantic"].is_null()) {
        if (!e["semantic"].is_number_integer()) throw DocumentError("'semantic' must be int or null", index);
        semantic = e["semantic"].get<int>();
      }
    }
    if (e.contains("instance")) {
      if (!e["instance"].is_number_integer()) throw DocumentError("'instance' must be an integer", index);
      instance = e["instance"].get<int>();
    }
    check_label(doc, semantic, instance, index);
    std::vector<Primitive> out;
    if (kind == "line") {
      out.push_back(Primitive::make_line({detail::num(e, "x1", index), detail::num(e, "y1", index)},
                                         {detail::num(e, "x2", index), detail::num(e, "y2", index)}));
    } else if (kind == "circle") {
      out.push_back(Primitive::make_circle({detail::num(e, "cx", index), detail::num(e, "cy", index)},
                                           detail::num(e, "r", index)));
    } else if (kind == "ellipse") {
      out.push_back(Primitive::make_ellipse({detail::num(e, "cx", index), detail::num(e, "cy", index)},
                                            detail::num(e, "rx", index), detail::num(e, "ry", index),
                                            e.contains("rot") ? detail::num(e, "rot", index) : 0.0));
    } else if (kind == "arc") {
      out.push_back(Primitive::make_arc({detail::num(e, "cx", index), detail::num(e, "cy", index)},
                                        detail::num(e, "r", index), detail::num(e, "a0", index),
                                        detail::num(e, "a1", index)));
    } else if (kind == "polyline") {
      if (!e.contains("pts") || !e["pts"].is_array()) throw DocumentError("polyline needs 'pts'", index);
      const auto& pts = e["pts"];
      if (pts.size() < 2) throw DocumentError("polyline needs at least 2 points", index);
      std::vector<Vec2> v;
      for (const auto& p : pts) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
          throw DocumentError("polyline point must be [x, y]", index);
        v.push_back({p[0].get<double>(), p[1].get<double>()});
      }
      for (std::size_t k = 0; k + 1 < v.size(); ++k) out.push_back(Primitive::make_line(v[k], v[k + 1]));
    } else {
      throw DocumentError("unknown primitive kind '" + kind + "'", index);
    }
    for (auto& p : out) {
      validate_primitive(p, index);
      doc.primitives.push_back(with_label(p, semantic, instance));
    }
    ++index;
  }
  return doc;
}

inline nlohmann::json category_json(const Category& c) {
  return {{"id", c.id}, {"name", c.name}, {"is_thing", c.is_thing}, {"color", c.color}};
}

inline std::string serialize_document(const Document& doc) {
  nlohmann::json j;
  j["id"] = doc.id;
  j["width"] = doc.width;
  j["height"] = doc.height;
  j["categories"] = nlohmann::json::array();
  for (const auto& c : doc.categories) j["categories"].push_back(category_json(c));
  j["primitives"] = nlohmann::json::array();
  for (const auto& p : doc.primitives) {
    nlohmann::json e;
    e["kind"] = kind_name(p.kind);
    switch (p.kind) {
      case PrimitiveKind::line:
        e["x1"] = p.v1.x;
        e["y1"] = p.v1.y;
        e["x2"] = p.v2.x;
        e["y2"] = p.v2.y;
        break;
      case PrimitiveKind::arc:
        e["cx"] = p.center.x;
        e["cy"] = p.center.y;
        e["r"] = p.radius;
        e["a0"] = p.start_angle;
        e["a1"] = p.end_angle;
        break;
      case PrimitiveKind::circle:
        e["cx"] = p.center.x;
        e["cy"] = p.center.y;
        e["r"] = p.radius;
        break;
      case PrimitiveKind::ellipse:
        e["cx"] = p.center.x;
        e["cy"] = p.center.y;
        e["rx"] = p.rx;
        e["ry"] = p.ry;
        e["rot"] = p.rotation;
        break;
    }
    if (doc.annotated) {
      e["semantic"] = p.semantic ? nlohmann::json(*p.semantic) : nlohmann::json(nullptr);
    }
    e["instance"] = p.instance;
    j["primitives"].push_back(std::move(e));
  }
  return j.dump(1) + "\n";
}

// ------------------------------------------------------------ predictions

struct EntityLabel {
  std::optional<int> semantic;  // nullopt: background
  int instance = -1;
  bool operator==(const EntityLabel&) const = default;
};

/// Per-primitive panoptic labels for one document.
struct PanopticPrediction {
  std::string id;
  std::vector<EntityLabel> entities;
  bool operator==(const PanopticPrediction&) const = default;
};

inline PanopticPrediction ground_truth_labels(const Document& doc) {
  PanopticPrediction p{doc.id, {}};
  for (const auto& prim : doc.primitives) p.entities.push_back({prim.semantic, prim.instance});
  return p;
}

/// Background is written as semantic -1.
inline std::string serialize_prediction(const PanopticPrediction& pred) {
  nlohmann::json j;
  j["id"] = pred.id;
  j["entities"] = nlohmann::json::array();
  for (std::size_t i = 0; i < pred.entities.size(); ++i) {
    const auto& e = pred.entities[i];
    j["entities"].push_back({{"index", i}, {"semantic", e.semantic.value_or(-1)}, {"instance", e.instance}});
  }
  return j.dump(1) + "\n";
}

/// Accepts semantic -1 or null for background. Entities may appear in any
/// order; missing indices are reported by the consumer.
inline PanopticPrediction parse_prediction(std::string_view bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw DocumentError(std::string("malformed prediction JSON: ") + e.what());
  }
  PanopticPrediction p;
  try {
    p.id = j.at("id").get<std::string>();
    const auto& ents = j.at("entities");
    std::vector<std::optional<EntityLabel>> slots;
    for (const auto& e : ents) {
      const auto index = e.at("index").get<std::size_t>();
      EntityLabel lab;
      const auto& s = e.at("semantic");
      if (!s.is_null() && s.get<int>() >= 0) lab.semantic = s.get<int>();
      lab.instance = e.value("instance", -1);
      if (index >= slots.size()) slots.resize(index + 1);
      if (slots[index]) throw DocumentError("duplicate prediction entry", index);
      slots[index] = lab;
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i]) throw DocumentError("missing prediction entry", i);
      p.entities.push_back(*slots[i]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DocumentError(std::string("prediction schema: ") + e.what());
  }
  return p;
}

// ------------------------------------------------------------ SVG import

struct SvgImport {
  Document doc;
  std::size_t warnings = 0;
};

namespace detail {

inline double svg_length(const std::string& s) {
  std::string t = s;
  if (t.size() > 2 && t.compare(t.size() - 2, 2, "px") == 0) t.resize(t.size() - 2);
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    return v;
  } catch (const std::exception&) {
    throw DocumentError("bad SVG length '" + s + "'");
  }
}

inline std::vector<double> svg_numbers(const std::string& s) {
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  return out;
}

}  // namespace detail

/// Best-effort import of `line`, `polyline`, `circle`, `ellipse`. Other
/// drawable elements are skipped and counted as warnings. Optional
/// `data-semantic` / `data-instance` attributes carry annotations, checked
/// against `categories`.
inline SvgImport import_svg(std::string_view bytes, const std::vector<Category>& categories = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in{std::string(bytes)};
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw DocumentError(std::string("malformed XML: ") + e.what());
  }
  auto root_it = tree.find("svg");
  if (root_it == tree.not_found()) throw DocumentError("no <svg> root element");
  SvgImport result;
  Document& doc = result.doc;
  doc.id = "svg";
  doc.categories = categories;
  const auto& root = root_it->second;
  auto attr = [](const pt::ptree& node, const char* name) -> std::optional<std::string> {
    auto a = node.get_child_optional("<xmlattr>");
    if (!a) return std::nullopt;
    auto v = a->get_optional<std::string>(name);
    if (!v) return std::nullopt;
    return *v;
  };
  auto need = [&](const pt::ptree& node, const char* name) {
    auto v = attr(node, name);
    return v ? detail::svg_length(*v) : 0.0;
  };
  if (auto w = attr(root, "width")) doc.width = detail::svg_length(*w);
  if (auto h = attr(root, "height")) doc.height = detail::svg_length(*h);
  if (auto vb = attr(root, "viewBox"); vb && (doc.width <= 0 || doc.height <= 0)) {
    const auto v = detail::svg_numbers(*vb);
    if (v.size() == 4) {
      doc.width = v[2];
      doc.height = v[3];
    }
  }
  if (doc.width <= 0) doc.width = 1;
  if (doc.height <= 0) doc.height = 1;

  std::size_t index = 0;
  auto visit = [&](auto&& self, const pt::ptree& node) -> void {
    for (const auto& [name, child] : node) {
      if (name == "<xmlattr>" || name == "<xmlcomment>" || name == "<xmltext>") continue;
      if (name == "g" || name == "svg") {
        self(self, child);
        continue;
      }
      std::vector<Primitive> out;
      if (name == "line") {
        out.push_back(Primitive::make_line({need(child, "x1"), need(child, "y1")}, {need(child, "x2"), need(child, "y2")}));
      } else if (name == "polyline") {
        const auto v = detail::svg_numbers(attr(child, "points").value_or(""));
        for (std::size_t k = 0; k + 3 < v.size(); k += 2)
          out.push_back(Primitive::make_line({v[k], v[k + 1]}, {v[k + 2], v[k + 3]}));
      } else if (name == "circle") {
        out.push_back(Primitive::make_circle({need(child, "cx"), need(child, "cy")}, need(child, "r")));
      } else if (name == "ellipse") {
        out.push_back(Primitive::make_ellipse({need(child, "cx"), need(child, "cy")}, need(child, "rx"), need(child, "ry"), 0.0));
      } else {
        ++result.warnings;
        continue;
      }
      std::optional<int> semantic;
      int instance = -1;
      if (auto s = attr(child, "data-semantic")) {
        doc.annotated = true;
        semantic = std::stoi(*s);
      }
      if (auto s = attr(child, "data-instance")) instance = std::stoi(*s);
      check_label(doc, semantic, instance, index);
      for (auto& p : out) {
        validate_primitive(p, index);
        doc.primitives.push_back(with_label(p, semantic, instance));
      }
      ++index;
    }
  };
  visit(visit, root);
  return result;
}

// ------------------------------------------------------------ rendering

namespace detail {

inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
  return buf;
}

/// Lightens `#rrggbb` toward white by `t` in [0, 1].
inline std::string tint(const std::string& hex, double t) {
  if (hex.size() != 7 || hex[0] != '#') return hex;
  auto channel = [&](std::size_t off) {
    const int c = std::stoi(hex.substr(off, 2), nullptr, 16);
    return static_cast<int>(std::lround(c + (255 - c) * t));
  };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", channel(1), channel(3), channel(5));
  return buf;
}

}  // namespace detail

inline constexpr const char* kBackgroundColor = "#9e9e9e";

/// Strokes every primitive in its predicted class color. Thing instances
/// cycle through tints and dash patterns so neighbours stay distinguishable.
inline std::string render_panoptic(const Document& doc, const PanopticPrediction& pred) {
  if (pred.entities.size() < doc.primitives.size()) {
    throw DocumentError("missing prediction entry", pred.entities.size());
  }
  using detail::fmt_num;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt_num(doc.width) << "\" height=\""
     << fmt_num(doc.height) << "\" viewBox=\"0 0 " << fmt_num(doc.width) << " " << fmt_num(doc.height) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  for (std::size_t i = 0; i < doc.primitives.size(); ++i) {
    const auto& p = doc.primitives[i];
    const auto& lab = pred.entities[i];
    std::string color = kBackgroundColor;
    std::string dash;
    if (lab.semantic) {
      const auto* c = doc.category(*lab.semantic);
      color = c ? c->color : std::string("#000000");
      if (c && c->is_thing && lab.instance > 0) {
        color = detail::tint(color, 0.18 * double(lab.instance % 4));
        if ((lab.instance / 4) % 2 == 1) dash = " stroke-dasharray=\"3 1\"";
      }
    }
    const std::string style = " fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1\"" + dash +
                              " data-index=\"" + std::to_string(i) + "\" data-semantic=\"" +
                              std::to_string(lab.semantic.value_or(-1)) + "\" data-instance=\"" +
                              std::to_string(lab.instance) + "\"";
    switch (p.kind) {
      case PrimitiveKind::line:
        os << "<line x1=\"" << fmt_num(p.v1.x) << "\" y1=\"" << fmt_num(p.v1.y) << "\" x2=\"" << fmt_num(p.v2.x)
           << "\" y2=\"" << fmt_num(p.v2.y) << "\"" << style << "/>\n";
        break;
      case PrimitiveKind::circle:
        os << "<circle cx=\"" << fmt_num(p.center.x) << "\" cy=\"" << fmt_num(p.center.y) << "\" r=\""
           << fmt_num(p.radius) << "\"" << style << "/>\n";
        break;
      case PrimitiveKind::ellipse:
        os << "<ellipse cx=\"" << fmt_num(p.center.x) << "\" cy=\"" << fmt_num(p.center.y) << "\" rx=\""
           << fmt_num(p.rx) << "\" ry=\"" << fmt_num(p.ry) << "\" transform=\"rotate("
           << fmt_num(p.rotation * 180.0 / std::numbers::pi) << " " << fmt_num(p.center.x) << " "
           << fmt_num(p.center.y) << ")\"" << style << "/>\n";
        break;
      case PrimitiveKind::arc: {
        const double span = p.end_angle - p.start_angle;
        if (std::abs(span) >= 2.0 * std::numbers::pi - 1e-9) {
          os << "<circle cx=\"" << fmt_num(p.center.x) << "\" cy=\"" << fmt_num(p.center.y) << "\" r=\""
             << fmt_num(p.radius) << "\"" << style << "/>\n";
          break;
        }
        os << "<path d=\"M " << fmt_num(p.v1.x) << " " << fmt_num(p.v1.y) << " A " << fmt_num(p.radius) << " "
           << fmt_num(p.radius) << " 0 " << (std::abs(span) > std::numbers::pi ? 1 : 0) << " "
           << (span > 0 ? 1 : 0) << " " << fmt_num(p.v2.x) << " " << fmt_num(p.v2.y) << "\"" << style << "/>\n";
        break;
      }
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace sympoint
