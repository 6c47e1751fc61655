#include "nbhd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "nbhd/error.hpp"
#include "nbhd/util.hpp"

namespace nbhd::geo {

namespace {

using Segment = std::pair<Point, Point>;

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

double point_segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = a.x + t * dx - p.x, qy = a.y + t * dy - p.y;
  return std::sqrt(qx * qx + qy * qy);
}

bool proper_cross(Point a, Point b, Point c, Point d) {
  const double d1 = cross(a, b, c), d2 = cross(a, b, d);
  const double d3 = cross(c, d, a), d4 = cross(c, d, b);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

// Ring without the repeated closing vertex.
Ring open_ring(const Ring& r) {
  Ring out = r;
  if (out.size() > 1 && out.front() == out.back()) out.pop_back();
  return out;
}

void ring_segments(const Ring& r, std::vector<Segment>& out) {
  Ring open = open_ring(r);
  for (std::size_t i = 0; i < open.size(); ++i) out.emplace_back(open[i], open[(i + 1) % open.size()]);
}

std::vector<Segment> segments(const MultiPolygon& g) {
  std::vector<Segment> out;
  for (const auto& p : g.parts) {
    ring_segments(p.outer, out);
    for (const auto& h : p.holes) ring_segments(h, out);
  }
  return out;
}

double signed_area(const Ring& r) {
  double a = 0.0;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) a += r[i].x * r[i + 1].y - r[i + 1].x * r[i].y;
  if (!r.empty()) a += r.back().x * r.front().y - r.front().x * r.back().y;
  return 0.5 * a;
}

std::string validate_ring(const Ring& raw) {
  for (const auto& p : raw)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return "non-finite coordinate";
  Ring r = open_ring(raw);
  if (r.size() < 3) return "ring has fewer than three distinct vertices";
  if (std::abs(signed_area(r)) <= 0.0) return "ring has zero area";
  const std::size_t n = r.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the closing edge
      if (proper_cross(r[i], r[(i + 1) % n], r[j], r[(j + 1) % n])) return "ring self-intersects";
    }
  }
  return {};
}

Ring parse_ring(const nlohmann::json& coords) {
  Ring r;
  for (const auto& pt : coords) {
    if (!pt.is_array() || pt.size() < 2) throw Error(ErrorKind::InvalidGeometry, "bad coordinate pair");
    r.push_back({pt[0].get<double>(), pt[1].get<double>()});
  }
  return r;
}

Polygon parse_polygon(const nlohmann::json& rings) {
  if (!rings.is_array() || rings.empty()) throw Error(ErrorKind::InvalidGeometry, "polygon without rings");
  Polygon p;
  p.outer = parse_ring(rings[0]);
  for (std::size_t i = 1; i < rings.size(); ++i) p.holes.push_back(parse_ring(rings[i]));
  return p;
}

nlohmann::json ring_json(const Ring& r) {
  auto arr = nlohmann::json::array();
  for (const auto& p : r) arr.push_back({p.x, p.y});
  if (!r.empty() && !(r.front() == r.back())) arr.push_back({r.front().x, r.front().y});
  return arr;
}

}  // namespace

BBox bbox(const MultiPolygon& g) {
  BBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
         -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : g.parts)
    for (const auto& pt : p.outer) {
      b.min_x = std::min(b.min_x, pt.x);
      b.min_y = std::min(b.min_y, pt.y);
      b.max_x = std::max(b.max_x, pt.x);
      b.max_y = std::max(b.max_y, pt.y);
    }
  return b;
}

std::string validate(const MultiPolygon& g) {
  if (g.parts.empty()) return "empty geometry";
  for (const auto& p : g.parts) {
    if (auto e = validate_ring(p.outer); !e.empty()) return e;
    for (const auto& h : p.holes)
      if (auto e = validate_ring(h); !e.empty()) return "hole: " + e;
  }
  return {};
}

double segment_distance(Point a, Point b, Point c, Point d) {
  if (proper_cross(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d),
                   point_segment_distance(c, a, b), point_segment_distance(d, a, b)});
}

bool boundaries_touch(const MultiPolygon& a, const MultiPolygon& b, double tol) {
  if (!bbox(a).overlaps(bbox(b), tol)) return false;
  const auto sa = segments(a);
  const auto sb = segments(b);
  for (const auto& [p, q] : sa) {
    const BBox ba{std::min(p.x, q.x), std::min(p.y, q.y), std::max(p.x, q.x), std::max(p.y, q.y)};
    for (const auto& [r, s] : sb) {
      const BBox bb{std::min(r.x, s.x), std::min(r.y, s.y), std::max(r.x, s.x), std::max(r.y, s.y)};
      if (!ba.overlaps(bb, tol)) continue;
      if (segment_distance(p, q, r, s) <= tol) return true;
    }
  }
  return false;
}

MultiPolygon square(double x, double y, double side) {
  Polygon p;
  p.outer = {{x, y}, {x + side, y}, {x + side, y + side}, {x, y + side}, {x, y}};
  return MultiPolygon{{p}};
}

std::map<std::string, MultiPolygon> parse_geojson(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection")
    throw Error(ErrorKind::InvalidGeometry, "expected a GeoJSON FeatureCollection");
  std::map<std::string, MultiPolygon> out;
  for (const auto& feature : doc.at("features")) {
    const auto& props = feature.at("properties");
    if (!props.contains("cbg_id")) throw Error(ErrorKind::InvalidGeometry, "feature without cbg_id property");
    const auto& idv = props.at("cbg_id");
    std::string id = idv.is_string() ? idv.get<std::string>() : idv.dump();
    const auto& geom = feature.at("geometry");
    const std::string type = geom.at("type").get<std::string>();
    MultiPolygon mp;
    if (type == "Polygon") {
      mp.parts.push_back(parse_polygon(geom.at("coordinates")));
    } else if (type == "MultiPolygon") {
      for (const auto& poly : geom.at("coordinates")) mp.parts.push_back(parse_polygon(poly));
    } else {
      throw Error(ErrorKind::InvalidGeometry, id + ": unsupported geometry type " + type);
    }
    if (!out.emplace(id, std::move(mp)).second)
      throw Error(ErrorKind::InvalidGeometry, id + ": duplicate feature");
  }
  return out;
}

std::map<std::string, MultiPolygon> load_geojson(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidGeometry, path + ": " + e.what());
  }
  return parse_geojson(doc);
}

nlohmann::json to_geojson(const std::map<std::string, MultiPolygon>& shapes) {
  auto features = nlohmann::json::array();
  for (const auto& [id, mp] : shapes) {
    auto coords = nlohmann::json::array();
    for (const auto& p : mp.parts) {
      auto rings = nlohmann::json::array();
      rings.push_back(ring_json(p.outer));
      for (const auto& h : p.holes) rings.push_back(ring_json(h));
      coords.push_back(rings);
    }
    features.push_back({{"type", "Feature"},
                        {"properties", {{"cbg_id", id}}},
                        {"geometry", {{"type", "MultiPolygon"}, {"coordinates", coords}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

}  // namespace nbhd::geo
