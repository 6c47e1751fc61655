#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace nbhd::geo {

/// Planar coordinates. No re-projection is ever performed.
struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// A closed ring. The closing vertex may or may not be repeated.
using Ring = std::vector<Point>;

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
  bool operator==(const Polygon&) const = default;
};

/// Single polygons are stored as a one-element multipolygon.
struct MultiPolygon {
  std::vector<Polygon> parts;
  bool operator==(const MultiPolygon&) const = default;
};

struct BBox {
  double min_x, min_y, max_x, max_y;
  bool overlaps(const BBox& o, double tol) const {
    return min_x <= o.max_x + tol && o.min_x <= max_x + tol && min_y <= o.max_y + tol &&
           o.min_y <= max_y + tol;
  }
};

BBox bbox(const MultiPolygon& g);

/// Empty string when valid; otherwise a description of the defect (non-finite
/// coordinate, fewer than three distinct vertices, zero area, self-crossing).
std::string validate(const MultiPolygon& g);

/// Minimum distance between closed segments [a,b] and [c,d].
double segment_distance(Point a, Point b, Point c, Point d);

/// True when the boundaries of the two shapes come within `tol` of each other
/// (shared vertex, shared edge, or crossing edges).
bool boundaries_touch(const MultiPolygon& a, const MultiPolygon& b, double tol);

/// Axis-aligned square with lower-left corner (x, y).
MultiPolygon square(double x, double y, double side = 1.0);

/// Reads a GeoJSON FeatureCollection keyed by the `cbg_id` property.
std::map<std::string, MultiPolygon> parse_geojson(const nlohmann::json& doc);
std::map<std::string, MultiPolygon> load_geojson(const std::string& path);
nlohmann::json to_geojson(const std::map<std::string, MultiPolygon>& shapes);

}  // namespace nbhd::geo
