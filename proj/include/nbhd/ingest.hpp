#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "nbhd/geometry.hpp"
#include "nbhd/types.hpp"

namespace nbhd::ingest {

inline constexpr int kDefaultTargetYear = 2023;
inline constexpr int kDefaultMinImages = 10;
inline constexpr std::array<int, 4> kCardinalHeadings{0, 90, 180, 270};

struct TileRecord {
  int heading = 0;
  bool valid = false;
  std::string image_ref;
  bool operator==(const TileRecord&) const = default;
};

/// One street-view capture point. Tiles are kept sorted by heading.
struct PanoramaRecord {
  std::string pano_id;
  std::string cbg_id;
  int capture_year = 0;
  std::vector<TileRecord> tiles;
  int n_valid_tiles = 0;
  bool operator==(const PanoramaRecord&) const = default;
};

/// Canonical covariate order used throughout the pipeline.
inline const std::vector<std::string> kDefaultCovariates{
    "pop_density_ln", "dependency_rate", "linguistic_isolation", "black_pct",
    "hispanic_pct",   "asian_pct",       "college_pct"};

struct CbgRaw {
  std::string cbg_id;
  double acs_poverty = 0.0;
  double geie_canopy = 0.0;
  /// Nulls are allowed here; listwise deletion happens when a model is built.
  std::map<std::string, std::optional<double>> covariates;
  HolcGroup holc_group = HolcGroup::Unassigned;
  std::string zip_code;
  geo::MultiPolygon geometry;
  bool operator==(const CbgRaw&) const = default;
};

struct SegmentationShares {
  std::string pano_id;
  std::map<std::string, double> class_shares;
  double canopy_share = 0.0;
  double poverty_proxy = 0.0;
  bool operator==(const SegmentationShares&) const = default;
};

struct ManifestOptions {
  int target_year = kDefaultTargetYear;
};

struct ManifestLoad {
  std::vector<PanoramaRecord> panoramas;  // sorted by pano_id
  std::size_t rows_read = 0;
  std::size_t rows_dropped_off_year = 0;
};

/// Parses manifest CSV text (pano_id, cbg_id, year, heading, valid, image_ref).
ManifestLoad parse_manifest(std::string_view text, const ManifestOptions& opts = {},
                            const std::string& source = "<manifest>");
ManifestLoad load_manifest(const std::filesystem::path& path, const ManifestOptions& opts = {});

/// Canonical, byte-stable manifest serialization (one row per tile).
std::string write_manifest(const std::vector<PanoramaRecord>& panos);

struct CbgFilter {
  std::set<std::string> kept;
  std::set<std::string> dropped;
  std::map<std::string, int> valid_images;  // per CBG, valid tiles summed over panoramas
};

/// Keeps a CBG iff its panoramas hold at least `min_images` valid tiles.
CbgFilter filter_cbgs(const std::vector<PanoramaRecord>& panos, int min_images = kDefaultMinImages);

struct AuthoritativeSources {
  std::filesystem::path acs;   // cbg_id, acs_poverty, holc_group, zip_code, <covariates...>
  std::filesystem::path geie;  // cbg_id, geie_canopy
  std::filesystem::path geo;   // GeoJSON FeatureCollection keyed by cbg_id
};

/// Joins outcome tables with geometry. Sorted by cbg_id.
std::vector<CbgRaw> parse_authoritative(std::string_view acs_csv, std::string_view geie_csv,
                                        const std::map<std::string, geo::MultiPolygon>& shapes);
std::vector<CbgRaw> load_authoritative(const AuthoritativeSources& src);

/// Canonical CSV of the tabular part (geometry lives in GeoJSON). Covariate
/// columns are the union across records in lexicographic order.
std::string write_authoritative(const std::vector<CbgRaw>& records);
/// Companion GEIE table so that `write_authoritative` output round-trips.
std::string write_canopy(const std::vector<CbgRaw>& records);

/// Segmentation shares CSV: pano_id, canopy_share, poverty_proxy, then one
/// column per SVF class. Panoramas absent from `manifest` are rejected.
std::vector<SegmentationShares> parse_segmentation(std::string_view text,
                                                   const std::vector<PanoramaRecord>& manifest,
                                                   const std::string& source = "<segmentation>");
std::vector<SegmentationShares> load_segmentation(const std::filesystem::path& path,
                                                  const std::vector<PanoramaRecord>& manifest);
std::string write_segmentation(const std::vector<SegmentationShares>& shares);

}  // namespace nbhd::ingest
