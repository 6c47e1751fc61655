#include "nbhd/ingest.hpp"

#include <algorithm>
#include <cctype>

#include <spdlog/spdlog.h>

#include "nbhd/csv.hpp"
#include "nbhd/error.hpp"
#include "nbhd/util.hpp"

namespace nbhd::ingest {

namespace {

std::string where(const csv::Table& t, const csv::Row& r) {
  return t.source() + ":" + std::to_string(r.line);
}

bool parse_bool(const std::string& raw, const std::string& ctx) {
  std::string v = trim(raw);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "t") return true;
  if (v == "false" || v == "0" || v == "no" || v == "f") return false;
  throw Error(ErrorKind::MalformedRow, ctx + ": invalid boolean '" + raw + "'");
}

double parse_fraction(const std::string& raw, const std::string& field, const std::string& ctx) {
  double v;
  try {
    v = parse_double(raw);
  } catch (const std::invalid_argument& e) {
    throw Error(ErrorKind::MalformedRow, ctx + ": " + field + ": " + e.what());
  }
  if (!(v >= 0.0 && v <= 1.0))
    throw Error(ErrorKind::OutOfRangeFraction, ctx + ": " + field + "=" + trim(raw));
  return v;
}

bool is_null_token(const std::string& raw) {
  const std::string v = trim(raw);
  return v.empty() || v == "NA" || v == "NaN" || v == "null";
}

}  // namespace

ManifestLoad parse_manifest(std::string_view text, const ManifestOptions& opts, const std::string& source) {
  const auto table = csv::Table::parse(text, source);
  const auto c_pano = table.column("pano_id");
  const auto c_cbg = table.column("cbg_id");
  const auto c_year = table.column("year");
  const auto c_heading = table.column("heading");
  const auto c_valid = table.column("valid");
  const auto c_ref = table.column("image_ref");

  ManifestLoad out;
  std::map<std::string, PanoramaRecord> by_pano;
  for (const auto& row : table.rows()) {
    ++out.rows_read;
    const std::string ctx = where(table, row);
    int year = 0, heading = 0;
    try {
      year = static_cast<int>(parse_int(row.cells[c_year]));
      heading = static_cast<int>(parse_int(row.cells[c_heading]));
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorKind::MalformedRow, ctx + ": " + e.what());
    }
    if (std::find(kCardinalHeadings.begin(), kCardinalHeadings.end(), heading) == kCardinalHeadings.end())
      throw Error(ErrorKind::MalformedRow, ctx + ": heading " + std::to_string(heading) + " is not cardinal");
    const std::string pano_id = trim(row.cells[c_pano]);
    const std::string cbg_id = trim(row.cells[c_cbg]);
    if (pano_id.empty() || cbg_id.empty()) throw Error(ErrorKind::MalformedRow, ctx + ": empty pano_id or cbg_id");
    const bool valid = parse_bool(row.cells[c_valid], ctx);
    if (year != opts.target_year) {
      ++out.rows_dropped_off_year;
      continue;
    }
    auto [it, fresh] = by_pano.try_emplace(pano_id);
    auto& pano = it->second;
    if (fresh) {
      pano.pano_id = pano_id;
      pano.cbg_id = cbg_id;
      pano.capture_year = year;
    } else if (pano.cbg_id != cbg_id) {
      throw Error(ErrorKind::MalformedRow, ctx + ": panorama " + pano_id + " assigned to two CBGs");
    }
    for (const auto& t : pano.tiles)
      if (t.heading == heading)
        throw Error(ErrorKind::DuplicateTile, ctx + ": " + pano_id + " heading " + std::to_string(heading));
    pano.tiles.push_back({heading, valid, row.cells[c_ref]});
    if (valid) ++pano.n_valid_tiles;
  }
  if (out.rows_dropped_off_year > 0)
    spdlog::info("{}: dropped {} tile rows captured outside {}", source, out.rows_dropped_off_year,
                 opts.target_year);
  out.panoramas.reserve(by_pano.size());
  for (auto& [_, p] : by_pano) {
    std::sort(p.tiles.begin(), p.tiles.end(), [](const auto& a, const auto& b) { return a.heading < b.heading; });
    out.panoramas.push_back(std::move(p));
  }
  return out;
}

ManifestLoad load_manifest(const std::filesystem::path& path, const ManifestOptions& opts) {
  return parse_manifest(read_file(path), opts, path.string());
}

std::string write_manifest(const std::vector<PanoramaRecord>& panos) {
  csv::Writer w({"pano_id", "cbg_id", "year", "heading", "valid", "image_ref"});
  std::vector<const PanoramaRecord*> sorted;
  for (const auto& p : panos) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->pano_id < b->pano_id; });
  for (const auto* p : sorted)
    for (const auto& t : p->tiles)
      w.add_row({p->pano_id, p->cbg_id, std::to_string(p->capture_year), std::to_string(t.heading),
                 t.valid ? "true" : "false", t.image_ref});
  return w.str();
}

CbgFilter filter_cbgs(const std::vector<PanoramaRecord>& panos, int min_images) {
  if (min_images < 1) throw Error(ErrorKind::ConfigInvalid, "min_images must be >= 1");
  CbgFilter out;
  for (const auto& p : panos) out.valid_images[p.cbg_id] += p.n_valid_tiles;
  for (const auto& [cbg, count] : out.valid_images) (count >= min_images ? out.kept : out.dropped).insert(cbg);
  return out;
}

std::vector<CbgRaw> parse_authoritative(std::string_view acs_csv, std::string_view geie_csv,
                                        const std::map<std::string, geo::MultiPolygon>& shapes) {
  const auto acs = csv::Table::parse(acs_csv, "<acs>");
  const auto geie = csv::Table::parse(geie_csv, "<geie>");

  std::map<std::string, double> canopy;
  {
    const auto c_id = geie.column("cbg_id");
    const auto c_val = geie.column("geie_canopy");
    for (const auto& row : geie.rows()) {
      const std::string id = trim(row.cells[c_id]);
      if (!canopy.emplace(id, parse_fraction(row.cells[c_val], "geie_canopy", where(geie, row))).second)
        throw Error(ErrorKind::MalformedRow, where(geie, row) + ": duplicate cbg_id " + id);
    }
  }

  static const std::set<std::string> fixed{"cbg_id", "acs_poverty", "holc_group", "zip_code"};
  std::vector<std::string> covariate_cols;
  for (const auto& h : acs.header())
    if (!fixed.contains(h)) covariate_cols.push_back(h);

  std::map<std::string, CbgRaw> out;
  for (const auto& row : acs.rows()) {
    const std::string ctx = where(acs, row);
    CbgRaw r;
    r.cbg_id = trim(acs.cell(row, "cbg_id"));
    r.acs_poverty = parse_fraction(acs.cell(row, "acs_poverty"), "acs_poverty", ctx);
    try {
      r.holc_group = parse_holc_group(trim(acs.cell(row, "holc_group")));
    } catch (const Error& e) {
      throw Error(ErrorKind::MalformedRow, ctx + ": " + e.detail());
    }
    r.zip_code = trim(acs.cell(row, "zip_code"));
    for (const auto& name : covariate_cols) {
      const auto& raw = acs.cell(row, name);
      if (is_null_token(raw)) {
        r.covariates[name] = std::nullopt;
        continue;
      }
      try {
        r.covariates[name] = parse_double(raw);
      } catch (const std::invalid_argument& e) {
        throw Error(ErrorKind::MalformedRow, ctx + ": " + name + ": " + e.what());
      }
    }
    auto c = canopy.find(r.cbg_id);
    if (c == canopy.end()) throw Error(ErrorKind::MissingOutcome, r.cbg_id + ": no geie_canopy row");
    r.geie_canopy = c->second;
    auto g = shapes.find(r.cbg_id);
    if (g == shapes.end()) throw Error(ErrorKind::MissingGeometry, r.cbg_id);
    if (auto defect = geo::validate(g->second); !defect.empty())
      throw Error(ErrorKind::InvalidGeometry, r.cbg_id + ": " + defect);
    r.geometry = g->second;
    const std::string id = r.cbg_id;
    if (!out.emplace(id, std::move(r)).second) throw Error(ErrorKind::MalformedRow, ctx + ": duplicate cbg_id " + id);
  }
  std::vector<CbgRaw> records;
  records.reserve(out.size());
  for (auto& [_, r] : out) records.push_back(std::move(r));
  return records;
}

std::vector<CbgRaw> load_authoritative(const AuthoritativeSources& src) {
  return parse_authoritative(read_file(src.acs), read_file(src.geie), geo::load_geojson(src.geo.string()));
}

std::string write_authoritative(const std::vector<CbgRaw>& records) {
  std::set<std::string> names;
  for (const auto& r : records)
    for (const auto& [k, _] : r.covariates) names.insert(k);
  std::vector<std::string> header{"cbg_id", "acs_poverty", "holc_group", "zip_code"};
  header.insert(header.end(), names.begin(), names.end());
  csv::Writer w(header);
  for (const auto& r : records) {
    std::vector<std::string> cells{r.cbg_id, format_exact(r.acs_poverty), std::string(to_string(r.holc_group)),
                                   r.zip_code};
    for (const auto& n : names) {
      auto it = r.covariates.find(n);
      cells.push_back(it != r.covariates.end() && it->second ? format_exact(*it->second) : "");
    }
    w.add_row(cells);
  }
  return w.str();
}

std::string write_canopy(const std::vector<CbgRaw>& records) {
  csv::Writer w({"cbg_id", "geie_canopy"});
  for (const auto& r : records) w.add_row({r.cbg_id, format_exact(r.geie_canopy)});
  return w.str();
}

std::vector<SegmentationShares> parse_segmentation(std::string_view text,
                                                   const std::vector<PanoramaRecord>& manifest,
                                                   const std::string& source) {
  const auto table = csv::Table::parse(text, source);
  std::set<std::string> known;
  for (const auto& p : manifest) known.insert(p.pano_id);
  static const std::set<std::string> fixed{"pano_id", "canopy_share", "poverty_proxy"};
  std::vector<std::string> classes;
  for (const auto& h : table.header())
    if (!fixed.contains(h)) classes.push_back(h);

  std::map<std::string, SegmentationShares> out;
  for (const auto& row : table.rows()) {
    const std::string ctx = where(table, row);
    SegmentationShares s;
    s.pano_id = trim(table.cell(row, "pano_id"));
    if (!known.contains(s.pano_id)) throw Error(ErrorKind::OrphanPanorama, ctx + ": " + s.pano_id);
    s.canopy_share = parse_fraction(table.cell(row, "canopy_share"), "canopy_share", ctx);
    try {
      s.poverty_proxy = parse_double(table.cell(row, "poverty_proxy"));
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorKind::MalformedRow, ctx + ": poverty_proxy: " + e.what());
    }
    double total = 0.0;
    for (const auto& c : classes) {
      const double v = parse_fraction(table.cell(row, c), c, ctx);
      s.class_shares[c] = v;
      total += v;
    }
    if (total > 1.0 + 1e-6)
      throw Error(ErrorKind::OutOfRangeFraction, ctx + ": class shares sum to " + format_sig6(total));
    const std::string id = s.pano_id;
    if (!out.emplace(id, std::move(s)).second) throw Error(ErrorKind::MalformedRow, ctx + ": duplicate pano_id " + id);
  }
  std::vector<SegmentationShares> shares;
  for (auto& [_, s] : out) shares.push_back(std::move(s));
  return shares;
}

std::vector<SegmentationShares> load_segmentation(const std::filesystem::path& path,
                                                  const std::vector<PanoramaRecord>& manifest) {
  return parse_segmentation(read_file(path), manifest, path.string());
}

std::string write_segmentation(const std::vector<SegmentationShares>& shares) {
  std::set<std::string> classes;
  for (const auto& s : shares)
    for (const auto& [k, _] : s.class_shares) classes.insert(k);
  std::vector<std::string> header{"pano_id", "canopy_share", "poverty_proxy"};
  header.insert(header.end(), classes.begin(), classes.end());
  csv::Writer w(header);
  for (const auto& s : shares) {
    std::vector<std::string> cells{s.pano_id, format_exact(s.canopy_share), format_exact(s.poverty_proxy)};
    for (const auto& c : classes) {
      auto it = s.class_shares.find(c);
      cells.push_back(format_exact(it == s.class_shares.end() ? 0.0 : it->second));
    }
    w.add_row(cells);
  }
  return w.str();
}

}  // namespace nbhd::ingest
