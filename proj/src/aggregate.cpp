#include "nbhd/aggregate.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbhd/csv.hpp"
#include "nbhd/error.hpp"
#include "nbhd/util.hpp"

namespace nbhd::aggregate {

double cbg_mean(std::span<const WeightedValue> values) {
  double num = 0.0;
  long long den = 0;
  for (const auto& v : values) {
    if (v.weight < 0) throw Error(ErrorKind::EmptyInput, "negative weight");
    num += v.value * v.weight;
    den += v.weight;
  }
  if (den == 0) throw Error(ErrorKind::EmptyInput, "no weighted values to average");
  return num / static_cast<double>(den);
}

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(std::span<const double> values, SdConvention sd) {
  const std::size_t n = values.size();
  if (n < 2) throw Error(ErrorKind::EmptyInput, "standardize needs at least two values");
  Moments m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.sd = std::sqrt(ss / static_cast<double>(sd == SdConvention::Sample ? n - 1 : n));
  // Relative test: a constant vector can leave rounding noise in ss.
  if (!(m.sd > 1e-14 * std::max(1.0, std::abs(m.mean)))) throw Error(ErrorKind::DegenerateVariance, "sd is zero");
  return m;
}

}  // namespace

std::vector<double> standardize(std::span<const double> values, SdConvention sd) {
  const auto m = moments(values, sd);
  std::vector<double> z(values.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (values[i] - m.mean) / m.sd;
  return z;
}

std::vector<double> sustainability_index(std::span<const double> canopy_z, std::span<const double> poverty_z) {
  if (canopy_z.size() != poverty_z.size())
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(canopy_z.size()) + " canopy vs " + std::to_string(poverty_z.size()) + " poverty");
  std::vector<double> si(canopy_z.size());
  for (std::size_t i = 0; i < si.size(); ++i) si[i] = canopy_z[i] - poverty_z[i];
  return si;
}

// ---------------------------------------------------------------------------

namespace {

struct PanoValue {
  std::optional<double> poverty, canopy;
};

Aggregates pool(const std::vector<ingest::PanoramaRecord>& panos, const std::map<std::string, PanoValue>& values) {
  std::map<std::string, std::vector<WeightedValue>> pov, can;
  Aggregates out;
  for (const auto& p : panos) {
    if (p.n_valid_tiles == 0) continue;
    out[p.cbg_id].weight_images += p.n_valid_tiles;
    auto it = values.find(p.pano_id);
    if (it == values.end()) continue;
    if (it->second.poverty) pov[p.cbg_id].push_back({*it->second.poverty, p.n_valid_tiles});
    if (it->second.canopy) can[p.cbg_id].push_back({*it->second.canopy, p.n_valid_tiles});
  }
  for (auto& [cbg, agg] : out) {
    if (auto it = pov.find(cbg); it != pov.end()) agg.poverty = cbg_mean(it->second);
    if (auto it = can.find(cbg); it != can.end()) agg.canopy = cbg_mean(it->second);
  }
  return out;
}

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

Aggregates aggregate_mllm(const std::vector<ingest::PanoramaRecord>& panos,
                          const std::vector<elicit::ElicitationResult>& results) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> tiles;
  for (const auto& r : results) {
    auto& t = tiles[r.pano_id];
    if (r.consensus_poverty) t.first.push_back(*r.consensus_poverty);
    if (r.consensus_canopy) t.second.push_back(*r.consensus_canopy);
  }
  std::map<std::string, PanoValue> values;
  for (const auto& [pano, t] : tiles) values[pano] = {mean_of(t.first), mean_of(t.second)};
  return pool(panos, values);
}

Aggregates aggregate_segmentation(const std::vector<ingest::PanoramaRecord>& panos,
                                  const std::vector<ingest::SegmentationShares>& shares) {
  std::map<std::string, PanoValue> values;
  for (const auto& s : shares) values[s.pano_id] = {s.poverty_proxy, s.canopy_share};
  return pool(panos, values);
}

std::string write_aggregates(const Aggregates& a) {
  csv::Writer w({"cbg_id", "poverty", "canopy", "weight_images"});
  for (const auto& [cbg, v] : a)
    w.add_row({cbg, v.poverty ? format_exact(*v.poverty) : "", v.canopy ? format_exact(*v.canopy) : "",
               std::to_string(v.weight_images)});
  return w.str();
}

Aggregates parse_aggregates(std::string_view text, const std::string& source) {
  const auto t = csv::Table::parse(text, source);
  Aggregates out;
  for (const auto& row : t.rows()) {
    CbgAggregate a;
    const auto& p = t.cell(row, "poverty");
    const auto& c = t.cell(row, "canopy");
    try {
      if (!trim(p).empty()) a.poverty = parse_double(p);
      if (!trim(c).empty()) a.canopy = parse_double(c);
      a.weight_images = static_cast<int>(parse_int(t.cell(row, "weight_images")));
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorKind::MalformedRow, source + ":" + std::to_string(row.line) + ": " + e.what());
    }
    out[t.cell(row, "cbg_id")] = a;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Panel

std::string_view to_string(StandardizationScope s) {
  return s == StandardizationScope::EstimationSample ? "estimation_sample" : "full_sample";
}

StandardizationScope parse_scope(std::string_view s) {
  if (s == "estimation_sample") return StandardizationScope::EstimationSample;
  if (s == "full_sample") return StandardizationScope::FullSample;
  throw Error(ErrorKind::ConfigInvalid, "standardization scope must be estimation_sample or full_sample");
}

double PanelRow::outcome(Outcome o) const {
  switch (o) {
    case Outcome::Poverty: return poverty_z;
    case Outcome::Canopy: return canopy_z;
    case Outcome::Si: return si_z();
  }
  return 0.0;
}

std::vector<std::string> Panel::cbg_ids() const {
  std::vector<std::string> ids;
  for (const auto& r : rows)
    if (r.approach == Approach::Authoritative) ids.push_back(r.cbg_id);
  return ids;
}

std::vector<const PanelRow*> Panel::layer(Approach a) const {
  std::vector<const PanelRow*> out;
  for (const auto& r : rows)
    if (r.approach == a) out.push_back(&r);
  return out;
}

namespace {

bool row_order(const PanelRow& a, const PanelRow& b) {
  return std::tie(a.approach, a.cbg_id) < std::tie(b.approach, b.cbg_id);
}

// z-scores per approach, with moments taken from the `source` rows.
void apply_z(std::vector<PanelRow>& rows, const std::vector<PanelRow>& source, SdConvention sd) {
  for (Approach a : kApproaches) {
    std::vector<double> pov, can;
    for (const auto& r : source)
      if (r.approach == a) {
        pov.push_back(r.poverty_raw);
        can.push_back(r.canopy_raw);
      }
    const auto mp = moments(pov, sd);
    const auto mc = moments(can, sd);
    for (auto& r : rows)
      if (r.approach == a) {
        r.poverty_z = (r.poverty_raw - mp.mean) / mp.sd;
        r.canopy_z = (r.canopy_raw - mc.mean) / mc.sd;
      }
  }
}

}  // namespace

Panel restrict_panel(const Panel& panel, const SampleSpec& spec) {
  Panel out;
  out.spec = spec;
  out.excluded = panel.excluded;
  for (const auto& r : panel.rows)
    if (in_comparison(r.holc_group, spec.comparison)) out.rows.push_back(r);
  std::sort(out.rows.begin(), out.rows.end(), row_order);
  if (out.rows.empty()) throw Error(ErrorKind::EmptyInput, "no CBGs in comparison " + std::string(to_string(spec.comparison)));
  apply_z(out.rows, spec.scope == StandardizationScope::EstimationSample ? out.rows : panel.rows, spec.sd);
  return out;
}

Panel build_panel(const std::vector<ingest::CbgRaw>& raw, const Aggregates& mllm, const Aggregates& seg,
                  const std::set<std::string>& kept, const SampleSpec& spec) {
  Panel full;
  full.spec = spec;
  std::set<std::string> seen;
  for (const auto& r : raw) {
    if (!kept.count(r.cbg_id)) continue;
    seen.insert(r.cbg_id);
    std::string missing;
    auto m = mllm.find(r.cbg_id);
    auto s = seg.find(r.cbg_id);
    if (m == mllm.end() || !m->second.poverty || !m->second.canopy) missing = "mllm";
    else if (s == seg.end() || !s->second.poverty || !s->second.canopy) missing = "segmentation";
    if (!missing.empty()) {
      full.excluded[r.cbg_id] = std::string(to_string(ErrorKind::MissingApproachValue)) + ": " + missing;
      continue;
    }
    const int images = std::max(m->second.weight_images, s->second.weight_images);
    auto make = [&](Approach a, double pov, double can) {
      PanelRow row;
      row.cbg_id = r.cbg_id;
      row.approach = a;
      row.poverty_raw = pov;
      row.canopy_raw = can;
      row.weight_images = images;
      row.covariates = r.covariates;
      row.holc_group = r.holc_group;
      row.zip_code = r.zip_code;
      full.rows.push_back(std::move(row));
    };
    make(Approach::Authoritative, r.acs_poverty, r.geie_canopy);
    make(Approach::Mllm, *m->second.poverty, *m->second.canopy);
    make(Approach::Segmentation, *s->second.poverty, *s->second.canopy);
  }
  for (const auto& id : kept)
    if (!seen.count(id)) full.excluded[id] = "no authoritative record";
  if (!full.excluded.empty())
    spdlog::warn("common-sample rule excluded {} CBG(s) from every approach", full.excluded.size());
  return restrict_panel(full, spec);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::vector<std::string> covariate_columns(const Panel& p) {
  std::set<std::string> names;
  for (const auto& r : p.rows)
    for (const auto& [k, _] : r.covariates) names.insert(k);
  std::vector<std::string> out;
  for (const auto& k : ingest::kDefaultCovariates)
    if (names.erase(k)) out.push_back(k);
  out.insert(out.end(), names.begin(), names.end());
  return out;
}

}  // namespace

std::string write_panel(const Panel& panel) {
  const auto covs = covariate_columns(panel);
  std::vector<std::string> header{"cbg_id",      "approach",  "holc_group", "zip_code", "weight_images",
                                  "poverty_raw", "canopy_raw", "poverty_z", "canopy_z",  "si_z"};
  for (const auto& c : covs) header.push_back("cov_" + c);
  csv::Writer w(header);
  for (const auto& r : panel.rows) {
    std::vector<std::string> cells{r.cbg_id,
                                   std::string(to_string(r.approach)),
                                   std::string(to_string(r.holc_group)),
                                   r.zip_code,
                                   std::to_string(r.weight_images),
                                   format_exact(r.poverty_raw),
                                   format_exact(r.canopy_raw),
                                   format_exact(r.poverty_z),
                                   format_exact(r.canopy_z),
                                   format_exact(r.si_z())};
    for (const auto& c : covs) {
      auto it = r.covariates.find(c);
      cells.push_back(it != r.covariates.end() && it->second ? format_exact(*it->second) : "");
    }
    w.add_row(cells);
  }
  return w.str();
}

Panel parse_panel(std::string_view text, const std::string& source) {
  const auto t = csv::Table::parse(text, source);
  std::vector<std::string> covs;
  for (const auto& h : t.header())
    if (h.rfind("cov_", 0) == 0) covs.push_back(h);
  Panel p;
  for (const auto& row : t.rows()) {
    PanelRow r;
    try {
      r.cbg_id = t.cell(row, "cbg_id");
      r.approach = parse_approach(t.cell(row, "approach"));
      r.holc_group = parse_holc_group(t.cell(row, "holc_group"));
      r.zip_code = t.cell(row, "zip_code");
      r.weight_images = static_cast<int>(parse_int(t.cell(row, "weight_images")));
      r.poverty_raw = parse_double(t.cell(row, "poverty_raw"));
      r.canopy_raw = parse_double(t.cell(row, "canopy_raw"));
      r.poverty_z = parse_double(t.cell(row, "poverty_z"));
      r.canopy_z = parse_double(t.cell(row, "canopy_z"));
      for (const auto& c : covs) {
        const auto& cell = t.cell(row, c);
        r.covariates[c.substr(4)] = trim(cell).empty() ? std::nullopt : std::optional<double>(parse_double(cell));
      }
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorKind::MalformedRow, source + ":" + std::to_string(row.line) + ": " + e.what());
    }
    p.rows.push_back(std::move(r));
  }
  std::sort(p.rows.begin(), p.rows.end(), row_order);
  // Common-sample rule must hold for anything we read back.
  const auto auth = p.layer(Approach::Authoritative);
  for (Approach a : kApproaches) {
    const auto l = p.layer(a);
    if (l.size() != auth.size())
      throw Error(ErrorKind::MissingApproachValue, source + ": approach layers have different CBG sets");
    for (std::size_t i = 0; i < l.size(); ++i)
      if (l[i]->cbg_id != auth[i]->cbg_id)
        throw Error(ErrorKind::MissingApproachValue, source + ": " + auth[i]->cbg_id + " lacks " +
                                                         std::string(to_string(a)));
  }
  return p;
}

nlohmann::json panel_meta(const Panel& panel) {
  nlohmann::json j;
  j["comparison"] = to_string(panel.spec.comparison);
  j["standardization_scope"] = to_string(panel.spec.scope);
  j["sd_convention"] = panel.spec.sd == SdConvention::Sample ? "sample_n_minus_1" : "population_n";
  j["n_cbgs"] = panel.n_cbgs();
  j["n_rows"] = panel.rows.size();
  nlohmann::json groups = nlohmann::json::object();
  for (const auto* r : panel.layer(Approach::Authoritative)) {
    const std::string g(to_string(r->holc_group));
    groups[g] = groups.value(g, 0) + 1;
  }
  j["holc_groups"] = groups;
  nlohmann::json ex = nlohmann::json::object();
  for (const auto& [cbg, why] : panel.excluded) ex[cbg] = why;
  j["excluded"] = ex;
  return j;
}

}  // namespace nbhd::aggregate
