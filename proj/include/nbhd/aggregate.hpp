#pragma once

// Tile and panorama predictions -> CBG indicators -> standardized panel.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nbhd/elicit.hpp"
#include "nbhd/ingest.hpp"
#include "nbhd/types.hpp"

namespace nbhd::aggregate {

struct WeightedValue {
  double value = 0.0;
  int weight = 0;
};

/// Σ wᵢvᵢ / Σ wᵢ. Throws EmptyInput when there is nothing (or only zero
/// weight) to average.
double cbg_mean(std::span<const WeightedValue> values);

enum class SdConvention { Sample, Population };

/// zᵢ = (vᵢ − mean)/sd. Throws EmptyInput for fewer than two values and
/// DegenerateVariance when sd is zero.
std::vector<double> standardize(std::span<const double> values, SdConvention sd = SdConvention::Sample);

/// siᵢ = canopy_zᵢ − poverty_zᵢ. Throws LengthMismatch.
std::vector<double> sustainability_index(std::span<const double> canopy_z, std::span<const double> poverty_z);

/// One measurement approach's raw CBG values.
struct CbgAggregate {
  std::optional<double> poverty;
  std::optional<double> canopy;
  int weight_images = 0;
};
using Aggregates = std::map<std::string, CbgAggregate>;

/// Panorama value = mean of its tiles' consensus values (nulls skipped),
/// weighted by the panorama's valid-tile count when pooled to the CBG.
Aggregates aggregate_mllm(const std::vector<ingest::PanoramaRecord>& panos,
                          const std::vector<elicit::ElicitationResult>& results);

/// Segmentation shares are per panorama already; same valid-tile weighting.
Aggregates aggregate_segmentation(const std::vector<ingest::PanoramaRecord>& panos,
                                  const std::vector<ingest::SegmentationShares>& shares);

std::string write_aggregates(const Aggregates& a);
Aggregates parse_aggregates(std::string_view text, const std::string& source = "<aggregates>");

// ---------------------------------------------------------------------------
// Panel

enum class StandardizationScope { EstimationSample, FullSample };
std::string_view to_string(StandardizationScope s);
StandardizationScope parse_scope(std::string_view s);

struct SampleSpec {
  Comparison comparison = Comparison::All;
  StandardizationScope scope = StandardizationScope::EstimationSample;
  SdConvention sd = SdConvention::Sample;
};

struct PanelRow {
  std::string cbg_id;
  Approach approach = Approach::Authoritative;
  double poverty_raw = 0.0;
  double canopy_raw = 0.0;
  double poverty_z = 0.0;
  double canopy_z = 0.0;
  int weight_images = 0;
  std::map<std::string, std::optional<double>> covariates;
  HolcGroup holc_group = HolcGroup::Unassigned;
  std::string zip_code;

  double si_z() const { return canopy_z - poverty_z; }
  double outcome(Outcome o) const;
  /// 1 for redlined CBGs, 0 otherwise.
  double redlined() const { return holc_group == HolcGroup::Redlined ? 1.0 : 0.0; }
};

/// One row per (approach, cbg_id), approach-major then cbg_id ascending. All
/// approaches share the same CBG set.
struct Panel {
  SampleSpec spec;
  std::vector<PanelRow> rows;
  /// CBGs removed by the common-sample rule, with the reason.
  std::map<std::string, std::string> excluded;

  std::vector<std::string> cbg_ids() const;
  std::size_t n_cbgs() const { return rows.size() / kApproaches.size(); }
  /// Rows of one approach, in cbg_id order.
  std::vector<const PanelRow*> layer(Approach a) const;
};

/// Builds the common-sample panel. `kept` is the min-images filter result;
/// CBGs lacking any approach's value are excluded from all approaches.
Panel build_panel(const std::vector<ingest::CbgRaw>& raw, const Aggregates& mllm, const Aggregates& seg,
                  const std::set<std::string>& kept, const SampleSpec& spec);

/// Re-derives z-scores from raw values for a comparison sample. With
/// EstimationSample scope the moments come from the restricted rows; with
/// FullSample scope they come from every row of `panel`.
Panel restrict_panel(const Panel& panel, const SampleSpec& spec);

std::string write_panel(const Panel& panel);
Panel parse_panel(std::string_view text, const std::string& source = "<panel>");
nlohmann::json panel_meta(const Panel& panel);

}  // namespace nbhd::aggregate
