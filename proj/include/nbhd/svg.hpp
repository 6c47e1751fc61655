#pragma once

// Static SVG figures for the report bundle. All numbers printed into the
// markup (coordinates and labels) use 6 significant digits.

#include <string>
#include <vector>

#include "nbhd/aggregate.hpp"
#include "nbhd/econ.hpp"
#include "nbhd/quantfit.hpp"
#include "nbhd/stackinf.hpp"

namespace nbhd::svg {

/// Treatment effects across the specification ladder: one panel per
/// (outcome, comparison), δ ± 1.96·SE per approach and variant.
std::string ladder_figure(const std::vector<econ::LadderCell>& cells);

/// Violins of the bootstrap totals per approach. Labels are bootstrap means;
/// red bars mark the percentile intervals.
std::string violin_figure(const stackinf::BootstrapDistribution& dist, Outcome outcome, Comparison comparison);

/// Panel A: adjusted R² point and interval per specification.
/// Panel B: authoritative against each method's prediction (z-scores).
std::string explanatory_figure(const std::vector<quantfit::R2Cell>& cells, const aggregate::Panel& panel);

/// Pseudo-R² by τ for each (outcome, approach).
std::string quantile_figure(const std::vector<quantfit::QuantileCell>& cells);

}  // namespace nbhd::svg
