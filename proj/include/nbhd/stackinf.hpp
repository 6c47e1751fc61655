#pragma once

// Stacked three-approach regression with approach dummies and
// treatment × approach interactions, plus the CBG-level pairs cluster
// bootstrap used to test whether the interactions are zero.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "nbhd/aggregate.hpp"
#include "nbhd/econ.hpp"
#include "nbhd/spatial.hpp"
#include "nbhd/util.hpp"

namespace nbhd::stackinf {

enum class StackSpec { ZipFE, SAR };
std::string_view to_string(StackSpec s);
StackSpec parse_stack_spec(std::string_view s);

struct StackedRow {
  std::string cbg_id;
  Approach approach = Approach::Authoritative;
  double y = 0.0;
  double redlined = 0.0;
  std::vector<double> covariates;
  std::string zip_code;
  /// Resampling / clustering unit. Equals cbg_id except for bootstrap copies.
  std::string cluster_id;
  /// Row of the weights matrix this unit sits on (SAR only).
  std::size_t location = 0;
};

struct StackedData {
  std::vector<StackedRow> rows;
  std::vector<std::string> covariate_names;
};

/// Stacks one outcome of a comparison sample: three rows per CBG, covariate
/// nulls removed listwise. `w` (optional) supplies row locations for SAR.
StackedData stack_panel(const aggregate::Panel& sample, Outcome outcome, Comparison comparison,
                        const std::vector<std::string>& covariates, const spatial::WeightsMatrix* w = nullptr);

struct StackOptions {
  StackSpec spec = StackSpec::ZipFE;
  /// Category without dummy or interaction; its effect is delta0.
  Approach omitted = Approach::Authoritative;
};

struct StackedFit {
  Approach omitted = Approach::Authoritative;
  std::array<Approach, 2> others{};  // approaches carrying eta/theta, enum order
  double delta0 = 0.0;
  std::array<double, 2> eta{};
  std::array<double, 2> theta{};
  std::array<double, 2> se_theta{};
  double se_delta0 = 0.0;
  /// δ^{(k)} indexed by Approach: delta0 for the omitted one, delta0 + θ_k otherwise.
  std::array<double, 3> totals{};
  std::optional<double> rho;
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;
  std::size_t n_units = 0;
};

/// Throws UnbalancedBlock(cbg_id) unless each unit has exactly one row per
/// approach, RankDeficient, and the SAR/FE errors of the underlying fits.
/// `w` is the weights matrix addressed by StackedRow::location (SAR only).
StackedFit fit_stacked(const StackedData& data, const StackOptions& opts, const spatial::WeightsMatrix* w = nullptr);

/// Draws n unit indices (with replacement) for one bootstrap replicate.
using Resampler = std::function<std::vector<std::size_t>(std::size_t n_units, Rng& rng)>;
Resampler iid_resampler();

struct BootstrapOptions {
  int B = 500;
  std::uint64_t seed = 0;
  StackOptions fit;
  double max_failure_share = 0.05;
  Resampler resampler;  // empty: iid_resampler()
};

struct BootstrapDistribution {
  StackSpec spec = StackSpec::ZipFE;
  int B = 0;
  std::uint64_t seed = 0;
  Approach omitted = Approach::Authoritative;
  std::array<Approach, 2> others{};
  StackedFit point;
  /// Successful draws only, ordered by draw index.
  std::vector<int> draw_index;
  Eigen::VectorXd delta0_draws;
  Eigen::MatrixXd theta_draws;  // rows × 2
  Eigen::MatrixXd draws;        // rows × 3 totals, columns in Approach order
  std::array<double, 3> means{}, ci_low{}, ci_high{};
  std::array<double, 2> theta_means{}, theta_ci_low{}, theta_ci_high{};
  std::vector<std::string> failures;
};

/// Pairs cluster bootstrap over CBGs. Draw b uses Rng(hash_combine(seed, b))
/// so results do not depend on scheduling. Throws BootstrapFailures when
/// more than `max_failure_share` of the draws fail.
BootstrapDistribution cluster_bootstrap(const StackedData& data, const BootstrapOptions& opts,
                                        const spatial::WeightsMatrix* w = nullptr);

enum class Verdict { NotRejected, Rejected };
std::string_view to_string(Verdict v);

struct EquivalenceResult {
  Approach approach = Approach::Mllm;
  double theta_mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Verdict verdict = Verdict::NotRejected;
  std::string caveat;
};

/// Rejected iff the percentile 95% interval of θ_m excludes zero.
EquivalenceResult equivalence_test(const BootstrapDistribution& dist, Approach m);

std::string write_draws_csv(const BootstrapDistribution& dist);
nlohmann::json equivalence_json(const BootstrapDistribution& dist, Outcome outcome, Comparison comparison);

}  // namespace nbhd::stackinf
