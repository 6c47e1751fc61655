#pragma once

// Treatment-contrast regressions: OLS, zip fixed effects, spatial lag (SAR),
// with classical, heteroskedasticity-robust or zip-clustered uncertainty.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbhd/aggregate.hpp"
#include "nbhd/spatial.hpp"
#include "nbhd/types.hpp"

namespace nbhd::econ {

enum class SeType { Classical, HC1, CR1, ModelBased };
std::string_view to_string(SeType s);

enum class Variant { Baseline, Covariates, ZipFE, SAR };
inline constexpr std::array<Variant, 4> kVariants{Variant::Baseline, Variant::Covariates, Variant::ZipFE,
                                                  Variant::SAR};
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

struct ModelSpec {
  Outcome outcome = Outcome::Poverty;
  Approach approach = Approach::Authoritative;
  Comparison comparison = Comparison::VsIdeal;
  Variant variant = Variant::Baseline;
  std::vector<std::string> covariate_names;
  std::string cluster_var = "zip_code";
};

struct FitResult {
  double delta = 0.0;
  double se_delta = 0.0;
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;  // over beta (SAR: beta, rho, sigma2)
  std::optional<double> rho;
  std::optional<double> se_rho;
  std::optional<double> loglik;
  /// Zip-clustered SE of delta for SAR, conditional on rho-hat.
  std::optional<double> se_delta_clustered;
  double sigma2 = 0.0;  // SSR / n
  std::size_t n = 0;
  std::size_t k = 0;  // parameters counted in the small-sample factor
  std::size_t n_clusters = 0;
  Eigen::VectorXd residuals;
  SeType se_type = SeType::Classical;
  std::vector<std::string> warnings;
  ModelSpec spec;
};

struct OlsOptions {
  SeType se = SeType::CR1;
  /// Column of X holding the treatment indicator (reported as delta).
  Eigen::Index treatment_column = 1;
};

/// β̂ by column-pivoted QR. Throws RankDeficient, TooFewClusters (CR1 with
/// fewer than two clusters) and DimensionMismatch.
FitResult fit_ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, std::span<const std::string> clusters,
                  const OlsOptions& opts = {});

/// Within estimator: y and X demeaned by `fe_ids` group. X must not carry an
/// intercept. Fixed effects nested in clusters are not counted in k.
/// Throws NoWithinVariation when the treatment column is absorbed.
FitResult fit_fe(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, std::span<const std::string> fe_ids,
                 std::span<const std::string> clusters, const OlsOptions& opts = {});

/// A linear lag operator W together with its eigenvalues.
struct LagOperator {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply;
  Eigen::VectorXd eigenvalues;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};
LagOperator lag_operator(const spatial::WeightsMatrix& w);
/// I_layers ⊗ W for layer-major stacked data.
LagOperator block_lag_operator(const spatial::WeightsMatrix& w, int layers);

struct SarOptions {
  std::optional<double> fixed_rho;
  double boundary_eps = 1e-6;
  int grid_points = 200;
  int max_iter = 200;
  /// ModelBased (negative inverse Hessian) or CR1 (spatially filtered
  /// regression conditional on rho-hat). Both are computed when clusters
  /// are supplied; this picks which one fills se_delta.
  SeType se = SeType::ModelBased;
  Eigen::Index treatment_column = 1;
};

/// Concentrated log-likelihood ℓ(ρ) including constants.
double sar_concentrated_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const LagOperator& w, double rho);

/// ML fit of y = ρWy + Xβ + ε. Throws NonConvergence, LikelihoodNotConcave,
/// RankDeficient.
FitResult fit_sar(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const LagOperator& w,
                  std::span<const std::string> clusters = {}, const SarOptions& opts = {});

// ---------------------------------------------------------------------------
// Ladder

struct LadderCell {
  ModelSpec spec;
  std::optional<FitResult> fit;
  std::string error;
};

struct LadderOptions {
  aggregate::StandardizationScope scope = aggregate::StandardizationScope::EstimationSample;
  aggregate::SdConvention sd = aggregate::SdConvention::Sample;
  SeType ols_se = SeType::CR1;
  SeType sar_se = SeType::ModelBased;
};

/// 3 outcomes × 3 approaches × 2 comparisons × 4 variants, in that nesting.
std::vector<ModelSpec> ladder_specs(const std::vector<std::string>& covariates);

/// Builds the design for one spec: y, X, treatment column, clusters, fixed
/// effects and ids after listwise deletion.
struct Design {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  Eigen::Index treatment_column = 1;
  std::vector<std::string> clusters;
  std::vector<std::string> fe;
  std::vector<std::string> ids;
};
Design build_design(const aggregate::Panel& sample, const ModelSpec& spec);

/// Fits every spec. A failing cell records its error and the rest proceed.
/// `w` may be null when no SAR spec is requested.
std::vector<LadderCell> contrast_ladder(const aggregate::Panel& panel, const spatial::WeightsMatrix* w,
                                        const std::vector<ModelSpec>& specs, const LadderOptions& opts = {});

std::string write_ladder_csv(const std::vector<LadderCell>& cells);
/// Text table: one block per outcome, rows approach × comparison, columns the
/// four variants, cells "delta (se)".
std::string format_ladder_table(const std::vector<LadderCell>& cells);

}  // namespace nbhd::econ
