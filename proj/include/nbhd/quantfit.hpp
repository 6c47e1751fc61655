#pragma once

// Quantile regression by simplex, pseudo-R², and the R² specification
// comparison of authoritative outcomes on method predictions.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbhd/aggregate.hpp"

namespace nbhd::quantfit {

/// ρ_τ(u) = u(τ − 𝕀[u < 0]).
double check_loss(double u, double tau);

struct QuantileFit {
  double tau = 0.5;
  Eigen::VectorXd coefficients;
  double check_loss = 0.0;  // Σ ρ_τ(residual) of the fit
  double baseline_loss = 0.0;  // same for the intercept-only fit
  double pseudo_r2 = 0.0;
  std::size_t n = 0;
  int iterations = 0;
  /// Observations fitted exactly (the optimal basis).
  std::vector<std::size_t> basis;
};

struct QuantileOptions {
  int max_iter = 10000;
  /// Residuals below tol·max(1, max|y|) count as exact zeros.
  double zero_tol = 1e-11;
};

/// Minimizes Σ ρ_τ(yᵢ − xᵢᵀβ) over vertices of the LP (k observations fitted
/// exactly). Pseudo-R² = 1 − V̂/Ṽ with Ṽ from the intercept-only problem
/// solved by the same routine. Throws Unbounded when X has rank < k and
/// NonConvergence at the iteration cap.
QuantileFit fit_quantile(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, double tau,
                         const QuantileOptions& opts = {});

/// Σ ρ_τ over the residuals with the zero snapping applied.
double total_check_loss(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta, double tau,
                        double zero_tol = 1e-11);

// ---------------------------------------------------------------------------
// Explanatory-power tables

double adjusted_r2(const Eigen::VectorXd& y, const Eigen::MatrixXd& x);

enum class R2Spec { MllmOnly, SegOnly, MllmSeg, DemographicsOnly, MllmDemographics };
inline constexpr std::array<R2Spec, 5> kR2Specs{R2Spec::MllmOnly, R2Spec::SegOnly, R2Spec::MllmSeg,
                                                R2Spec::DemographicsOnly, R2Spec::MllmDemographics};
std::string_view to_string(R2Spec s);

struct IntervalStat {
  double point = 0.0;
  double boot_mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int draws = 0;
};

struct R2Cell {
  Outcome outcome = Outcome::Poverty;
  R2Spec spec = R2Spec::MllmOnly;
  std::size_t n = 0;
  IntervalStat adj_r2;
  std::string error;
};

struct BootOptions {
  int B = 500;
  std::uint64_t seed = 0;
};

/// Adjusted R² of each specification per outcome on the common complete-case
/// CBG sample, with percentile CIs over CBG resamples.
std::vector<R2Cell> r2_ladder(const aggregate::Panel& panel, const std::vector<std::string>& covariates,
                              const BootOptions& opts);

struct QuantileCell {
  Outcome outcome = Outcome::Poverty;
  Approach approach = Approach::Mllm;
  double tau = 0.5;
  std::size_t n = 0;
  IntervalStat pseudo_r2;
  std::string error;
};

/// Pseudo-R² of authoritative outcome on each method's prediction, per τ.
std::vector<QuantileCell> quantile_grid(const aggregate::Panel& panel, const std::vector<double>& taus,
                                        const BootOptions& opts);

std::string write_r2_csv(const std::vector<R2Cell>& cells);
std::string write_quantile_csv(const std::vector<QuantileCell>& cells);

}  // namespace nbhd::quantfit
