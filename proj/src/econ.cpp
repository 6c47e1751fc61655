#include "nbhd/econ.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include <boost/math/tools/minima.hpp>
#include <spdlog/spdlog.h>

#include "nbhd/csv.hpp"
#include "nbhd/error.hpp"
#include "nbhd/util.hpp"

namespace nbhd::econ {

std::string_view to_string(SeType s) {
  switch (s) {
    case SeType::Classical: return "classical";
    case SeType::HC1: return "hc1";
    case SeType::CR1: return "cr1";
    case SeType::ModelBased: return "model_based";
  }
  return "?";
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::Covariates: return "covariates";
    case Variant::ZipFE: return "zip_fe";
    case Variant::SAR: return "sar";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  for (auto v : kVariants)
    if (to_string(v) == s) return v;
  throw Error(ErrorKind::ConfigInvalid, "unknown variant '" + std::string(s) + "'");
}

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct QrFit {
  VectorXd beta;
  MatrixXd bread;  // (XᵀX)⁻¹
  VectorXd resid;
};

Eigen::ColPivHouseholderQR<MatrixXd> checked_qr(const MatrixXd& x) {
  if (x.rows() < x.cols() || x.cols() == 0)
    throw Error(ErrorKind::RankDeficient,
                std::to_string(x.rows()) + " observations for " + std::to_string(x.cols()) + " parameters");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(x.rows(), x.cols());
  qr.setThreshold(1e-10);
  qr.compute(x);
  if (qr.rank() < x.cols())
    throw Error(ErrorKind::RankDeficient, "design rank " + std::to_string(qr.rank()) + " < " + std::to_string(x.cols()));
  return qr;
}

MatrixXd bread_of(const Eigen::ColPivHouseholderQR<MatrixXd>& qr) {
  const Index k = qr.cols();
  const MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(k, k));
  const MatrixXd pr = qr.colsPermutation() * rinv;
  return pr * pr.transpose();
}

QrFit qr_fit(const VectorXd& y, const MatrixXd& x) {
  if (x.rows() != y.size())
    throw Error(ErrorKind::DimensionMismatch,
                "y has " + std::to_string(y.size()) + " rows, X has " + std::to_string(x.rows()));
  const auto qr = checked_qr(x);
  QrFit f;
  f.beta = qr.solve(y);
  f.bread = bread_of(qr);
  f.resid = y - x * f.beta;
  return f;
}

std::vector<Index> index_groups(std::span<const std::string> labels, std::size_t& n_groups) {
  std::map<std::string_view, Index> ids;
  std::vector<Index> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(ids.try_emplace(l, static_cast<Index>(ids.size())).first->second);
  n_groups = ids.size();
  return out;
}

MatrixXd cluster_meat(const MatrixXd& x, const VectorXd& u, const std::vector<Index>& g, std::size_t n_groups) {
  MatrixXd s = MatrixXd::Zero(static_cast<Index>(n_groups), x.cols());
  for (Index i = 0; i < x.rows(); ++i) s.row(g[static_cast<std::size_t>(i)]) += x.row(i) * u(i);
  return s.transpose() * s;
}

MatrixXd hc_meat(const MatrixXd& x, const VectorXd& u) {
  return x.transpose() * u.cwiseAbs2().asDiagonal() * x;
}

bool is_binary(const VectorXd& v) {
  for (Index i = 0; i < v.size(); ++i)
    if (v(i) != 0.0 && v(i) != 1.0) return false;
  return true;
}

// Fills vcov/se for an already-solved least-squares problem. `k` is the
// parameter count for small-sample factors (may exceed x.cols() under FE).
void fill_vcov(FitResult& r, const MatrixXd& x, const QrFit& f, std::span<const std::string> clusters, SeType se,
               Index treatment_column, std::size_t k) {
  const auto n = static_cast<double>(x.rows());
  const auto kd = static_cast<double>(k);
  if (n <= kd) throw Error(ErrorKind::RankDeficient, "no residual degrees of freedom");
  if (se == SeType::CR1) {
    if (clusters.size() != static_cast<std::size_t>(x.rows()))
      throw Error(ErrorKind::DimensionMismatch, "cluster ids do not match observations");
    const VectorXd t = x.col(treatment_column);
    if (is_binary(t)) {
      const double treated = t.sum();
      if (treated < 2 || n - treated < 2) {
        r.warnings.push_back("treatment group with fewer than two members: heteroskedasticity-robust SEs used");
        se = SeType::HC1;
      }
    }
  }
  switch (se) {
    case SeType::CR1: {
      std::size_t g = 0;
      const auto groups = index_groups(clusters, g);
      if (g < 2) throw Error(ErrorKind::TooFewClusters, std::to_string(g) + " cluster(s)");
      const double gd = static_cast<double>(g);
      const double c = gd / (gd - 1.0) * (n - 1.0) / (n - kd);
      r.vcov = c * f.bread * cluster_meat(x, f.resid, groups, g) * f.bread;
      r.n_clusters = g;
      break;
    }
    case SeType::HC1:
      r.vcov = n / (n - kd) * f.bread * hc_meat(x, f.resid) * f.bread;
      break;
    case SeType::Classical:
    case SeType::ModelBased:
      r.vcov = f.resid.squaredNorm() / (n - kd) * f.bread;
      se = SeType::Classical;
      break;
  }
  r.vcov = 0.5 * (r.vcov + r.vcov.transpose());
  r.se_type = se;
  r.se_delta = std::sqrt(std::max(0.0, r.vcov(treatment_column, treatment_column)));
}

}  // namespace

FitResult fit_ols(const VectorXd& y, const MatrixXd& x, std::span<const std::string> clusters, const OlsOptions& opts) {
  if (opts.treatment_column < 0 || opts.treatment_column >= x.cols())
    throw Error(ErrorKind::DimensionMismatch, "treatment column outside the design");
  const auto f = qr_fit(y, x);
  FitResult r;
  r.beta = f.beta;
  r.residuals = f.resid;
  r.n = static_cast<std::size_t>(x.rows());
  r.k = static_cast<std::size_t>(x.cols());
  r.sigma2 = f.resid.squaredNorm() / static_cast<double>(r.n);
  r.delta = f.beta(opts.treatment_column);
  fill_vcov(r, x, f, clusters, opts.se, opts.treatment_column, r.k);
  return r;
}

FitResult fit_fe(const VectorXd& y, const MatrixXd& x, std::span<const std::string> fe_ids,
                 std::span<const std::string> clusters, const OlsOptions& opts) {
  const Index n = x.rows();
  if (y.size() != n || static_cast<Index>(fe_ids.size()) != n)
    throw Error(ErrorKind::DimensionMismatch, "y, X and fixed-effect ids must have equal length");
  if (opts.treatment_column < 0 || opts.treatment_column >= x.cols())
    throw Error(ErrorKind::DimensionMismatch, "treatment column outside the design");
  std::size_t n_fe = 0;
  const auto g = index_groups(fe_ids, n_fe);
  VectorXd count = VectorXd::Zero(static_cast<Index>(n_fe));
  MatrixXd sum_x = MatrixXd::Zero(static_cast<Index>(n_fe), x.cols());
  VectorXd sum_y = VectorXd::Zero(static_cast<Index>(n_fe));
  for (Index i = 0; i < n; ++i) {
    const Index gi = g[static_cast<std::size_t>(i)];
    count(gi) += 1.0;
    sum_x.row(gi) += x.row(i);
    sum_y(gi) += y(i);
  }
  MatrixXd xd(n, x.cols());
  VectorXd yd(n);
  for (Index i = 0; i < n; ++i) {
    const Index gi = g[static_cast<std::size_t>(i)];
    xd.row(i) = x.row(i) - sum_x.row(gi) / count(gi);
    yd(i) = y(i) - sum_y(gi) / count(gi);
  }
  const double scale = std::max(1.0, x.col(opts.treatment_column).cwiseAbs().maxCoeff());
  if (xd.col(opts.treatment_column).cwiseAbs().maxCoeff() <= 1e-12 * scale)
    throw Error(ErrorKind::NoWithinVariation, "treatment is constant within every fixed-effect group");

  // Fixed effects nested in clusters do not use up cluster-level degrees of freedom.
  bool nested = !clusters.empty() && clusters.size() == fe_ids.size();
  if (nested) {
    std::map<Index, std::string_view> owner;
    for (Index i = 0; i < n && nested; ++i) {
      auto [it, fresh] = owner.try_emplace(g[static_cast<std::size_t>(i)], clusters[static_cast<std::size_t>(i)]);
      if (!fresh && it->second != clusters[static_cast<std::size_t>(i)]) nested = false;
    }
  }
  const auto f = qr_fit(yd, xd);
  FitResult r;
  r.beta = f.beta;
  r.residuals = f.resid;
  r.n = static_cast<std::size_t>(n);
  const bool count_fe = !(opts.se == SeType::CR1 && nested);
  r.k = static_cast<std::size_t>(x.cols()) + (count_fe ? n_fe : 0);
  r.sigma2 = f.resid.squaredNorm() / static_cast<double>(r.n);
  r.delta = f.beta(opts.treatment_column);
  fill_vcov(r, xd, f, clusters, opts.se, opts.treatment_column, r.k);
  return r;
}

// ---------------------------------------------------------------------------
// SAR

LagOperator lag_operator(const spatial::WeightsMatrix& w) {
  LagOperator op;
  op.apply = [m = w.row_std](const VectorXd& v) -> VectorXd {
    if (v.size() != m.cols()) throw Error(ErrorKind::DimensionMismatch, "lag operator size");
    return m * v;
  };
  op.eigenvalues = w.eigenvalues;
  op.lambda_min = w.lambda_min;
  op.lambda_max = w.lambda_max;
  return op;
}

LagOperator block_lag_operator(const spatial::WeightsMatrix& w, int layers) {
  LagOperator op;
  const Index n = static_cast<Index>(w.size());
  op.apply = [m = w.row_std, n, layers](const VectorXd& v) -> VectorXd {
    if (v.size() != n * layers) throw Error(ErrorKind::DimensionMismatch, "block lag operator size");
    VectorXd out(v.size());
    for (int l = 0; l < layers; ++l) out.segment(l * n, n).noalias() = m * v.segment(l * n, n);
    return out;
  };
  op.eigenvalues.resize(n * layers);
  for (int l = 0; l < layers; ++l) op.eigenvalues.segment(l * n, n) = w.eigenvalues;
  op.lambda_min = w.lambda_min;
  op.lambda_max = w.lambda_max;
  return op;
}

namespace {

struct SarProfile {
  double n = 0;
  double e0e0 = 0, e0eL = 0, eLeL = 0;
  const VectorXd* lambda = nullptr;

  double ssr(double rho) const { return e0e0 - 2.0 * rho * e0eL + rho * rho * eLeL; }
  double logdet(double rho) const {
    double s = 0.0;
    for (Index i = 0; i < lambda->size(); ++i) s += std::log1p(-rho * (*lambda)(i));
    return s;
  }
  double loglik(double rho) const {
    return -0.5 * n * (std::log(2.0 * std::numbers::pi) + 1.0) - 0.5 * n * std::log(ssr(rho) / n) + logdet(rho);
  }
};

}  // namespace

double sar_concentrated_loglik(const VectorXd& y, const MatrixXd& x, const LagOperator& w, double rho) {
  const auto qr = checked_qr(x);
  const VectorXd wy = w.apply(y);
  const VectorXd e = (y - rho * wy) - x * qr.solve(VectorXd(y - rho * wy));
  SarProfile p;
  p.n = static_cast<double>(y.size());
  p.lambda = &w.eigenvalues;
  return -0.5 * p.n * (std::log(2.0 * std::numbers::pi) + 1.0) - 0.5 * p.n * std::log(e.squaredNorm() / p.n) +
         p.logdet(rho);
}

FitResult fit_sar(const VectorXd& y, const MatrixXd& x, const LagOperator& w, std::span<const std::string> clusters,
                  const SarOptions& opts) {
  const Index n = x.rows();
  const Index k = x.cols();
  if (y.size() != n || w.eigenvalues.size() != n)
    throw Error(ErrorKind::DimensionMismatch, "y, X and W must describe the same observations");
  if (opts.treatment_column < 0 || opts.treatment_column >= k)
    throw Error(ErrorKind::DimensionMismatch, "treatment column outside the design");
  const auto qr = checked_qr(x);
  const VectorXd wy = w.apply(y);
  const VectorXd b0 = qr.solve(y);
  const VectorXd bl = qr.solve(wy);
  const VectorXd e0 = y - x * b0;
  const VectorXd el = wy - x * bl;

  SarProfile prof;
  prof.n = static_cast<double>(n);
  prof.e0e0 = e0.squaredNorm();
  prof.e0eL = e0.dot(el);
  prof.eLeL = el.squaredNorm();
  prof.lambda = &w.eigenvalues;

  FitResult r;
  double rho = 0.0;
  if (opts.fixed_rho) {
    rho = *opts.fixed_rho;
  } else {
    if (!(w.lambda_min < 0.0 && w.lambda_max > 0.0))
      throw Error(ErrorKind::NonConvergence, "lag operator spectrum does not bracket zero; rho is not identified");
    const double lo = 1.0 / w.lambda_min + opts.boundary_eps;
    const double hi = 1.0 / w.lambda_max - opts.boundary_eps;
    const int m = std::max(opts.grid_points, 3);
    std::vector<double> grid(static_cast<std::size_t>(m)), ll(static_cast<std::size_t>(m));
    std::size_t best = 0;
    for (int i = 0; i < m; ++i) {
      const auto u = static_cast<std::size_t>(i);
      grid[u] = lo + (hi - lo) * i / (m - 1);
      ll[u] = prof.loglik(grid[u]);
      if (ll[u] > ll[best]) best = u;
    }
    int local_maxima = 0;
    for (std::size_t i = 1; i + 1 < ll.size(); ++i)
      if (ll[i] > ll[i - 1] && ll[i] > ll[i + 1]) ++local_maxima;
    if (local_maxima > 1)
      r.warnings.push_back("concentrated log-likelihood has " + std::to_string(local_maxima) + " local maxima on the grid");
    const double a = grid[best == 0 ? 0 : best - 1];
    const double b = grid[std::min(best + 1, grid.size() - 1)];
    std::uintmax_t iters = static_cast<std::uintmax_t>(opts.max_iter);
    const auto res = boost::math::tools::brent_find_minima([&](double t) { return -prof.loglik(t); }, a, b,
                                                           std::numeric_limits<double>::digits / 2, iters);
    if (iters >= static_cast<std::uintmax_t>(opts.max_iter))
      throw Error(ErrorKind::NonConvergence, "rho search hit the iteration cap");
    rho = res.first;
    const double edge = 10.0 * opts.boundary_eps;
    if (rho - lo < edge || hi - rho < edge) {
      std::ostringstream diag;
      diag << "rho-hat " << format_sig6(rho) << " at the feasibility bound (" << format_sig6(lo) << ", "
           << format_sig6(hi) << ")";
      throw Error(ErrorKind::NonConvergence, diag.str());
    }
  }

  const VectorXd beta = qr.solve(VectorXd(y - rho * wy));
  const VectorXd e = (y - rho * wy) - x * beta;
  const double ssr = e.squaredNorm();
  const double s2 = ssr / static_cast<double>(n);

  // Observed information over (β, ρ, σ²).
  double tr_g2 = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double l = w.eigenvalues(i);
    const double g = l / (1.0 - rho * l);
    tr_g2 += g * g;
  }
  const bool with_rho = !opts.fixed_rho.has_value();
  const Index p = k + (with_rho ? 2 : 1);
  const Index is2 = p - 1;
  MatrixXd info = MatrixXd::Zero(p, p);
  info.topLeftCorner(k, k) = x.transpose() * x / s2;
  const VectorXd xe = x.transpose() * e / (s2 * s2);
  info.block(0, is2, k, 1) = xe;
  info.block(is2, 0, 1, k) = xe.transpose();
  info(is2, is2) = -0.5 * static_cast<double>(n) / (s2 * s2) + ssr / (s2 * s2 * s2);
  if (with_rho) {
    const Index ir = k;
    const VectorXd xwy = x.transpose() * wy / s2;
    info.block(0, ir, k, 1) = xwy;
    info.block(ir, 0, 1, k) = xwy.transpose();
    info(ir, ir) = tr_g2 + wy.squaredNorm() / s2;
    info(ir, is2) = info(is2, ir) = e.dot(wy) / (s2 * s2);
  }
  Eigen::LLT<MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    std::ostringstream diag;
    diag << "information matrix not positive definite at rho=" << format_sig6(rho) << "; l(rho) grid:";
    for (double t : {-0.9, -0.5, 0.0, 0.5, 0.9})
      if (t > 1.0 / w.lambda_min && t < 1.0 / w.lambda_max) diag << " " << t << ":" << format_sig6(prof.loglik(t));
    throw Error(ErrorKind::LikelihoodNotConcave, diag.str());
  }
  r.vcov = llt.solve(MatrixXd::Identity(p, p));
  r.vcov = 0.5 * (r.vcov + r.vcov.transpose());
  r.beta = beta;
  r.residuals = e;
  r.sigma2 = s2;
  r.n = static_cast<std::size_t>(n);
  r.k = static_cast<std::size_t>(k);
  r.rho = rho;
  if (with_rho) r.se_rho = std::sqrt(r.vcov(k, k));
  r.loglik = prof.loglik(rho);
  r.delta = beta(opts.treatment_column);
  r.se_delta = std::sqrt(r.vcov(opts.treatment_column, opts.treatment_column));
  r.se_type = SeType::ModelBased;

  if (!clusters.empty()) {
    QrFit f{beta, bread_of(qr), e};
    FitResult c;
    fill_vcov(c, x, f, clusters, SeType::CR1, opts.treatment_column, static_cast<std::size_t>(k));
    r.se_delta_clustered = c.se_delta;
    r.n_clusters = c.n_clusters;
    for (auto& wmsg : c.warnings) r.warnings.push_back(wmsg);
    if (opts.se == SeType::CR1) {
      r.se_delta = c.se_delta;
      r.se_type = c.se_type;
    }
  } else if (opts.se == SeType::CR1) {
    throw Error(ErrorKind::TooFewClusters, "clustered SAR SEs requested without cluster ids");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ladder

std::vector<ModelSpec> ladder_specs(const std::vector<std::string>& covariates) {
  std::vector<ModelSpec> out;
  for (auto o : kOutcomes)
    for (auto a : kApproaches)
      for (auto c : {Comparison::VsIdeal, Comparison::VsStableDeclining})
        for (auto v : kVariants) {
          ModelSpec s;
          s.outcome = o;
          s.approach = a;
          s.comparison = c;
          s.variant = v;
          if (v != Variant::Baseline) s.covariate_names = covariates;
          out.push_back(std::move(s));
        }
  return out;
}

Design build_design(const aggregate::Panel& sample, const ModelSpec& spec) {
  std::vector<const aggregate::PanelRow*> rows;
  for (const auto* r : sample.layer(spec.approach)) {
    if (!in_comparison(r->holc_group, spec.comparison)) continue;
    bool complete = true;
    for (const auto& c : spec.covariate_names) {
      auto it = r->covariates.find(c);
      if (it == r->covariates.end() || !it->second) complete = false;
    }
    if (complete) rows.push_back(r);
  }
  const bool intercept = spec.variant != Variant::ZipFE;
  const Index n = static_cast<Index>(rows.size());
  const Index k = (intercept ? 2 : 1) + static_cast<Index>(spec.covariate_names.size());
  Design d;
  d.y.resize(n);
  d.x.resize(n, k);
  d.treatment_column = intercept ? 1 : 0;
  for (Index i = 0; i < n; ++i) {
    const auto& r = *rows[static_cast<std::size_t>(i)];
    d.y(i) = r.outcome(spec.outcome);
    Index c = 0;
    if (intercept) d.x(i, c++) = 1.0;
    d.x(i, c++) = r.redlined();
    for (const auto& name : spec.covariate_names) d.x(i, c++) = *r.covariates.at(name);
    d.clusters.push_back(r.zip_code);
    if (spec.variant == Variant::ZipFE) d.fe.push_back(r.zip_code);
    d.ids.push_back(r.cbg_id);
  }
  return d;
}

std::vector<LadderCell> contrast_ladder(const aggregate::Panel& panel, const spatial::WeightsMatrix* w,
                                        const std::vector<ModelSpec>& specs, const LadderOptions& opts) {
  std::vector<LadderCell> cells(specs.size());
  if (specs.empty()) return cells;

  std::map<Comparison, aggregate::Panel> samples;
  std::map<Comparison, std::string> sample_errors;
  for (const auto& s : specs)
    if (!samples.count(s.comparison) && !sample_errors.count(s.comparison)) {
      try {
        samples.emplace(s.comparison, aggregate::restrict_panel(panel, {s.comparison, opts.scope, opts.sd}));
      } catch (const Error& e) {
        sample_errors[s.comparison] = e.what();
      }
    }

  std::mutex w_mutex;
  std::map<std::string, std::shared_ptr<const LagOperator>> w_cache;
  auto lag_for = [&](const std::vector<std::string>& ids) {
    std::string key;
    for (const auto& id : ids) key += id + '\n';
    std::lock_guard lock(w_mutex);
    auto& slot = w_cache[key];
    if (!slot) slot = std::make_shared<const LagOperator>(lag_operator(spatial::restrict_to(*w, ids)));
    return slot;
  };

  parallel_for(specs.size(), [&](std::size_t i) {
    auto& cell = cells[i];
    cell.spec = specs[i];
    try {
      if (auto it = sample_errors.find(cell.spec.comparison); it != sample_errors.end())
        throw Error(ErrorKind::EmptyInput, it->second);
      const auto d = build_design(samples.at(cell.spec.comparison), cell.spec);
      FitResult fit;
      switch (cell.spec.variant) {
        case Variant::Baseline:
        case Variant::Covariates:
          fit = fit_ols(d.y, d.x, d.clusters, {opts.ols_se, d.treatment_column});
          break;
        case Variant::ZipFE:
          fit = fit_fe(d.y, d.x, d.fe, d.clusters, {opts.ols_se, d.treatment_column});
          break;
        case Variant::SAR: {
          if (!w) throw Error(ErrorKind::StageInputMissing, "spatial");
          const auto lag = lag_for(d.ids);
          SarOptions so;
          so.se = opts.sar_se;
          so.treatment_column = d.treatment_column;
          fit = fit_sar(d.y, d.x, *lag, d.clusters, so);
          break;
        }
      }
      fit.spec = cell.spec;
      cell.fit = std::move(fit);
    } catch (const Error& e) {
      cell.error = e.what();
    }
  });
  for (const auto& c : cells)
    if (!c.error.empty())
      spdlog::warn("ladder cell {}/{}/{}/{} failed: {}", to_string(c.spec.outcome), to_string(c.spec.approach),
                   to_string(c.spec.comparison), to_string(c.spec.variant), c.error);
  return cells;
}

std::string write_ladder_csv(const std::vector<LadderCell>& cells) {
  csv::Writer w({"outcome", "approach", "comparison", "variant", "delta", "se", "rho", "n", "se_type", "status"});
  for (const auto& c : cells) {
    std::vector<std::string> row{std::string(to_string(c.spec.outcome)), std::string(to_string(c.spec.approach)),
                                 std::string(to_string(c.spec.comparison)), std::string(to_string(c.spec.variant))};
    if (c.fit) {
      row.push_back(format_sig6(c.fit->delta));
      row.push_back(format_sig6(c.fit->se_delta));
      row.push_back(c.fit->rho ? format_sig6(*c.fit->rho) : "");
      row.push_back(std::to_string(c.fit->n));
      row.push_back(std::string(to_string(c.fit->se_type)));
      row.push_back("ok");
    } else {
      row.insert(row.end(), {"", "", "", "", "", c.error});
    }
    w.add_row(row);
  }
  return w.str();
}

std::string format_ladder_table(const std::vector<LadderCell>& cells) {
  auto pad = [](std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
  };
  std::ostringstream out;
  for (auto o : kOutcomes) {
    bool any = false;
    for (const auto& c : cells) any |= c.spec.outcome == o;
    if (!any) continue;
    out << "Outcome: " << to_string(o) << " (SD units; SEs in parentheses)\n";
    out << pad("approach / comparison", 38);
    for (auto v : kVariants) out << pad(std::string(to_string(v)), 22);
    out << "\n";
    for (auto a : kApproaches)
      for (auto cmp : {Comparison::VsIdeal, Comparison::VsStableDeclining}) {
        std::string label = std::string(to_string(a)) + " / " + std::string(to_string(cmp));
        out << pad(label, 38);
        for (auto v : kVariants) {
          std::string cell = "";
          for (const auto& c : cells)
            if (c.spec.outcome == o && c.spec.approach == a && c.spec.comparison == cmp && c.spec.variant == v)
              cell = c.fit ? format_sig6(c.fit->delta) + " (" + format_sig6(c.fit->se_delta) + ")" : "failed";
          out << pad(cell, 22);
        }
        out << "\n";
      }
    out << "\n";
  }
  return out.str();
}

}  // namespace nbhd::econ
