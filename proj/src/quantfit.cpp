#include "nbhd/quantfit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nbhd/csv.hpp"
#include "nbhd/error.hpp"
#include "nbhd/util.hpp"

namespace nbhd::quantfit {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double check_loss(double u, double tau) { return u * (tau - (u < 0.0 ? 1.0 : 0.0)); }

double total_check_loss(const VectorXd& y, const MatrixXd& x, const VectorXd& beta, double tau, double zero_tol) {
  const double snap = zero_tol * std::max(1.0, y.cwiseAbs().maxCoeff());
  const VectorXd r = y - x * beta;
  double s = 0.0;
  for (Index i = 0; i < r.size(); ++i)
    if (std::abs(r(i)) > snap) s += check_loss(r(i), tau);
  return s;
}

namespace {

// Starting vertex: k linearly independent rows, preferring those the least
// squares line passes closest to.
std::vector<Index> initial_basis(const VectorXd& y, const MatrixXd& x) {
  const Index n = x.rows(), k = x.cols();
  Eigen::ColPivHouseholderQR<MatrixXd> qr(n, k);
  qr.setThreshold(1e-10);
  qr.compute(x);
  if (qr.rank() < k) throw Error(ErrorKind::Unbounded, "design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(k));
  const VectorXd r = y - x * qr.solve(y);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return std::abs(r(a)) < std::abs(r(b)); });

  std::vector<Index> basis;
  std::vector<VectorXd> q;
  for (Index i : order) {
    VectorXd v = x.row(i).transpose();
    const double norm = v.norm();
    for (const auto& e : q) v -= e.dot(v) * e;
    if (v.norm() > 1e-9 * std::max(norm, 1e-300)) {
      q.push_back(v.normalized());
      basis.push_back(i);
      if (static_cast<Index>(basis.size()) == k) break;
    }
  }
  if (static_cast<Index>(basis.size()) < k) throw Error(ErrorKind::Unbounded, "no nonsingular starting basis");
  return basis;
}

struct Vertex {
  VectorXd beta;
  std::vector<Index> basis;
  int iterations = 0;
};

Vertex simplex(const VectorXd& y, const MatrixXd& x, double tau, const QuantileOptions& opts) {
  const Index n = x.rows(), k = x.cols();
  const double ztol = opts.zero_tol * std::max(1.0, y.cwiseAbs().maxCoeff());
  Vertex v;
  v.basis = initial_basis(y, x);
  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  for (Index i : v.basis) in_basis[static_cast<std::size_t>(i)] = 1;

  MatrixXd xh(k, k);
  VectorXd yh(k);
  for (int iter = 0;; ++iter) {
    if (iter >= opts.max_iter) throw Error(ErrorKind::NonConvergence, "quantile simplex hit the iteration cap");
    for (Index j = 0; j < k; ++j) {
      xh.row(j) = x.row(v.basis[static_cast<std::size_t>(j)]);
      yh(j) = y(v.basis[static_cast<std::size_t>(j)]);
    }
    Eigen::FullPivLU<MatrixXd> lu(xh);
    if (!lu.isInvertible()) throw Error(ErrorKind::Unbounded, "singular basis");
    v.beta = lu.solve(yh);
    const MatrixXd hinv = lu.inverse();
    VectorXd r = y - x * v.beta;
    for (Index i : v.basis) r(i) = 0.0;
    // a(i, j): change of xᵢᵀβ per unit step along column j of X_h⁻¹.
    const MatrixXd a = x * hinv;

    // Directional derivative for leaving basis row j with sign s.
    double best_d = -1e-12;
    Index best_j = -1;
    double best_s = 0.0;
    for (Index j = 0; j < k; ++j)
      for (double s : {1.0, -1.0}) {
        double d = s > 0 ? 1.0 - tau : tau;
        for (Index i = 0; i < n; ++i) {
          if (in_basis[static_cast<std::size_t>(i)]) continue;
          const double g = -s * a(i, j);  // d rᵢ / dt
          if (r(i) > ztol) d += tau * g;
          else if (r(i) < -ztol) d += (tau - 1.0) * g;
          else d += std::max(tau * g, (tau - 1.0) * g);
        }
        if (d < best_d) {  // strict: ties keep the lowest index
          best_d = d;
          best_j = j;
          best_s = s;
        }
      }
    if (best_j < 0) {
      v.iterations = iter;
      return v;
    }

    // Weighted-median line search over the residual sign changes.
    std::vector<std::pair<double, Index>> breaks;
    for (Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)] || std::abs(r(i)) <= ztol) continue;
      const double ai = best_s * a(i, best_j);
      if (ai == 0.0 || (r(i) > 0) != (ai > 0)) continue;
      breaks.emplace_back(r(i) / ai, i);
    }
    std::sort(breaks.begin(), breaks.end());
    double slope = best_d;
    Index entering = -1;
    for (const auto& [t, i] : breaks) {
      slope += std::abs(best_s * a(i, best_j));
      if (slope >= 0.0) {
        entering = i;
        break;
      }
    }
    if (entering < 0) throw Error(ErrorKind::Unbounded, "check loss decreases without bound along an edge");
    in_basis[static_cast<std::size_t>(v.basis[static_cast<std::size_t>(best_j)])] = 0;
    in_basis[static_cast<std::size_t>(entering)] = 1;
    v.basis[static_cast<std::size_t>(best_j)] = entering;
  }
}

bool intercept_only(const MatrixXd& x) { return x.cols() == 1 && (x.array() == 1.0).all(); }

}  // namespace

QuantileFit fit_quantile(const VectorXd& y, const MatrixXd& x, double tau, const QuantileOptions& opts) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::ConfigInvalid, "tau must lie in (0, 1)");
  if (x.rows() != y.size()) throw Error(ErrorKind::DimensionMismatch, "y and X row counts differ");
  if (x.rows() < x.cols() || x.cols() == 0) throw Error(ErrorKind::Unbounded, "fewer observations than parameters");
  const auto v = simplex(y, x, tau, opts);
  QuantileFit f;
  f.tau = tau;
  f.coefficients = v.beta;
  f.n = static_cast<std::size_t>(y.size());
  f.iterations = v.iterations;
  for (Index i : v.basis) f.basis.push_back(static_cast<std::size_t>(i));
  std::sort(f.basis.begin(), f.basis.end());
  f.check_loss = total_check_loss(y, x, v.beta, tau, opts.zero_tol);
  if (intercept_only(x)) {
    f.baseline_loss = f.check_loss;
  } else {
    const MatrixXd ones = MatrixXd::Ones(x.rows(), 1);
    const auto b = simplex(y, ones, tau, opts);
    f.baseline_loss = total_check_loss(y, ones, b.beta, tau, opts.zero_tol);
  }
  if (f.baseline_loss > 0.0)
    f.pseudo_r2 = std::clamp(1.0 - f.check_loss / f.baseline_loss, 0.0, 1.0);
  else
    f.pseudo_r2 = 1.0;  // constant y: both losses vanish
  return f;
}

double adjusted_r2(const VectorXd& y, const MatrixXd& x) {
  const Index n = x.rows(), k = x.cols();
  if (n <= k) throw Error(ErrorKind::RankDeficient, "no residual degrees of freedom");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(n, k);
  qr.setThreshold(1e-10);
  qr.compute(x);
  if (qr.rank() < k) throw Error(ErrorKind::RankDeficient, "design rank " + std::to_string(qr.rank()));
  const double ssr = (y - x * qr.solve(y)).squaredNorm();
  const double sst = (y.array() - y.mean()).matrix().squaredNorm();
  if (sst == 0.0) throw Error(ErrorKind::DegenerateVariance, "outcome is constant");
  const double dn = static_cast<double>(n), dk = static_cast<double>(k);
  // k counts the intercept, so p = k − 1 regressors.
  return 1.0 - (ssr / (dn - dk)) / (sst / (dn - 1.0));
}

std::string_view to_string(R2Spec s) {
  switch (s) {
    case R2Spec::MllmOnly: return "mllm_only";
    case R2Spec::SegOnly: return "segmentation_only";
    case R2Spec::MllmSeg: return "mllm_plus_segmentation";
    case R2Spec::DemographicsOnly: return "demographics_only";
    case R2Spec::MllmDemographics: return "mllm_plus_demographics";
  }
  return "?";
}

namespace {

// Per-CBG aligned columns of the common complete-case sample.
struct Frame {
  std::vector<std::string> ids;
  std::array<std::vector<double>, 3> auth, mllm, seg;  // indexed by Outcome
  std::vector<std::vector<double>> covs;
};

Frame make_frame(const aggregate::Panel& panel, const std::vector<std::string>& covariates) {
  const auto a = panel.layer(Approach::Authoritative);
  const auto m = panel.layer(Approach::Mllm);
  const auto s = panel.layer(Approach::Segmentation);
  Frame f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::vector<double> c;
    bool complete = true;
    for (const auto& name : covariates) {
      auto it = a[i]->covariates.find(name);
      if (it == a[i]->covariates.end() || !it->second) {
        complete = false;
        break;
      }
      c.push_back(*it->second);
    }
    if (!complete) continue;
    f.ids.push_back(a[i]->cbg_id);
    for (auto o : kOutcomes) {
      const auto oi = static_cast<std::size_t>(o);
      f.auth[oi].push_back(a[i]->outcome(o));
      f.mllm[oi].push_back(m[i]->outcome(o));
      f.seg[oi].push_back(s[i]->outcome(o));
    }
    f.covs.push_back(std::move(c));
  }
  return f;
}

void design_for(const Frame& f, Outcome o, R2Spec spec, const std::vector<std::size_t>& idx, VectorXd& y, MatrixXd& x) {
  const auto oi = static_cast<std::size_t>(o);
  const bool use_m = spec == R2Spec::MllmOnly || spec == R2Spec::MllmSeg || spec == R2Spec::MllmDemographics;
  const bool use_s = spec == R2Spec::SegOnly || spec == R2Spec::MllmSeg;
  const bool use_c = spec == R2Spec::DemographicsOnly || spec == R2Spec::MllmDemographics;
  const Index nc = f.covs.empty() ? 0 : static_cast<Index>(f.covs[0].size());
  const Index k = 1 + (use_m ? 1 : 0) + (use_s ? 1 : 0) + (use_c ? nc : 0);
  const Index n = static_cast<Index>(idx.size());
  y.resize(n);
  x.resize(n, k);
  for (Index r = 0; r < n; ++r) {
    const auto i = idx[static_cast<std::size_t>(r)];
    y(r) = f.auth[oi][i];
    Index c = 0;
    x(r, c++) = 1.0;
    if (use_m) x(r, c++) = f.mllm[oi][i];
    if (use_s) x(r, c++) = f.seg[oi][i];
    if (use_c)
      for (double v : f.covs[i]) x(r, c++) = v;
  }
}

std::vector<std::size_t> identity_index(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

std::vector<std::size_t> resample(std::size_t n, std::uint64_t seed, int b) {
  Rng rng(hash_combine(seed, static_cast<std::uint64_t>(b)));
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.below(n);
  return idx;
}

// Fills boot_mean / CI from per-draw values (NaN marks a failed draw).
void summarize(IntervalStat& s, const std::vector<double>& draws) {
  std::vector<double> ok;
  for (double d : draws)
    if (std::isfinite(d)) ok.push_back(d);
  s.draws = static_cast<int>(ok.size());
  if (ok.empty()) {
    s.boot_mean = s.ci_low = s.ci_high = std::nan("");
    return;
  }
  s.boot_mean = std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
  s.ci_low = quantile_type7(ok, 0.025);
  s.ci_high = quantile_type7(ok, 0.975);
}

}  // namespace

std::vector<R2Cell> r2_ladder(const aggregate::Panel& panel, const std::vector<std::string>& covariates,
                              const BootOptions& opts) {
  const auto f = make_frame(panel, covariates);
  const std::size_t n = f.ids.size();
  std::vector<R2Cell> cells;
  for (auto o : kOutcomes)
    for (auto s : kR2Specs) {
      R2Cell c;
      c.outcome = o;
      c.spec = s;
      c.n = n;
      cells.push_back(c);
    }
  // draws[b][cell]
  std::vector<std::vector<double>> draws(static_cast<std::size_t>(std::max(opts.B, 0)),
                                         std::vector<double>(cells.size(), std::nan("")));
  auto eval = [&](const std::vector<std::size_t>& idx, std::vector<double>& out, std::vector<std::string>* errors) {
    VectorXd y;
    MatrixXd x;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      try {
        design_for(f, cells[c].outcome, cells[c].spec, idx, y, x);
        out[c] = adjusted_r2(y, x);
      } catch (const Error& e) {
        if (errors) (*errors)[c] = e.what();
      }
    }
  };
  std::vector<double> point(cells.size(), std::nan(""));
  std::vector<std::string> errors(cells.size());
  eval(identity_index(n), point, &errors);
  parallel_for(draws.size(), [&](std::size_t b) { eval(resample(n, opts.seed, static_cast<int>(b)), draws[b], nullptr); });
  for (std::size_t c = 0; c < cells.size(); ++c) {
    cells[c].error = errors[c];
    cells[c].adj_r2.point = point[c];
    std::vector<double> col;
    for (const auto& d : draws) col.push_back(d[c]);
    summarize(cells[c].adj_r2, col);
  }
  return cells;
}

std::vector<QuantileCell> quantile_grid(const aggregate::Panel& panel, const std::vector<double>& taus,
                                        const BootOptions& opts) {
  if (taus.empty()) throw Error(ErrorKind::ConfigInvalid, "tau list is empty");
  const auto f = make_frame(panel, {});
  const std::size_t n = f.ids.size();
  std::vector<QuantileCell> cells;
  for (auto o : kOutcomes)
    for (auto a : {Approach::Mllm, Approach::Segmentation})
      for (double t : taus) {
        QuantileCell c;
        c.outcome = o;
        c.approach = a;
        c.tau = t;
        c.n = n;
        cells.push_back(c);
      }
  auto eval = [&](const std::vector<std::size_t>& idx, std::vector<double>& out, std::vector<std::string>* errors) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto oi = static_cast<std::size_t>(cells[c].outcome);
      const auto& pred = cells[c].approach == Approach::Mllm ? f.mllm[oi] : f.seg[oi];
      VectorXd y(static_cast<Index>(idx.size()));
      MatrixXd x(static_cast<Index>(idx.size()), 2);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        y(static_cast<Index>(r)) = f.auth[oi][idx[r]];
        x(static_cast<Index>(r), 0) = 1.0;
        x(static_cast<Index>(r), 1) = pred[idx[r]];
      }
      try {
        out[c] = fit_quantile(y, x, cells[c].tau).pseudo_r2;
      } catch (const Error& e) {
        if (errors) (*errors)[c] = e.what();
      }
    }
  };
  std::vector<double> point(cells.size(), std::nan(""));
  std::vector<std::string> errors(cells.size());
  eval(identity_index(n), point, &errors);
  std::vector<std::vector<double>> draws(static_cast<std::size_t>(std::max(opts.B, 0)),
                                         std::vector<double>(cells.size(), std::nan("")));
  parallel_for(draws.size(), [&](std::size_t b) { eval(resample(n, opts.seed, static_cast<int>(b)), draws[b], nullptr); });
  for (std::size_t c = 0; c < cells.size(); ++c) {
    cells[c].error = errors[c];
    cells[c].pseudo_r2.point = point[c];
    std::vector<double> col;
    for (const auto& d : draws) col.push_back(d[c]);
    summarize(cells[c].pseudo_r2, col);
  }
  return cells;
}

std::string write_r2_csv(const std::vector<R2Cell>& cells) {
  csv::Writer w({"outcome", "spec", "n", "adj_r2", "boot_mean", "ci_low", "ci_high", "draws", "status"});
  for (const auto& c : cells)
    w.add_row({std::string(to_string(c.outcome)), std::string(to_string(c.spec)), std::to_string(c.n),
               format_sig6(c.adj_r2.point), format_sig6(c.adj_r2.boot_mean), format_sig6(c.adj_r2.ci_low),
               format_sig6(c.adj_r2.ci_high), std::to_string(c.adj_r2.draws), c.error.empty() ? "ok" : c.error});
  return w.str();
}

std::string write_quantile_csv(const std::vector<QuantileCell>& cells) {
  csv::Writer w({"outcome", "approach", "tau", "n", "pseudo_r2", "boot_mean", "ci_low", "ci_high", "draws", "status"});
  for (const auto& c : cells)
    w.add_row({std::string(to_string(c.outcome)), std::string(to_string(c.approach)), format_sig6(c.tau),
               std::to_string(c.n), format_sig6(c.pseudo_r2.point), format_sig6(c.pseudo_r2.boot_mean),
               format_sig6(c.pseudo_r2.ci_low), format_sig6(c.pseudo_r2.ci_high), std::to_string(c.pseudo_r2.draws),
               c.error.empty() ? "ok" : c.error});
  return w.str();
}

}  // namespace nbhd::quantfit
