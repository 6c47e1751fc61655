#include "nbhd/stackinf.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbhd/csv.hpp"
#include "nbhd/error.hpp"

namespace nbhd::stackinf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(StackSpec s) { return s == StackSpec::ZipFE ? "zip_fe" : "sar"; }

StackSpec parse_stack_spec(std::string_view s) {
  if (s == "zip_fe") return StackSpec::ZipFE;
  if (s == "sar") return StackSpec::SAR;
  throw Error(ErrorKind::ConfigInvalid, "stack spec must be zip_fe or sar, got '" + std::string(s) + "'");
}

std::string_view to_string(Verdict v) { return v == Verdict::Rejected ? "Rejected" : "Equivalent-NotRejected"; }

StackedData stack_panel(const aggregate::Panel& sample, Outcome outcome, Comparison comparison,
                        const std::vector<std::string>& covariates, const spatial::WeightsMatrix* w) {
  std::map<std::string, std::size_t> location;
  if (w)
    for (std::size_t i = 0; i < w->ids.size(); ++i) location[w->ids[i]] = i;
  StackedData d;
  d.covariate_names = covariates;
  for (const auto& r : sample.rows) {
    if (!in_comparison(r.holc_group, comparison)) continue;
    StackedRow s;
    bool complete = true;
    for (const auto& c : covariates) {
      auto it = r.covariates.find(c);
      if (it == r.covariates.end() || !it->second) {
        complete = false;
        break;
      }
      s.covariates.push_back(*it->second);
    }
    if (!complete) continue;
    s.cbg_id = r.cbg_id;
    s.approach = r.approach;
    s.y = r.outcome(outcome);
    s.redlined = r.redlined();
    s.zip_code = r.zip_code;
    s.cluster_id = r.cbg_id;
    if (w) {
      auto it = location.find(r.cbg_id);
      if (it == location.end()) throw Error(ErrorKind::DimensionMismatch, "weights have no unit '" + r.cbg_id + "'");
      s.location = it->second;
    }
    d.rows.push_back(std::move(s));
  }
  return d;
}

namespace {

constexpr std::size_t kLayers = 3;

struct Units {
  std::vector<std::array<const StackedRow*, kLayers>> blocks;
};

Units group_units(const StackedData& data) {
  std::map<std::string, std::size_t> pos;
  Units u;
  for (const auto& r : data.rows) {
    auto [it, fresh] = pos.try_emplace(r.cluster_id, u.blocks.size());
    if (fresh) u.blocks.push_back({nullptr, nullptr, nullptr});
    auto& slot = u.blocks[it->second][static_cast<std::size_t>(r.approach)];
    if (slot) throw Error(ErrorKind::UnbalancedBlock, r.cbg_id + ": two rows for " + std::string(to_string(r.approach)));
    slot = &r;
  }
  for (const auto& b : u.blocks)
    for (std::size_t l = 0; l < kLayers; ++l)
      if (!b[l]) {
        const auto* any = b[0] ? b[0] : (b[1] ? b[1] : b[2]);
        throw Error(ErrorKind::UnbalancedBlock,
                    any->cbg_id + ": no row for " + std::string(to_string(kApproaches[l])));
      }
  return u;
}

}  // namespace

StackedFit fit_stacked(const StackedData& data, const StackOptions& opts, const spatial::WeightsMatrix* w) {
  const auto units = group_units(data);
  const Index nu = static_cast<Index>(units.blocks.size());
  const Index n = nu * static_cast<Index>(kLayers);
  const Index ncov = static_cast<Index>(data.covariate_names.size());
  const bool sar = opts.spec == StackSpec::SAR;
  const Index tc = sar ? 1 : 0;
  const Index k = tc + 5 + ncov;

  StackedFit out;
  out.omitted = opts.omitted;
  std::size_t j = 0;
  for (auto a : kApproaches)
    if (a != opts.omitted) out.others[j++] = a;

  VectorXd y(n);
  MatrixXd x = MatrixXd::Zero(n, k);
  std::vector<std::string> clusters(static_cast<std::size_t>(n)), zips(static_cast<std::size_t>(n));
  for (std::size_t l = 0; l < kLayers; ++l)
    for (Index u = 0; u < nu; ++u) {
      const auto& r = *units.blocks[static_cast<std::size_t>(u)][l];
      if (static_cast<Index>(r.covariates.size()) != ncov)
        throw Error(ErrorKind::DimensionMismatch, r.cbg_id + ": covariate count");
      const Index i = static_cast<Index>(l) * nu + u;
      y(i) = r.y;
      if (sar) x(i, 0) = 1.0;
      x(i, tc) = r.redlined;
      for (std::size_t m = 0; m < 2; ++m)
        if (r.approach == out.others[m]) {
          x(i, tc + 1 + static_cast<Index>(m)) = 1.0;
          x(i, tc + 3 + static_cast<Index>(m)) = r.redlined;
        }
      for (Index c = 0; c < ncov; ++c) x(i, tc + 5 + c) = r.covariates[static_cast<std::size_t>(c)];
      clusters[static_cast<std::size_t>(i)] = r.cluster_id;
      zips[static_cast<std::size_t>(i)] = r.zip_code;
    }

  econ::FitResult fit;
  if (sar) {
    if (!w) throw Error(ErrorKind::StageInputMissing, "spatial");
    std::vector<std::size_t> loc(static_cast<std::size_t>(nu));
    for (Index u = 0; u < nu; ++u) loc[static_cast<std::size_t>(u)] = units.blocks[static_cast<std::size_t>(u)][0]->location;
    const auto wsub = spatial::expand(*w, loc);
    const auto lag = econ::block_lag_operator(wsub, static_cast<int>(kLayers));
    econ::SarOptions so;
    so.treatment_column = tc;
    fit = econ::fit_sar(y, x, lag, {}, so);
    out.rho = fit.rho;
  } else {
    fit = econ::fit_fe(y, x, zips, clusters, {econ::SeType::CR1, tc});
  }
  out.beta = fit.beta;
  out.vcov = fit.vcov;
  out.n_units = static_cast<std::size_t>(nu);
  out.delta0 = fit.beta(tc);
  out.se_delta0 = std::sqrt(fit.vcov(tc, tc));
  for (std::size_t m = 0; m < 2; ++m) {
    const Index ie = tc + 1 + static_cast<Index>(m), it = tc + 3 + static_cast<Index>(m);
    out.eta[m] = fit.beta(ie);
    out.theta[m] = fit.beta(it);
    out.se_theta[m] = std::sqrt(fit.vcov(it, it));
  }
  out.totals[static_cast<std::size_t>(opts.omitted)] = out.delta0;
  for (std::size_t m = 0; m < 2; ++m) out.totals[static_cast<std::size_t>(out.others[m])] = out.delta0 + out.theta[m];
  return out;
}

Resampler iid_resampler() {
  return [](std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = rng.below(n);
    return idx;
  };
}

BootstrapDistribution cluster_bootstrap(const StackedData& data, const BootstrapOptions& opts,
                                        const spatial::WeightsMatrix* w) {
  if (opts.B < 1) throw Error(ErrorKind::ConfigInvalid, "bootstrap B must be >= 1");
  const auto units = group_units(data);
  const std::size_t nu = units.blocks.size();
  const Resampler resample = opts.resampler ? opts.resampler : iid_resampler();

  BootstrapDistribution dist;
  dist.spec = opts.fit.spec;
  dist.B = opts.B;
  dist.seed = opts.seed;
  dist.point = fit_stacked(data, opts.fit, w);
  dist.omitted = dist.point.omitted;
  dist.others = dist.point.others;

  struct Draw {
    std::optional<StackedFit> fit;
    std::string error;
  };
  std::vector<Draw> draws(static_cast<std::size_t>(opts.B));
  parallel_for(draws.size(), [&](std::size_t b) {
    Rng rng(hash_combine(opts.seed, static_cast<std::uint64_t>(b)));
    const auto idx = resample(nu, rng);
    StackedData boot;
    boot.covariate_names = data.covariate_names;
    boot.rows.reserve(idx.size() * kLayers);
    for (std::size_t a = 0; a < idx.size(); ++a) {
      if (idx[a] >= nu) throw Error(ErrorKind::DimensionMismatch, "resampler index out of range");
      // Each drawn copy is its own cluster; zip codes are kept as they are.
      const std::string copy_id = "copy" + std::to_string(a);
      for (const auto* r : units.blocks[idx[a]]) {
        StackedRow c = *r;
        c.cluster_id = copy_id;
        boot.rows.push_back(std::move(c));
      }
    }
    try {
      draws[b].fit = fit_stacked(boot, opts.fit, w);
    } catch (const Error& e) {
      draws[b].error = e.what();
    }
  });

  for (std::size_t b = 0; b < draws.size(); ++b)
    if (!draws[b].fit) dist.failures.push_back("draw " + std::to_string(b) + ": " + draws[b].error);
  const std::size_t ok = draws.size() - dist.failures.size();
  if (static_cast<double>(dist.failures.size()) > opts.max_failure_share * static_cast<double>(opts.B)) {
    const std::string first = dist.failures.empty() ? "" : dist.failures.front();
    throw Error(ErrorKind::BootstrapFailures, std::to_string(dist.failures.size()) + " of " +
                                                  std::to_string(opts.B) + " draws failed; first: " + first);
  }
  if (!dist.failures.empty()) spdlog::warn("{} bootstrap draw(s) failed and were excluded", dist.failures.size());
  if (ok == 0) throw Error(ErrorKind::BootstrapFailures, "no successful draws");

  const auto rows = static_cast<Index>(ok);
  dist.delta0_draws.resize(rows);
  dist.theta_draws.resize(rows, 2);
  dist.draws.resize(rows, 3);
  Index r = 0;
  for (std::size_t b = 0; b < draws.size(); ++b) {
    if (!draws[b].fit) continue;
    const auto& f = *draws[b].fit;
    dist.draw_index.push_back(static_cast<int>(b));
    dist.delta0_draws(r) = f.delta0;
    for (Index m = 0; m < 2; ++m) dist.theta_draws(r, m) = f.theta[static_cast<std::size_t>(m)];
    for (Index a = 0; a < 3; ++a) dist.draws(r, a) = f.totals[static_cast<std::size_t>(a)];
    ++r;
  }
  auto summarize = [](const VectorXd& v, double& mean, double& lo, double& hi) {
    std::vector<double> s(v.data(), v.data() + v.size());
    mean = v.mean();
    lo = quantile_type7(s, 0.025);
    hi = quantile_type7(s, 0.975);
  };
  for (std::size_t a = 0; a < 3; ++a)
    summarize(dist.draws.col(static_cast<Index>(a)), dist.means[a], dist.ci_low[a], dist.ci_high[a]);
  for (std::size_t m = 0; m < 2; ++m)
    summarize(dist.theta_draws.col(static_cast<Index>(m)), dist.theta_means[m], dist.theta_ci_low[m],
              dist.theta_ci_high[m]);
  return dist;
}

EquivalenceResult equivalence_test(const BootstrapDistribution& dist, Approach m) {
  if (dist.theta_draws.rows() == 0) throw Error(ErrorKind::EmptyInput, "empty bootstrap distribution");
  std::size_t j = 2;
  for (std::size_t i = 0; i < 2; ++i)
    if (dist.others[i] == m) j = i;
  if (j == 2)
    throw Error(ErrorKind::ConfigInvalid, std::string(to_string(m)) + " is the omitted category and has no interaction");
  EquivalenceResult r;
  r.approach = m;
  const VectorXd col = dist.theta_draws.col(static_cast<Index>(j));
  const std::vector<double> draws(col.data(), col.data() + col.size());
  r.theta_mean = col.mean();
  r.ci_low = quantile_type7(draws, 0.025);
  r.ci_high = quantile_type7(draws, 0.975);
  r.verdict = (r.ci_low > 0.0 || r.ci_high < 0.0) ? Verdict::Rejected : Verdict::NotRejected;
  r.caveat =
      "H0: theta = 0 tested with a percentile 95% interval. Not rejecting H0 does not establish equivalence; "
      "no equivalence margin is used.";
  return r;
}

std::string write_draws_csv(const BootstrapDistribution& dist) {
  std::vector<std::string> header{"b", "spec", "delta0"};
  for (auto a : dist.others) header.push_back("theta_" + std::string(to_string(a)));
  for (auto a : kApproaches) header.push_back("total_" + std::string(to_string(a)));
  csv::Writer w(header);
  for (Index r = 0; r < dist.draws.rows(); ++r) {
    std::vector<std::string> row{std::to_string(dist.draw_index[static_cast<std::size_t>(r)]),
                                 std::string(to_string(dist.spec)), format_exact(dist.delta0_draws(r))};
    for (Index m = 0; m < 2; ++m) row.push_back(format_exact(dist.theta_draws(r, m)));
    for (Index a = 0; a < 3; ++a) row.push_back(format_exact(dist.draws(r, a)));
    w.add_row(row);
  }
  return w.str();
}

nlohmann::json equivalence_json(const BootstrapDistribution& dist, Outcome outcome, Comparison comparison) {
  nlohmann::json j;
  j["outcome"] = to_string(outcome);
  j["comparison"] = to_string(comparison);
  j["spec"] = to_string(dist.spec);
  j["B"] = dist.B;
  j["seed"] = dist.seed;
  j["failed_draws"] = dist.failures.size();
  j["omitted"] = to_string(dist.omitted);
  j["point"] = {{"delta0", dist.point.delta0}, {"se_delta0", dist.point.se_delta0}};
  if (dist.point.rho) j["point"]["rho"] = *dist.point.rho;
  nlohmann::json tests = nlohmann::json::array();
  for (std::size_t m = 0; m < 2; ++m) {
    const auto r = equivalence_test(dist, dist.others[m]);
    tests.push_back({{"approach", to_string(r.approach)},
                     {"theta_point", dist.point.theta[m]},
                     {"theta_mean", r.theta_mean},
                     {"ci_low", r.ci_low},
                     {"ci_high", r.ci_high},
                     {"verdict", to_string(r.verdict)},
                     {"caveat", r.caveat}});
  }
  j["tests"] = tests;
  nlohmann::json totals = nlohmann::json::array();
  for (std::size_t a = 0; a < 3; ++a)
    totals.push_back({{"approach", to_string(kApproaches[a])},
                      {"point", dist.point.totals[a]},
                      {"mean", dist.means[a]},
                      {"ci_low", dist.ci_low[a]},
                      {"ci_high", dist.ci_high[a]}});
  j["totals"] = totals;
  return j;
}

}  // namespace nbhd::stackinf
