// Acceptance suite: one PASS/FAIL line per criterion.
//
// usage: acceptance [criterion ...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <unistd.h>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbhd/aggregate.hpp"
#include "nbhd/csv.hpp"
#include "nbhd/econ.hpp"
#include "nbhd/elicit.hpp"
#include "nbhd/error.hpp"
#include "nbhd/ingest.hpp"
#include "nbhd/geometry.hpp"
#include "nbhd/quantfit.hpp"
#include "nbhd/simgen.hpp"
#include "nbhd/spatial.hpp"
#include "nbhd/stackinf.hpp"
#include "nbhd/util.hpp"

#ifndef NBHD_FIXTURES
#define NBHD_FIXTURES "tests/fixtures"
#endif
#ifndef NBHD_CLI
#define NBHD_CLI "nbhd"
#endif

using namespace nbhd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kSarGridStep = 1e-4;
constexpr double kSarGridTol = 1e-3;
constexpr double kSarOracleSeconds = 5.0;
constexpr int kConsistencyReps = 100;
constexpr double kConsistencyRhoTol = 0.05;
constexpr int kConsistencyMinCover = 90;
constexpr double kConsistencySeconds = 120.0;
constexpr double kFeTol = 1e-8;
constexpr double kCr1Tol = 1e-10;
constexpr int kSizeReps = 200;
constexpr int kSizeB = 299;
constexpr double kSizeMaxRate = 0.075;
constexpr double kSizeSeconds = 600.0;
constexpr double kQuantTol = 1e-6;
constexpr double kFixtureTol = 0.01;
constexpr std::size_t kCorpusMin = 40;
constexpr double kRowSumTol = 1e-12;

struct Outcome_ {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) { return format_sig6(v); }

MatrixXd dense_w(const spatial::WeightsMatrix& w) { return w.row_std; }

// Independent concentrated log-likelihood: dense LU log-determinant and
// normal-equation β, no spectral shortcuts.
double oracle_loglik(const VectorXd& y, const MatrixXd& x, const MatrixXd& w, double rho) {
  const auto n = y.size();
  const MatrixXd a = MatrixXd::Identity(n, n) - rho * w;
  Eigen::PartialPivLU<MatrixXd> lu(a);
  const MatrixXd u = lu.matrixLU();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(std::abs(u(i, i)));
  const VectorXd ay = a * y;
  const VectorXd beta = (x.transpose() * x).ldlt().solve(x.transpose() * ay);
  const double ssr = (ay - x * beta).squaredNorm();
  return logdet - 0.5 * static_cast<double>(n) * std::log(ssr / static_cast<double>(n));
}

MatrixXd sar_design(const simgen::Generated& g) {
  const auto n = g.treated.size();
  MatrixXd x(n, 2 + g.covariates.cols());
  x.col(0).setOnes();
  x.col(1) = g.treated;
  x.rightCols(g.covariates.cols()) = g.covariates;
  return x;
}

// 1 ------------------------------------------------------------------------
Outcome_ sar_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  simgen::DgpConfig cfg;
  cfg.rows = cfg.cols = 7;
  cfg.rho_true = 0.5;
  cfg.delta_poverty = 0.8;
  cfg.seed = 101;
  const auto lattice = simgen::make_lattice(7, 7);
  const auto g = simgen::generate(cfg, lattice);
  const MatrixXd x = sar_design(g);
  const auto fit = econ::fit_sar(g.y_poverty, x, econ::lag_operator(lattice.weights));
  const double fit_seconds = seconds_since(t0);

  const MatrixXd w = dense_w(lattice.weights);
  const Eigen::VectorXcd ev = Eigen::EigenSolver<MatrixXd>(w).eigenvalues();
  double lmin = 0, lmax = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    lmin = std::min(lmin, ev(i).real());
    lmax = std::max(lmax, ev(i).real());
  }
  double best_rho = 0.0, best = -std::numeric_limits<double>::infinity();
  for (double r = 1.0 / lmin + kSarGridStep; r < 1.0 / lmax; r += kSarGridStep) {
    const double ll = oracle_loglik(g.y_poverty, x, w, r);
    if (ll > best) {
      best = ll;
      best_rho = r;
    }
  }
  const double diff = std::abs(*fit.rho - best_rho);
  return {diff <= kSarGridTol && fit_seconds < kSarOracleSeconds,
          "rho_hat=" + fmt(*fit.rho) + " grid=" + fmt(best_rho) + " |diff|=" + fmt(diff) + " (tol " +
              fmt(kSarGridTol) + "), fit " + fmt(fit_seconds) + "s"};
}

// 2 ------------------------------------------------------------------------
Outcome_ sar_consistency() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto lattice = simgen::make_lattice(30, 30);
  const auto lag = econ::lag_operator(lattice.weights);
  bool pass = true;
  std::string detail;
  for (double rho : {0.0, 0.4}) {
    double sum_rho = 0.0;
    int cover = 0, failures = 0;
    for (int r = 0; r < kConsistencyReps; ++r) {
      simgen::DgpConfig cfg;
      cfg.rows = cfg.cols = 30;
      cfg.rho_true = rho;
      cfg.delta_poverty = 0.5;
      cfg.seed = hash_combine(2024, static_cast<std::uint64_t>(r) + (rho > 0 ? 1000 : 0));
      const auto g = simgen::generate(cfg, lattice);
      try {
        const auto fit = econ::fit_sar(g.y_poverty, sar_design(g), lag);
        sum_rho += *fit.rho;
        if (std::abs(fit.delta - cfg.delta_poverty) <= 2.0 * fit.se_delta) ++cover;
      } catch (const Error&) {
        ++failures;
      }
    }
    const double mean_rho = sum_rho / (kConsistencyReps - failures);
    const bool ok = failures == 0 && std::abs(mean_rho - rho) <= kConsistencyRhoTol && cover >= kConsistencyMinCover;
    pass = pass && ok;
    detail += "rho=" + fmt(rho) + ": mean=" + fmt(mean_rho) + " cover=" + std::to_string(cover) + "/" +
              std::to_string(kConsistencyReps) + (failures ? " failures=" + std::to_string(failures) : "") + "; ";
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < kConsistencySeconds;
  return {pass, detail + fmt(secs) + "s"};
}

// 3 ------------------------------------------------------------------------
Outcome_ fe_equivalence() {
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    Rng rng(hash_combine(303, inst));
    const int n = 60, groups = 6;
    VectorXd y(n);
    MatrixXd x(n, 3);
    std::vector<std::string> fe(n), cl(n);
    for (int i = 0; i < n; ++i) {
      const int gi = i % groups;
      fe[i] = "z" + std::to_string(gi);
      cl[i] = fe[i];
      x(i, 0) = rng.uniform() < 0.4 ? 1.0 : 0.0;
      x(i, 1) = rng.normal();
      x(i, 2) = rng.normal() + 0.3 * gi;
      y(i) = 0.7 * x(i, 0) + 0.2 * x(i, 1) - 0.5 * x(i, 2) + gi + rng.normal();
    }
    const auto fit = econ::fit_fe(y, x, fe, cl, {econ::SeType::CR1, 0});
    // Dummy-variable OLS via normal equations.
    MatrixXd d = MatrixXd::Zero(n, 3 + groups);
    d.leftCols(3) = x;
    for (int i = 0; i < n; ++i) d(i, 3 + i % groups) = 1.0;
    const VectorXd b = (d.transpose() * d).fullPivLu().solve(d.transpose() * y);
    worst = std::max(worst, std::abs(fit.delta - b(0)));
  }
  return {worst <= kFeTol, "max |delta_within - delta_dummy| over 50 instances = " + fmt(worst)};
}

// 4 ------------------------------------------------------------------------
Outcome_ cr1_oracle() {
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    Rng rng(hash_combine(404, inst));
    const int n = 40 + inst, k = 3, g = 5 + inst % 4;
    VectorXd y(n);
    MatrixXd x(n, k);
    std::vector<std::string> cl(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      x(i, 1) = rng.uniform() < 0.5 ? 1.0 : 0.0;
      x(i, 2) = rng.normal();
      cl[i] = "c" + std::to_string(rng.below(static_cast<std::size_t>(g)));
      y(i) = 1.0 + 0.5 * x(i, 1) + x(i, 2) + rng.normal() * (1.0 + x(i, 1));
    }
    const auto fit = econ::fit_ols(y, x, cl, {econ::SeType::CR1, 1});
    // Sandwich written out cluster by cluster.
    const MatrixXd bread = (x.transpose() * x).inverse();
    const VectorXd beta = bread * x.transpose() * y;
    const VectorXd u = y - x * beta;
    std::map<std::string, VectorXd> score;
    for (int i = 0; i < n; ++i) {
      auto [it, fresh] = score.try_emplace(cl[i], VectorXd::Zero(k));
      it->second += x.row(i).transpose() * u(i);
    }
    MatrixXd meat = MatrixXd::Zero(k, k);
    for (const auto& [_, s] : score) meat += s * s.transpose();
    const double G = static_cast<double>(score.size());
    const double c = G / (G - 1.0) * (n - 1.0) / static_cast<double>(n - k);
    const MatrixXd v = c * bread * meat * bread;
    worst = std::max(worst, (fit.vcov - v).cwiseAbs().maxCoeff());
  }
  return {worst <= kCr1Tol, "max |V_cr1 - V_sandwich| over 20 instances = " + fmt(worst)};
}

// 5 ------------------------------------------------------------------------
Outcome_ bootstrap_size() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto lattice = simgen::make_lattice(8, 8);
  std::array<int, 2> rejections{};
  int failed = 0;
  for (int rep = 0; rep < kSizeReps; ++rep) {
    simgen::DgpConfig cfg;
    cfg.rows = cfg.cols = 8;
    cfg.rho_true = 0.0;
    cfg.delta_poverty = 0.5;
    cfg.treatment_share = 0.3;
    cfg.ideal_share = 1.0;
    cfg.zip_block = 2;
    cfg.seed = hash_combine(505, rep);
    for (Approach a : kApproaches) cfg.approach_bias[a] = {1.0, 0.0, 0.5};
    const auto g = simgen::generate(cfg, lattice);
    const auto sample = aggregate::restrict_panel(g.panel, {Comparison::VsIdeal});
    const auto data = stackinf::stack_panel(sample, Outcome::Poverty, Comparison::VsIdeal, {ingest::kDefaultCovariates[0], ingest::kDefaultCovariates[1]});
    stackinf::BootstrapOptions bo;
    bo.B = kSizeB;
    bo.seed = hash_combine(5050, rep);
    bo.fit.spec = stackinf::StackSpec::ZipFE;
    try {
      const auto dist = stackinf::cluster_bootstrap(data, bo);
      for (std::size_t m = 0; m < 2; ++m)
        rejections[m] += stackinf::equivalence_test(dist, dist.others[m]).verdict == stackinf::Verdict::Rejected;
    } catch (const Error&) {
      ++failed;
    }
  }
  const double secs = seconds_since(t0);
  const double r0 = static_cast<double>(rejections[0]) / kSizeReps, r1 = static_cast<double>(rejections[1]) / kSizeReps;
  return {failed == 0 && r0 <= kSizeMaxRate && r1 <= kSizeMaxRate && secs < kSizeSeconds,
          "rejection rate theta_mllm=" + fmt(r0) + " theta_segmentation=" + fmt(r1) + " (max " + fmt(kSizeMaxRate) +
              ", " + std::to_string(kSizeReps) + " reps, B=" + std::to_string(kSizeB) + "), " + fmt(secs) + "s"};
}

// 6 ------------------------------------------------------------------------
Outcome_ addition_identity() {
  simgen::DgpConfig cfg;
  cfg.rows = cfg.cols = 8;
  cfg.rho_true = 0.3;
  cfg.ideal_share = 1.0;
  cfg.seed = 606;
  cfg.approach_bias[Approach::Mllm] = {0.9, 0.1, 0.4};
  cfg.approach_bias[Approach::Segmentation] = {0.4, 0.0, 0.6};
  const auto lattice = simgen::make_lattice(8, 8);
  const auto g = simgen::generate(cfg, lattice);
  const auto sample = aggregate::restrict_panel(g.panel, {Comparison::VsIdeal});
  std::size_t checked = 0, bad = 0;
  for (auto spec : {stackinf::StackSpec::ZipFE, stackinf::StackSpec::SAR}) {
    const auto data = stackinf::stack_panel(sample, Outcome::Poverty, Comparison::VsIdeal, {}, &lattice.weights);
    stackinf::BootstrapOptions bo;
    bo.B = 199;
    bo.seed = 6060;
    bo.fit.spec = spec;
    const auto dist = stackinf::cluster_bootstrap(data, bo, &lattice.weights);
    const auto om = static_cast<Eigen::Index>(dist.omitted);
    for (Eigen::Index r = 0; r < dist.draws.rows(); ++r) {
      bad += dist.draws(r, om) != dist.delta0_draws(r);
      for (Eigen::Index m = 0; m < 2; ++m) {
        const auto col = static_cast<Eigen::Index>(dist.others[static_cast<std::size_t>(m)]);
        bad += dist.draws(r, col) != dist.delta0_draws(r) + dist.theta_draws(r, m);
        ++checked;
      }
    }
    // The recorded sums survive the CSV round trip bit for bit.
    const auto table = csv::Table::parse(stackinf::write_draws_csv(dist), "draws");
    const std::string o1 = "theta_" + std::string(to_string(dist.others[0]));
    const std::string o2 = "theta_" + std::string(to_string(dist.others[1]));
    for (const auto& r : table.rows()) {
      const double d0 = parse_double(table.cell(r, "delta0"));
      const double t1 = parse_double(table.cell(r, o1)), t2 = parse_double(table.cell(r, o2));
      bad += parse_double(table.cell(r, "total_" + std::string(to_string(dist.omitted)))) != d0;
      bad += parse_double(table.cell(r, "total_" + std::string(to_string(dist.others[0])))) != d0 + t1;
      bad += parse_double(table.cell(r, "total_" + std::string(to_string(dist.others[1])))) != d0 + t2;
      checked += 2;
    }
  }
  return {bad == 0 && checked > 0, std::to_string(checked) + " draw totals checked, " + std::to_string(bad) +
                                       " differ from delta0 + theta (0 ulp)"};
}

// 7 ------------------------------------------------------------------------
Outcome_ quantile_oracle() {
  double worst_loss = 0.0, worst_coef = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    Rng rng(hash_combine(707, inst));
    const int n = 9;
    VectorXd y(n);
    MatrixXd x(n, 2);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      x(i, 1) = rng.normal();
      y(i) = 0.5 + 1.5 * x(i, 1) + rng.normal() * 0.8;
    }
    const auto fit = quantfit::fit_quantile(y, x, 0.5);
    // Every LAD optimum sits on a basis of two observations fitted exactly.
    double best = std::numeric_limits<double>::infinity();
    VectorXd best_b(2);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (x(i, 1) == x(j, 1)) continue;
        const double slope = (y(j) - y(i)) / (x(j, 1) - x(i, 1));
        const double icpt = y(i) - slope * x(i, 1);
        double loss = 0.0;
        for (int t = 0; t < n; ++t) loss += 0.5 * std::abs(y(t) - icpt - slope * x(t, 1));
        if (loss < best) {
          best = loss;
          best_b << icpt, slope;
        }
      }
    worst_loss = std::max(worst_loss, std::abs(fit.check_loss - best));
    worst_coef = std::max(worst_coef, (fit.coefficients - best_b).cwiseAbs().maxCoeff());
  }
  // Trivial cases, asserted exactly.
  VectorXd yp(6), xp(6);
  xp << 0, 1, 2, 3, 4, 5;
  yp = 1.0 + 2.0 * xp.array();
  MatrixXd xd(6, 2);
  xd.col(0).setOnes();
  xd.col(1) = xp;
  const double r2_perfect = quantfit::fit_quantile(yp, xd, 0.5).pseudo_r2;
  VectorXd yi(7);
  yi << 3, -1, 4, 1, -5, 9, 2;
  const double r2_icpt = quantfit::fit_quantile(yi, MatrixXd::Ones(7, 1), 0.5).pseudo_r2;
  const bool pass = worst_loss <= kQuantTol && worst_coef <= kQuantTol && r2_perfect == 1.0 && r2_icpt == 0.0;
  return {pass, "max |loss diff|=" + fmt(worst_loss) + " max |coef diff|=" + fmt(worst_coef) +
                    "; pseudo-R2 perfect=" + fmt(r2_perfect) + " intercept-only=" + fmt(r2_icpt)};
}

// 8 ------------------------------------------------------------------------
Outcome_ fixture_reproduction() {
  const fs::path dir = fs::path(NBHD_FIXTURES) / "stacked_sar";
  const auto panel = aggregate::parse_panel(read_file(dir / "panel.csv"), "panel.csv");
  const auto w = spatial::from_json(nlohmann::json::parse(read_file(dir / "weights.json")));
  const auto sample = aggregate::restrict_panel(panel, {Comparison::VsIdeal});
  const auto data = stackinf::stack_panel(sample, Outcome::Poverty, Comparison::VsIdeal, {}, &w);
  const auto fit = stackinf::fit_stacked(data, {stackinf::StackSpec::SAR}, &w);
  std::map<Approach, double> theta;
  for (std::size_t m = 0; m < 2; ++m) theta[fit.others[m]] = fit.theta[m];
  const bool coef_ok = std::abs(fit.delta0 - 0.58) <= kFixtureTol && std::abs(theta[Approach::Mllm] + 0.11) <= kFixtureTol &&
                       std::abs(theta[Approach::Segmentation] + 0.79) <= kFixtureTol;
  stackinf::BootstrapOptions bo;
  bo.B = 500;
  bo.seed = 8;
  bo.fit.spec = stackinf::StackSpec::SAR;
  const auto dist = stackinf::cluster_bootstrap(data, bo, &w);
  const auto vm = stackinf::equivalence_test(dist, Approach::Mllm);
  const auto vs = stackinf::equivalence_test(dist, Approach::Segmentation);
  const bool verdict_ok = vm.verdict == stackinf::Verdict::NotRejected && vs.verdict == stackinf::Verdict::Rejected;
  return {coef_ok && verdict_ok, "delta0=" + fmt(fit.delta0) + " theta_mllm=" + fmt(theta[Approach::Mllm]) +
                                     " theta_segmentation=" + fmt(theta[Approach::Segmentation]) + "; mllm " +
                                     std::string(stackinf::to_string(vm.verdict)) + " [" + fmt(vm.ci_low) + ", " +
                                     fmt(vm.ci_high) + "], segmentation " +
                                     std::string(stackinf::to_string(vs.verdict)) + " [" + fmt(vs.ci_low) + ", " +
                                     fmt(vs.ci_high) + "]"};
}

// 9 ------------------------------------------------------------------------
Outcome_ protocol_corpus() {
  std::ifstream in(fs::path(NBHD_FIXTURES) / "protocol_corpus.jsonl");
  std::string line;
  std::size_t total = 0, agree = 0;
  std::string mismatches;
  std::set<std::string> labels;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto e = nlohmann::json::parse(line);
    elicit::ChainContext ctx;
    if (e.contains("context")) {
      const auto& c = e["context"];
      if (c.contains("n_facade_indicators")) {
        elicit::Prompt1Response p1;
        p1.structure_type = "other";
        p1.n_facade_indicators = c["n_facade_indicators"].get<int>();
        for (int i = 0; i < p1.n_facade_indicators; ++i) p1.facade_indicators.push_back("cue_" + std::to_string(i));
        ctx.prompt1 = p1;
      }
      if (c.contains("n_env_indicators") || c.contains("n_canopy_indicators")) {
        elicit::Prompt2Response p2;
        p2.n_env_indicators = c.value("n_env_indicators", 0);
        p2.n_canopy_indicators = c.value("n_canopy_indicators", 0);
        ctx.prompt2 = p2;
      }
    }
    std::string got = "valid";
    try {
      elicit::validate_response(e["prompt"].get<int>(), e["reply"].get<std::string>(), ctx);
    } catch (const Error& err) {
      got = std::string(to_string(err.kind()));
    }
    const auto expected = e["expected"].get<std::string>();
    labels.insert(expected);
    ++total;
    if (got == expected)
      ++agree;
    else
      mismatches += " " + e["id"].get<std::string>() + "(" + got + "!=" + expected + ")";
  }
  return {total >= kCorpusMin && agree == total,
          std::to_string(agree) + "/" + std::to_string(total) + " replies agree, " + std::to_string(labels.size()) +
              " verdict classes" + mismatches};
}

// 10 -----------------------------------------------------------------------
std::map<std::string, std::string> bundle(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    const auto ext = e.path().extension().string();
    if (name == "run_manifest.json" || name.front() == '.') continue;
    if (ext == ".csv" || ext == ".json" || ext == ".svg" || ext == ".txt" || ext == ".geojson")
      files[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  }
  return files;
}

Outcome_ determinism() {
  const fs::path base = fs::temp_directory_path() / ("nbhd_determinism_" + std::to_string(::getpid()));
  fs::remove_all(base);
  fs::create_directories(base);
  nlohmann::json cfg = {
      {"seed", 42},
      {"simulate",
       {{"rows", 9},
        {"cols", 9},
        {"rho_true", 0.3},
        {"approach_bias",
         {{"mllm", {{"attenuation", 0.9}, {"noise_sd", 0.3}}}, {"segmentation", {{"attenuation", 0.5}, {"noise_sd", 0.5}}}}}}},
      {"bootstrap", {{"B", 99}}},
      {"quantile", {{"B", 99}}}};
  write_file_atomic(base / "config.json", cfg.dump(2));
  int rc[2];
  for (int i = 0; i < 2; ++i) {
    const auto out = base / ("run" + std::to_string(i));
    const std::string cmd = std::string("\"") + NBHD_CLI + "\" run --config \"" + (base / "config.json").string() +
                            "\" --out \"" + out.string() + "\" --log-level warn > /dev/null";
    rc[i] = std::system(cmd.c_str());
  }
  if (rc[0] != 0 || rc[1] != 0) return {false, "run exit statuses " + std::to_string(rc[0]) + ", " + std::to_string(rc[1])};
  const auto a = bundle(base / "run0"), b = bundle(base / "run1");
  std::size_t differ = 0;
  std::string first;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || it->second != v) {
      ++differ;
      if (first.empty()) first = k;
    }
  }
  differ += b.size() > a.size() ? b.size() - a.size() : 0;
  // Manifests agree on config hash and on every output hash.
  auto m0 = nlohmann::json::parse(read_file(base / "run0" / "run_manifest.json"));
  auto m1 = nlohmann::json::parse(read_file(base / "run1" / "run_manifest.json"));
  bool manifest_ok = m0["config_hash"] == m1["config_hash"];
  for (const auto& [stage, entry] : m0["stages"].items())
    manifest_ok = manifest_ok && entry["outputs"] == m1["stages"][stage]["outputs"];
  const bool has_core = a.count("report/tables/effects_ladder.csv") && a.count("stack/equivalence.json") &&
                        a.count("simulate/panel.csv");
  fs::remove_all(base);
  return {differ == 0 && manifest_ok && has_core && !a.empty(),
          std::to_string(a.size()) + " CSV/JSON/SVG files compared, " + std::to_string(differ) + " differ" +
              (first.empty() ? "" : " (first: " + first + ")") + ", manifest output hashes " +
              (manifest_ok ? "equal" : "differ")};
}

// 11 -----------------------------------------------------------------------
Outcome_ weights_correctness() {
  std::map<std::string, geo::MultiPolygon> shapes;
  std::map<std::string, int> expected;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const std::string id = "c" + std::to_string(r) + std::to_string(c);
      shapes[id] = geo::square(c, r);
      const bool edge_r = r == 0 || r == 2, edge_c = c == 0 || c == 2;
      expected[id] = edge_r && edge_c ? 3 : (edge_r || edge_c ? 5 : 8);
    }
  const auto w = spatial::queen_weights(shapes);
  const auto deg = w.degrees();
  bool ok = true;
  std::multiset<int> got;
  for (std::size_t i = 0; i < w.ids.size(); ++i) {
    ok = ok && deg[i] == expected[w.ids[i]];
    got.insert(deg[i]);
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < w.row_std.rows(); ++i) worst = std::max(worst, std::abs(w.row_std.row(i).sum() - 1.0));
  std::string seq;
  for (int d : got) seq += std::to_string(d) + " ";
  return {ok && worst <= kRowSumTol, "degrees " + seq + "| max |row sum - 1| = " + fmt(worst)};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<std::string, std::function<Outcome_()>>> criteria{
      {"SAR oracle equivalence (7x7, rho=0.5, grid step 1e-4)", sar_oracle},
      {"SAR consistency (30x30, rho in {0, 0.4}, 100 reps)", sar_consistency},
      {"FE equivalence (within vs dummy OLS, 50 instances)", fe_equivalence},
      {"Clustered-SE oracle (CR1 vs sandwich, 20 instances)", cr1_oracle},
      {"Bootstrap size (200 reps, B=299, equal effects)", bootstrap_size},
      {"Addition identity (every draw, 0 ulp)", addition_identity},
      {"Quantile oracle (tau=0.5, n=9, k=2; trivial pseudo-R2)", quantile_oracle},
      {"Fixture reproduction (stacked SAR poverty)", fixture_reproduction},
      {"Prompt-protocol corpus (>=40 labeled replies)", protocol_corpus},
      {"Determinism (two `run` executions, simulate path)", determinism},
      {"Weights correctness (3x3 queen)", weights_correctness},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome_ o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] AC%02d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
