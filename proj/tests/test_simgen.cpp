#include <doctest.h>

#include <cmath>
#include <set>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "nbhd/aggregate.hpp"
#include "nbhd/econ.hpp"
#include "nbhd/simgen.hpp"
#include "nbhd/spatial.hpp"
#include "nbhd/stackinf.hpp"
#include "test_support.hpp"

using namespace nbhd;
using namespace nbhd::simgen;
using nbhd::testing::kind_of;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double corr(const VectorXd& a, const VectorXd& b) {
  const VectorXd ca = a.array() - a.mean(), cb = b.array() - b.mean();
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

VectorXd raw_layer(const aggregate::Panel& p, Approach a) {
  const auto rows = p.layer(a);
  VectorXd v(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) v(static_cast<Eigen::Index>(i)) = rows[i]->poverty_raw;
  return v;
}

}  // namespace

TEST_SUITE("simgen") {
  TEST_CASE("config validation") {
    DgpConfig cfg;
    CHECK_NOTHROW(validate(cfg));
    cfg.rows = 2;
    CHECK(kind_of([&] { validate(cfg); }) == ErrorKind::ConfigInvalid);
    cfg.rows = 5;
    cfg.rho_true = 1.2;
    CHECK(kind_of([&] { validate(cfg); }) == ErrorKind::ConfigInvalid);
    cfg.rho_true = 0.0;
    cfg.treatment_share = 1.0;
    CHECK(kind_of([&] { validate(cfg); }) == ErrorKind::ConfigInvalid);
    cfg.treatment_share = 0.3;
    cfg.rho_true = 1.0;  // 1/λ_max of a row-standardized lattice
    CHECK(kind_of([&] { generate(cfg); }) == ErrorKind::SingularSystem);
  }

  TEST_CASE("config json round trip") {
    DgpConfig cfg;
    cfg.rows = 6;
    cfg.cols = 9;
    cfg.rho_true = -0.3;
    cfg.approach_bias[Approach::Segmentation] = {0.4, 0.1, 0.2};
    cfg.seed = 123;
    const auto back = parse_config(to_json(cfg));
    CHECK(to_json(back) == to_json(cfg));
    const auto grid = parse_config(nlohmann::json{{"grid", {4, 5}}});
    CHECK(grid.rows == 4);
    CHECK(grid.cols == 5);
    CHECK(kind_of([] { parse_config(nlohmann::json{{"rowz", 4}}); }) == ErrorKind::ConfigInvalid);
  }

  TEST_CASE("lattice geometry") {
    const auto lat = make_lattice(4, 3);
    CHECK(lat.ids.size() == 12);
    CHECK(std::is_sorted(lat.ids.begin(), lat.ids.end()));
    CHECK(lat.ids.front() == cell_id(0, 0, 4, 3));
    const auto d = lat.weights.degrees();
    const std::multiset<int> deg(d.begin(), d.end());
    CHECK(deg.count(3) == 4);
    CHECK(deg.count(8) == 2);
  }

  TEST_CASE("reproducible panels") {
    DgpConfig cfg;
    cfg.rows = cfg.cols = 6;
    cfg.rho_true = 0.4;
    cfg.seed = 9;
    cfg.approach_bias[Approach::Mllm] = {0.9, 0.05, 0.3};
    const auto a = generate(cfg), b = generate(cfg);
    CHECK(aggregate::write_panel(a.panel) == aggregate::write_panel(b.panel));
    CHECK(a.truth() == b.truth());
    cfg.seed = 10;
    CHECK(aggregate::write_panel(generate(cfg).panel) != aggregate::write_panel(a.panel));
    CHECK(a.truth()["config"]["rho_true"] == 0.4);
  }

  TEST_CASE("treatment share and zip blocks") {
    DgpConfig cfg;
    cfg.rows = cfg.cols = 9;
    cfg.treatment_share = 0.3;
    cfg.zip_block = 3;
    const auto g = generate(cfg);
    CHECK(g.treated.sum() == std::round(0.3 * 81));
    std::set<std::string> zips(g.zip_codes.begin(), g.zip_codes.end());
    CHECK(zips.size() == 9);
    // Cells in one 3x3 block share a zip code.
    CHECK(g.zip_codes[0] == g.zip_codes[1 * 9 + 2]);
    CHECK(g.zip_codes[0] != g.zip_codes[3]);
  }

  TEST_CASE("finite outcomes across feasible rho") {
    const auto lat = make_lattice(6, 6);
    for (double rho : {-0.9, -0.5, 0.0, 0.5, 0.9}) {
      DgpConfig cfg;
      cfg.rows = cfg.cols = 6;
      cfg.rho_true = rho;
      const auto g = generate(cfg, lat);
      CHECK(g.y_poverty.allFinite());
      CHECK(g.y_canopy.allFinite());
    }
  }

  TEST_CASE("no spatial dependence without rho") {
    DgpConfig cfg;
    cfg.rows = cfg.cols = 30;
    cfg.rho_true = 0.0;
    cfg.delta_poverty = 0.0;
    cfg.covariate_beta = {};
    cfg.seed = 41;
    const auto lat = make_lattice(30, 30);
    const auto g = generate(cfg, lat);
    CHECK(std::abs(corr(g.y_poverty, spatial::spatial_lag(lat.weights, g.y_poverty))) < 0.1);
  }

  TEST_CASE("noiseless data give the effect exactly") {
    DgpConfig cfg;
    cfg.rows = cfg.cols = 8;
    cfg.noise_sd = 0.0;
    cfg.delta_poverty = 0.37;
    cfg.seed = 2;
    const auto g = generate(cfg);
    MatrixXd x(64, 4);
    x << VectorXd::Ones(64), g.treated, g.covariates;
    CHECK(std::abs(econ::fit_ols(g.y_poverty, x, g.zip_codes).delta - 0.37) < 1e-10);
  }

  TEST_CASE("attenuation shrinks raw effects") {
    const auto lat = make_lattice(8, 8);
    double sum_full = 0.0, sum_half = 0.0, sum_low = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      DgpConfig cfg;
      cfg.rows = cfg.cols = 8;
      cfg.seed = 1000 + rep;
      cfg.approach_bias[Approach::Mllm] = {0.7, 0.0, 0.3};
      cfg.approach_bias[Approach::Segmentation] = {0.3, 0.0, 0.3};
      const auto g = generate(cfg, lat);
      MatrixXd x(64, 2);
      x << VectorXd::Ones(64), g.treated;
      sum_full += std::abs(econ::fit_ols(raw_layer(g.panel, Approach::Authoritative), x, g.zip_codes).delta);
      sum_half += std::abs(econ::fit_ols(raw_layer(g.panel, Approach::Mllm), x, g.zip_codes).delta);
      sum_low += std::abs(econ::fit_ols(raw_layer(g.panel, Approach::Segmentation), x, g.zip_codes).delta);
    }
    CHECK(sum_full > sum_half);
    CHECK(sum_half > sum_low);
  }

  TEST_CASE("stacked fit recovers an attenuation gap on raw outcomes") {
    DgpConfig cfg;
    cfg.rows = cfg.cols = 12;
    cfg.rho_true = 0.0;
    cfg.delta_poverty = 1.0;
    cfg.ideal_share = 1.0;
    cfg.seed = 55;
    cfg.approach_bias[Approach::Segmentation] = {0.4, 0.0, 0.2};
    const auto g = generate(cfg);
    const auto sample = aggregate::restrict_panel(g.panel, {Comparison::VsIdeal});
    auto data = stackinf::stack_panel(sample, Outcome::Poverty, Comparison::VsIdeal, {});
    std::map<std::pair<std::string, Approach>, double> raw;
    for (const auto& r : sample.rows) raw[{r.cbg_id, r.approach}] = r.poverty_raw;
    for (auto& r : data.rows) r.y = raw.at({r.cbg_id, r.approach});
    stackinf::BootstrapOptions bo;
    bo.B = 199;
    bo.seed = 3;
    const auto dist = stackinf::cluster_bootstrap(data, bo);
    const std::size_t m = dist.others[0] == Approach::Segmentation ? 0 : 1;
    const VectorXd th = dist.theta_draws.col(static_cast<Eigen::Index>(m));
    const double se = std::sqrt((th.array() - th.mean()).square().sum() / (th.size() - 1));
    CHECK(std::abs(dist.point.theta[m] - (0.4 - 1.0) * cfg.delta_poverty) < 2.0 * se);
  }
}
