#include <doctest.h>

#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "nbhd/aggregate.hpp"
#include "nbhd/simgen.hpp"
#include "nbhd/stackinf.hpp"
#include "nbhd/util.hpp"
#include "test_support.hpp"

using namespace nbhd;
using namespace nbhd::stackinf;
using nbhd::testing::kind_of;

namespace {

struct Setup {
  simgen::Lattice lattice;
  simgen::Generated g;
  aggregate::Panel sample;
};

Setup make_setup(std::uint64_t seed, double rho = 0.2) {
  simgen::DgpConfig cfg;
  cfg.rows = cfg.cols = 7;
  cfg.rho_true = rho;
  cfg.ideal_share = 1.0;
  cfg.treatment_share = 0.35;
  cfg.seed = seed;
  cfg.approach_bias[Approach::Mllm] = {0.8, 0.0, 0.4};
  cfg.approach_bias[Approach::Segmentation] = {0.4, 0.0, 0.6};
  Setup s{simgen::make_lattice(7, 7), {}, {}};
  s.g = simgen::generate(cfg, s.lattice);
  s.sample = aggregate::restrict_panel(s.g.panel, {Comparison::VsIdeal});
  return s;
}

// Overwrites every approach's outcome with the authoritative one (+ shift for one approach).
StackedData copy_layers(StackedData d, Approach shifted, double c) {
  std::map<std::string, double> base;
  for (const auto& r : d.rows)
    if (r.approach == Approach::Authoritative) base[r.cbg_id] = r.y;
  for (auto& r : d.rows) r.y = base[r.cbg_id] + (r.approach == shifted ? c : 0.0);
  return d;
}

BootstrapDistribution synthetic(double lo, double hi, int n) {
  BootstrapDistribution d;
  d.others = {Approach::Mllm, Approach::Segmentation};
  d.theta_draws.resize(n, 2);
  d.delta0_draws = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double t = lo + (hi - lo) * i / (n - 1);
    d.theta_draws(i, 0) = t;
    d.theta_draws(i, 1) = -t;
  }
  return d;
}

}  // namespace

TEST_SUITE("stackinf") {
  TEST_CASE("three rows per unit") {
    const auto s = make_setup(1);
    const auto data = stack_panel(s.sample, Outcome::Poverty, Comparison::VsIdeal, {}, &s.lattice.weights);
    CHECK(data.rows.size() == 3 * s.sample.n_cbgs());
    std::map<std::string, int> count;
    for (const auto& r : data.rows) ++count[r.cbg_id];
    for (const auto& [_, c] : count) CHECK(c == 3);

    auto broken = data;
    broken.rows.pop_back();
    CHECK(kind_of([&] { fit_stacked(broken, {StackSpec::ZipFE}); }) == ErrorKind::UnbalancedBlock);
  }

  TEST_CASE("identical layers give zero deviations") {
    const auto s = make_setup(2);
    const auto data = copy_layers(
        stack_panel(s.sample, Outcome::Poverty, Comparison::VsIdeal, {}, &s.lattice.weights), Approach::Mllm, 0.0);
    for (auto spec : {StackSpec::ZipFE, StackSpec::SAR}) {
      const auto f = fit_stacked(data, {spec}, &s.lattice.weights);
      for (int m = 0; m < 2; ++m) {
        CHECK(std::abs(f.theta[m]) < 1e-12);
        CHECK(std::abs(f.eta[m]) < 1e-12);
      }
    }
  }

  TEST_CASE("pure level shift moves eta only") {
    const auto s = make_setup(3);
    const auto data = copy_layers(stack_panel(s.sample, Outcome::Poverty, Comparison::VsIdeal, {}), Approach::Segmentation, 0.75);
    const auto f = fit_stacked(data, {StackSpec::ZipFE});
    for (int m = 0; m < 2; ++m) {
      CHECK(std::abs(f.theta[m]) < 1e-12);
      const double expect = f.others[m] == Approach::Segmentation ? 0.75 : 0.0;
      CHECK(f.eta[m] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  TEST_CASE("omitted category changes parameters, not totals") {
    const auto s = make_setup(4);
    const auto data = stack_panel(s.sample, Outcome::Canopy, Comparison::VsIdeal, {ingest::kDefaultCovariates[0]},
                                  &s.lattice.weights);
    for (auto spec : {StackSpec::ZipFE, StackSpec::SAR}) {
      const auto a = fit_stacked(data, {spec, Approach::Authoritative}, &s.lattice.weights);
      const auto b = fit_stacked(data, {spec, Approach::Segmentation}, &s.lattice.weights);
      for (int k = 0; k < 3; ++k) CHECK(std::abs(a.totals[k] - b.totals[k]) < 1e-8);
      CHECK(b.totals[2] == b.delta0);
    }
  }

  TEST_CASE("degenerate resampler collapses the interval") {
    const auto s = make_setup(5);
    const auto data = stack_panel(s.sample, Outcome::Poverty, Comparison::VsIdeal, {});
    BootstrapOptions bo;
    bo.B = 25;
    bo.seed = 1;
    bo.resampler = [](std::size_t n, Rng&) {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      return idx;
    };
    const auto d = cluster_bootstrap(data, bo);
    REQUIRE(d.draws.rows() == 25);
    for (Eigen::Index r = 1; r < 25; ++r) CHECK(d.draws.row(r) == d.draws.row(0));
    for (int k = 0; k < 3; ++k) {
      CHECK(d.ci_low[k] == doctest::Approx(d.point.totals[k]).epsilon(1e-12));
      CHECK(d.ci_high[k] == doctest::Approx(d.point.totals[k]).epsilon(1e-12));
    }
  }

  TEST_CASE("draws depend on seed and index only") {
    const auto s = make_setup(6);
    const auto data = stack_panel(s.sample, Outcome::Si, Comparison::VsIdeal, {}, &s.lattice.weights);
    BootstrapOptions bo;
    bo.B = 40;
    bo.seed = 99;
    bo.fit.spec = StackSpec::SAR;
    set_worker_count(1);
    const auto a = cluster_bootstrap(data, bo, &s.lattice.weights);
    set_worker_count(3);
    const auto b = cluster_bootstrap(data, bo, &s.lattice.weights);
    set_worker_count(0);
    CHECK(a.draws == b.draws);
    CHECK(write_draws_csv(a) == write_draws_csv(b));
    bo.seed = 100;
    CHECK(cluster_bootstrap(data, bo, &s.lattice.weights).draws != a.draws);
    for (int k = 0; k < 3; ++k) {
      CHECK(a.ci_low[k] <= a.means[k]);
      CHECK(a.means[k] <= a.ci_high[k]);
    }
  }

  TEST_CASE("failure budget") {
    const auto s = make_setup(7);
    const auto data = stack_panel(s.sample, Outcome::Poverty, Comparison::VsIdeal, {});
    BootstrapOptions bo;
    bo.B = 20;
    bo.resampler = [](std::size_t n, Rng&) { return std::vector<std::size_t>(n, 0); };  // no treatment variation
    CHECK(kind_of([&] { cluster_bootstrap(data, bo); }) == ErrorKind::BootstrapFailures);
  }

  TEST_CASE("equivalence verdicts") {
    auto excl = synthetic(-0.3, -0.1, 200);
    CHECK(equivalence_test(excl, Approach::Mllm).verdict == Verdict::Rejected);
    CHECK(equivalence_test(excl, Approach::Segmentation).verdict == Verdict::Rejected);
    auto sym = synthetic(-1.0, 1.0, 201);
    const auto r = equivalence_test(sym, Approach::Mllm);
    CHECK(r.verdict == Verdict::NotRejected);
    CHECK(r.ci_low == doctest::Approx(-0.95));
    CHECK(r.ci_high == doctest::Approx(0.95));
  }
}
