// Builds tests/fixtures/stacked_sar: a lattice panel whose stacked SAR
// poverty fit (redlined vs ideal, no covariates) lands on chosen totals.
//
// usage: make_stacked_fixture OUT_DIR [delta0 theta_mllm theta_segmentation]

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <nlohmann/json.hpp>

#include "nbhd/aggregate.hpp"
#include "nbhd/simgen.hpp"
#include "nbhd/spatial.hpp"
#include "nbhd/stackinf.hpp"
#include "nbhd/util.hpp"

using namespace nbhd;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  if (argc != 2 && argc != 5) {
    std::cerr << "usage: make_stacked_fixture OUT_DIR [delta0 theta_mllm theta_segmentation]\n";
    return 2;
  }
  const fs::path out = argv[1];
  double delta0 = 0.58, theta_m = -0.11, theta_s = -0.79;
  if (argc == 5) {
    delta0 = std::atof(argv[2]);
    theta_m = std::atof(argv[3]);
    theta_s = std::atof(argv[4]);
  }
  const std::array<double, 3> target{delta0, delta0 + theta_m, delta0 + theta_s};

  simgen::DgpConfig dgp;
  dgp.rows = 12;
  dgp.cols = 12;
  dgp.rho_true = 0.35;
  dgp.delta_poverty = 0.6;
  dgp.delta_canopy = -0.3;
  dgp.treatment_share = 0.2;
  dgp.ideal_share = 1.0;
  dgp.covariate_beta = {};
  dgp.seed = 20231;
  dgp.approach_bias[Approach::Mllm] = {1.0, 0.0, 0.6};
  dgp.approach_bias[Approach::Segmentation] = {0.5, 0.0, 0.5};
  const auto lattice = simgen::make_lattice(dgp.rows, dgp.cols);
  auto g = simgen::generate(dgp, lattice);
  const auto& w = lattice.weights;

  const aggregate::SampleSpec spec{Comparison::VsIdeal, aggregate::StandardizationScope::EstimationSample,
                                   aggregate::SdConvention::Sample};
  aggregate::Panel base = g.panel;
  std::array<double, 3> shift{};
  stackinf::StackedFit fit;
  auto apply = [&] {
    aggregate::Panel p = base;
    for (auto& r : p.rows)
      if (r.redlined() == 1.0) r.poverty_raw += shift[static_cast<std::size_t>(r.approach)];
    return aggregate::restrict_panel(p, {Comparison::All, spec.scope, spec.sd});
  };
  aggregate::Panel panel;
  for (int it = 0; it < 200; ++it) {
    panel = apply();
    const auto sample = aggregate::restrict_panel(panel, spec);
    const auto data = stackinf::stack_panel(sample, Outcome::Poverty, Comparison::VsIdeal, {}, &w);
    fit = stackinf::fit_stacked(data, {stackinf::StackSpec::SAR}, &w);
    double worst = 0.0;
    for (Approach a : kApproaches) {
      const auto i = static_cast<std::size_t>(a);
      const double err = target[i] - fit.totals[i];
      worst = std::max(worst, std::abs(err));
      // Totals are in SD units of each layer; a raw shift moves them by about shift/sd.
      std::vector<double> raw;
      for (const auto* r : sample.layer(a)) raw.push_back(r->poverty_raw);
      double m = 0.0, v = 0.0;
      for (double x : raw) m += x;
      m /= static_cast<double>(raw.size());
      for (double x : raw) v += (x - m) * (x - m);
      shift[i] += 0.8 * err * std::sqrt(v / static_cast<double>(raw.size() - 1));
    }
    if (worst < 1e-9) break;
  }
  std::cout << "delta0=" << format_sig6(fit.delta0) << " theta=" << format_sig6(fit.theta[0]) << ","
            << format_sig6(fit.theta[1]) << " rho=" << format_sig6(fit.rho.value_or(0)) << "\n";

  const auto sample = aggregate::restrict_panel(panel, spec);
  const auto data = stackinf::stack_panel(sample, Outcome::Poverty, Comparison::VsIdeal, {}, &w);
  stackinf::BootstrapOptions bo;
  bo.B = 500;
  bo.seed = 8;
  bo.fit.spec = stackinf::StackSpec::SAR;
  const auto dist = stackinf::cluster_bootstrap(data, bo, &w);
  for (Approach a : {Approach::Mllm, Approach::Segmentation}) {
    const auto r = stackinf::equivalence_test(dist, a);
    std::cout << to_string(a) << ": theta_mean=" << format_sig6(r.theta_mean) << " ci=[" << format_sig6(r.ci_low)
              << ", " << format_sig6(r.ci_high) << "] " << stackinf::to_string(r.verdict) << "\n";
  }

  fs::create_directories(out);
  write_file_atomic(out / "panel.csv", aggregate::write_panel(panel));
  write_file_atomic(out / "weights.json", spatial::to_json(w).dump(2) + "\n");
  nlohmann::json meta;
  meta["outcome"] = "poverty";
  meta["comparison"] = "vs_ideal";
  meta["spec"] = "sar";
  meta["covariates"] = nlohmann::json::array();
  meta["target"] = {{"delta0", delta0}, {"theta_mllm", theta_m}, {"theta_segmentation", theta_s}};
  meta["generator"] = simgen::to_json(dgp);
  meta["treated_shift_raw"] = shift;
  write_file_atomic(out / "meta.json", meta.dump(2) + "\n");
  return 0;
}
