#include "nbhd/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "nbhd/error.hpp"
#include "nbhd/ingest.hpp"
#include "nbhd/util.hpp"

namespace nbhd::simgen {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void validate(const DgpConfig& cfg) {
  auto bad = [](const std::string& field, const std::string& why) { throw Error(ErrorKind::ConfigInvalid, field + ": " + why); };
  if (cfg.rows < 3 || cfg.cols < 3) bad("grid", "must be at least 3x3");
  if (!(std::abs(cfg.rho_true) <= 1.0)) bad("rho_true", "must satisfy |rho| <= 1");
  if (!(cfg.treatment_share > 0.0 && cfg.treatment_share < 1.0)) bad("treatment_share", "must lie in (0, 1)");
  if (!(cfg.noise_sd >= 0.0)) bad("noise_sd", "must be >= 0");
  if (cfg.zip_block < 1) bad("zip_block", "must be >= 1");
  if (!(cfg.ideal_share >= 0.0 && cfg.ideal_share <= 1.0)) bad("ideal_share", "must lie in [0, 1]");
  if (cfg.covariate_beta.size() > ingest::kDefaultCovariates.size()) bad("covariate_beta", "too many covariates");
  for (const auto& [a, b] : cfg.approach_bias)
    if (!(b.noise_sd >= 0.0)) bad("approach_bias." + std::string(to_string(a)), "noise_sd must be >= 0");
}

DgpConfig parse_config(const nlohmann::json& doc) {
  DgpConfig c;
  static const std::set<std::string> known{"grid",         "rows",      "cols",           "rho_true",
                                           "delta_poverty", "delta_canopy", "treatment_share", "noise_sd",
                                           "covariate_beta", "zip_block", "ideal_share",    "seed",
                                           "approach_bias"};
  if (!doc.is_object()) throw Error(ErrorKind::ConfigInvalid, "simulation config must be an object");
  for (const auto& [key, _] : doc.items())
    if (!known.count(key)) throw Error(ErrorKind::ConfigInvalid, "simulation config: unknown key '" + key + "'");
  try {
    if (doc.contains("grid")) {
      c.rows = doc["grid"].at(0).get<int>();
      c.cols = doc["grid"].at(1).get<int>();
    }
    c.rows = doc.value("rows", c.rows);
    c.cols = doc.value("cols", c.cols);
    c.rho_true = doc.value("rho_true", c.rho_true);
    c.delta_poverty = doc.value("delta_poverty", c.delta_poverty);
    c.delta_canopy = doc.value("delta_canopy", c.delta_canopy);
    c.treatment_share = doc.value("treatment_share", c.treatment_share);
    c.noise_sd = doc.value("noise_sd", c.noise_sd);
    c.covariate_beta = doc.value("covariate_beta", c.covariate_beta);
    c.zip_block = doc.value("zip_block", c.zip_block);
    c.ideal_share = doc.value("ideal_share", c.ideal_share);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("approach_bias"))
      for (const auto& [name, b] : doc["approach_bias"].items()) {
        ApproachBias ab;
        for (const auto& [key, _] : b.items())
          if (key != "attenuation" && key != "shift" && key != "noise_sd")
            throw Error(ErrorKind::ConfigInvalid, "approach_bias." + name + ": unknown key '" + key + "'");
        ab.attenuation = b.value("attenuation", ab.attenuation);
        ab.shift = b.value("shift", ab.shift);
        ab.noise_sd = b.value("noise_sd", ab.noise_sd);
        c.approach_bias[parse_approach(name)] = ab;
      }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("simulation config: ") + e.what());
  }
  validate(c);
  return c;
}

nlohmann::json to_json(const DgpConfig& c) {
  nlohmann::json j;
  j["rows"] = c.rows;
  j["cols"] = c.cols;
  j["rho_true"] = c.rho_true;
  j["delta_poverty"] = c.delta_poverty;
  j["delta_canopy"] = c.delta_canopy;
  j["treatment_share"] = c.treatment_share;
  j["noise_sd"] = c.noise_sd;
  j["covariate_beta"] = c.covariate_beta;
  j["zip_block"] = c.zip_block;
  j["ideal_share"] = c.ideal_share;
  j["seed"] = c.seed;
  nlohmann::json ab = nlohmann::json::object();
  for (const auto& [a, b] : c.approach_bias)
    ab[std::string(to_string(a))] = {{"attenuation", b.attenuation}, {"shift", b.shift}, {"noise_sd", b.noise_sd}};
  j["approach_bias"] = ab;
  return j;
}

std::string cell_id(int r, int c, int rows, int cols) {
  const int width = static_cast<int>(std::to_string(std::max(rows, cols) - 1).size());
  char buf[64];
  std::snprintf(buf, sizeof buf, "g%0*d_%0*d", width, r, width, c);
  return buf;
}

Lattice make_lattice(int rows, int cols) {
  if (rows < 1 || cols < 1) throw Error(ErrorKind::ConfigInvalid, "lattice dimensions must be positive");
  Lattice l;
  l.rows = rows;
  l.cols = cols;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const auto id = cell_id(r, c, rows, cols);
      l.ids.push_back(id);
      l.shapes[id] = geo::square(c, r);
    }
  l.weights = spatial::queen_weights(l.shapes);
  l.spectral = spatial::spectral(l.weights);
  return l;
}

Generated generate(const DgpConfig& cfg) {
  validate(cfg);
  return generate(cfg, make_lattice(cfg.rows, cfg.cols));
}

Generated generate(const DgpConfig& cfg, const Lattice& lattice) {
  validate(cfg);
  if (lattice.rows != cfg.rows || lattice.cols != cfg.cols)
    throw Error(ErrorKind::DimensionMismatch, "lattice does not match the configured grid");
  const Index n = static_cast<Index>(lattice.ids.size());
  for (Index i = 0; i < lattice.spectral.lambda.size(); ++i)
    if (std::abs(1.0 - cfg.rho_true * lattice.spectral.lambda(i)) < 1e-10)
      throw Error(ErrorKind::SingularSystem, "I - rho*W is singular at rho=" + format_exact(cfg.rho_true));

  Rng rng(cfg.seed);
  Generated g;
  g.config = cfg;

  // Treatment: exactly round(share·n) cells, chosen by a seeded shuffle.
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_treated = std::clamp<Index>(static_cast<Index>(std::llround(cfg.treatment_share * static_cast<double>(n))), 1, n - 1);
  g.treated = VectorXd::Zero(n);
  for (Index i = 0; i < n_treated; ++i) g.treated(order[static_cast<std::size_t>(i)]) = 1.0;

  std::vector<HolcGroup> groups(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    groups[static_cast<std::size_t>(i)] = g.treated(i) == 1.0 ? HolcGroup::Redlined
                                          : rng.uniform() < cfg.ideal_share ? HolcGroup::Ideal
                                                                            : HolcGroup::StableDeclining;

  const Index k = static_cast<Index>(cfg.covariate_beta.size());
  g.covariates.resize(n, k);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < k; ++j) g.covariates(i, j) = rng.normal();
  VectorXd xb = VectorXd::Zero(n);
  for (Index j = 0; j < k; ++j) xb += cfg.covariate_beta[static_cast<std::size_t>(j)] * g.covariates.col(j);

  auto outcome = [&](double delta) {
    VectorXd b = delta * g.treated + xb;
    for (Index i = 0; i < n; ++i) b(i) += cfg.noise_sd * rng.normal();
    return cfg.rho_true == 0.0 ? b : lattice.spectral.solve(cfg.rho_true, b);
  };
  g.y_poverty = outcome(cfg.delta_poverty);
  g.y_canopy = outcome(cfg.delta_canopy);
  if (!g.y_poverty.allFinite() || !g.y_canopy.allFinite())
    throw Error(ErrorKind::SingularSystem, "non-finite outcome at rho=" + format_exact(cfg.rho_true));

  g.zip_codes.resize(static_cast<std::size_t>(n));
  for (int r = 0; r < cfg.rows; ++r)
    for (int c = 0; c < cfg.cols; ++c) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "z%03d_%03d", r / cfg.zip_block, c / cfg.zip_block);
      g.zip_codes[static_cast<std::size_t>(r * cfg.cols + c)] = buf;
    }

  aggregate::Panel full;
  full.spec.comparison = Comparison::All;
  for (Approach a : kApproaches) {
    ApproachBias bias;
    if (auto it = cfg.approach_bias.find(a); it != cfg.approach_bias.end()) bias = it->second;
    for (Index i = 0; i < n; ++i) {
      aggregate::PanelRow row;
      row.cbg_id = lattice.ids[static_cast<std::size_t>(i)];
      row.approach = a;
      row.poverty_raw = bias.attenuation * g.y_poverty(i) + bias.shift + bias.noise_sd * rng.normal();
      row.canopy_raw = bias.attenuation * g.y_canopy(i) + bias.shift + bias.noise_sd * rng.normal();
      row.weight_images = 4;
      for (Index j = 0; j < k; ++j)
        row.covariates[ingest::kDefaultCovariates[static_cast<std::size_t>(j)]] = g.covariates(i, j);
      row.holc_group = groups[static_cast<std::size_t>(i)];
      row.zip_code = g.zip_codes[static_cast<std::size_t>(i)];
      full.rows.push_back(std::move(row));
    }
  }
  g.panel = aggregate::restrict_panel(full, {Comparison::All, aggregate::StandardizationScope::EstimationSample,
                                             aggregate::SdConvention::Sample});
  return g;
}

nlohmann::json Generated::truth() const {
  nlohmann::json j;
  j["config"] = to_json(config);
  j["n_cells"] = treated.size();
  j["n_treated"] = static_cast<long long>(treated.sum());
  j["model"] = "y = (I - rho W)^-1 (delta T + X beta + eps); approach m observes a_m y + shift_m + noise_m";
  j["weights"] = "queen contiguity on unit squares, row-standardized";
  j["outcome_scale"] = "panel z-scores are standardized; delta_* are on the latent (raw) scale";
  return j;
}

}  // namespace nbhd::simgen
