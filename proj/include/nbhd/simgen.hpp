#pragma once

// Synthetic lattices with known spatial dependence, treatment effects and
// measurement distortions for each approach.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "nbhd/aggregate.hpp"
#include "nbhd/geometry.hpp"
#include "nbhd/spatial.hpp"

namespace nbhd::simgen {

/// y_m = attenuation · y + shift + noise_sd · N(0, 1).
struct ApproachBias {
  double attenuation = 1.0;
  double shift = 0.0;
  double noise_sd = 0.0;
};

struct DgpConfig {
  int rows = 10;
  int cols = 10;
  double rho_true = 0.0;
  double delta_poverty = 0.5;
  double delta_canopy = -0.5;
  double treatment_share = 0.3;
  double noise_sd = 1.0;
  /// Approaches absent from the map are measured without distortion.
  std::map<Approach, ApproachBias> approach_bias;
  /// Covariate effects, one per generated covariate (named after the default
  /// covariate list). Covariates are iid N(0, 1).
  std::vector<double> covariate_beta{0.3, -0.2};
  /// Zip codes are square blocks of zip_block × zip_block cells.
  int zip_block = 3;
  /// Share of untreated cells labeled Ideal (the rest are Stable/Declining).
  double ideal_share = 0.5;
  std::uint64_t seed = 1;
};

/// Throws ConfigInvalid on a violated invariant.
void validate(const DgpConfig& cfg);
DgpConfig parse_config(const nlohmann::json& doc);
nlohmann::json to_json(const DgpConfig& cfg);

/// Unit-square lattice: geometry, queen weights and their spectral factors.
struct Lattice {
  int rows = 0;
  int cols = 0;
  std::vector<std::string> ids;  // row-major, sorted
  std::map<std::string, geo::MultiPolygon> shapes;
  spatial::WeightsMatrix weights;
  spatial::Spectral spectral;
};
Lattice make_lattice(int rows, int cols);
std::string cell_id(int r, int c, int rows, int cols);

struct Generated {
  aggregate::Panel panel;  // comparison All, z-scores over every cell
  Eigen::VectorXd treated;  // 0/1, lattice order
  Eigen::MatrixXd covariates;
  /// Latent outcomes before any approach distortion, lattice order.
  Eigen::VectorXd y_poverty;
  Eigen::VectorXd y_canopy;
  std::vector<std::string> zip_codes;
  nlohmann::json truth() const;
  DgpConfig config;
};

/// y = (I − ρW)⁻¹(δ·T + Xβ + ε). Throws SingularSystem when I − ρW is
/// singular. `lattice` must match the configured dimensions.
Generated generate(const DgpConfig& cfg, const Lattice& lattice);
Generated generate(const DgpConfig& cfg);

}  // namespace nbhd::simgen
