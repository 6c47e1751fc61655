#pragma once

// Queen-contiguity weights and the matrix services the SAR estimator needs.

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "nbhd/geometry.hpp"

namespace nbhd::spatial {

inline constexpr double kDefaultSnapTolerance = 1e-9;

struct WeightsMatrix {
  std::vector<std::string> ids;
  Eigen::MatrixXd binary;   // symmetric 0/1, zero diagonal
  Eigen::MatrixXd row_std;  // rows sum to 1, island rows are 0
  std::set<std::string> islands;
  /// Eigenvalues of row_std, ascending. Real because row_std is similar to
  /// the symmetric D^{-1/2} B D^{-1/2}.
  Eigen::VectorXd eigenvalues;
  double lambda_min = 0.0;
  double lambda_max = 0.0;

  std::size_t size() const { return ids.size(); }
  std::vector<int> degrees() const;
  std::vector<std::vector<std::size_t>> neighbors() const;
};

/// Derives row_std, islands and the spectrum from a binary adjacency matrix.
/// Throws DimensionMismatch for non-square input and InvalidGeometry if the
/// matrix is not symmetric 0/1 with a zero diagonal.
WeightsMatrix from_binary(std::vector<std::string> ids, Eigen::MatrixXd binary);

/// i ~ j iff their boundaries share a point within `tol`. Throws
/// InvalidGeometry(cbg_id) for a defective polygon.
WeightsMatrix queen_weights(const std::map<std::string, geo::MultiPolygon>& shapes,
                            double tol = kDefaultSnapTolerance);

/// row_std · y. Throws DimensionMismatch.
Eigen::VectorXd spatial_lag(const WeightsMatrix& w, const Eigen::VectorXd& y);

/// W over `ids` (in that order), re-row-standardized. Throws
/// DimensionMismatch when an id is unknown.
WeightsMatrix restrict_to(const WeightsMatrix& w, const std::vector<std::string>& ids);

/// W over a resampled index map: unit a stands for original unit map[a].
/// Copies inherit the original neighbor structure; two copies of the same
/// unit are not neighbors of each other.
WeightsMatrix expand(const WeightsMatrix& w, std::span<const std::size_t> index_map,
                     std::vector<std::string> new_ids = {});

/// Symmetric factorization row_std = S⁻¹ Q diag(λ) Qᵀ S with S = D^{1/2}
/// (islands get scale 1). Lets (I − ρW)⁻¹b be applied in O(n²) for any ρ.
struct Spectral {
  Eigen::MatrixXd q;
  Eigen::VectorXd lambda;
  Eigen::VectorXd scale;  // diagonal of S

  /// (I − ρW)⁻¹ b. Throws SingularSystem when 1 − ρλ vanishes.
  Eigen::VectorXd solve(double rho, const Eigen::VectorXd& b) const;
};
Spectral spectral(const WeightsMatrix& w);

nlohmann::json to_json(const WeightsMatrix& w);
/// Reads ids + neighbor lists; the spectrum is recomputed.
WeightsMatrix from_json(const nlohmann::json& doc);

}  // namespace nbhd::spatial
