#include "nbhd/spatial.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbhd/error.hpp"
#include "nbhd/util.hpp"

namespace nbhd::spatial {

std::vector<int> WeightsMatrix::degrees() const {
  std::vector<int> d(size());
  for (std::size_t i = 0; i < size(); ++i) d[i] = static_cast<int>(binary.row(static_cast<Eigen::Index>(i)).sum());
  return d;
}

std::vector<std::vector<std::size_t>> WeightsMatrix::neighbors() const {
  std::vector<std::vector<std::size_t>> out(size());
  for (Eigen::Index i = 0; i < binary.rows(); ++i)
    for (Eigen::Index j = 0; j < binary.cols(); ++j)
      if (binary(i, j) != 0.0) out[static_cast<std::size_t>(i)].push_back(static_cast<std::size_t>(j));
  return out;
}

namespace {

Eigen::VectorXd inv_sqrt_degrees(const Eigen::MatrixXd& binary) {
  Eigen::VectorXd s(binary.rows());
  for (Eigen::Index i = 0; i < binary.rows(); ++i) {
    const double d = binary.row(i).sum();
    s(i) = d > 0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  return s;
}

}  // namespace

WeightsMatrix from_binary(std::vector<std::string> ids, Eigen::MatrixXd binary) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (binary.rows() != n || binary.cols() != n)
    throw Error(ErrorKind::DimensionMismatch, "adjacency is " + std::to_string(binary.rows()) + "x" +
                                                  std::to_string(binary.cols()) + " for " + std::to_string(n) + " ids");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (binary(i, i) != 0.0) throw Error(ErrorKind::InvalidGeometry, ids[static_cast<std::size_t>(i)] + ": self-neighbor");
    for (Eigen::Index j = 0; j < n; ++j) {
      const double b = binary(i, j);
      if ((b != 0.0 && b != 1.0) || b != binary(j, i))
        throw Error(ErrorKind::InvalidGeometry, "adjacency must be symmetric 0/1");
    }
  }
  WeightsMatrix w;
  w.ids = std::move(ids);
  w.binary = std::move(binary);
  w.row_std = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = w.binary.row(i).sum();
    if (d == 0.0) {
      w.islands.insert(w.ids[static_cast<std::size_t>(i)]);
      continue;
    }
    w.row_std.row(i) = w.binary.row(i) / d;
  }
  if (n > 0) {
    const Eigen::VectorXd s = inv_sqrt_degrees(w.binary);
    const Eigen::MatrixXd m = s.asDiagonal() * w.binary * s.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    w.eigenvalues = es.eigenvalues();
    w.lambda_min = w.eigenvalues(0);
    w.lambda_max = w.eigenvalues(n - 1);
  }
  return w;
}

WeightsMatrix queen_weights(const std::map<std::string, geo::MultiPolygon>& shapes, double tol) {
  std::vector<std::string> ids;
  std::vector<const geo::MultiPolygon*> geoms;
  std::vector<geo::BBox> boxes;
  for (const auto& [id, g] : shapes) {
    if (auto why = geo::validate(g); !why.empty()) throw Error(ErrorKind::InvalidGeometry, id + ": " + why);
    ids.push_back(id);
    geoms.push_back(&g);
    boxes.push_back(geo::bbox(g));
  }
  const std::size_t n = ids.size();
  // Sweep over x: sorted by min_x, stop once boxes can no longer overlap.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return boxes[a].min_x < boxes[b].min_x; });
  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto i = order[a], j = order[b];
      if (boxes[j].min_x > boxes[i].max_x + tol) break;
      if (boxes[i].overlaps(boxes[j], tol)) candidates.emplace_back(std::min(i, j), std::max(i, j));
    }
  std::vector<char> touch(candidates.size(), 0);
  parallel_for(candidates.size(), [&](std::size_t k) {
    touch[k] = geo::boundaries_touch(*geoms[candidates[k].first], *geoms[candidates[k].second], tol) ? 1 : 0;
  });
  Eigen::MatrixXd binary = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < candidates.size(); ++k)
    if (touch[k]) {
      const auto i = static_cast<Eigen::Index>(candidates[k].first);
      const auto j = static_cast<Eigen::Index>(candidates[k].second);
      binary(i, j) = binary(j, i) = 1.0;
    }
  auto w = from_binary(std::move(ids), std::move(binary));
  if (!w.islands.empty())
    spdlog::warn("{} island(s) without queen neighbors kept with zero weight rows", w.islands.size());
  return w;
}

Eigen::VectorXd spatial_lag(const WeightsMatrix& w, const Eigen::VectorXd& y) {
  if (static_cast<std::size_t>(y.size()) != w.size())
    throw Error(ErrorKind::DimensionMismatch,
                "vector of length " + std::to_string(y.size()) + " for " + std::to_string(w.size()) + " units");
  return w.row_std * y;
}

WeightsMatrix restrict_to(const WeightsMatrix& w, const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < w.ids.size(); ++i) pos[w.ids[i]] = i;
  std::vector<std::size_t> map;
  map.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = pos.find(id);
    if (it == pos.end()) throw Error(ErrorKind::DimensionMismatch, "weights have no unit '" + id + "'");
    map.push_back(it->second);
  }
  return expand(w, map, ids);
}

WeightsMatrix expand(const WeightsMatrix& w, std::span<const std::size_t> index_map, std::vector<std::string> new_ids) {
  const auto n = static_cast<Eigen::Index>(index_map.size());
  Eigen::MatrixXd b(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index c = 0; c < n; ++c)
      b(a, c) = w.binary(static_cast<Eigen::Index>(index_map[static_cast<std::size_t>(a)]),
                         static_cast<Eigen::Index>(index_map[static_cast<std::size_t>(c)]));
  if (new_ids.empty()) {
    new_ids.reserve(index_map.size());
    for (std::size_t a = 0; a < index_map.size(); ++a) new_ids.push_back(w.ids[index_map[a]] + "#" + std::to_string(a));
  }
  return from_binary(std::move(new_ids), std::move(b));
}

Spectral spectral(const WeightsMatrix& w) {
  const Eigen::VectorXd s = inv_sqrt_degrees(w.binary);
  const Eigen::MatrixXd m = s.asDiagonal() * w.binary * s.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Spectral sp;
  sp.q = es.eigenvectors();
  sp.lambda = es.eigenvalues();
  sp.scale.resize(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) sp.scale(i) = s(i) > 0 ? 1.0 / s(i) : 1.0;
  return sp;
}

Eigen::VectorXd Spectral::solve(double rho, const Eigen::VectorXd& b) const {
  Eigen::VectorXd d(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double t = 1.0 - rho * lambda(i);
    if (std::abs(t) < 1e-12) throw Error(ErrorKind::SingularSystem, "I - rho*W is singular at rho=" + format_exact(rho));
    d(i) = 1.0 / t;
  }
  const Eigen::VectorXd sb = scale.cwiseProduct(b);
  const Eigen::VectorXd t = q * d.cwiseProduct(q.transpose() * sb);
  return t.cwiseQuotient(scale);
}

nlohmann::json to_json(const WeightsMatrix& w) {
  nlohmann::json j;
  j["ids"] = w.ids;
  nlohmann::json nb = nlohmann::json::array();
  for (const auto& list : w.neighbors()) {
    nlohmann::json row = nlohmann::json::array();
    for (auto k : list) row.push_back(w.ids[k]);
    nb.push_back(row);
  }
  j["neighbors"] = nb;
  j["islands"] = std::vector<std::string>(w.islands.begin(), w.islands.end());
  j["contiguity"] = "queen";
  j["row_standardized"] = true;
  j["assumptions"] = {"row standardization assumed for the lag operator; islands keep zero rows"};
  j["lambda_min"] = w.lambda_min;
  j["lambda_max"] = w.lambda_max;
  return j;
}

WeightsMatrix from_json(const nlohmann::json& doc) {
  try {
    const auto ids = doc.at("ids").get<std::vector<std::string>>();
    const auto& nb = doc.at("neighbors");
    if (!nb.is_array() || nb.size() != ids.size())
      throw Error(ErrorKind::DimensionMismatch, "weights.json: neighbors must parallel ids");
    std::map<std::string, Eigen::Index> pos;
    for (std::size_t i = 0; i < ids.size(); ++i) pos[ids[i]] = static_cast<Eigen::Index>(i);
    const auto n = static_cast<Eigen::Index>(ids.size());
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (const auto& other : nb[i]) {
        auto it = pos.find(other.get<std::string>());
        if (it == pos.end()) throw Error(ErrorKind::DimensionMismatch, "weights.json: unknown neighbor " + other.dump());
        b(static_cast<Eigen::Index>(i), it->second) = 1.0;
      }
    return from_binary(ids, std::move(b));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, std::string("weights.json: ") + e.what());
  }
}

}  // namespace nbhd::spatial
