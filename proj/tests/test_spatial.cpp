#include <doctest.h>

#include <cmath>
#include <map>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "nbhd/geometry.hpp"
#include "nbhd/simgen.hpp"
#include "nbhd/spatial.hpp"
#include "test_support.hpp"

using namespace nbhd;
using namespace nbhd::spatial;
using nbhd::testing::kind_of;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::map<std::string, geo::MultiPolygon> grid(int rows, int cols) {
  std::map<std::string, geo::MultiPolygon> s;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) s["r" + std::to_string(r) + "c" + std::to_string(c)] = geo::square(c, r);
  return s;
}

}  // namespace

TEST_SUITE("spatial") {
  TEST_CASE("queen neighbors on a grid") {
    const auto w = queen_weights(grid(3, 3));
    const auto d = w.degrees();
    std::map<std::string, int> deg;
    for (std::size_t i = 0; i < w.ids.size(); ++i) deg[w.ids[i]] = d[i];
    CHECK(deg["r1c1"] == 8);
    CHECK(deg["r0c0"] == 3);
    CHECK(deg["r0c1"] == 5);
    CHECK(w.islands.empty());
    CHECK(w.binary == w.binary.transpose());
    CHECK(w.binary.diagonal().isZero());
  }

  TEST_CASE("separated squares are islands") {
    std::map<std::string, geo::MultiPolygon> s{{"a", geo::square(0, 0)}, {"b", geo::square(2, 0)}};
    const auto w = queen_weights(s);
    CHECK(w.islands.size() == 2);
    CHECK(w.row_std.isZero());
    const VectorXd lag = spatial_lag(w, VectorXd::Constant(2, 3.0));
    CHECK(lag.isZero());
  }

  TEST_CASE("corner contact counts, near miss does not") {
    std::map<std::string, geo::MultiPolygon> s{{"a", geo::square(0, 0)}, {"b", geo::square(1, 1)},
                                               {"c", geo::square(2.5, 2.5)}};
    const auto w = queen_weights(s);
    CHECK(w.degrees() == std::vector<int>{1, 1, 0});
    std::map<std::string, geo::MultiPolygon> sliver{{"a", geo::square(0, 0)}, {"b", geo::square(1.0 + 1e-12, 0)}};
    CHECK(queen_weights(sliver).islands.empty());
  }

  TEST_CASE("invalid polygon is named") {
    std::map<std::string, geo::MultiPolygon> s{{"ok", geo::square(0, 0)},
                                               {"bad", {{geo::Polygon{{{0, 0}, {1, 1}, {1, 0}, {0, 1}}, {}}}}}};
    CHECK(kind_of([&] { queen_weights(s); }) == ErrorKind::InvalidGeometry);
  }

  TEST_CASE("spatial lag") {
    const auto w = queen_weights(grid(4, 5));
    const VectorXd lag = spatial_lag(w, VectorXd::Constant(20, 2.5));
    for (Eigen::Index i = 0; i < lag.size(); ++i) CHECK(lag(i) == doctest::Approx(2.5));
    MatrixXd b(2, 2);
    b << 0, 1, 1, 0;
    const auto two = from_binary({"x", "y"}, b);
    VectorXd y(2);
    y << 1, 3;
    CHECK(spatial_lag(two, y) == VectorXd((VectorXd(2) << 3, 1).finished()));
    CHECK(kind_of([&] { spatial_lag(two, VectorXd::Zero(3)); }) == ErrorKind::DimensionMismatch);
  }

  TEST_CASE("row sums and spectrum") {
    const auto w = queen_weights(grid(5, 6));
    for (Eigen::Index i = 0; i < w.row_std.rows(); ++i) CHECK(w.row_std.row(i).sum() == 1.0);
    CHECK(std::abs(w.lambda_max - 1.0) < 1e-8);
    CHECK(w.lambda_min < 0.0);
    const Eigen::VectorXcd ev = Eigen::EigenSolver<MatrixXd>(w.row_std).eigenvalues();
    double radius = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) radius = std::max(radius, std::abs(ev(i)));
    CHECK(std::abs(radius - 1.0) < 1e-8);
  }

  TEST_CASE("relabeling permutes W consistently") {
    auto s = grid(3, 4);
    const auto w = queen_weights(s);
    std::map<std::string, geo::MultiPolygon> renamed;
    std::map<std::string, std::string> alias;
    int k = 99;
    for (const auto& [id, g] : s) {
      alias[id] = "id" + std::to_string(k--);
      renamed[alias[id]] = g;
    }
    const auto w2 = queen_weights(renamed);
    auto pos = [](const WeightsMatrix& m, const std::string& id) {
      return std::find(m.ids.begin(), m.ids.end(), id) - m.ids.begin();
    };
    for (const auto& a : w.ids)
      for (const auto& b : w.ids)
        CHECK(w.row_std(pos(w, a), pos(w, b)) == w2.row_std(pos(w2, alias[a]), pos(w2, alias[b])));
  }

  TEST_CASE("spectral solve matches dense inverse") {
    const auto w = queen_weights(grid(4, 4));
    const auto sp = spectral(w);
    VectorXd b = VectorXd::LinSpaced(16, -1.0, 2.0);
    for (double rho : {-0.8, 0.0, 0.45, 0.9}) {
      const MatrixXd a = MatrixXd::Identity(16, 16) - rho * w.row_std;
      const VectorXd direct = a.fullPivLu().solve(b);
      CHECK((sp.solve(rho, b) - direct).cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK(kind_of([&] { sp.solve(1.0, b); }) == ErrorKind::SingularSystem);
  }

  TEST_CASE("restrict, expand and json") {
    const auto w = queen_weights(grid(3, 3));
    const auto r = restrict_to(w, {"r0c0", "r0c1", "r1c1"});
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(r.row_std.row(i).sum() == doctest::Approx(1.0));
    CHECK(kind_of([&] { restrict_to(w, {"nope"}); }) == ErrorKind::DimensionMismatch);

    std::vector<std::size_t> map{0, 0, 4};
    const auto e = expand(w, map);
    CHECK(e.binary(0, 1) == 0.0);  // copies of one unit
    CHECK(e.binary(0, 2) == w.binary(0, 4));

    const auto back = from_json(to_json(w));
    CHECK(back.ids == w.ids);
    CHECK(back.binary == w.binary);
    CHECK((back.eigenvalues - w.eigenvalues).cwiseAbs().maxCoeff() < 1e-12);
  }
}
