#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "nbhd/csv.hpp"
#include "nbhd/error.hpp"
#include "nbhd/util.hpp"

using namespace nbhd;

TEST_SUITE("util") {
  TEST_CASE("sig6 formatting") {
    CHECK(format_sig6(0.1234567) == "0.123457");
    CHECK(format_sig6(2.0) == "2");
    CHECK(format_sig6(-0.0) == "0");
  }

  TEST_CASE("exact formatting round-trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23, 0.58}) CHECK(parse_double(format_exact(v)) == v);
  }

  TEST_CASE("rng streams are reproducible") {
    Rng a(7), b(7), c(8);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
      const double x = a.normal();
      CHECK(x == b.normal());
      differs = differs || x != c.normal();
    }
    CHECK(differs);
    Rng u(3);
    for (int i = 0; i < 1000; ++i) {
      const double x = u.uniform();
      CHECK(x >= 0.0);
      CHECK(x < 1.0);
      CHECK(u.below(5) < 5);
    }
  }

  TEST_CASE("hash_combine separates streams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t b = 0; b < 1000; ++b) seen.insert(hash_combine(42, b));
    CHECK(seen.size() == 1000);
    CHECK(fnv1a64("simulate") != fnv1a64("mock"));
  }

  TEST_CASE("sha256 of a known string") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("type-7 quantiles") {
    CHECK(quantile_type7({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
    CHECK(quantile_type7({5, 1, 3}, 0.0) == 1.0);
    CHECK(quantile_type7({5, 1, 3}, 1.0) == 5.0);
    CHECK(quantile_type7({0, 10}, 0.025) == doctest::Approx(0.25));
  }

  TEST_CASE("parallel_for fills every slot") {
    set_worker_count(4);
    std::vector<int> out(257, 0);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i) * 2);
    set_worker_count(0);
  }

  TEST_CASE("csv quoting round trip") {
    csv::Writer w({"a", "b"});
    w.add_row({"x,y", "say \"hi\""});
    w.add_row({"", "multi\nline"});
    const auto t = csv::Table::parse(w.str());
    REQUIRE(t.rows().size() == 2);
    CHECK(t.cell(t.rows()[0], "a") == "x,y");
    CHECK(t.cell(t.rows()[0], "b") == "say \"hi\"");
    CHECK(t.cell(t.rows()[1], "b") == "multi\nline");
    CHECK_THROWS_AS(t.column("zzz"), Error);
  }

  TEST_CASE("split and trim") {
    CHECK(split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
    CHECK(trim("  x y \t") == "x y");
  }
}
