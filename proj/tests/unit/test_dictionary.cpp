#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "cpdrad/dictionary.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cpdrad;

TEST_CASE("atom_pdf examples") {
  CHECK(atom_pdf(Atom::gaussian(0, 1), 0) == doctest::Approx(1 / std::sqrt(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(atom_pdf(Atom::point_mass(0.5), 0.5) == 1.0);
  CHECK(atom_pdf(Atom::point_mass(0.5), 0.49) == 0.0);
  const double b = 0.1 / std::sqrt(2.0);
  CHECK(atom_pdf(Atom::laplacian(0, 0.1), 0) == doctest::Approx(1 / (2 * b)).epsilon(1e-14));
  // Variance oracle: integral of x^2 pdf equals sigma^2.
  const Atom lap = Atom::laplacian(0, 0.1);
  const double var = testutil::simpson([&](double x) { return x * x * atom_pdf(lap, x); }, -3, 3, 200000);
  CHECK(var == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("atom_cdf examples and quadrature agreement") {
  CHECK(atom_cdf(Atom::gaussian(0, 1), 0) == doctest::Approx(0.5));
  CHECK(atom_cdf(Atom::laplacian(0, 0.3), 0) == doctest::Approx(0.5));
  const Atom g = Atom::gaussian(0, 1);
  const double oracle = 0.5 + testutil::simpson([&](double x) { return atom_pdf(g, x); }, 0, 1);
  CHECK(atom_cdf(g, 1.0) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(atom_cdf(g, 1.0) == doctest::Approx(0.841345).epsilon(1e-6));

  const Atom pm = Atom::point_mass(0.25);
  CHECK(atom_cdf(pm, 0.2499) == 0.0);
  CHECK(atom_cdf(pm, 0.25) == 1.0);

  Rng rng(7);
  for (const Atom& a : {Atom::gaussian(0.2, 0.07), Atom::laplacian(-0.4, 0.15)}) {
    for (int t = 0; t < 20; ++t) {
      double x = a.location + (uniform01(rng) - 0.5) * 8 * a.spread;
      double y = a.location + (uniform01(rng) - 0.5) * 8 * a.spread;
      if (x > y) std::swap(x, y);
      const double q = testutil::simpson([&](double u) { return atom_pdf(a, u); }, x, y, 20000);
      CHECK(std::abs(atom_cdf(a, y) - atom_cdf(a, x) - q) < 1e-8);
    }
  }
}

TEST_CASE("continuous atoms integrate to one") {
  for (const Atom& a : {Atom::gaussian(0.3, 0.05), Atom::laplacian(-0.7, 0.2), Atom::gaussian(0, 1)}) {
    const double lo = a.location - 12 * a.spread, hi = a.location + 12 * a.spread;
    // Split at the Laplacian kink so Simpson stays accurate.
    const double mass = testutil::simpson([&](double x) { return atom_pdf(a, x); }, lo, a.location) +
                        testutil::simpson([&](double x) { return atom_pdf(a, x); }, a.location, hi);
    CHECK(std::abs(mass - 1.0) < 1e-6);
  }
}

TEST_CASE("atom_sample moments and KS") {
  Rng rng(11);
  CHECK(atom_sample(Atom::point_mass(-1.5), rng) == -1.5);

  const int S = 100000;
  std::vector<double> g(S), l(S);
  for (auto& x : g) x = atom_sample(Atom::gaussian(0.3, 0.1), rng);
  for (auto& x : l) x = atom_sample(Atom::laplacian(0, 0.2), rng);
  double mg = 0, ml = 0, vl = 0;
  for (double x : g) mg += x;
  mg /= S;
  for (double x : l) ml += x;
  ml /= S;
  for (double x : l) vl += (x - ml) * (x - ml);
  vl /= (S - 1);
  CHECK(std::abs(mg - 0.3) < 0.002);
  CHECK(std::abs(vl - 0.04) < 0.15 * 0.04);

  CHECK(testutil::ks_statistic(g, [](double x) { return atom_cdf(Atom::gaussian(0.3, 0.1), x); }) < 0.01);
  CHECK(testutil::ks_statistic(l, [](double x) { return atom_cdf(Atom::laplacian(0, 0.2), x); }) < 0.01);
}

TEST_CASE("discretize_dictionary examples") {
  const Dictionary pm({Atom::point_mass(0.5)}, FeatureKind::Discrete);
  const std::vector<double> e01 = {0, 1};
  CHECK(discretize_dictionary(pm, e01)(0, 0) == 1.0);

  const Dictionary g({Atom::gaussian(0, 1)}, FeatureKind::Continuous);
  const std::vector<double> wide = {-50, 0, 50};
  const Eigen::MatrixXd D = discretize_dictionary(g, wide);
  CHECK(D(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(D(1, 0) == doctest::Approx(0.5).epsilon(1e-15));

  std::vector<double> edges;
  for (int i = 0; i <= 20; ++i) edges.push_back(-1 + 0.1 * i);
  const Dictionary narrow({Atom::gaussian(0, 0.1), Atom::laplacian(0.3, 0.2)}, FeatureKind::Continuous);
  const Eigen::MatrixXd Dn = discretize_dictionary(narrow, edges);
  // Tail mass of N(0, 0.1^2) outside [-1, 1] is erfc(10 / sqrt 2) ~ 1.5e-23.
  CHECK(Dn.col(0).sum() >= 1 - 2e-23);
  CHECK(Dn.minCoeff() >= 0.0);
  CHECK(Dn.col(1).sum() <= 1 + 1e-12);

  const std::vector<double> bad = {0, 1, 1};
  CHECK_THROWS_AS(discretize_dictionary(g, bad), std::invalid_argument);
}

TEST_CASE("dictionary_propose examples") {
  Rng rng(3);
  std::vector<double> disc;
  const double support[] = {-1.5, -0.5, 0.5, 1.5};
  for (int i = 0; i < 1000; ++i) disc.push_back(support[static_cast<int>(uniform01(rng) * 4)]);
  const Dictionary d = dictionary_propose(disc, 4, FeatureKind::Discrete);
  REQUIRE(d.size() == 4);
  for (int l = 0; l < 4; ++l) {
    CHECK(d[l].kind == AtomKind::PointMass);
    CHECK(d[l].location == support[l]);
  }
  CHECK_THROWS_AS(dictionary_propose(disc, 5, FeatureKind::Discrete), std::invalid_argument);

  const std::vector<double> constant(50, 0.7);
  const Dictionary c = dictionary_propose(constant, 1, FeatureKind::Continuous);
  CHECK(c[0].location == 0.7);
  CHECK(c[0].spread == kSpreadFloor);

  std::vector<double> mix(100000);
  for (auto& x : mix) x = atom_sample(Atom::gaussian(uniform01(rng) < 0.5 ? -1 : 1, 0.05), rng);
  const Dictionary m = dictionary_propose(mix, 2, FeatureKind::Continuous);
  // Quantile oracle: the 0.25 quantile of the equal mixture is the median of the left component.
  CHECK(std::abs(m[0].location + 1) < 0.05);
  CHECK(std::abs(m[1].location - 1) < 0.05);

  CHECK_THROWS_AS(dictionary_propose(std::vector<double>{}, 1, FeatureKind::Continuous), std::invalid_argument);
}

TEST_CASE("dictionary invariants and JSON") {
  CHECK_THROWS_AS(Dictionary({Atom::point_mass(0)}, FeatureKind::Continuous), std::invalid_argument);
  CHECK_THROWS_AS(Dictionary({Atom::gaussian(0, 1)}, FeatureKind::Discrete), std::invalid_argument);
  CHECK_THROWS_AS(Dictionary({}, FeatureKind::Continuous), std::invalid_argument);
  CHECK_THROWS(Atom::gaussian(0, 0));

  const Dictionary d({Atom::gaussian(0.1, 0.08), Atom::laplacian(-0.2, 0.3)}, FeatureKind::Continuous);
  const nlohmann::json j = d;
  CHECK(j.at("feature_kind") == "continuous");
  CHECK(j.at("atoms").at(0).at("kind") == "gaussian");
  CHECK(j.get<Dictionary>() == d);
}
