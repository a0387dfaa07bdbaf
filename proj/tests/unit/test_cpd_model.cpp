#include <cmath>
#include <numbers>
#include <vector>

#include "cpdrad/cpd_model.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cpdrad;

namespace {

Dictionary gauss_dict(std::vector<std::pair<double, double>> ms) {
  std::vector<Atom> atoms;
  for (auto [m, s] : ms) atoms.push_back(Atom::gaussian(m, s));
  return Dictionary(atoms, FeatureKind::Continuous);
}

CpdModel random_model(Eigen::Index N, Eigen::Index F, Eigen::Index L, Rng& rng) {
  std::vector<Dictionary> dicts;
  std::vector<Eigen::MatrixXd> B;
  for (Eigen::Index n = 0; n < N; ++n) {
    std::vector<std::pair<double, double>> ms;
    for (Eigen::Index l = 0; l < L; ++l) ms.push_back({2 * uniform01(rng) - 1, 0.1 + 0.2 * uniform01(rng)});
    dicts.push_back(gauss_dict(ms));
    Eigen::MatrixXd Bn(L, F);
    for (Eigen::Index r = 0; r < F; ++r) Bn.col(r) = dirichlet_uniform(L, rng);
    B.push_back(Bn);
  }
  return CpdModel(dicts, B, dirichlet_uniform(F, rng));
}

}  // namespace

TEST_CASE("joint_density examples") {
  const CpdModel one({gauss_dict({{0, 1}})}, {Eigen::MatrixXd::Ones(1, 1)}, Eigen::VectorXd::Ones(1));
  CHECK(one.joint_density(Eigen::VectorXd::Zero(1)) == doctest::Approx(0.398942).epsilon(1e-6));
  CHECK(one.marginal_1d(0, 0.3) == doctest::Approx(one.joint_density(Eigen::VectorXd::Constant(1, 0.3))));

  // Identical columns collapse to the rank-one model.
  const Dictionary d = gauss_dict({{-0.5, 0.2}, {0.4, 0.3}});
  Eigen::MatrixXd b1(2, 1), b2(2, 2);
  b1 << 0.3, 0.7;
  b2 << 0.3, 0.3, 0.7, 0.7;
  const CpdModel r1({d, d}, {b1, b1}, Eigen::VectorXd::Ones(1));
  const CpdModel r2({d, d}, {b2, b2}, Eigen::VectorXd::Constant(2, 0.5));
  for (double x : {-1.0, 0.0, 0.37, 2.0}) {
    const Eigen::Vector2d p(x, 0.5 * x - 0.1);
    CHECK(r2.joint_density(p) == doctest::Approx(r1.joint_density(p)).epsilon(1e-14));
  }

  // Brute-force contraction of the full tensor on the probe points.
  Rng rng(5);
  const CpdModel m = random_model(2, 2, 2, rng);
  for (int t = 0; t < 5; ++t) {
    const Eigen::Vector2d x(2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1);
    double oracle = 0;
    for (int r = 0; r < 2; ++r)
      for (int l0 = 0; l0 < 2; ++l0)
        for (int l1 = 0; l1 < 2; ++l1)
          oracle += m.mixture()(r) * m.weights(0)(l0, r) * m.weights(1)(l1, r) *
                    atom_pdf(m.dictionary(0)[l0], x(0)) * atom_pdf(m.dictionary(1)[l1], x(1));
    CHECK(std::abs(m.joint_density(x) - oracle) < 1e-10);
    CHECK(m.joint_density_batch(x.transpose())(0) == doctest::Approx(m.joint_density(x)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(m.joint_density(Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("construction tolerances") {
  const Dictionary d = gauss_dict({{0, 1}, {1, 1}});
  Eigen::MatrixXd B(2, 1);
  B << 0.5, 0.5 + 5e-7;
  const CpdModel ok({d}, {B}, Eigen::VectorXd::Ones(1));
  CHECK(ok.weights(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
  B << 0.5, 0.6;
  CHECK_THROWS_AS(CpdModel({d}, {B}, Eigen::VectorXd::Ones(1)), std::invalid_argument);
}

TEST_CASE("sampling") {
  Rng rng(17);
  const Dictionary pm({Atom::point_mass(0), Atom::point_mass(1)}, FeatureKind::Discrete);
  Eigen::MatrixXd onehot(2, 1);
  onehot << 0, 1;
  const CpdModel det({pm, pm}, {onehot, onehot}, Eigen::VectorXd::Ones(1));
  const Eigen::MatrixXd X = det.sample(100, rng);
  CHECK((X.array() == 1.0).all());

  Eigen::MatrixXd B(2, 2);
  B << 1, 0, 0, 1;
  const CpdModel coin({pm}, {B}, Eigen::Vector2d(0.3, 0.7));
  const Eigen::MatrixXd C = coin.sample(100000, rng);
  CHECK(std::abs(C.mean() - 0.7) < 0.01);

  // Per-feature means against the exact first moment.
  const CpdModel m = random_model(4, 3, 5, rng);
  const Eigen::Index K = 100000;
  const Eigen::MatrixXd S = m.sample(K, rng);
  for (Eigen::Index n = 0; n < 4; ++n) {
    Eigen::VectorXd mu(5);
    for (int l = 0; l < 5; ++l) mu(l) = atom_mean(m.dictionary(n)[l]);
    const double exact = mu.dot(m.weights(n) * m.mixture());
    const double mean = S.col(n).mean();
    const double sd = std::sqrt((S.col(n).array() - mean).square().sum() / (K - 1));
    CHECK(std::abs(mean - exact) < 5 * sd / std::sqrt(double(K)));
  }

  // Histogram of a feature against the exact marginal.
  const int bins = 40;
  const double lo = -2, hi = 2, w = (hi - lo) / bins;
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(bins);
  for (Eigen::Index i = 0; i < K; ++i) {
    const int b = static_cast<int>((S(i, 0) - lo) / w);
    if (b >= 0 && b < bins) hist(b) += 1.0 / K;
  }
  double l1 = 0;
  for (int b = 0; b < bins; ++b)
    l1 += std::abs(hist(b) - testutil::simpson([&](double x) { return m.marginal_1d(0, x); },
                                               lo + b * w, lo + (b + 1) * w, 200));
  CHECK(l1 < 3 * std::sqrt(double(bins) / K));
}

TEST_CASE("pair_core and marginals") {
  Rng rng(23);
  const CpdModel m = random_model(3, 4, 3, rng);
  const Eigen::MatrixXd G = m.pair_core(0, 2);
  CHECK(G.minCoeff() >= 0);
  CHECK(std::abs(G.sum() - 1) < 1e-9);
  const Eigen::VectorXd marg = m.weights(0) * m.mixture();
  CHECK((G.rowwise().sum() - marg).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(m.pair_core(2, 1), std::invalid_argument);
  CHECK_THROWS_AS(m.pair_core(0, 3), std::invalid_argument);
  CHECK_THROWS_AS(m.marginal_1d(3, 0.0), std::invalid_argument);

  // Rank one with a one-hot mixture.
  Eigen::Vector4d onehot(0, 0, 1, 0);
  const CpdModel m1(m.dictionaries(), m.weights(), onehot);
  const Eigen::MatrixXd G1 = m1.pair_core(0, 1);
  CHECK((G1 - m.weights(0).col(2) * m.weights(1).col(2).transpose()).cwiseAbs().maxCoeff() < 1e-15);

  for (Eigen::Index n = 0; n < 3; ++n) {
    const double mass = testutil::simpson([&](double x) { return m.marginal_1d(n, x); }, -5, 5, 40000);
    CHECK(std::abs(mass - 1) < 1e-6);
  }
}

TEST_CASE("joint density normalizes and mixed models sum over support") {
  Rng rng(29);
  const CpdModel m = random_model(2, 2, 2, rng);
  const double mass = testutil::simpson(
      [&](double x) {
        return testutil::simpson([&](double y) { return m.joint_density(Eigen::Vector2d(x, y)); }, -5, 5, 800);
      },
      -5, 5, 800);
  CHECK(std::abs(mass - 1) < 1e-4);

  const Dictionary pm({Atom::point_mass(-0.5), Atom::point_mass(0.5)}, FeatureKind::Discrete);
  Eigen::MatrixXd B(2, 2);
  B << 0.2, 0.9, 0.8, 0.1;
  const CpdModel mixed({m.dictionary(0), pm}, {m.weights(0), B}, m.mixture());
  CHECK(mixed.marginal_1d(1, -0.5) + mixed.marginal_1d(1, 0.5) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(mixed.marginal_1d(1, 0.0) == 0.0);
}

TEST_CASE("component permutation invariance and alignment") {
  Rng rng(31);
  const CpdModel m = random_model(3, 3, 4, rng);
  const std::vector<Eigen::Index> perm = {2, 0, 1};
  std::vector<Eigen::MatrixXd> Bp;
  for (const auto& B : m.weights()) {
    Eigen::MatrixXd P(B.rows(), B.cols());
    for (int r = 0; r < 3; ++r) P.col(r) = B.col(perm[r]);
    Bp.push_back(P);
  }
  Eigen::Vector3d lp;
  for (int r = 0; r < 3; ++r) lp(r) = m.mixture()(perm[r]);
  const CpdModel mp(m.dictionaries(), Bp, lp);
  const Eigen::MatrixXd X = m.sample(50, rng);
  // Sums are over the same terms in a different order, so compare tightly.
  CHECK((mp.joint_density_batch(X) - m.joint_density_batch(X)).cwiseAbs().maxCoeff() <=
        1e-12 * m.joint_density_batch(X).maxCoeff());
  const auto align = align_components(mp, m);
  for (int r = 0; r < 3; ++r) CHECK(perm[align[r]] == r);
}

TEST_CASE("JSON round trip") {
  Rng rng(37);
  const CpdModel m = random_model(2, 3, 2, rng);
  const nlohmann::json j = m;
  CHECK(j.at("type") == "cpd");
  const CpdModel back = nlohmann::json::parse(j.dump()).get<CpdModel>();
  for (int n = 0; n < 2; ++n) CHECK(back.weights(n) == m.weights(n));
  CHECK(back.mixture() == m.mixture());
  CHECK(back.dictionaries() == m.dictionaries());
}
