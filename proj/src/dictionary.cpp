#include "cpdrad/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

namespace cpdrad {

namespace {

double laplace_scale(const Atom& a) { return a.spread / std::numbers::sqrt2; }

void check_atom(const Atom& a) {
  if (!std::isfinite(a.location)) throw std::invalid_argument("atom location must be finite");
  if (a.kind == AtomKind::PointMass) {
    if (a.spread != 0.0) throw std::invalid_argument("point mass atom must have zero spread");
  } else if (!(a.spread > 0.0) || !std::isfinite(a.spread)) {
    throw std::invalid_argument("gaussian/laplacian atom needs a positive finite spread");
  }
}

}  // namespace

Atom Atom::gaussian(double mean, double stddev) {
  Atom a{AtomKind::Gaussian, mean, stddev};
  check_atom(a);
  return a;
}

Atom Atom::laplacian(double mean, double stddev) {
  Atom a{AtomKind::Laplacian, mean, stddev};
  check_atom(a);
  return a;
}

Atom Atom::point_mass(double value) {
  Atom a{AtomKind::PointMass, value, 0.0};
  check_atom(a);
  return a;
}

double atom_pdf(const Atom& a, double x) {
  switch (a.kind) {
    case AtomKind::Gaussian: {
      const double z = (x - a.location) / a.spread;
      return std::exp(-0.5 * z * z) / (a.spread * std::sqrt(2.0 * std::numbers::pi));
    }
    case AtomKind::Laplacian: {
      const double b = laplace_scale(a);
      return std::exp(-std::abs(x - a.location) / b) / (2.0 * b);
    }
    case AtomKind::PointMass:
      return x == a.location ? 1.0 : 0.0;
  }
  return 0.0;
}

double atom_cdf(const Atom& a, double x) {
  switch (a.kind) {
    case AtomKind::Gaussian:
      return 0.5 * std::erfc(-(x - a.location) / (a.spread * std::numbers::sqrt2));
    case AtomKind::Laplacian: {
      const double b = laplace_scale(a);
      if (x < a.location) return 0.5 * std::exp((x - a.location) / b);
      return 1.0 - 0.5 * std::exp(-(x - a.location) / b);
    }
    case AtomKind::PointMass:
      return x >= a.location ? 1.0 : 0.0;
  }
  return 0.0;
}

double atom_sample(const Atom& a, Rng& rng) {
  switch (a.kind) {
    case AtomKind::Gaussian: {
      std::normal_distribution<double> nd(a.location, a.spread);
      return nd(rng);
    }
    case AtomKind::Laplacian: {
      // Inverse CDF; u in (-0.5, 0.5).
      const double u = uniform01(rng) - 0.5;
      const double mag = -std::log1p(-2.0 * std::abs(u));
      return a.location + (u < 0.0 ? -mag : mag) * laplace_scale(a);
    }
    case AtomKind::PointMass:
      return a.location;
  }
  return a.location;
}

double atom_mean(const Atom& a) { return a.location; }

Dictionary::Dictionary(std::vector<Atom> atoms, FeatureKind kind)
    : atoms_(std::move(atoms)), kind_(kind) {
  if (atoms_.empty()) throw std::invalid_argument("dictionary must contain at least one atom");
  for (const Atom& a : atoms_) {
    check_atom(a);
    const bool point = a.kind == AtomKind::PointMass;
    if (kind_ == FeatureKind::Discrete && !point)
      throw std::invalid_argument("discrete dictionary may only contain point masses");
    if (kind_ == FeatureKind::Continuous && point)
      throw std::invalid_argument("continuous dictionary may not contain point masses");
  }
}

Eigen::MatrixXd discretize_dictionary(const Dictionary& d, std::span<const double> bin_edges) {
  if (bin_edges.size() < 2) throw std::invalid_argument("need at least two bin edges");
  for (std::size_t i = 1; i < bin_edges.size(); ++i)
    if (!(bin_edges[i] > bin_edges[i - 1]))
      throw std::invalid_argument("bin edges must be strictly increasing");

  const auto bins = static_cast<Eigen::Index>(bin_edges.size() - 1);
  Eigen::MatrixXd D(bins, d.size());
  for (Eigen::Index l = 0; l < d.size(); ++l) {
    const Atom& a = d[l];
    if (a.kind == AtomKind::PointMass) {
      // Half-open bins [e_i, e_{i+1}), matching the histogram convention.
      D.col(l).setZero();
      for (Eigen::Index i = 0; i < bins; ++i)
        if (a.location >= bin_edges[i] && a.location < bin_edges[i + 1]) D(i, l) = 1.0;
      continue;
    }
    double lo = atom_cdf(a, bin_edges[0]);
    for (Eigen::Index i = 0; i < bins; ++i) {
      const double hi = atom_cdf(a, bin_edges[i + 1]);
      D(i, l) = std::max(0.0, hi - lo);
      lo = hi;
    }
  }
  return D;
}

Dictionary dictionary_propose(std::span<const double> samples, int L, FeatureKind kind,
                              double spread_floor) {
  if (samples.empty()) throw std::invalid_argument("dictionary_propose: no samples");
  if (L < 1) throw std::invalid_argument("dictionary_propose: L must be >= 1");

  std::vector<Atom> atoms;
  if (kind == FeatureKind::Discrete) {
    std::map<double, std::size_t> counts;
    for (double v : samples) ++counts[v];
    if (counts.size() < static_cast<std::size_t>(L))
      throw std::invalid_argument("dictionary_propose: discrete feature has " +
                                  std::to_string(counts.size()) + " distinct values, need " +
                                  std::to_string(L));
    std::vector<std::pair<double, std::size_t>> ranked(counts.begin(), counts.end());
    // Most frequent first; ties keep the smaller value.
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    ranked.resize(L);
    std::sort(ranked.begin(), ranked.end());
    for (const auto& [v, c] : ranked) atoms.push_back(Atom::point_mass(v));
    return Dictionary(std::move(atoms), kind);
  }

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double std_dev = sorted.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const double spread = std::max(std_dev / L, spread_floor);

  auto quantile = [&](double p) {
    const double pos = p * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double t = pos - static_cast<double>(lo);
    return sorted[lo] + t * (sorted[hi] - sorted[lo]);
  };
  for (int i = 1; i <= L; ++i) atoms.push_back(Atom::gaussian(quantile((i - 0.5) / L), spread));
  return Dictionary(std::move(atoms), kind);
}

std::string to_string(AtomKind kind) {
  switch (kind) {
    case AtomKind::Gaussian: return "gaussian";
    case AtomKind::Laplacian: return "laplacian";
    case AtomKind::PointMass: return "point_mass";
  }
  return "unknown";
}

std::string to_string(FeatureKind kind) {
  return kind == FeatureKind::Continuous ? "continuous" : "discrete";
}

AtomKind atom_kind_from_string(const std::string& s) {
  if (s == "gaussian") return AtomKind::Gaussian;
  if (s == "laplacian") return AtomKind::Laplacian;
  if (s == "point_mass") return AtomKind::PointMass;
  throw std::invalid_argument("unknown atom kind '" + s + "'");
}

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "continuous") return FeatureKind::Continuous;
  if (s == "discrete") return FeatureKind::Discrete;
  throw std::invalid_argument("unknown feature kind '" + s + "'");
}

void to_json(nlohmann::json& j, const Atom& a) {
  j = {{"kind", to_string(a.kind)}, {"location", a.location}, {"spread", a.spread}};
}

void from_json(const nlohmann::json& j, Atom& a) {
  a.kind = atom_kind_from_string(j.at("kind").get<std::string>());
  a.location = j.at("location").get<double>();
  a.spread = a.kind == AtomKind::PointMass ? j.value("spread", 0.0) : j.at("spread").get<double>();
  check_atom(a);
}

void to_json(nlohmann::json& j, const Dictionary& d) {
  j = {{"feature_kind", to_string(d.kind())}, {"atoms", d.atoms()}};
}

void from_json(const nlohmann::json& j, Dictionary& d) {
  d = Dictionary(j.at("atoms").get<std::vector<Atom>>(),
                 feature_kind_from_string(j.at("feature_kind").get<std::string>()));
}

}  // namespace cpdrad
