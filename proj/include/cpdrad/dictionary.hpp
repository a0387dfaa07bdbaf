#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpdrad/random.hpp"
#include "json.hpp"

namespace cpdrad {

enum class AtomKind { Gaussian, Laplacian, PointMass };
enum class FeatureKind { Continuous, Discrete };

/// A 1-D density primitive. Laplacian atoms are parameterized by their
/// standard deviation; the scale is spread / sqrt(2).
struct Atom {
  AtomKind kind = AtomKind::Gaussian;
  double location = 0.0;
  double spread = 1.0;

  static Atom gaussian(double mean, double stddev);
  static Atom laplacian(double mean, double stddev);
  static Atom point_mass(double value);

  friend bool operator==(const Atom&, const Atom&) = default;
};

/// Density at x. For point masses this is a probability mass (1 exactly at
/// the location, 0 elsewhere).
double atom_pdf(const Atom& a, double x);
double atom_cdf(const Atom& a, double x);
double atom_sample(const Atom& a, Rng& rng);
double atom_mean(const Atom& a);

/// Ordered atom list for one feature. Continuous dictionaries hold no point
/// masses; discrete dictionaries hold only point masses.
class Dictionary {
 public:
  Dictionary() = default;
  Dictionary(std::vector<Atom> atoms, FeatureKind kind);

  [[nodiscard]] const std::vector<Atom>& atoms() const { return atoms_; }
  [[nodiscard]] const Atom& operator[](std::size_t l) const { return atoms_[l]; }
  [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(atoms_.size()); }
  [[nodiscard]] FeatureKind kind() const { return kind_; }

  friend bool operator==(const Dictionary&, const Dictionary&) = default;

 private:
  std::vector<Atom> atoms_;
  FeatureKind kind_ = FeatureKind::Continuous;
};

/// D(i, l) = mass of atom l inside [edges[i], edges[i+1]).
Eigen::MatrixXd discretize_dictionary(const Dictionary& d, std::span<const double> bin_edges);

inline constexpr double kSpreadFloor = 1e-3;

/// Heuristic dictionary from a feature's 1-D training marginal. Continuous:
/// L Gaussians at the (i - 0.5)/L sample quantiles with spread
/// max(std / L, spread_floor). Discrete: point masses at the L most frequent
/// values, sorted ascending.
Dictionary dictionary_propose(std::span<const double> samples, int L, FeatureKind kind,
                              double spread_floor = kSpreadFloor);

std::string to_string(AtomKind kind);
std::string to_string(FeatureKind kind);
AtomKind atom_kind_from_string(const std::string& s);
FeatureKind feature_kind_from_string(const std::string& s);

void to_json(nlohmann::json& j, const Atom& a);
void from_json(const nlohmann::json& j, Atom& a);
void to_json(nlohmann::json& j, const Dictionary& d);
void from_json(const nlohmann::json& j, Dictionary& d);

}  // namespace cpdrad
