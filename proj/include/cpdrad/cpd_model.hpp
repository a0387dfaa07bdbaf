#pragma once

#include <vector>

#include <Eigen/Dense>

#include "cpdrad/dictionary.hpp"
#include "cpdrad/random.hpp"
#include "json.hpp"

namespace cpdrad {

/// Mixture of F product densities. The conditional density of feature n in
/// component r is the convex combination dictionaries[n] * weights[n].col(r).
///
/// Densities are taken with respect to Lebesgue measure on continuous
/// features and counting measure on discrete ones, so point-mass atoms
/// contribute probability masses.
class CpdModel {
 public:
  CpdModel() = default;

  /// Validates the simplex constraints on every weight column and on the
  /// mixture. Deviations up to 1e-9 are kept as-is, up to 1e-6 are clipped
  /// and renormalized, anything larger is rejected.
  CpdModel(std::vector<Dictionary> dictionaries, std::vector<Eigen::MatrixXd> weights,
           Eigen::VectorXd mixture);

  [[nodiscard]] Eigen::Index num_features() const {
    return static_cast<Eigen::Index>(dictionaries_.size());
  }
  [[nodiscard]] Eigen::Index rank() const { return mixture_.size(); }
  [[nodiscard]] const std::vector<Dictionary>& dictionaries() const { return dictionaries_; }
  [[nodiscard]] const Dictionary& dictionary(Eigen::Index n) const { return dictionaries_[n]; }
  [[nodiscard]] const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  [[nodiscard]] const Eigen::MatrixXd& weights(Eigen::Index n) const { return weights_[n]; }
  [[nodiscard]] const Eigen::VectorXd& mixture() const { return mixture_; }

  [[nodiscard]] double joint_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Row-wise joint_density of a K x N matrix.
  [[nodiscard]] Eigen::VectorXd joint_density_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const;

  /// Ancestral sampling: component, then atom per feature, then value.
  [[nodiscard]] Eigen::MatrixXd sample(Eigen::Index count, Rng& rng) const;

  /// B_j diag(lambda) B_k^T for j < k.
  [[nodiscard]] Eigen::MatrixXd pair_core(Eigen::Index j, Eigen::Index k) const;

  [[nodiscard]] double marginal_1d(Eigen::Index n, double x) const;

 private:
  std::vector<Dictionary> dictionaries_;
  std::vector<Eigen::MatrixXd> weights_;
  Eigen::VectorXd mixture_;
};

/// Returns the columns of `v` (or the entries, for a vector) forced onto
/// the simplex per the tolerance rule documented on CpdModel.
Eigen::VectorXd validate_simplex(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what);

/// Atom density values [pdf(atoms[l], x)]_l.
Eigen::VectorXd atom_values(const Dictionary& d, double x);

/// Greedy alignment of fitted components to reference components, pairing
/// the closest (total variation over all features' weight columns) first.
/// Returns perm with fitted component perm[r] matched to reference r.
std::vector<Eigen::Index> align_components(const CpdModel& fitted, const CpdModel& reference);

void to_json(nlohmann::json& j, const CpdModel& m);
void from_json(const nlohmann::json& j, CpdModel& m);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

}  // namespace cpdrad
