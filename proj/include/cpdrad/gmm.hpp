#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpdrad/random.hpp"
#include "json.hpp"

namespace cpdrad {

enum class CovarianceKind { Diagonal, Full };

std::string to_string(CovarianceKind kind);
CovarianceKind covariance_kind_from_string(const std::string& s);

/// Gaussian mixture with diagonal or full covariances. Full covariances are
/// held with their Cholesky factors.
class GmmModel {
 public:
  GmmModel() = default;
  /// `diag_variances` is C x N (diagonal kind); `full_covariances` holds C
  /// N x N SPD matrices (full kind). The unused argument must be empty.
  GmmModel(Eigen::VectorXd weights, Eigen::MatrixXd means, CovarianceKind kind,
           Eigen::MatrixXd diag_variances, std::vector<Eigen::MatrixXd> full_covariances);

  [[nodiscard]] Eigen::Index components() const { return weights_.size(); }
  [[nodiscard]] Eigen::Index dimension() const { return means_.cols(); }
  [[nodiscard]] CovarianceKind kind() const { return kind_; }
  [[nodiscard]] const Eigen::VectorXd& weights() const { return weights_; }
  [[nodiscard]] const Eigen::MatrixXd& means() const { return means_; }
  [[nodiscard]] const Eigen::MatrixXd& variances() const { return diag_; }
  [[nodiscard]] const std::vector<Eigen::MatrixXd>& covariances() const { return full_; }

  /// K x C matrix of log(w_c) + log N(x_i | mu_c, Sigma_c).
  [[nodiscard]] Eigen::MatrixXd component_log_densities(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  [[nodiscard]] Eigen::VectorXd log_density(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  [[nodiscard]] Eigen::VectorXd density_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  [[nodiscard]] double density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  [[nodiscard]] Eigen::MatrixXd sample(Eigen::Index count, Rng& rng) const;

 private:
  Eigen::VectorXd weights_;
  Eigen::MatrixXd means_;
  CovarianceKind kind_ = CovarianceKind::Diagonal;
  Eigen::MatrixXd diag_;
  std::vector<Eigen::MatrixXd> full_;
  std::vector<Eigen::MatrixXd> chol_;  ///< lower factors of full_
  Eigen::VectorXd log_norm_;           ///< -0.5 (N log 2pi + log det Sigma_c)
};

struct GmmOptions {
  int max_iters = 200;
  double tol = 1e-6;  ///< on the mean per-sample log-likelihood
  double variance_floor = 1e-6;
};

struct GmmFit {
  GmmModel model;
  std::vector<double> loglik_trace;  ///< mean log-likelihood per EM iteration
  std::vector<std::size_t> reinit_at;  ///< trace indices that follow a component reset
  int reinitializations = 0;
  bool converged = false;
};

/// EM from k-means++ seeds. Components whose responsibility mass vanishes are
/// reset to a random sample and counted.
GmmFit gmm_fit(const Eigen::Ref<const Eigen::MatrixXd>& samples, Eigen::Index C,
               CovarianceKind kind, const GmmOptions& opts, std::uint64_t seed);

struct GmmSelection {
  GmmFit fit;
  Eigen::Index components = 0;
  std::vector<std::pair<Eigen::Index, double>> validation_nll;  ///< mean NLL per grid point
};

/// Seeded 90/10 split; every grid size is fit on the 90% part and the one
/// with the lowest validation NLL is returned.
GmmSelection gmm_select(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                        const std::vector<Eigen::Index>& grid, CovarianceKind kind,
                        const GmmOptions& opts, std::uint64_t seed);

void to_json(nlohmann::json& j, const GmmModel& m);
void from_json(const nlohmann::json& j, GmmModel& m);

}  // namespace cpdrad
