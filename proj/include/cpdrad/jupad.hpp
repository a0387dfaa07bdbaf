#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "cpdrad/factor_objective.hpp"
#include "cpdrad/rad_estimator.hpp"

namespace cpdrad {

struct Histogram2d {
  Eigen::MatrixXd Z;  ///< fraction of samples per (bin_x, bin_y)
  std::vector<double> edges_x, edges_y;
};

/// Uniform per-axis bins over the data range (make_edges rule).
Histogram2d histogram_2d(const Eigen::Ref<const Eigen::MatrixX2d>& samples, int n_bins);

/// Same, with caller-supplied edges; samples outside are dropped.
Eigen::MatrixXd histogram_2d(const Eigen::Ref<const Eigen::MatrixX2d>& samples,
                             std::span<const double> edges_x, std::span<const double> edges_y);

/// The 2-D histogram objective sum_{j<k} ||Z_{j,k} - D_j B_j Lambda B_k^T D_k^T||_F^2
/// with D_n the dictionaries discretized on each feature's histogram bins.
struct JupadProblem {
  std::vector<Eigen::MatrixXd> discretized;  ///< D_n, I_n x L_n
  std::vector<std::vector<double>> edges;    ///< per feature
  PairCores histograms;                      ///< Z_{j,k}
};

JupadProblem build_jupad_problem(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                 const std::vector<Dictionary>& dictionaries, int n_bins);

PairwiseObjective jupad_objective(const JupadProblem& problem, Eigen::Index F);

/// Random Dirichlet(1) start, then projected gradient descent on the
/// histogram objective. The report's j1_trace holds that objective.
FitReport jupad_fit(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                    const std::vector<Dictionary>& dictionaries, Eigen::Index F, int n_bins,
                    const PgdOptions& opts, std::uint64_t seed);

}  // namespace cpdrad
