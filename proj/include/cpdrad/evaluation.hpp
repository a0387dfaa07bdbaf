#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

#include "cpdrad/cpd_model.hpp"
#include "cpdrad/gmm.hpp"
#include "cpdrad/random.hpp"

namespace cpdrad {

/// A density that can be evaluated row-wise on a K x dim matrix and sampled.
/// Both sides of a divergence must use the same mixed-measure convention.
struct DensityHandle {
  Eigen::Index dim = 0;
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> eval;
  std::function<Eigen::MatrixXd(Eigen::Index, Rng&)> sample;
};

DensityHandle make_handle(const CpdModel& model);
DensityHandle make_handle(const GmmModel& model);

inline constexpr double kDensityFloor = 1e-300;
inline constexpr Eigen::Index kEvalBatch = 8192;

struct DivergenceEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  Eigen::Index floored = 0;  ///< sample points where a density hit the floor
  Eigen::Index samples = 0;
  bool flagged = false;      ///< floored on more than 0.1% of the points
};

/// (1/S) sum log(P(x_i) / Q(x_i)) over x_i ~ P. Batch b draws from
/// substream(seed, {b}); the estimate depends only on the seed and S.
DivergenceEstimate kld_mc(const DensityHandle& P, const DensityHandle& Q, Eigen::Index S,
                          std::uint64_t seed);

/// (D(P||M) + D(Q||M)) / 2 with M = (P + Q) / 2, each term from S samples.
DivergenceEstimate jsd_mc(const DensityHandle& P, const DensityHandle& Q, Eigen::Index S,
                          std::uint64_t seed);

}  // namespace cpdrad
