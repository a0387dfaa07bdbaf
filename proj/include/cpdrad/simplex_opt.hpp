#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace cpdrad {

struct PgdOptions {
  int max_iters = 500;
  double tol = 1e-6;  ///< stop when |J_q - J_{q-1}| < tol
  double armijo_c = 1e-4;
  double armijo_shrink = 0.5;
  double eta0 = 1.0;

  void validate() const;
};

/// Euclidean projection onto {w >= 0, sum w = 1} by sort-and-threshold.
Eigen::VectorXd project_simplex(const Eigen::Ref<const Eigen::VectorXd>& v);

/// A rows x cols matrix variable whose columns each live on a simplex.
/// Blocks are laid out consecutively in the flat variable, column-major.
struct SimplexBlock {
  Eigen::Index rows = 0;
  Eigen::Index cols = 1;
};

Eigen::Index total_size(const std::vector<SimplexBlock>& blocks);
void project_blocks(const std::vector<SimplexBlock>& blocks, Eigen::Ref<Eigen::VectorXd> x);
bool is_feasible(const std::vector<SimplexBlock>& blocks, const Eigen::Ref<const Eigen::VectorXd>& x,
                 double tol = 1e-9);

struct PgdResult {
  Eigen::VectorXd x;
  std::vector<double> trace;  ///< objective at x0, then after each accepted step
  int iterations = 0;
  bool converged = false;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Projected gradient descent with backtracking: a step eta is accepted when
///   f(P(x - eta g)) <= f(x) - c / eta * ||P(x - eta g) - x||^2.
/// Every iterate is feasible and the recorded trace is nonincreasing.
PgdResult pgd_armijo(const Objective& f, const Gradient& g, const std::vector<SimplexBlock>& blocks,
                     const Eigen::VectorXd& x0, const PgdOptions& opts);

/// min ||A x - y||_2^2 over the probability simplex, started from x0 (the
/// barycenter when absent).
PgdResult simplex_ls(const Eigen::Ref<const Eigen::MatrixXd>& A,
                     const Eigen::Ref<const Eigen::VectorXd>& y, const PgdOptions& opts,
                     const std::optional<Eigen::VectorXd>& x0 = std::nullopt);

}  // namespace cpdrad
