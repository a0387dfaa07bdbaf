#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "cpdrad/simplex_opt.hpp"
#include "cpdrad/spa_nmf.hpp"

namespace cpdrad {

/// One term ||forward(B_j diag(lambda) B_k^T) - target||^2 of a pairwise
/// least-squares objective over mode factors. `adjoint` maps a residual
/// back to an L_j x L_k matrix (the transpose of `forward`).
struct PairTerm {
  Eigen::Index j = 0, k = 0;
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> forward;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> adjoint;
  Eigen::VectorXd target;
};

struct FactorGradient {
  std::vector<Eigen::MatrixXd> dB;
  Eigen::VectorXd dlambda;
};

/// Sum of PairTerms, evaluated in the fixed order the terms were given.
class PairwiseObjective {
 public:
  PairwiseObjective(std::vector<PairTerm> terms, std::vector<Eigen::Index> sizes, Eigen::Index F);

  [[nodiscard]] double value(const ModeFactors& x) const;
  /// Per pair with residual e = forward(G) - target and G* = adjoint(e):
  /// dB_j += 2 G* B_k Lambda, dB_k += 2 G*^T B_j Lambda,
  /// dlambda += 2 diag(B_j^T G* B_k).
  [[nodiscard]] FactorGradient gradient(const ModeFactors& x) const;

  [[nodiscard]] const std::vector<Eigen::Index>& sizes() const { return sizes_; }
  [[nodiscard]] Eigen::Index rank() const { return F_; }
  [[nodiscard]] const std::vector<PairTerm>& terms() const { return terms_; }

 private:
  std::vector<PairTerm> terms_;
  std::vector<Eigen::Index> sizes_;
  Eigen::Index F_;
};

/// Flat layout for the optimizer: B_0, ..., B_{N-1} column-major, then lambda.
std::vector<SimplexBlock> factor_blocks(const std::vector<Eigen::Index>& sizes, Eigen::Index F);
Eigen::VectorXd pack_factors(const ModeFactors& x);
ModeFactors unpack_factors(const Eigen::Ref<const Eigen::VectorXd>& flat,
                           const std::vector<Eigen::Index>& sizes, Eigen::Index F);
Eigen::VectorXd pack_gradient(const FactorGradient& g);

/// Projected gradient descent over all factors jointly.
struct RefineResult {
  ModeFactors factors;
  std::vector<double> trace;
  int iterations = 0;
};
RefineResult refine_factors(const PairwiseObjective& objective, const ModeFactors& start,
                            const PgdOptions& opts);

}  // namespace cpdrad
