#pragma once

#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cpdrad {

/// Weight cores T_{j,k} (L_j x L_k), stored for j < k.
using PairCores = std::map<std::pair<Eigen::Index, Eigen::Index>, Eigen::MatrixXd>;

struct Partition {
  std::vector<Eigen::Index> s1, s2;
};

/// S1 = first ceil(N/2) features, S2 = the rest.
Partition balanced_partition(Eigen::Index N);

struct BlockAssembly {
  Eigen::MatrixXd matrix;
  Partition partition;
  std::vector<Eigen::Index> row_offset;  ///< per entry of partition.s1
  std::vector<Eigen::Index> col_offset;  ///< per entry of partition.s2
  std::vector<Eigen::Index> sizes;       ///< L_n for every feature
};

/// Places T_{j,k} (or T_{k,j}^T when j > k) at rows of j in S1 and columns
/// of k in S2.
BlockAssembly assemble(const PairCores& cores, const Partition& partition,
                       const std::vector<Eigen::Index>& sizes);

/// Successive projection: F times pick the residual column of largest norm
/// (lowest index on ties) and project every column onto the orthogonal
/// complement of the pick. Indices are returned in pick order.
std::vector<Eigen::Index> spa_select(const Eigen::Ref<const Eigen::MatrixXd>& M, Eigen::Index F);

/// min ||A x - b||_2 subject to x >= 0 (Lawson-Hanson active set).
Eigen::VectorXd nnls(const Eigen::Ref<const Eigen::MatrixXd>& A,
                     const Eigen::Ref<const Eigen::VectorXd>& b, int max_iters = 0);

class DegenerateFactorError : public std::runtime_error {
 public:
  DegenerateFactorError(Eigen::Index feature, Eigen::Index component);
  Eigen::Index feature, component;
};

struct ModeFactors {
  std::vector<Eigen::MatrixXd> B;  ///< per feature, L_n x F, columns on the simplex
  Eigen::VectorXd lambda;
};

/// Recovers {B_n}, lambda from an assembled block matrix assuming the
/// separable structure T~ = W H^T, W = [B_j]_{j in S1},
/// H = [B_k Lambda]_{k in S2}. SPA runs on the l1-normalized columns; H
/// comes from a nonnegative least-squares solve per column of T~.
///
/// A component with no mass in some feature block is an error, unless
/// `repairs` is non-null: the column is then set uniform and counted.
ModeFactors extract_factors(const BlockAssembly& T, Eigen::Index F, int* repairs = nullptr);

}  // namespace cpdrad
