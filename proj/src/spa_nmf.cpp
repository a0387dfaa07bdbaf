#include "cpdrad/spa_nmf.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cpdrad/simplex_opt.hpp"

namespace cpdrad {

Partition balanced_partition(Eigen::Index N) {
  if (N < 2) throw std::invalid_argument("balanced_partition: need at least two features");
  Partition p;
  const Eigen::Index half = (N + 1) / 2;
  for (Eigen::Index n = 0; n < N; ++n) (n < half ? p.s1 : p.s2).push_back(n);
  return p;
}

BlockAssembly assemble(const PairCores& cores, const Partition& partition,
                       const std::vector<Eigen::Index>& sizes) {
  if (partition.s1.empty() || partition.s2.empty())
    throw std::invalid_argument("assemble: both partition sides must be nonempty");
  BlockAssembly out;
  out.partition = partition;
  out.sizes = sizes;
  Eigen::Index rows = 0, cols = 0;
  for (Eigen::Index j : partition.s1) out.row_offset.push_back(rows), rows += sizes.at(j);
  for (Eigen::Index k : partition.s2) out.col_offset.push_back(cols), cols += sizes.at(k);
  out.matrix.resize(rows, cols);

  for (std::size_t a = 0; a < partition.s1.size(); ++a)
    for (std::size_t b = 0; b < partition.s2.size(); ++b) {
      const Eigen::Index j = partition.s1[a], k = partition.s2[b];
      if (j == k) throw std::invalid_argument("assemble: partition sides overlap");
      const bool flip = j > k;
      const auto it = cores.find(flip ? std::pair{k, j} : std::pair{j, k});
      if (it == cores.end())
        throw std::invalid_argument("assemble: missing core for pair (" +
                                    std::to_string(std::min(j, k)) + ", " +
                                    std::to_string(std::max(j, k)) + ")");
      const Eigen::MatrixXd block = flip ? Eigen::MatrixXd(it->second.transpose()) : it->second;
      if (block.rows() != sizes[j] || block.cols() != sizes[k])
        throw std::invalid_argument("assemble: core (" + std::to_string(j) + ", " +
                                    std::to_string(k) + ") does not match dictionary sizes");
      out.matrix.block(out.row_offset[a], out.col_offset[b], sizes[j], sizes[k]) = block;
    }
  return out;
}

std::vector<Eigen::Index> spa_select(const Eigen::Ref<const Eigen::MatrixXd>& M, Eigen::Index F) {
  if (F < 1 || F > M.cols() || F > M.rows())
    throw std::invalid_argument("spa_select: rank " + std::to_string(F) + " out of range for a " +
                                std::to_string(M.rows()) + "x" + std::to_string(M.cols()) +
                                " matrix");
  Eigen::MatrixXd R = M;
  std::vector<Eigen::Index> picked;
  std::vector<bool> used(M.cols(), false);
  for (Eigen::Index t = 0; t < F; ++t) {
    const Eigen::VectorXd norms = R.colwise().squaredNorm();
    Eigen::Index best = -1;
    for (Eigen::Index c = 0; c < M.cols(); ++c)
      if (!used[c] && (best < 0 || norms(c) > norms(best))) best = c;
    picked.push_back(best);
    used[best] = true;
    const double nrm = std::sqrt(norms(best));
    if (nrm > 0.0) {
      const Eigen::VectorXd u = R.col(best) / nrm;
      R -= u * (u.transpose() * R);
    }
  }
  return picked;
}

Eigen::VectorXd nnls(const Eigen::Ref<const Eigen::MatrixXd>& A,
                     const Eigen::Ref<const Eigen::VectorXd>& b, int max_iters) {
  const Eigen::Index n = A.cols();
  if (A.rows() != b.size()) throw std::invalid_argument("nnls: shape mismatch");
  if (max_iters <= 0) max_iters = static_cast<int>(3 * n + 10);
  const double tol = 10.0 * std::numeric_limits<double>::epsilon() *
                     A.cwiseAbs().colwise().sum().maxCoeff() *
                     static_cast<double>(std::max(A.rows(), n));

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(n, false);

  auto solve_passive = [&]() {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i)
      if (passive[i]) idx.push_back(i);
    Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) Ap.col(c) = A.col(idx[c]);
    const Eigen::VectorXd sp = Ap.colPivHouseholderQr().solve(b);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
    for (std::size_t c = 0; c < idx.size(); ++c) s(idx[c]) = sp(c);
    return s;
  };

  for (int outer = 0; outer < max_iters; ++outer) {
    const Eigen::VectorXd w = A.transpose() * (b - A * x);
    Eigen::Index t = -1;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!passive[i] && w(i) > tol && (t < 0 || w(i) > w(t))) t = i;
    if (t < 0) break;
    passive[t] = true;

    for (int inner = 0; inner <= n; ++inner) {
      const Eigen::VectorXd s = solve_passive();
      bool all_positive = true;
      for (Eigen::Index i = 0; i < n; ++i)
        if (passive[i] && s(i) <= 0.0) all_positive = false;
      if (all_positive) {
        x = s;
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i)
        if (passive[i] && s(i) <= 0.0) alpha = std::min(alpha, x(i) / (x(i) - s(i)));
      x += alpha * (s - x);
      for (Eigen::Index i = 0; i < n; ++i)
        if (passive[i] && x(i) <= tol) passive[i] = false, x(i) = 0.0;
    }
  }
  return x;
}

DegenerateFactorError::DegenerateFactorError(Eigen::Index f, Eigen::Index c)
    : std::runtime_error("extract_factors: component " + std::to_string(c) +
                         " has zero mass in the block of feature " + std::to_string(f)),
      feature(f),
      component(c) {}

ModeFactors extract_factors(const BlockAssembly& T, Eigen::Index F, int* repairs) {
  const Eigen::MatrixXd& M = T.matrix;
  if (F < 1 || F > std::min(M.rows(), M.cols()))
    throw std::invalid_argument(
        "extract_factors: rank " + std::to_string(F) + " exceeds min dimension of the " +
        std::to_string(M.rows()) + "x" + std::to_string(M.cols()) +
        " assembled matrix; mode factors will not be identifiable");
  const auto& s1 = T.partition.s1;
  const auto& s2 = T.partition.s2;

  Eigen::MatrixXd normalized = M;
  for (Eigen::Index c = 0; c < M.cols(); ++c) {
    const double mass = M.col(c).cwiseAbs().sum();
    if (mass > 0.0) normalized.col(c) /= mass;
  }
  const std::vector<Eigen::Index> sel = spa_select(normalized, F);

  auto degenerate = [&](Eigen::Index feature, Eigen::Index r, auto col) {
    if (!repairs) throw DegenerateFactorError(feature, r);
    ++*repairs;
    col.setConstant(1.0 / static_cast<double>(col.size()));
  };

  // W columns scaled so their blocks sum to one on average.
  Eigen::MatrixXd W(M.rows(), F);
  for (Eigen::Index r = 0; r < F; ++r) {
    W.col(r) = M.col(sel[r]);
    const double mean_block_sum = W.col(r).sum() / static_cast<double>(s1.size());
    if (mean_block_sum > 0.0) {
      W.col(r) /= mean_block_sum;
    } else {
      degenerate(s1.front(), r, W.col(r));
      for (std::size_t a = 0; a < s1.size(); ++a)
        W.col(r).segment(T.row_offset[a], T.sizes[s1[a]])
            .setConstant(1.0 / static_cast<double>(T.sizes[s1[a]]));
    }
  }

  Eigen::MatrixXd H(M.cols(), F);
  for (Eigen::Index c = 0; c < M.cols(); ++c) H.row(c) = nnls(W, M.col(c)).transpose();

  ModeFactors out;
  out.B.resize(T.sizes.size());
  out.lambda = Eigen::VectorXd::Zero(F);
  for (std::size_t b = 0; b < s2.size(); ++b) {
    const Eigen::Index k = s2[b];
    Eigen::MatrixXd Bk = H.block(T.col_offset[b], 0, T.sizes[k], F);
    for (Eigen::Index r = 0; r < F; ++r) {
      const double mass = Bk.col(r).sum();
      if (!(mass > 0.0)) {
        degenerate(k, r, Bk.col(r));
        continue;
      }
      out.lambda(r) += mass / static_cast<double>(s2.size());
      Bk.col(r) = project_simplex(Bk.col(r) / mass);
    }
    out.B[k] = std::move(Bk);
  }
  for (std::size_t a = 0; a < s1.size(); ++a) {
    const Eigen::Index j = s1[a];
    Eigen::MatrixXd Bj = W.block(T.row_offset[a], 0, T.sizes[j], F).cwiseMax(0.0);
    for (Eigen::Index r = 0; r < F; ++r) {
      const double mass = Bj.col(r).sum();
      if (!(mass > 0.0)) {
        degenerate(j, r, Bj.col(r));
        continue;
      }
      Bj.col(r) = project_simplex(Bj.col(r) / mass);
    }
    out.B[j] = std::move(Bj);
  }
  if (!(out.lambda.sum() > 0.0)) {
    if (!repairs) throw DegenerateFactorError(s2.front(), 0);
    ++*repairs;
    out.lambda.setConstant(1.0 / static_cast<double>(F));
  }
  out.lambda = project_simplex(out.lambda);
  return out;
}

}  // namespace cpdrad
