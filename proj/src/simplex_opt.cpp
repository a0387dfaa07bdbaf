#include "cpdrad/simplex_opt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace cpdrad {

void PgdOptions::validate() const {
  if (max_iters < 1) throw std::invalid_argument("PgdOptions: max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("PgdOptions: tol must be > 0");
  if (!(armijo_c > 0.0 && armijo_c < 1.0))
    throw std::invalid_argument("PgdOptions: armijo_c must lie in (0, 1)");
  if (!(armijo_shrink > 0.0 && armijo_shrink < 1.0))
    throw std::invalid_argument("PgdOptions: armijo_shrink must lie in (0, 1)");
  if (!(eta0 > 0.0)) throw std::invalid_argument("PgdOptions: eta0 must be > 0");
}

Eigen::VectorXd project_simplex(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const Eigen::Index d = v.size();
  if (d == 0) throw std::invalid_argument("project_simplex: empty vector");
  if (!v.allFinite()) throw std::invalid_argument("project_simplex: non-finite input");
  if (v.minCoeff() >= 0.0 && std::abs(v.sum() - 1.0) <= 4.0 * 0x1.0p-52) return v;

  std::vector<double> u(v.data(), v.data() + d);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

Eigen::Index total_size(const std::vector<SimplexBlock>& blocks) {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.rows * b.cols;
  return n;
}

void project_blocks(const std::vector<SimplexBlock>& blocks, Eigen::Ref<Eigen::VectorXd> x) {
  Eigen::Index off = 0;
  for (const auto& b : blocks)
    for (Eigen::Index c = 0; c < b.cols; ++c, off += b.rows)
      x.segment(off, b.rows) = project_simplex(x.segment(off, b.rows));
}

bool is_feasible(const std::vector<SimplexBlock>& blocks, const Eigen::Ref<const Eigen::VectorXd>& x,
                 double tol) {
  if (x.size() != total_size(blocks)) return false;
  Eigen::Index off = 0;
  for (const auto& b : blocks)
    for (Eigen::Index c = 0; c < b.cols; ++c, off += b.rows) {
      const auto seg = x.segment(off, b.rows);
      if (seg.minCoeff() < -tol || std::abs(seg.sum() - 1.0) > tol) return false;
    }
  return true;
}

PgdResult pgd_armijo(const Objective& f, const Gradient& g, const std::vector<SimplexBlock>& blocks,
                     const Eigen::VectorXd& x0, const PgdOptions& opts) {
  opts.validate();
  if (x0.size() != total_size(blocks))
    throw std::invalid_argument("pgd_armijo: x0 has size " + std::to_string(x0.size()) +
                                ", blocks need " + std::to_string(total_size(blocks)));
  if (!is_feasible(blocks, x0)) throw std::invalid_argument("pgd_armijo: x0 is infeasible");

  PgdResult res;
  res.x = x0;
  double fx = f(res.x);
  if (!std::isfinite(fx)) throw std::runtime_error("pgd_armijo: non-finite objective at x0");
  res.trace.push_back(fx);

  constexpr int kMaxBacktracks = 60;
  Eigen::VectorXd candidate(x0.size());
  for (int it = 0; it < opts.max_iters; ++it) {
    ++res.iterations;
    const Eigen::VectorXd grad = g(res.x);
    double eta = opts.eta0;
    bool accepted = false;
    double f_new = fx;
    double moved = 0.0;
    for (int bt = 0; bt < kMaxBacktracks; ++bt, eta *= opts.armijo_shrink) {
      candidate = res.x - eta * grad;
      project_blocks(blocks, candidate);
      moved = (candidate - res.x).squaredNorm();
      if (moved == 0.0) break;
      f_new = f(candidate);
      if (f_new <= fx - opts.armijo_c / eta * moved) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Stationary (projected step is null) or no sufficient decrease found.
      res.trace.push_back(fx);
      res.converged = true;
      break;
    }
    res.x.swap(candidate);
    res.trace.push_back(f_new);
    const double change = fx - f_new;
    fx = f_new;
    if (change < opts.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

PgdResult simplex_ls(const Eigen::Ref<const Eigen::MatrixXd>& A,
                     const Eigen::Ref<const Eigen::VectorXd>& y, const PgdOptions& opts,
                     const std::optional<Eigen::VectorXd>& x0) {
  if (A.rows() != y.size())
    throw std::invalid_argument("simplex_ls: A has " + std::to_string(A.rows()) +
                                " rows but y has " + std::to_string(y.size()) + " entries");
  const Eigen::Index d = A.cols();
  if (d == 0) throw std::invalid_argument("simplex_ls: A has no columns");
  // Quadratic in Gram form: ||Ax - y||^2 = x'Qx - 2c'x + y'y.
  const Eigen::MatrixXd Q = A.transpose() * A;
  const Eigen::VectorXd c = A.transpose() * y;
  const double yy = y.squaredNorm();
  auto f = [&](const Eigen::VectorXd& x) { return x.dot(Q * x) - 2.0 * c.dot(x) + yy; };
  auto g = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return 2.0 * (Q * x - c); };

  Eigen::VectorXd start = x0 ? *x0 : Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d));
  if (start.size() != d) throw std::invalid_argument("simplex_ls: x0 has wrong size");
  return pgd_armijo(f, g, {SimplexBlock{d, 1}}, start, opts);
}

}  // namespace cpdrad
