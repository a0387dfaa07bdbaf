#include "cpdrad/evaluation.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpdrad/parallel.hpp"

namespace cpdrad {

namespace {

using LogRatio = std::function<void(const Eigen::MatrixXd&, Eigen::Ref<Eigen::VectorXd>, Eigen::Index&)>;

void check_pair(const DensityHandle& P, const DensityHandle& Q, Eigen::Index S) {
  if (!P.eval || !P.sample || !Q.eval || !Q.sample)
    throw std::invalid_argument("divergence: incomplete density handle");
  if (P.dim != Q.dim) throw std::invalid_argument("divergence: dimension mismatch");
  if (S < 1) throw std::invalid_argument("divergence: need S >= 1");
}

Eigen::VectorXd checked_eval(const DensityHandle& h, const Eigen::MatrixXd& X) {
  Eigen::VectorXd v = h.eval(X);
  if (v.size() != X.rows()) throw std::runtime_error("divergence: density returned wrong length");
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v(i)) || v(i) < 0.0)
      throw std::runtime_error("divergence: non-finite or negative density at a sampled point");
  return v;
}

double floored_log(double v, Eigen::Index& floored) {
  if (v < kDensityFloor) {
    ++floored;
    return std::log(kDensityFloor);
  }
  return std::log(v);
}

/// Mean and standard error of per-sample terms produced batch by batch.
DivergenceEstimate estimate(const DensityHandle& from, Eigen::Index S, std::uint64_t seed,
                            std::uint64_t stream, const LogRatio& terms_of) {
  if (from.dim < 1) throw std::invalid_argument("divergence: dimension must be positive");
  const Eigen::Index batches = (S + kEvalBatch - 1) / kEvalBatch;
  Eigen::VectorXd terms(S);
  std::vector<Eigen::Index> floored(batches, 0);
  parallel_for(static_cast<std::size_t>(batches), [&](std::size_t b) {
    const Eigen::Index begin = static_cast<Eigen::Index>(b) * kEvalBatch;
    const Eigen::Index n = std::min(kEvalBatch, S - begin);
    Rng rng = substream(seed, {stream, static_cast<std::uint64_t>(b)});
    const Eigen::MatrixXd X = from.sample(n, rng);
    if (X.rows() != n || X.cols() != from.dim)
      throw std::runtime_error("divergence: sampler returned wrong shape");
    terms_of(X, terms.segment(begin, n), floored[b]);
  });

  DivergenceEstimate est;
  est.samples = S;
  for (Eigen::Index f : floored) est.floored += f;
  // Shifting by the first term keeps constant terms exact.
  const double shift = terms(0);
  est.value = shift + (terms.array() - shift).sum() / static_cast<double>(S);
  if (!std::isfinite(est.value)) throw std::runtime_error("divergence: non-finite estimate");
  if (S > 1) {
    const double var = (terms.array() - est.value).square().sum() / static_cast<double>(S - 1);
    est.standard_error = std::sqrt(var / static_cast<double>(S));
  }
  est.flagged = static_cast<double>(est.floored) > 1e-3 * static_cast<double>(S);
  return est;
}

}  // namespace

DensityHandle make_handle(const CpdModel& model) {
  auto m = std::make_shared<const CpdModel>(model);
  return {m->num_features(),
          [m](const Eigen::MatrixXd& X) -> Eigen::VectorXd { return m->joint_density_batch(X); },
          [m](Eigen::Index count, Rng& rng) { return m->sample(count, rng); }};
}

DensityHandle make_handle(const GmmModel& model) {
  auto m = std::make_shared<const GmmModel>(model);
  return {m->dimension(),
          [m](const Eigen::MatrixXd& X) -> Eigen::VectorXd { return m->density_batch(X); },
          [m](Eigen::Index count, Rng& rng) { return m->sample(count, rng); }};
}

DivergenceEstimate kld_mc(const DensityHandle& P, const DensityHandle& Q, Eigen::Index S,
                          std::uint64_t seed) {
  check_pair(P, Q, S);
  return estimate(P, S, seed, 0, [&](const Eigen::MatrixXd& X, Eigen::Ref<Eigen::VectorXd> out,
                                     Eigen::Index& floored) {
    const Eigen::VectorXd p = checked_eval(P, X), q = checked_eval(Q, X);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      out(i) = floored_log(p(i), floored) - floored_log(q(i), floored);
  });
}

DivergenceEstimate jsd_mc(const DensityHandle& P, const DensityHandle& Q, Eigen::Index S,
                          std::uint64_t seed) {
  check_pair(P, Q, S);
  auto against_mixture = [&](bool p_first) {
    return [&, p_first](const Eigen::MatrixXd& X, Eigen::Ref<Eigen::VectorXd> out,
                        Eigen::Index& floored) {
      const Eigen::VectorXd p = checked_eval(P, X), q = checked_eval(Q, X);
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double own = p_first ? p(i) : q(i);
        out(i) = floored_log(own, floored) - floored_log(0.5 * (p(i) + q(i)), floored);
      }
    };
  };
  const DivergenceEstimate a = estimate(P, S, seed, 1, against_mixture(true));
  const DivergenceEstimate b = estimate(Q, S, seed, 2, against_mixture(false));
  DivergenceEstimate out;
  out.value = 0.5 * (a.value + b.value);
  out.standard_error = 0.5 * std::hypot(a.standard_error, b.standard_error);
  out.floored = a.floored + b.floored;
  out.samples = 2 * S;
  out.flagged = a.flagged || b.flagged;
  return out;
}

}  // namespace cpdrad
