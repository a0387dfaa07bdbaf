#include "cpdrad/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "cpdrad/cpd_model.hpp"
#include "cpdrad/parallel.hpp"

namespace cpdrad {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::VectorXd row_logsumexp(const Eigen::MatrixXd& A) {
  Eigen::VectorXd out(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double m = A.row(i).maxCoeff();
    out(i) = std::isfinite(m) ? m + std::log((A.row(i).array() - m).exp().sum()) : m;
  }
  return out;
}

Eigen::MatrixXd clip_eigenvalues(const Eigen::MatrixXd& S, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
  Eigen::MatrixXd out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd select_rows(const Eigen::Ref<const Eigen::MatrixXd>& X,
                            const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = X.row(idx[i]);
  return out;
}

}  // namespace

std::string to_string(CovarianceKind kind) {
  return kind == CovarianceKind::Diagonal ? "diag" : "full";
}

CovarianceKind covariance_kind_from_string(const std::string& s) {
  if (s == "diag") return CovarianceKind::Diagonal;
  if (s == "full") return CovarianceKind::Full;
  throw std::invalid_argument("unknown covariance kind '" + s + "'");
}

GmmModel::GmmModel(Eigen::VectorXd weights, Eigen::MatrixXd means, CovarianceKind kind,
                   Eigen::MatrixXd diag_variances, std::vector<Eigen::MatrixXd> full_covariances)
    : weights_(validate_simplex(weights, "GmmModel weights")),
      means_(std::move(means)),
      kind_(kind),
      diag_(std::move(diag_variances)),
      full_(std::move(full_covariances)) {
  const Eigen::Index C = weights_.size(), N = means_.cols();
  if (means_.rows() != C) throw std::invalid_argument("GmmModel: one mean per component");
  log_norm_.resize(C);
  if (kind_ == CovarianceKind::Diagonal) {
    if (diag_.rows() != C || diag_.cols() != N || !full_.empty())
      throw std::invalid_argument("GmmModel: diagonal variances must be C x N");
    if (!(diag_.minCoeff() > 0.0)) throw std::invalid_argument("GmmModel: nonpositive variance");
    for (Eigen::Index c = 0; c < C; ++c)
      log_norm_(c) = -0.5 * (static_cast<double>(N) * kLog2Pi + diag_.row(c).array().log().sum());
  } else {
    if (static_cast<Eigen::Index>(full_.size()) != C || diag_.size() != 0)
      throw std::invalid_argument("GmmModel: one full covariance per component");
    for (Eigen::Index c = 0; c < C; ++c) {
      if (full_[c].rows() != N || full_[c].cols() != N)
        throw std::invalid_argument("GmmModel: covariance must be N x N");
      Eigen::LLT<Eigen::MatrixXd> llt(full_[c]);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("GmmModel: covariance " + std::to_string(c) + " is not SPD");
      chol_.push_back(llt.matrixL());
      log_norm_(c) = -0.5 * static_cast<double>(N) * kLog2Pi -
                     chol_.back().diagonal().array().log().sum();
    }
  }
}

Eigen::MatrixXd GmmModel::component_log_densities(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  if (X.cols() != dimension()) throw std::invalid_argument("GMM: dimension mismatch");
  const Eigen::Index K = X.rows(), C = components();
  Eigen::MatrixXd out(K, C);
  for (Eigen::Index c = 0; c < C; ++c) {
    const double base = std::log(weights_(c)) + log_norm_(c);
    if (kind_ == CovarianceKind::Diagonal) {
      const Eigen::RowVectorXd inv_var = diag_.row(c).cwiseInverse();
      for (Eigen::Index i = 0; i < K; ++i)
        out(i, c) = base - 0.5 * ((X.row(i) - means_.row(c)).array().square() * inv_var.array()).sum();
    } else {
      const Eigen::MatrixXd centered = (X.rowwise() - means_.row(c)).transpose();
      const Eigen::MatrixXd z = chol_[c].triangularView<Eigen::Lower>().solve(centered);
      out.col(c) = (base - 0.5 * z.colwise().squaredNorm().array()).transpose();
    }
  }
  return out;
}

Eigen::VectorXd GmmModel::log_density(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  return row_logsumexp(component_log_densities(X));
}

Eigen::VectorXd GmmModel::density_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  return log_density(X).array().exp();
}

double GmmModel::density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return density_batch(Eigen::MatrixXd(x.transpose()))(0);
}

Eigen::MatrixXd GmmModel::sample(Eigen::Index count, Rng& rng) const {
  const Eigen::Index N = dimension();
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd X(count, N);
  Eigen::VectorXd z(N);
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index c = sample_categorical(weights_, rng);
    for (Eigen::Index d = 0; d < N; ++d) z(d) = nd(rng);
    if (kind_ == CovarianceKind::Diagonal)
      X.row(i) = means_.row(c) + (z.array() * diag_.row(c).transpose().array().sqrt()).matrix().transpose();
    else
      X.row(i) = means_.row(c) + (chol_[c] * z).transpose();
  }
  return X;
}

GmmFit gmm_fit(const Eigen::Ref<const Eigen::MatrixXd>& X, Eigen::Index C, CovarianceKind kind,
               const GmmOptions& opts, std::uint64_t seed) {
  const Eigen::Index K = X.rows(), N = X.cols();
  if (C < 1 || K <= C)
    throw std::invalid_argument("gmm_fit: need K > C >= 1 (K = " + std::to_string(K) +
                                ", C = " + std::to_string(C) + ")");
  if (opts.max_iters < 1 || !(opts.tol > 0.0) || !(opts.variance_floor > 0.0))
    throw std::invalid_argument("gmm_fit: invalid options");
  Rng rng = substream(seed, {static_cast<std::uint64_t>(C)});

  const Eigen::RowVectorXd global_mean = X.colwise().mean();
  const Eigen::MatrixXd centered_all = X.rowwise() - global_mean;
  const Eigen::MatrixXd global_cov =
      clip_eigenvalues(centered_all.transpose() * centered_all / static_cast<double>(K),
                       opts.variance_floor);
  const Eigen::RowVectorXd global_var =
      global_cov.diagonal().transpose().cwiseMax(opts.variance_floor);

  // k-means++ seeding.
  Eigen::MatrixXd means(C, N);
  means.row(0) = X.row(static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(K)));
  Eigen::VectorXd d2 = (X.rowwise() - means.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < C; ++c) {
    const Eigen::Index pick = d2.sum() > 0.0
                                  ? sample_categorical(d2, rng)
                                  : static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(K));
    means.row(c) = X.row(pick);
    d2 = d2.cwiseMin((X.rowwise() - means.row(c)).rowwise().squaredNorm());
  }

  Eigen::VectorXd weights = Eigen::VectorXd::Constant(C, 1.0 / static_cast<double>(C));
  Eigen::MatrixXd diag;
  std::vector<Eigen::MatrixXd> full;
  if (kind == CovarianceKind::Diagonal) diag = global_var.replicate(C, 1);
  else full.assign(C, global_cov);

  GmmFit out;
  bool reset_pending = false;
  for (int it = 0; it < opts.max_iters; ++it) {
    GmmModel model(weights, means, kind, diag, full);
    const Eigen::MatrixXd logp = model.component_log_densities(X);
    const Eigen::VectorXd lse = row_logsumexp(logp);
    const double ll = lse.mean();
    if (!std::isfinite(ll)) throw std::runtime_error("gmm_fit: non-finite log-likelihood");
    if (!reset_pending && !out.loglik_trace.empty() && ll < out.loglik_trace.back()) {
      // EM cannot decrease the likelihood; a drop here is rounding at the
      // fixed point, so keep the previous iterate.
      const double prev = out.loglik_trace.back();
      if (prev - ll > 1e-9 * std::max(1.0, std::abs(prev)))
        throw std::runtime_error("gmm_fit: log-likelihood decreased by " + std::to_string(prev - ll));
      out.converged = true;
      break;
    }
    if (reset_pending) out.reinit_at.push_back(out.loglik_trace.size());
    reset_pending = false;
    out.loglik_trace.push_back(ll);
    out.model = std::move(model);
    const auto n = out.loglik_trace.size();
    const bool after_reset = !out.reinit_at.empty() && out.reinit_at.back() == n - 1;
    if (n >= 2 && !after_reset && out.loglik_trace[n - 1] - out.loglik_trace[n - 2] < opts.tol) {
      out.converged = true;
      break;
    }
    if (it + 1 == opts.max_iters) break;

    // M-step.
    const Eigen::MatrixXd resp = (logp.colwise() - lse).array().exp().matrix();
    const Eigen::VectorXd Nk = resp.colwise().sum().transpose();
    for (Eigen::Index c = 0; c < C; ++c) {
      if (Nk(c) < 1e-10 * static_cast<double>(K)) {
        ++out.reinitializations;
        reset_pending = true;
        means.row(c) = X.row(static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(K)));
        weights(c) = 1.0 / static_cast<double>(K);
        if (kind == CovarianceKind::Diagonal) diag.row(c) = global_var;
        else full[c] = global_cov;
        continue;
      }
      weights(c) = Nk(c) / static_cast<double>(K);
      means.row(c) = resp.col(c).transpose() * X / Nk(c);
      const Eigen::MatrixXd centered = X.rowwise() - means.row(c);
      if (kind == CovarianceKind::Diagonal) {
        diag.row(c) = (resp.col(c).transpose() * centered.array().square().matrix() / Nk(c))
                          .cwiseMax(opts.variance_floor);
      } else {
        const Eigen::MatrixXd S =
            centered.transpose() * resp.col(c).asDiagonal() * centered / Nk(c);
        full[c] = clip_eigenvalues(S, opts.variance_floor);
      }
    }
    weights /= weights.sum();
  }
  return out;
}

GmmSelection gmm_select(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                        const std::vector<Eigen::Index>& grid, CovarianceKind kind,
                        const GmmOptions& opts, std::uint64_t seed) {
  if (grid.empty()) throw std::invalid_argument("gmm_select: empty component grid");
  const Eigen::Index K = samples.rows();
  if (K < 2) throw std::invalid_argument("gmm_select: need at least two samples");
  std::vector<Eigen::Index> order(K);
  for (Eigen::Index i = 0; i < K; ++i) order[i] = i;
  Rng rng = substream(seed, {0x5e1ec7});
  for (Eigen::Index i = K - 1; i > 0; --i) {
    const auto r = static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(i + 1));
    std::swap(order[i], order[r]);
  }
  const Eigen::Index n_val = std::max<Eigen::Index>(1, std::llround(0.1 * static_cast<double>(K)));
  const Eigen::MatrixXd validation =
      select_rows(samples, std::vector<Eigen::Index>(order.begin(), order.begin() + n_val));
  const Eigen::MatrixXd train =
      select_rows(samples, std::vector<Eigen::Index>(order.begin() + n_val, order.end()));

  std::vector<GmmFit> fits(grid.size());
  std::vector<double> nll(grid.size(), std::numeric_limits<double>::infinity());
  parallel_for(grid.size(), [&](std::size_t g) {
    if (grid[g] < 1 || train.rows() <= grid[g]) return;
    fits[g] = gmm_fit(train, grid[g], kind, opts, seed);
    nll[g] = -fits[g].model.log_density(validation).mean();
  });

  GmmSelection sel;
  std::size_t best = grid.size();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    sel.validation_nll.emplace_back(grid[g], nll[g]);
    if (std::isfinite(nll[g]) && (best == grid.size() || nll[g] < nll[best])) best = g;
  }
  if (best == grid.size())
    throw std::invalid_argument("gmm_select: no grid size is feasible for the training split");
  sel.components = grid[best];
  sel.fit = std::move(fits[best]);
  return sel;
}

void to_json(nlohmann::json& j, const GmmModel& m) {
  j = {{"type", "gmm"},
       {"kind", to_string(m.kind())},
       {"weights", std::vector<double>(m.weights().data(), m.weights().data() + m.components())},
       {"means", matrix_to_json(m.means())}};
  if (m.kind() == CovarianceKind::Diagonal) {
    j["variances"] = matrix_to_json(m.variances());
  } else {
    nlohmann::json covs = nlohmann::json::array();
    for (const auto& S : m.covariances()) covs.push_back(matrix_to_json(S));
    j["covariances"] = std::move(covs);
  }
}

void from_json(const nlohmann::json& j, GmmModel& m) {
  if (j.contains("type") && j.at("type") != "gmm")
    throw std::invalid_argument("JSON document is not a gmm model");
  const auto kind = covariance_kind_from_string(j.at("kind").get<std::string>());
  const auto w = j.at("weights").get<std::vector<double>>();
  Eigen::MatrixXd diag;
  std::vector<Eigen::MatrixXd> full;
  if (kind == CovarianceKind::Diagonal) diag = matrix_from_json(j.at("variances"));
  else
    for (const auto& c : j.at("covariances")) full.push_back(matrix_from_json(c));
  m = GmmModel(Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())),
               matrix_from_json(j.at("means")), kind, std::move(diag), std::move(full));
}

}  // namespace cpdrad
