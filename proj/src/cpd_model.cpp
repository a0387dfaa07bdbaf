#include "cpdrad/cpd_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cpdrad {

namespace {

constexpr double kKeepTol = 1e-9;
constexpr double kRepairTol = 1e-6;

// Cumulative sums per column, used for fast categorical draws.
std::vector<double> cumulative(const Eigen::Ref<const Eigen::VectorXd>& w) {
  std::vector<double> c(static_cast<std::size_t>(w.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) c[i] = acc += w(i);
  return c;
}

Eigen::Index draw(const std::vector<double>& cum, Rng& rng) {
  const double u = uniform01(rng) * cum.back();
  auto it = std::upper_bound(cum.begin(), cum.end(), u);
  if (it == cum.end()) {
    --it;
    while (it != cum.begin() && *it == *(it - 1)) --it;  // trailing zero weights
  }
  return static_cast<Eigen::Index>(it - cum.begin());
}

}  // namespace

Eigen::VectorXd validate_simplex(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what) {
  if (v.size() == 0) throw std::invalid_argument(std::string(what) + ": empty simplex vector");
  if (!v.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entry");
  const double min_entry = v.minCoeff();
  const double sum_dev = std::abs(v.sum() - 1.0);
  if (min_entry >= -kKeepTol && min_entry >= 0.0 && sum_dev <= kKeepTol) return v;
  if (min_entry < -kRepairTol || sum_dev > kRepairTol)
    throw std::invalid_argument(std::string(what) + ": not on the probability simplex (min " +
                                std::to_string(min_entry) + ", sum " + std::to_string(v.sum()) +
                                ")");
  Eigen::VectorXd w = v.cwiseMax(0.0);
  return w / w.sum();
}

CpdModel::CpdModel(std::vector<Dictionary> dictionaries, std::vector<Eigen::MatrixXd> weights,
                   Eigen::VectorXd mixture)
    : dictionaries_(std::move(dictionaries)),
      weights_(std::move(weights)),
      mixture_(std::move(mixture)) {
  if (dictionaries_.empty()) throw std::invalid_argument("CpdModel: need at least one feature");
  if (weights_.size() != dictionaries_.size())
    throw std::invalid_argument("CpdModel: one weight matrix per feature required");
  const Eigen::Index F = mixture_.size();
  if (F < 1) throw std::invalid_argument("CpdModel: rank must be >= 1");
  mixture_ = validate_simplex(mixture_, "CpdModel mixture");
  for (std::size_t n = 0; n < weights_.size(); ++n) {
    Eigen::MatrixXd& B = weights_[n];
    if (B.rows() != dictionaries_[n].size() || B.cols() != F)
      throw std::invalid_argument("CpdModel: weight matrix " + std::to_string(n) +
                                  " has shape " + std::to_string(B.rows()) + "x" +
                                  std::to_string(B.cols()) + ", expected " +
                                  std::to_string(dictionaries_[n].size()) + "x" +
                                  std::to_string(F));
    for (Eigen::Index r = 0; r < F; ++r) B.col(r) = validate_simplex(B.col(r), "CpdModel weights");
  }
}

Eigen::VectorXd atom_values(const Dictionary& d, double x) {
  Eigen::VectorXd p(d.size());
  for (Eigen::Index l = 0; l < d.size(); ++l) p(l) = atom_pdf(d[l], x);
  return p;
}

double CpdModel::joint_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != num_features())
    throw std::invalid_argument("joint_density: point has " + std::to_string(x.size()) +
                                " coordinates, model has " + std::to_string(num_features()));
  Eigen::ArrayXd prod = Eigen::ArrayXd::Ones(rank());
  for (Eigen::Index n = 0; n < num_features(); ++n)
    prod *= (weights_[n].transpose() * atom_values(dictionaries_[n], x(n))).array();
  return (prod * mixture_.array()).sum();
}

Eigen::VectorXd CpdModel::joint_density_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  if (X.cols() != num_features())
    throw std::invalid_argument("joint_density: sample matrix has wrong column count");
  const Eigen::Index K = X.rows();
  Eigen::ArrayXXd prod = Eigen::ArrayXXd::Ones(K, rank());
  for (Eigen::Index n = 0; n < num_features(); ++n) {
    const Dictionary& d = dictionaries_[n];
    Eigen::MatrixXd P(K, d.size());
    for (Eigen::Index l = 0; l < d.size(); ++l)
      for (Eigen::Index i = 0; i < K; ++i) P(i, l) = atom_pdf(d[l], X(i, n));
    prod *= (P * weights_[n]).array();
  }
  return (prod.matrix() * mixture_);
}

Eigen::MatrixXd CpdModel::sample(Eigen::Index count, Rng& rng) const {
  if (count < 0) throw std::invalid_argument("sample: negative count");
  const Eigen::Index N = num_features();
  const Eigen::Index F = rank();
  const std::vector<double> mix_cum = cumulative(mixture_);
  std::vector<std::vector<std::vector<double>>> col_cum(N);
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index r = 0; r < F; ++r) col_cum[n].push_back(cumulative(weights_[n].col(r)));

  Eigen::MatrixXd X(count, N);
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index r = draw(mix_cum, rng);
    for (Eigen::Index n = 0; n < N; ++n) {
      const Eigen::Index l = draw(col_cum[n][r], rng);
      X(i, n) = atom_sample(dictionaries_[n][l], rng);
    }
  }
  return X;
}

Eigen::MatrixXd CpdModel::pair_core(Eigen::Index j, Eigen::Index k) const {
  if (j < 0 || k >= num_features() || j >= k)
    throw std::invalid_argument("pair_core: need 0 <= j < k < N, got (" + std::to_string(j) +
                                ", " + std::to_string(k) + ")");
  return weights_[j] * mixture_.asDiagonal() * weights_[k].transpose();
}

double CpdModel::marginal_1d(Eigen::Index n, double x) const {
  if (n < 0 || n >= num_features()) throw std::invalid_argument("marginal_1d: feature out of range");
  return atom_values(dictionaries_[n], x).dot(weights_[n] * mixture_);
}

std::vector<Eigen::Index> align_components(const CpdModel& fitted, const CpdModel& reference) {
  const Eigen::Index F = reference.rank();
  if (fitted.rank() != F || fitted.num_features() != reference.num_features())
    throw std::invalid_argument("align_components: models differ in shape");
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(F, F);  // (reference r, fitted s)
  for (Eigen::Index n = 0; n < reference.num_features(); ++n)
    for (Eigen::Index r = 0; r < F; ++r)
      for (Eigen::Index s = 0; s < F; ++s)
        cost(r, s) +=
            0.5 * (reference.weights(n).col(r) - fitted.weights(n).col(s)).cwiseAbs().sum();

  std::vector<Eigen::Index> perm(F, -1);
  std::vector<bool> ref_used(F, false), fit_used(F, false);
  for (Eigen::Index step = 0; step < F; ++step) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index br = 0, bs = 0;
    for (Eigen::Index r = 0; r < F; ++r) {
      if (ref_used[r]) continue;
      for (Eigen::Index s = 0; s < F; ++s)
        if (!fit_used[s] && cost(r, s) < best) best = cost(r, s), br = r, bs = s;
    }
    ref_used[br] = fit_used[bs] = true;
    perm[br] = bs;
  }
  return perm;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j.at(i).size()) != cols)
      throw std::invalid_argument("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

void to_json(nlohmann::json& j, const CpdModel& m) {
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& B : m.weights()) weights.push_back(matrix_to_json(B));
  j = {{"type", "cpd"},
       {"dictionaries", m.dictionaries()},
       {"weights", std::move(weights)},
       {"mixture", std::vector<double>(m.mixture().data(), m.mixture().data() + m.rank())}};
}

void from_json(const nlohmann::json& j, CpdModel& m) {
  if (j.contains("type") && j.at("type") != "cpd")
    throw std::invalid_argument("JSON document is not a cpd model");
  auto dicts = j.at("dictionaries").get<std::vector<Dictionary>>();
  std::vector<Eigen::MatrixXd> weights;
  for (const auto& w : j.at("weights")) weights.push_back(matrix_from_json(w));
  const auto mix = j.at("mixture").get<std::vector<double>>();
  m = CpdModel(std::move(dicts), std::move(weights),
               Eigen::Map<const Eigen::VectorXd>(mix.data(), static_cast<Eigen::Index>(mix.size())));
}

}  // namespace cpdrad
