#include "cpdrad/factor_objective.hpp"

#include <stdexcept>

namespace cpdrad {

PairwiseObjective::PairwiseObjective(std::vector<PairTerm> terms, std::vector<Eigen::Index> sizes,
                                     Eigen::Index F)
    : terms_(std::move(terms)), sizes_(std::move(sizes)), F_(F) {
  for (const auto& t : terms_)
    if (t.j < 0 || t.j >= t.k || t.k >= static_cast<Eigen::Index>(sizes_.size()))
      throw std::invalid_argument("PairwiseObjective: bad pair indices");
}

double PairwiseObjective::value(const ModeFactors& x) const {
  double total = 0.0;
  for (const auto& t : terms_) {
    const Eigen::MatrixXd G = x.B[t.j] * x.lambda.asDiagonal() * x.B[t.k].transpose();
    total += (t.forward(G) - t.target).squaredNorm();
  }
  return total;
}

FactorGradient PairwiseObjective::gradient(const ModeFactors& x) const {
  FactorGradient g;
  for (std::size_t n = 0; n < sizes_.size(); ++n) g.dB.push_back(Eigen::MatrixXd::Zero(sizes_[n], F_));
  g.dlambda = Eigen::VectorXd::Zero(F_);
  for (const auto& t : terms_) {
    const auto& Bj = x.B[t.j];
    const auto& Bk = x.B[t.k];
    const Eigen::MatrixXd G = Bj * x.lambda.asDiagonal() * Bk.transpose();
    const Eigen::MatrixXd Gs = t.adjoint(t.forward(G) - t.target);
    g.dB[t.j] += 2.0 * Gs * Bk * x.lambda.asDiagonal();
    g.dB[t.k] += 2.0 * Gs.transpose() * Bj * x.lambda.asDiagonal();
    g.dlambda += 2.0 * (Bj.transpose() * Gs * Bk).diagonal();
  }
  return g;
}

std::vector<SimplexBlock> factor_blocks(const std::vector<Eigen::Index>& sizes, Eigen::Index F) {
  std::vector<SimplexBlock> blocks;
  for (Eigen::Index L : sizes) blocks.push_back({L, F});
  blocks.push_back({F, 1});
  return blocks;
}

Eigen::VectorXd pack_factors(const ModeFactors& x) {
  Eigen::Index total = x.lambda.size();
  for (const auto& B : x.B) total += B.size();
  Eigen::VectorXd flat(total);
  Eigen::Index off = 0;
  for (const auto& B : x.B) {
    flat.segment(off, B.size()) = Eigen::Map<const Eigen::VectorXd>(B.data(), B.size());
    off += B.size();
  }
  flat.tail(x.lambda.size()) = x.lambda;
  return flat;
}

ModeFactors unpack_factors(const Eigen::Ref<const Eigen::VectorXd>& flat,
                           const std::vector<Eigen::Index>& sizes, Eigen::Index F) {
  ModeFactors x;
  Eigen::Index off = 0;
  for (Eigen::Index L : sizes) {
    x.B.push_back(Eigen::Map<const Eigen::MatrixXd>(flat.data() + off, L, F));
    off += L * F;
  }
  if (off + F != flat.size()) throw std::invalid_argument("unpack_factors: size mismatch");
  x.lambda = flat.tail(F);
  return x;
}

Eigen::VectorXd pack_gradient(const FactorGradient& g) {
  return pack_factors(ModeFactors{g.dB, g.dlambda});
}

RefineResult refine_factors(const PairwiseObjective& objective, const ModeFactors& start,
                            const PgdOptions& opts) {
  const auto& sizes = objective.sizes();
  const Eigen::Index F = objective.rank();
  auto f = [&](const Eigen::VectorXd& v) { return objective.value(unpack_factors(v, sizes, F)); };
  auto g = [&](const Eigen::VectorXd& v) {
    return pack_gradient(objective.gradient(unpack_factors(v, sizes, F)));
  };
  const PgdResult r = pgd_armijo(f, g, factor_blocks(sizes, F), pack_factors(start), opts);
  return {unpack_factors(r.x, sizes, F), r.trace, r.iterations};
}

}  // namespace cpdrad
