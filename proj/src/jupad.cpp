#include "cpdrad/jupad.hpp"

#include <chrono>
#include <memory>
#include <stdexcept>

#include "cpdrad/radon_sketch.hpp"

namespace cpdrad {

Eigen::MatrixXd histogram_2d(const Eigen::Ref<const Eigen::MatrixX2d>& samples,
                             std::span<const double> edges_x, std::span<const double> edges_y) {
  if (samples.rows() == 0) throw std::invalid_argument("histogram_2d: no samples");
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(edges_x.size()) - 1,
                                            static_cast<Eigen::Index>(edges_y.size()) - 1);
  const double inv = 1.0 / static_cast<double>(samples.rows());
  for (Eigen::Index s = 0; s < samples.rows(); ++s) {
    const Eigen::Index a = bin_index(edges_x, samples(s, 0));
    const Eigen::Index b = bin_index(edges_y, samples(s, 1));
    if (a >= 0 && b >= 0) Z(a, b) += inv;
  }
  return Z;
}

Histogram2d histogram_2d(const Eigen::Ref<const Eigen::MatrixX2d>& samples, int n_bins) {
  if (samples.rows() == 0) throw std::invalid_argument("histogram_2d: no samples");
  Histogram2d h;
  const Eigen::VectorXd x = samples.col(0), y = samples.col(1);
  h.edges_x = make_edges(std::span<const double>(x.data(), x.size()), n_bins);
  h.edges_y = make_edges(std::span<const double>(y.data(), y.size()), n_bins);
  h.Z = histogram_2d(samples, h.edges_x, h.edges_y);
  return h;
}

JupadProblem build_jupad_problem(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                 const std::vector<Dictionary>& dictionaries, int n_bins) {
  const auto N = static_cast<Eigen::Index>(dictionaries.size());
  if (N < 2) throw std::invalid_argument("JUPAD needs at least two features");
  if (samples.cols() != N) throw std::invalid_argument("JUPAD: samples/dictionaries mismatch");
  if (samples.rows() < 1) throw std::invalid_argument("JUPAD: no samples");
  JupadProblem pb;
  for (Eigen::Index n = 0; n < N; ++n) {
    const Eigen::VectorXd col = samples.col(n);
    pb.edges.push_back(make_edges(std::span<const double>(col.data(), col.size()), n_bins));
    pb.discretized.push_back(discretize_dictionary(dictionaries[n], pb.edges.back()));
  }
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index k = j + 1; k < N; ++k) {
      Eigen::MatrixX2d pair(samples.rows(), 2);
      pair.col(0) = samples.col(j);
      pair.col(1) = samples.col(k);
      pb.histograms[{j, k}] = histogram_2d(pair, pb.edges[j], pb.edges[k]);
    }
  return pb;
}

PairwiseObjective jupad_objective(const JupadProblem& problem, Eigen::Index F) {
  std::vector<PairTerm> terms;
  std::vector<Eigen::Index> sizes;
  for (const auto& D : problem.discretized) sizes.push_back(D.cols());
  for (const auto& [jk, Z] : problem.histograms) {
    const auto [j, k] = jk;
    const Eigen::MatrixXd* Dj = &problem.discretized[j];
    const Eigen::MatrixXd* Dk = &problem.discretized[k];
    const Eigen::Index rows = Z.rows(), cols = Z.cols();
    terms.push_back(PairTerm{
        j, k,
        [Dj, Dk](const Eigen::MatrixXd& G) -> Eigen::VectorXd {
          const Eigen::MatrixXd out = (*Dj) * G * Dk->transpose();
          return Eigen::Map<const Eigen::VectorXd>(out.data(), out.size());
        },
        [Dj, Dk, rows, cols](const Eigen::VectorXd& r) -> Eigen::MatrixXd {
          return Dj->transpose() * Eigen::Map<const Eigen::MatrixXd>(r.data(), rows, cols) * (*Dk);
        },
        Eigen::Map<const Eigen::VectorXd>(Z.data(), Z.size())});
  }
  return PairwiseObjective(std::move(terms), std::move(sizes), F);
}

FitReport jupad_fit(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                    const std::vector<Dictionary>& dictionaries, Eigen::Index F, int n_bins,
                    const PgdOptions& opts, std::uint64_t seed) {
  if (F < 1) throw std::invalid_argument("JUPAD: F must be >= 1");
  if (n_bins < 1) throw std::invalid_argument("JUPAD: n_bins must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  const JupadProblem pb = build_jupad_problem(samples, dictionaries, n_bins);
  const PairwiseObjective objective = jupad_objective(pb, F);

  Rng rng = substream(seed, {0x4a55});
  ModeFactors start;
  for (const auto& d : dictionaries) {
    Eigen::MatrixXd B(d.size(), F);
    for (Eigen::Index r = 0; r < F; ++r) B.col(r) = dirichlet_uniform(d.size(), rng);
    start.B.push_back(std::move(B));
  }
  start.lambda = dirichlet_uniform(F, rng);

  RefineResult refined = refine_factors(objective, start, opts);
  FitReport report;
  report.j1_trace = std::move(refined.trace);
  report.model = CpdModel(dictionaries, std::move(refined.factors.B), std::move(refined.factors.lambda));
  report.timings["refine"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace cpdrad
