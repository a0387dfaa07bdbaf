#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpdrad/cpd_model.hpp"
#include "cpdrad/factor_objective.hpp"
#include "cpdrad/radon_sketch.hpp"
#include "cpdrad/simplex_opt.hpp"
#include "cpdrad/spa_nmf.hpp"
#include "json.hpp"

namespace cpdrad {

struct RadOptions {
  Eigen::Index F = 1;
  int M = 10;                     ///< projection directions per pair
  double rho = 1.0;               ///< coupling weight between T_{j,k} and B_j Lambda B_k^T
  Eigen::Index mc_samples = 100000;
  int bins_per_direction = 0;     ///< 0: ceil(K^{1/3})
  PgdOptions inner;               ///< T initialization and updates
  int outer_iters = 20;
  double outer_tol = 1e-6;        ///< |J2_q - J2_{q-1}| stopping threshold
  PgdOptions final;               ///< J1 refinement
  std::uint64_t seed = 0;
  bool shared_dictionary = false;
  std::filesystem::path cache_dir;  ///< RadonMatrix cache; empty disables

  void validate() const;
};

/// The per-pair data sketches and their linear sketch operators. In shared
/// mode every pair points at one operator.
struct SketchSystem {
  std::vector<PairSketch> sketches;  ///< sorted by (j, k)
  std::vector<std::shared_ptr<const RadonMatrix>> operators;
  std::vector<Eigen::Index> sizes;
};

struct AlternationSweep {
  double j2_after_spa = 0.0;
  double j2_after_update = 0.0;
  bool spa_repaired = false;
};

struct FitReport {
  CpdModel model;
  std::vector<double> j1_trace;
  std::vector<double> j2_trace;
  std::vector<AlternationSweep> sweeps;
  std::vector<double> init_residuals;        ///< simplex-LS objective per pair
  std::vector<std::vector<double>> t_traces;  ///< every T-solve trace, in call order
  std::map<std::string, double> timings;     ///< seconds per phase
  int degenerate_repairs = 0;
};

/// Smallest b with b^3 >= K.
int cube_root_bins(Eigen::Index K);

/// Builds sketches and operators from K x N samples.
SketchSystem build_sketch_system(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                 const std::vector<Dictionary>& dictionaries,
                                 const RadOptions& opts);

/// J1 as a PairwiseObjective: terms ||R_{j,k} vec(B_j Lambda B_k^T) - y_{j,k}||^2.
PairwiseObjective j1_objective(const SketchSystem& system, Eigen::Index F);

double eval_J1(const SketchSystem& system, const ModeFactors& x);
FactorGradient grad_J1(const SketchSystem& system, const ModeFactors& x);

/// J2 = sum over pairs of ||y - R vec(T)||^2 + rho ||T - B_j Lambda B_k^T||_F^2.
double eval_J2(const SketchSystem& system, const std::vector<Eigen::MatrixXd>& T,
               const ModeFactors& x, double rho);

/// Simplex-constrained least-squares estimate of T_{j,k} from its sketch.
Eigen::MatrixXd init_T(const PairSketch& sketch, const RadonMatrix& Rm, const PgdOptions& inner,
                       std::vector<double>* trace = nullptr);

/// Minimizes ||[R; sqrt(rho) I] vec(T) - [y; sqrt(rho) vec(B_j Lambda B_k^T)]||^2
/// over the simplex, warm-started at `start` when given.
Eigen::MatrixXd update_T(const PairSketch& sketch, const RadonMatrix& Rm,
                         const Eigen::Ref<const Eigen::MatrixXd>& Bj,
                         const Eigen::Ref<const Eigen::MatrixXd>& Bk,
                         const Eigen::Ref<const Eigen::VectorXd>& lambda, double rho,
                         const PgdOptions& inner,
                         const std::optional<Eigen::MatrixXd>& start = std::nullopt,
                         std::vector<double>* trace = nullptr);

/// SPA step on the assembled cores. Degenerate components (no mass in some
/// block) are replaced by uniform weights when `repair` is set.
ModeFactors spa_step(const PairCores& cores, const std::vector<Eigen::Index>& sizes,
                     Eigen::Index F, bool repair, bool* repaired = nullptr);

/// Full estimator: sketches, T initialization, J2 alternation with SPA
/// steps, then projected gradient refinement of J1.
FitReport fit(const Eigen::Ref<const Eigen::MatrixXd>& samples,
              const std::vector<Dictionary>& dictionaries, const RadOptions& opts);

void to_json(nlohmann::json& j, const PgdOptions& o);
void from_json(const nlohmann::json& j, PgdOptions& o);
void to_json(nlohmann::json& j, const RadOptions& o);
void from_json(const nlohmann::json& j, RadOptions& o);
/// FitReport without the per-solve T traces.
void to_json(nlohmann::json& j, const FitReport& r);

}  // namespace cpdrad
