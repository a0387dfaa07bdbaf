#include "cpdrad/rad_estimator.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cpdrad/parallel.hpp"

namespace cpdrad {

namespace {

// Substream tags.
constexpr std::uint64_t kDirectionsTag = 1;
constexpr std::uint64_t kOperatorTag = 2;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::MatrixX2d pair_columns(const Eigen::Ref<const Eigen::MatrixXd>& X, Eigen::Index j,
                              Eigen::Index k) {
  Eigen::MatrixX2d out(X.rows(), 2);
  out.col(0) = X.col(j);
  out.col(1) = X.col(k);
  return out;
}

Eigen::MatrixXd unvec(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

Eigen::VectorXd vec(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

}  // namespace

void RadOptions::validate() const {
  if (F < 1) throw std::invalid_argument("RadOptions: F must be >= 1");
  if (M < 1) throw std::invalid_argument("RadOptions: M must be >= 1");
  if (!(rho >= 0.0)) throw std::invalid_argument("RadOptions: rho must be >= 0");
  if (mc_samples < 1) throw std::invalid_argument("RadOptions: mc_samples must be >= 1");
  if (bins_per_direction < 0) throw std::invalid_argument("RadOptions: negative bin count");
  if (outer_iters < 1) throw std::invalid_argument("RadOptions: outer_iters must be >= 1");
  if (!(outer_tol > 0.0)) throw std::invalid_argument("RadOptions: outer_tol must be > 0");
  inner.validate();
  final.validate();
}

int cube_root_bins(Eigen::Index K) {
  if (K < 1) throw std::invalid_argument("cube_root_bins: K must be >= 1");
  auto b = static_cast<Eigen::Index>(std::cbrt(static_cast<double>(K)));
  while (b * b * b < K) ++b;
  while (b > 1 && (b - 1) * (b - 1) * (b - 1) >= K) --b;
  return static_cast<int>(b);
}

SketchSystem build_sketch_system(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                 const std::vector<Dictionary>& dictionaries,
                                 const RadOptions& opts) {
  const auto N = static_cast<Eigen::Index>(dictionaries.size());
  if (N < 2) throw std::invalid_argument("RAD needs at least two features");
  if (samples.cols() != N)
    throw std::invalid_argument("samples have " + std::to_string(samples.cols()) +
                                " columns but " + std::to_string(N) + " dictionaries were given");
  if (samples.rows() < 2) throw std::invalid_argument("RAD needs at least two samples");
  const int bins = opts.bins_per_direction > 0 ? opts.bins_per_direction
                                               : cube_root_bins(samples.rows());

  SketchSystem sys;
  for (const auto& d : dictionaries) sys.sizes.push_back(d.size());
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index k = j + 1; k < N; ++k) pairs.emplace_back(j, k);
  sys.sketches.resize(pairs.size());
  sys.operators.resize(pairs.size());

  if (opts.shared_dictionary) {
    for (const auto& d : dictionaries)
      if (!(d == dictionaries.front()))
        throw std::invalid_argument("shared_dictionary requires identical dictionaries");
    Rng rng = substream(opts.seed, {kDirectionsTag});
    ProjectionSet proj = gen_directions(opts.M, rng);
    std::vector<Eigen::MatrixX2d> blocks;
    for (const auto& [j, k] : pairs) blocks.push_back(pair_columns(samples, j, k));
    fit_edges(proj, blocks, bins);
    auto op = std::make_shared<const RadonMatrix>(
        radon_matrix_cached(opts.cache_dir, dictionaries.front(), dictionaries.front(), proj,
                            opts.mc_samples, derive_seed(opts.seed, {kOperatorTag})));
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [j, k] = pairs[p];
      sys.sketches[p] = empirical_sketch(blocks[p], proj, j, k);
      sys.operators[p] = op;
    }
    return sys;
  }

  parallel_for(pairs.size(), [&](std::size_t p) {
    const auto [j, k] = pairs[p];
    const auto uj = static_cast<std::uint64_t>(j), uk = static_cast<std::uint64_t>(k);
    Rng rng = substream(opts.seed, {kDirectionsTag, uj, uk});
    ProjectionSet proj = gen_directions(opts.M, rng);
    const Eigen::MatrixX2d block = pair_columns(samples, j, k);
    fit_edges(proj, std::span<const Eigen::MatrixX2d>(&block, 1), bins);
    sys.sketches[p] = empirical_sketch(block, proj, j, k);
    sys.operators[p] = std::make_shared<const RadonMatrix>(
        radon_matrix_cached(opts.cache_dir, dictionaries[j], dictionaries[k], proj,
                            opts.mc_samples, derive_seed(opts.seed, {kOperatorTag, uj, uk}), j, k));
  });
  return sys;
}

PairwiseObjective j1_objective(const SketchSystem& system, Eigen::Index F) {
  std::vector<PairTerm> terms;
  for (std::size_t p = 0; p < system.sketches.size(); ++p) {
    const PairSketch& sk = system.sketches[p];
    const RadonMatrix* Rm = system.operators[p].get();
    const Eigen::Index Lj = system.sizes[sk.j], Lk = system.sizes[sk.k];
    if (Rm->R.cols() != Lj * Lk || Rm->R.rows() != sk.y.size())
      throw std::invalid_argument("J1: sketch operator shape mismatch for pair (" +
                                  std::to_string(sk.j) + ", " + std::to_string(sk.k) + ")");
    terms.push_back(PairTerm{
        sk.j, sk.k, [Rm](const Eigen::MatrixXd& G) { return apply_sketch(*Rm, G); },
        [Rm, Lj, Lk](const Eigen::VectorXd& r) {
          return unvec(Rm->R.transpose() * r, Lj, Lk);
        },
        sk.y});
  }
  return PairwiseObjective(std::move(terms), system.sizes, F);
}

double eval_J1(const SketchSystem& system, const ModeFactors& x) {
  return j1_objective(system, x.lambda.size()).value(x);
}

FactorGradient grad_J1(const SketchSystem& system, const ModeFactors& x) {
  return j1_objective(system, x.lambda.size()).gradient(x);
}

double eval_J2(const SketchSystem& system, const std::vector<Eigen::MatrixXd>& T,
               const ModeFactors& x, double rho) {
  if (T.size() != system.sketches.size()) throw std::invalid_argument("eval_J2: one T per pair");
  double total = 0.0;
  for (std::size_t p = 0; p < T.size(); ++p) {
    const PairSketch& sk = system.sketches[p];
    const Eigen::MatrixXd G = x.B[sk.j] * x.lambda.asDiagonal() * x.B[sk.k].transpose();
    total += (sk.y - apply_sketch(*system.operators[p], T[p])).squaredNorm() +
             rho * (T[p] - G).squaredNorm();
  }
  return total;
}

Eigen::MatrixXd init_T(const PairSketch& sketch, const RadonMatrix& Rm, const PgdOptions& inner,
                       std::vector<double>* trace) {
  if (Rm.R.rows() != sketch.y.size())
    throw std::invalid_argument("init_T: operator has " + std::to_string(Rm.R.rows()) +
                                " rows, sketch has " + std::to_string(sketch.y.size()));
  const PgdResult r = simplex_ls(Rm.R, sketch.y, inner);
  if (trace) *trace = r.trace;
  return unvec(r.x, Rm.Lj, Rm.Lk);
}

Eigen::MatrixXd update_T(const PairSketch& sketch, const RadonMatrix& Rm,
                         const Eigen::Ref<const Eigen::MatrixXd>& Bj,
                         const Eigen::Ref<const Eigen::MatrixXd>& Bk,
                         const Eigen::Ref<const Eigen::VectorXd>& lambda, double rho,
                         const PgdOptions& inner, const std::optional<Eigen::MatrixXd>& start,
                         std::vector<double>* trace) {
  const Eigen::Index b = Rm.R.rows(), d = Rm.R.cols();
  if (sketch.y.size() != b || Bj.rows() != Rm.Lj || Bk.rows() != Rm.Lk ||
      Bj.cols() != lambda.size() || Bk.cols() != lambda.size())
    throw std::invalid_argument("update_T: shape mismatch");
  const Eigen::MatrixXd G = Bj * lambda.asDiagonal() * Bk.transpose();
  const double s = std::sqrt(rho);
  Eigen::MatrixXd A(b + d, d);
  A.topRows(b) = Rm.R;
  A.bottomRows(d) = s * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd target(b + d);
  target.head(b) = sketch.y;
  target.tail(d) = s * vec(G);
  std::optional<Eigen::VectorXd> x0;
  if (start) x0 = vec(*start);
  const PgdResult r = simplex_ls(A, target, inner, x0);
  if (trace) *trace = r.trace;
  return unvec(r.x, Rm.Lj, Rm.Lk);
}

ModeFactors spa_step(const PairCores& cores, const std::vector<Eigen::Index>& sizes,
                     Eigen::Index F, bool repair, bool* repaired) {
  const BlockAssembly T =
      assemble(cores, balanced_partition(static_cast<Eigen::Index>(sizes.size())), sizes);
  int repairs = 0;
  ModeFactors x = extract_factors(T, F, repair ? &repairs : nullptr);
  if (repaired) *repaired = repairs > 0;
  return x;
}

FitReport fit(const Eigen::Ref<const Eigen::MatrixXd>& samples,
              const std::vector<Dictionary>& dictionaries, const RadOptions& opts) {
  opts.validate();
  const auto N = static_cast<Eigen::Index>(dictionaries.size());
  if (N < 2) throw std::invalid_argument("RAD needs at least two features");
  std::vector<Eigen::Index> sizes;
  for (const auto& d : dictionaries) sizes.push_back(d.size());
  {
    const Partition part = balanced_partition(N);
    Eigen::Index rows = 0, cols = 0;
    for (Eigen::Index j : part.s1) rows += sizes[j];
    for (Eigen::Index k : part.s2) cols += sizes[k];
    if (opts.F > std::min(rows, cols))
      throw std::invalid_argument("rank F = " + std::to_string(opts.F) +
                                  " exceeds the assembled block dimensions " +
                                  std::to_string(rows) + "x" + std::to_string(cols) +
                                  "; mode factors will not be identifiable");
  }

  FitReport report;
  auto t0 = Clock::now();
  const SketchSystem sys = build_sketch_system(samples, dictionaries, opts);
  report.timings["sketch"] = seconds_since(t0);

  const std::size_t P = sys.sketches.size();
  t0 = Clock::now();
  std::vector<Eigen::MatrixXd> T(P);
  std::vector<std::vector<double>> traces(P);
  parallel_for(P, [&](std::size_t p) {
    T[p] = init_T(sys.sketches[p], *sys.operators[p], opts.inner, &traces[p]);
  });
  for (auto& tr : traces) {
    report.init_residuals.push_back(tr.back());
    report.t_traces.push_back(std::move(tr));
  }
  report.timings["init"] = seconds_since(t0);

  t0 = Clock::now();
  auto cores_of = [&] {
    PairCores cores;
    for (std::size_t p = 0; p < P; ++p) cores[{sys.sketches[p].j, sys.sketches[p].k}] = T[p];
    return cores;
  };
  ModeFactors x;
  for (int q = 0; q < opts.outer_iters; ++q) {
    AlternationSweep sweep;
    x = spa_step(cores_of(), sizes, opts.F, true, &sweep.spa_repaired);
    if (sweep.spa_repaired) ++report.degenerate_repairs;
    sweep.j2_after_spa = eval_J2(sys, T, x, opts.rho);
    traces.assign(P, {});
    parallel_for(P, [&](std::size_t p) {
      const PairSketch& sk = sys.sketches[p];
      T[p] = update_T(sk, *sys.operators[p], x.B[sk.j], x.B[sk.k], x.lambda, opts.rho,
                      opts.inner, T[p], &traces[p]);
    });
    for (auto& tr : traces) report.t_traces.push_back(std::move(tr));
    sweep.j2_after_update = eval_J2(sys, T, x, opts.rho);
    report.sweeps.push_back(sweep);
    report.j2_trace.push_back(sweep.j2_after_update);
    const auto q_count = report.j2_trace.size();
    if (q_count >= 2 &&
        std::abs(report.j2_trace[q_count - 1] - report.j2_trace[q_count - 2]) < opts.outer_tol)
      break;
  }
  report.timings["alternation"] = seconds_since(t0);

  t0 = Clock::now();
  const PairwiseObjective j1 = j1_objective(sys, opts.F);
  RefineResult refined = refine_factors(j1, x, opts.final);
  report.j1_trace = std::move(refined.trace);
  report.timings["refine"] = seconds_since(t0);

  report.model = CpdModel(dictionaries, std::move(refined.factors.B), std::move(refined.factors.lambda));
  return report;
}

void to_json(nlohmann::json& j, const PgdOptions& o) {
  j = {{"max_iters", o.max_iters}, {"tol", o.tol}, {"armijo_c", o.armijo_c},
       {"armijo_shrink", o.armijo_shrink}, {"eta0", o.eta0}};
}

void from_json(const nlohmann::json& j, PgdOptions& o) {
  PgdOptions d;
  o.max_iters = j.value("max_iters", d.max_iters);
  o.tol = j.value("tol", d.tol);
  o.armijo_c = j.value("armijo_c", d.armijo_c);
  o.armijo_shrink = j.value("armijo_shrink", d.armijo_shrink);
  o.eta0 = j.value("eta0", d.eta0);
  o.validate();
}

void to_json(nlohmann::json& j, const RadOptions& o) {
  j = {{"F", o.F},
       {"M", o.M},
       {"rho", o.rho},
       {"mc_samples", o.mc_samples},
       {"bins_per_direction", o.bins_per_direction},
       {"inner", o.inner},
       {"outer_iters", o.outer_iters},
       {"outer_tol", o.outer_tol},
       {"final", o.final},
       {"seed", o.seed},
       {"shared_dictionary", o.shared_dictionary},
       {"cache_dir", o.cache_dir.string()}};
}

void from_json(const nlohmann::json& j, RadOptions& o) {
  RadOptions d;
  o.F = j.value("F", d.F);
  o.M = j.value("M", d.M);
  o.rho = j.value("rho", d.rho);
  o.mc_samples = j.value("mc_samples", d.mc_samples);
  o.bins_per_direction = j.value("bins_per_direction", d.bins_per_direction);
  o.inner = j.contains("inner") ? j.at("inner").get<PgdOptions>() : d.inner;
  o.outer_iters = j.value("outer_iters", d.outer_iters);
  o.outer_tol = j.value("outer_tol", d.outer_tol);
  o.final = j.contains("final") ? j.at("final").get<PgdOptions>() : d.final;
  o.seed = j.value("seed", d.seed);
  o.shared_dictionary = j.value("shared_dictionary", d.shared_dictionary);
  o.cache_dir = j.value("cache_dir", std::string());
}

void to_json(nlohmann::json& j, const FitReport& r) {
  nlohmann::json sweeps = nlohmann::json::array();
  for (const auto& s : r.sweeps)
    sweeps.push_back({{"j2_after_spa", s.j2_after_spa},
                      {"j2_after_update", s.j2_after_update},
                      {"spa_repaired", s.spa_repaired}});
  j = {{"model", r.model},
       {"j1_trace", r.j1_trace},
       {"j2_trace", r.j2_trace},
       {"sweeps", std::move(sweeps)},
       {"init_residuals", r.init_residuals},
       {"timings", r.timings},
       {"degenerate_repairs", r.degenerate_repairs}};
}

}  // namespace cpdrad
