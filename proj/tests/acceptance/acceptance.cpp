// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "cpdrad/evaluation.hpp"
#include "cpdrad/experiment.hpp"
#include "cpdrad/gmm.hpp"
#include "cpdrad/jupad.hpp"
#include "cpdrad/parallel.hpp"
#include "cpdrad/rad_estimator.hpp"
#include "cpdrad/radon_sketch.hpp"
#include "cpdrad/simplex_opt.hpp"
#include "cpdrad/spa_nmf.hpp"

#ifndef CPDRAD_CONFIG_DIR
#error "CPDRAD_CONFIG_DIR must point at the configs directory"
#endif

using namespace cpdrad;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ExperimentConfig load_config(const std::string& name) {
  std::ifstream in(std::string(CPDRAD_CONFIG_DIR) + "/" + name);
  if (!in) throw std::runtime_error("cannot open config " + name);
  return nlohmann::json::parse(in).get<ExperimentConfig>();
}

Dictionary gauss_dict(Eigen::Index L, Rng& rng) {
  std::vector<Atom> atoms;
  for (Eigen::Index l = 0; l < L; ++l)
    atoms.push_back(Atom::gaussian(2 * uniform01(rng) - 1, 0.05 + 0.15 * uniform01(rng)));
  return Dictionary(atoms, FeatureKind::Continuous);
}

CpdModel separable_model(Eigen::Index N, Eigen::Index F, Eigen::Index L, Rng& rng) {
  std::vector<Dictionary> dicts;
  std::vector<Eigen::MatrixXd> B;
  for (Eigen::Index n = 0; n < N; ++n) {
    dicts.push_back(gauss_dict(L, rng));
    B.push_back(oracle::separable_factor(L, F, rng));
  }
  return CpdModel(dicts, B, 0.5 * dirichlet_uniform(F, rng) + Eigen::VectorXd::Constant(F, 0.5 / F));
}

DensityHandle gaussian_1d(double mu, double sd) {
  const Dictionary d({Atom::gaussian(mu, sd)}, FeatureKind::Continuous);
  return make_handle(CpdModel({d}, {Eigen::MatrixXd::Ones(1, 1)}, Eigen::VectorXd::Ones(1)));
}

// ---------------------------------------------------------------- criterion 1

Outcome oracle_suite() {
  Outcome out;

  Rng rng(101);
  double simplex_err = 0;
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index d = 1 + t % 4;
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = 4 * uniform01(rng) - 2;
    simplex_err = std::max(simplex_err,
                           (project_simplex(v) - oracle::project_simplex_bruteforce(v)).cwiseAbs().maxCoeff());
  }
  out.require(simplex_err < 1e-10, "project_simplex error " + fmt("%.3g", simplex_err));

  const CpdModel m = separable_model(3, 2, 3, rng);
  const Eigen::MatrixXd X = m.sample(3000, rng);
  RadOptions ro;
  ro.F = 2;
  ro.M = 6;
  ro.mc_samples = 20000;
  ro.seed = 7;
  const SketchSystem sys = build_sketch_system(X, m.dictionaries(), ro);
  const JupadProblem jp = build_jupad_problem(X, m.dictionaries(), 12);
  const PairwiseObjective jobj = jupad_objective(jp, 2);
  double j1_err = 0, jupad_err = 0;
  for (int t = 0; t < 5; ++t) {
    const ModeFactors x = oracle::random_factors(sys.sizes, 2, rng);
    j1_err = std::max(j1_err, oracle::fd_gradient_error([&](const ModeFactors& z) { return eval_J1(sys, z); },
                                                        grad_J1(sys, x), x));
    jupad_err = std::max(jupad_err, oracle::fd_gradient_error([&](const ModeFactors& z) { return jobj.value(z); },
                                                              jobj.gradient(x), x));
  }
  out.require(j1_err < 1e-5, "grad_J1 rel error " + fmt("%.3g", j1_err));
  out.require(jupad_err < 1e-5, "JUPAD gradient rel error " + fmt("%.3g", jupad_err));

  double factor_err = 0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index F = 1 + t % 4, N = 2 + t % 4;
    std::vector<Eigen::MatrixXd> B;
    std::vector<Eigen::Index> sizes;
    for (Eigen::Index n = 0; n < N; ++n) {
      const Eigen::Index L = std::min<Eigen::Index>(6, F + static_cast<Eigen::Index>(uniform01(rng) * (7 - F)));
      B.push_back(oracle::separable_factor(L, F, rng));
      sizes.push_back(L);
    }
    const Eigen::VectorXd lambda = 0.5 * dirichlet_uniform(F, rng) + Eigen::VectorXd::Constant(F, 0.5 / F);
    const BlockAssembly a = assemble(oracle::exact_cores(B, lambda), balanced_partition(N), sizes);
    factor_err = std::max(factor_err, oracle::factor_error(extract_factors(a, F), B, lambda));
  }
  out.require(factor_err < 1e-8, "extract_factors error " + fmt("%.3g", factor_err));

  const double s1 = 0.3, s2 = 0.15;
  const Dictionary g1({Atom::gaussian(0, s1)}, FeatureKind::Continuous);
  const Dictionary g2({Atom::gaussian(0, s2)}, FeatureKind::Continuous);
  ProjectionSet pg = directions_from_angles({0.0, 0.7, 1.4, 2.2});
  const int bins = 24;
  pg.edges.assign(pg.angles.size(), make_edges(std::vector<double>{-1.2, 1.2}, bins));
  const Eigen::Index S = 100000;
  const RadonMatrix Rg = radon_matrix(g1, g2, pg, S, 11);
  double worst_ratio = 0;
  for (Eigen::Index d = 0; d < pg.num_directions(); ++d) {
    const double th = pg.angles[d];
    const double sd = std::hypot(s1 * std::cos(th), s2 * std::sin(th));
    const Eigen::VectorXd masses = oracle::gaussian_bin_masses(pg.edges[d], 0, sd);
    const double l1 = (Rg.R.col(0).segment(pg.offset(d), bins) - masses).cwiseAbs().sum();
    worst_ratio = std::max(worst_ratio, l1 / (4 * std::sqrt(static_cast<double>(bins) / S)));
  }
  out.require(worst_ratio < 1, "radon column L1 at " + fmt("%.3g", worst_ratio) + " of bound");

  const DensityHandle p = gaussian_1d(0, 1);
  const DivergenceEstimate shift = kld_mc(p, gaussian_1d(1, 1), S, 2);
  const DivergenceEstimate wide = kld_mc(p, gaussian_1d(0, 2), S, 3);
  const double z_shift = std::abs(shift.value - 0.5) / shift.standard_error;
  const double z_wide = std::abs(wide.value - (std::log(2.0) + 1.0 / 8 - 0.5)) / wide.standard_error;
  out.require(z_shift < 3 && z_wide < 3, "kld_mc z-scores " + fmt("%.2f", z_shift) + ", " + fmt("%.2f", z_wide));
  if (out.pass)
    out.note("simplex " + fmt("%.1e", simplex_err) + ", grads " + fmt("%.1e", std::max(j1_err, jupad_err)) +
             ", factors " + fmt("%.1e", factor_err) + ", radon " + fmt("%.2f", worst_ratio) +
             " of bound, kld z " + fmt("%.2f", std::max(z_shift, z_wide)));
  return out;
}

// ---------------------------------------------------------------- criterion 2

struct TraceAudit {
  int fits = 0, traces = 0;
  std::vector<std::string> violations;

  void nonincreasing(const std::vector<double>& tr, const std::string& what) {
    ++traces;
    for (std::size_t i = 1; i < tr.size(); ++i)
      if (tr[i] > tr[i - 1]) {
        violations.push_back(what + " step " + std::to_string(i));
        return;
      }
  }
  void nondecreasing_em(const std::vector<double>& tr, const std::vector<std::size_t>& resets,
                        const std::string& what) {
    ++traces;
    for (std::size_t i = 1; i < tr.size(); ++i)
      if (std::find(resets.begin(), resets.end(), i) == resets.end() && tr[i] < tr[i - 1]) {
        violations.push_back(what + " iteration " + std::to_string(i));
        return;
      }
  }
  void rad(const FitReport& r, const std::string& what) {
    ++fits;
    nonincreasing(r.j1_trace, what + " J1");
    for (const auto& t : r.t_traces) nonincreasing(t, what + " T-solve");
    for (std::size_t q = 0; q < r.sweeps.size(); ++q) {
      ++traces;
      if (r.sweeps[q].j2_after_update > r.sweeps[q].j2_after_spa)
        violations.push_back(what + " J2 sweep " + std::to_string(q));
    }
  }
  // Sweep fits only carry the serialized report.
  void report_json(const nlohmann::json& j, const std::string& what) {
    ++fits;
    if (j.contains("j1_trace")) nonincreasing(j.at("j1_trace").get<std::vector<double>>(), what + " J1");
    if (j.contains("sweeps"))
      for (const auto& s : j.at("sweeps")) {
        ++traces;
        if (s.at("j2_after_update").get<double>() > s.at("j2_after_spa").get<double>())
          violations.push_back(what + " J2 sweep");
      }
  }
};

TraceAudit g_audit;

Outcome monotonicity_suite() {
  Rng rng(202);
  for (int t = 0; t < 10; ++t) {
    Eigen::MatrixXd A(20, 6);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = uniform01(rng);
    Eigen::VectorXd y(20);
    for (Eigen::Index i = 0; i < 20; ++i) y(i) = uniform01(rng);
    g_audit.nonincreasing(simplex_ls(A, y, PgdOptions{}).trace, "simplex_ls");
  }

  for (int t = 0; t < 2; ++t) {
    const CpdModel m = separable_model(4, 3, 5, rng);
    const Eigen::MatrixXd X = m.sample(5000, rng);
    RadOptions ro;
    ro.F = 3;
    ro.M = 6;
    ro.mc_samples = 20000;
    ro.seed = 30 + t;
    g_audit.rad(fit(X, m.dictionaries(), ro), "rad fit " + std::to_string(t));
    const FitReport jr = jupad_fit(X, m.dictionaries(), 3, 20, PgdOptions{}, 40 + t);
    ++g_audit.fits;
    g_audit.nonincreasing(jr.j1_trace, "jupad");
    for (auto kind : {CovarianceKind::Diagonal, CovarianceKind::Full}) {
      const GmmFit g = gmm_fit(X, 6, kind, GmmOptions{}, 50 + t);
      ++g_audit.fits;
      g_audit.nondecreasing_em(g.loglik_trace, g.reinit_at, "gmm " + to_string(kind));
    }
  }
  return {};
}

Outcome audit_outcome() {
  Outcome out;
  out.require(g_audit.violations.empty(),
              std::to_string(g_audit.violations.size()) + " violations" +
                  (g_audit.violations.empty() ? "" : ", first: " + g_audit.violations.front()));
  out.note(std::to_string(g_audit.fits) + " fits, " + std::to_string(g_audit.traces) + " traces checked");
  return out;
}

// ---------------------------------------------------------------- sweeps

const Aggregate* find(const std::vector<Aggregate>& aggs, const std::string& method, Eigen::Index K) {
  for (const auto& a : aggs)
    if (a.method == method && a.K == K) return &a;
  return nullptr;
}

std::string csv_of(const std::vector<TrialRecord>& records) {
  std::ostringstream os;
  write_csv(os, records);
  return os.str();
}

int count_failed(const std::vector<TrialRecord>& records) {
  return static_cast<int>(std::count_if(records.begin(), records.end(),
                                        [](const TrialRecord& r) { return r.status != "ok"; }));
}

Outcome recovery(const std::vector<TrialRecord>& records, const std::vector<Eigen::Index>& K_grid) {
  Outcome out;
  const auto aggs = summarize(records);
  std::string trend;
  const Aggregate* prev = nullptr;
  for (Eigen::Index K : K_grid) {
    const Aggregate* a = find(aggs, "rad_star", K);
    if (!a || a->count < 1) {
      out.require(false, "no rad_star results at K=" + std::to_string(K));
      return out;
    }
    trend += (trend.empty() ? "" : " ") + fmt("%.4f", a->mean);
    if (prev) {
      const double pooled = std::sqrt(prev->sd * prev->sd / prev->count + a->sd * a->sd / a->count);
      out.require(a->mean <= prev->mean + pooled,
                  "JSD rises from K=" + std::to_string(prev->K) + " to K=" + std::to_string(K));
    }
    prev = a;
  }
  out.require(prev->count == 4, "expected 4 ok trials at the largest K");
  out.require(prev->mean < 0.05, "RAD* mean JSD " + fmt("%.4f", prev->mean) + " >= 0.05");
  out.note("RAD* mean JSD by K: " + trend);
  return out;
}

void check_ordering(Outcome& out, const std::vector<TrialRecord>& records, const std::string& family) {
  const auto aggs = summarize(records);
  const Eigen::Index K = 8000;
  const Aggregate* star = find(aggs, "rad_star", K);
  const Aggregate* rad = find(aggs, "rad", K);
  const Aggregate* jupad = find(aggs, "jupad", K);
  const Aggregate* gdiag = find(aggs, "gmm_diag", K);
  if (!star || !rad || !jupad || !gdiag) {
    out.require(false, family + ": missing methods");
    return;
  }
  for (const Aggregate* a : {star, rad, jupad, gdiag})
    out.require(a->count == 4, family + " " + a->method + ": " + std::to_string(a->count) + " ok trials");
  out.note(family + " RAD*=" + fmt("%.4f", star->mean) + " RAD=" + fmt("%.4f", rad->mean) +
           " JUPAD=" + fmt("%.4f", jupad->mean) + " GMM-Diag=" + fmt("%.4f", gdiag->mean));
  out.require(star->mean <= rad->mean, family + ": RAD* > RAD");
  out.require(rad->mean < jupad->mean, family + ": RAD >= JUPAD");
  out.require(rad->mean < gdiag->mean, family + ": RAD >= GMM-Diag");
}

Outcome mixed_family() {
  Outcome out;
  ExperimentConfig cfg = load_config("desk_mixed_discrete.json");
  const Eigen::Index K = 10000;

  // GMM-only configs are rejected outright.
  {
    ExperimentConfig gmm_only = cfg;
    gmm_only.methods = {Method::Gmm, Method::GmmDiag};
    bool refused = false;
    try {
      gmm_only.validate();
    } catch (const ConfigError&) {
      refused = true;
    }
    out.require(refused, "GMM-only config accepted");
  }

  // In a mixed sweep the GMM rows are excluded.
  cfg.K_grid = {K};
  cfg.methods = {Method::RadStar, Method::Gmm, Method::GmmDiag};
  const auto records = run_sweep(cfg);
  int excluded = 0;
  for (const auto& r : records)
    if (is_gmm(method_from_string(r.method))) {
      out.require(r.status == "excluded", "GMM row has status " + r.status);
      ++excluded;
    } else {
      out.require(r.status == "ok", "rad_star trial " + std::to_string(r.trial) + ": " + r.status);
    }
  out.require(excluded == 2 * cfg.trials, "expected excluded GMM rows");
  const auto aggs = summarize(records);
  const Aggregate* star = find(aggs, "rad_star", K);
  out.require(star && star->mean < 0.1, "RAD* mean JSD " + fmt("%.4f", star ? star->mean : NAN));

  // Discrete supports of the RAD* fits, redone with the sweep's seeds.
  const FamilyParams params = cfg.family.resolved();
  const std::set<double> support(std::begin(kDiscreteSupport), std::end(kDiscreteSupport));
  int checked = 0;
  for (int t = 0; t < cfg.trials; ++t) {
    const auto ut = static_cast<std::uint64_t>(t);
    Rng model_rng = substream(cfg.seed, {10, ut});
    const CpdModel truth = gen_family(params, model_rng);
    Rng data_rng = substream(cfg.seed, {11, ut});
    const Eigen::MatrixXd X = truth.sample(K, data_rng);
    for (Method method : {Method::RadStar, Method::Rad}) {
      const auto seed = derive_seed(cfg.seed, {12, ut, static_cast<std::uint64_t>(K),
                                               static_cast<std::uint64_t>(method)});
      const MethodFit mf = fit_method(method, X, truth.dictionaries(), cfg, seed);
      g_audit.report_json(mf.report, to_string(method) + " mixed trial " + std::to_string(t));
      for (Eigen::Index n = 0; n < mf.cpd.num_features(); ++n) {
        const Dictionary& d = mf.cpd.dictionary(n);
        if (d.kind() != FeatureKind::Discrete) continue;
        std::set<double> atoms;
        for (const auto& a : d.atoms()) atoms.insert(a.location);
        // Atoms the fit puts weight on must lie in the support.
        std::set<double> used;
        const Eigen::VectorXd marginal = mf.cpd.weights(n) * mf.cpd.mixture();
        for (Eigen::Index l = 0; l < d.size(); ++l)
          if (marginal(l) > 0) used.insert(d[l].location);
        const bool ok = atoms == support && std::includes(support.begin(), support.end(), used.begin(), used.end());
        out.require(ok, to_string(method) + " trial " + std::to_string(t) + " feature " + std::to_string(n) +
                            " support mismatch");
        ++checked;
      }
    }
  }
  out.require(checked == 2 * cfg.trials * params.N_discrete, "wrong number of discrete features checked");
  if (star) out.note("RAD* mean JSD " + fmt("%.4f", star->mean) + ", " + std::to_string(checked) + " supports exact");
  return out;
}

struct Line {
  int id;
  std::string name;
  Outcome outcome;
  double seconds;
};

template <typename Fn>
Line run(int id, const std::string& name, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "[%s done in %.0f s]\n", name.c_str(), s);
  return {id, name, o, s};
}

}  // namespace

int main() {
  std::vector<Line> lines;
  lines.push_back(run(1, "oracle suite", oracle_suite));

  // Fits from the following sections feed the monotonicity audit.
  const Line mono_own = run(2, "monotonicity (own fits)", monotonicity_suite);

  std::vector<TrialRecord> gauss, gauss_threaded, laplace;
  ExperimentConfig gcfg;
  const Line sweeps = run(6, "sweeps", [&] {
    Outcome o;
    gcfg = load_config("desk_gaussian.json");
    set_num_threads(1);
    gauss = run_sweep(gcfg);
    set_num_threads(3);
    gauss_threaded = run_sweep(gcfg);
    set_num_threads(0);
    ExperimentConfig lcfg = load_config("desk_laplacian.json");
    lcfg.K_grid = {8000};
    laplace = run_sweep(lcfg);
    return o;
  });

  const Line mixed = run(5, "mixed family", mixed_family);

  Outcome mono = audit_outcome();
  if (!mono_own.outcome.pass) mono.require(false, mono_own.outcome.detail);
  lines.push_back({2, "monotonicity", mono, mono_own.seconds});

  lines.push_back(run(3, "end-to-end recovery", [&] {
    if (!sweeps.outcome.pass) return sweeps.outcome;
    Outcome o = recovery(gauss, gcfg.K_grid);
    const int bad = count_failed(gauss);
    o.require(bad == 0, std::to_string(bad) + " gaussian sweep rows not ok");
    return o;
  }));

  lines.push_back(run(4, "method ordering", [&] {
    if (!sweeps.outcome.pass) return sweeps.outcome;
    Outcome o;
    check_ordering(o, gauss, "gaussian");
    check_ordering(o, laplace, "laplacian");
    return o;
  }));

  lines.push_back(mixed);

  lines.push_back(run(6, "determinism", [&] {
    if (!sweeps.outcome.pass) return sweeps.outcome;
    Outcome o;
    const std::string a = csv_of(gauss), b = csv_of(gauss_threaded);
    o.require(a == b, "CSV differs between 1 and 3 threads");
    o.note(std::to_string(gauss.size()) + " rows, " + std::to_string(a.size()) + " bytes");
    return o;
  }));

  std::sort(lines.begin(), lines.end(), [](const Line& x, const Line& y) { return x.id < y.id; });
  bool all = true;
  for (const auto& l : lines) {
    std::printf("%s criterion %d (%s): %s\n", l.outcome.pass ? "PASS" : "FAIL", l.id, l.name.c_str(),
                l.outcome.detail.c_str());
    all = all && l.outcome.pass;
  }
  return all ? 0 : 1;
}
