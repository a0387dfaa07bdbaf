#include "cpdrad/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "cpdrad/evaluation.hpp"
#include "cpdrad/jupad.hpp"
#include "cpdrad/parallel.hpp"

namespace cpdrad {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename E>
E lookup(const std::vector<std::pair<E, std::string>>& table, const std::string& s,
         const char* what) {
  for (const auto& [e, name] : table)
    if (name == s) return e;
  throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
}

const std::vector<std::pair<Family, std::string>>& family_names() {
  static const std::vector<std::pair<Family, std::string>> t = {
      {Family::Gaussian, "gaussian"},
      {Family::Laplacian, "laplacian"},
      {Family::MixedGL, "mixed_gl"},
      {Family::MixedDiscrete, "mixed_discrete"}};
  return t;
}

const std::vector<std::pair<Method, std::string>>& method_names() {
  static const std::vector<std::pair<Method, std::string>> t = {{Method::RadStar, "rad_star"},
                                                                {Method::Rad, "rad"},
                                                                {Method::Jupad, "jupad"},
                                                                {Method::Gmm, "gmm"},
                                                                {Method::GmmDiag, "gmm_diag"}};
  return t;
}

bool all_equal(const std::vector<Dictionary>& dicts) {
  return std::all_of(dicts.begin(), dicts.end(), [&](const Dictionary& d) { return d == dicts.front(); });
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

std::string to_string(Family f) {
  for (const auto& [e, name] : family_names())
    if (e == f) return name;
  return "?";
}

std::string to_string(Method m) {
  for (const auto& [e, name] : method_names())
    if (e == m) return name;
  return "?";
}

Family family_from_string(const std::string& s) { return lookup(family_names(), s, "family"); }
Method method_from_string(const std::string& s) { return lookup(method_names(), s, "method"); }
bool is_gmm(Method m) { return m == Method::Gmm || m == Method::GmmDiag; }

FamilyParams FamilyParams::resolved() const {
  FamilyParams p = *this;
  struct Defaults { Eigen::Index N, F, L, N_discrete; };
  const Defaults d = [&]() -> Defaults {
    switch (family) {
      case Family::Gaussian: return {8, 25, 10, 0};
      case Family::Laplacian: return {6, 7, 10, 0};
      case Family::MixedGL: return {5, 9, 12, 0};
      case Family::MixedDiscrete: return {7, 13, 8, 3};
    }
    return {0, 0, 0, 0};
  }();
  if (p.N == 0) p.N = d.N;
  if (p.F == 0) p.F = d.F;
  if (p.L == 0) p.L = d.L;
  if (p.N_discrete < 0) p.N_discrete = d.N_discrete;
  if (p.N < 2) throw ConfigError("family: need N >= 2");
  if (p.F < 1) throw ConfigError("family: need F >= 1");
  if (p.L < 1) throw ConfigError("family: need L >= 1");
  if (family != Family::MixedDiscrete && p.N_discrete != 0)
    throw ConfigError("family: N_discrete applies to mixed_discrete only");
  if (p.N_discrete < 0 || p.N_discrete > p.N)
    throw ConfigError("family: N_discrete out of range");
  return p;
}

CpdModel gen_family(const FamilyParams& params, Rng& rng) {
  const FamilyParams p = params.resolved();
  const Eigen::Index n_cont = p.N - p.N_discrete;
  const bool mixed_atoms = p.family == Family::MixedGL || p.family == Family::MixedDiscrete;

  std::vector<Atom> atoms;
  for (Eigen::Index l = 0; l < p.L; ++l) {
    const double mu = -1.0 + 2.0 * uniform01(rng);
    const double sigma = 0.05 + 0.15 * uniform01(rng);
    const bool laplace = p.family == Family::Laplacian || (mixed_atoms && l < p.L / 2);
    atoms.push_back(laplace ? Atom::laplacian(mu, sigma) : Atom::gaussian(mu, sigma));
  }
  const Dictionary continuous(atoms, FeatureKind::Continuous);
  std::vector<Atom> masses;
  for (double v : kDiscreteSupport) masses.push_back(Atom::point_mass(v));
  const Dictionary discrete(masses, FeatureKind::Discrete);

  std::vector<Dictionary> dicts;
  std::vector<Eigen::MatrixXd> B;
  for (Eigen::Index n = 0; n < p.N; ++n) {
    dicts.push_back(n < n_cont ? continuous : discrete);
    Eigen::MatrixXd Bn(dicts.back().size(), p.F);
    for (Eigen::Index r = 0; r < p.F; ++r) Bn.col(r) = dirichlet_uniform(Bn.rows(), rng);
    B.push_back(std::move(Bn));
  }
  Eigen::VectorXd lambda = dirichlet_uniform(p.F, rng);
  return CpdModel(std::move(dicts), std::move(B), std::move(lambda));
}

void ExperimentConfig::validate() const {
  const FamilyParams p = family.resolved();
  if (K_grid.empty()) throw ConfigError("K_grid must be nonempty");
  for (std::size_t i = 0; i < K_grid.size(); ++i) {
    if (K_grid[i] < 2) throw ConfigError("K_grid entries must be at least 2");
    if (i > 0 && K_grid[i] <= K_grid[i - 1]) throw ConfigError("K_grid must be strictly ascending");
  }
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (methods.empty()) throw ConfigError("methods must be nonempty");
  if (std::set<Method>(methods.begin(), methods.end()).size() != methods.size())
    throw ConfigError("methods must not repeat");
  if (eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
  if (proposed_atoms < 0) throw ConfigError("rad.proposed_atoms must be >= 0");
  if (jupad.n_bins < 1) throw ConfigError("jupad.n_bins must be >= 1");
  if (gmm.grid.empty()) throw ConfigError("gmm.grid must be nonempty");
  for (Eigen::Index c : gmm.grid)
    if (c < 1) throw ConfigError("gmm.grid entries must be >= 1");
  if (p.N_discrete > 0 && std::all_of(methods.begin(), methods.end(), is_gmm))
    throw ConfigError("GMM methods cannot represent discrete features; family " +
                      to_string(family.family) + " needs a CPD method");
  try {
    RadOptions r = rad;
    r.F = p.F;
    r.validate();
    jupad.pgd.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(gmm.options.tol > 0.0) || gmm.options.max_iters < 1 || !(gmm.options.variance_floor > 0.0))
    throw ConfigError("invalid gmm options");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json rad = c.rad;
  rad.erase("F");
  rad.erase("seed");
  rad["proposed_atoms"] = c.proposed_atoms;
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.push_back(to_string(m));
  j = {{"family", to_string(c.family.family)},
       {"N", c.family.N},
       {"F", c.family.F},
       {"L", c.family.L},
       {"N_discrete", c.family.N_discrete},
       {"K_grid", c.K_grid},
       {"trials", c.trials},
       {"methods", methods},
       {"eval_samples", c.eval_samples},
       {"seed", c.seed},
       {"record_timings", c.record_timings},
       {"rad", rad},
       {"jupad", {{"n_bins", c.jupad.n_bins}, {"pgd", c.jupad.pgd}}},
       {"gmm",
        {{"grid", c.gmm.grid},
         {"max_iters", c.gmm.options.max_iters},
         {"tol", c.gmm.options.tol},
         {"variance_floor", c.gmm.options.variance_floor}}}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::set<std::string> known = {"family", "N", "F", "L", "N_discrete", "K_grid",
                                              "trials", "methods", "eval_samples", "seed",
                                              "record_timings", "rad", "jupad", "gmm"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config field '" + key + "'");
  ExperimentConfig d;
  try {
    d.family.family = family_from_string(j.at("family").get<std::string>());
    d.family.N = j.value("N", d.family.N);
    d.family.F = j.value("F", d.family.F);
    d.family.L = j.value("L", d.family.L);
    d.family.N_discrete = j.value("N_discrete", d.family.N_discrete);
    d.K_grid = j.value("K_grid", d.K_grid);
    d.trials = j.value("trials", d.trials);
    if (j.contains("methods")) {
      d.methods.clear();
      for (const auto& m : j.at("methods")) d.methods.push_back(method_from_string(m.get<std::string>()));
    }
    d.eval_samples = j.value("eval_samples", d.eval_samples);
    d.seed = j.value("seed", d.seed);
    d.record_timings = j.value("record_timings", d.record_timings);
    if (j.contains("rad")) {
      nlohmann::json rad = j.at("rad");
      d.proposed_atoms = rad.value("proposed_atoms", d.proposed_atoms);
      rad.erase("proposed_atoms");
      d.rad = rad.get<RadOptions>();
    }
    if (j.contains("jupad")) {
      const auto& jp = j.at("jupad");
      d.jupad.n_bins = jp.value("n_bins", d.jupad.n_bins);
      if (jp.contains("pgd")) d.jupad.pgd = jp.at("pgd").get<PgdOptions>();
    }
    if (j.contains("gmm")) {
      const auto& g = j.at("gmm");
      d.gmm.grid = g.value("grid", d.gmm.grid);
      d.gmm.options.max_iters = g.value("max_iters", d.gmm.options.max_iters);
      d.gmm.options.tol = g.value("tol", d.gmm.options.tol);
      d.gmm.options.variance_floor = g.value("variance_floor", d.gmm.options.variance_floor);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  d.validate();
  c = std::move(d);
}

std::vector<Dictionary> propose_dictionaries(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                             const std::vector<Dictionary>& kinds_from,
                                             int proposed_atoms) {
  const Eigen::Index N = samples.cols();
  if (!kinds_from.empty() && static_cast<Eigen::Index>(kinds_from.size()) != N)
    throw std::invalid_argument("propose_dictionaries: one reference dictionary per feature");
  if (kinds_from.empty() && proposed_atoms < 1)
    throw std::invalid_argument("propose_dictionaries: atom count needed without a reference");
  std::vector<Dictionary> out;
  for (Eigen::Index n = 0; n < N; ++n) {
    const FeatureKind kind = kinds_from.empty() ? FeatureKind::Continuous : kinds_from[n].kind();
    Eigen::Index L = proposed_atoms > 0 ? proposed_atoms : kinds_from[n].size();
    const Eigen::VectorXd col = samples.col(n);
    std::vector<double> values(col.data(), col.data() + col.size());
    if (kind == FeatureKind::Discrete) {
      const auto distinct = static_cast<Eigen::Index>(std::set<double>(values.begin(), values.end()).size());
      L = std::min(L, distinct);
    }
    out.push_back(dictionary_propose(values, static_cast<int>(L), kind));
  }
  return out;
}

MethodFit fit_method(Method method, const Eigen::Ref<const Eigen::MatrixXd>& samples,
                     const std::vector<Dictionary>& true_dictionaries, const ExperimentConfig& cfg,
                     std::uint64_t seed) {
  const Eigen::Index F = cfg.family.resolved().F;
  MethodFit out;
  auto run_rad = [&](const std::vector<Dictionary>& dicts) {
    RadOptions opts = cfg.rad;
    opts.F = F;
    opts.seed = seed;
    opts.shared_dictionary = opts.shared_dictionary && all_equal(dicts);
    FitReport rep = fit(samples, dicts, opts);
    out.cpd = rep.model;
    out.report = rep;
  };
  switch (method) {
    case Method::RadStar:
      run_rad(true_dictionaries);
      break;
    case Method::Rad:
      run_rad(propose_dictionaries(samples, true_dictionaries, cfg.proposed_atoms));
      break;
    case Method::Jupad: {
      FitReport rep = jupad_fit(samples, true_dictionaries, F, cfg.jupad.n_bins, cfg.jupad.pgd, seed);
      out.cpd = rep.model;
      out.report = rep;
      break;
    }
    case Method::Gmm:
    case Method::GmmDiag: {
      const auto kind = method == Method::Gmm ? CovarianceKind::Full : CovarianceKind::Diagonal;
      GmmSelection sel = gmm_select(samples, cfg.gmm.grid, kind, cfg.gmm.options, seed);
      out.is_gmm = true;
      out.gmm = sel.fit.model;
      out.components = sel.components;
      nlohmann::json nll = nlohmann::json::array();
      for (const auto& [c, v] : sel.validation_nll) nll.push_back({c, v});
      out.report = {{"model", out.gmm},
                    {"components", sel.components},
                    {"validation_nll", nll},
                    {"loglik_trace", sel.fit.loglik_trace},
                    {"reinitializations", sel.fit.reinitializations},
                    {"converged", sel.fit.converged}};
      break;
    }
  }
  return out;
}

std::vector<TrialRecord> run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const FamilyParams params = cfg.family.resolved();
  const Eigen::Index K_max = cfg.K_grid.back();
  const auto T = static_cast<std::size_t>(cfg.trials);

  std::vector<CpdModel> truths(T);
  std::vector<Eigen::MatrixXd> pools(T);
  parallel_for(T, [&](std::size_t t) {
    Rng model_rng = substream(cfg.seed, {10, t});
    truths[t] = gen_family(params, model_rng);
    Rng data_rng = substream(cfg.seed, {11, t});
    pools[t] = truths[t].sample(K_max, data_rng);
  });

  const std::size_t nK = cfg.K_grid.size(), nM = cfg.methods.size();
  std::vector<TrialRecord> records(T * nK * nM);
  parallel_for(records.size(), [&](std::size_t cell) {
    const std::size_t t = cell / (nK * nM), ki = (cell / nM) % nK, mi = cell % nM;
    const Method method = cfg.methods[mi];
    const Eigen::Index K = cfg.K_grid[ki];
    TrialRecord& rec = records[cell];
    rec.family = to_string(params.family);
    rec.method = to_string(method);
    rec.K = K;
    rec.trial = static_cast<int>(t);
    rec.rank = params.F;
    if (is_gmm(method) && params.N_discrete > 0) {
      rec.jsd = rec.jsd_se = kNaN;
      rec.status = "excluded";
      rec.message = "GMM cannot represent discrete features";
      return;
    }
    const auto fit_seed = derive_seed(cfg.seed, {12, t, static_cast<std::uint64_t>(K),
                                                 static_cast<std::uint64_t>(method)});
    std::string phase = "fit";
    try {
      const auto t0 = std::chrono::steady_clock::now();
      const MethodFit mf = fit_method(method, pools[t].topRows(K), truths[t].dictionaries(), cfg, fit_seed);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rec.fit_seconds = cfg.record_timings ? secs : 0.0;
      rec.components = mf.components;
      phase = "eval";
      // Common evaluation samples from the truth across methods in a cell.
      const auto eval_seed = derive_seed(cfg.seed, {13, t, static_cast<std::uint64_t>(K)});
      const DensityHandle truth = make_handle(truths[t]);
      const DensityHandle fitted = mf.is_gmm ? make_handle(mf.gmm) : make_handle(mf.cpd);
      const DivergenceEstimate est = jsd_mc(truth, fitted, cfg.eval_samples, eval_seed);
      rec.jsd = est.value;
      rec.jsd_se = est.standard_error;
      rec.floor_flagged = est.flagged;
    } catch (const std::exception& e) {
      rec.jsd = rec.jsd_se = kNaN;
      rec.status = "failed:" + phase;
      rec.message = e.what();
    }
  });
  return records;
}

std::vector<Aggregate> summarize(const std::vector<TrialRecord>& records) {
  std::vector<Aggregate> out;
  std::map<std::tuple<std::string, std::string, Eigen::Index>, std::vector<double>> values;
  for (const auto& r : records) {
    const auto key = std::make_tuple(r.family, r.method, r.K);
    if (!values.count(key)) {
      values[key];
      out.push_back({r.family, r.method, r.K, 0.0, 0.0, 0});
    }
    if (r.status == "ok") values[key].push_back(r.jsd);
  }
  for (auto& a : out) {
    const auto& v = values[std::make_tuple(a.family, a.method, a.K)];
    a.count = static_cast<int>(v.size());
    if (v.empty()) {
      a.mean = a.sd = kNaN;
      continue;
    }
    double sum = 0.0;
    for (double x : v) sum += x;
    a.mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  }
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << "family,method,K,trial,jsd,jsd_se,fit_seconds,status\n";
  for (const auto& r : records)
    os << r.family << ',' << r.method << ',' << r.K << ',' << r.trial << ',' << format_double(r.jsd)
       << ',' << format_double(r.jsd_se) << ',' << format_double(r.fit_seconds) << ','
       << one_line(r.status) << '\n';
}

std::vector<TrialRecord> parse_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "family,method,K,trial,jsd,jsd_se,fit_seconds,status")
    throw std::runtime_error("results CSV: unexpected header");
  std::vector<TrialRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw std::runtime_error("results CSV: expected 8 fields in '" + line + "'");
    TrialRecord r;
    r.family = f[0];
    r.method = f[1];
    r.K = std::stoll(f[2]);
    r.trial = std::stoi(f[3]);
    r.jsd = std::strtod(f[4].c_str(), nullptr);
    r.jsd_se = std::strtod(f[5].c_str(), nullptr);
    r.fit_seconds = std::strtod(f[6].c_str(), nullptr);
    r.status = f[7];
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json summary_json(const std::vector<TrialRecord>& records) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json aggs = nlohmann::json::array();
  for (const auto& a : summarize(records))
    aggs.push_back({{"family", a.family}, {"method", a.method}, {"K", a.K},
                    {"mean", num(a.mean)}, {"sd", num(a.sd)}, {"count", a.count}});
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json row = {{"family", r.family}, {"method", r.method}, {"K", r.K},
                          {"trial", r.trial}, {"jsd", num(r.jsd)}, {"jsd_se", num(r.jsd_se)},
                          {"fit_seconds", r.fit_seconds}, {"status", r.status},
                          {"rank", r.rank}, {"floor_flagged", r.floor_flagged}};
    if (r.components > 0) row["components"] = r.components;
    if (!r.message.empty()) row["message"] = r.message;
    rows.push_back(std::move(row));
  }
  return {{"aggregates", aggs}, {"records", rows}};
}

void emit_results(const std::filesystem::path& out_dir, const std::vector<TrialRecord>& records) {
  if (records.empty()) throw std::invalid_argument("emit_results: no records");
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "results.csv", std::ios::binary);
  write_csv(csv, records);
  std::ofstream js(out_dir / "summary.json", std::ios::binary);
  js << summary_json(records).dump(2) << '\n';
  if (!csv || !js) throw std::runtime_error("emit_results: write failed in " + out_dir.string());
}

void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& X) {
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) os << (c ? "," : "") << format_double(X(i, c));
    os << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      row.push_back(std::strtod(cell.c_str(), &end));
      if (end == cell.c_str()) throw std::runtime_error("matrix CSV: bad number '" + cell + "'");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("matrix CSV: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("matrix CSV: no rows");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c) X(i, c) = rows[i][c];
  return X;
}

}  // namespace cpdrad
