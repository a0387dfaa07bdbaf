// Command-line front end: gen, fit, sweep and eval.
//
// Exit codes: 0 success, 1 I/O or other error, 2 configuration error,
// 3 numerical failure (the phase is named on stderr).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cpdrad/evaluation.hpp"
#include "cpdrad/experiment.hpp"
#include "cpdrad/parallel.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cpdrad;

namespace {

struct NumericalFailure : std::runtime_error {
  NumericalFailure(const std::string& phase, const std::string& what)
      : std::runtime_error(phase + ": " + what) {}
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Fn>
auto phase(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const IoError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw NumericalFailure(name, e.what());
  }
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

Eigen::MatrixXd read_samples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_matrix_csv(in);
  } catch (const std::runtime_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

struct Common {
  std::string config, out = ".", method, family;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

ExperimentConfig load_config(const Common& c) {
  nlohmann::json j = c.config.empty() ? nlohmann::json::object() : read_json(c.config);
  if (!c.family.empty()) j["family"] = c.family;
  if (!j.contains("family")) throw ConfigError("a family is required (--family or config)");
  if (c.seed) j["seed"] = *c.seed;
  if (!c.method.empty()) j["methods"] = {c.method};
  return j.get<ExperimentConfig>();
}

DensityHandle load_density(const fs::path& path) {
  const nlohmann::json j = read_json(path);
  const std::string type = j.value("type", "");
  if (type == "cpd") return make_handle(j.get<CpdModel>());
  if (type == "gmm") return make_handle(j.get<GmmModel>());
  throw ConfigError(path.string() + ": unknown model type '" + type + "'");
}

int run(int argc, char** argv) {
  CLI::App app{"Low-rank mixture density estimation from projection sketches"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "experiment config JSON");
    sub->add_option("--seed", c.seed, "master seed (overrides the config)");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--threads", c.threads, "worker threads (0: hardware)");
    sub->add_option("--family", c.family, "gaussian, laplacian, mixed_gl or mixed_discrete");
  };

  auto* gen = app.add_subcommand("gen", "sample a synthetic truth model and dataset");
  add_common(gen);
  Eigen::Index gen_samples = 0;
  int gen_trial = 0;
  gen->add_option("--samples", gen_samples, "sample count (default: largest K in the grid)");
  gen->add_option("--trial", gen_trial, "trial index whose truth is generated");

  auto* fitc = app.add_subcommand("fit", "fit one method to one dataset");
  add_common(fitc);
  std::string data, truth_path;
  fitc->add_option("--method", c.method, "rad_star, rad, jupad, gmm or gmm_diag")->required();
  fitc->add_option("--data", data, "samples CSV")->required();
  fitc->add_option("--truth", truth_path, "truth model JSON (dictionaries and feature kinds)");

  auto* sweep = app.add_subcommand("sweep", "run a full experiment and write results.csv");
  add_common(sweep);
  sweep->add_option("--method", c.method, "restrict to one method");

  auto* eval = app.add_subcommand("eval", "JSD between two serialized models");
  std::string model_a, model_b;
  Eigen::Index eval_samples = 100000;
  std::uint64_t eval_seed = 0;
  eval->add_option("--truth", model_a, "first model JSON")->required();
  eval->add_option("--model", model_b, "second model JSON")->required();
  eval->add_option("--samples", eval_samples, "Monte Carlo samples per term");
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--threads", c.threads, "worker threads (0: hardware)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  set_num_threads(c.threads);

  if (*gen) {
    const ExperimentConfig cfg = load_config(c);
    const Eigen::Index count = gen_samples > 0 ? gen_samples : cfg.K_grid.back();
    Rng model_rng = substream(cfg.seed, {10, static_cast<std::uint64_t>(gen_trial)});
    const CpdModel truth = gen_family(cfg.family, model_rng);
    Rng data_rng = substream(cfg.seed, {11, static_cast<std::uint64_t>(gen_trial)});
    const Eigen::MatrixXd X = truth.sample(count, data_rng);
    fs::create_directories(c.out);
    write_json(fs::path(c.out) / "truth.json", truth);
    std::ofstream out(fs::path(c.out) / "samples.csv", std::ios::binary);
    write_matrix_csv(out, X);
    if (!out) throw IoError("cannot write samples.csv");
    return 0;
  }

  if (*fitc) {
    nlohmann::json j = c.config.empty() ? nlohmann::json::object() : read_json(c.config);
    if (!c.family.empty()) j["family"] = c.family;
    if (!j.contains("family")) j["family"] = "gaussian";  // only the F/L overrides matter here
    if (c.seed) j["seed"] = *c.seed;
    j["methods"] = {c.method};
    const auto cfg = j.get<ExperimentConfig>();
    const Method method = cfg.methods.front();
    const Eigen::MatrixXd X = read_samples(data);
    std::vector<Dictionary> dicts;
    if (!truth_path.empty()) dicts = read_json(truth_path).get<CpdModel>().dictionaries();
    if (dicts.empty() && (method == Method::RadStar || method == Method::Jupad))
      throw ConfigError(c.method + " needs --truth for its dictionaries");
    if (dicts.empty() && method == Method::Rad && cfg.proposed_atoms < 1)
      throw ConfigError("rad without --truth needs rad.proposed_atoms > 0");
    if (!dicts.empty() && static_cast<Eigen::Index>(dicts.size()) != X.cols())
      throw ConfigError("truth model and data disagree on the number of features");
    const MethodFit mf = phase("fit", [&] { return fit_method(method, X, dicts, cfg, cfg.seed); });
    fs::create_directories(c.out);
    if (mf.is_gmm) write_json(fs::path(c.out) / "model.json", mf.gmm);
    else write_json(fs::path(c.out) / "model.json", mf.cpd);
    write_json(fs::path(c.out) / "report.json", mf.report);
    return 0;
  }

  if (*sweep) {
    const ExperimentConfig cfg = load_config(c);
    const auto records = run_sweep(cfg);
    for (const auto& r : records)
      if (r.status.rfind("failed", 0) == 0)
        std::cerr << "warning: " << r.method << " K=" << r.K << " trial=" << r.trial << " "
                  << r.status << ": " << r.message << '\n';
    try {
      emit_results(c.out, records);
    } catch (const std::exception& e) {
      throw IoError(e.what());
    }
    for (const auto& a : summarize(records))
      std::cout << a.family << ' ' << a.method << " K=" << a.K << " jsd=" << format_double(a.mean)
                << " sd=" << format_double(a.sd) << " n=" << a.count << '\n';
    return 0;
  }

  if (*eval) {
    const DensityHandle P = load_density(model_a), Q = load_density(model_b);
    const DivergenceEstimate est = phase("eval", [&] { return jsd_mc(P, Q, eval_samples, eval_seed); });
    std::cout << nlohmann::json{{"jsd", est.value},
                                {"standard_error", est.standard_error},
                                {"floored", est.floored},
                                {"flagged", est.flagged}}
                     .dump()
              << '\n';
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure in " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
