#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpdrad/cpd_model.hpp"
#include "cpdrad/gmm.hpp"
#include "cpdrad/rad_estimator.hpp"
#include "json.hpp"

namespace cpdrad {

/// Invalid or inconsistent experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Family { Gaussian, Laplacian, MixedGL, MixedDiscrete };
enum class Method { RadStar, Rad, Jupad, Gmm, GmmDiag };

std::string to_string(Family f);
std::string to_string(Method m);
Family family_from_string(const std::string& s);
Method method_from_string(const std::string& s);
bool is_gmm(Method m);

/// Support of the discrete features of the mixed_discrete family.
inline constexpr double kDiscreteSupport[] = {-1.5, -0.5, 0.5, 1.5};

struct FamilyParams {
  Family family = Family::Gaussian;
  Eigen::Index N = 0, F = 0, L = 0;  ///< 0 selects the family default
  Eigen::Index N_discrete = -1;      ///< mixed_discrete only; -1 selects the default

  /// Fills the defaults and checks consistency.
  [[nodiscard]] FamilyParams resolved() const;
};

/// Random truth model: one shared continuous dictionary (locations
/// U(-1, 1), spreads U(0.05, 0.2)), Dirichlet(1) weight columns and mixture.
CpdModel gen_family(const FamilyParams& params, Rng& rng);

struct JupadConfig {
  int n_bins = 50;
  PgdOptions pgd;
};

struct GmmConfig {
  std::vector<Eigen::Index> grid = {5, 10, 15, 20, 25, 30, 35, 40};
  GmmOptions options;
};

struct ExperimentConfig {
  FamilyParams family;
  std::vector<Eigen::Index> K_grid = {500, 2000, 8000, 20000};
  int trials = 4;
  std::vector<Method> methods = {Method::RadStar, Method::Rad, Method::Jupad, Method::GmmDiag};
  Eigen::Index eval_samples = 100000;
  std::uint64_t seed = 0;
  bool record_timings = true;
  RadOptions rad;          ///< F and seed are set per cell
  int proposed_atoms = 0;  ///< RAD dictionary size; 0 uses the true sizes
  JupadConfig jupad;
  GmmConfig gmm;

  /// Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Missing fields take their defaults; the result is validated.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

struct TrialRecord {
  std::string family;
  std::string method;
  Eigen::Index K = 0;
  int trial = 0;
  double jsd = 0.0;
  double jsd_se = 0.0;
  double fit_seconds = 0.0;
  std::string status = "ok";  ///< ok, excluded, or failed:<phase>
  Eigen::Index components = 0;  ///< GMM only
  Eigen::Index rank = 0;
  bool floor_flagged = false;
  std::string message;  ///< failure detail, not written to the CSV

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Fitted density of one method on one training set.
struct MethodFit {
  CpdModel cpd;
  GmmModel gmm;
  bool is_gmm = false;
  Eigen::Index components = 0;
  nlohmann::json report;
};

/// Dictionaries RAD uses when the truth is unknown: dictionary_propose on
/// each training marginal with the feature kind of `kinds_from`.
std::vector<Dictionary> propose_dictionaries(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                             const std::vector<Dictionary>& kinds_from,
                                             int proposed_atoms);

MethodFit fit_method(Method method, const Eigen::Ref<const Eigen::MatrixXd>& samples,
                     const std::vector<Dictionary>& true_dictionaries, const ExperimentConfig& cfg,
                     std::uint64_t seed);

/// Rows ordered by (trial, K, method as listed in the config).
std::vector<TrialRecord> run_sweep(const ExperimentConfig& cfg);

struct Aggregate {
  std::string family, method;
  Eigen::Index K = 0;
  double mean = 0.0, sd = 0.0;
  int count = 0;  ///< rows with status ok
};

/// Per (family, method, K), in order of first appearance.
std::vector<Aggregate> summarize(const std::vector<TrialRecord>& records);

void write_csv(std::ostream& os, const std::vector<TrialRecord>& records);
/// Reads the CSV columns back; fields not in the CSV keep their defaults.
std::vector<TrialRecord> parse_csv(std::istream& is);
nlohmann::json summary_json(const std::vector<TrialRecord>& records);

/// Writes results.csv and summary.json into `out_dir`.
void emit_results(const std::filesystem::path& out_dir, const std::vector<TrialRecord>& records);

/// Plain numeric matrix I/O, one row per line, comma separated.
void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& X);
Eigen::MatrixXd read_matrix_csv(std::istream& is);

std::string format_double(double v);

}  // namespace cpdrad
