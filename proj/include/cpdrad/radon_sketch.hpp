#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cpdrad/dictionary.hpp"
#include "cpdrad/random.hpp"

namespace cpdrad {

/// Projection directions for one feature pair and the bin edges used to
/// histogram projected values along each of them.
struct ProjectionSet {
  std::vector<double> angles;
  std::vector<Eigen::Vector2d> directions;
  std::vector<std::vector<double>> edges;  ///< per direction; empty until set

  [[nodiscard]] Eigen::Index num_directions() const {
    return static_cast<Eigen::Index>(angles.size());
  }
  [[nodiscard]] bool has_edges() const;
  [[nodiscard]] Eigen::Index bins(Eigen::Index m) const {
    return static_cast<Eigen::Index>(edges[m].size()) - 1;
  }
  /// Start of direction m's segment in the concatenated sketch.
  [[nodiscard]] Eigen::Index offset(Eigen::Index m) const;
  /// b = sum of per-direction bin counts.
  [[nodiscard]] Eigen::Index total_bins() const;
};

ProjectionSet gen_directions(int M, Rng& rng);
ProjectionSet directions_from_angles(std::vector<double> angles);

/// n_bins uniform bins over [min, max] with the top edge widened by
/// 1e-9 * range; a constant input gives one unit-width bin around it.
std::vector<double> make_edges(std::span<const double> values, int n_bins);

/// Index of the half-open bin [e_i, e_{i+1}) holding x, or -1 when outside.
Eigen::Index bin_index(std::span<const double> edges, double x);

/// Projections <phi_m, (x_j, x_k)> of every row of a K x 2 sample matrix.
Eigen::VectorXd project(const Eigen::Ref<const Eigen::MatrixX2d>& samples, const Eigen::Vector2d& dir);

/// Sets each direction's edges from the projections of the given sample
/// blocks (one block for a single pair, all pairs for a pooled binning).
void fit_edges(ProjectionSet& proj, std::span<const Eigen::MatrixX2d> sample_blocks, int n_bins);

struct PairSketch {
  Eigen::Index j = 0, k = 0;
  Eigen::VectorXd y;
  ProjectionSet projections;
};

/// Per direction, the fraction of samples falling in each bin.
PairSketch empirical_sketch(const Eigen::Ref<const Eigen::MatrixX2d>& samples,
                            const ProjectionSet& proj, Eigen::Index j = 0, Eigen::Index k = 1);

struct RadonMatrix {
  Eigen::Index j = 0, k = 0;
  Eigen::Index Lj = 0, Lk = 0;  ///< dictionary sizes; R has Lj * Lk columns
  Eigen::MatrixXd R;        ///< b x (L_j L_k); column l_k * L_j + l_j
  Eigen::MatrixXd dropped;  ///< M x (L_j L_k) fraction of MC samples outside the edges
  ProjectionSet projections;
};

/// Monte Carlo sketch operator: column (l_j, l_k) is the empirical sketch of
/// S independent pairs (atom l_j, atom l_k). S draws are made per atom and
/// shared across the columns that use that atom. Bit-reproducible for a
/// fixed seed.
RadonMatrix radon_matrix(const Dictionary& d_j, const Dictionary& d_k, const ProjectionSet& proj,
                         Eigen::Index mc_samples, std::uint64_t seed, Eigen::Index j = 0,
                         Eigen::Index k = 1);

/// R * vec(G) with vec stacking columns.
Eigen::VectorXd apply_sketch(const RadonMatrix& Rm, const Eigen::Ref<const Eigen::MatrixXd>& G);

/// Content hash identifying a radon_matrix computation.
std::uint64_t radon_cache_key(const Dictionary& d_j, const Dictionary& d_k, const ProjectionSet& proj,
                              Eigen::Index mc_samples, std::uint64_t seed);

/// Binary layout: "CPDRADRM", then u64 rows, cols, directions, Lj, Lk, then R and
/// `dropped` as row-major little-endian doubles.
void save_radon_matrix(const std::filesystem::path& path, const RadonMatrix& Rm);
RadonMatrix load_radon_matrix(const std::filesystem::path& path, const ProjectionSet& proj,
                              Eigen::Index j, Eigen::Index k);

/// radon_matrix backed by a file cache under cache_dir (disabled when empty).
RadonMatrix radon_matrix_cached(const std::filesystem::path& cache_dir, const Dictionary& d_j,
                                const Dictionary& d_k, const ProjectionSet& proj,
                                Eigen::Index mc_samples, std::uint64_t seed, Eigen::Index j = 0,
                                Eigen::Index k = 1);

}  // namespace cpdrad
