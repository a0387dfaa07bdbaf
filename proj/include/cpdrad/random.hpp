#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace cpdrad {

using Rng = std::mt19937_64;

/// Mixes a master seed with a list of integer keys into an independent
/// seed. Tasks that must be schedule-independent derive their engine from
/// (master seed, task key) rather than sharing a stream.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys);

inline Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  return Rng(derive_seed(master, keys));
}

/// Uniform draw on [0, 1).
double uniform01(Rng& rng);

/// Draws from the uniform distribution on the probability simplex of
/// dimension `dim` (Dirichlet with all concentrations equal to one).
Eigen::VectorXd dirichlet_uniform(Eigen::Index dim, Rng& rng);

/// Categorical draw from a nonnegative weight vector (need not be normalized).
Eigen::Index sample_categorical(const Eigen::Ref<const Eigen::VectorXd>& weights, Rng& rng);

}  // namespace cpdrad
