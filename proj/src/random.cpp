#include "cpdrad/random.hpp"

#include <cmath>

namespace cpdrad {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

double uniform01(Rng& rng) {
  // 53 random mantissa bits; never returns 1.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Eigen::VectorXd dirichlet_uniform(Eigen::Index dim, Rng& rng) {
  Eigen::VectorXd w(dim);
  for (Eigen::Index i = 0; i < dim; ++i) w(i) = -std::log1p(-uniform01(rng));
  return w / w.sum();
}

Eigen::Index sample_categorical(const Eigen::Ref<const Eigen::VectorXd>& weights, Rng& rng) {
  const double total = weights.sum();
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  Eigen::Index last_positive = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights(i) <= 0.0) continue;
    acc += weights(i);
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

}  // namespace cpdrad
