#include "cpdrad/radon_sketch.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cpdrad {

bool ProjectionSet::has_edges() const {
  if (edges.size() != angles.size() || angles.empty()) return false;
  return std::all_of(edges.begin(), edges.end(), [](const auto& e) { return e.size() >= 2; });
}

Eigen::Index ProjectionSet::offset(Eigen::Index m) const {
  Eigen::Index off = 0;
  for (Eigen::Index i = 0; i < m; ++i) off += bins(i);
  return off;
}

Eigen::Index ProjectionSet::total_bins() const { return offset(num_directions()); }

ProjectionSet directions_from_angles(std::vector<double> angles) {
  if (angles.empty()) throw std::invalid_argument("need at least one projection direction");
  ProjectionSet p;
  p.angles = std::move(angles);
  for (double a : p.angles) p.directions.emplace_back(std::cos(a), std::sin(a));
  return p;
}

ProjectionSet gen_directions(int M, Rng& rng) {
  if (M < 1) throw std::invalid_argument("gen_directions: M must be >= 1");
  std::vector<double> angles(M);
  for (double& a : angles) a = std::numbers::pi * uniform01(rng);
  return directions_from_angles(std::move(angles));
}

std::vector<double> make_edges(std::span<const double> values, int n_bins) {
  if (values.empty()) throw std::invalid_argument("make_edges: no values");
  if (n_bins < 1) throw std::invalid_argument("make_edges: n_bins must be >= 1");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return {lo - 0.5, lo + 0.5};
  const double range = hi - lo;
  const double top = hi + 1e-9 * range;
  std::vector<double> edges(n_bins + 1);
  for (int i = 0; i <= n_bins; ++i)
    edges[i] = lo + (top - lo) * static_cast<double>(i) / static_cast<double>(n_bins);
  edges.back() = top;
  return edges;
}

Eigen::Index bin_index(std::span<const double> edges, double x) {
  const auto bins = static_cast<Eigen::Index>(edges.size()) - 1;
  if (!(x >= edges.front() && x < edges.back())) return -1;
  // Guess from uniform spacing, then walk to the exact bin.
  auto i = static_cast<Eigen::Index>((x - edges.front()) / (edges.back() - edges.front()) *
                                     static_cast<double>(bins));
  i = std::clamp<Eigen::Index>(i, 0, bins - 1);
  while (i > 0 && x < edges[i]) --i;
  while (i < bins - 1 && x >= edges[i + 1]) ++i;
  return i;
}

Eigen::VectorXd project(const Eigen::Ref<const Eigen::MatrixX2d>& samples, const Eigen::Vector2d& dir) {
  return samples.col(0) * dir(0) + samples.col(1) * dir(1);
}

void fit_edges(ProjectionSet& proj, std::span<const Eigen::MatrixX2d> sample_blocks, int n_bins) {
  if (sample_blocks.empty()) throw std::invalid_argument("fit_edges: no samples");
  proj.edges.assign(proj.angles.size(), {});
  for (Eigen::Index m = 0; m < proj.num_directions(); ++m) {
    std::vector<double> values;
    for (const auto& block : sample_blocks) {
      const Eigen::VectorXd p = project(block, proj.directions[m]);
      values.insert(values.end(), p.data(), p.data() + p.size());
    }
    proj.edges[m] = make_edges(values, n_bins);
  }
}

PairSketch empirical_sketch(const Eigen::Ref<const Eigen::MatrixX2d>& samples,
                            const ProjectionSet& proj, Eigen::Index j, Eigen::Index k) {
  if (!proj.has_edges()) throw std::invalid_argument("empirical_sketch: projection edges not set");
  if (samples.rows() == 0) throw std::invalid_argument("empirical_sketch: no samples");
  PairSketch sk{j, k, Eigen::VectorXd::Zero(proj.total_bins()), proj};
  const double inv = 1.0 / static_cast<double>(samples.rows());
  for (Eigen::Index m = 0; m < proj.num_directions(); ++m) {
    const Eigen::Index off = proj.offset(m);
    const Eigen::VectorXd p = project(samples, proj.directions[m]);
    std::vector<Eigen::Index> counts(proj.bins(m), 0);
    for (Eigen::Index s = 0; s < p.size(); ++s) {
      const Eigen::Index b = bin_index(proj.edges[m], p(s));
      if (b >= 0) ++counts[b];
    }
    for (Eigen::Index b = 0; b < proj.bins(m); ++b)
      sk.y(off + b) = static_cast<double>(counts[b]) * inv;
  }
  return sk;
}

RadonMatrix radon_matrix(const Dictionary& d_j, const Dictionary& d_k, const ProjectionSet& proj,
                         Eigen::Index mc_samples, std::uint64_t seed, Eigen::Index j,
                         Eigen::Index k) {
  if (!proj.has_edges()) throw std::invalid_argument("radon_matrix: projection edges not set");
  if (mc_samples < 1) throw std::invalid_argument("radon_matrix: need at least one MC sample");
  const Eigen::Index Lj = d_j.size(), Lk = d_k.size(), S = mc_samples;

  auto draw_all = [&](const Dictionary& d, std::uint64_t side) {
    Eigen::MatrixXd X(S, d.size());
    for (Eigen::Index l = 0; l < d.size(); ++l) {
      Rng rng = substream(seed, {side, static_cast<std::uint64_t>(l)});
      for (Eigen::Index s = 0; s < S; ++s) X(s, l) = atom_sample(d[l], rng);
    }
    return X;
  };
  const Eigen::MatrixXd Xj = draw_all(d_j, 0), Xk = draw_all(d_k, 1);

  RadonMatrix Rm{j, k, Lj, Lk, Eigen::MatrixXd::Zero(proj.total_bins(), Lj * Lk),
                 Eigen::MatrixXd::Zero(proj.num_directions(), Lj * Lk), proj};
  const double inv = 1.0 / static_cast<double>(S);
  std::vector<Eigen::Index> counts;
  Eigen::VectorXd pk(S);
  for (Eigen::Index m = 0; m < proj.num_directions(); ++m) {
    const Eigen::Vector2d& phi = proj.directions[m];
    const auto& edges = proj.edges[m];
    const Eigen::Index off = proj.offset(m), bins = proj.bins(m);
    const Eigen::MatrixXd Pj = Xj * phi(0);
    for (Eigen::Index lk = 0; lk < Lk; ++lk) {
      pk = Xk.col(lk) * phi(1);
      for (Eigen::Index lj = 0; lj < Lj; ++lj) {
        counts.assign(bins, 0);
        Eigen::Index outside = 0;
        for (Eigen::Index s = 0; s < S; ++s) {
          const Eigen::Index b = bin_index(edges, Pj(s, lj) + pk(s));
          if (b >= 0) ++counts[b];
          else ++outside;
        }
        const Eigen::Index col = lk * Lj + lj;
        for (Eigen::Index b = 0; b < bins; ++b)
          Rm.R(off + b, col) = static_cast<double>(counts[b]) * inv;
        Rm.dropped(m, col) = static_cast<double>(outside) * inv;
      }
    }
  }
  return Rm;
}

Eigen::VectorXd apply_sketch(const RadonMatrix& Rm, const Eigen::Ref<const Eigen::MatrixXd>& G) {
  if (G.size() != Rm.R.cols())
    throw std::invalid_argument("apply_sketch: weight core has " + std::to_string(G.size()) +
                                " entries, operator expects " + std::to_string(Rm.R.cols()));
  const Eigen::MatrixXd Gc = G;  // contiguous column-major copy
  return Rm.R * Eigen::Map<const Eigen::VectorXd>(Gc.data(), Gc.size());
}

namespace {

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ c[i]) * 0x100000001b3ULL;
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

void hash_dictionary(Fnv& f, const Dictionary& d) {
  f.u64(static_cast<std::uint64_t>(d.kind()));
  f.u64(static_cast<std::uint64_t>(d.size()));
  for (const Atom& a : d.atoms()) {
    f.u64(static_cast<std::uint64_t>(a.kind));
    f.f64(a.location);
    f.f64(a.spread);
  }
}

constexpr char kMagic[8] = {'C', 'P', 'D', 'R', 'A', 'D', 'R', 'M'};

}  // namespace

std::uint64_t radon_cache_key(const Dictionary& d_j, const Dictionary& d_k, const ProjectionSet& proj,
                              Eigen::Index mc_samples, std::uint64_t seed) {
  Fnv f;
  hash_dictionary(f, d_j);
  hash_dictionary(f, d_k);
  for (double a : proj.angles) f.f64(a);
  for (const auto& e : proj.edges) {
    f.u64(e.size());
    for (double v : e) f.f64(v);
  }
  f.u64(static_cast<std::uint64_t>(mc_samples));
  f.u64(seed);
  return f.h;
}

void save_radon_matrix(const std::filesystem::path& path, const RadonMatrix& Rm) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write radon cache file " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t shape[5] = {
      static_cast<std::uint64_t>(Rm.R.rows()), static_cast<std::uint64_t>(Rm.R.cols()),
      static_cast<std::uint64_t>(Rm.dropped.rows()), static_cast<std::uint64_t>(Rm.Lj),
      static_cast<std::uint64_t>(Rm.Lk)};
  out.write(reinterpret_cast<const char*>(shape), sizeof shape);
  auto write_rows = [&](const Eigen::MatrixXd& M) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = M;
    out.write(reinterpret_cast<const char*>(rm.data()),
              static_cast<std::streamsize>(rm.size() * sizeof(double)));
  };
  write_rows(Rm.R);
  write_rows(Rm.dropped);
  if (!out) throw std::runtime_error("failed writing radon cache file " + path.string());
}

RadonMatrix load_radon_matrix(const std::filesystem::path& path, const ProjectionSet& proj,
                              Eigen::Index j, Eigen::Index k) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open radon cache file " + path.string());
  char magic[8];
  std::uint64_t shape[5];
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(shape), sizeof shape);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("not a radon cache file: " + path.string());
  if (static_cast<Eigen::Index>(shape[0]) != proj.total_bins() ||
      static_cast<Eigen::Index>(shape[2]) != proj.num_directions() ||
      shape[3] * shape[4] != shape[1])
    throw std::runtime_error("radon cache file does not match projection set: " + path.string());
  auto read_rows = [&](std::uint64_t rows, std::uint64_t cols) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
    in.read(reinterpret_cast<char*>(rm.data()),
            static_cast<std::streamsize>(rm.size() * sizeof(double)));
    return Eigen::MatrixXd(rm);
  };
  RadonMatrix Rm{j, k, static_cast<Eigen::Index>(shape[3]), static_cast<Eigen::Index>(shape[4]),
                 read_rows(shape[0], shape[1]), read_rows(shape[2], shape[1]), proj};
  if (!in) throw std::runtime_error("truncated radon cache file " + path.string());
  return Rm;
}

RadonMatrix radon_matrix_cached(const std::filesystem::path& cache_dir, const Dictionary& d_j,
                                const Dictionary& d_k, const ProjectionSet& proj,
                                Eigen::Index mc_samples, std::uint64_t seed, Eigen::Index j,
                                Eigen::Index k) {
  if (cache_dir.empty()) return radon_matrix(d_j, d_k, proj, mc_samples, seed, j, k);
  std::ostringstream name;
  name << "radon_" << std::hex << radon_cache_key(d_j, d_k, proj, mc_samples, seed) << ".bin";
  const auto path = cache_dir / name.str();
  if (std::filesystem::exists(path)) return load_radon_matrix(path, proj, j, k);
  RadonMatrix Rm = radon_matrix(d_j, d_k, proj, mc_samples, seed, j, k);
  std::filesystem::create_directories(cache_dir);
  // Write-then-rename so concurrent readers never see a partial file.
  const auto tmp = path.string() + ".tmp" + std::to_string(seed);
  save_radon_matrix(tmp, Rm);
  std::filesystem::rename(tmp, path);
  return Rm;
}

}  // namespace cpdrad
