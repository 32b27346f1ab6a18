#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vlh/bitcodes.hpp"
#include "vlh/detail/binary_io.hpp"
#include "vlh/detail/parallel.hpp"
#include "vlh/detail/random.hpp"
#include "vlh/error.hpp"
#include "vlh/vector_set.hpp"

namespace vlh {

// B-KMH scans all 2^beta strings per coordinate update.
inline constexpr std::uint32_t kMaxSearchedRepresentationBits = 24;

// k codewords in a d_sub-dimensional subspace with their beta-bit representations.
struct Codebook {
  std::size_t dim = 0;
  std::uint32_t beta = 0;
  std::vector<double> codewords;  // k x dim, row-major
  std::vector<std::uint64_t> representations;
  double scale = 1.0;
  std::vector<std::uint64_t> counts;

  std::size_t k() const { return representations.size(); }
  std::span<const double> codeword(std::size_t i) const { return {codewords.data() + i * dim, dim}; }

  std::uint64_t total_count() const {
    std::uint64_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }

  void validate() const {
    require(dim > 0, "codebook: dimension must be positive");
    require(beta >= 1 && beta <= kMaxSubstringBits, "codebook: representation width outside [1, 32]");
    require(!representations.empty(), "codebook: no codewords");
    require(codewords.size() == k() * dim, "codebook: codeword storage does not match k x dim");
    require(counts.size() == k(), "codebook: count vector does not match k");
    require(std::isfinite(scale) && scale > 0, "codebook: scale must be positive");
    std::vector<std::uint64_t> sorted = representations;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "codebook: duplicate representation");
    require(sorted.back() <= detail::low_mask(beta), "codebook: representation wider than beta");
  }

  bool operator==(const Codebook&) const = default;
};

namespace detail {

template <typename T>
double sq_dist(std::span<const T> x, std::span<const double> c) {
  double s = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double t = static_cast<double>(x[i]) - c[i];
    s += t * t;
  }
  return s;
}

// Nearest codeword by Euclidean distance, ties to the smallest index.
template <typename T>
std::uint32_t nearest_codeword(std::span<const T> x, std::span<const double> codewords, std::size_t dim) {
  const std::size_t k = codewords.size() / dim;
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    const double d = sq_dist(x, codewords.subspan(i * dim, dim));
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(i);
    }
  }
  return best;
}

inline std::vector<std::uint32_t> assign_all(const VectorSet& data, std::span<const double> codewords,
                                             std::size_t threads) {
  std::vector<std::uint32_t> out(data.size());
  parallel_for(data.size(), threads,
               [&](std::size_t i) { out[i] = nearest_codeword(data.row(i), codewords, data.dim()); });
  return out;
}

inline std::vector<double> pairwise_distances(const Codebook& cb) {
  const std::size_t k = cb.k();
  std::vector<double> d(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) d[i * k + j] = d[j * k + i] = std::sqrt(sq_dist(cb.codeword(i), cb.codeword(j)));
  return d;
}

inline std::vector<double> affinity_weights(std::span<const std::uint64_t> counts) {
  double n = 0;
  for (auto c : counts) n += static_cast<double>(c);
  require(n > 0, "affinity weights: all counts are zero");
  const std::size_t k = counts.size();
  std::vector<double> w(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) w[i * k + j] = static_cast<double>(counts[i]) * static_cast<double>(counts[j]) / (n * n);
  return w;
}

inline std::vector<std::uint64_t> cell_counts(std::span<const std::uint32_t> assignments, std::size_t k) {
  std::vector<std::uint64_t> counts(k, 0);
  for (auto a : assignments) ++counts[a];
  return counts;
}

}  // namespace detail

// ---- K-means ---------------------------------------------------------------

struct KMeansResult {
  std::vector<double> codewords;  // k x dim
  std::vector<std::uint32_t> assignments;
  std::vector<std::uint64_t> counts;
  std::vector<double> history;  // E_quan after every assignment step
  std::size_t iterations = 0;
  bool converged = false;
};

inline double e_quan(const VectorSet& data, std::span<const double> codewords, std::span<const std::uint32_t> assignments) {
  require(assignments.size() == data.size(), "e_quan: one assignment per point required");
  require(!data.empty(), "e_quan: empty data");
  require(codewords.size() % data.dim() == 0, "e_quan: codeword dimension mismatch");
  const std::size_t k = codewords.size() / data.dim();
  double s = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    require(assignments[i] < k, "e_quan: assignment out of range");
    s += detail::sq_dist(data.row(i), codewords.subspan(assignments[i] * data.dim(), data.dim()));
  }
  return s / static_cast<double>(data.size());
}

inline double e_quan(const VectorSet& data, const Codebook& cb, std::span<const std::uint32_t> assignments) {
  require(cb.dim == data.dim(), "e_quan: codebook dimension mismatch");
  return e_quan(data, cb.codewords, assignments);
}

// Lloyd iterations from k-means++ seeding. Empty cells are reseeded to the
// point farthest from its codeword.
inline KMeansResult kmeans(const VectorSet& train, std::size_t k, std::uint64_t seed, std::size_t max_iters = 100,
                           std::size_t threads = 1) {
  require(k >= 1, "kmeans: k must be positive");
  require(train.size() >= k,
          "kmeans: need n >= k (n = " + std::to_string(train.size()) + ", k = " + std::to_string(k) + ")");
  const std::size_t n = train.size(), dim = train.dim();
  detail::Rng rng(seed);
  KMeansResult res;
  auto& cw = res.codewords;
  cw.assign(k * dim, 0.0);
  auto place = [&](std::size_t c, std::size_t point) {
    auto x = train.row(point);
    for (std::size_t t = 0; t < dim; ++t) cw[c * dim + t] = x[t];
  };

  place(0, rng.below(n));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], detail::sq_dist(train.row(i), std::span<const double>(cw).subspan((c - 1) * dim, dim)));
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0) {
      const double target = rng.uniform() * total;
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0) continue;
        acc += d2[i];
        pick = i;
        if (acc > target) break;
      }
    } else {
      pick = rng.below(n);
    }
    place(c, pick);
  }

  std::vector<std::uint32_t> assign;
  std::vector<double> sums(k * dim);
  for (std::size_t iter = 0;; ++iter) {
    auto next = detail::assign_all(train, cw, threads);
    const bool stable = next == assign;
    assign = std::move(next);
    res.history.push_back(e_quan(train, cw, assign));
    res.iterations = iter;
    if (stable) {
      res.converged = true;
      break;
    }
    if (iter == max_iters) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    auto counts = detail::cell_counts(assign, k);
    for (std::size_t i = 0; i < n; ++i) {
      auto x = train.row(i);
      for (std::size_t t = 0; t < dim; ++t) sums[assign[i] * dim + t] += x[t];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (std::size_t t = 0; t < dim; ++t) cw[c * dim + t] = sums[c * dim + t] / static_cast<double>(counts[c]);

    if (std::find(counts.begin(), counts.end(), 0u) != counts.end()) {
      std::vector<double> far(n);
      for (std::size_t i = 0; i < n; ++i)
        far[i] = detail::sq_dist(train.row(i), std::span<const double>(cw).subspan(assign[i] * dim, dim));
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0) continue;
        std::size_t best = 0;
        for (std::size_t i = 1; i < n; ++i)
          if (far[i] > far[best]) best = i;
        place(c, best);
        far[best] = -1;
      }
    }
  }
  res.assignments = std::move(assign);
  res.counts = detail::cell_counts(res.assignments, k);
  return res;
}

// ---- distances and errors ----------------------------------------------------

inline double d_s(std::uint64_t a, std::uint64_t b, double s) {
  return s * std::sqrt(static_cast<double>(std::popcount(a ^ b)));
}

inline double d_s(const BitCode& a, const BitCode& b, double s) {
  return s * std::sqrt(static_cast<double>(hamming(a, b)));
}

// Sum over all ordered pairs (i, j), diagonal included, of
// w_ij (||c_i - c_j|| - d_s(I_i, I_j))^2 with w_ij = n_i n_j / n^2.
inline double e_aff(const Codebook& cb) {
  const std::size_t k = cb.k();
  const auto d = detail::pairwise_distances(cb);
  const auto w = detail::affinity_weights(cb.counts);
  double s = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double diff = d[i * k + j] - d_s(cb.representations[i], cb.representations[j], cb.scale);
      s += w[i * k + j] * diff * diff;
    }
  return s;
}

// Minimizer of e_aff over s with everything else fixed.
inline double optimal_scale(const Codebook& cb) {
  const std::size_t k = cb.k();
  const auto d = detail::pairwise_distances(cb);
  const auto w = detail::affinity_weights(cb.counts);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double h = std::popcount(cb.representations[i] ^ cb.representations[j]);
      num += w[i * k + j] * d[i * k + j] * std::sqrt(h);
      den += w[i * k + j] * h;
    }
  require(den > 0, "optimal_scale: no populated pair of cells has distinct representations");
  return num / den;
}

// ---- KMH -------------------------------------------------------------------

struct KmhTrace {
  std::vector<double> e_quan;  // after each update step
  std::vector<double> e_aff;
};

namespace detail {

// Terms of E_quan + lambda * E_aff that depend on codeword j, evaluated with
// c_j replaced by c. Differs from the full objective by a constant.
inline double kmh_partial_objective(const Codebook& cb, std::size_t j, std::span<const double> mean, double lambda,
                                    std::span<const double> c) {
  const std::size_t k = cb.k();
  const auto n = static_cast<double>(cb.total_count());
  const double pj = static_cast<double>(cb.counts[j]) / n;
  double f = pj * sq_dist(c, mean);
  for (std::size_t l = 0; l < k; ++l) {
    if (l == j) continue;
    const double w = pj * static_cast<double>(cb.counts[l]) / n;
    const double diff = std::sqrt(sq_dist(c, cb.codeword(l))) - d_s(cb.representations[j], cb.representations[l], cb.scale);
    f += 2 * lambda * w * diff * diff;
  }
  return f;
}

inline std::vector<double> kmh_partial_gradient(const Codebook& cb, std::size_t j, std::span<const double> mean,
                                                double lambda, std::span<const double> c) {
  const std::size_t k = cb.k(), dim = cb.dim;
  const auto n = static_cast<double>(cb.total_count());
  const double pj = static_cast<double>(cb.counts[j]) / n;
  std::vector<double> g(dim);
  for (std::size_t t = 0; t < dim; ++t) g[t] = 2 * pj * (c[t] - mean[t]);
  for (std::size_t l = 0; l < k; ++l) {
    if (l == j) continue;
    const double dist = std::sqrt(sq_dist(c, cb.codeword(l)));
    if (dist == 0) continue;
    const double w = pj * static_cast<double>(cb.counts[l]) / n;
    const double coef =
        4 * lambda * w * (dist - d_s(cb.representations[j], cb.representations[l], cb.scale)) / dist;
    for (std::size_t t = 0; t < dim; ++t) g[t] += coef * (c[t] - cb.codeword(l)[t]);
  }
  return g;
}

// Ten damped gradient steps on codeword j; a step that does not decrease the
// objective is rejected and the step size halved.
inline void kmh_update_codeword(Codebook& cb, std::size_t j, std::span<const double> mean, double lambda) {
  const std::size_t k = cb.k(), dim = cb.dim;
  const auto n = static_cast<double>(cb.total_count());
  const double pj = static_cast<double>(cb.counts[j]) / n;
  double wsum = 0;
  for (std::size_t l = 0; l < k; ++l)
    if (l != j) wsum += pj * static_cast<double>(cb.counts[l]) / n;
  const double curvature = 2 * pj + 4 * lambda * wsum;
  if (curvature <= 0) return;
  double eta = 1.0 / curvature;
  std::vector<double> c(cb.codeword(j).begin(), cb.codeword(j).end()), trial(dim);
  double f = kmh_partial_objective(cb, j, mean, lambda, c);
  for (int step = 0; step < 10; ++step) {
    const auto g = kmh_partial_gradient(cb, j, mean, lambda, c);
    for (std::size_t t = 0; t < dim; ++t) trial[t] = c[t] - eta * g[t];
    const double ft = kmh_partial_objective(cb, j, mean, lambda, trial);
    if (ft < f) {
      c = trial;
      f = ft;
    } else {
      eta /= 2;
    }
  }
  std::copy(c.begin(), c.end(), cb.codewords.begin() + static_cast<std::ptrdiff_t>(j * dim));
}

}  // namespace detail

// K-means hashing: minimizes E_quan + lambda * E_aff with representation i = i.
inline Codebook kmh_train(const VectorSet& train, std::size_t k, double lambda, std::uint64_t seed,
                          std::size_t max_iters = 100, std::size_t threads = 1, KmhTrace* trace = nullptr) {
  require(k >= 2 && std::has_single_bit(k), "kmh_train: k must be a power of two >= 2, got " + std::to_string(k));
  require(lambda >= 0 && std::isfinite(lambda), "kmh_train: lambda must be non-negative");
  auto km = kmeans(train, k, seed, max_iters, threads);
  const std::size_t dim = train.dim();
  Codebook cb;
  cb.dim = dim;
  cb.beta = static_cast<std::uint32_t>(std::countr_zero(k));
  cb.codewords = std::move(km.codewords);
  cb.representations.resize(k);
  for (std::size_t i = 0; i < k; ++i) cb.representations[i] = i;
  cb.counts = km.counts;
  cb.scale = optimal_scale(cb);
  if (lambda == 0) return cb;

  auto assign = std::move(km.assignments);
  std::vector<double> means(k * dim);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    cb.counts = detail::cell_counts(assign, k);
    std::fill(means.begin(), means.end(), 0.0);
    for (std::size_t i = 0; i < train.size(); ++i)
      for (std::size_t t = 0; t < dim; ++t) means[assign[i] * dim + t] += train.row(i)[t];
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t t = 0; t < dim; ++t)
        means[c * dim + t] = cb.counts[c] ? means[c * dim + t] / static_cast<double>(cb.counts[c]) : cb.codewords[c * dim + t];
    cb.scale = optimal_scale(cb);
    for (std::size_t j = 0; j < k; ++j)
      detail::kmh_update_codeword(cb, j, std::span<const double>(means).subspan(j * dim, dim), lambda);
    if (trace) {
      trace->e_quan.push_back(e_quan(train, cb, assign));
      trace->e_aff.push_back(e_aff(cb));
    }
    auto next = detail::assign_all(train, cb.codewords, threads);
    if (next == assign) break;
    assign = std::move(next);
  }
  cb.counts = detail::cell_counts(assign, k);
  cb.scale = optimal_scale(cb);
  return cb;
}

// ---- B-KMH -----------------------------------------------------------------

struct BkmhTrace {
  // Per restart: E_aff after initialization, then after every coordinate update.
  std::vector<std::vector<double>> e_aff;
  std::vector<std::size_t> sweeps;
};

// Greedy representation search for fixed codewords and counts in `base`.
inline Codebook bkmh_assign(const Codebook& base, std::uint32_t beta, std::uint64_t seed, std::size_t restarts = 5,
                            std::size_t max_sweeps = 100, BkmhTrace* trace = nullptr) {
  const std::size_t k = base.codewords.size() / base.dim;
  require(k >= 2, "bkmh: need at least two codewords");
  require(beta >= 1 && beta <= kMaxSearchedRepresentationBits,
          "bkmh: beta must be in [1, " + std::to_string(kMaxSearchedRepresentationBits) + "]");
  require((std::uint64_t{1} << beta) >= k, "bkmh: 2^beta < k (beta = " + std::to_string(beta) + ", k = " +
                                               std::to_string(k) + ")");
  require(restarts >= 1, "bkmh: at least one restart required");
  require(base.counts.size() == k, "bkmh: counts do not match codewords");
  const std::uint64_t strings = std::uint64_t{1} << beta;

  Codebook probe = base;
  probe.representations.assign(k, 0);
  const auto d = detail::pairwise_distances(probe);
  const auto w = detail::affinity_weights(base.counts);
  std::vector<double> root(beta + 1);
  for (std::uint32_t h = 0; h <= beta; ++h) root[h] = std::sqrt(static_cast<double>(h));

  Codebook best;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    detail::Rng rng(detail::derive_seed(seed, r));
    Codebook cb = base;
    cb.beta = beta;
    cb.representations.clear();
    std::vector<std::uint8_t> used(strings, 0);
    while (cb.representations.size() < k) {
      const std::uint64_t u = rng.below(strings);
      if (used[u]) continue;
      used[u] = 1;
      cb.representations.push_back(u);
    }
    cb.scale = optimal_scale(cb);
    require(cb.scale > 0, "bkmh: all codewords coincide");
    const double s = cb.scale;
    double current = e_aff(cb);
    std::vector<double>* log = nullptr;
    if (trace) {
      trace->e_aff.emplace_back();
      log = &trace->e_aff.back();
      log->push_back(current);
    }

    auto cost = [&](std::size_t j, std::uint64_t u) {
      double c = 0;
      for (std::size_t l = 0; l < k; ++l) {
        if (l == j) continue;
        const double diff = d[j * k + l] - s * root[std::popcount(u ^ cb.representations[l])];
        c += w[j * k + l] * diff * diff;
      }
      return c;
    };

    std::size_t sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
      bool changed = false;
      for (std::size_t j = 0; j < k; ++j) {
        const std::uint64_t incumbent = cb.representations[j];
        std::uint64_t pick = incumbent;
        double pick_cost = cost(j, incumbent);
        for (std::uint64_t u = 0; u < strings; ++u) {
          if (used[u]) continue;
          const double c = cost(j, u);
          if (c < pick_cost) {
            pick_cost = c;
            pick = u;
          }
        }
        if (pick != incumbent) {
          cb.representations[j] = pick;
          const double candidate = e_aff(cb);
          if (candidate < current) {
            used[incumbent] = 0;
            used[pick] = 1;
            current = candidate;
            changed = true;
          } else {
            cb.representations[j] = incumbent;
          }
        }
        if (log) log->push_back(current);
      }
      if (!changed) {
        ++sweep;
        break;
      }
    }
    if (trace) trace->sweeps.push_back(sweep);
    if (current < best_err) {
      best_err = current;
      best = std::move(cb);
    }
  }
  return best;
}

// Block K-means hashing: K-means codewords, then greedy beta-bit representations.
inline Codebook bkmh_train(const VectorSet& train, std::size_t k, std::uint32_t beta, std::uint64_t seed,
                           std::size_t restarts = 5, std::size_t max_sweeps = 100, std::size_t max_iters = 100,
                           std::size_t threads = 1, BkmhTrace* trace = nullptr) {
  require(beta >= 1 && beta < 64 && (std::uint64_t{1} << beta) >= k,
          "bkmh_train: 2^beta < k (beta = " + std::to_string(beta) + ", k = " + std::to_string(k) + ")");
  auto km = kmeans(train, k, seed, max_iters, threads);
  Codebook base;
  base.dim = train.dim();
  base.beta = beta;
  base.codewords = std::move(km.codewords);
  base.counts = std::move(km.counts);
  return bkmh_assign(base, beta, seed, restarts, max_sweeps, trace);
}

// ---- product model -----------------------------------------------------------

struct ProductQuantizerModel {
  std::vector<Codebook> subspaces;

  std::size_t input_dim() const {
    std::size_t d = 0;
    for (const auto& cb : subspaces) d += cb.dim;
    return d;
  }
  std::uint32_t code_bits() const {
    std::uint32_t b = 0;
    for (const auto& cb : subspaces) b += cb.beta;
    return b;
  }
  SubstringLayout layout() const {
    std::vector<std::uint32_t> widths;
    for (const auto& cb : subspaces) widths.push_back(cb.beta);
    return SubstringLayout(std::move(widths));
  }

  bool operator==(const ProductQuantizerModel&) const = default;
};

// Subspace m's representation lands at bit offset sum_{i<m} beta_i.
inline BitCode encode_point(std::span<const float> x, const ProductQuantizerModel& model) {
  require(!model.subspaces.empty(), "encode_point: empty model");
  require(x.size() == model.input_dim(), "encode_point: dimension " + std::to_string(x.size()) +
                                             " does not match model dimension " + std::to_string(model.input_dim()));
  BitCode code(model.code_bits());
  std::size_t col = 0, bit = 0;
  for (const auto& cb : model.subspaces) {
    const auto i = detail::nearest_codeword(x.subspan(col, cb.dim), std::span<const double>(cb.codewords), cb.dim);
    code.set_bits_at(bit, cb.beta, cb.representations[i]);
    col += cb.dim;
    bit += cb.beta;
  }
  return code;
}

inline BitCodeSet encode_all(const VectorSet& data, const ProductQuantizerModel& model, std::size_t threads = 1) {
  std::vector<BitCode> codes(data.size());
  detail::parallel_for(data.size(), threads, [&](std::size_t i) { codes[i] = encode_point(data.row(i), model); });
  BitCodeSet out(model.code_bits());
  out.reserve(codes.size());
  for (const auto& c : codes) out.push_back(c);
  return out;
}

enum class QuantizerMethod { kmh, bkmh };

struct ProductTrainOptions {
  std::size_t k = 16;
  std::uint32_t beta = 8;  // B-KMH only; KMH uses log2 k
  double lambda = 1.0;     // KMH only
  std::uint64_t seed = 0;
  std::size_t restarts = 5;
  std::size_t max_iters = 100;
  std::size_t max_sweeps = 100;
  std::size_t threads = 1;
};

// Trains each of `subspaces` contiguous dimension blocks independently.
// Subspace m is seeded with seed + m. Codewords are rounded to float so the
// model survives a save/load cycle unchanged.
inline ProductQuantizerModel product_train(const VectorSet& train, std::size_t subspaces, QuantizerMethod method,
                                           const ProductTrainOptions& opt) {
  require(subspaces >= 1 && subspaces <= train.dim(),
          "product_train: need 1 <= subspaces <= d (d = " + std::to_string(train.dim()) + ")");
  const std::size_t base = train.dim() / subspaces;
  ProductQuantizerModel model;
  model.subspaces.resize(subspaces);
  const std::size_t outer = std::min(opt.threads, subspaces);
  const std::size_t inner = outer > 1 ? 1 : opt.threads;
  detail::parallel_for(subspaces, outer, [&](std::size_t m) {
    const std::size_t width = m + 1 == subspaces ? train.dim() - base * m : base;
    const auto slice = train.columns(base * m, width);
    const std::uint64_t seed = opt.seed + m;
    Codebook cb = method == QuantizerMethod::kmh
                      ? kmh_train(slice, opt.k, opt.lambda, seed, opt.max_iters, inner)
                      : bkmh_train(slice, opt.k, opt.beta, seed, opt.restarts, opt.max_sweeps, opt.max_iters, inner);
    for (auto& v : cb.codewords) v = static_cast<float>(v);
    model.subspaces[m] = std::move(cb);
  });
  return model;
}

// ---- "BKMH" model file -------------------------------------------------------
// magic | M':u32 | M' x (d_sub:u32, k:u32, beta:u32, s:f64)
//       | codewords f32, subspace by subspace | representations u32 | counts u64

inline std::vector<std::uint8_t> serialize_model(const ProductQuantizerModel& model) {
  detail::ByteWriter w;
  w.magic("BKMH");
  w.u32(static_cast<std::uint32_t>(model.subspaces.size()));
  for (const auto& cb : model.subspaces) {
    cb.validate();
    w.u32(static_cast<std::uint32_t>(cb.dim));
    w.u32(static_cast<std::uint32_t>(cb.k()));
    w.u32(cb.beta);
    w.f64(cb.scale);
  }
  for (const auto& cb : model.subspaces)
    for (double v : cb.codewords) w.f32(static_cast<float>(v));
  for (const auto& cb : model.subspaces)
    for (auto r : cb.representations) w.u32(static_cast<std::uint32_t>(r));
  for (const auto& cb : model.subspaces)
    for (auto c : cb.counts) w.u64(c);
  return w.take();
}

inline ProductQuantizerModel deserialize_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic("BKMH");
  const std::uint32_t m = r.u32();
  if (m == 0) r.fail("model has no subspaces");
  if (m > r.remaining() / 20) r.fail("subspace count exceeds payload size");
  ProductQuantizerModel model;
  model.subspaces.resize(m);
  for (auto& cb : model.subspaces) {
    const std::size_t at = r.offset();
    cb.dim = r.u32();
    const std::uint32_t k = r.u32();
    cb.beta = r.u32();
    cb.scale = r.f64();
    if (cb.dim == 0 || k == 0) throw format_error("subspace dimension and k must be positive", at);
    if (cb.beta == 0 || cb.beta > kMaxSubstringBits) throw format_error("representation width outside [1, 32]", at);
    if (!(cb.scale > 0) || !std::isfinite(cb.scale)) throw format_error("scale must be positive", at);
    if (std::uint64_t{k} * cb.dim > r.remaining() / 4) throw format_error("codebook exceeds payload size", at);
    cb.representations.resize(k);
    cb.counts.resize(k);
  }
  for (auto& cb : model.subspaces) {
    cb.codewords.resize(cb.k() * cb.dim);
    for (auto& v : cb.codewords) {
      const float f = r.f32();
      if (!std::isfinite(f)) r.fail("non-finite codeword coordinate");
      v = f;
    }
  }
  for (auto& cb : model.subspaces)
    for (auto& rep : cb.representations) {
      rep = r.u32();
      if (rep > detail::low_mask(cb.beta)) r.fail("representation wider than beta");
    }
  for (auto& cb : model.subspaces)
    for (auto& c : cb.counts) c = r.u64();
  r.expect_end();
  for (const auto& cb : model.subspaces) {
    try {
      cb.validate();
    } catch (const contract_error& e) {
      throw format_error(e.what(), r.offset());
    }
  }
  return model;
}

inline void save_model(const std::string& path, const ProductQuantizerModel& model) {
  detail::write_file(path, serialize_model(model));
}

inline ProductQuantizerModel load_model(const std::string& path) { return deserialize_model(detail::read_file(path)); }

// One row per codeword: subspace,index,count,representation,c0,c1,...
inline std::string codebook_csv(const ProductQuantizerModel& model) {
  std::size_t width = 0;
  for (const auto& cb : model.subspaces) width = std::max(width, cb.dim);
  std::ostringstream out;
  out.precision(9);
  out << "subspace,index,count,representation";
  for (std::size_t t = 0; t < width; ++t) out << ",c" << t;
  out << '\n';
  for (std::size_t m = 0; m < model.subspaces.size(); ++m) {
    const auto& cb = model.subspaces[m];
    for (std::size_t i = 0; i < cb.k(); ++i) {
      out << m << ',' << i << ',' << cb.counts[i] << ','
          << BitCode::from_uint(cb.representations[i], cb.beta).to_string();
      for (std::size_t t = 0; t < width; ++t) {
        out << ',';
        if (t < cb.dim) out << cb.codeword(i)[t];
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace vlh
