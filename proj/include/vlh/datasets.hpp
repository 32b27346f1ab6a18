#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vlh/detail/binary_io.hpp"
#include "vlh/detail/parallel.hpp"
#include "vlh/detail/random.hpp"
#include "vlh/error.hpp"
#include "vlh/vector_set.hpp"

namespace vlh {

struct IntMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> values;

  std::span<const std::int32_t> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  bool operator==(const IntMatrix&) const = default;
};

// Per query, K base indices by ascending Euclidean distance, ties by index.
struct GroundTruth {
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;  // queries x k

  std::size_t queries() const { return k == 0 ? 0 : indices.size() / k; }
  std::span<const std::uint32_t> row(std::size_t q) const { return {indices.data() + q * k, k}; }
  bool operator==(const GroundTruth&) const = default;
};

// ---- fvecs / bvecs / ivecs -----------------------------------------------------
// Each record: dimension as little-endian int32, then d values (f32, u8 or i32).

namespace detail {

template <typename Value, typename Sink>
void parse_vecs(std::span<const std::uint8_t> bytes, const char* kind, Sink&& sink) {
  ByteReader r(bytes);
  if (r.done()) throw format_error(std::string(kind) + ": file has no records", 0);
  std::int64_t dim = -1;
  while (!r.done()) {
    const std::size_t at = r.offset();
    const std::int32_t d = r.i32();
    if (d <= 0) throw format_error(std::string(kind) + ": record dimension " + std::to_string(d) + " is not positive", at);
    if (dim >= 0 && d != dim)
      throw format_error(std::string(kind) + ": record dimension " + std::to_string(d) + " differs from " +
                             std::to_string(dim),
                         at);
    dim = d;
    if (r.remaining() < static_cast<std::size_t>(d) * sizeof(Value))
      throw format_error(std::string(kind) + ": truncated record", at);
    sink(static_cast<std::size_t>(d), r, at);
  }
}

}  // namespace detail

inline VectorSet parse_fvecs(std::span<const std::uint8_t> bytes) {
  VectorSet out;
  std::vector<float> row;
  detail::parse_vecs<float>(bytes, "fvecs", [&](std::size_t d, detail::ByteReader& r, std::size_t) {
    if (out.dim() == 0) out = VectorSet(d);
    row.resize(d);
    for (auto& v : row) {
      v = r.f32();
      if (!std::isfinite(v)) throw format_error("fvecs: non-finite value", r.offset() - 4);
    }
    out.push_back(row);
  });
  return out;
}

inline VectorSet parse_bvecs(std::span<const std::uint8_t> bytes) {
  VectorSet out;
  std::vector<float> row;
  detail::parse_vecs<std::uint8_t>(bytes, "bvecs", [&](std::size_t d, detail::ByteReader& r, std::size_t) {
    if (out.dim() == 0) out = VectorSet(d);
    row.resize(d);
    for (auto& v : row) v = r.u8();
    out.push_back(row);
  });
  return out;
}

inline IntMatrix parse_ivecs(std::span<const std::uint8_t> bytes) {
  IntMatrix out;
  detail::parse_vecs<std::int32_t>(bytes, "ivecs", [&](std::size_t d, detail::ByteReader& r, std::size_t) {
    out.cols = d;
    for (std::size_t j = 0; j < d; ++j) out.values.push_back(r.i32());
    ++out.rows;
  });
  return out;
}

inline VectorSet read_fvecs(const std::string& path) { return parse_fvecs(detail::read_file(path)); }
inline VectorSet read_bvecs(const std::string& path) { return parse_bvecs(detail::read_file(path)); }
inline IntMatrix read_ivecs(const std::string& path) { return parse_ivecs(detail::read_file(path)); }

// Picks the reader from the extension (.fvecs or .bvecs).
inline VectorSet read_vectors(const std::string& path) {
  if (path.ends_with(".bvecs")) return read_bvecs(path);
  require(path.ends_with(".fvecs"), "read_vectors: expected a .fvecs or .bvecs file: " + path);
  return read_fvecs(path);
}

inline std::vector<std::uint8_t> serialize_fvecs(const VectorSet& data) {
  detail::ByteWriter w;
  for (std::size_t i = 0; i < data.size(); ++i) {
    w.i32(static_cast<std::int32_t>(data.dim()));
    for (float v : data.row(i)) w.f32(v);
  }
  return w.take();
}

inline std::vector<std::uint8_t> serialize_bvecs(const VectorSet& data) {
  detail::ByteWriter w;
  for (std::size_t i = 0; i < data.size(); ++i) {
    w.i32(static_cast<std::int32_t>(data.dim()));
    for (float v : data.row(i)) {
      require(v >= 0 && v <= 255 && v == std::floor(v), "bvecs: values must be integers in [0, 255]");
      w.u8(static_cast<std::uint8_t>(v));
    }
  }
  return w.take();
}

inline std::vector<std::uint8_t> serialize_ivecs(const IntMatrix& m) {
  detail::ByteWriter w;
  for (std::size_t i = 0; i < m.rows; ++i) {
    w.i32(static_cast<std::int32_t>(m.cols));
    for (auto v : m.row(i)) w.i32(v);
  }
  return w.take();
}

inline void write_fvecs(const std::string& path, const VectorSet& data) { detail::write_file(path, serialize_fvecs(data)); }
inline void write_bvecs(const std::string& path, const VectorSet& data) { detail::write_file(path, serialize_bvecs(data)); }
inline void write_ivecs(const std::string& path, const IntMatrix& m) { detail::write_file(path, serialize_ivecs(m)); }

inline void save_ground_truth(const std::string& path, const GroundTruth& gt) {
  IntMatrix m{gt.queries(), gt.k, {}};
  for (auto i : gt.indices) m.values.push_back(static_cast<std::int32_t>(i));
  write_ivecs(path, m);
}

inline GroundTruth load_ground_truth(const std::string& path) {
  const auto m = read_ivecs(path);
  GroundTruth gt{m.cols, {}};
  for (auto v : m.values) {
    if (v < 0) throw format_error("ground truth: negative index in " + path, 0);
    gt.indices.push_back(static_cast<std::uint32_t>(v));
  }
  return gt;
}

// ---- synthetic data -----------------------------------------------------------

struct GmmSample {
  VectorSet points;
  std::vector<std::uint32_t> labels;
  std::vector<double> means;  // components x d
};

// Equal-weight mixture of unit-variance isotropic Gaussians whose means are
// uniform in [-spread, spread]^d.
inline GmmSample gmm_sample(std::size_t n, std::size_t d, std::size_t components, double spread, std::uint64_t seed) {
  require(components >= 1, "gen_gmm: at least one component required");
  require(d >= 1, "gen_gmm: dimension must be positive");
  require(spread >= 0 && std::isfinite(spread), "gen_gmm: spread must be non-negative");
  detail::Rng rng(seed);
  GmmSample s{VectorSet(d), {}, std::vector<double>(components * d)};
  for (auto& m : s.means) m = rng.uniform(-spread, spread);
  s.points.reserve(n);
  s.labels.reserve(n);
  std::vector<float> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::uint32_t>(rng.below(components));
    for (std::size_t t = 0; t < d; ++t) x[t] = static_cast<float>(s.means[c * d + t] + rng.normal());
    s.points.push_back(x);
    s.labels.push_back(c);
  }
  return s;
}

inline VectorSet gen_gmm(std::size_t n, std::size_t d, std::size_t components, double spread, std::uint64_t seed) {
  return gmm_sample(n, d, components, spread, seed).points;
}

// ---- PCA ---------------------------------------------------------------------

struct PcaProjection {
  std::vector<double> mean;        // d
  std::vector<double> components;  // out_dim x d, unit rows by decreasing variance
  std::vector<double> variances;   // out_dim
  std::size_t effective_rank = 0;  // of the full covariance

  std::size_t in_dim() const { return mean.size(); }
  std::size_t out_dim() const { return variances.size(); }

  VectorSet apply(const VectorSet& data) const {
    require(data.dim() == in_dim(), "pca: input dimension mismatch");
    VectorSet out(out_dim());
    out.reserve(data.size());
    std::vector<float> y(out_dim());
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto x = data.row(i);
      for (std::size_t c = 0; c < out_dim(); ++c) {
        double s = 0;
        for (std::size_t t = 0; t < in_dim(); ++t) s += components[c * in_dim() + t] * (x[t] - mean[t]);
        y[c] = static_cast<float>(s);
      }
      out.push_back(y);
    }
    return out;
  }
};

// Top out_dim covariance eigenvectors; each is signed so that its
// largest-magnitude entry is positive.
inline PcaProjection pca(const VectorSet& train, std::size_t out_dim) {
  const std::size_t n = train.size(), d = train.dim();
  require(out_dim >= 1 && out_dim <= d, "pca: need 1 <= out_dim <= d");
  require(n >= 2, "pca: at least two points required");
  PcaProjection p;
  p.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < d; ++t) p.mean[t] += train.row(i)[t];
  for (auto& m : p.mean) m /= static_cast<double>(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::VectorXd x(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < d; ++t) x[static_cast<Eigen::Index>(t)] = train.row(i)[t] - p.mean[t];
    cov.selfadjointView<Eigen::Lower>().rankUpdate(x);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  require(eig.info() == Eigen::Success, "pca: eigendecomposition failed");
  const auto& values = eig.eigenvalues();  // ascending
  const auto& vectors = eig.eigenvectors();
  const double top = std::max(values[static_cast<Eigen::Index>(d) - 1], 0.0);
  const double tol = top * 1e-10 * static_cast<double>(d);
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j)
    if (values[j] > tol) ++p.effective_rank;
  for (std::size_t c = 0; c < out_dim; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - c);
    Eigen::VectorXd v = vectors.col(col);
    Eigen::Index arg = 0;
    for (Eigen::Index t = 1; t < v.size(); ++t)
      if (std::abs(v[t]) > std::abs(v[arg])) arg = t;
    if (v[arg] < 0) v = -v;
    for (std::size_t t = 0; t < d; ++t) p.components.push_back(v[static_cast<Eigen::Index>(t)]);
    p.variances.push_back(std::max(values[col], 0.0));
  }
  return p;
}

// ---- ground truth ----------------------------------------------------------------

inline GroundTruth brute_force_knn(const VectorSet& base, const VectorSet& queries, std::size_t k, std::size_t threads = 1) {
  require(base.dim() == queries.dim(), "brute_force_knn: base dimension " + std::to_string(base.dim()) +
                                           " does not match query dimension " + std::to_string(queries.dim()));
  require(k >= 1 && k <= base.size(), "brute_force_knn: need 1 <= K <= n_base");
  GroundTruth gt{k, std::vector<std::uint32_t>(queries.size() * k)};
  detail::parallel_for(queries.size(), threads, [&](std::size_t q) {
    auto y = queries.row(q);
    std::vector<std::pair<double, std::uint32_t>> dist(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      auto x = base.row(i);
      double s = 0;
      for (std::size_t t = 0; t < x.size(); ++t) {
        const double diff = static_cast<double>(x[t]) - y[t];
        s += diff * diff;
      }
      dist[i] = {s, static_cast<std::uint32_t>(i)};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t j = 0; j < k; ++j) gt.indices[q * k + j] = dist[j].second;
  });
  return gt;
}

}  // namespace vlh
