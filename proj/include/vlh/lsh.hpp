#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vlh/bitcodes.hpp"
#include "vlh/detail/binary_io.hpp"
#include "vlh/detail/parallel.hpp"
#include "vlh/detail/random.hpp"
#include "vlh/error.hpp"
#include "vlh/vector_set.hpp"

namespace vlh {

// Random-hyperplane hashing. With correlation > 0 every direction is pulled
// toward one shared direction, which makes the bits correlated.
struct LshModel {
  std::uint32_t dim = 0;
  std::uint32_t bits = 0;
  std::uint64_t seed = 0;
  double correlation = 0.0;
  std::vector<float> projections;  // bits x dim, unit rows

  std::span<const float> direction(std::size_t m) const { return {projections.data() + m * dim, dim}; }

  bool operator==(const LshModel&) const = default;
};

namespace detail {

inline std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0;
  do {
    norm = 0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace detail

inline LshModel lsh_train(std::size_t dim, std::size_t bits, std::uint64_t seed, double correlation = 0.0) {
  require(dim >= 1 && bits >= 1, "lsh_train: dimension and code length must be positive");
  require(correlation >= 0 && correlation < 1, "lsh_train: correlation must be in [0, 1)");
  detail::Rng rng(seed);
  LshModel model{static_cast<std::uint32_t>(dim), static_cast<std::uint32_t>(bits), seed, correlation, {}};
  model.projections.reserve(bits * dim);
  const auto shared = detail::random_unit(rng, dim);
  for (std::size_t m = 0; m < bits; ++m) {
    auto w = detail::random_unit(rng, dim);
    double norm = 0;
    for (std::size_t t = 0; t < dim; ++t) {
      w[t] = (1 - correlation) * w[t] + correlation * shared[t];
      norm += w[t] * w[t];
    }
    norm = std::sqrt(norm);
    if (norm == 0) w = shared, norm = 1;  // exact cancellation, measure zero
    for (std::size_t t = 0; t < dim; ++t) model.projections.push_back(static_cast<float>(w[t] / norm));
  }
  return model;
}

// Bit m is 1 iff <w_m, x> >= 0.
inline BitCode lsh_encode(const LshModel& model, std::span<const float> x) {
  require(x.size() == model.dim, "lsh_encode: dimension " + std::to_string(x.size()) + " does not match model dimension " +
                                     std::to_string(model.dim));
  BitCode code(model.bits);
  for (std::size_t m = 0; m < model.bits; ++m) {
    auto w = model.direction(m);
    double dot = 0;
    for (std::size_t t = 0; t < model.dim; ++t) dot += static_cast<double>(w[t]) * x[t];
    code.set(m, dot >= 0);
  }
  return code;
}

inline BitCodeSet lsh_encode_all(const LshModel& model, const VectorSet& data, std::size_t threads = 1) {
  std::vector<BitCode> codes(data.size());
  detail::parallel_for(data.size(), threads, [&](std::size_t i) { codes[i] = lsh_encode(model, data.row(i)); });
  BitCodeSet out(model.bits);
  out.reserve(codes.size());
  for (const auto& c : codes) out.push_back(c);
  return out;
}

// ---- "LSH1" model file -------------------------------------------------------
// magic | d:u32 | B:u32 | seed:u64 | correlation:f64 | B x d f32 projections

inline std::vector<std::uint8_t> serialize_lsh(const LshModel& model) {
  require(model.projections.size() == std::size_t{model.bits} * model.dim, "serialize_lsh: projection storage mismatch");
  detail::ByteWriter w;
  w.magic("LSH1");
  w.u32(model.dim);
  w.u32(model.bits);
  w.u64(model.seed);
  w.f64(model.correlation);
  for (float v : model.projections) w.f32(v);
  return w.take();
}

inline LshModel deserialize_lsh(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic("LSH1");
  LshModel model;
  model.dim = r.u32();
  model.bits = r.u32();
  if (model.dim == 0 || model.bits == 0) r.fail("dimension and code length must be positive");
  model.seed = r.u64();
  model.correlation = r.f64();
  if (!(model.correlation >= 0 && model.correlation < 1)) r.fail("correlation outside [0, 1)");
  if (std::uint64_t{model.dim} * model.bits != r.remaining() / 4 || r.remaining() % 4 != 0)
    r.fail("projection block size does not match d x B");
  model.projections.resize(std::size_t{model.dim} * model.bits);
  for (auto& v : model.projections) {
    v = r.f32();
    if (!std::isfinite(v)) r.fail("non-finite projection value");
  }
  r.expect_end();
  return model;
}

inline void save_lsh(const std::string& path, const LshModel& model) { detail::write_file(path, serialize_lsh(model)); }

inline LshModel load_lsh(const std::string& path) { return deserialize_lsh(detail::read_file(path)); }

}  // namespace vlh
