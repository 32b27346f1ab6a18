#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "test_support.hpp"
#include "vlh/lsh.hpp"
#include "vlh/vlc.hpp"

using namespace vlh;

namespace {

std::vector<float> gaussian_vector(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> x(d);
  for (auto& v : x) v = g(rng);
  return x;
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

}  // namespace

TEST(LshTrain, DeterministicUnitDirections) {
  auto a = lsh_train(32, 64, 5), b = lsh_train(32, 64, 5), c = lsh_train(32, 64, 6);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.projections, c.projections);
  for (std::size_t m = 0; m < 64; ++m) EXPECT_NEAR(dot(a.direction(m), a.direction(m)), 1.0, 1e-6);
  EXPECT_THROW(lsh_train(0, 8, 1), contract_error);
  EXPECT_THROW(lsh_train(8, 8, 1, 1.0), contract_error);
}

TEST(LshTrain, IndependentDirectionsAreNearlyOrthogonal) {
  const std::size_t d = 2000;
  auto model = lsh_train(d, 48, 9);
  // cos of two random unit vectors has standard deviation 1/sqrt(d).
  double worst = 0;
  for (std::size_t i = 0; i < 48; ++i)
    for (std::size_t j = i + 1; j < 48; ++j) worst = std::max(worst, std::abs(dot(model.direction(i), model.direction(j))));
  EXPECT_LT(worst, 5.0 / std::sqrt(static_cast<double>(d)));
}

TEST(LshTrain, StrongCorrelationCollapsesExpectedLength) {
  std::mt19937_64 rng(1);
  auto model = lsh_train(32, 64, 2, 0.999);
  BitCodeSet codes(64);
  for (int i = 0; i < 100000; ++i) codes.push_back(lsh_encode(model, gaussian_vector(rng, 32)));
  auto set = build_encoder_set(codes, SubstringLayout::uniform(64, 8));
  // The smoothing mass of ~254 unseen symbols alone adds about 0.009 bits here.
  for (double l : set.expected_lengths()) EXPECT_LT(l, 1.05);
}

TEST(LshEncode, BoundaryAndSign) {
  auto model = lsh_train(16, 40, 3);
  std::vector<float> zero(16, 0.0f);
  auto ones = lsh_encode(model, zero);
  for (std::size_t m = 0; m < 40; ++m) EXPECT_TRUE(ones.test(m));

  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    auto x = gaussian_vector(rng, 16);
    auto neg = x;
    for (auto& v : neg) v = -v;
    auto cx = lsh_encode(model, x), cn = lsh_encode(model, neg);
    for (std::size_t m = 0; m < 40; ++m) {
      if (dot(model.direction(m), x) != 0) {
        EXPECT_NE(cx.test(m), cn.test(m));
      }
    }
    for (float alpha : {0.5f, 2.0f, 3.7f}) {
      auto scaled = x;
      for (auto& v : scaled) v *= alpha;
      EXPECT_EQ(lsh_encode(model, scaled), cx);
    }
  }
  std::vector<float> wrong(15);
  EXPECT_THROW(lsh_encode(model, wrong), contract_error);
}

TEST(LshEncode, CollisionRateFollowsAngle) {
  // For random hyperplanes, P(bit agrees) = 1 - theta / pi.
  const std::size_t d = 24;
  auto model = lsh_train(d, 256, 7);
  std::mt19937_64 rng(8);
  double previous = 1.0;
  for (double theta : {0.2, 0.6, 1.0, 1.6, 2.4}) {
    std::size_t agree = 0, total = 0;
    for (int t = 0; t < 200; ++t) {
      // Orthonormal pair (u, v), then y at angle theta from u.
      auto u = gaussian_vector(rng, d), v = gaussian_vector(rng, d);
      const double nu = std::sqrt(dot(u, u));
      for (auto& x : u) x = static_cast<float>(x / nu);
      const double p = dot(u, v);
      for (std::size_t i = 0; i < d; ++i) v[i] = static_cast<float>(v[i] - p * u[i]);
      const double nv = std::sqrt(dot(v, v));
      std::vector<float> y(d);
      for (std::size_t i = 0; i < d; ++i) y[i] = static_cast<float>(std::cos(theta) * u[i] + std::sin(theta) * v[i] / nv);
      agree += 256 - hamming(lsh_encode(model, u), lsh_encode(model, y));
      total += 256;
    }
    const double rate = static_cast<double>(agree) / static_cast<double>(total);
    const double want = 1 - theta / std::numbers::pi;
    // Bits of one model are not independent across pairs; allow a generous band.
    EXPECT_NEAR(rate, want, 0.03) << "theta=" << theta;
    EXPECT_LT(rate, previous);
    previous = rate;
  }
}

TEST(LshFile, RoundTripAndCorruption) {
  auto model = lsh_train(10, 33, 11, 0.25);
  auto bytes = serialize_lsh(model);
  EXPECT_EQ(bytes.size(), 4 + 4 + 4 + 8 + 8 + 10 * 33 * 4u);
  EXPECT_EQ(deserialize_lsh(bytes), model);
  auto cut = bytes;
  cut.resize(cut.size() - 4);
  EXPECT_THROW(deserialize_lsh(cut), format_error);
  auto bad = bytes;
  bad[3] = '2';
  EXPECT_THROW(deserialize_lsh(bad), format_error);
}

TEST(LshEncodeAll, MatchesPerPointEncoding) {
  std::mt19937_64 rng(12);
  auto data = vlh::testing::mixture(rng, 200, 12, 3, 2.0);
  auto model = lsh_train(12, 70, 13);
  auto all = lsh_encode_all(model, data, 3);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(all[i], lsh_encode(model, data.row(i)));
}
