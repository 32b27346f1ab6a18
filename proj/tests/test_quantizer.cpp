#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "test_support.hpp"
#include "vlh/quantizer.hpp"

using namespace vlh;
using vlh::testing::mixture;

namespace {

VectorSet from_rows(std::size_t d, const std::vector<std::vector<float>>& rows) {
  VectorSet out(d);
  for (const auto& r : rows) out.push_back(r);
  return out;
}

Codebook random_codebook(std::mt19937_64& rng, std::size_t k, std::size_t dim, std::uint32_t beta) {
  std::normal_distribution<double> g(0.0, 2.0);
  Codebook cb;
  cb.dim = dim;
  cb.beta = beta;
  for (std::size_t i = 0; i < k * dim; ++i) cb.codewords.push_back(g(rng));
  std::set<std::uint64_t> reps;
  while (reps.size() < k) reps.insert(rng() & ((std::uint64_t{1} << beta) - 1));
  cb.representations.assign(reps.begin(), reps.end());
  std::shuffle(cb.representations.begin(), cb.representations.end(), rng);
  for (std::size_t i = 0; i < k; ++i) cb.counts.push_back(1 + rng() % 50);
  cb.scale = 0.5 + (rng() % 1000) / 500.0;
  return cb;
}

// Straight transcription of the weighted double sum, with its own distance
// and bit counting.
double naive_e_aff(const Codebook& cb) {
  double n = 0;
  for (auto c : cb.counts) n += static_cast<double>(c);
  double total = 0;
  for (std::size_t i = 0; i < cb.k(); ++i)
    for (std::size_t j = 0; j < cb.k(); ++j) {
      double d2 = 0;
      for (std::size_t t = 0; t < cb.dim; ++t) {
        const double diff = cb.codewords[i * cb.dim + t] - cb.codewords[j * cb.dim + t];
        d2 += diff * diff;
      }
      int h = 0;
      for (std::uint32_t b = 0; b < cb.beta; ++b)
        h += ((cb.representations[i] >> b) & 1u) != ((cb.representations[j] >> b) & 1u);
      const double err = std::sqrt(d2) - cb.scale * std::sqrt(static_cast<double>(h));
      total += (static_cast<double>(cb.counts[i]) * static_cast<double>(cb.counts[j]) / (n * n)) * err * err;
    }
  return total;
}

// Residuals first, then a compensated sum.
double two_pass_e_quan(const VectorSet& data, std::span<const double> cw, std::span<const std::uint32_t> assign) {
  std::vector<double> residual(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    double s = 0;
    for (std::size_t t = 0; t < data.dim(); ++t) {
      const double diff = static_cast<double>(data.row(i)[t]) - cw[assign[i] * data.dim() + t];
      s += diff * diff;
    }
    residual[i] = s;
  }
  double sum = 0, comp = 0;
  for (double r : residual) {
    const double y = r - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum / static_cast<double>(data.size());
}

std::size_t scan_nearest(std::span<const float> x, const Codebook& cb) {
  std::size_t best = 0;
  double best_d = 1e300;
  for (std::size_t i = 0; i < cb.k(); ++i) {
    double d = 0;
    for (std::size_t t = 0; t < cb.dim; ++t) d += std::pow(x[t] - cb.codewords[i * cb.dim + t], 2);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

// ---- kmeans ----------------------------------------------------------------

TEST(KMeans, DistinctPointsBecomeCodewords) {
  auto data = from_rows(2, {{0, 0}, {5, 1}, {-3, 2}, {7, -7}, {1, 1}});
  auto res = kmeans(data, 5, 11);
  EXPECT_EQ(res.history.back(), 0.0);
  std::multiset<std::pair<double, double>> got, want;
  for (std::size_t i = 0; i < 5; ++i) {
    got.insert({res.codewords[2 * i], res.codewords[2 * i + 1]});
    want.insert({data.row(i)[0], data.row(i)[1]});
  }
  EXPECT_EQ(got, want);
}

TEST(KMeans, SingleClusterIsTheMean) {
  std::mt19937_64 rng(1);
  auto data = mixture(rng, 500, 3, 4, 10.0);
  auto res = kmeans(data, 1, 3);
  for (std::size_t t = 0; t < 3; ++t) {
    double mean = 0;
    for (std::size_t i = 0; i < data.size(); ++i) mean += data.row(i)[t];
    mean /= static_cast<double>(data.size());
    EXPECT_NEAR(res.codewords[t], mean, 1e-9);
  }
}

TEST(KMeans, SeparatedOneDimensionalMixture) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  VectorSet data(1);
  for (int i = 0; i < 4000; ++i) {
    const float x = static_cast<float>((i % 2 ? 5.0 : -5.0) + g(rng));
    data.push_back(std::span<const float>(&x, 1));
  }
  auto res = kmeans(data, 2, 5);
  std::vector<double> c = res.codewords;
  std::sort(c.begin(), c.end());
  EXPECT_NEAR(c[0], -5.0, 0.2);
  EXPECT_NEAR(c[1], 5.0, 0.2);
  // Converged codewords are the means of their cells.
  ASSERT_TRUE(res.converged);
  for (std::uint32_t j = 0; j < 2; ++j) {
    double s = 0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (res.assignments[i] == j) {
        s += data.row(i)[0];
        ++m;
      }
    EXPECT_NEAR(res.codewords[j], s / static_cast<double>(m), 1e-9);
  }
}

TEST(KMeans, ErrorsAndDeterminism) {
  auto data = from_rows(1, {{1}, {2}});
  EXPECT_THROW(kmeans(data, 3, 0), contract_error);
  std::mt19937_64 rng(3);
  auto big = mixture(rng, 800, 4, 6, 5.0);
  auto a = kmeans(big, 8, 42), b = kmeans(big, 8, 42);
  EXPECT_EQ(a.codewords, b.codewords);
  EXPECT_EQ(a.assignments, b.assignments);
  auto threaded = kmeans(big, 8, 42, 100, 3);
  EXPECT_EQ(threaded.codewords, a.codewords);
}

TEST(KMeans, QuantizationErrorNeverIncreases) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto data = mixture(rng, 1500, 2 + seed % 5, 8, 3.0);
    auto res = kmeans(data, 16, seed);
    for (std::size_t i = 1; i < res.history.size(); ++i) EXPECT_LE(res.history[i], res.history[i - 1]);
    EXPECT_EQ(std::accumulate(res.counts.begin(), res.counts.end(), std::uint64_t{0}), data.size());
  }
}

TEST(KMeans, DuplicatePointsEmptyCells) {
  std::vector<std::vector<float>> rows(10, {0.0f});
  rows.push_back({100.0f});
  auto data = from_rows(1, rows);
  auto res = kmeans(data, 3, 1, 20);
  EXPECT_EQ(res.history.back(), 0.0);
  EXPECT_EQ(res.assignments.size(), data.size());
}

// ---- error functions -----------------------------------------------------------

TEST(EQuan, Examples) {
  auto one = from_rows(3, {{1, 2, 3}});
  std::vector<double> c{0, 0, 1};
  std::vector<std::uint32_t> a{0};
  EXPECT_DOUBLE_EQ(e_quan(one, c, a), 1 + 4 + 4);
  std::vector<double> same{1, 2, 3};
  EXPECT_EQ(e_quan(one, same, a), 0.0);
}

TEST(EQuan, MatchesTwoPassOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto data = mixture(rng, 200 + rng() % 500, 1 + rng() % 6, 3, 20.0);
    const std::size_t k = 1 + rng() % 9;
    std::vector<double> cw(k * data.dim());
    std::normal_distribution<double> g(0, 10);
    for (auto& v : cw) v = g(rng);
    std::vector<std::uint32_t> assign(data.size());
    for (auto& x : assign) x = static_cast<std::uint32_t>(rng() % k);
    const double want = two_pass_e_quan(data, cw, assign);
    EXPECT_NEAR(e_quan(data, cw, assign), want, 1e-9 * want);
  }
}

TEST(DS, Examples) {
  EXPECT_DOUBLE_EQ(d_s(0b1111, 0b0000, 2.0), 4.0);
  EXPECT_EQ(d_s(0b1010, 0b1010, 3.0), 0.0);
}

TEST(DS, SquaredDistanceAddsOverConcatenation) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    const std::uint64_t a1 = rng() & 0xFF, b1 = rng() & 0xFF, a2 = rng() & 0xFFF, b2 = rng() & 0xFFF;
    const double s = 0.1 + (rng() % 100) / 10.0;
    const auto a = BitCode::from_uint(a1 | (a2 << 8), 20), b = BitCode::from_uint(b1 | (b2 << 8), 20);
    EXPECT_NEAR(std::pow(d_s(a, b, s), 2), std::pow(d_s(a1, b1, s), 2) + std::pow(d_s(a2, b2, s), 2), 1e-9);
  }
}

TEST(EAff, ZeroWhenDistancesMatch) {
  // Corners of a unit square carry 2-bit labels whose rescaled distances are exact.
  Codebook cb{2, 2, {0, 0, 1, 0, 0, 1, 1, 1}, {0b00, 0b01, 0b10, 0b11}, 1.0, {3, 1, 4, 1}};
  EXPECT_NEAR(e_aff(cb), 0.0, 1e-15);
  EXPECT_NEAR(optimal_scale(cb), 1.0, 1e-12);
}

TEST(EAff, PairExample) {
  Codebook cb{1, 4, {0, 3}, {0b0000, 0b1111}, 1.5, {5, 5}};
  EXPECT_NEAR(e_aff(cb), 0.0, 1e-15);
  cb.scale = 1.0;
  // Two ordered pairs, each w = 1/4, error (3 - 2)^2.
  EXPECT_NEAR(e_aff(cb), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(optimal_scale(cb), 1.5);
}

TEST(EAff, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    auto cb = random_codebook(rng, 2 + rng() % 15, 1 + rng() % 5, 4 + rng() % 5);
    const double want = naive_e_aff(cb);
    EXPECT_NEAR(e_aff(cb), want, 1e-9 * want);
  }
}

TEST(OptimalScale, GridSearchOracle) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 30; ++t) {
    auto cb = random_codebook(rng, 2 + rng() % 10, 2, 5);
    const double star = optimal_scale(cb);
    const double step = 4 * star / 1e4;
    double best_s = 0, best = 1e300;
    for (int g = 0; g <= 10000; ++g) {
      cb.scale = g * step;
      const double e = naive_e_aff(cb);
      if (e < best) {
        best = e;
        best_s = cb.scale;
      }
    }
    EXPECT_LE(std::abs(best_s - star), step);
  }
}

TEST(OptimalScale, DegenerateRepresentationsRejected) {
  Codebook single{1, 1, {0.0}, {1}, 1.0, {4}};
  EXPECT_THROW(optimal_scale(single), contract_error);
  Codebook lonely{1, 2, {0.0, 2.0}, {0, 3}, 1.0, {4, 0}};
  EXPECT_THROW(optimal_scale(lonely), contract_error);
}

// ---- KMH -------------------------------------------------------------------

TEST(Kmh, LambdaZeroIsKMeans) {
  std::mt19937_64 rng(8);
  auto data = mixture(rng, 1000, 2, 5, 6.0);
  auto cb = kmh_train(data, 8, 0.0, 9);
  auto km = kmeans(data, 8, 9);
  EXPECT_EQ(cb.codewords, km.codewords);
  EXPECT_EQ(cb.beta, 3u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(cb.representations[i], i);
  EXPECT_THROW(kmh_train(data, 6, 1.0, 0), contract_error);
}

TEST(Kmh, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    auto cb = random_codebook(rng, 8, 3, 3);
    const std::size_t j = rng() % 8;
    std::vector<double> mean{0.3, -1.0, 2.0}, c{1.0, 0.5, -0.25};
    const double lambda = 0.1 + (rng() % 100) / 10.0;
    auto g = detail::kmh_partial_gradient(cb, j, mean, lambda, c);
    for (std::size_t d = 0; d < 3; ++d) {
      auto hi = c, lo = c;
      hi[d] += 1e-6;
      lo[d] -= 1e-6;
      const double fd = (detail::kmh_partial_objective(cb, j, mean, lambda, hi) -
                         detail::kmh_partial_objective(cb, j, mean, lambda, lo)) / 2e-6;
      EXPECT_NEAR(g[d], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Kmh, PartialObjectiveTracksFullObjective) {
  // Changing c_j moves E_quan + lambda E_aff by exactly the change in the partial objective.
  std::mt19937_64 rng(10);
  auto data = mixture(rng, 300, 2, 4, 4.0);
  auto km = kmeans(data, 4, 1);
  Codebook cb{2, 2, km.codewords, {0, 1, 2, 3}, 1.0, km.counts};
  cb.scale = optimal_scale(cb);
  const double lambda = 0.7;
  const std::size_t j = 2;
  std::vector<double> mean(2, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (km.assignments[i] == j)
      for (std::size_t t = 0; t < 2; ++t) mean[t] += data.row(i)[t] / static_cast<double>(km.counts[j]);
  auto full = [&](const Codebook& c) { return e_quan(data, c, km.assignments) + lambda * e_aff(c); };
  auto moved = cb;
  moved.codewords[2 * j] += 0.4;
  moved.codewords[2 * j + 1] -= 0.9;
  const double df = full(moved) - full(cb);
  const double dp = detail::kmh_partial_objective(cb, j, mean, lambda, moved.codeword(j)) -
                    detail::kmh_partial_objective(cb, j, mean, lambda, cb.codeword(j));
  EXPECT_NEAR(df, dp, 1e-9);
  auto updated = cb;
  detail::kmh_update_codeword(updated, j, mean, lambda);
  EXPECT_LE(full(updated), full(cb));
}

TEST(Kmh, TradesQuantizationForAffinity) {
  std::mt19937_64 rng(11);
  auto data = mixture(rng, 10000, 2, 16, 8.0);
  auto km = kmeans(data, 16, 3);
  Codebook naive{2, 4, km.codewords, {}, 1.0, km.counts};
  for (std::uint64_t i = 0; i < 16; ++i) naive.representations.push_back(i);
  naive.scale = optimal_scale(naive);
  auto kmh = kmh_train(data, 16, 1.0, 3);
  auto assign = detail::assign_all(data, kmh.codewords, 1);
  EXPECT_GE(e_quan(data, kmh, assign), km.history.back());
  EXPECT_LE(e_aff(kmh), e_aff(naive));
}

// ---- B-KMH -----------------------------------------------------------------

TEST(Bkmh, MonotoneDistinctAndCodewordsUntouched) {
  std::mt19937_64 rng(12);
  auto data = mixture(rng, 2000, 2, 8, 6.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    BkmhTrace trace;
    auto cb = bkmh_train(data, 16, 6, seed, 3, 100, 100, 1, &trace);
    auto km = kmeans(data, 16, seed);
    EXPECT_EQ(cb.codewords, km.codewords);
    EXPECT_EQ(cb.counts, km.counts);
    EXPECT_NO_THROW(cb.validate());
    ASSERT_EQ(trace.e_aff.size(), 3u);
    double best = 1e300;
    for (const auto& run : trace.e_aff) {
      for (std::size_t i = 1; i < run.size(); ++i) ASSERT_LE(run[i], run[i - 1]);
      best = std::min(best, run.back());
    }
    EXPECT_DOUBLE_EQ(e_aff(cb), best);
  }
}

TEST(Bkmh, SmallInstanceAgainstExhaustiveOptimum) {
  std::mt19937_64 rng(13);
  auto data = mixture(rng, 2000, 2, 4, 5.0);
  auto km = kmeans(data, 4, 2);
  Codebook base{2, 3, km.codewords, {}, 1.0, km.counts};
  BkmhTrace trace;
  auto greedy = bkmh_assign(base, 3, 2, 5, 100, &trace);
  for (const auto& run : trace.e_aff) EXPECT_LE(run.back(), run.front());

  double optimum = 1e300;
  Codebook trial = base;
  for (std::uint64_t a = 0; a < 8; ++a)
    for (std::uint64_t b = 0; b < 8; ++b)
      for (std::uint64_t c = 0; c < 8; ++c)
        for (std::uint64_t d = 0; d < 8; ++d) {
          if (std::set<std::uint64_t>{a, b, c, d}.size() < 4) continue;
          trial.representations = {a, b, c, d};
          trial.scale = optimal_scale(trial);
          optimum = std::min(optimum, naive_e_aff(trial));
        }
  const double ratio = e_aff(greedy) / optimum;
  EXPECT_GE(ratio, 1.0 - 1e-12);
  RecordProperty("greedy_to_optimum", std::to_string(ratio));
  std::printf("greedy / exhaustive E_aff = %.4f\n", ratio);
}

TEST(Bkmh, LongerRepresentationsFitBetter) {
  std::mt19937_64 rng(14);
  auto data = mixture(rng, 5000, 2, 16, 8.0);
  auto narrow = bkmh_train(data, 16, 4, 1);
  auto wide = bkmh_train(data, 16, 8, 1);
  EXPECT_LT(e_aff(wide), e_aff(narrow));
}

TEST(Bkmh, Errors) {
  auto data = from_rows(1, {{0}, {1}, {2}, {3}, {4}});
  EXPECT_THROW(bkmh_train(data, 5, 2, 0), contract_error);
  EXPECT_NO_THROW(bkmh_train(data, 4, 2, 0));
}

// ---- encoding and product models ------------------------------------------------

TEST(Encode, CodewordsMapToTheirRepresentations) {
  ProductQuantizerModel model;
  model.subspaces.push_back(Codebook{2, 8, {0, 0, 4, 4, -4, 4}, {0x11, 0xA0, 0x0F}, 1.0, {1, 1, 1}});
  model.subspaces.push_back(Codebook{1, 8, {-1, 1}, {0x80, 0x01}, 1.0, {1, 1}});
  EXPECT_EQ(model.code_bits(), 16u);
  std::vector<float> x{-4, 4, 1};
  EXPECT_EQ(encode_point(x, model), BitCode::from_uint(0x0F | (0x01 << 8), 16));
  std::vector<float> y{4, 4, -1};
  EXPECT_EQ(encode_point(y, model), BitCode::from_uint(0xA0 | (0x80 << 8), 16));
  std::vector<float> bad{1, 2};
  EXPECT_THROW(encode_point(bad, model), contract_error);
}

TEST(Encode, NearestMatchesLinearScan) {
  std::mt19937_64 rng(15);
  auto data = mixture(rng, 3000, 8, 10, 4.0);
  ProductTrainOptions opt;
  opt.k = 16;
  opt.beta = 6;
  opt.seed = 3;
  opt.restarts = 1;
  auto model = product_train(data, 4, QuantizerMethod::bkmh, opt);
  for (std::size_t i = 0; i < 300; ++i) {
    auto x = data.row(i);
    auto code = encode_point(x, model);
    for (std::size_t m = 0; m < 4; ++m) {
      const auto& cb = model.subspaces[m];
      const auto want = cb.representations[scan_nearest(x.subspan(2 * m, 2), cb)];
      EXPECT_EQ(code.bits_at(6 * m, 6), want);
    }
    EXPECT_EQ(code, encode_point(x, model));
  }
}

TEST(ProductTrain, CodeWidths) {
  std::mt19937_64 rng(16);
  auto data = mixture(rng, 1000, 64, 8, 2.0);
  ProductTrainOptions opt;
  opt.k = 16;
  opt.beta = 8;
  opt.restarts = 1;
  opt.max_iters = 5;
  opt.max_sweeps = 5;
  auto bkmh = product_train(data, 16, QuantizerMethod::bkmh, opt);
  EXPECT_EQ(bkmh.code_bits(), 128u);
  EXPECT_EQ(bkmh.subspaces.size(), 16u);
  auto kmh = product_train(data, 16, QuantizerMethod::kmh, opt);
  EXPECT_EQ(kmh.code_bits(), 64u);
  EXPECT_EQ(kmh.layout(), SubstringLayout::uniform(64, 16));
}

TEST(ProductTrain, SingleSubspaceIsTheDirectCall) {
  std::mt19937_64 rng(17);
  auto data = mixture(rng, 800, 3, 4, 5.0);
  ProductTrainOptions opt;
  opt.k = 8;
  opt.beta = 5;
  opt.seed = 77;
  opt.restarts = 2;
  auto model = product_train(data, 1, QuantizerMethod::bkmh, opt);
  auto direct = bkmh_train(data, 8, 5, 77, 2);
  ASSERT_EQ(model.subspaces.size(), 1u);
  EXPECT_EQ(model.subspaces[0].representations, direct.representations);
  for (std::size_t i = 0; i < direct.codewords.size(); ++i)
    EXPECT_EQ(model.subspaces[0].codewords[i], static_cast<float>(direct.codewords[i]));
}

TEST(ProductTrain, SubspacesAreIndependent) {
  std::mt19937_64 rng(18);
  auto data = mixture(rng, 600, 4, 4, 5.0);
  auto other = data;
  for (std::size_t i = 0; i < other.size(); ++i) other.row(i)[3] *= -2.0f;
  ProductTrainOptions opt;
  opt.k = 4;
  opt.lambda = 0.5;
  auto a = product_train(data, 2, QuantizerMethod::kmh, opt);
  auto b = product_train(other, 2, QuantizerMethod::kmh, opt);
  EXPECT_EQ(a.subspaces[0], b.subspaces[0]);
  opt.threads = 2;
  EXPECT_EQ(product_train(data, 2, QuantizerMethod::kmh, opt), a);
}

TEST(ModelFile, RoundTripAndCorruption) {
  std::mt19937_64 rng(19);
  auto data = mixture(rng, 500, 6, 4, 5.0);
  ProductTrainOptions opt;
  opt.k = 8;
  opt.beta = 4;
  opt.restarts = 1;
  auto model = product_train(data, 3, QuantizerMethod::bkmh, opt);
  auto bytes = serialize_model(model);
  EXPECT_EQ(deserialize_model(bytes), model);
  EXPECT_EQ(serialize_model(deserialize_model(bytes)), bytes);

  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(deserialize_model(bad), format_error);
  auto cut = bytes;
  cut.pop_back();
  EXPECT_THROW(deserialize_model(cut), format_error);
  // Make representation 1 of subspace 0 equal to representation 0.
  auto dup = bytes;
  const std::size_t reps_at = 4 + 4 + 3 * 20 + 3 * 8 * 2 * 4;
  std::copy_n(dup.begin() + static_cast<std::ptrdiff_t>(reps_at), 4, dup.begin() + static_cast<std::ptrdiff_t>(reps_at + 4));
  EXPECT_THROW(deserialize_model(dup), format_error);

  auto csv = codebook_csv(model);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "subspace,index,count,representation,c0,c1");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 8);
}
