#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "test_support.hpp"
#include "vlh/vlc.hpp"

using namespace vlh;
using vlh::testing::random_code;
using vlh::testing::random_codes;

namespace {

BitCodeSet codes_from_substrings(std::uint32_t width, const std::vector<std::uint64_t>& values) {
  BitCodeSet set(width);
  for (auto v : values) set.push_back(BitCode::from_uint(v, width));
  return set;
}

// Direct evaluation of sum_i p_i * l_i over the expanded alphabet.
double dense_expected_length(const SubEncoder& enc, const SymbolDistribution& dist) {
  const auto p = dist.dense_probabilities();
  double s = 0.0;
  for (std::uint64_t sym = 0; sym < p.size(); ++sym) s += p[sym] * static_cast<double>(enc.codeword(sym).size());
  return s;
}

double entropy_bits(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0) h -= x * std::log2(x);
  return h;
}

std::vector<double> random_probabilities(std::mt19937_64& rng, std::size_t q) {
  std::exponential_distribution<double> exp1(1.0);
  std::vector<double> p(q);
  double sum = 0.0;
  for (auto& x : p) sum += (x = std::pow(exp1(rng), 3.0));
  for (auto& x : p) x /= sum;
  return p;
}

}  // namespace

TEST(Distribution, CountingBeforeSmoothing) {
  auto codes = codes_from_substrings(2, {0b00, 0b00, 0b01, 0b11});
  auto layout = SubstringLayout::uniform(2, 1);
  auto d = estimate_distribution(codes, layout, 0, EpsilonPolicy::constant(1e-15));
  EXPECT_EQ(d.count(0), 2u);
  EXPECT_EQ(d.count(1), 1u);
  EXPECT_EQ(d.count(2), 0u);
  EXPECT_EQ(d.count(3), 1u);
  EXPECT_NEAR(d.probability(0), 0.5, 1e-12);
  EXPECT_NEAR(d.probability(1), 0.25, 1e-12);
  EXPECT_NEAR(d.probability(2), 0.0, 1e-12);
  EXPECT_NEAR(d.probability(3), 0.25, 1e-12);
}

TEST(Distribution, DegenerateSubstring) {
  const std::uint32_t b = 4;
  std::vector<std::uint64_t> values(1000, 0b0101);
  auto codes = codes_from_substrings(b, values);
  auto d = estimate_distribution(codes, SubstringLayout::uniform(b, 1), 0);
  const double eps = 1.0 / 2000.0;
  EXPECT_DOUBLE_EQ(d.epsilon(), eps);
  EXPECT_NEAR(d.probability(0b0101), 1.0 - 15 * eps, 1e-4);
  for (std::uint64_t s = 0; s < 16; ++s)
    if (s != 0b0101) {
      EXPECT_NEAR(d.probability(s), eps, 1e-5);
      EXPECT_GT(d.probability(s), 0.0);
    }
  EXPECT_NEAR(d.total_probability(), 1.0, 1e-9);
}

TEST(Distribution, UniformSubstringsWithinThreeStandardErrors) {
  std::mt19937_64 rng(20240601);
  const std::size_t n = 1000000;
  auto codes = random_codes(rng, n, 8);
  auto d = estimate_distribution(codes, SubstringLayout::uniform(8, 1), 0);
  const double p = 1.0 / 256.0;
  const double se = std::sqrt(p * (1 - p) / static_cast<double>(n));
  for (std::uint64_t s = 0; s < 256; ++s) EXPECT_NEAR(d.probability(s), p, 3 * se) << "symbol " << s;
  EXPECT_NEAR(d.total_probability(), 1.0, 1e-9);
}

TEST(Distribution, EmptyCodeSetRejected) {
  BitCodeSet empty(8);
  EXPECT_THROW(estimate_distribution(empty, SubstringLayout::uniform(8, 1), 0), contract_error);
}

TEST(Nonsingular, FirstFiveCodewords) {
  std::vector<double> p(8);
  const double w[] = {0.3, 0.2, 0.15, 0.1, 0.08, 0.07, 0.06, 0.04};
  // Permute so rank order differs from symbol order.
  const std::uint64_t sym_of_rank[] = {5, 2, 7, 0, 3, 1, 4, 6};
  for (int i = 0; i < 8; ++i) p[sym_of_rank[i]] = w[i];
  auto enc = build_nonsingular(SymbolDistribution::from_probabilities(3, p));
  EXPECT_EQ(enc.codeword(5), "0");
  EXPECT_EQ(enc.codeword(2), "1");
  EXPECT_EQ(enc.codeword(7), "10");
  EXPECT_EQ(enc.codeword(0), "11");
  EXPECT_EQ(enc.codeword(3), "100");
  EXPECT_EQ(enc.symbol_at(4), 3u);
}

TEST(Nonsingular, TiesByAscendingSymbol) {
  std::vector<double> p(4, 0.25);
  auto enc = build_nonsingular(SymbolDistribution::from_probabilities(2, p));
  for (std::uint64_t s = 0; s < 4; ++s) EXPECT_EQ(enc.index_of(s), s);
}

TEST(Nonsingular, LengthsForcedByConstruction) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    auto enc = build_nonsingular(SymbolDistribution::from_probabilities(2, random_probabilities(rng, 4)));
    std::vector<std::size_t> by_rank;
    for (std::uint64_t v = 0; v < 4; ++v) by_rank.push_back(enc.codeword(enc.symbol_at(v)).size());
    EXPECT_EQ(by_rank, (std::vector<std::size_t>{1, 1, 2, 2}));
  }
}

TEST(Nonsingular, CodeInvariantsDense) {
  std::mt19937_64 rng(6);
  for (std::uint32_t b : {1u, 3u, 4u, 8u, 12u}) {
    auto enc = build_nonsingular(SymbolDistribution::from_probabilities(b, random_probabilities(rng, 1u << b)));
    ASSERT_TRUE(enc.dense());
    std::set<std::string> words;
    std::size_t prev = 0, max_len = 0;
    for (std::uint64_t v = 0; v < (1u << b); ++v) {
      const auto sym = enc.symbol_at(v);
      EXPECT_EQ(enc.index_of(sym), v);
      const auto cw = enc.codeword(sym);
      EXPECT_TRUE(cw.size() == 1 || cw[0] == '1') << cw;
      EXPECT_GE(cw.size(), prev);
      prev = cw.size();
      max_len = std::max(max_len, cw.size());
      words.insert(cw);
    }
    EXPECT_EQ(words.size(), std::size_t{1} << b);
    EXPECT_EQ(max_len, b);
  }
}

TEST(Nonsingular, DecodeTableSizeForSixteenBits) {
  std::vector<double> p(1u << 16, 1.0 / 65536.0);
  auto enc = build_nonsingular(SymbolDistribution::from_probabilities(16, p));
  EXPECT_EQ(enc.decode_table().size(), 65536u);
}

TEST(Nonsingular, SparseWidthIsABijection) {
  // 32-bit substrings use the sparse encoder; probe it against its own ordering rules.
  std::mt19937_64 rng(8);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> counts;
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 500; ++i) {
    std::uint64_t s = rng() & 0xFFFFFFFFu;
    if (i < 10) s = static_cast<std::uint64_t>(i) * 3;  // cluster near zero to exercise the gap logic
    if (seen.insert(s).second) counts.emplace_back(s, 1 + rng() % 50);
  }
  auto dist = SymbolDistribution::from_counts(32, counts);
  auto enc = build_nonsingular(dist);
  ASSERT_FALSE(enc.dense());
  EXPECT_EQ(enc.ranked_prefix().size(), seen.size());
  // Seen symbols take the first ranks.
  for (auto s : seen) EXPECT_LT(enc.index_of(s), seen.size());
  // Unseen symbols follow in ascending order: walk the first few hundred.
  std::uint64_t expect_index = seen.size();
  for (std::uint64_t s = 0; s < 400; ++s) {
    if (seen.count(s)) continue;
    EXPECT_EQ(enc.index_of(s), expect_index);
    EXPECT_EQ(enc.symbol_at(expect_index), s);
    ++expect_index;
  }
  for (int t = 0; t < 20000; ++t) {
    const std::uint64_t v = rng() & 0xFFFFFFFFu;
    EXPECT_EQ(enc.index_of(enc.symbol_at(v)), v);
    const std::uint64_t s = rng() & 0xFFFFFFFFu;
    EXPECT_EQ(enc.symbol_at(enc.index_of(s)), s);
  }
  std::uint64_t last_unseen = 0xFFFFFFFFu;
  while (seen.count(last_unseen)) --last_unseen;
  EXPECT_EQ(enc.symbol_at(0xFFFFFFFFu), last_unseen);
}

TEST(Huffman, DyadicAndUniform) {
  const std::vector<double> dyadic{0.5, 0.25, 0.125, 0.125};
  auto d = SymbolDistribution::from_probabilities(2, dyadic);
  auto h = build_huffman(d);
  EXPECT_DOUBLE_EQ(h.expected_length(d), 1.75);
  EXPECT_DOUBLE_EQ(h.kraft_sum(), 1.0);

  for (std::uint32_t b : {1u, 4u, 8u}) {
    std::vector<double> u(1u << b, 1.0 / (1u << b));
    auto du = SymbolDistribution::from_probabilities(b, u);
    EXPECT_DOUBLE_EQ(build_huffman(du).expected_length(du), b);
  }
}

TEST(Huffman, PrefixFreeKraftAndEntropyBounds) {
  std::mt19937_64 rng(9);
  for (std::uint32_t b : {2u, 3u, 6u, 10u}) {
    for (int t = 0; t < 10; ++t) {
      auto p = random_probabilities(rng, 1u << b);
      auto d = SymbolDistribution::from_probabilities(b, p);
      auto h = build_huffman(d);
      EXPECT_LE(h.kraft_sum(), 1.0 + 1e-12);
      const double L = h.expected_length(d), H = entropy_bits(p);
      EXPECT_GE(L, H - 1e-9);
      EXPECT_LT(L, H + 1.0);
      ASSERT_EQ(h.codewords.size(), p.size());
      // No codeword is a prefix of another.
      for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < p.size(); ++j) {
          if (i == j || h.lengths[i] > h.lengths[j]) continue;
          EXPECT_NE(h.codewords[j] >> (h.lengths[j] - h.lengths[i]), h.codewords[i]);
        }
    }
  }
}

TEST(ExpectedLength, HandExamples) {
  const std::vector<double> uniform{0.25, 0.25, 0.25, 0.25};
  auto du = SymbolDistribution::from_probabilities(2, uniform);
  EXPECT_DOUBLE_EQ(expected_length(build_nonsingular(du), du), 1.5);

  const std::vector<double> dyadic{0.5, 0.25, 0.125, 0.125};
  auto dd = SymbolDistribution::from_probabilities(2, dyadic);
  EXPECT_DOUBLE_EQ(expected_length(build_nonsingular(dd), dd), 1.25);

  std::vector<std::uint64_t> same(5000, 9);
  auto codes = codes_from_substrings(6, same);
  auto deg = estimate_distribution(codes, SubstringLayout::uniform(6, 1), 0, EpsilonPolicy::constant(1e-12));
  EXPECT_NEAR(expected_length(build_nonsingular(deg), deg), 1.0, 1e-9);
}

TEST(ExpectedLength, MatchesDenseSummation) {
  std::mt19937_64 rng(10);
  for (std::uint32_t b : {3u, 8u, 12u}) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> counts;
    for (std::uint64_t s = 0; s < (1u << b); s += 1 + rng() % 5) counts.emplace_back(s, 1 + rng() % 100);
    auto d = SymbolDistribution::from_counts(b, counts);
    auto enc = build_nonsingular(d);
    EXPECT_NEAR(expected_length(enc, d), dense_expected_length(enc, d), 1e-9);
  }
  auto d2 = SymbolDistribution::from_probabilities(2, std::vector<double>{0.25, 0.25, 0.25, 0.25});
  auto d3 = SymbolDistribution::from_probabilities(3, std::vector<double>(8, 0.125));
  EXPECT_THROW(expected_length(build_nonsingular(d2), d3), contract_error);
}

TEST(ExpectedLength, NonsingularNeverWorseThanHuffman) {
  std::mt19937_64 rng(12);
  for (std::uint32_t b : {2u, 4u, 8u}) {
    for (int t = 0; t < 25; ++t) {
      auto d = SymbolDistribution::from_probabilities(b, random_probabilities(rng, 1u << b));
      const double ns = expected_length(build_nonsingular(d), d);
      const double hf = build_huffman(d).expected_length(d);
      EXPECT_LE(ns, hf);
      EXPECT_LE(hf, b + 1e-12);
    }
  }
}

TEST(EncoderSet, OneBitSubstringsGiveFixedLength) {
  std::mt19937_64 rng(13);
  auto codes = random_codes(rng, 2000, 24);
  auto set = build_encoder_set(codes, SubstringLayout::uniform(24, 24));
  EXPECT_DOUBLE_EQ(set.total_expected_length(), 24.0);
}

TEST(EncoderSet, SixteenActiveSymbolsStayWithinFourBits) {
  // Each 8-bit substring takes one of 16 fixed values, as B-KMH codes with k = 16 do.
  std::mt19937_64 rng(14);
  const std::uint32_t M = 4;
  std::vector<std::vector<std::uint64_t>> active(M);
  for (auto& a : active) {
    std::set<std::uint64_t> s;
    while (s.size() < 16) s.insert(rng() & 0xFF);
    a.assign(s.begin(), s.end());
  }
  BitCodeSet codes(8 * M);
  const std::size_t n = 5000;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint64_t> parts(M);
    for (std::uint32_t m = 0; m < M; ++m) parts[m] = active[m][rng() % 16];
    codes.push_back(join(parts, SubstringLayout::uniform(8 * M, M)));
  }
  auto set = build_encoder_set(codes, SubstringLayout::uniform(8 * M, M));
  const double eps_share = 240.0 / (2.0 * n) * 8.0;  // unseen mass times the longest codeword
  for (double L : set.expected_lengths()) EXPECT_LE(L, 4.0 + eps_share);
}

TEST(EncoderSet, RepeatedCodeEncodesToSingleBitPerSubstring) {
  std::mt19937_64 rng(15);
  auto x = random_code(rng, 64);
  BitCodeSet codes(64);
  for (int i = 0; i < 10000; ++i) codes.push_back(x);
  auto set = build_encoder_set(codes, SubstringLayout::uniform(64, 8));
  EXPECT_NEAR(set.total_expected_length(), 8.0, 8 * 255 * 8 / 20000.0);
  auto rec = encode_record(x, set);
  EXPECT_EQ(rec.bits, 8u * (3 + 1));
}

TEST(Records, RoundTripOnTrainingAndFreshCodes) {
  std::mt19937_64 rng(16);
  for (auto [bits, M] : {std::pair{64u, 8u}, std::pair{64u, 4u}, std::pair{128u, 4u}, std::pair{50u, 3u}}) {
    auto train = random_codes(rng, 3000, bits);
    auto set = build_encoder_set(train, SubstringLayout::uniform(bits, M));
    for (std::size_t i = 0; i < train.size(); ++i) {
      auto rec = encode_record(train[i], set);
      ASSERT_EQ(decode_record(rec, set), train[i]);
    }
    for (int t = 0; t < 3000; ++t) {
      auto x = random_code(rng, bits);
      ASSERT_EQ(decode_record(encode_record(x, set), set), x);
    }
  }
}

TEST(Records, StoredBitsArithmetic) {
  // 32-bit codes, M = 2, b = 16: the length field is 4 bits.
  std::mt19937_64 rng(17);
  auto train = random_codes(rng, 500, 32);
  auto set = build_encoder_set(train, SubstringLayout::uniform(32, 2));
  std::vector<std::uint64_t> best(2), worst(2);
  for (int m = 0; m < 2; ++m) {
    best[m] = set.encoder(m).symbol_at(0);
    worst[m] = set.encoder(m).symbol_at(0xFFFF);
  }
  auto layout = set.layout();
  auto rb = encode_record(join(best, layout), set);
  EXPECT_EQ(rb.bits, 2u * (4 + 1));
  auto rw = encode_record(join(worst, layout), set);
  EXPECT_EQ(rw.bits, 2u * (4 + 16));
  EXPECT_GE(rw.bits, 32u);
  auto decoded = decode_record(rb, set);
  EXPECT_EQ(split(decoded, layout), best);
}

TEST(Records, MalformedRecordsAreRejected) {
  std::mt19937_64 rng(18);
  auto train = random_codes(rng, 200, 12);
  auto set = build_encoder_set(train, SubstringLayout::uniform(12, 2));  // b = 6, 3-bit length fields
  auto rec = encode_record(train[0], set);

  VarRecord truncated = rec;
  truncated.bits -= 1;
  EXPECT_THROW(decode_record(truncated, set), decode_error);

  VarRecord trailing = rec;
  trailing.bits += 1;
  trailing.words.resize(detail::words_for_bits(trailing.bits));
  EXPECT_THROW(decode_record(trailing, set), decode_error);

  // Length field 7 means an 8-bit codeword in a 6-bit substring.
  VarRecord too_long{{0b111}, 3 + 8 + 3 + 1};
  EXPECT_THROW(decode_record(too_long, set), decode_error);

  // Length 2 with value 01: leading zero is never a valid codeword.
  VarRecord leading_zero{{0b01'001 | (0b000 << 5)}, 5 + 4};
  EXPECT_THROW(decode_record(leading_zero, set), decode_error);
}

TEST(EncoderFile, RoundTripDenseAndSparse) {
  std::mt19937_64 rng(19);
  for (auto [bits, M] : {std::pair{32u, 4u}, std::pair{64u, 2u}}) {
    auto train = random_codes(rng, 800, bits);
    auto set = build_encoder_set(train, SubstringLayout::uniform(bits, M));
    auto bytes = serialize_encoder_set(set);
    auto loaded = deserialize_encoder_set(bytes);
    EXPECT_EQ(loaded, set);
    EXPECT_EQ(serialize_encoder_set(loaded), bytes);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(encode_record(train[i], loaded), encode_record(train[i], set));
  }
}

TEST(EncoderFile, HeaderLayoutAndCorruption) {
  const std::vector<double> p{0.1, 0.6, 0.2, 0.1};
  SubEncoder enc = build_nonsingular(SymbolDistribution::from_probabilities(2, p));
  EncoderSet set(SubstringLayout::uniform(2, 1), {enc});
  const std::vector<std::uint8_t> expected = {'V', 'L', 'E', '1', 1, 0, 0, 0, 2, 0, 0, 0,
                                              1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0};
  EXPECT_EQ(serialize_encoder_set(set), expected);

  auto dup = expected;
  dup[16] = 1;  // rank 2 repeats symbol 1
  EXPECT_THROW(deserialize_encoder_set(dup), format_error);
  auto cut = expected;
  cut.resize(cut.size() - 2);
  EXPECT_THROW(deserialize_encoder_set(cut), format_error);
}
