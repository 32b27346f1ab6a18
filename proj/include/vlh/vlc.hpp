#pragma once

// Variable-length coding of hash-code substrings.
//
// Each substring position m gets its own SubEncoder. Symbols are ranked by
// decreasing training frequency and the symbol of rank i (1-based) is written as
// the shortest binary string for the integer i-1: "0", "1", "10", "11", "100", ...
// The code is nonsingular but not prefix-free, so a stored record prefixes every
// codeword with an explicit ceil(log2 b)-bit length field.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vlh/bitcodes.hpp"
#include "vlh/detail/binary_io.hpp"
#include "vlh/detail/parallel.hpp"
#include "vlh/error.hpp"

namespace vlh {

// Widths up to this size keep full 2^b rank/decode tables; wider substrings use
// a sparse representation (explicitly ranked symbols + an implicit ascending tail).
inline constexpr std::uint32_t kDenseMaxWidth = 24;

namespace detail {

inline std::uint32_t ceil_log2(std::uint64_t x) { return x <= 1 ? 0 : static_cast<std::uint32_t>(std::bit_width(x - 1)); }

// Sum of codeword lengths over code indices [lo, hi). Index 0 has length 1,
// any other index v has length bit_width(v).
inline double codeword_length_sum(std::uint64_t lo, std::uint64_t hi) {
  double total = 0.0;
  if (lo >= hi) return total;
  if (lo == 0) {
    total += 1.0;
    lo = 1;
  }
  for (std::uint32_t len = 1; len <= 64 && lo < hi; ++len) {
    const std::uint64_t cls_lo = std::uint64_t{1} << (len - 1);
    const std::uint64_t cls_hi = len == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << len);
    const std::uint64_t a = std::max(lo, cls_lo);
    const std::uint64_t b = std::min(hi, cls_hi);
    if (a < b) total += static_cast<double>(b - a) * len;
  }
  return total;
}

inline std::uint64_t alphabet_size(std::uint32_t width) { return std::uint64_t{1} << width; }

}  // namespace detail

// Probability assigned to symbols absent from the training set, before renormalization.
struct EpsilonPolicy {
  // <= 0 selects 1/(2n) for a training set of n codes.
  double fixed = 0.0;

  static EpsilonPolicy half_inverse_n() { return {}; }
  static EpsilonPolicy constant(double eps) { return {eps}; }

  double resolve(std::uint64_t n) const { return fixed > 0.0 ? fixed : 1.0 / (2.0 * static_cast<double>(n)); }
};

struct SymbolMass {
  std::uint64_t symbol;
  std::uint64_t count;
  double probability;
};

// Distribution over the 2^b symbols of one substring position. Symbols listed in
// masses() carry their own probability; every other symbol has
// implicit_probability(). Training distributions list exactly the observed symbols.
class SymbolDistribution {
 public:
  SymbolDistribution() = default;

  // counts: (symbol, occurrences) pairs, any order, no duplicates.
  static SymbolDistribution from_counts(std::uint32_t width, std::vector<std::pair<std::uint64_t, std::uint64_t>> counts,
                                        EpsilonPolicy policy = {}) {
    require(width >= 1 && width <= kMaxSubstringBits, "distribution: unsupported substring width");
    std::erase_if(counts, [](const auto& c) { return c.second == 0; });
    std::sort(counts.begin(), counts.end());
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      require(counts[i].first < detail::alphabet_size(width), "distribution: symbol out of range");
      require(i == 0 || counts[i].first != counts[i - 1].first, "distribution: duplicate symbol");
      n += counts[i].second;
    }
    require(n > 0, "distribution: empty training set");

    SymbolDistribution d;
    d.width_ = width;
    d.total_ = n;
    d.epsilon_ = policy.resolve(n);
    const std::uint64_t unseen = detail::alphabet_size(width) - counts.size();
    const double z = 1.0 + static_cast<double>(unseen) * d.epsilon_;
    d.masses_.reserve(counts.size());
    for (auto [sym, c] : counts) {
      d.masses_.push_back({sym, c, (static_cast<double>(c) / static_cast<double>(n)) / z});
    }
    d.implicit_p_ = d.epsilon_ / z;
    return d;
  }

  // Dense distribution given directly as 2^b probabilities.
  static SymbolDistribution from_probabilities(std::uint32_t width, std::span<const double> p) {
    require(width >= 1 && width <= kDenseMaxWidth, "distribution: dense widths only");
    require(p.size() == detail::alphabet_size(width), "distribution: need 2^b probabilities");
    double sum = 0.0;
    for (double x : p) {
      require(x >= 0.0 && std::isfinite(x), "distribution: probabilities must be finite and non-negative");
      sum += x;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "distribution: probabilities must sum to 1");
    SymbolDistribution d;
    d.width_ = width;
    d.masses_.reserve(p.size());
    for (std::uint64_t s = 0; s < p.size(); ++s) d.masses_.push_back({s, 0, p[s]});
    return d;
  }

  std::uint32_t width() const { return width_; }
  std::uint64_t total_count() const { return total_; }
  double epsilon() const { return epsilon_; }
  double implicit_probability() const { return implicit_p_; }
  std::uint64_t implicit_symbols() const { return detail::alphabet_size(width_) - masses_.size(); }

  // Sorted by symbol.
  const std::vector<SymbolMass>& masses() const { return masses_; }

  std::uint64_t count(std::uint64_t symbol) const {
    auto it = find(symbol);
    return it == masses_.end() ? 0 : it->count;
  }

  double probability(std::uint64_t symbol) const {
    auto it = find(symbol);
    return it == masses_.end() ? implicit_p_ : it->probability;
  }

  double total_probability() const {
    double s = static_cast<double>(implicit_symbols()) * implicit_p_;
    for (const auto& m : masses_) s += m.probability;
    return s;
  }

  std::vector<double> dense_probabilities() const {
    require(width_ <= kDenseMaxWidth, "distribution: too wide to expand");
    std::vector<double> p(detail::alphabet_size(width_), implicit_p_);
    for (const auto& m : masses_) p[m.symbol] = m.probability;
    return p;
  }

 private:
  std::vector<SymbolMass>::const_iterator find(std::uint64_t symbol) const {
    auto it = std::lower_bound(masses_.begin(), masses_.end(), symbol,
                               [](const SymbolMass& m, std::uint64_t s) { return m.symbol < s; });
    return (it != masses_.end() && it->symbol == symbol) ? it : masses_.end();
  }

  std::uint32_t width_ = 0;
  std::uint64_t total_ = 0;
  double epsilon_ = 0.0;
  double implicit_p_ = 0.0;
  std::vector<SymbolMass> masses_;
};

// Distribution of substring m over a code set.
inline SymbolDistribution estimate_distribution(const BitCodeSet& codes, const SubstringLayout& layout, std::size_t m,
                                                EpsilonPolicy policy = {}) {
  if (codes.empty()) throw contract_error("estimate_distribution: empty code set");
  require(codes.bits() == layout.total_bits(), "estimate_distribution: code length does not match layout");
  require(m < layout.substrings(), "estimate_distribution: substring index out of range");
  const std::uint32_t width = layout.width(m);
  const std::size_t offset = layout.offset(m);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> counts;
  if (width <= 20) {
    std::vector<std::uint64_t> dense(detail::alphabet_size(width), 0);
    for (std::size_t i = 0; i < codes.size(); ++i) ++dense[detail::extract_bits(codes.view(i), offset, width)];
    for (std::uint64_t s = 0; s < dense.size(); ++s)
      if (dense[s] != 0) counts.emplace_back(s, dense[s]);
  } else {
    std::vector<std::uint64_t> values(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) values[i] = detail::extract_bits(codes.view(i), offset, width);
    std::sort(values.begin(), values.end());
    for (std::size_t i = 0; i < values.size();) {
      std::size_t j = i;
      while (j < values.size() && values[j] == values[i]) ++j;
      counts.emplace_back(values[i], j - i);
      i = j;
    }
  }
  return SymbolDistribution::from_counts(width, std::move(counts), policy);
}

// Nonsingular code for one substring. The codeword of a symbol is identified by
// its index (rank - 1); the index doubles as the decode-table slot.
class SubEncoder {
 public:
  SubEncoder() = default;

  // ranked: the first symbols in rank order. Symbols not listed take the
  // remaining ranks in ascending symbol order.
  SubEncoder(std::uint32_t width, std::vector<std::uint64_t> ranked) : width_(width), ranked_(std::move(ranked)) {
    require(width >= 1 && width <= kMaxSubstringBits, "SubEncoder: unsupported width");
    const std::uint64_t q = detail::alphabet_size(width);
    require(ranked_.size() <= q, "SubEncoder: more ranked symbols than the alphabet holds");
    sorted_ = ranked_;
    std::sort(sorted_.begin(), sorted_.end());
    for (std::size_t i = 0; i < sorted_.size(); ++i) {
      require(sorted_[i] < q, "SubEncoder: symbol out of range");
      require(i == 0 || sorted_[i] != sorted_[i - 1], "SubEncoder: duplicate ranked symbol");
    }
    if (width_ <= kDenseMaxWidth) {
      decode_.resize(q);
      index_.resize(q);
      for (std::uint64_t v = 0; v < q; ++v) {
        const auto s = sparse_symbol_at(v);
        decode_[v] = static_cast<std::uint32_t>(s);
        index_[s] = static_cast<std::uint32_t>(v);
      }
      sorted_.clear();
      sorted_.shrink_to_fit();
      sorted_rank_.clear();
    } else {
      sorted_rank_.resize(sorted_.size());
      for (std::size_t r = 0; r < ranked_.size(); ++r) {
        auto it = std::lower_bound(sorted_.begin(), sorted_.end(), ranked_[r]);
        sorted_rank_[static_cast<std::size_t>(it - sorted_.begin())] = r;
      }
    }
  }

  std::uint32_t width() const { return width_; }
  bool dense() const { return !decode_.empty(); }
  std::uint64_t alphabet() const { return detail::alphabet_size(width_); }

  // Codeword integer (rank - 1) of a symbol.
  std::uint64_t index_of(std::uint64_t symbol) const {
    if (dense()) return index_[symbol];
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(), symbol);
    const auto below = static_cast<std::uint64_t>(it - sorted_.begin());
    if (it != sorted_.end() && *it == symbol) return sorted_rank_[below];
    return ranked_.size() + (symbol - below);
  }

  // Decode-table lookup: symbol stored under codeword integer `index`.
  std::uint64_t symbol_at(std::uint64_t index) const {
    if (dense()) return decode_[index];
    return sparse_symbol_at(index);
  }

  static std::uint32_t codeword_length(std::uint64_t index) {
    return index == 0 ? 1u : static_cast<std::uint32_t>(std::bit_width(index));
  }

  std::uint32_t length_of(std::uint64_t symbol) const { return codeword_length(index_of(symbol)); }

  std::string codeword(std::uint64_t symbol) const {
    const auto v = index_of(symbol);
    const auto len = codeword_length(v);
    std::string s(len, '0');
    for (std::uint32_t i = 0; i < len; ++i)
      if ((v >> i) & 1u) s[len - 1 - i] = '1';
    return s;
  }

  const std::vector<std::uint64_t>& ranked_prefix() const { return ranked_; }
  std::span<const std::uint32_t> decode_table() const { return decode_; }

  bool operator==(const SubEncoder& o) const {
    if (width_ != o.width_) return false;
    if (dense() != o.dense()) return false;
    return dense() ? decode_ == o.decode_ : ranked_ == o.ranked_;
  }

 private:
  std::uint64_t sparse_symbol_at(std::uint64_t index) const {
    if (index < ranked_.size()) return ranked_[index];
    // t-th symbol (0-based, ascending) that is not in sorted_.
    const std::uint64_t t = index - ranked_.size();
    std::size_t lo = 0, hi = sorted_.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (sorted_[mid] - mid <= t)
        lo = mid + 1;
      else
        hi = mid;
    }
    return t + lo;
  }

  std::uint32_t width_ = 0;
  std::vector<std::uint64_t> ranked_;
  std::vector<std::uint64_t> sorted_;
  std::vector<std::uint64_t> sorted_rank_;
  std::vector<std::uint32_t> decode_;
  std::vector<std::uint32_t> index_;
};

inline SubEncoder build_nonsingular(const SymbolDistribution& dist) {
  std::vector<SymbolMass> order = dist.masses();
  std::stable_sort(order.begin(), order.end(), [](const SymbolMass& a, const SymbolMass& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    return a.symbol < b.symbol;
  });
  if (dist.implicit_symbols() > 0 && !order.empty())
    require(order.back().probability > dist.implicit_probability(),
            "build_nonsingular: unseen symbols must be less probable than every seen symbol");
  std::vector<std::uint64_t> ranked;
  ranked.reserve(order.size());
  for (const auto& m : order) ranked.push_back(m.symbol);
  return SubEncoder(dist.width(), std::move(ranked));
}

// L = sum_i p_i * l_i for the given encoder under `dist`.
inline double expected_length(const SubEncoder& enc, const SymbolDistribution& dist) {
  require(enc.width() == dist.width(), "expected_length: encoder and distribution widths differ");
  double explicit_sum = 0.0;
  double explicit_len = 0.0;
  for (const auto& m : dist.masses()) {
    const double len = enc.length_of(m.symbol);
    explicit_sum += m.probability * len;
    explicit_len += len;
  }
  if (dist.implicit_symbols() == 0 || dist.implicit_probability() == 0.0) return explicit_sum;
  const double all_len = detail::codeword_length_sum(0, enc.alphabet());
  return explicit_sum + dist.implicit_probability() * (all_len - explicit_len);
}

// Prefix-free baseline. Only dense widths are supported.
struct PrefixCode {
  std::uint32_t width = 0;
  std::vector<std::uint32_t> lengths;    // per symbol
  std::vector<std::uint64_t> codewords;  // canonical, MSB-first values; empty if any length > 64

  double kraft_sum() const {
    double s = 0.0;
    for (auto l : lengths) s += std::ldexp(1.0, -static_cast<int>(l));
    return s;
  }

  double expected_length(const SymbolDistribution& dist) const {
    require(dist.width() == width, "PrefixCode::expected_length: width mismatch");
    const auto p = dist.dense_probabilities();
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * lengths[i];
    return s;
  }
};

// Huffman code. Repeatedly merges the two lightest nodes; equal weights are
// resolved by the smallest symbol contained in the subtree.
inline PrefixCode build_huffman(const SymbolDistribution& dist) {
  require(dist.width() <= kDenseMaxWidth, "build_huffman: width exceeds dense limit");
  const auto p = dist.dense_probabilities();
  const std::size_t q = p.size();
  PrefixCode code;
  code.width = dist.width();
  code.lengths.assign(q, 0);
  if (q == 1) {
    code.lengths[0] = 1;
  } else {
    struct Node {
      double weight;
      std::uint64_t min_symbol;
      std::uint32_t id;
    };
    auto heavier = [](const Node& a, const Node& b) {
      if (a.weight != b.weight) return a.weight > b.weight;
      return a.min_symbol > b.min_symbol;
    };
    std::priority_queue<Node, std::vector<Node>, decltype(heavier)> heap(heavier);
    std::vector<std::uint32_t> parent(2 * q - 1, 0);
    for (std::uint32_t s = 0; s < q; ++s) heap.push({p[s], s, s});
    std::uint32_t next = static_cast<std::uint32_t>(q);
    while (heap.size() > 1) {
      const Node a = heap.top();
      heap.pop();
      const Node b = heap.top();
      heap.pop();
      parent[a.id] = next;
      parent[b.id] = next;
      heap.push({a.weight + b.weight, std::min(a.min_symbol, b.min_symbol), next});
      ++next;
    }
    const std::uint32_t root = next - 1;
    std::vector<std::uint32_t> depth(2 * q - 1, 0);
    for (std::uint32_t id = root; id-- > 0;) depth[id] = depth[parent[id]] + 1;
    for (std::size_t s = 0; s < q; ++s) code.lengths[s] = depth[s];
  }

  const std::uint32_t max_len = *std::max_element(code.lengths.begin(), code.lengths.end());
  if (max_len <= 64) {
    std::vector<std::uint32_t> order(q);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return code.lengths[a] < code.lengths[b]; });
    code.codewords.assign(q, 0);
    std::uint64_t value = 0;
    std::uint32_t prev_len = code.lengths[order[0]];
    for (std::size_t i = 0; i < q; ++i) {
      const auto len = code.lengths[order[i]];
      if (i > 0) value = (value + 1) << (len - prev_len);
      code.codewords[order[i]] = value;
      prev_len = len;
    }
  }
  return code;
}

// A stored entry: per substring a ceil(log2 b)-bit field holding (l - 1), then
// the l-bit codeword, packed LSB-first.
struct VarRecord {
  std::vector<std::uint64_t> words;
  std::uint32_t bits = 0;

  bool operator==(const VarRecord&) const = default;
};

namespace detail {

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint64_t>& out, std::size_t start_bit = 0) : out_(out), pos_(start_bit) {}

  void put(std::uint64_t value, std::uint32_t width) {
    if (width == 0) return;
    const std::size_t need = words_for_bits(pos_ + width);
    if (out_.size() < need) out_.resize(need, 0);
    deposit_bits(out_, pos_, width, value);
    pos_ += width;
  }

  std::size_t position() const { return pos_; }

 private:
  std::vector<std::uint64_t>& out_;
  std::size_t pos_;
};

}  // namespace detail

class EncoderSet {
 public:
  EncoderSet() = default;

  EncoderSet(SubstringLayout layout, std::vector<SubEncoder> encoders, std::vector<SymbolDistribution> distributions = {})
      : layout_(std::move(layout)), encoders_(std::move(encoders)), distributions_(std::move(distributions)) {
    require(encoders_.size() == layout_.substrings(), "EncoderSet: one encoder per substring required");
    for (std::size_t m = 0; m < encoders_.size(); ++m)
      require(encoders_[m].width() == layout_.width(m), "EncoderSet: encoder width does not match layout");
    require(distributions_.empty() || distributions_.size() == encoders_.size(),
            "EncoderSet: distribution count does not match substrings");
    length_fields_.resize(encoders_.size());
    for (std::size_t m = 0; m < encoders_.size(); ++m) length_fields_[m] = detail::ceil_log2(layout_.width(m));
    if (!distributions_.empty()) {
      expected_.resize(encoders_.size());
      for (std::size_t m = 0; m < encoders_.size(); ++m) expected_[m] = expected_length(encoders_[m], distributions_[m]);
    }
  }

  const SubstringLayout& layout() const { return layout_; }
  std::size_t substrings() const { return encoders_.size(); }
  const SubEncoder& encoder(std::size_t m) const { return encoders_[m]; }
  const std::vector<SubEncoder>& encoders() const { return encoders_; }

  bool has_distributions() const { return !distributions_.empty(); }
  const SymbolDistribution& distribution(std::size_t m) const { return distributions_.at(m); }

  // L^(m); empty when the set was loaded from disk without training statistics.
  const std::vector<double>& expected_lengths() const { return expected_; }
  double total_expected_length() const { return std::accumulate(expected_.begin(), expected_.end(), 0.0); }

  std::uint32_t length_field_bits(std::size_t m) const { return length_fields_[m]; }

  // Appends the record for `code` to `out` at `writer`'s position.
  void encode_to(std::span<const std::uint64_t> code, detail::BitWriter& writer) const {
    for (std::size_t m = 0; m < encoders_.size(); ++m) {
      const std::uint64_t sym = detail::extract_bits(code, layout_.offset(m), layout_.width(m));
      const std::uint64_t v = encoders_[m].index_of(sym);
      const std::uint32_t len = SubEncoder::codeword_length(v);
      writer.put(len - 1, length_fields_[m]);
      writer.put(v, len);
    }
  }

  // Decodes `nbits` starting at `start` into `out` (words_for_bits(B) words).
  void decode_from(std::span<const std::uint64_t> src, std::size_t start, std::uint32_t nbits,
                   std::span<std::uint64_t> out) const {
    std::size_t pos = start;
    const std::size_t end = start + nbits;
    std::fill(out.begin(), out.end(), 0);
    for (std::size_t m = 0; m < encoders_.size(); ++m) {
      const std::uint32_t field = length_fields_[m];
      if (pos + field > end) throw decode_error("record truncated in length field of substring " + std::to_string(m));
      const std::uint32_t len = static_cast<std::uint32_t>(detail::extract_bits(src, pos, field)) + 1;
      pos += field;
      if (len > layout_.width(m)) throw decode_error("codeword length exceeds width in substring " + std::to_string(m));
      if (pos + len > end) throw decode_error("record truncated in codeword of substring " + std::to_string(m));
      const std::uint64_t v = detail::extract_bits(src, pos, len);
      pos += len;
      if (len > 1 && (v >> (len - 1)) == 0)
        throw decode_error("codeword with leading zero in substring " + std::to_string(m));
      detail::deposit_bits(out, layout_.offset(m), layout_.width(m), encoders_[m].symbol_at(v));
    }
    if (pos != end) throw decode_error("record has trailing bits");
  }

  bool operator==(const EncoderSet& o) const { return layout_ == o.layout_ && encoders_ == o.encoders_; }

 private:
  SubstringLayout layout_;
  std::vector<SubEncoder> encoders_;
  std::vector<SymbolDistribution> distributions_;
  std::vector<double> expected_;
  std::vector<std::uint32_t> length_fields_;
};

inline EncoderSet build_encoder_set(const BitCodeSet& codes, const SubstringLayout& layout, EpsilonPolicy policy = {},
                                    std::size_t threads = 1) {
  if (codes.empty()) throw contract_error("build_encoder_set: empty code set");
  require(codes.bits() == layout.total_bits(), "build_encoder_set: code length does not match layout");
  const std::size_t M = layout.substrings();
  std::vector<SymbolDistribution> dists(M);
  std::vector<SubEncoder> encoders(M);
  detail::parallel_for(M, threads, [&](std::size_t m) {
    dists[m] = estimate_distribution(codes, layout, m, policy);
    encoders[m] = build_nonsingular(dists[m]);
  });
  return EncoderSet(layout, std::move(encoders), std::move(dists));
}

inline VarRecord encode_record(std::span<const std::uint64_t> code, const EncoderSet& set) {
  VarRecord rec;
  detail::BitWriter w(rec.words);
  set.encode_to(code, w);
  rec.bits = static_cast<std::uint32_t>(w.position());
  return rec;
}

inline VarRecord encode_record(const BitCode& code, const EncoderSet& set) {
  require(code.size() == set.layout().total_bits(), "encode_record: code length does not match layout");
  return encode_record(code.words(), set);
}

inline BitCode decode_record(const VarRecord& rec, const EncoderSet& set) {
  if (detail::words_for_bits(rec.bits) > rec.words.size()) throw decode_error("record shorter than its bit count");
  BitCode out(set.layout().total_bits());
  set.decode_from(rec.words, 0, rec.bits, out.words());
  return out;
}

// ---- "VLE1" encoder-set file -----------------------------------------------
// magic | M:u32 | M x b:u32 | per substring:
//   b <= 24: 2^b x u32, the symbol of each rank (the decode table)
//   b  > 24: count:u64 then count x u32 ranked symbols; the rest follow in ascending order

inline std::vector<std::uint8_t> serialize_encoder_set(const EncoderSet& set) {
  detail::ByteWriter w;
  w.magic("VLE1");
  const auto& layout = set.layout();
  w.u32(layout.substrings());
  for (auto b : layout.widths()) w.u32(b);
  for (const auto& enc : set.encoders()) {
    if (enc.dense()) {
      for (auto s : enc.decode_table()) w.u32(s);
    } else {
      w.u64(enc.ranked_prefix().size());
      for (auto s : enc.ranked_prefix()) w.u32(static_cast<std::uint32_t>(s));
    }
  }
  return w.take();
}

inline EncoderSet deserialize_encoder_set(detail::ByteReader& r) {
  r.expect_magic("VLE1");
  const std::uint32_t M = r.u32();
  if (M == 0 || M > 4096) r.fail("implausible substring count");
  std::vector<std::uint32_t> widths(M);
  for (auto& b : widths) {
    b = r.u32();
    if (b == 0 || b > kMaxSubstringBits) r.fail("substring width out of range");
  }
  std::vector<SubEncoder> encoders;
  for (std::uint32_t m = 0; m < M; ++m) {
    const std::uint32_t b = widths[m];
    std::vector<std::uint64_t> ranked;
    const std::size_t at = r.offset();
    if (b <= kDenseMaxWidth) {
      const std::uint64_t q = detail::alphabet_size(b);
      if (r.remaining() / 4 < q) r.fail("truncated rank table");
      ranked.resize(q);
      for (auto& s : ranked) s = r.u32();
    } else {
      const std::uint64_t count = r.u64();
      if (count > r.remaining() / 4) r.fail("truncated ranked symbol list");
      ranked.resize(count);
      for (auto& s : ranked) s = r.u32();
    }
    try {
      encoders.emplace_back(b, std::move(ranked));
    } catch (const contract_error& e) {
      throw format_error(std::string("invalid rank table: ") + e.what(), at);
    }
  }
  return EncoderSet(SubstringLayout(std::move(widths)), std::move(encoders));
}

inline EncoderSet deserialize_encoder_set(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  auto set = deserialize_encoder_set(r);
  r.expect_end();
  return set;
}

inline void save_encoder_set(const std::string& path, const EncoderSet& set) {
  detail::write_file(path, serialize_encoder_set(set));
}

inline EncoderSet load_encoder_set(const std::string& path) { return deserialize_encoder_set(detail::read_file(path)); }

}  // namespace vlh
