#pragma once

// Multi-index hashing over variable-length records.
//
// Every code is inserted into M tables, keyed by its fixed-length substring m
// in table m; the bucket entry holds the code's full variable-length record.
// If two codes are within Hamming distance r, some substring pair is within
// floor(r/M), so probing each table with that radius yields a candidate
// superset that is then decoded and tested exactly.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vlh/bitcodes.hpp"
#include "vlh/detail/binary_io.hpp"
#include "vlh/error.hpp"
#include "vlh/vlc.hpp"

namespace vlh {

struct SearchStats {
  std::uint64_t candidates_total = 0;                 // |N(g)|
  std::vector<std::uint64_t> candidates_per_table;    // |N_m(g)|
  std::uint64_t keys_probed = 0;                      // sum_m |K_m^r(g)|
  std::uint64_t decode_count = 0;
  std::uint64_t hamming_count = 0;
};

struct Neighbor {
  std::uint64_t id;
  std::uint32_t distance;

  bool operator==(const Neighbor&) const = default;
};

namespace detail {

inline std::uint64_t binomial(std::uint32_t n, std::uint32_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  for (std::uint32_t i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

// Calls fn(mask) for every width-bit mask of the given weight, ascending.
template <typename Fn>
void for_each_mask(std::uint32_t width, std::uint32_t weight, Fn&& fn) {
  if (weight > width) return;
  if (weight == 0) {
    fn(std::uint64_t{0});
    return;
  }
  const std::uint64_t limit = std::uint64_t{1} << width;
  std::uint64_t m = (std::uint64_t{1} << weight) - 1;
  while (m < limit) {
    fn(m);
    const std::uint64_t c = m & (~m + 1);
    const std::uint64_t r = m + c;
    m = (((r ^ m) >> 2) / c) | r;
  }
}

// Keys at exactly Hamming distance `weight` from g, ascending by key value.
inline std::vector<std::uint64_t> keys_at_weight(std::uint64_t g, std::uint32_t weight, std::uint32_t width) {
  std::vector<std::uint64_t> keys;
  keys.reserve(binomial(width, weight));
  for_each_mask(width, weight, [&](std::uint64_t mask) { keys.push_back(g ^ mask); });
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace detail

// {g' in [0, 2^b) : d_H(g', g) <= radius}, ordered by Hamming weight of the
// difference, then by key value. Radius is clamped to the width.
inline std::vector<std::uint64_t> enumerate_keys(std::uint64_t g, std::uint32_t radius, std::uint32_t width) {
  require(width >= 1 && width <= kMaxSubstringBits, "enumerate_keys: unsupported width");
  require(g <= detail::low_mask(width), "enumerate_keys: key does not fit in width");
  radius = std::min(radius, width);
  std::vector<std::uint64_t> out;
  for (std::uint32_t w = 0; w <= radius; ++w) {
    auto layer = detail::keys_at_weight(g, w, width);
    out.insert(out.end(), layer.begin(), layer.end());
  }
  return out;
}

class MultiIndexTable {
 public:
  MultiIndexTable() = default;

  static MultiIndexTable build(const BitCodeSet& codes, std::span<const std::uint64_t> ids, EncoderSet encoders) {
    MultiIndexTable t;
    t.encoders_ = std::move(encoders);
    const auto& layout = t.encoders_.layout();
    const std::size_t n = codes.size();
    require(ids.size() == n, "mih build: id count does not match code count");
    require(n == 0 || codes.bits() == layout.total_bits(), "mih build: code length does not match encoder layout");
    require(n < (std::uint64_t{1} << 32), "mih build: too many codes");
    {
      std::vector<std::uint64_t> sorted(ids.begin(), ids.end());
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw contract_error("mih build: duplicate id");
    }
    t.ids_.assign(ids.begin(), ids.end());
    t.bits_ = layout.total_bits();

    const std::size_t M = layout.substrings();
    t.tables_.resize(M);
    std::vector<std::uint64_t> keys(n);
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t i = 0; i < n; ++i) keys[i] = detail::extract_bits(codes.view(i), layout.offset(m), layout.width(m));
      std::vector<std::uint32_t> order(n);
      for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });

      Table& tab = t.tables_[m];
      tab.width = layout.width(m);
      std::vector<std::uint64_t> sorted_keys(n);
      for (std::size_t e = 0; e < n; ++e) sorted_keys[e] = keys[order[e]];
      tab.set_directory(sorted_keys);
      detail::BitWriter writer(tab.arena);
      tab.slot.resize(n);
      tab.record_offset.resize(n + 1);
      for (std::size_t e = 0; e < n; ++e) {
        tab.slot[e] = order[e];
        tab.record_offset[e] = writer.position();
        t.encoders_.encode_to(codes.view(order[e]), writer);
      }
      tab.record_offset[n] = writer.position();
    }
    return t;
  }

  std::size_t size() const { return ids_.size(); }
  std::uint32_t code_bits() const { return bits_; }
  const SubstringLayout& layout() const { return encoders_.layout(); }
  const EncoderSet& encoder_set() const { return encoders_; }

  std::size_t total_entries() const {
    std::size_t s = 0;
    for (const auto& t : tables_) s += t.slot.size();
    return s;
  }

  // Stored record bits summed over every table entry.
  std::uint64_t stored_record_bits() const {
    std::uint64_t s = 0;
    for (const auto& t : tables_) s += t.record_offset.empty() ? 0 : t.record_offset.back();
    return s;
  }

  // Entries of bucket `key` in table m, in insertion order, decoded back to codes.
  std::vector<std::pair<std::uint64_t, BitCode>> bucket(std::size_t m, std::uint64_t key) const {
    std::vector<std::pair<std::uint64_t, BitCode>> out;
    const Table& tab = tables_.at(m);
    auto [lo, hi] = tab.range(key);
    for (auto e = lo; e < hi; ++e) {
      BitCode code(bits_);
      decode_entry(tab, e, code.words());
      out.emplace_back(ids_[tab.slot[e]], std::move(code));
    }
    return out;
  }

  // All ids within Hamming distance r of g, ascending.
  std::vector<std::uint64_t> r_neighbors(const BitCode& g, std::uint32_t r, SearchStats* stats = nullptr) const {
    require(g.size() == bits_ || size() == 0, "r_neighbors: query length does not match index");
    std::vector<std::uint64_t> out;
    SearchStats local;
    const std::uint32_t M = layout().substrings();
    local.candidates_per_table.assign(M, 0);
    if (size() == 0) {
      if (stats) *stats = std::move(local);
      return out;
    }
    const std::uint32_t rho = r / M;
    std::vector<std::uint8_t> seen(size(), 0);
    std::vector<std::uint64_t> tmp(g.words().size());
    for (std::uint32_t m = 0; m < M; ++m) {
      const std::uint64_t gm = g.bits_at(layout().offset(m), layout().width(m));
      const std::uint32_t lim = std::min(rho, tables_[m].width);
      for (std::uint32_t w = 0; w <= lim; ++w) {
        probe(m, gm, w, local, [&](std::size_t e) {
          const auto slot = tables_[m].slot[e];
          ++local.candidates_per_table[m];
          if (seen[slot]) return;
          seen[slot] = 1;
          ++local.candidates_total;
          decode_entry(tables_[m], e, tmp);
          ++local.decode_count;
          ++local.hamming_count;
          if (detail::hamming_words(tmp, g.words()) <= r) out.push_back(ids_[slot]);
        });
      }
    }
    std::sort(out.begin(), out.end());
    if (stats) *stats = std::move(local);
    return out;
  }

  SearchStats search_stats(const BitCode& g, std::uint32_t r) const {
    SearchStats s;
    r_neighbors(g, r, &s);
    return s;
  }

  // K nearest codes by (distance, id). Grows the per-table radius rho one step
  // at a time; after step rho every code within M*rho + M - 1 has been tested.
  std::vector<Neighbor> knn(const BitCode& g, std::size_t K, SearchStats* stats = nullptr) const {
    require(K <= size(), "knn: K = " + std::to_string(K) + " exceeds database size " + std::to_string(size()));
    std::vector<Neighbor> out;
    if (K == 0) return out;
    require(g.size() == bits_, "knn: query length does not match index");
    const std::uint32_t M = layout().substrings();
    SearchStats local;
    local.candidates_per_table.assign(M, 0);
    std::vector<std::uint8_t> seen(size(), 0);
    std::vector<std::uint64_t> tmp(g.words().size());
    std::vector<Neighbor> found;
    std::vector<std::uint64_t> gm(M);
    for (std::uint32_t m = 0; m < M; ++m) gm[m] = g.bits_at(layout().offset(m), layout().width(m));
    const std::uint32_t max_width = layout().max_width();
    for (std::uint32_t rho = 0;; ++rho) {
      for (std::uint32_t m = 0; m < M; ++m) {
        if (rho > tables_[m].width) continue;
        probe(m, gm[m], rho, local, [&](std::size_t e) {
          const auto slot = tables_[m].slot[e];
          ++local.candidates_per_table[m];
          if (seen[slot]) return;
          seen[slot] = 1;
          ++local.candidates_total;
          decode_entry(tables_[m], e, tmp);
          ++local.decode_count;
          ++local.hamming_count;
          found.push_back({ids_[slot], detail::hamming_words(tmp, g.words())});
        });
      }
      const std::uint64_t radius = std::uint64_t{M} * rho + (M - 1);
      const auto within = static_cast<std::size_t>(
          std::count_if(found.begin(), found.end(), [&](const Neighbor& nb) { return nb.distance <= radius; }));
      if (within >= K || rho >= max_width) break;
    }
    std::sort(found.begin(), found.end(), [](const Neighbor& a, const Neighbor& b) {
      return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
    found.resize(K);
    if (stats) *stats = std::move(local);
    return found;
  }

  // ---- "MIH1" index file -----------------------------------------------------
  // magic | M:u32 | M x b:u32 | n:u64 | encoder blob length:u64 | VLE1 blob |
  // per table:
  //   b <= 24: (2^b + 1) x u64 bucket offsets
  //   b  > 24: keys:u64, keys x u32 bucket keys, (keys + 1) x u64 bucket offsets
  //   n entries: id:u64 | record bits:u32 | ceil(bits/8) record bytes
  std::vector<std::uint8_t> serialize() const {
    detail::ByteWriter w;
    w.magic("MIH1");
    const auto& lay = layout();
    w.u32(lay.substrings());
    for (auto b : lay.widths()) w.u32(b);
    w.u64(size());
    const auto enc = serialize_encoder_set(encoders_);
    w.u64(enc.size());
    w.raw(enc);
    for (const auto& tab : tables_) {
      if (tab.dense) {
        for (auto o : tab.offsets) w.u64(o);
      } else {
        w.u64(tab.keys.size());
        for (auto k : tab.keys) w.u32(static_cast<std::uint32_t>(k));
        for (auto o : tab.offsets) w.u64(o);
      }
      for (std::size_t e = 0; e < tab.slot.size(); ++e) {
        w.u64(ids_[tab.slot[e]]);
        const auto start = tab.record_offset[e];
        const auto nbits = static_cast<std::uint32_t>(tab.record_offset[e + 1] - start);
        w.u32(nbits);
        for (std::uint32_t byte = 0; byte < (nbits + 7) / 8; ++byte) {
          const std::uint32_t take = std::min<std::uint32_t>(8, nbits - 8 * byte);
          w.u8(static_cast<std::uint8_t>(detail::extract_bits(tab.arena, start + 8 * byte, take)));
        }
      }
    }
    return w.take();
  }

  static MultiIndexTable deserialize(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic("MIH1");
    const std::uint32_t M = r.u32();
    if (M == 0 || M > 4096) r.fail("implausible substring count");
    std::vector<std::uint32_t> widths(M);
    for (auto& b : widths) b = r.u32();
    const std::uint64_t n = r.u64();
    const std::uint64_t enc_len = r.u64();
    if (enc_len > r.remaining()) r.fail("truncated encoder set");
    const std::size_t enc_at = r.offset();
    MultiIndexTable t;
    {
      detail::ByteReader er(r.raw(enc_len));
      try {
        t.encoders_ = deserialize_encoder_set(er);
        er.expect_end();
      } catch (const format_error& e) {
        throw format_error(std::string("embedded encoder set: ") + e.what(), enc_at + e.offset());
      }
    }
    if (t.encoders_.layout().widths() != widths) r.fail("encoder layout does not match index header");
    if (n >= (std::uint64_t{1} << 32)) r.fail("too many entries");
    t.bits_ = t.encoders_.layout().total_bits();
    t.tables_.resize(M);
    std::vector<std::uint64_t> slot_of_entry;
    std::vector<std::uint64_t> scratch(detail::words_for_bits(t.bits_));
    for (std::uint32_t m = 0; m < M; ++m) {
      Table& tab = t.tables_[m];
      tab.width = widths[m];
      tab.dense = tab.width <= kDenseMaxWidth;
      if (tab.dense) {
        const std::uint64_t q = std::uint64_t{1} << tab.width;
        if (r.remaining() / 8 < q + 1) r.fail("truncated bucket offsets");
        tab.offsets.resize(q + 1);
        for (auto& o : tab.offsets) o = r.u64();
      } else {
        const std::uint64_t nkeys = r.u64();
        if (nkeys > n || r.remaining() / 12 < nkeys) r.fail("bad bucket key count");
        tab.keys.resize(nkeys);
        for (auto& k : tab.keys) k = r.u32();
        tab.offsets.resize(nkeys + 1);
        for (auto& o : tab.offsets) o = r.u64();
        if (!std::is_sorted(tab.keys.begin(), tab.keys.end()) ||
            std::adjacent_find(tab.keys.begin(), tab.keys.end()) != tab.keys.end())
          r.fail("bucket keys not strictly ascending");
      }
      if (tab.offsets.front() != 0 || tab.offsets.back() != n || !std::is_sorted(tab.offsets.begin(), tab.offsets.end()))
        r.fail("inconsistent bucket offsets");
      tab.finish();
      tab.slot.resize(n);
      tab.record_offset.resize(n + 1);
      detail::BitWriter writer(tab.arena);
      for (std::uint64_t e = 0; e < n; ++e) {
        const std::uint64_t id = r.u64();
        const std::uint32_t nbits = r.u32();
        const std::size_t rec_at = r.offset();
        auto rec = r.raw((nbits + 7) / 8);
        tab.record_offset[e] = writer.position();
        for (std::uint32_t byte = 0; byte < rec.size(); ++byte)
          writer.put(rec[byte], std::min<std::uint32_t>(8, nbits - 8 * byte));
        if (m == 0) {
          slot_of_entry.push_back(id);
          tab.slot[e] = static_cast<std::uint32_t>(e);
        } else {
          auto it = std::lower_bound(t.sorted_ids_.begin(), t.sorted_ids_.end(), id);
          if (it == t.sorted_ids_.end() || *it != id) throw format_error("id missing from table 0", rec_at - 12);
          tab.slot[e] = t.sorted_slot_[static_cast<std::size_t>(it - t.sorted_ids_.begin())];
        }
        tab.record_offset[e + 1] = writer.position();
      }
      tab.record_offset[n] = writer.position();
      if (m == 0) {
        t.ids_ = slot_of_entry;
        t.index_ids();
        if (std::adjacent_find(t.sorted_ids_.begin(), t.sorted_ids_.end()) != t.sorted_ids_.end())
          r.fail("duplicate id in table 0");
      } else {
        std::vector<std::uint32_t> check(tab.slot.begin(), tab.slot.end());
        std::sort(check.begin(), check.end());
        if (std::adjacent_find(check.begin(), check.end()) != check.end()) r.fail("id repeated within a table");
      }
      // Every entry must decode and sit in the bucket of its own substring.
      for (std::uint64_t e = 0; e < n; ++e) {
        try {
          t.decode_entry(tab, e, scratch);
        } catch (const decode_error& err) {
          r.fail(std::string("undecodable record in table ") + std::to_string(m) + ": " + err.what());
        }
        const auto key = detail::extract_bits(scratch, t.layout().offset(m), tab.width);
        auto [lo, hi] = tab.range(key);
        if (e < lo || e >= hi) r.fail("entry stored under the wrong bucket in table " + std::to_string(m));
      }
    }
    r.expect_end();
    t.sorted_ids_.clear();
    t.sorted_slot_.clear();
    return t;
  }

  void save(const std::string& path) const { detail::write_file(path, serialize()); }
  static MultiIndexTable load(const std::string& path) { return deserialize(detail::read_file(path)); }

 private:
  struct Table {
    std::uint32_t width = 0;
    bool dense = true;
    std::vector<std::uint64_t> keys;     // sparse only: nonempty bucket keys, ascending
    std::vector<std::uint64_t> offsets;  // bucket -> first entry
    std::vector<std::uint64_t> nonempty; // dense only: nonempty bucket keys, ascending
    std::vector<std::uint32_t> slot;     // entry -> code slot
    std::vector<std::uint64_t> record_offset;
    std::vector<std::uint64_t> arena;

    void set_directory(const std::vector<std::uint64_t>& sorted_keys) {
      dense = width <= kDenseMaxWidth;
      const std::size_t n = sorted_keys.size();
      if (dense) {
        const std::uint64_t q = std::uint64_t{1} << width;
        offsets.assign(q + 1, 0);
        for (auto k : sorted_keys) ++offsets[k + 1];
        for (std::uint64_t k = 0; k < q; ++k) offsets[k + 1] += offsets[k];
      } else {
        keys.clear();
        offsets.clear();
        for (std::size_t e = 0; e < n; ++e) {
          if (e == 0 || sorted_keys[e] != sorted_keys[e - 1]) {
            keys.push_back(sorted_keys[e]);
            offsets.push_back(e);
          }
        }
        offsets.push_back(n);
      }
      finish();
    }

    void finish() {
      if (!dense) return;
      nonempty.clear();
      for (std::uint64_t k = 0; k + 1 < offsets.size(); ++k)
        if (offsets[k + 1] > offsets[k]) nonempty.push_back(k);
    }

    std::size_t nonempty_buckets() const { return dense ? nonempty.size() : keys.size(); }
    std::uint64_t nonempty_key(std::size_t i) const { return dense ? nonempty[i] : keys[i]; }

    std::pair<std::uint64_t, std::uint64_t> range(std::uint64_t key) const {
      if (dense) return {offsets[key], offsets[key + 1]};
      auto it = std::lower_bound(keys.begin(), keys.end(), key);
      if (it == keys.end() || *it != key) return {0, 0};
      const auto i = static_cast<std::size_t>(it - keys.begin());
      return {offsets[i], offsets[i + 1]};
    }
  };

  // Visits every entry whose bucket key is at exactly Hamming distance `weight`
  // from gm. When the key ball is larger than the number of occupied buckets the
  // occupied buckets are scanned instead; both visit the same entries.
  template <typename Visit>
  void probe(std::uint32_t m, std::uint64_t gm, std::uint32_t weight, SearchStats& stats, Visit&& visit) const {
    const Table& tab = tables_[m];
    const std::uint64_t ball = detail::binomial(tab.width, weight);
    stats.keys_probed += ball;
    if (ball > tab.nonempty_buckets()) {
      for (std::size_t i = 0; i < tab.nonempty_buckets(); ++i) {
        const std::uint64_t key = tab.nonempty_key(i);
        if (static_cast<std::uint32_t>(std::popcount(key ^ gm)) != weight) continue;
        auto [lo, hi] = tab.range(key);
        for (auto e = lo; e < hi; ++e) visit(static_cast<std::size_t>(e));
      }
      return;
    }
    detail::for_each_mask(tab.width, weight, [&](std::uint64_t mask) {
      auto [lo, hi] = tab.range(gm ^ mask);
      for (auto e = lo; e < hi; ++e) visit(static_cast<std::size_t>(e));
    });
  }

  void decode_entry(const Table& tab, std::uint64_t e, std::span<std::uint64_t> out) const {
    const auto start = tab.record_offset[e];
    encoders_.decode_from(tab.arena, start, static_cast<std::uint32_t>(tab.record_offset[e + 1] - start), out);
  }

  void index_ids() {
    std::vector<std::uint32_t> order(ids_.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return ids_[a] < ids_[b]; });
    sorted_ids_.resize(order.size());
    sorted_slot_.resize(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      sorted_ids_[i] = ids_[order[i]];
      sorted_slot_[i] = order[i];
    }
  }

  EncoderSet encoders_;
  std::uint32_t bits_ = 0;
  std::vector<std::uint64_t> ids_;  // slot -> external id
  std::vector<Table> tables_;
  std::vector<std::uint64_t> sorted_ids_;  // load-time lookup only
  std::vector<std::uint32_t> sorted_slot_;
};

}  // namespace vlh
