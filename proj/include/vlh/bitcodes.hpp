#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vlh/detail/binary_io.hpp"
#include "vlh/error.hpp"

namespace vlh {

// Substring keys and decode indices are carried in 64-bit integers; 32 bits is
// the widest substring any table or encoder accepts.
inline constexpr std::uint32_t kMaxSubstringBits = 32;

namespace detail {

inline constexpr std::size_t words_for_bits(std::size_t bits) { return (bits + 63) / 64; }

inline constexpr std::uint64_t low_mask(std::uint32_t width) {
  return width >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << width) - 1);
}

// Reads `width` (<= 64) bits starting at bit `offset`, LSB first.
inline std::uint64_t extract_bits(std::span<const std::uint64_t> words, std::size_t offset, std::uint32_t width) {
  if (width == 0) return 0;
  const std::size_t w = offset / 64;
  const std::uint32_t shift = static_cast<std::uint32_t>(offset % 64);
  std::uint64_t v = words[w] >> shift;
  if (shift != 0 && shift + width > 64) v |= words[w + 1] << (64 - shift);
  return v & low_mask(width);
}

// Overwrites `width` bits at `offset` with the low bits of `value`.
inline void deposit_bits(std::span<std::uint64_t> words, std::size_t offset, std::uint32_t width, std::uint64_t value) {
  if (width == 0) return;
  value &= low_mask(width);
  const std::size_t w = offset / 64;
  const std::uint32_t shift = static_cast<std::uint32_t>(offset % 64);
  words[w] = (words[w] & ~(low_mask(width) << shift)) | (value << shift);
  if (shift != 0 && shift + width > 64) {
    const std::uint32_t spill = shift + width - 64;
    words[w + 1] = (words[w + 1] & ~low_mask(spill)) | (value >> (64 - shift));
  }
}

inline std::uint32_t hamming_words(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  std::uint32_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += static_cast<std::uint32_t>(std::popcount(a[i] ^ b[i]));
  return d;
}

}  // namespace detail

// Partition of a B-bit code into M contiguous substrings. Substring m occupies
// bits [offset(m), offset(m) + width(m)).
class SubstringLayout {
 public:
  SubstringLayout() = default;

  // floor(B/M) bits per substring; the last one also takes the B mod M remainder.
  static SubstringLayout uniform(std::uint32_t total_bits, std::uint32_t substrings) {
    require(total_bits > 0, "layout: code length must be positive");
    require(substrings > 0 && substrings <= total_bits, "layout: need 1 <= M <= B");
    std::vector<std::uint32_t> widths(substrings, total_bits / substrings);
    widths.back() += total_bits % substrings;
    return SubstringLayout(std::move(widths));
  }

  explicit SubstringLayout(std::vector<std::uint32_t> widths) : widths_(std::move(widths)) {
    require(!widths_.empty(), "layout: at least one substring required");
    offsets_.reserve(widths_.size());
    std::size_t off = 0;
    for (auto w : widths_) {
      require(w >= 1 && w <= kMaxSubstringBits,
              "layout: substring width " + std::to_string(w) + " outside [1, " + std::to_string(kMaxSubstringBits) + "]");
      offsets_.push_back(off);
      off += w;
    }
    total_ = static_cast<std::uint32_t>(off);
  }

  std::uint32_t substrings() const { return static_cast<std::uint32_t>(widths_.size()); }
  std::uint32_t total_bits() const { return total_; }
  std::uint32_t width(std::size_t m) const { return widths_[m]; }
  std::size_t offset(std::size_t m) const { return offsets_[m]; }
  const std::vector<std::uint32_t>& widths() const { return widths_; }
  std::uint32_t max_width() const {
    std::uint32_t w = 0;
    for (auto x : widths_) w = std::max(w, x);
    return w;
  }

  bool operator==(const SubstringLayout&) const = default;

 private:
  std::vector<std::uint32_t> widths_;
  std::vector<std::size_t> offsets_;
  std::uint32_t total_ = 0;
};

// A fixed-length binary code packed LSB-first into 64-bit words.
class BitCode {
 public:
  BitCode() = default;

  explicit BitCode(std::size_t bits) : bits_(bits), words_(detail::words_for_bits(bits), 0) {
    require(bits > 0, "BitCode: length must be positive");
  }

  BitCode(std::size_t bits, std::span<const std::uint64_t> words) : BitCode(bits) {
    require(words.size() == words_.size(), "BitCode: word count does not match length");
    std::copy(words.begin(), words.end(), words_.begin());
    clear_padding();
  }

  static BitCode from_uint(std::uint64_t value, std::size_t bits) {
    BitCode c(bits);
    c.words_[0] = value;
    c.clear_padding();
    return c;
  }

  // Most significant bit first, the way codes are usually written ("11110000").
  static BitCode from_string(std::string_view text) {
    BitCode c(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      const char ch = text[text.size() - 1 - i];
      require(ch == '0' || ch == '1', "BitCode: binary string expected");
      c.set(i, ch == '1');
    }
    return c;
  }

  std::string to_string() const {
    std::string s(bits_, '0');
    for (std::size_t i = 0; i < bits_; ++i)
      if (test(i)) s[bits_ - 1 - i] = '1';
    return s;
  }

  std::size_t size() const { return bits_; }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  void set(std::size_t i, bool v) {
    const std::uint64_t bit = std::uint64_t{1} << (i % 64);
    if (v)
      words_[i / 64] |= bit;
    else
      words_[i / 64] &= ~bit;
  }

  std::uint64_t bits_at(std::size_t offset, std::uint32_t width) const {
    return detail::extract_bits(words_, offset, width);
  }
  void set_bits_at(std::size_t offset, std::uint32_t width, std::uint64_t value) {
    detail::deposit_bits(words_, offset, width, value);
  }

  std::span<const std::uint64_t> words() const { return words_; }
  std::span<std::uint64_t> words() { return words_; }

  bool operator==(const BitCode&) const = default;

 private:
  void clear_padding() {
    if (bits_ % 64 != 0) words_.back() &= detail::low_mask(static_cast<std::uint32_t>(bits_ % 64));
  }

  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

// n codes of identical length stored contiguously.
class BitCodeSet {
 public:
  BitCodeSet() = default;
  explicit BitCodeSet(std::size_t bits) : bits_(bits), stride_(detail::words_for_bits(bits)) {
    require(bits > 0, "BitCodeSet: code length must be positive");
  }

  std::size_t bits() const { return bits_; }
  std::size_t size() const { return stride_ == 0 ? 0 : data_.size() / stride_; }
  bool empty() const { return data_.empty(); }
  std::size_t words_per_code() const { return stride_; }

  void reserve(std::size_t n) { data_.reserve(n * stride_); }

  void push_back(const BitCode& code) {
    require(code.size() == bits_, "BitCodeSet: code length " + std::to_string(code.size()) +
                                      " does not match set length " + std::to_string(bits_));
    data_.insert(data_.end(), code.words().begin(), code.words().end());
  }

  std::span<const std::uint64_t> view(std::size_t i) const { return {data_.data() + i * stride_, stride_}; }
  BitCode operator[](std::size_t i) const { return BitCode(bits_, view(i)); }

  std::span<const std::uint64_t> raw() const { return data_; }

  bool operator==(const BitCodeSet&) const = default;

 private:
  std::size_t bits_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::uint64_t> data_;
};

inline std::uint32_t hamming(const BitCode& a, const BitCode& b) {
  require(a.size() == b.size(), "hamming: length mismatch (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
  return detail::hamming_words(a.words(), b.words());
}

inline void split_into(std::span<const std::uint64_t> words, const SubstringLayout& layout,
                       std::span<std::uint64_t> out) {
  for (std::size_t m = 0; m < layout.substrings(); ++m)
    out[m] = detail::extract_bits(words, layout.offset(m), layout.width(m));
}

inline std::vector<std::uint64_t> split(const BitCode& code, const SubstringLayout& layout) {
  require(code.size() == layout.total_bits(), "split: code length " + std::to_string(code.size()) +
                                                  " does not match layout length " +
                                                  std::to_string(layout.total_bits()));
  std::vector<std::uint64_t> out(layout.substrings());
  split_into(code.words(), layout, out);
  return out;
}

inline BitCode join(std::span<const std::uint64_t> substrings, const SubstringLayout& layout) {
  require(substrings.size() == layout.substrings(), "join: expected " + std::to_string(layout.substrings()) +
                                                        " substrings, got " + std::to_string(substrings.size()));
  BitCode code(layout.total_bits());
  for (std::size_t m = 0; m < substrings.size(); ++m) {
    require(substrings[m] <= detail::low_mask(layout.width(m)),
            "join: substring " + std::to_string(m) + " does not fit in " + std::to_string(layout.width(m)) + " bits");
    code.set_bits_at(layout.offset(m), layout.width(m), substrings[m]);
  }
  return code;
}

// ---- "VLH1" code file ------------------------------------------------------
// magic | B:u32 | n:u64 | n x ceil(B/8) bytes, bit j of a code in byte j/8 at bit j%8.

inline std::vector<std::uint8_t> serialize_codes(const BitCodeSet& codes) {
  detail::ByteWriter w;
  w.magic("VLH1");
  w.u32(static_cast<std::uint32_t>(codes.bits()));
  w.u64(codes.size());
  const std::size_t nbytes = (codes.bits() + 7) / 8;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    auto words = codes.view(i);
    for (std::size_t j = 0; j < nbytes; ++j) w.u8(static_cast<std::uint8_t>(words[j / 8] >> (8 * (j % 8))));
  }
  return w.take();
}

inline BitCodeSet deserialize_codes(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic("VLH1");
  const std::uint32_t bits = r.u32();
  if (bits == 0) r.fail("code length must be positive");
  const std::uint64_t n = r.u64();
  const std::size_t nbytes = (bits + 7) / 8;
  if (n > r.remaining() / nbytes) r.fail("code count exceeds payload size");
  BitCodeSet codes(bits);
  codes.reserve(n);
  BitCode code(bits);
  const std::uint32_t tail = bits % 8;
  for (std::uint64_t i = 0; i < n; ++i) {
    auto chunk = r.raw(nbytes);
    std::fill(code.words().begin(), code.words().end(), 0);
    for (std::size_t j = 0; j < nbytes; ++j) code.words()[j / 8] |= std::uint64_t{chunk[j]} << (8 * (j % 8));
    if (tail != 0 && (chunk[nbytes - 1] >> tail) != 0)
      throw format_error("nonzero padding bits in code " + std::to_string(i), r.offset() - 1);
    codes.push_back(code);
  }
  r.expect_end();
  return codes;
}

inline void save_codes(const std::string& path, const BitCodeSet& codes) {
  detail::write_file(path, serialize_codes(codes));
}

inline BitCodeSet load_codes(const std::string& path) { return deserialize_codes(detail::read_file(path)); }

}  // namespace vlh
