#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vlh {

// Caller broke a precondition (length mismatch, bad layout, out-of-range value).
class contract_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A file or byte buffer does not match the expected on-disk format.
class format_error : public std::runtime_error {
 public:
  format_error(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// A variable-length record could not be decoded with the given encoder set.
class decode_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw contract_error(msg);
}

}  // namespace vlh
