#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vlh/error.hpp"

namespace vlh {

// n row vectors of dimension d, single precision, row-major.
class VectorSet {
 public:
  VectorSet() = default;
  explicit VectorSet(std::size_t dim) : dim_(dim) { require(dim > 0, "VectorSet: dimension must be positive"); }

  VectorSet(std::size_t dim, std::vector<float> values) : VectorSet(dim) {
    require(values.size() % dim == 0, "VectorSet: value count is not a multiple of the dimension");
    for (float v : values) require(std::isfinite(v), "VectorSet: non-finite value");
    values_ = std::move(values);
  }

  std::size_t size() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return values_.empty(); }

  std::span<const float> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  std::span<float> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }

  void reserve(std::size_t n) { values_.reserve(n * dim_); }

  void push_back(std::span<const float> x) {
    require(x.size() == dim_, "VectorSet: row dimension " + std::to_string(x.size()) + " does not match " +
                                  std::to_string(dim_));
    for (float v : x) require(std::isfinite(v), "VectorSet: non-finite value");
    values_.insert(values_.end(), x.begin(), x.end());
  }

  // Columns [first, first + count) of every row.
  VectorSet columns(std::size_t first, std::size_t count) const {
    require(count > 0 && first + count <= dim_, "VectorSet: column range out of bounds");
    VectorSet out(count);
    out.values_.resize(size() * count);
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < count; ++j) out.values_[i * count + j] = values_[i * dim_ + first + j];
    return out;
  }

  // Rows [first, first + count).
  VectorSet rows(std::size_t first, std::size_t count) const {
    require(first + count <= size(), "VectorSet: row range out of bounds");
    VectorSet out(dim_);
    out.values_.assign(values_.begin() + first * dim_, values_.begin() + (first + count) * dim_);
    return out;
  }

  std::span<const float> values() const { return values_; }

  bool operator==(const VectorSet&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

}  // namespace vlh
