#pragma once

#include <cmath>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bss/common.hpp"

namespace bss {

/// Dense row-major shape, last axis fastest. Volumes use (channels, depth,
/// height, width); slices and scalars use fewer axes.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<index_t> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<index_t> dims) : dims_(std::move(dims)) { validate(); }

  index_t rank() const { return static_cast<index_t>(dims_.size()); }
  index_t operator[](index_t i) const { return dims_[static_cast<std::size_t>(i)]; }
  const std::vector<index_t>& dims() const { return dims_; }

  index_t numel() const {
    index_t n = 1;
    for (index_t d : dims_) n *= d;
    return n;
  }

  bool operator==(const Shape& o) const { return dims_ == o.dims_; }
  bool operator!=(const Shape& o) const { return dims_ != o.dims_; }

  std::string str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "x" : "") << dims_[i];
    os << "]";
    return os.str();
  }

 private:
  void validate() const {
    if (dims_.empty()) throw ConfigError("Shape: rank must be >= 1");
    for (index_t d : dims_) {
      if (d < 1) throw ConfigError("Shape: every dim must be >= 1, got " + str());
    }
  }
  std::vector<index_t> dims_;
};

/// Dense double tensor. All public tensorcore operations keep values finite.
class Tensor {
 public:
  Tensor() : shape_({1}), data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.numel()), fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<index_t>(data_.size()) != shape_.numel()) {
      throw ConfigError("Tensor: data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  index_t numel() const { return static_cast<index_t>(data_.size()); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](index_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](index_t i) const { return data_[static_cast<std::size_t>(i)]; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_bits(const Tensor& o) const {
    return shape_ == o.shape_ &&
           std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

}  // namespace bss
