#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biasdiag/errors.hpp"

namespace biasdiag {

using Shape = std::vector<std::size_t>;

// Norms below this are treated as zero (cosine is undefined).
inline constexpr double kZeroNormEps = 1e-12;

inline std::size_t shape_product(const Shape& s) {
  std::size_t p = 1;
  for (std::size_t e : s) p *= e;
  return p;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k) out += ",";
    out += std::to_string(s[k]);
  }
  out += ")";
  return out;
}

// Dense row-major tensor of 64-bit floats. Feature maps use shape
// (channels, height, width); flattening is therefore channel-major, so unit
// indices are stable across runs. Value semantics; all free operations are
// pure.
class Tensor {
 public:
  Tensor() = default;  // null tensor, size 0

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(checked_product(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_product(shape_) != data_.size()) {
      throw ShapeMismatch("tensor: shape " + shape_str(shape_) + " expects " +
                          std::to_string(shape_product(shape_)) +
                          " values, got " + std::to_string(data_.size()));
    }
  }

  static Tensor row(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  // (c,h,w) indexing for rank-3 feature maps.
  double& at(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(Shape s) const {
    if (shape_product(s) != data_.size()) {
      throw ShapeMismatch("reshape: " + shape_str(s) + " incompatible with " +
                          std::to_string(data_.size()) + " values");
    }
    return Tensor(std::move(s), data_);
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  static std::size_t checked_product(const Shape& s) {
    for (std::size_t e : s) {
      if (e == 0) throw ShapeMismatch("tensor: zero extent in " + shape_str(s));
    }
    return shape_product(s);
  }

  Shape shape_;
  std::vector<double> data_;
};

inline bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

// Compensated summation; keeps reductions permutation-stable to ~1 ulp.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - carry_;
    const double t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

inline double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeMismatch("dot: lengths " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  double s = 0.0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  return s;
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

// Cosine similarity, clamped to [-1, 1] against rounding. Throws ZeroNorm
// when either vector is numerically zero; callers decide whether to skip.
// The denominator is sqrt(dot(a,a)*dot(b,b)) in one rounding step, which
// keeps cosine(v, v) == 1 and cosine(v, -v) == -1 exact.
inline double cosine(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeMismatch("cosine: lengths " + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()));
  }
  const double daa = dot(a, a);
  const double dbb = dot(b, b);
  if (std::sqrt(daa) < kZeroNormEps || std::sqrt(dbb) < kZeroNormEps) {
    throw ZeroNorm("cosine: zero-norm operand");
  }
  const double c = dot(a, b) / std::sqrt(daa * dbb);
  return std::clamp(c, -1.0, 1.0);
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch("hadamard: shapes " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
  Tensor out(a.shape());
  const auto va = a.values();
  const auto vb = b.values();
  auto vo = out.values();
  for (std::size_t i = 0; i < va.size(); ++i) vo[i] = va[i] * vb[i];
  return out;
}

}  // namespace biasdiag
