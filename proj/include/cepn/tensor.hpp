#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cepn/error.hpp"
#include "cepn/rng.hpp"

namespace cepn {

// Dense N-dimensional array of 64-bit floats, row-major (last index fastest).
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double value = 0.0)
      : shape_(std::move(shape)) {
    for (std::size_t e : shape_) {
      if (e == 0) throw shape_error("Tensor: zero extent in shape " + shape_str(shape_));
    }
    data_.assign(numel(shape_), value);
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size())
      throw shape_error("Tensor: data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::size_t> shape, double v) {
    return Tensor(std::move(shape), v);
  }

  static Tensor uniform(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = rng.uniform(lo, hi);
    return t;
  }

  static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double sigma = 1.0) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = sigma * rng.normal();
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
  double at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

  void fill(double v) { data_.assign(data_.size(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const { return shape_str(shape_); }

  static std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    std::size_t off = 0, axis = 0;
    for (std::size_t i : idx) {
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline void require_shape(const Tensor& t, const std::vector<std::size_t>& want,
                          const char* who) {
  if (t.shape() != want)
    throw shape_error(std::string(who) + ": expected shape " + Tensor::shape_str(want) +
                      ", got " + t.shape_str());
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw shape_error(std::string(who) + ": shape mismatch " + a.shape_str() + " vs " +
                      b.shape_str());
}

inline double max_abs(const Tensor& t) {
  double m = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) m = std::max(m, std::fabs(t[i]));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

inline bool all_finite(const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

inline void axpy(double a, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scale(Tensor& t, double a) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] *= a;
}

}  // namespace cepn
