#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ndm {

// Contract violations (shape mismatch, non-finite values, singular
// matrices) surface as exceptions of this type.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major array of doubles. Scalars are length-1 vectors.
struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Array() = default;
  Array(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape))
      throw Error("Array: data length does not match shape");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
  }

  static Array zeros(std::vector<std::size_t> s) {
    std::size_t n = numel_of(s);
    return Array(std::move(s), std::vector<double>(n, 0.0));
  }
  static Array full(std::vector<std::size_t> s, double v) {
    std::size_t n = numel_of(s);
    return Array(std::move(s), std::vector<double>(n, v));
  }
  static Array scalar(double v) { return Array({1}, {v}); }
  static Array vec(std::vector<double> d) {
    std::size_t n = d.size();
    return Array({n}, std::move(d));
  }
  static Array matrix(std::size_t r, std::size_t c, std::vector<double> d) {
    return Array({r, c}, std::move(d));
  }
  static Array identity(std::size_t n) {
    Array a = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) a.data[i * n + i] = 1.0;
    return a;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  bool is_scalar() const { return numel() == 1; }

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  double scalar_value() const {
    if (!is_scalar()) throw Error("Array: scalar_value on non-scalar");
    return data[0];
  }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void require_finite(const Array& a, const char* context) {
  if (!a.all_finite()) throw Error(std::string("non-finite value in ") + context);
}

}  // namespace ndm
