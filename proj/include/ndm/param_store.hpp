#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ndm/array.hpp"
#include "ndm/tape.hpp"

namespace ndm {

// Named parameter arrays with stable iteration order.
class ParamStore {
 public:
  void add(const std::string& name, Array value) {
    if (index_.count(name)) throw Error("ParamStore: duplicate name " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    values_.push_back(std::move(value));
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Array& operator[](const std::string& name) { return values_[index_.at(name)]; }
  const Array& operator[](const std::string& name) const {
    return values_[index_.at(name)];
  }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  Array& value_at(std::size_t i) { return values_[i]; }
  const Array& value_at(std::size_t i) const { return values_[i]; }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const Array& a : values_) n += a.numel();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(num_scalars());
    for (const Array& a : values_)
      out.insert(out.end(), a.data.begin(), a.data.end());
    return out;
  }

  void unflatten(const std::vector<double>& flat) {
    if (flat.size() != num_scalars()) throw Error("unflatten: length mismatch");
    std::size_t off = 0;
    for (Array& a : values_) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                flat.begin() + static_cast<std::ptrdiff_t>(off + a.numel()),
                a.data.begin());
      off += a.numel();
    }
  }

  // Gradient store with the same names and shapes, all zero.
  ParamStore zeros_like() const {
    ParamStore g;
    for (std::size_t i = 0; i < names_.size(); ++i)
      g.add(names_[i], Array::zeros(values_[i].shape));
    return g;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Array> values_;
};

// Leaf Vars for every parameter on a fresh tape, looked up by name.
class Bindings {
 public:
  Bindings(Tape& tape, const ParamStore& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      vars_.push_back(tape.leaf(params.value_at(i)));
      index_[params.names()[i]] = i;
    }
  }

  Var operator[](const std::string& name) const { return vars_[index_.at(name)]; }
  const std::vector<Var>& vars() const { return vars_; }

  // Collect gradients from a backward() result into a parameter-shaped store.
  ParamStore gather(const std::vector<Array>& grads, const ParamStore& params) const {
    ParamStore out;
    for (std::size_t i = 0; i < vars_.size(); ++i)
      out.add(params.names()[i], grads[vars_[i].id]);
    return out;
  }

 private:
  std::vector<Var> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Central-difference gradient oracle for a scalar function of the
// parameters. Step per coordinate: h * max(1, |theta_i|).
inline ParamStore finite_diff_grad(
    const std::function<double(const ParamStore&)>& f, const ParamStore& params,
    double h = 1e-5) {
  if (h <= 0) throw Error("finite_diff_grad: h must be positive");
  ParamStore grads = params.zeros_like();
  ParamStore work = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params.value_at(i).numel(); ++j) {
      double theta = params.value_at(i).data[j];
      double step = h * std::max(1.0, std::abs(theta));
      work.value_at(i).data[j] = theta + step;
      double fp = f(work);
      work.value_at(i).data[j] = theta - step;
      double fm = f(work);
      work.value_at(i).data[j] = theta;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw Error("finite_diff_grad: non-finite evaluation");
      grads.value_at(i).data[j] = (fp - fm) / (2.0 * step);
    }
  }
  return grads;
}

}  // namespace ndm
