#pragma once

#include <string>
#include <vector>

#include "ndm/param_store.hpp"
#include "ndm/rng.hpp"
#include "ndm/tape.hpp"

namespace ndm {

// Small fully connected net with tanh hidden layers and a linear output.
// Parameters live in a ParamStore under `prefix + ".W<k>" / ".b<k>"`.
struct MlpSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t hidden = 16;
  std::size_t hidden_layers = 2;

  std::vector<std::size_t> layer_dims() const {
    std::vector<std::size_t> dims{in};
    for (std::size_t i = 0; i < hidden_layers; ++i) dims.push_back(hidden);
    dims.push_back(out);
    return dims;
  }
};

// Hidden weights ~ N(0, 1/in_dim); output weights zero (identity start)
// unless out_weight_scale is nonzero.
inline void mlp_init(ParamStore& params, const std::string& prefix, const MlpSpec& spec,
                     Rng& rng, const std::vector<double>* out_bias = nullptr,
                     double out_weight_scale = 0.0) {
  auto dims = spec.layer_dims();
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    std::size_t rows = dims[k], cols = dims[k + 1];
    bool is_output = (k + 2 == dims.size());
    Array w = Array::zeros({rows, cols});
    double s = (is_output ? out_weight_scale : 1.0) / std::sqrt(static_cast<double>(rows));
    if (s != 0.0)
      for (double& v : w.data) v = rng.normal(0.0, s);
    Array b = Array::zeros({1, cols});
    if (is_output && out_bias) {
      if (out_bias->size() != cols) throw Error("mlp_init: bias length mismatch");
      for (std::size_t j = 0; j < cols; ++j) b.data[j] = (*out_bias)[j];
    }
    params.add(prefix + ".W" + std::to_string(k), std::move(w));
    params.add(prefix + ".b" + std::to_string(k), std::move(b));
  }
}

// x: 1-D Var of length spec.in; returns 1-D Var of length spec.out.
inline Var mlp_forward(Tape& tape, const Bindings& bind, const std::string& prefix,
                       const MlpSpec& spec, Var x) {
  auto dims = spec.layer_dims();
  Var h = tape.reshape(x, {1, spec.in});
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    Var w = bind[prefix + ".W" + std::to_string(k)];
    Var b = bind[prefix + ".b" + std::to_string(k)];
    h = tape.matmul(h, w) + b;
    if (k + 2 < dims.size()) h = tape.tanh(h);
  }
  return tape.reshape(h, {spec.out});
}

// Plain-double forward pass, reading parameters straight from the store.
// Used where no gradient is needed (inverses, geodesic fields, reports).
inline std::vector<double> mlp_eval(const ParamStore& params, const std::string& prefix,
                                    const MlpSpec& spec, const std::vector<double>& x) {
  auto dims = spec.layer_dims();
  std::vector<double> h = x;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const Array& w = params[prefix + ".W" + std::to_string(k)];
    const Array& b = params[prefix + ".b" + std::to_string(k)];
    std::vector<double> next(dims[k + 1]);
    for (std::size_t j = 0; j < next.size(); ++j) {
      double s = b.data[j];
      for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * w.at(i, j);
      next[j] = k + 2 < dims.size() ? std::tanh(s) : s;
    }
    h = std::move(next);
  }
  return h;
}

}  // namespace ndm
