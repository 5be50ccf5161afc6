#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ndm/mlp.hpp"
#include "ndm/param_store.hpp"
#include "ndm/tape.hpp"

namespace ndm {

// Symmetric positive-definite metric at a point.
struct MetricTensor {
  Array g;  // d x d

  explicit MetricTensor(Array m) : g(std::move(m)) {
    if (g.ndim() != 2 || g.rows() != g.cols())
      throw Error("MetricTensor: square matrix required");
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (std::abs(g.at(i, j) - g.at(j, i)) > 1e-12)
          throw Error("MetricTensor: matrix not symmetric");
  }

  std::size_t dim() const { return g.rows(); }
};

inline double inner_product(const MetricTensor& m, const std::vector<double>& v,
                            const std::vector<double>& w) {
  std::size_t d = m.dim();
  if (v.size() != d || w.size() != d) throw Error("inner_product: dimension mismatch");
  double s = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) s += m.g.at(i, j) * v[i] * w[j];
  return s;
}

// sqrt(det g) via Cholesky: product of the factor's diagonal.
inline double volume_element(const MetricTensor& m) {
  Array l = Tape::cholesky(m.g);
  double p = 1;
  for (std::size_t i = 0; i < m.dim(); ++i) p *= l.at(i, i);
  return p;
}

// Point -> metric map; a learned net or a closed-form test field.
using MetricField = std::function<MetricTensor(const std::vector<double>&)>;

inline double inv_softplus(double y) { return std::log(std::expm1(y)); }

// MLP from a point to the d(d+1)/2 entries of a lower-triangular factor L;
// the metric is g = L L^T + eps I. Diagonal entries of L pass through
// softplus, removing the sign ambiguity of the factor. Output layer is
// initialized so L = I exactly: weights zero, diagonal raw bias
// softplus^-1(1), giving g = (1+eps) I at the start.
struct MetricNet {
  std::size_t dim = 0;
  double eps = 1e-3;
  std::string prefix;
  MlpSpec net_spec;
  // Scale of the random output weights at init. Zero gives an exactly flat
  // start (g = (1+eps) I everywhere); a small nonzero value gives a
  // near-flat but non-degenerate metric whose curvature and volume terms
  // carry gradient from the first step.
  double init_output_scale = 0.0;

  static MetricNet make(std::size_t d, double eps, const std::string& prefix,
                        std::size_t hidden = 16) {
    MetricNet m;
    m.dim = d;
    m.eps = eps;
    m.prefix = prefix;
    m.net_spec.in = d;
    m.net_spec.out = d * (d + 1) / 2;
    m.net_spec.hidden = hidden;
    return m;
  }

  void init(ParamStore& params, Rng& rng) const {
    std::vector<double> bias(net_spec.out, 0.0);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j <= i; ++j, ++idx)
        if (i == j) bias[idx] = inv_softplus(1.0);
    mlp_init(params, prefix, net_spec, rng, &bias, init_output_scale);
  }

  MetricTensor metric_at(const ParamStore& params, const std::vector<double>& x) const {
    auto raw = mlp_eval(params, prefix, net_spec, x);
    for (double v : raw)
      if (!std::isfinite(v)) throw Error("metric_at: non-finite net output");
    Array l = Array::zeros({dim, dim});
    std::size_t idx = 0;
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j <= i; ++j, ++idx)
        l.at(i, j) = i == j ? softplus(raw[idx]) : raw[idx];
    Array g = Array::zeros({dim, dim});
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) {
        double s = i == j ? eps : 0.0;
        for (std::size_t k = 0; k < dim; ++k) s += l.at(i, k) * l.at(j, k);
        g.at(i, j) = s;
      }
    return MetricTensor(std::move(g));
  }

  // Differentiable version: x is a 1-D Var of length d; returns a d x d Var.
  Var metric_at_var(Tape& tape, const Bindings& bind, Var x) const {
    Var raw = mlp_forward(tape, bind, prefix, net_spec, x);
    std::vector<Var> pieces;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < dim; ++i) {
      if (i > 0) pieces.push_back(tape.slice(raw, idx, i));  // off-diagonal row part
      pieces.push_back(tape.softplus(tape.slice(raw, idx + i, 1)));
      idx += i + 1;
      if (dim - i - 1 > 0)
        pieces.push_back(tape.constant(Array::zeros({dim - i - 1})));
    }
    Var row = pieces[0];
    for (std::size_t p = 1; p < pieces.size(); ++p) row = tape.concat(row, pieces[p]);
    Var l = tape.reshape(row, {dim, dim});
    Array eps_eye = Array::identity(dim);
    for (double& v : eps_eye.data) v *= eps;
    return tape.matmul(l, tape.transpose(l)) + tape.constant(std::move(eps_eye));
  }

  // Double-path field view for geodesics and reports.
  MetricField field(const ParamStore& params) const {
    return [this, &params](const std::vector<double>& x) { return metric_at(params, x); };
  }

 private:
  static double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }
};

}  // namespace ndm
