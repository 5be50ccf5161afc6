#pragma once

#include <functional>
#include <map>
#include <vector>

#include "ndm/tape.hpp"

namespace ndm {

// Differentiable curvature: the same central-difference stencil as
// geometry.hpp, but built out of tape operations on metric evaluations, so
// reverse-mode AD flows through both the metric net and the sample point.

using MetricEvalVar = std::function<Var(Tape&, Var /* 1-D point */)>;

namespace detail {

class CurvatureStencil {
 public:
  CurvatureStencil(Tape& tape, const MetricEvalVar& eval, Var x, double h)
      : tape_(tape), eval_(eval), x_(x), h_(h), d_(x.val().numel()) {}

  Var ricci_scalar() {
    std::vector<int> center(d_, 0);
    auto gamma = christoffel_at(center);

    // dgamma[m] = d Gamma / d x_m by central differences
    std::vector<std::vector<Var>> dgamma(d_);
    for (std::size_t m = 0; m < d_; ++m) {
      std::vector<int> op = center, om = center;
      op[m] += 1;
      om[m] -= 1;
      auto gp = christoffel_at(op);
      auto gm = christoffel_at(om);
      dgamma[m].reserve(gp.size());
      for (std::size_t i = 0; i < gp.size(); ++i)
        dgamma[m].push_back(tape_.scale(gp[i] - gm[i], 1.0 / (2.0 * h_)));
    }

    auto ginv_e = entries(tape_.matinv(metric_at(center)));
    auto at = [this](const std::vector<Var>& G, std::size_t k, std::size_t i,
                     std::size_t j) { return G[(k * d_ + i) * d_ + j]; };

    Var r = tape_.constant(0.0);
    for (std::size_t j = 0; j < d_; ++j)
      for (std::size_t k = 0; k < d_; ++k) {
        Var rjk = tape_.constant(0.0);
        for (std::size_t i = 0; i < d_; ++i) {
          rjk = rjk + at(dgamma[i], i, j, k) - at(dgamma[j], i, i, k);
          for (std::size_t l = 0; l < d_; ++l)
            rjk = rjk + at(gamma, i, i, l) * at(gamma, l, j, k) -
                  at(gamma, i, j, l) * at(gamma, l, i, k);
        }
        r = r + ginv_e[j * d_ + k] * rjk;
      }
    return r;
  }

 private:
  Tape& tape_;
  const MetricEvalVar& eval_;
  Var x_;
  double h_;
  std::size_t d_;
  std::map<std::vector<int>, Var> metric_cache_;

  // Metric at x + h * offset; stencil points overlap between Christoffel
  // evaluations, so evaluations are cached by integer offset.
  Var metric_at(const std::vector<int>& offset) {
    auto it = metric_cache_.find(offset);
    if (it != metric_cache_.end()) return it->second;
    bool centered = true;
    for (int o : offset)
      if (o != 0) centered = false;
    Var p = x_;
    if (!centered) {
      std::vector<double> shift(d_);
      for (std::size_t i = 0; i < d_; ++i) shift[i] = h_ * offset[i];
      p = x_ + tape_.constant(Array::vec(shift));
    }
    Var g = eval_(tape_, p);
    metric_cache_.emplace(offset, g);
    return g;
  }

  std::vector<Var> entries(Var m) {
    std::vector<Var> out;
    out.reserve(d_ * d_);
    for (std::size_t i = 0; i < d_ * d_; ++i) out.push_back(tape_.slice(m, i, 1));
    return out;
  }

  // Gamma^k_ij as d^3 scalar Vars, indexed [(k*d + i)*d + j].
  std::vector<Var> christoffel_at(const std::vector<int>& offset) {
    auto ginv_e = entries(tape_.matinv(metric_at(offset)));

    std::vector<std::vector<Var>> dg(d_);
    for (std::size_t m = 0; m < d_; ++m) {
      std::vector<int> op = offset, om = offset;
      op[m] += 1;
      om[m] -= 1;
      dg[m] = entries(tape_.scale(metric_at(op) - metric_at(om), 1.0 / (2.0 * h_)));
    }

    // T_ijl = d_i g_jl + d_j g_il - d_l g_ij, shared across k
    std::vector<Var> t(d_ * d_ * d_, Var{});
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j < d_; ++j)
        for (std::size_t l = 0; l < d_; ++l)
          t[(i * d_ + j) * d_ + l] =
              dg[i][j * d_ + l] + dg[j][i * d_ + l] - dg[l][i * d_ + j];

    std::vector<Var> gamma(d_ * d_ * d_, Var{});
    for (std::size_t k = 0; k < d_; ++k)
      for (std::size_t i = 0; i < d_; ++i)
        for (std::size_t j = 0; j < d_; ++j) {
          Var s = ginv_e[k * d_] * t[(i * d_ + j) * d_];
          for (std::size_t l = 1; l < d_; ++l)
            s = s + ginv_e[k * d_ + l] * t[(i * d_ + j) * d_ + l];
          gamma[(k * d_ + i) * d_ + j] = tape_.scale(s, 0.5);
        }
    return gamma;
  }
};

}  // namespace detail

inline Var ricci_scalar_var(Tape& tape, const MetricEvalVar& eval, Var x, double h) {
  return detail::CurvatureStencil(tape, eval, x, h).ricci_scalar();
}

// sqrt(det g) for a positive-definite Var matrix.
inline Var volume_element_var(Tape& tape, Var g) {
  return tape.exp(tape.scale(tape.logdet_spd(g), 0.5));
}

}  // namespace ndm
