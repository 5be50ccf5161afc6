#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ndm/array.hpp"

namespace ndm {

// Damped Fisher-information operator v -> G v + gamma v, never
// materializing G. In empirical mode G is the batch outer-product
// estimator over per-sample gradient vectors.
struct FisherApprox {
  enum class Mode { kIdentity, kEmpirical };

  Mode mode = Mode::kIdentity;
  double damping = 1e-3;
  std::vector<std::vector<double>> sample_grads;  // empirical mode only

  // Identity G is already SPD, so zero damping is allowed here; with
  // gamma = 0 the operator is exactly I and CG converges in one iteration.
  static FisherApprox identity(double gamma) {
    if (gamma < 0) throw Error("FisherApprox: damping must be non-negative");
    FisherApprox f;
    f.mode = Mode::kIdentity;
    f.damping = gamma;
    return f;
  }

  // gamma = 0 is permitted for the bare outer-product operator (useful in
  // tests); CG then reports breakdown if the operator turns out singular.
  static FisherApprox empirical(std::vector<std::vector<double>> grads, double gamma) {
    if (gamma < 0) throw Error("FisherApprox: damping must be non-negative");
    if (grads.empty()) throw Error("empirical_fisher: empty batch");
    for (const auto& g : grads) {
      if (g.size() != grads[0].size()) throw Error("empirical_fisher: length mismatch");
      for (double v : g)
        if (!std::isfinite(v)) throw Error("empirical_fisher: non-finite gradient");
    }
    FisherApprox f;
    f.mode = Mode::kEmpirical;
    f.damping = gamma;
    f.sample_grads = std::move(grads);
    return f;
  }

  std::vector<double> matvec(const std::vector<double>& v) const {
    std::vector<double> out(v.size());
    if (mode == Mode::kIdentity) {
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = (1.0 + damping) * v[i];
      return out;
    }
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = damping * v[i];
    double inv_b = 1.0 / static_cast<double>(sample_grads.size());
    for (const auto& u : sample_grads) {
      double dot = 0;
      for (std::size_t i = 0; i < v.size(); ++i) dot += u[i] * v[i];
      double c = inv_b * dot;
      for (std::size_t i = 0; i < v.size(); ++i) out[i] += c * u[i];
    }
    return out;
  }
};

struct CgResult {
  std::vector<double> x;
  std::size_t iterations = 0;
  double relative_residual = 0;
  bool converged = false;
};

// Conjugate gradient on the damped Fisher operator (SPD by construction).
inline CgResult cg_solve(const FisherApprox& fisher, const std::vector<double>& b,
                         std::size_t max_iters = 50, double tol = 1e-8) {
  CgResult res;
  res.x.assign(b.size(), 0.0);
  // Keep rs as the exact dot product (not bnorm squared) so that on the
  // undamped identity operator alpha is exactly 1 and the first iterate
  // reproduces b bit for bit.
  double rs = 0;
  for (double v : b) rs += v * v;
  double bnorm = std::sqrt(rs);
  if (bnorm == 0) {
    res.converged = true;
    return res;
  }
  std::vector<double> r = b, p = b;
  for (std::size_t it = 0; it < max_iters; ++it) {
    auto ap = fisher.matvec(p);
    double pap = 0;
    for (std::size_t i = 0; i < p.size(); ++i) pap += p[i] * ap[i];
    if (pap <= 0 || !std::isfinite(pap))
      throw Error("cg_solve: breakdown, operator not positive-definite");
    double alpha = rs / pap;
    for (std::size_t i = 0; i < p.size(); ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    double rs_new = 0;
    for (double v : r) rs_new += v * v;
    res.iterations = it + 1;
    res.relative_residual = std::sqrt(rs_new) / bnorm;
    if (res.relative_residual <= tol) {
      res.converged = true;
      return res;
    }
    double beta = rs_new / rs;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    rs = rs_new;
  }
  return res;
}

struct UpdateRule {
  enum class Kind { kSgd, kNatural };
  Kind kind = Kind::kSgd;
  double lr = 0.05;
  std::size_t cg_max_iters = 50;
  double cg_tol = 1e-8;

  static UpdateRule sgd(double lr) { return make(Kind::kSgd, lr); }
  static UpdateRule natural(double lr, std::size_t cg_max_iters = 50,
                            double cg_tol = 1e-8) {
    UpdateRule r = make(Kind::kNatural, lr);
    r.cg_max_iters = cg_max_iters;
    r.cg_tol = cg_tol;
    return r;
  }

 private:
  static UpdateRule make(Kind k, double lr) {
    if (!(lr > 0) || !std::isfinite(lr)) throw Error("UpdateRule: lr must be positive");
    UpdateRule r;
    r.kind = k;
    r.lr = lr;
    return r;
  }
};

// One parameter update on flattened vectors. Natural mode preconditions
// the gradient with the inverse damped Fisher via CG.
inline std::vector<double> step(const UpdateRule& rule, const std::vector<double>& theta,
                                const std::vector<double>& gradient,
                                const FisherApprox* fisher = nullptr) {
  if (theta.size() != gradient.size()) throw Error("step: shape mismatch");
  std::vector<double> direction;
  if (rule.kind == UpdateRule::Kind::kNatural) {
    if (!fisher) throw Error("step: natural mode requires a Fisher approximation");
    direction = cg_solve(*fisher, gradient, rule.cg_max_iters, rule.cg_tol).x;
  } else {
    direction = gradient;
  }
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) out[i] = theta[i] - rule.lr * direction[i];
  return out;
}

}  // namespace ndm
