#pragma once

#include <cmath>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "ndm/dataset.hpp"
#include "ndm/geometry.hpp"
#include "ndm/model.hpp"
#include "ndm/param_store.hpp"

namespace ndm {

// AD-vs-finite-difference and closed-form-oracle suites. Shared between
// the CLI subcommands (`gradcheck`, `oracle`), the unit tests, and the
// acceptance suite.

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Central difference of f along one flattened coordinate, with the same
// per-coordinate step rule as finite_diff_grad.
template <class F>
double fd_single(const F& f, const ParamStore& params, std::size_t flat_index,
                 double h = 1e-5) {
  ParamStore work = params;
  std::vector<double> flat = work.flatten();
  double theta = flat[flat_index];
  double step = h * std::max(1.0, std::abs(theta));
  flat[flat_index] = theta + step;
  work.unflatten(flat);
  double fp = f(work);
  flat[flat_index] = theta - step;
  work.unflatten(flat);
  double fm = f(work);
  return (fp - fm) / (2.0 * step);
}

// Gradients of every primitive against the finite-difference oracle over
// seeded random inputs in dims <= 8. Returns the worst relative error.
namespace detail {

// One seeded test expression per case id; shared by the value closure and
// the AD pass so both differentiate exactly the same function.
inline Var gradcheck_expr(Tape& t, const Bindings& b, std::size_t which, std::size_t n) {
  Var a = b["a"], bb = b["b"], mm = b["M"];
  switch (which) {
    case 0: return t.sum(a + bb);
    case 1: return t.sum(a - bb);
    case 2: return t.sum(a * bb);
    case 3: return t.sum(a / t.shift(t.square(bb), 1.0));
    case 4: return t.sum(t.tanh(a));
    case 5: return t.sum(t.exp(t.scale(a, 0.3)));
    case 6: return t.sum(t.log(t.shift(t.square(a), 0.5)));
    case 7: return t.mean(t.square(a));
    case 8: return t.variance(a * bb);
    case 9: return t.sum(t.softplus(a) * t.slice(t.concat(a, bb), 1, n));
    case 10: return t.sum(t.matmul(mm, t.transpose(mm)));
    case 11:
      return t.logdet_spd(t.matmul(mm, t.transpose(mm)) +
                          t.constant(Array::identity(mm.val().rows())));
    case 12:
      return t.sum(t.matinv(t.matmul(mm, t.transpose(mm)) +
                            t.constant(Array::identity(mm.val().rows()))));
    default: return t.sum(t.clamp(t.scale(a, 2.0), -1.5, 1.5));
  }
}

}  // namespace detail

// Gradients of every primitive against the finite-difference oracle over
// seeded random inputs in dims <= 8. Returns the worst relative error.
inline double check_primitive_gradients(std::uint64_t seed, std::size_t cases = 100) {
  double worst = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    Rng rng(seed + c);
    std::size_t n = 1 + rng.below(8);
    std::size_t m = 1 + rng.below(4);
    ParamStore params;
    params.add("a", Array::vec(rng.normal_vec(n)));
    params.add("b", Array::vec(rng.normal_vec(n)));
    params.add("M", Array({m, m}, rng.normal_vec(m * m)));
    std::size_t which = c % 14;

    auto f = [which, n](const ParamStore& ps) {
      Tape tape;
      Bindings bind(tape, ps);
      return detail::gradcheck_expr(tape, bind, which, n).scalar();
    };

    Tape tape;
    Bindings bind(tape, params);
    Var expr = detail::gradcheck_expr(tape, bind, which, n);
    ParamStore grads = bind.gather(tape.backward(expr), params);
    ParamStore fd = finite_diff_grad(f, params, 1e-5);

    auto gflat = grads.flatten();
    auto fdflat = fd.flatten();
    auto pflat = params.flatten();
    for (std::size_t i = 0; i < gflat.size(); ++i) {
      // clamp kinks: skip coordinates within finite-difference reach of
      // the threshold
      if (which == 13 && i < n && std::abs(std::abs(2.0 * pflat[i]) - 1.5) < 1e-3)
        continue;
      worst = std::max(worst, rel_err(gflat[i], fdflat[i]));
    }
  }
  return worst;
}

struct ModelGradcheckResult {
  double worst_task = 0, worst_curv = 0, worst_vol = 0, worst_total = 0;
  bool ok(double tol = 1e-4) const {
    return worst_task < tol && worst_curv < tol && worst_vol < tol && worst_total < tol;
  }
};

// AD gradients of l_task, l_curv, l_vol, l_total against central finite
// differences on a d=2, 2-layer model; `draws` randomly chosen parameter
// coordinates per loss component.
inline ModelGradcheckResult model_gradcheck(std::uint64_t seed, std::size_t draws = 100) {
  NDMModel model = NDMModel::make(2, 2, 2, 1e-3, 8);
  Rng rng(seed);
  ParamStore params = model.init_params(rng);
  // Move well off the zero-initialized identity point so all paths are
  // live and the curvature gradients are large relative to the rounding
  // noise of the finite-difference oracle.
  {
    std::vector<double> flat = params.flatten();
    for (double& v : flat) v += rng.normal(0.0, 0.5);
    params.unflatten(flat);
  }

  Dataset ds = make_dataset("two_moons", 8, seed + 1);
  auto inputs = embed_inputs(ds, 2);
  const std::size_t subsample = 4;
  // Coarser stencil step than the training default: the check compares
  // derivatives of the discretized loss, and a small stencil step amplifies
  // rounding noise in the finite-difference oracle by 1/h^2.
  const double h_curv = 3e-2;

  auto breakdown_of = [&](const ParamStore& ps) {
    Tape tape;
    Bindings bind(tape, ps);
    NdmLossVars loss = ndm_loss(tape, bind, model, inputs, ds.targets, ds.labels,
                                ds.kind, 0.1, 1.0, 1.0, subsample, h_curv, true);
    return loss.breakdown;
  };

  // AD gradients of each component
  ParamStore g_task, g_curv, g_vol, g_total;
  {
    Tape tape;
    Bindings bind(tape, params);
    NdmLossVars loss = ndm_loss(tape, bind, model, inputs, ds.targets, ds.labels,
                                ds.kind, 0.1, 1.0, 1.0, subsample, h_curv, true);
    g_task = bind.gather(tape.backward(loss.l_task), params);
    g_curv = bind.gather(tape.backward(loss.l_curv), params);
    g_vol = bind.gather(tape.backward(loss.l_vol), params);
    g_total = bind.gather(tape.backward(loss.l_total), params);
  }
  auto t_flat = g_task.flatten();
  auto c_flat = g_curv.flatten();
  auto v_flat = g_vol.flatten();
  auto tot_flat = g_total.flatten();

  ModelGradcheckResult res;
  std::size_t n_params = params.num_scalars();
  for (std::size_t k = 0; k < draws; ++k) {
    std::size_t i = rng.below(n_params);
    double fd_task = fd_single(
        [&](const ParamStore& ps) { return breakdown_of(ps).l_task; }, params, i);
    double fd_curv = fd_single(
        [&](const ParamStore& ps) { return breakdown_of(ps).l_curv; }, params, i);
    double fd_vol = fd_single(
        [&](const ParamStore& ps) { return breakdown_of(ps).l_vol; }, params, i);
    double fd_total = fd_single(
        [&](const ParamStore& ps) { return breakdown_of(ps).l_total; }, params, i);
    res.worst_task = std::max(res.worst_task, rel_err(t_flat[i], fd_task));
    res.worst_curv = std::max(res.worst_curv, rel_err(c_flat[i], fd_curv));
    res.worst_vol = std::max(res.worst_vol, rel_err(v_flat[i], fd_vol));
    res.worst_total = std::max(res.worst_total, rel_err(tot_flat[i], fd_total));
  }
  return res;
}

inline bool run_gradcheck(std::uint64_t seed, std::ostream& os) {
  bool ok = true;
  double worst_prim = check_primitive_gradients(seed, 100);
  bool prim_ok = worst_prim < 1e-5;
  os << (prim_ok ? "PASS" : "FAIL") << " primitive gradients vs finite differences"
     << " (worst rel err " << worst_prim << ", tol 1e-5)\n";
  ok = ok && prim_ok;

  ModelGradcheckResult mg = model_gradcheck(seed, 100);
  bool mg_ok = mg.ok(1e-4);
  os << (mg_ok ? "PASS" : "FAIL")
     << " model loss gradients vs finite differences (worst rel err:"
     << " task " << mg.worst_task << ", curv " << mg.worst_curv << ", vol "
     << mg.worst_vol << ", total " << mg.worst_total << ", tol 1e-4)\n";
  return ok && mg_ok;
}

// Closed-form differential-geometry oracles.
inline bool run_oracle_suite(std::ostream& os) {
  bool all = true;
  auto report = [&](bool ok, const std::string& what) {
    os << (ok ? "PASS " : "FAIL ") << what << "\n";
    all = all && ok;
  };
  const double h = 1e-3;

  {
    auto field = make_test_field("euclidean");
    double r = ricci_scalar(field, {0.3, -0.7}, h);
    report(std::abs(r) < 1e-8, "euclidean: |R| < 1e-8 (R = " + std::to_string(r) + ")");
    auto gamma = christoffel(field, {0.3, -0.7});
    double gmax = 0;
    for (double g : gamma) gmax = std::max(gmax, std::abs(g));
    report(gmax < 1e-10, "euclidean: Christoffel symbols vanish");
  }
  {
    auto field = make_test_field("polar");
    double r = ricci_scalar(field, {2.0, 0.0}, h);
    report(std::abs(r) < 1e-5, "polar flat: |R| < 1e-5 (R = " + std::to_string(r) + ")");
    auto gamma = christoffel(field, {2.0, 0.0}, 1e-4);
    auto at = [](const std::vector<double>& g, std::size_t k, std::size_t i,
                 std::size_t j) { return g[(k * 2 + i) * 2 + j]; };
    bool ok = std::abs(at(gamma, 0, 1, 1) - (-2.0)) < 1e-6 &&
              std::abs(at(gamma, 1, 0, 1) - 0.5) < 1e-6 &&
              std::abs(at(gamma, 1, 1, 0) - 0.5) < 1e-6 &&
              std::abs(at(gamma, 0, 0, 0)) < 1e-6 && std::abs(at(gamma, 0, 0, 1)) < 1e-6 &&
              std::abs(at(gamma, 0, 1, 0)) < 1e-6 && std::abs(at(gamma, 1, 0, 0)) < 1e-6 &&
              std::abs(at(gamma, 1, 1, 1)) < 1e-6;
    report(ok, "polar flat: Christoffel symbols match closed form at r=2");
  }
  {
    auto field = make_test_field("sphere");
    double r = ricci_scalar(field, {std::numbers::pi / 4, 0.0}, h);
    report(std::abs(r - 2.0) / 2.0 < 1e-3,
           "unit sphere: R = 2 rel err < 1e-3 (R = " + std::to_string(r) + ")");
  }
  {
    auto field = make_test_field("poincare");
    double r = ricci_scalar(field, {0.0, 1.0}, h);
    report(std::abs(r + 2.0) / 2.0 < 1e-3,
           "Poincare half-plane: R = -2 rel err < 1e-3 (R = " + std::to_string(r) + ")");
  }

  // geodesic oracles
  {
    auto field = make_test_field("euclidean");
    auto traj = geodesic_integrate(field, {0, 0}, {1, 0}, 1.0, 100);
    double err = std::abs(traj.back().x[0] - 1.0) + std::abs(traj.back().x[1]);
    report(err < 1e-10, "euclidean geodesic: straight line to (1,0)");
  }
  {
    auto field = make_test_field("sphere");
    auto traj = geodesic_integrate(field, {std::numbers::pi / 2, 0.0}, {0.0, 1.0}, 1.0, 1000);
    double dev = 0;
    for (const auto& s : traj) dev = std::max(dev, std::abs(s.x[0] - std::numbers::pi / 2));
    report(dev < 1e-6, "sphere geodesic: equator stays a great circle (max dev " +
                           std::to_string(dev) + ")");
  }
  {
    auto field = make_test_field("poincare");
    for (double dir : {1.0, -1.0}) {
      auto traj = geodesic_integrate(field, {0.0, 1.0}, {dir, 0.0}, 1.0, 1000);
      double worst = 0;
      for (const auto& s : traj)
        worst = std::max(worst, std::abs(s.x[0] * s.x[0] + s.x[1] * s.x[1] - 1.0));
      report(worst < 1e-4, std::string("Poincare geodesic stays on unit circle (") +
                               (dir > 0 ? "+" : "-") + "x direction, max dev " +
                               std::to_string(worst) + ")");
    }
  }
  // speed conservation on all closed-form fields
  for (const std::string& name : test_field_names()) {
    auto field = make_test_field(name);
    std::vector<double> x0 = name == "poincare" ? std::vector<double>{0.0, 1.0}
                           : name == "sphere"   ? std::vector<double>{1.2, 0.3}
                           : name == "polar"    ? std::vector<double>{2.0, 0.1}
                                                : std::vector<double>{0.0, 0.0};
    auto traj = geodesic_integrate(field, x0, {0.4, 0.3}, 1.0, 1000);
    double s0 = inner_product(field(traj.front().x), traj.front().v, traj.front().v);
    double drift = 0;
    for (const auto& s : traj) {
      double sp = inner_product(field(s.x), s.v, s.v);
      drift = std::max(drift, std::abs(sp - s0) / s0);
    }
    report(drift < 1e-4, "geodesic speed conservation on " + name + " (drift " +
                             std::to_string(drift) + ")");
  }
  return all;
}

}  // namespace ndm
