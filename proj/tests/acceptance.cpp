// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned here, not configurable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ndm/coupling.hpp"
#include "ndm/geometry.hpp"
#include "ndm/optimizer.hpp"
#include "ndm/selfcheck.hpp"
#include "ndm/train.hpp"

using namespace ndm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Criterion {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- criterion 1: closed-form curvature oracles -------------------------

Criterion check_curvature_oracles() {
  auto t0 = Clock::now();
  double r_sphere = ricci_scalar(make_test_field("sphere"), {1.0, 0.3});
  double r_poincare = ricci_scalar(make_test_field("poincare"), {0.2, 0.7});
  double r_polar = ricci_scalar(make_test_field("polar"), {1.1, 2.0});
  double r_euclid = ricci_scalar(make_test_field("euclidean"), {0.4, -0.6});
  double dt = seconds_since(t0);
  bool pass = std::abs(r_sphere - 2.0) / 2.0 < 1e-3 &&
              std::abs(r_poincare + 2.0) / 2.0 < 1e-3 && std::abs(r_polar) < 1e-5 &&
              std::abs(r_euclid) < 1e-8 && dt < 5.0;
  return {pass, "sphere=" + fmt(r_sphere) + " poincare=" + fmt(r_poincare) +
                    " polar=" + fmt(r_polar) + " euclid=" + fmt(r_euclid) + " in " +
                    fmt(dt) + "s"};
}

// --- criterion 2: invertibility and log-det ------------------------------

double logdet_numerical(const CouplingLayer& layer, const ParamStore& ps,
                        const std::vector<double>& x) {
  std::size_t d = x.size();
  double h = 1e-6;
  std::vector<double> jac(d * d);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    auto fp = layer.forward_value(ps, xp);
    auto fm = layer.forward_value(ps, xm);
    for (std::size_t i = 0; i < d; ++i) jac[i * d + j] = (fp[i] - fm[i]) / (2 * h);
  }
  double det = 1.0;
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::abs(jac[r * d + col]) > std::abs(jac[piv * d + col])) piv = r;
    if (piv != col) {
      for (std::size_t j = 0; j < d; ++j) std::swap(jac[piv * d + j], jac[col * d + j]);
      det = -det;
    }
    det *= jac[col * d + col];
    for (std::size_t r = col + 1; r < d; ++r) {
      double f = jac[r * d + col] / jac[col * d + col];
      for (std::size_t j = col; j < d; ++j) jac[r * d + j] -= f * jac[col * d + j];
    }
  }
  return std::log(std::abs(det));
}

Criterion check_invertibility() {
  Rng rng(13);
  double worst_round = 0, worst_logdet = 0;
  for (std::size_t d : {2u, 4u, 6u}) {
    auto stack = CoordinateStack::make(d, 4);
    ParamStore ps;
    stack.init(ps, rng);
    std::vector<double> flat = ps.flatten();
    for (double& v : flat) v += rng.normal(0.0, 0.5);
    ps.unflatten(flat);
    for (int rep = 0; rep < 1000; ++rep) {
      auto x = rng.normal_vec(d, 2.0);
      auto back = stack.inverse(ps, stack.forward_value(ps, x));
      for (std::size_t i = 0; i < d; ++i)
        worst_round = std::max(worst_round, std::abs(back[i] - x[i]));
    }
    // log-det against the numerical Jacobian on a subset (FD is the slow part)
    const CouplingLayer& layer = stack.layers[0];
    for (int rep = 0; rep < 50; ++rep) {
      auto x = rng.normal_vec(d);
      double ld = 0;
      layer.forward_value(ps, x, &ld);
      double fd = logdet_numerical(layer, ps, x);
      worst_logdet = std::max(worst_logdet,
                              std::abs(ld - fd) / std::max(std::abs(fd), 1e-3));
    }
  }
  bool pass = worst_round < 1e-10 && worst_logdet < 1e-5;
  return {pass, "max roundtrip err " + fmt(worst_round) + ", max logdet rel err " +
                    fmt(worst_logdet)};
}

// --- criterion 3: gradient checks ----------------------------------------

Criterion check_gradients() {
  auto t0 = Clock::now();
  double worst_prim = check_primitive_gradients(17, 100);
  ModelGradcheckResult mg = model_gradcheck(17, 100);
  double dt = seconds_since(t0);
  bool pass = worst_prim < 1e-4 && mg.ok(1e-4) && dt < 60.0;
  return {pass, "worst rel err: primitives " + fmt(worst_prim) + ", task " +
                    fmt(mg.worst_task) + ", curv " + fmt(mg.worst_curv) + ", vol " +
                    fmt(mg.worst_vol) + ", total " + fmt(mg.worst_total) + " in " +
                    fmt(dt) + "s"};
}

// --- criterion 4: positive-definiteness fuzz ------------------------------

double min_eigenvalue(Array a) {
  std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a.at(p, q)) < 1e-300) continue;
        double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * a.at(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
      }
  }
  double m = a.at(0, 0);
  for (std::size_t i = 1; i < n; ++i) m = std::min(m, a.at(i, i));
  return m;
}

Criterion check_positive_definiteness() {
  Rng rng(29);
  double eps = 1e-3;
  double worst = 1e9;
  for (int draw = 0; draw < 1000; ++draw) {
    std::size_t d = 2 + rng.below(3);
    auto net = MetricNet::make(d, eps, "m", 8);
    ParamStore ps;
    net.init(ps, rng);
    std::vector<double> flat = ps.flatten();
    for (double& v : flat) v += rng.normal(0.0, 1.0);
    ps.unflatten(flat);
    worst = std::min(worst, min_eigenvalue(net.metric_at(ps, rng.normal_vec(d, 3.0)).g));
  }
  bool pass = worst >= eps - 1e-12;
  return {pass, "min eigenvalue over 1000 draws: " + fmt(worst) +
                    " (floor " + fmt(eps - 1e-12) + ")"};
}

// --- criterion 5: optimizer equivalences ----------------------------------

Criterion check_optimizer() {
  Rng rng(41);
  // natural with identity Fisher, zero damping == SGD, bit for bit
  auto theta = rng.normal_vec(64);
  auto grad = rng.normal_vec(64);
  auto id = FisherApprox::identity(0.0);
  auto nat = step(UpdateRule::natural(0.05), theta, grad, &id);
  auto sgd = step(UpdateRule::sgd(0.05), theta, grad);
  bool exact = nat == sgd;

  // CG vs dense solves on random damped SPD systems up to k = 8
  double worst = 0;
  for (std::size_t n = 2; n <= 8; ++n) {
    std::vector<std::vector<double>> grads;
    for (std::size_t s = 0; s < n; ++s) grads.push_back(rng.normal_vec(n));
    auto f = FisherApprox::empirical(grads, 0.3);
    auto b = rng.normal_vec(n);
    auto res = cg_solve(f, b, 200, 1e-12);
    // dense reference via Gauss-Jordan on the materialized operator
    std::vector<double> m(n * n);
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> e(n, 0.0);
      e[j] = 1.0;
      auto col = f.matvec(e);
      for (std::size_t i = 0; i < n; ++i) m[i * n + j] = col[i];
    }
    std::vector<double> rhs = b;
    for (std::size_t col = 0; col < n; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < n; ++r)
        if (std::abs(m[r * n + col]) > std::abs(m[piv * n + col])) piv = r;
      for (std::size_t j = 0; j < n; ++j) std::swap(m[piv * n + j], m[col * n + j]);
      std::swap(rhs[piv], rhs[col]);
      for (std::size_t r = 0; r < n; ++r) {
        if (r == col) continue;
        double fr = m[r * n + col] / m[col * n + col];
        for (std::size_t j = col; j < n; ++j) m[r * n + j] -= fr * m[col * n + j];
        rhs[r] -= fr * rhs[col];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double ref = rhs[i] / m[i * n + i];
      worst = std::max(worst,
                       std::abs(res.x[i] - ref) / std::max(std::abs(ref), 1e-6));
    }
  }
  bool pass = exact && worst < 1e-6;
  return {pass, std::string(exact ? "identity==sgd bit-exact" : "identity!=sgd") +
                    ", CG vs dense worst rel err " + fmt(worst)};
}

// --- criteria 6 and 8: training runs (shared) -----------------------------

struct TrainOutcome {
  TrainResult result;
  std::vector<std::vector<std::string>> rows;  // parsed CSV, without header
  double seconds = 0;
};

TrainOutcome run_training(double lambda, const std::string& out_dir) {
  TrainConfig cfg;  // defaults: two_moons, 2000 steps, seed 7
  cfg.lambda = lambda;
  cfg.out_dir = out_dir;
  auto t0 = Clock::now();
  TrainOutcome out;
  out.result = train(cfg);
  out.seconds = seconds_since(t0);
  std::ifstream in(out.result.metrics_path);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        row.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    row.push_back(cur);
    out.rows.push_back(std::move(row));
  }
  return out;
}

Criterion check_gradient_decomposition(const TrainOutcome& lam0,
                                       const TrainOutcome& lam01) {
  bool all_zero = true;
  for (const auto& row : lam0.rows)
    if (row.at(8) != "0") all_zero = false;
  double step0 = std::stod(lam01.rows.at(0).at(8));
  bool pass = all_zero && lam0.rows.size() == 2000 && step0 > 0;
  return {pass, std::string(all_zero ? "lambda=0 metric grad identically 0"
                                     : "lambda=0 metric grad NONZERO") +
                    "; lambda=0.1 step-0 metric grad " + fmt(step0)};
}

Criterion check_end_to_end(const TrainOutcome& lam0, const TrainOutcome& lam01) {
  double acc0 = lam0.result.final_accuracy;
  double acc1 = lam01.result.final_accuracy;
  double geo_first = lam01.result.l_geo_step0;
  double geo_final = lam01.result.l_geo_final;
  double total_s = lam0.seconds + lam01.seconds;
  bool pass = acc0 >= 0.95 && acc1 >= 0.90 && geo_final < geo_first && total_s < 300.0;
  return {pass, "acc(lambda=0)=" + fmt(acc0) + " acc(lambda=0.1)=" + fmt(acc1) +
                    " l_geo " + fmt(geo_first) + "->" + fmt(geo_final) + " in " +
                    fmt(total_s) + "s"};
}

// --- criterion 7: geodesic conservation ------------------------------------

Criterion check_geodesics() {
  double worst_drift = 0;
  for (const auto& name : test_field_names()) {
    auto field = make_test_field(name);
    std::vector<double> x0 = name == "poincare" ? std::vector<double>{0.0, 1.0}
                                                : std::vector<double>{1.0, 0.5};
    std::vector<double> v0{0.4, 0.6};
    auto path = geodesic_integrate(field, x0, v0, 1.0, 1000);
    double s0 = inner_product(field(x0), v0, v0);
    for (const auto& s : path)
      worst_drift = std::max(worst_drift,
                             std::abs(inner_product(field(s.x), s.v, s.v) - s0) / s0);
  }
  // geodesic of the half-plane from (0,1) with horizontal velocity: unit circle
  double worst_circle = 0;
  auto field = make_test_field("poincare");
  for (const auto& s : geodesic_integrate(field, {0.0, 1.0}, {1.0, 0.0}, 1.0, 1000))
    worst_circle = std::max(worst_circle, std::abs(std::hypot(s.x[0], s.x[1]) - 1.0));
  bool pass = worst_drift < 1e-4 && worst_circle < 1e-4;
  return {pass, "speed drift " + fmt(worst_drift) + ", circle deviation " +
                    fmt(worst_circle)};
}

// --- criterion 9: determinism ------------------------------------------------

Criterion check_determinism(const fs::path& scratch) {
  TrainConfig cfg;
  cfg.steps = 200;
  cfg.out_dir = (scratch / "det_a").string();
  train(cfg);
  std::string run1 = slurp(cfg.out_dir + "/metrics.csv");
  cfg.out_dir = (scratch / "det_b").string();
  train(cfg);
  std::string run2 = slurp(cfg.out_dir + "/metrics.csv");
  bool pass = !run1.empty() && run1 == run2;
  return {pass, pass ? "200-step metrics CSVs byte-identical" : "CSVs differ"};
}

}  // namespace

int main() {
  fs::path scratch = fs::temp_directory_path() / "ndm_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  std::vector<std::pair<std::string, Criterion>> results(9);
  results[0] = {"curvature oracles", check_curvature_oracles()};
  results[1] = {"invertibility", check_invertibility()};
  results[2] = {"gradient checks", check_gradients()};
  results[3] = {"positive-definiteness fuzz", check_positive_definiteness()};
  results[4] = {"optimizer equivalences", check_optimizer()};

  TrainOutcome lam0 = run_training(0.0, (scratch / "lam0").string());
  TrainOutcome lam01 = run_training(0.1, (scratch / "lam01").string());
  results[5] = {"gradient decomposition", check_gradient_decomposition(lam0, lam01)};
  results[6] = {"geodesic conservation", check_geodesics()};
  results[7] = {"end-to-end sanity", check_end_to_end(lam0, lam01)};
  results[8] = {"determinism", check_determinism(scratch)};

  bool all = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& [name, c] = results[i];
    std::printf("%s criterion %zu (%s): %s\n", c.pass ? "PASS" : "FAIL", i + 1,
                name.c_str(), c.detail.c_str());
    all = all && c.pass;
  }
  fs::remove_all(scratch);
  return all ? 0 : 1;
}
