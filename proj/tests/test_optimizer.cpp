#include <catch_amalgamated.hpp>

#include <cmath>

#include "ndm/optimizer.hpp"
#include "ndm/rng.hpp"

using namespace ndm;

namespace {

// Dense Gaussian-elimination solve, the independent reference for CG.
std::vector<double> dense_solve(std::vector<double> a, std::vector<double> b) {
  std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    for (std::size_t j = 0; j < n; ++j) std::swap(a[piv * n + j], a[col * n + j]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = a[r * n + col] / a[col * n + col];
      for (std::size_t j = col; j < n; ++j) a[r * n + j] -= f * a[col * n + j];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = 0; i < n; ++i) b[i] /= a[i * n + i];
  return b;
}

// Dense matrix realized from the Fisher operator, for cross-checks.
std::vector<double> materialize(const FisherApprox& f, std::size_t n) {
  std::vector<double> m(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> e(n, 0.0);
    e[j] = 1.0;
    auto col = f.matvec(e);
    for (std::size_t i = 0; i < n; ++i) m[i * n + j] = col[i];
  }
  return m;
}

}  // namespace

TEST_CASE("empirical Fisher matvec on hand values") {
  // single gradient u = (1, 2), batch of one: G v = u (u . v)
  auto f = FisherApprox::empirical({{1, 2}}, 0.0);
  auto gv = f.matvec({1, 0});
  CHECK(gv[0] == Catch::Approx(1.0));
  CHECK(gv[1] == Catch::Approx(2.0));

  // damping adds gamma v
  auto fd = FisherApprox::empirical({{1, 2}}, 0.5);
  auto gvd = fd.matvec({1, 0});
  CHECK(gvd[0] == Catch::Approx(1.5));
  CHECK(gvd[1] == Catch::Approx(2.0));

  // two-sample batch averages the outer products: u1=(1,0), u2=(0,1) -> G = I/2
  auto f2 = FisherApprox::empirical({{1, 0}, {0, 1}}, 0.0);
  auto gv2 = f2.matvec({4, 6});
  CHECK(gv2[0] == Catch::Approx(2.0));
  CHECK(gv2[1] == Catch::Approx(3.0));
}

TEST_CASE("Fisher constructor validation") {
  CHECK_THROWS_AS(FisherApprox::identity(-0.1), Error);
  CHECK_THROWS_AS(FisherApprox::empirical({}, 0.1), Error);
  CHECK_THROWS_AS(FisherApprox::empirical({{1, 2}, {1}}, 0.1), Error);
  CHECK_THROWS_AS(FisherApprox::empirical({{1, 2}}, -1.0), Error);
}

TEST_CASE("CG on the identity converges in one iteration") {
  auto f = FisherApprox::identity(0.0);
  auto res = cg_solve(f, {3, -4, 5});
  CHECK(res.converged);
  CHECK(res.iterations == 1);
  CHECK(res.x[0] == Catch::Approx(3.0));
  CHECK(res.x[2] == Catch::Approx(5.0));
}

TEST_CASE("CG solves a hand diagonal system") {
  // operator diag(2, 4): empirical grads (sqrt2, 0), (0, 2) with gamma = 1
  // give G = diag(1, 2) + I = diag(2, 3); use explicit samples for diag(2,4):
  auto f = FisherApprox::empirical({{std::sqrt(2.0), 0}, {0, std::sqrt(6.0)}}, 1.0);
  // G = diag(2/2, 6/2) + I = diag(2, 4)
  auto res = cg_solve(f, {2, 4});
  CHECK(res.converged);
  CHECK(res.x[0] == Catch::Approx(1.0).margin(1e-8));
  CHECK(res.x[1] == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("CG matches a dense solve on random damped SPD systems") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    std::size_t n = 6;
    std::vector<std::vector<double>> grads;
    for (int s = 0; s < 4; ++s) grads.push_back(rng.normal_vec(n));
    auto f = FisherApprox::empirical(grads, 0.3);
    auto b = rng.normal_vec(n);
    auto res = cg_solve(f, b, 200, 1e-12);
    REQUIRE(res.converged);
    auto ref = dense_solve(materialize(f, n), b);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(res.x[i] - ref[i]) /
                std::max({std::abs(ref[i]), 1e-6}) < 1e-6);
  }
}

TEST_CASE("CG converges within the dimension count of the operator rank") {
  // rank(G) = 1 plus damping: spectrum has two distinct values, so CG
  // terminates in at most 2 iterations
  auto f = FisherApprox::empirical({{1, 2, 3, 4}}, 0.7);
  auto res = cg_solve(f, {1, 1, 1, 1}, 50, 1e-10);
  CHECK(res.converged);
  CHECK(res.iterations <= 2);
}

TEST_CASE("zero right-hand side returns zero without iterating") {
  auto res = cg_solve(FisherApprox::identity(0.1), {0, 0, 0});
  CHECK(res.converged);
  CHECK(res.iterations == 0);
  for (double v : res.x) CHECK(v == 0.0);
}

TEST_CASE("SGD step on hand values") {
  auto out = step(UpdateRule::sgd(0.1), {1.0, 1.0}, {2.0, 4.0});
  CHECK(out[0] == Catch::Approx(0.8));
  CHECK(out[1] == Catch::Approx(0.6));
}

TEST_CASE("natural step with identity Fisher and zero damping equals SGD") {
  Rng rng(12);
  auto theta = rng.normal_vec(20);
  auto grad = rng.normal_vec(20);
  auto fisher = FisherApprox::identity(0.0);
  auto nat = step(UpdateRule::natural(0.05), theta, grad, &fisher);
  auto sgd = step(UpdateRule::sgd(0.05), theta, grad);
  for (std::size_t i = 0; i < theta.size(); ++i) CHECK(nat[i] == sgd[i]);  // bit-exact
}

TEST_CASE("natural step preconditions by the inverse Fisher") {
  // G = diag(2, 4), grad = (2, 4): direction = (1, 1)
  auto fisher = FisherApprox::empirical({{std::sqrt(2.0), 0}, {0, std::sqrt(6.0)}}, 1.0);
  auto out = step(UpdateRule::natural(1.0), {3.0, 3.0}, {2.0, 4.0}, &fisher);
  CHECK(out[0] == Catch::Approx(2.0).margin(1e-8));
  CHECK(out[1] == Catch::Approx(2.0).margin(1e-8));
}

TEST_CASE("natural mode requires a Fisher operator") {
  CHECK_THROWS_AS(step(UpdateRule::natural(0.1), {1.0}, {1.0}, nullptr), Error);
  CHECK_THROWS_AS(step(UpdateRule::sgd(0.1), {1.0}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(UpdateRule::sgd(0.0), Error);
  CHECK_THROWS_AS(UpdateRule::sgd(-1.0), Error);
}

TEST_CASE("natural direction is a descent direction") {
  Rng rng(44);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t n = 8;
    std::vector<std::vector<double>> grads;
    for (int s = 0; s < 3; ++s) grads.push_back(rng.normal_vec(n));
    auto f = FisherApprox::empirical(grads, 0.2);
    auto g = rng.normal_vec(n);
    auto x = cg_solve(f, g, 100, 1e-10).x;
    double dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += x[i] * g[i];
    CHECK(dot > 0);  // -x is downhill against g
  }
}

TEST_CASE("natural gradient direction scales inversely with the Fisher") {
  // scaling the Fisher by c scales the solution by 1/c
  Rng rng(8);
  std::vector<std::vector<double>> grads{rng.normal_vec(5), rng.normal_vec(5)};
  auto g = rng.normal_vec(5);
  double c = 3.0;
  auto scaled = grads;
  for (auto& u : scaled)
    for (double& v : u) v *= std::sqrt(c);
  auto x1 = cg_solve(FisherApprox::empirical(grads, 0.5), g, 100, 1e-12).x;
  auto x2 = cg_solve(FisherApprox::empirical(scaled, 0.5 * c), g, 100, 1e-12).x;
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(x2[i] == Catch::Approx(x1[i] / c).margin(1e-9));
}

TEST_CASE("CG is deterministic") {
  Rng rng(71);
  std::vector<std::vector<double>> grads{rng.normal_vec(10), rng.normal_vec(10),
                                         rng.normal_vec(10)};
  auto b = rng.normal_vec(10);
  auto f = FisherApprox::empirical(grads, 0.1);
  auto r1 = cg_solve(f, b);
  auto r2 = cg_solve(f, b);
  CHECK(r1.x == r2.x);
  CHECK(r1.iterations == r2.iterations);
}
