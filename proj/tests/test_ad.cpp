#include <catch_amalgamated.hpp>

#include "ndm/param_store.hpp"
#include "ndm/selfcheck.hpp"
#include "ndm/tape.hpp"

using namespace ndm;

TEST_CASE("primitive values") {
  Tape t;
  CHECK(t.tanh(t.constant(0.0)).scalar() == 0.0);

  Var m = t.constant(Array::matrix(2, 2, {1, 2, 3, 4}));
  Var r = t.matmul(m, t.constant(Array::identity(2)));
  CHECK(r.val().data == std::vector<double>{1, 2, 3, 4});

  // population convention: mean 2, squared deviations 1,1
  CHECK(t.variance(t.constant(Array::vec({1, 3}))).scalar() == 1.0);
}

TEST_CASE("shape mismatch is an error") {
  Tape t;
  Var a = t.constant(Array::vec({1, 2}));
  Var b = t.constant(Array::vec({1, 2, 3}));
  CHECK_THROWS_AS(t.add(a, b), Error);
  CHECK_THROWS_AS(t.matmul(t.reshape(a, {1, 2}), t.reshape(a, {1, 2})), Error);
}

TEST_CASE("non-finite results are errors") {
  Tape t;
  Var a = t.constant(Array::vec({800.0}));
  CHECK_THROWS_AS(t.exp(a), Error);
  CHECK_THROWS_AS(t.log(t.constant(Array::vec({0.0}))), Error);
  CHECK_THROWS_AS(t.leaf(Array::vec({std::numeric_limits<double>::quiet_NaN()})), Error);
}

TEST_CASE("backward of linear functional is ones") {
  Tape t;
  ParamStore ps;
  ps.add("theta", Array::vec({1.0, -2.0, 0.5}));
  Bindings b(t, ps);
  auto grads = b.gather(t.backward(t.sum(b["theta"])), ps);
  CHECK(grads["theta"].data == std::vector<double>{1, 1, 1});
}

TEST_CASE("backward of tanh at origin is one") {
  Tape t;
  ParamStore ps;
  ps.add("theta", Array::scalar(0.0));
  Bindings b(t, ps);
  auto grads = b.gather(t.backward(t.tanh(b["theta"])), ps);
  CHECK(grads["theta"].data[0] == 1.0);
}

TEST_CASE("backward requires a scalar root") {
  Tape t;
  Var a = t.constant(Array::vec({1, 2}));
  CHECK_THROWS_AS(t.backward(a), Error);
}

TEST_CASE("quadratic form gradient matches 2 M theta and finite differences") {
  Rng rng(42);
  Array m = Array::zeros({4, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double v = rng.normal();
      m.at(i, j) = v;
      m.at(j, i) = v;
    }
  ParamStore ps;
  ps.add("theta", Array::vec(rng.normal_vec(4)));

  auto f = [&m](const ParamStore& p) {
    Tape t;
    Bindings b(t, p);
    Var theta = t.reshape(b["theta"], {4, 1});
    return t.sum(t.matmul(t.transpose(theta), t.matmul(t.constant(m), theta))).scalar();
  };

  Tape t;
  Bindings b(t, ps);
  Var theta = t.reshape(b["theta"], {4, 1});
  Var root = t.sum(t.matmul(t.transpose(theta), t.matmul(t.constant(m), theta)));
  auto grads = b.gather(t.backward(root), ps);
  auto fd = finite_diff_grad(f, ps, 1e-5);

  for (std::size_t i = 0; i < 4; ++i) {
    double expected = 0;
    for (std::size_t j = 0; j < 4; ++j) expected += 2.0 * m.at(i, j) * ps["theta"].data[j];
    CHECK(grads["theta"].data[i] == Catch::Approx(expected).epsilon(1e-10));
    CHECK(rel_err(grads["theta"].data[i], fd["theta"].data[i]) < 1e-6);
  }
}

TEST_CASE("finite differences: quadratic and constant") {
  ParamStore ps;
  ps.add("theta", Array::scalar(3.0));
  auto sq = [](const ParamStore& p) {
    double v = p["theta"].data[0];
    return v * v;
  };
  auto fd = finite_diff_grad(sq, ps, 1e-5);
  CHECK(fd["theta"].data[0] == Catch::Approx(6.0).margin(1e-8));

  auto constant = [](const ParamStore&) { return 4.2; };
  CHECK(finite_diff_grad(constant, ps)["theta"].data[0] == 0.0);

  CHECK_THROWS_AS(finite_diff_grad(sq, ps, 0.0), Error);
}

TEST_CASE("unused parameters get exact zero gradients") {
  Tape t;
  ParamStore ps;
  ps.add("used", Array::vec({1.0, 2.0}));
  ps.add("unused", Array::vec({3.0, 4.0}));
  Bindings b(t, ps);
  auto grads = b.gather(t.backward(t.sum(t.square(b["used"]))), ps);
  CHECK(grads["unused"].data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward is deterministic") {
  ParamStore ps;
  Rng rng(9);
  ps.add("a", Array::vec(rng.normal_vec(6)));
  ps.add("b", Array::vec(rng.normal_vec(6)));
  auto run = [&ps]() {
    Tape t;
    Bindings b(t, ps);
    Var root = t.variance(t.tanh(b["a"] * b["b"]) + t.softplus(b["a"]));
    return b.gather(t.backward(root), ps).flatten();
  };
  CHECK(run() == run());
}

TEST_CASE("every primitive matches the finite-difference oracle") {
  // 100 seeded random inputs in dims <= 8
  CHECK(check_primitive_gradients(1000, 100) < 1e-5);
}

TEST_CASE("param store flatten/unflatten round-trips bit-exactly") {
  ParamStore ps;
  Rng rng(3);
  ps.add("a", Array::vec(rng.normal_vec(5)));
  ps.add("b", Array({2, 3}, rng.normal_vec(6)));
  auto flat = ps.flatten();
  ParamStore copy = ps;
  copy.unflatten(flat);
  CHECK(copy.flatten() == flat);
  CHECK_THROWS_AS(ps.add("a", Array::scalar(0)), Error);
}
