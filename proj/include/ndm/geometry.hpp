#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ndm/metric.hpp"

namespace ndm {

// Christoffel symbols of the second kind at x, as a flat d^3 vector
// indexed [k*d*d + i*d + j] = Gamma^k_ij. Metric derivatives by central
// differences with step h.
inline std::vector<double> christoffel(const MetricField& field,
                                       const std::vector<double>& x, double h = 1e-4) {
  std::size_t d = x.size();
  Array g = field(x).g;
  Array ginv = Tape::invert_dense(g);

  // dg[m](i,j) = d g_ij / d x_m
  std::vector<Array> dg;
  dg.reserve(d);
  for (std::size_t m = 0; m < d; ++m) {
    std::vector<double> xp = x, xm = x;
    xp[m] += h;
    xm[m] -= h;
    Array gp = field(xp).g;
    Array gm = field(xm).g;
    Array der = Array::zeros({d, d});
    for (std::size_t i = 0; i < d * d; ++i)
      der.data[i] = (gp.data[i] - gm.data[i]) / (2.0 * h);
    require_finite(der, "christoffel metric derivative");
    dg.push_back(std::move(der));
  }

  std::vector<double> gamma(d * d * d, 0.0);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0;
        for (std::size_t l = 0; l < d; ++l)
          s += ginv.at(k, l) * (dg[i].at(j, l) + dg[j].at(i, l) - dg[l].at(i, j));
        gamma[(k * d + i) * d + j] = 0.5 * s;
      }
  return gamma;
}

// Ricci scalar at x. Christoffel derivatives by central differences of
// christoffel() with the same step, so field values up to 2h away are used.
inline double ricci_scalar(const MetricField& field, const std::vector<double>& x,
                           double h = 1e-3) {
  std::size_t d = x.size();
  auto gamma = christoffel(field, x, h);
  auto at = [d](const std::vector<double>& G, std::size_t k, std::size_t i,
                std::size_t j) { return G[(k * d + i) * d + j]; };

  // dgamma[m] = d Gamma / d x_m
  std::vector<std::vector<double>> dgamma(d);
  for (std::size_t m = 0; m < d; ++m) {
    std::vector<double> xp = x, xm = x;
    xp[m] += h;
    xm[m] -= h;
    auto gp = christoffel(field, xp, h);
    auto gm = christoffel(field, xm, h);
    dgamma[m].resize(d * d * d);
    for (std::size_t i = 0; i < gp.size(); ++i)
      dgamma[m][i] = (gp[i] - gm[i]) / (2.0 * h);
  }

  // R_jk = d_i Gamma^i_jk - d_j Gamma^i_ik + Gamma^i_il Gamma^l_jk
  //        - Gamma^i_jl Gamma^l_ik
  Array ricci = Array::zeros({d, d});
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < d; ++k) {
      double s = 0;
      for (std::size_t i = 0; i < d; ++i) {
        s += at(dgamma[i], i, j, k) - at(dgamma[j], i, i, k);
        for (std::size_t l = 0; l < d; ++l)
          s += at(gamma, i, i, l) * at(gamma, l, j, k) -
               at(gamma, i, j, l) * at(gamma, l, i, k);
      }
      ricci.at(j, k) = s;
    }

  Array ginv = Tape::invert_dense(field(x).g);
  double r = 0;
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < d; ++k) r += ginv.at(j, k) * ricci.at(j, k);
  if (!std::isfinite(r)) throw Error("ricci_scalar: non-finite result");
  return r;
}

struct GeodesicSample {
  double t;
  std::vector<double> x;
  std::vector<double> v;
};

// Integrates the geodesic equation x''^k = -Gamma^k_ij x'^i x'^j with
// classical RK4, n uniform steps over [0, T]. Returns n+1 samples.
inline std::vector<GeodesicSample> geodesic_integrate(const MetricField& field,
                                                      std::vector<double> x0,
                                                      std::vector<double> v0, double T,
                                                      std::size_t n,
                                                      double christoffel_h = 1e-4) {
  std::size_t d = x0.size();
  if (v0.size() != d) throw Error("geodesic_integrate: dimension mismatch");
  double dt = T / static_cast<double>(n);

  auto accel = [&](const std::vector<double>& x, const std::vector<double>& v) {
    auto gamma = christoffel(field, x, christoffel_h);
    std::vector<double> a(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      double s = 0;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) s -= gamma[(k * d + i) * d + j] * v[i] * v[j];
      a[k] = s;
    }
    return a;
  };

  std::vector<GeodesicSample> out;
  out.reserve(n + 1);
  std::vector<double> x = std::move(x0), v = std::move(v0);
  out.push_back({0.0, x, v});
  for (std::size_t step = 0; step < n; ++step) {
    auto k1x = v;
    auto k1v = accel(x, v);
    std::vector<double> x2(d), v2(d);
    for (std::size_t i = 0; i < d; ++i) {
      x2[i] = x[i] + 0.5 * dt * k1x[i];
      v2[i] = v[i] + 0.5 * dt * k1v[i];
    }
    auto k2x = v2;
    auto k2v = accel(x2, v2);
    std::vector<double> x3(d), v3(d);
    for (std::size_t i = 0; i < d; ++i) {
      x3[i] = x[i] + 0.5 * dt * k2x[i];
      v3[i] = v[i] + 0.5 * dt * k2v[i];
    }
    auto k3x = v3;
    auto k3v = accel(x3, v3);
    std::vector<double> x4(d), v4(d);
    for (std::size_t i = 0; i < d; ++i) {
      x4[i] = x[i] + dt * k3x[i];
      v4[i] = v[i] + dt * k3v[i];
    }
    auto k4x = v4;
    auto k4v = accel(x4, v4);
    for (std::size_t i = 0; i < d; ++i) {
      x[i] += dt / 6.0 * (k1x[i] + 2 * k2x[i] + 2 * k3x[i] + k4x[i]);
      v[i] += dt / 6.0 * (k1v[i] + 2 * k2v[i] + 2 * k3v[i] + k4v[i]);
      if (!std::isfinite(x[i]) || !std::isfinite(v[i]))
        throw Error("geodesic_integrate: non-finite state at t=" +
                    std::to_string(dt * static_cast<double>(step + 1)));
    }
    out.push_back({dt * static_cast<double>(step + 1), x, v});
  }
  return out;
}

// Closed-form test fields, registered by name for the CLI and oracle suite.
// All are 2-dimensional charts.
inline MetricField make_test_field(const std::string& name) {
  if (name == "euclidean")
    return [](const std::vector<double>&) { return MetricTensor(Array::identity(2)); };
  if (name == "polar")  // flat plane in polar coordinates (r, theta)
    return [](const std::vector<double>& x) {
      return MetricTensor(Array::matrix(2, 2, {1, 0, 0, x[0] * x[0]}));
    };
  if (name == "sphere")  // unit 2-sphere chart (theta, phi)
    return [](const std::vector<double>& x) {
      double s = std::sin(x[0]);
      return MetricTensor(Array::matrix(2, 2, {1, 0, 0, s * s}));
    };
  if (name == "poincare")  // hyperbolic half-plane (x, y), y > 0
    return [](const std::vector<double>& x) {
      double iy2 = 1.0 / (x[1] * x[1]);
      return MetricTensor(Array::matrix(2, 2, {iy2, 0, 0, iy2}));
    };
  throw Error("unknown test field: " + name);
}

inline const std::vector<std::string>& test_field_names() {
  static const std::vector<std::string> names{"euclidean", "polar", "sphere", "poincare"};
  return names;
}

}  // namespace ndm
