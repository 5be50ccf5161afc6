#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ndm/losses.hpp"
#include "ndm/rng.hpp"

namespace ndm {

struct Dataset {
  TaskKind kind = TaskKind::kClassification;
  std::size_t input_dim = 0;
  std::size_t out_dim = 0;
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;  // regression
  std::vector<std::size_t> labels;           // classification
};

// two_moons: two interleaved half-circles with Gaussian noise sigma=0.1,
// labels alternate so any n is balanced by construction.
// sinusoid: x uniform on [-pi, pi], y = sin x + Gaussian noise sigma=0.05.
// `noise` < 0 selects the per-task default sigma.
inline Dataset make_dataset(const std::string& task, std::size_t n, std::uint64_t seed,
                            double noise = -1.0) {
  if (n == 0) throw Error("make_dataset: n must be positive");
  Rng rng(seed);
  Dataset ds;
  if (task == "two_moons") {
    double sigma = noise < 0 ? 0.1 : noise;
    ds.kind = TaskKind::kClassification;
    ds.input_dim = 2;
    ds.out_dim = 2;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t label = i % 2;
      double t = rng.uniform(0.0, std::numbers::pi);
      double x, y;
      if (label == 0) {
        x = std::cos(t);
        y = std::sin(t);
      } else {
        x = 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
      }
      x += rng.normal(0.0, sigma);
      y += rng.normal(0.0, sigma);
      ds.inputs.push_back({x, y});
      ds.labels.push_back(label);
    }
  } else if (task == "sinusoid") {
    ds.kind = TaskKind::kRegression;
    ds.input_dim = 1;
    ds.out_dim = 1;
    double sigma = noise < 0 ? 0.05 : noise;
    for (std::size_t i = 0; i < n; ++i) {
      double x = rng.uniform(-std::numbers::pi, std::numbers::pi);
      double y = std::sin(x) + (sigma == 0 ? 0.0 : rng.normal(0.0, sigma));
      ds.inputs.push_back({x});
      ds.targets.push_back({y});
    }
  } else {
    throw Error("make_dataset: unknown task " + task);
  }
  return ds;
}

// Zero-pad inputs up to the model width d.
inline std::vector<std::vector<double>> embed_inputs(const Dataset& ds, std::size_t d) {
  if (ds.input_dim > d) throw Error("embed_inputs: model width below input dimension");
  std::vector<std::vector<double>> out;
  out.reserve(ds.inputs.size());
  for (const auto& x : ds.inputs) {
    std::vector<double> p(d, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) p[i] = x[i];
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ndm
