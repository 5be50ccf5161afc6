#pragma once

#include <string>
#include <vector>

#include "ndm/mlp.hpp"
#include "ndm/param_store.hpp"
#include "ndm/tape.hpp"

namespace ndm {

// Scale logits are clamped to this range before exponentiation, capping
// the Jacobian's condition number.
inline constexpr double kScaleClamp = 5.0;

// Affine coupling transform. The passive half of the coordinates is copied
// through; the active half is rescaled and shifted by nets of the passive
// half:  z_a = x_a * exp(s(x_p)) + t(x_p).  Closed-form inverse and
// log-determinant. Alternating layers swap which half is passive; for odd
// d the passive half gets the extra coordinate.
struct CouplingLayer {
  std::size_t dim = 0;
  bool swap = false;  // false: first ceil(d/2) coords passive; true: last
  std::string prefix;
  MlpSpec net_spec;   // shared spec for scale and shift nets

  static CouplingLayer make(std::size_t d, bool swap, const std::string& prefix,
                            std::size_t hidden = 16) {
    if (d < 2) throw Error("CouplingLayer: dimension must be at least 2");
    CouplingLayer l;
    l.dim = d;
    l.swap = swap;
    l.prefix = prefix;
    l.net_spec.in = l.passive_count();
    l.net_spec.out = d - l.passive_count();
    l.net_spec.hidden = hidden;
    return l;
  }

  std::size_t passive_count() const { return (dim + 1) / 2; }
  std::size_t active_count() const { return dim - passive_count(); }
  // active coords occupy [active_start, active_start + active_count)
  std::size_t active_start() const { return swap ? 0 : passive_count(); }
  std::size_t passive_start() const { return swap ? active_count() : 0; }

  // Zero-initialized output layers make the layer the identity map at start.
  void init(ParamStore& params, Rng& rng) const {
    mlp_init(params, prefix + ".scale", net_spec, rng);
    mlp_init(params, prefix + ".shift", net_spec, rng);
  }

  struct Forward {
    Var z;
    Var logdet;
  };

  Forward forward(Tape& tape, const Bindings& bind, Var x) const {
    Var xp = tape.slice(x, passive_start(), passive_count());
    Var xa = tape.slice(x, active_start(), active_count());
    Var s = tape.clamp(mlp_forward(tape, bind, prefix + ".scale", net_spec, xp),
                       -kScaleClamp, kScaleClamp);
    Var t = mlp_forward(tape, bind, prefix + ".shift", net_spec, xp);
    Var za = xa * tape.exp(s) + t;
    Var z = swap ? tape.concat(za, xp) : tape.concat(xp, za);
    return {z, tape.sum(s)};
  }

  std::vector<double> forward_value(const ParamStore& params, const std::vector<double>& x,
                                    double* logdet = nullptr) const {
    auto xp = passive_of(x);
    auto s = scale_logits(params, xp);
    auto t = mlp_eval(params, prefix + ".shift", net_spec, xp);
    std::vector<double> z = x;
    double ld = 0;
    for (std::size_t i = 0; i < active_count(); ++i) {
      z[active_start() + i] = x[active_start() + i] * std::exp(s[i]) + t[i];
      ld += s[i];
    }
    if (logdet) *logdet = ld;
    return z;
  }

  // Exact algebraic inverse: x_a = (z_a - t(z_p)) * exp(-s(z_p)).
  std::vector<double> inverse(const ParamStore& params, const std::vector<double>& z) const {
    auto zp = passive_of(z);
    auto s = scale_logits(params, zp);
    auto t = mlp_eval(params, prefix + ".shift", net_spec, zp);
    std::vector<double> x = z;
    for (std::size_t i = 0; i < active_count(); ++i) {
      double v = (z[active_start() + i] - t[i]) * std::exp(-s[i]);
      if (!std::isfinite(v)) throw Error("coupling_inverse: non-finite intermediate");
      x[active_start() + i] = v;
    }
    return x;
  }

 private:
  std::vector<double> passive_of(const std::vector<double>& x) const {
    return {x.begin() + static_cast<std::ptrdiff_t>(passive_start()),
            x.begin() + static_cast<std::ptrdiff_t>(passive_start() + passive_count())};
  }
  std::vector<double> scale_logits(const ParamStore& params,
                                   const std::vector<double>& xp) const {
    auto s = mlp_eval(params, prefix + ".scale", net_spec, xp);
    for (double& v : s) {
      if (!std::isfinite(v)) throw Error("coupling: non-finite scale logit");
      v = std::clamp(v, -kScaleClamp, kScaleClamp);
    }
    return s;
  }
};

// Ordered stack of coupling layers with alternating masks.
struct CoordinateStack {
  std::vector<CouplingLayer> layers;

  static CoordinateStack make(std::size_t d, std::size_t n_layers,
                              const std::string& prefix = "layer",
                              std::size_t hidden = 16) {
    CoordinateStack s;
    for (std::size_t i = 0; i < n_layers; ++i)
      s.layers.push_back(CouplingLayer::make(d, i % 2 == 1,
                                             prefix + std::to_string(i) + ".coupling",
                                             hidden));
    return s;
  }

  void init(ParamStore& params, Rng& rng) const {
    for (const auto& l : layers) l.init(params, rng);
  }

  struct Forward {
    Var y;
    std::vector<Var> chart_coords;  // input coordinates of each layer, plus output
    Var total_logdet;
  };

  Forward forward(Tape& tape, const Bindings& bind, Var x) const {
    Forward out;
    out.total_logdet = tape.constant(0.0);
    Var cur = x;
    for (const auto& l : layers) {
      out.chart_coords.push_back(cur);
      auto f = l.forward(tape, bind, cur);
      cur = f.z;
      out.total_logdet = out.total_logdet + f.logdet;
    }
    out.chart_coords.push_back(cur);
    out.y = cur;
    return out;
  }

  std::vector<double> forward_value(const ParamStore& params, const std::vector<double>& x,
                                    double* total_logdet = nullptr,
                                    std::vector<std::vector<double>>* charts = nullptr) const {
    std::vector<double> cur = x;
    double ld = 0;
    if (charts) charts->push_back(cur);
    for (const auto& l : layers) {
      double layer_ld = 0;
      cur = l.forward_value(params, cur, &layer_ld);
      ld += layer_ld;
      if (charts) charts->push_back(cur);
    }
    if (total_logdet) *total_logdet = ld;
    return cur;
  }

  std::vector<double> inverse(const ParamStore& params, const std::vector<double>& y) const {
    std::vector<double> cur = y;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      cur = it->inverse(params, cur);
    return cur;
  }
};

}  // namespace ndm
