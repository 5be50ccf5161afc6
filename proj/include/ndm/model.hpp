#pragma once

#include <string>
#include <vector>

#include "ndm/coupling.hpp"
#include "ndm/curvature_ad.hpp"
#include "ndm/losses.hpp"
#include "ndm/metric.hpp"

namespace ndm {

// One chart transition: an invertible coupling map (primary path) and a
// metric net (secondary path). Both consume the layer's incoming
// coordinates; the metric path never feeds the coordinate path.
struct ManifoldLayer {
  CouplingLayer coupling;
  MetricNet metric_net;
};

struct NDMModel {
  std::size_t dim = 0;
  std::size_t out_dim = 0;
  std::vector<ManifoldLayer> layers;

  // Couplings start as the identity map. Metric nets start near-flat but
  // not exactly flat: a degenerate-flat metric has identically zero
  // curvature and volume terms, so the geometric shaping force would carry
  // no gradient at all.
  static constexpr double kMetricInitScale = 0.1;

  static NDMModel make(std::size_t d, std::size_t n_layers, std::size_t out_dim,
                       double eps, std::size_t hidden = 16,
                       double metric_init_scale = kMetricInitScale) {
    NDMModel m;
    m.dim = d;
    m.out_dim = out_dim;
    for (std::size_t i = 0; i < n_layers; ++i) {
      std::string prefix = "layer" + std::to_string(i);
      MetricNet net = MetricNet::make(d, eps, prefix + ".metric", hidden);
      net.init_output_scale = metric_init_scale;
      m.layers.push_back(
          {CouplingLayer::make(d, i % 2 == 1, prefix + ".coupling", hidden),
           std::move(net)});
    }
    return m;
  }

  // Couplings and metric nets start as identity / flat; head starts zero.
  ParamStore init_params(Rng& rng) const {
    ParamStore params;
    for (const auto& l : layers) {
      l.coupling.init(params, rng);
      l.metric_net.init(params, rng);
    }
    params.add("head.W", Array::zeros({dim, out_dim}));
    params.add("head.b", Array::zeros({1, out_dim}));
    return params;
  }

  Var head_forward(Tape& tape, const Bindings& bind, Var y) const {
    Var row = tape.reshape(y, {1, dim});
    Var out = tape.matmul(row, bind["head.W"]) + bind["head.b"];
    return tape.reshape(out, {out_dim});
  }

  std::vector<double> head_value(const ParamStore& params,
                                 const std::vector<double>& y) const {
    const Array& w = params["head.W"];
    const Array& b = params["head.b"];
    std::vector<double> out(out_dim);
    for (std::size_t j = 0; j < out_dim; ++j) {
      double s = b.data[j];
      for (std::size_t i = 0; i < dim; ++i) s += y[i] * w.at(i, j);
      out[j] = s;
    }
    return out;
  }

  // Coordinate path only, plain doubles (no tape).
  std::vector<double> forward_value(const ParamStore& params, const std::vector<double>& x,
                                    std::vector<std::vector<double>>* charts = nullptr) const {
    std::vector<double> cur = x;
    if (charts) charts->push_back(cur);
    for (const auto& l : layers) {
      cur = l.coupling.forward_value(params, cur);
      if (charts) charts->push_back(cur);
    }
    return head_value(params, cur);
  }
};

struct NdmForwardResult {
  std::vector<Var> outputs;                 // per sample, 1-D of out_dim
  std::vector<std::vector<Var>> charts;     // [sample][0..n_layers] coordinates
  std::vector<Var> total_logdets;           // per sample
  // Geometry, evaluated at each layer's incoming coordinates on the first
  // `geom_subsample` samples of the batch (the batch itself is a random
  // draw, so this is an unbiased subsample).
  std::vector<std::vector<Var>> ricci;      // [layer][subsample point]
  std::vector<std::vector<Var>> volumes;    // [layer][subsample point]
};

// Dual-path forward over a batch. The coordinate path is threaded through
// all couplings; if requested, curvature and volume are evaluated from the
// metric nets through the differentiable stencil.
inline NdmForwardResult ndm_forward(Tape& tape, const Bindings& bind, const NDMModel& model,
                                    const std::vector<std::vector<double>>& batch,
                                    bool want_geometry, std::size_t geom_subsample = 16,
                                    double curvature_h = 1e-3) {
  if (batch.empty()) throw Error("ndm_forward: empty batch");
  NdmForwardResult res;
  for (const auto& xv : batch) {
    if (xv.size() != model.dim) throw Error("ndm_forward: width mismatch");
    Var x = tape.constant(Array::vec(xv));
    std::vector<Var> charts{x};
    Var logdet = tape.constant(0.0);
    Var cur = x;
    for (const auto& l : model.layers) {
      auto f = l.coupling.forward(tape, bind, cur);
      cur = f.z;
      logdet = logdet + f.logdet;
      charts.push_back(cur);
    }
    res.outputs.push_back(model.head_forward(tape, bind, cur));
    res.total_logdets.push_back(logdet);
    res.charts.push_back(std::move(charts));
  }

  if (want_geometry) {
    std::size_t k = std::min(batch.size(), geom_subsample == 0 ? batch.size() : geom_subsample);
    res.ricci.resize(model.layers.size());
    res.volumes.resize(model.layers.size());
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
      const MetricNet& net = model.layers[li].metric_net;
      MetricEvalVar eval = [&net, &bind](Tape& t, Var p) {
        return net.metric_at_var(t, bind, p);
      };
      for (std::size_t b = 0; b < k; ++b) {
        Var point = res.charts[b][li];
        res.ricci[li].push_back(ricci_scalar_var(tape, eval, point, curvature_h));
        res.volumes[li].push_back(
            volume_element_var(tape, net.metric_at_var(tape, bind, point)));
      }
    }
  }
  return res;
}

struct NdmLossVars {
  Var l_task, l_curv, l_vol, l_total;
  LossBreakdown breakdown;
};

// Full objective for a batch. Geometry terms are computed whenever
// lambda > 0 (or when forced, e.g. for gradient checks); otherwise they
// are constant zero and no metric-net evaluation happens at all.
inline NdmLossVars ndm_loss(Tape& tape, const Bindings& bind, const NDMModel& model,
                            const std::vector<std::vector<double>>& inputs,
                            const std::vector<std::vector<double>>& targets,
                            const std::vector<std::size_t>& labels, TaskKind kind,
                            double lambda, double w_curv, double w_vol,
                            std::size_t geom_subsample, double curvature_h,
                            bool force_geometry = false,
                            NdmForwardResult* forward_out = nullptr) {
  bool want_geometry = lambda > 0 || force_geometry;
  auto fwd = ndm_forward(tape, bind, model, inputs, want_geometry, geom_subsample,
                         curvature_h);
  NdmLossVars out;
  out.l_task = task_loss(tape, fwd.outputs, targets, labels, kind);
  if (want_geometry) {
    std::vector<Var> all_ricci;
    for (const auto& layer_r : fwd.ricci)
      all_ricci.insert(all_ricci.end(), layer_r.begin(), layer_r.end());
    out.l_curv = curvature_loss(tape, all_ricci);
    out.l_vol = volume_loss(tape, fwd.volumes);
  } else {
    out.l_curv = tape.constant(0.0);
    out.l_vol = tape.constant(0.0);
  }
  out.l_total = total_loss(tape, out.l_task, out.l_curv, out.l_vol, lambda, w_curv,
                           w_vol, &out.breakdown);
  if (forward_out) *forward_out = std::move(fwd);
  return out;
}

}  // namespace ndm
