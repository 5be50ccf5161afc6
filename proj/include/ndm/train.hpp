#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndm/dataset.hpp"
#include "ndm/geometry.hpp"
#include "ndm/model.hpp"
#include "ndm/optimizer.hpp"

namespace ndm {

struct TrainConfig {
  std::size_t d = 2;
  std::size_t n_layers = 4;
  std::string task = "two_moons";
  double lambda = 0.1;
  double w_curv = 1.0;
  double w_vol = 1.0;
  double eps = 1e-3;
  std::string optimizer = "sgd";  // "sgd" | "natural"
  double lr = 0.05;
  double damping = 1e-3;
  std::size_t cg_max_iters = 50;
  double cg_tol = 1e-8;
  std::size_t batch_size = 64;
  std::size_t steps = 2000;
  std::uint64_t seed = 7;
  std::size_t geom_subsample = 16;
  double curvature_h = 1e-3;
  std::size_t hidden = 16;
  std::size_t train_points = 256;
  std::size_t geometry_every = 1;
  std::string out_dir = "out";

  void validate() const {
    if (d < 2) throw Error("config: d must be at least 2");
    if (n_layers == 0) throw Error("config: n_layers must be positive");
    if (task != "two_moons" && task != "sinusoid") throw Error("config: unknown task");
    if (lambda < 0 || w_curv < 0 || w_vol < 0) throw Error("config: negative weight");
    if (eps <= 0) throw Error("config: eps must be positive");
    if (optimizer != "sgd" && optimizer != "natural")
      throw Error("config: unknown optimizer");
    if (!(lr > 0)) throw Error("config: lr must be positive");
    if (!(damping > 0)) throw Error("config: damping must be positive");
    if (batch_size == 0) throw Error("config: batch_size must be positive");
    if (curvature_h <= 0) throw Error("config: curvature_h must be positive");
    if (geometry_every == 0) throw Error("config: geometry_every must be positive");
    if (train_points == 0) throw Error("config: train_points must be positive");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"d", c.d},
                     {"n_layers", c.n_layers},
                     {"task", c.task},
                     {"lambda", c.lambda},
                     {"w_curv", c.w_curv},
                     {"w_vol", c.w_vol},
                     {"eps", c.eps},
                     {"optimizer", c.optimizer},
                     {"lr", c.lr},
                     {"damping", c.damping},
                     {"cg_max_iters", c.cg_max_iters},
                     {"cg_tol", c.cg_tol},
                     {"batch_size", c.batch_size},
                     {"steps", c.steps},
                     {"seed", c.seed},
                     {"geom_subsample", c.geom_subsample},
                     {"curvature_h", c.curvature_h},
                     {"hidden", c.hidden},
                     {"train_points", c.train_points},
                     {"geometry_every", c.geometry_every},
                     {"out_dir", c.out_dir}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig defaults;
  c = defaults;
  auto get = [&j](const char* key, auto& dst) {
    if (j.contains(key)) j.at(key).get_to(dst);
  };
  get("d", c.d);
  get("n_layers", c.n_layers);
  get("task", c.task);
  get("lambda", c.lambda);
  get("w_curv", c.w_curv);
  get("w_vol", c.w_vol);
  get("eps", c.eps);
  get("optimizer", c.optimizer);
  get("lr", c.lr);
  get("damping", c.damping);
  get("cg_max_iters", c.cg_max_iters);
  get("cg_tol", c.cg_tol);
  get("batch_size", c.batch_size);
  get("steps", c.steps);
  get("seed", c.seed);
  get("geom_subsample", c.geom_subsample);
  get("curvature_h", c.curvature_h);
  get("hidden", c.hidden);
  get("train_points", c.train_points);
  get("geometry_every", c.geometry_every);
  get("out_dir", c.out_dir);
}

// Shortest round-trip formatting so repeated runs are byte-identical.
inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

struct LayerGeometryStats {
  double r_mean = 0, r_min = 0, r_max = 0;
  double vol_mean = 0, vol_variance = 0;
  std::size_t samples = 0;
};

struct GeometryReport {
  std::vector<LayerGeometryStats> layers;
};

inline void to_json(nlohmann::json& j, const GeometryReport& rep) {
  j = nlohmann::json::array();
  for (std::size_t i = 0; i < rep.layers.size(); ++i) {
    const auto& s = rep.layers[i];
    j.push_back({{"layer", i},
                 {"r_mean", s.r_mean},
                 {"r_min", s.r_min},
                 {"r_max", s.r_max},
                 {"vol_mean", s.vol_mean},
                 {"vol_variance", s.vol_variance},
                 {"samples", s.samples}});
  }
}

// Per-layer statistics of R and sqrt(det g), both over the same points:
// each layer's incoming coordinates for the given inputs.
inline GeometryReport geometry_report(const NDMModel& model, const ParamStore& params,
                                      const std::vector<std::vector<double>>& inputs,
                                      double curvature_h) {
  GeometryReport rep;
  rep.layers.resize(model.layers.size());
  std::vector<std::vector<std::vector<double>>> charts_per_sample;
  for (const auto& x : inputs) {
    std::vector<std::vector<double>> charts;
    model.forward_value(params, x, &charts);
    charts_per_sample.push_back(std::move(charts));
  }
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    MetricField field = model.layers[li].metric_net.field(params);
    std::vector<double> rs, vols;
    for (const auto& charts : charts_per_sample) {
      const auto& p = charts[li];
      rs.push_back(ricci_scalar(field, p, curvature_h));
      vols.push_back(volume_element(field(p)));
    }
    LayerGeometryStats& s = rep.layers[li];
    s.samples = rs.size();
    s.r_min = *std::min_element(rs.begin(), rs.end());
    s.r_max = *std::max_element(rs.begin(), rs.end());
    for (double r : rs) s.r_mean += r;
    s.r_mean /= static_cast<double>(rs.size());
    for (double v : vols) s.vol_mean += v;
    s.vol_mean /= static_cast<double>(vols.size());
    for (double v : vols) s.vol_variance += (v - s.vol_mean) * (v - s.vol_mean);
    s.vol_variance /= static_cast<double>(vols.size());
  }
  return rep;
}

inline void save_checkpoint(const std::string& path, const TrainConfig& config,
                            const ParamStore& params) {
  nlohmann::json j;
  j["config"] = config;
  nlohmann::json p = nlohmann::json::object();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.names()[i];
    const Array& a = params.value_at(i);
    p[name] = {{"shape", a.shape}, {"data", a.data}};
  }
  j["params"] = p;
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint: " + path);
  out << j.dump(2) << "\n";
}

struct Checkpoint {
  TrainConfig config;
  NDMModel model;
  ParamStore params;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  Checkpoint ck;
  ck.config = j.at("config").get<TrainConfig>();
  std::size_t out_dim = ck.config.task == "two_moons" ? 2 : 1;
  ck.model = NDMModel::make(ck.config.d, ck.config.n_layers, out_dim, ck.config.eps,
                            ck.config.hidden);
  // Rebuild the store in the model's canonical order, then overwrite values.
  Rng scratch(0);
  ck.params = ck.model.init_params(scratch);
  const auto& p = j.at("params");
  for (const std::string& name : ck.params.names()) {
    if (!p.contains(name)) throw Error("checkpoint missing parameter: " + name);
    auto shape = p.at(name).at("shape").get<std::vector<std::size_t>>();
    auto data = p.at(name).at("data").get<std::vector<double>>();
    if (shape != ck.params[name].shape) throw Error("checkpoint shape mismatch: " + name);
    ck.params[name] = Array(shape, data);
  }
  return ck;
}

struct TrainResult {
  NDMModel model;
  ParamStore params;
  double final_accuracy = -1;  // full training set; -1 for regression
  double l_geo_step0 = 0;
  double l_geo_final = 0;
  std::string metrics_path;
  std::string checkpoint_path;
};

inline double classification_accuracy(const NDMModel& model, const ParamStore& params,
                                      const std::vector<std::vector<double>>& inputs,
                                      const std::vector<std::size_t>& labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto out = model.forward_value(params, inputs[i]);
    std::size_t argmax = 0;
    for (std::size_t j = 1; j < out.size(); ++j)
      if (out[j] > out[argmax]) argmax = j;
    if (argmax == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

// The training loop: forward with geometry, loss breakdown, backward,
// optimizer step; one metrics row per step; checkpoint and geometry report
// at the end. Aborts on the first non-finite loss component.
inline TrainResult train(const TrainConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);

  Dataset ds = make_dataset(config.task, config.train_points, config.seed);
  auto inputs = embed_inputs(ds, config.d);

  NDMModel model = NDMModel::make(config.d, config.n_layers, ds.out_dim, config.eps,
                                  config.hidden);
  Rng rng(config.seed);
  ParamStore params = model.init_params(rng);

  std::string metrics_path = config.out_dir + "/metrics.csv";
  std::ofstream csv(metrics_path);
  if (!csv) throw Error("cannot write metrics: " + metrics_path);
  csv << "step,l_task,l_curv,l_vol,l_geo,l_total,accuracy,grad_norm,"
         "metricnet_grad_norm\n";

  UpdateRule rule = config.optimizer == "sgd"
                        ? UpdateRule::sgd(config.lr)
                        : UpdateRule::natural(config.lr, config.cg_max_iters,
                                              config.cg_tol);

  TrainResult result;
  result.model = model;

  for (std::size_t step_i = 0; step_i < config.steps; ++step_i) {
    // minibatch draw
    std::vector<std::vector<double>> bx;
    std::vector<std::vector<double>> bt;
    std::vector<std::size_t> bl;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      std::size_t idx = rng.below(inputs.size());
      bx.push_back(inputs[idx]);
      if (ds.kind == TaskKind::kRegression) bt.push_back(ds.targets[idx]);
      else bl.push_back(ds.labels[idx]);
    }

    Tape tape;
    Bindings bind(tape, params);
    bool geometry_step = config.lambda > 0 && step_i % config.geometry_every == 0;
    NdmLossVars loss;
    try {
      double lambda_eff = geometry_step ? config.lambda : 0.0;
      loss = ndm_loss(tape, bind, model, bx, bt, bl, ds.kind, lambda_eff,
                      config.w_curv, config.w_vol, config.geom_subsample,
                      config.curvature_h);
    } catch (const Error& e) {
      throw Error("train: aborted at step " + std::to_string(step_i) + ": " + e.what());
    }
    const std::pair<const char*, double> components[] = {
        {"l_task", loss.breakdown.l_task},
        {"l_curv", loss.breakdown.l_curv},
        {"l_vol", loss.breakdown.l_vol},
        {"l_total", loss.breakdown.l_total}};
    for (const auto& [name, value] : components)
      if (!std::isfinite(value))
        throw Error("train: non-finite " + std::string(name) + " at step " +
                    std::to_string(step_i));

    auto grads_all = tape.backward(loss.l_total);
    ParamStore grads = bind.gather(grads_all, params);

    double grad_norm = 0, metric_grad_norm = 0;
    for (std::size_t i = 0; i < grads.size(); ++i) {
      bool is_metric = grads.names()[i].find(".metric") != std::string::npos;
      for (double v : grads.value_at(i).data) {
        grad_norm += v * v;
        if (is_metric) metric_grad_norm += v * v;
      }
    }
    grad_norm = std::sqrt(grad_norm);
    metric_grad_norm = std::sqrt(metric_grad_norm);

    double accuracy = -1;
    if (ds.kind == TaskKind::kClassification)
      accuracy = classification_accuracy(model, params, inputs, ds.labels);

    csv << step_i << ',' << fmt_double(loss.breakdown.l_task) << ','
        << fmt_double(loss.breakdown.l_curv) << ',' << fmt_double(loss.breakdown.l_vol)
        << ',' << fmt_double(loss.breakdown.l_geo) << ','
        << fmt_double(loss.breakdown.l_total) << ','
        << (accuracy < 0 ? std::string() : fmt_double(accuracy)) << ','
        << fmt_double(grad_norm) << ',' << fmt_double(metric_grad_norm) << '\n';

    if (step_i == 0) result.l_geo_step0 = loss.breakdown.l_geo;
    result.l_geo_final = loss.breakdown.l_geo;

    std::vector<double> flat = params.flatten();
    std::vector<double> flat_grad = grads.flatten();
    if (rule.kind == UpdateRule::Kind::kNatural) {
      // Per-sample task-loss gradients for the empirical Fisher: one
      // backward pass per sample on the same tape.
      std::vector<std::vector<double>> sample_grads;
      for (std::size_t b = 0; b < bx.size(); ++b) {
        Tape sample_tape;
        Bindings sample_bind(sample_tape, params);
        auto fwd = ndm_forward(sample_tape, sample_bind, model, {bx[b]}, false);
        Var l = ds.kind == TaskKind::kClassification
                    ? cross_entropy_with_logits(sample_tape, fwd.outputs[0], bl[b])
                    : squared_error(sample_tape, fwd.outputs[0], bt[b]);
        auto g = sample_bind.gather(sample_tape.backward(l), params);
        sample_grads.push_back(g.flatten());
      }
      FisherApprox fisher = FisherApprox::empirical(std::move(sample_grads),
                                                    config.damping);
      flat = step(rule, flat, flat_grad, &fisher);
    } else {
      flat = step(rule, flat, flat_grad);
    }
    params.unflatten(flat);
  }
  csv.close();

  if (ds.kind == TaskKind::kClassification)
    result.final_accuracy = classification_accuracy(model, params, inputs, ds.labels);

  result.params = params;
  result.metrics_path = metrics_path;
  result.checkpoint_path = config.out_dir + "/checkpoint.json";
  save_checkpoint(result.checkpoint_path, config, params);

  // final geometry report over (at most) the subsample budget of points
  std::size_t n_rep = std::min<std::size_t>(inputs.size(), 64);
  std::vector<std::vector<double>> rep_inputs(inputs.begin(),
                                              inputs.begin() + static_cast<std::ptrdiff_t>(n_rep));
  GeometryReport rep = geometry_report(model, params, rep_inputs, config.curvature_h);
  nlohmann::json jrep;
  jrep["layers"] = rep;
  jrep["final_accuracy"] = result.final_accuracy;
  jrep["l_geo_step0"] = result.l_geo_step0;
  jrep["l_geo_final"] = result.l_geo_final;
  std::ofstream rep_out(config.out_dir + "/geometry.json");
  rep_out << jrep.dump(2) << "\n";

  return result;
}

}  // namespace ndm
