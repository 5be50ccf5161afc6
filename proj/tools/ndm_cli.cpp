// Command-line entry point: training runs, geometry reports, geodesic
// integration under a learned metric, and the self-check suites.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ndm/selfcheck.hpp"
#include "ndm/train.hpp"

namespace {

int cmd_train(const std::string& config_path, std::int64_t seed_override,
              const std::string& out_override) {
  ndm::TrainConfig config;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "cannot open config: " << config_path << "\n";
      return 2;
    }
    nlohmann::json j;
    in >> j;
    config = j.get<ndm::TrainConfig>();
  }
  if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) config.out_dir = out_override;

  ndm::TrainResult result = ndm::train(config);
  std::cout << "metrics: " << result.metrics_path << "\n"
            << "checkpoint: " << result.checkpoint_path << "\n";
  if (result.final_accuracy >= 0)
    std::cout << "final train accuracy: " << result.final_accuracy << "\n";
  std::cout << "l_geo step 0: " << result.l_geo_step0
            << "  final: " << result.l_geo_final << "\n";
  if (config.lambda > 0 && result.l_geo_final > result.l_geo_step0)
    std::cout << "note: final l_geo exceeds its step-0 value; the geometric "
                 "regularizer did not reduce complexity on this run\n";
  return 0;
}

int cmd_geometry(const std::string& checkpoint_path, const std::string& task,
                 std::size_t n, const std::string& out_path) {
  ndm::Checkpoint ck = ndm::load_checkpoint(checkpoint_path);
  ndm::Dataset ds = ndm::make_dataset(task, n, ck.config.seed);
  auto inputs = ndm::embed_inputs(ds, ck.config.d);
  ndm::GeometryReport rep =
      ndm::geometry_report(ck.model, ck.params, inputs, ck.config.curvature_h);
  nlohmann::json j;
  j["checkpoint"] = checkpoint_path;
  j["task"] = task;
  j["n"] = n;
  j["layers"] = rep;
  std::ofstream out(out_path);
  if (!out) {
    std::cerr << "cannot write " << out_path << "\n";
    return 2;
  }
  out << j.dump(2) << "\n";
  std::cout << "geometry report: " << out_path << "\n";
  return 0;
}

int cmd_geodesic(const std::string& checkpoint_path, std::size_t layer,
                 std::vector<double> x0, std::vector<double> v0, double T,
                 std::size_t steps, const std::string& out_path) {
  ndm::Checkpoint ck = ndm::load_checkpoint(checkpoint_path);
  if (layer >= ck.model.layers.size()) {
    std::cerr << "layer index " << layer << " out of range (model has "
              << ck.model.layers.size() << " layers)\n";
    return 2;
  }
  if (x0.size() != ck.config.d || v0.size() != ck.config.d) {
    std::cerr << "x0/v0 must have " << ck.config.d << " coordinates\n";
    return 2;
  }
  ndm::MetricField field = ck.model.layers[layer].metric_net.field(ck.params);
  auto traj = ndm::geodesic_integrate(field, x0, v0, T, steps);

  std::ofstream out(out_path);
  if (!out) {
    std::cerr << "cannot write " << out_path << "\n";
    return 2;
  }
  out << "t";
  for (std::size_t i = 0; i < x0.size(); ++i) out << ",x" << i;
  out << ",speed\n";
  for (const auto& s : traj) {
    out << ndm::fmt_double(s.t);
    for (double xi : s.x) out << ',' << ndm::fmt_double(xi);
    double sp = std::sqrt(ndm::inner_product(field(s.x), s.v, s.v));
    out << ',' << ndm::fmt_double(sp) << '\n';
  }
  std::cout << "trajectory: " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural differential manifold trainer and geometry toolkit"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Run the training loop");
  std::string config_path, out_override;
  std::int64_t seed_override = -1;
  train_cmd->add_option("--config", config_path, "JSON config file");
  train_cmd->add_option("--seed", seed_override, "Override config seed");
  train_cmd->add_option("--out", out_override, "Override output directory");

  // geometry
  auto* geom_cmd = app.add_subcommand("geometry", "Per-layer curvature/volume report");
  std::string geom_ck, geom_task = "two_moons", geom_out = "geometry_report.json";
  std::size_t geom_n = 64;
  geom_cmd->add_option("--checkpoint", geom_ck, "Checkpoint JSON")->required();
  geom_cmd->add_option("--task", geom_task, "Dataset used for evaluation points");
  geom_cmd->add_option("--n", geom_n, "Number of evaluation points");
  geom_cmd->add_option("--out", geom_out, "Output JSON path");

  // geodesic
  auto* geo_cmd = app.add_subcommand("geodesic", "Integrate a geodesic of a learned metric");
  std::string geo_ck, geo_out = "trajectory.csv";
  std::size_t geo_layer = 0, geo_steps = 1000;
  double geo_T = 1.0;
  std::vector<double> geo_x0, geo_v0;
  geo_cmd->add_option("--checkpoint", geo_ck, "Checkpoint JSON")->required();
  geo_cmd->add_option("--layer", geo_layer, "Layer index")->required();
  geo_cmd->add_option("--x0", geo_x0, "Start point")->required()->expected(-1);
  geo_cmd->add_option("--v0", geo_v0, "Start velocity")->required()->expected(-1);
  geo_cmd->add_option("--T", geo_T, "Duration");
  geo_cmd->add_option("--steps", geo_steps, "Integration steps");
  geo_cmd->add_option("--out", geo_out, "Output CSV path");

  // gradcheck / oracle
  auto* grad_cmd = app.add_subcommand("gradcheck", "AD vs finite differences");
  std::int64_t grad_seed = 1234;
  grad_cmd->add_option("--seed", grad_seed, "Seed for random draws");
  auto* oracle_cmd = app.add_subcommand("oracle", "Closed-form geometry oracles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, seed_override, out_override);
    if (geom_cmd->parsed()) return cmd_geometry(geom_ck, geom_task, geom_n, geom_out);
    if (geo_cmd->parsed())
      return cmd_geodesic(geo_ck, geo_layer, geo_x0, geo_v0, geo_T, geo_steps, geo_out);
    if (grad_cmd->parsed())
      return ndm::run_gradcheck(static_cast<std::uint64_t>(grad_seed), std::cout) ? 0 : 1;
    if (oracle_cmd->parsed()) return ndm::run_oracle_suite(std::cout) ? 0 : 1;
  } catch (const ndm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
