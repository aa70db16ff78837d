// casft command-line front end: synthetic data generation, preprocessing,
// training, evaluation, ablations and hyperparameter sweeps.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "casft/casft.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

int cmd_simulate(const std::string& config_path, const std::string& out_path) {
  casft::ExperimentConfig cfg = casft::load_config(config_path);
  const auto cascades = casft::load_cascades(cfg.data);
  std::ofstream f(out_path);
  if (!f) throw casft::CasftError("cannot write " + out_path);
  casft::write_cascades_jsonl(f, cascades);
  std::cout << "wrote " << cascades.size() << " cascades to " << out_path << "\n";
  return 0;
}

int cmd_preprocess(const std::string& in_path, const std::string& format, double t_obs,
                   double t_pred, int min_observed, const std::string& split_spec,
                   std::uint64_t seed, int intervals, std::string out_path) {
  const auto parts = split_commas(split_spec);
  if (parts.size() != 3) throw casft::CasftError("--split expects three comma-separated ratios");
  casft::SplitRatios ratios{std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};

  std::ifstream f(casft::resolve_data_path(in_path));
  if (!f) throw casft::CasftError("cannot open " + in_path);
  casft::ParseStats stats;
  const auto cascades = casft::parse_cascades(
      f, format == "jsonl" ? casft::CascadeFormat::jsonl : casft::CascadeFormat::deephawkes_tsv,
      &stats);
  if (stats.sort_repairs > 0)
    std::cerr << "warning: re-sorted timestamps in " << stats.sort_repairs << " cascades\n";

  std::vector<casft::LabeledSample> labels;
  for (const auto& c : cascades) labels.push_back(casft::label_sample(c, t_obs, t_pred, intervals));
  const auto split = casft::filter_and_split(cascades, labels, min_observed, ratios, seed);

  if (out_path.empty()) out_path = in_path + ".split.json";
  std::ofstream out(out_path);
  out << casft::split_manifest(split).dump(2) << "\n";
  std::cout << "kept " << split.train.size() + split.val.size() + split.test.size() << " of "
            << cascades.size() << " cascades (train " << split.train.size() << " / val "
            << split.val.size() << " / test " << split.test.size() << ") -> " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  casft::ExperimentConfig cfg = casft::load_config(config_path);
  ensure_dir(cfg.out_dir);
  casft::PreparedDataset ds = casft::build_dataset(cfg);
  std::ofstream log(cfg.out_dir + "/train_log.jsonl");
  casft::TrainResult tr = casft::train_model(cfg, ds, &log);
  casft::save_checkpoint(cfg.out_dir + "/checkpoint.json", tr.checkpoint);
  std::cout << "train msle " << tr.initial_train_msle << " -> " << tr.final_train_msle
            << " (best epoch " << tr.best_epoch << ")\n"
            << "checkpoint: " << cfg.out_dir << "/checkpoint.json\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& split) {
  casft::Checkpoint ck = casft::load_checkpoint(ckpt_path);
  casft::PreparedDataset ds = casft::build_dataset(ck.config);
  auto [report, records] = casft::evaluate_checkpoint(ck, ds, split);
  ensure_dir(ck.config.out_dir);
  {
    std::ofstream f(ck.config.out_dir + "/metrics_" + split + ".json");
    f << casft::report_to_json(report).dump(2) << "\n";
  }
  {
    std::ofstream f(ck.config.out_dir + "/predictions_" + split + ".csv");
    casft::write_predictions_csv(f, records);
  }
  std::cout << casft::report_to_json(report).dump(2) << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& variants_spec) {
  casft::ExperimentConfig cfg = casft::load_config(config_path);
  ensure_dir(cfg.out_dir);
  std::vector<std::string> variants =
      variants_spec.empty() ? casft::all_variants() : split_commas(variants_spec);
  casft::PreparedDataset ds = casft::build_dataset(cfg);
  const auto rows = casft::ablate(cfg, ds, variants);
  std::ofstream csv(cfg.out_dir + "/ablation.csv");
  csv << "variant,seed,msle,mape,ddim_calls\n";
  std::cout << "variant,seed,msle,mape,ddim_calls\n";
  for (const auto& r : rows) {
    csv << r.variant << "," << r.seed << "," << r.msle << "," << r.mape << "," << r.ddim_calls
        << "\n";
    std::cout << r.variant << "," << r.seed << "," << r.msle << "," << r.mape << ","
              << r.ddim_calls << "\n";
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& axis_name,
              const std::string& values_spec) {
  casft::ExperimentConfig cfg = casft::load_config(config_path);
  ensure_dir(cfg.out_dir);
  const auto axis = casft::sweep_axis_from_string(axis_name);
  const auto values = split_commas(values_spec);
  if (values.empty()) throw casft::CasftError("--values must list at least one value");
  const auto rows = casft::sweep(cfg, axis, values);
  {
    std::ofstream f(cfg.out_dir + "/sweep_" + axis_name + ".csv");
    casft::write_sweep_csv(f, axis_name, rows);
  }
  casft::write_sweep_plot(cfg.out_dir + "/sweep_" + axis_name + ".svg", axis_name, rows);
  std::ostringstream ss;
  casft::write_sweep_csv(ss, axis_name, rows);
  std::cout << ss.str();
  return 0;
}

int cmd_baseline(const std::string& config_path) {
  casft::ExperimentConfig cfg = casft::load_config(config_path);
  ensure_dir(cfg.out_dir);
  casft::PreparedDataset ds = casft::build_dataset(cfg);
  const auto res = casft::baseline_feature_mlp(cfg, ds);
  std::ofstream f(cfg.out_dir + "/metrics_baseline.json");
  f << casft::report_to_json(res.report).dump(2) << "\n";
  std::cout << casft::report_to_json(res.report).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"casft: cascade popularity prediction with ODE cues and trend diffusion"};
  app.require_subcommand(1);

  std::string config_path, out_path, ckpt_path, split = "test";
  std::string in_path, format = "jsonl", split_spec = "0.7,0.15,0.15";
  std::string variants_spec, axis_name, values_spec;
  double t_obs = 0.0, t_pred = 0.0;
  int min_observed = 10, intervals = 8;
  std::uint64_t seed = 42;

  auto* sim = app.add_subcommand("simulate", "generate synthetic cascades as jsonl");
  sim->add_option("--config", config_path, "experiment config (JSON)")->required();
  sim->add_option("--out", out_path, "output jsonl path")->required();

  auto* pre = app.add_subcommand("preprocess", "filter, split and emit the split manifest");
  pre->add_option("--in", in_path, "input cascade file")->required();
  pre->add_option("--format", format, "jsonl | deephawkes")
      ->check(CLI::IsMember({"jsonl", "deephawkes"}));
  pre->add_option("--t-obs", t_obs, "observation time")->required();
  pre->add_option("--t-pred", t_pred, "prediction time")->required();
  pre->add_option("--min-observed", min_observed, "participant filter threshold");
  pre->add_option("--split", split_spec, "train,val,test ratios");
  pre->add_option("--seed", seed, "shuffle seed");
  pre->add_option("--l", intervals, "number of future segments");
  pre->add_option("--out", out_path, "manifest path (default: <in>.split.json)");

  auto* tr = app.add_subcommand("train", "train a model from a config");
  tr->add_option("--config", config_path, "experiment config (JSON)")->required();

  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a split");
  ev->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  ev->add_option("--split", split, "train | val | test")
      ->check(CLI::IsMember({"train", "val", "test"}));

  auto* ab = app.add_subcommand("ablate", "train and compare model variants");
  ab->add_option("--config", config_path, "experiment config (JSON)")->required();
  ab->add_option("--variants", variants_spec, "comma list (default: all five)");

  auto* sw = app.add_subcommand("sweep", "hyperparameter sweep along one axis");
  sw->add_option("--config", config_path, "experiment config (JSON)")->required();
  sw->add_option("--axis", axis_name, "diffusion_steps | hidden_dim | intervals | solver")
      ->required();
  sw->add_option("--values", values_spec, "comma-separated values")->required();

  auto* bl = app.add_subcommand("baseline", "train the feature-based reference model");
  bl->add_option("--config", config_path, "experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_path);
    if (pre->parsed())
      return cmd_preprocess(in_path, format, t_obs, t_pred, min_observed, split_spec, seed,
                            intervals, out_path);
    if (tr->parsed()) return cmd_train(config_path);
    if (ev->parsed()) return cmd_evaluate(ckpt_path, split);
    if (ab->parsed()) return cmd_ablate(config_path, variants_spec);
    if (sw->parsed()) return cmd_sweep(config_path, axis_name, values_spec);
    if (bl->parsed()) return cmd_baseline(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
