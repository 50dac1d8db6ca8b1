// Command-line driver for the comparison experiment. Each subcommand runs one
// pipeline stage against a config file; `all` chains every stage.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tmlkit/experiment.hpp"

namespace {

tml::ExperimentConfig make_config(const std::string& config_path,
                                  const std::string& out_override) {
  auto cfg = config_path.empty() ? tml::default_config()
                                 : tml::load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  return cfg;
}

void write_matrix_csv(const tml::ExperimentConfig& cfg,
                      const std::string& name,
                      const std::vector<tml::SummaryRow>& rows) {
  auto path = (std::filesystem::path(cfg.out_dir) / name).string();
  tml::write_summary_csv(path, rows);
  std::cout << "[" << name.substr(0, name.find('.')) << "] wrote " << path
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"persistence-image vs raw-image representation comparison"};
  app.require_subcommand(1);

  std::string config_path, out_override;
  app.add_option("--config", config_path, "config file (key = value lines)")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_override, "output directory override");

  auto* prep = app.add_subcommand(
      "prep", "load or synthesize the dataset and build both input views");
  auto* train = app.add_subcommand(
      "train", "train the model grid, reusing existing checkpoints");
  auto* stitch = app.add_subcommand(
      "stitch", "run the stitching matrix and write stitch.csv");
  auto* cka =
      app.add_subcommand("cka", "run the CKA matrix and write cka.csv");
  auto* report = app.add_subcommand(
      "report", "render SVG profiles from the CSVs on disk");
  auto* all = app.add_subcommand("all", "run every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    auto cfg = make_config(config_path, out_override);
    if (prep->parsed()) {
      tml::run_prep(cfg);
    } else if (train->parsed()) {
      auto data = tml::run_prep(cfg);
      tml::run_train(cfg, data);
    } else if (stitch->parsed()) {
      auto data = tml::run_prep(cfg);
      auto models = tml::run_train(cfg, data);
      write_matrix_csv(cfg, "stitch.csv",
                       tml::run_stitch_matrix(cfg, models, data));
    } else if (cka->parsed()) {
      auto data = tml::run_prep(cfg);
      auto models = tml::run_train(cfg, data);
      write_matrix_csv(cfg, "cka.csv",
                       tml::run_cka_matrix(cfg, models, data));
    } else if (report->parsed()) {
      tml::run_report(cfg);
    } else if (all->parsed()) {
      tml::run_all(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
