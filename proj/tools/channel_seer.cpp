// channel-seer: fading-channel prediction benchmark pipeline.
//
//   channel-seer simulate  --scale desk            generate fading traces
//   channel-seer dataset                            window, noise, split them
//   channel-seer train --model gru --horizon 5     fit one cell
//   channel-seer sweep --jobs 4                    run the full plan
//   channel-seer report                             re-render CSV/SVG outputs

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "seer/pipeline.hpp"

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  std::string scale;
  std::uint64_t seed = 1;
  bool seed_given = false;
  int jobs = 0;
};

std::string resolve_profile_path(const seer::RunConfig& cfg) {
  if (!cfg.profile_file.empty()) return cfg.profile_file;
  if (const char* env = std::getenv("SEER_DATA_DIR"))
    return std::string(env) + "/data/tdl_a.txt";
  if (std::filesystem::exists("data/tdl_a.txt")) return "data/tdl_a.txt";
  return std::string(SEER_REPO_DIR) + "/data/tdl_a.txt";
}

seer::RunConfig load_config(const GlobalArgs& args) {
  seer::RunConfig cfg = args.config_path.empty()
                            ? seer::parse_config_text("")
                            : seer::parse_config(args.config_path);
  if (!args.scale.empty()) {
    seer::apply_scale(cfg, args.scale);
    cfg.validate();
  }
  if (args.seed_given) cfg.master_seed = args.seed;
  if (!args.out_dir.empty()) {
    cfg.out_dir = args.out_dir;
  } else if (const char* env = std::getenv("CHANNEL_SEER_OUT")) {
    cfg.out_dir = env;
  }
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"channel-seer: TDL fading channel prediction benchmark"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs args;
  app.add_option("--config", args.config_path, "configuration file (key = value sections)");
  app.add_option("--seed", args.seed, "master seed for the whole pipeline")
      ->each([&args](const std::string&) { args.seed_given = true; });
  app.add_option("--jobs", args.jobs, "worker threads for the sweep (default: logical cores)");
  app.add_option("--out", args.out_dir, "output directory (or env CHANNEL_SEER_OUT)");
  app.add_option("--scale", args.scale, "protocol preset: paper, desk, or smoke")
      ->check(CLI::IsMember({"paper", "desk", "smoke"}));

  auto* cmd_simulate = app.add_subcommand("simulate", "generate fading channel traces");
  auto* cmd_dataset = app.add_subcommand("dataset", "window, noise, and split the traces");
  auto* cmd_train = app.add_subcommand("train", "train a single (model, horizon) cell");
  auto* cmd_sweep = app.add_subcommand("sweep", "run every cell of the plan");
  auto* cmd_report = app.add_subcommand("report", "re-render reports from manifests");

  std::string train_model_name = "gru";
  int train_horizon = 1;
  std::string train_scenario = "clean";
  std::uint64_t train_seed = 0;
  bool train_seed_given = false;
  cmd_train->add_option("--model", train_model_name,
                        "naive|kalman|mlp|cnn|lstm|gru|transformer");
  cmd_train->add_option("--horizon", train_horizon, "prediction horizon in ms");
  cmd_train->add_option("--scenario", train_scenario, "clean|noisy")
      ->check(CLI::IsMember({"clean", "noisy"}));
  cmd_train->add_option("--train-seed", train_seed, "plan seed of the cell (default: first)")
      ->each([&train_seed_given](const std::string&) { train_seed_given = true; });

  CLI11_PARSE(app, argc, argv);

  try {
    const seer::RunConfig cfg = load_config(args);
    const std::string profile_path = resolve_profile_path(cfg);
    const std::string profile_text = seer::read_text_file(profile_path);
    const seer::TapProfile profile =
        seer::parse_tap_profile(profile_text, cfg.delay_spread_ns * 1e-9);
    const int jobs =
        args.jobs > 0 ? args.jobs
                      : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    if (cmd_simulate->parsed()) {
      const auto summary = seer::stage_simulate(cfg, profile, profile_text);
      std::cout << "simulate: " << summary.traces << " traces, " << summary.complex_points
                << " complex points -> " << cfg.out_dir << "/traces\n";
      std::cout << "  pooled |mean| " << summary.stats.mean_abs() << ", var ratio "
                << summary.stats.var_re / summary.stats.var_im << ", mean power "
                << summary.stats.mean_power << "\n";
    } else if (cmd_dataset->parsed()) {
      const auto written = seer::stage_dataset(cfg, profile);
      std::cout << "dataset: wrote " << written << " split files -> " << cfg.out_dir
                << "/datasets\n";
    } else if (cmd_train->parsed()) {
      seer::CellKey key{train_model_name, train_horizon, train_scenario,
                        train_seed_given ? train_seed : cfg.seeds.at(0)};
      const auto result = seer::stage_train(cfg, profile, key);
      std::cout << "train: " << key.id() << " mse " << result.mse_linear << " ("
                << seer::format_db(result.mse_db) << " dB), " << result.params
                << " params, " << result.train_seconds << " s\n";
    } else if (cmd_sweep->parsed()) {
      const auto outcome = seer::stage_sweep(cfg, profile, profile_text, jobs);
      std::cout << "sweep: " << outcome.computed << " cells computed, " << outcome.reused
                << " reused -> " << cfg.out_dir << "/report.csv\n";
    } else if (cmd_report->parsed()) {
      const auto outcome = seer::stage_report(cfg, profile, profile_text);
      std::cout << "report: " << outcome.cells.size() << " cells -> " << cfg.out_dir
                << "/report.csv\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
