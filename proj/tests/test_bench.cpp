#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "seer/bench.hpp"
#include "test_support.hpp"

using namespace seer;
namespace fs = std::filesystem;

namespace {

// Tiny plan that exercises the full sweep machinery in seconds.
RunConfig micro_config(const std::string& out_dir) {
  RunConfig cfg;
  cfg.subcarriers_used = 6;
  cfg.num_subcarriers = 24;
  cfg.trace_duration_ms = 99.0;
  cfg.train_count = 300;
  cfg.test_count = 60;
  cfg.epochs = 2;
  cfg.horizons = {1, 3};
  cfg.scenarios = {"clean", "noisy"};
  cfg.seeds = {1, 2};
  cfg.models = {"naive", "kalman", "mlp"};
  cfg.hidden_size = 16;
  cfg.batch_size = 64;
  cfg.out_dir = out_dir;
  cfg.validate();
  return cfg;
}

std::string repo_profile_text() {
  const char* env = std::getenv("SEER_DATA_DIR");
  const std::string base = env ? env : SEER_REPO_DIR;
  return read_text_file(base + "/data/tdl_a.txt");
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Strips the wall-clock columns (latency_us, train_seconds) from a report
// row, keeping the deterministic fields.
std::string deterministic_columns(const std::string& row) {
  std::size_t pos = 0;
  int commas = 0;
  while (pos < row.size() && commas < 7) {
    if (row[pos] == ',') ++commas;
    ++pos;
  }
  return row.substr(0, pos > 0 ? pos - 1 : 0);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config defaults reproduce the published setup") {
  const auto cfg = parse_config_text("");
  CHECK(cfg.num_tx == 2);
  CHECK(cfg.num_rx == 2);
  CHECK(cfg.carrier_freq_ghz == 2.0);
  CHECK(cfg.ue_speed_kmh == 20.0);
  CHECK(cfg.grid_subcarriers() == 624);
  CHECK(cfg.history_len == 5);
  CHECK(cfg.sample_interval_ms == 1.0);
  CHECK(cfg.train_count == 90000);
  CHECK(cfg.test_count == 10000);
  CHECK(cfg.epochs == 200);
  CHECK(cfg.hidden_size == 150);
  CHECK(cfg.horizons.front() == 1);
  CHECK(cfg.horizons.back() == 40);
  CHECK(cfg.models.size() == 7);
  CHECK(cfg.snr_db == 20.0);
  // the paper-scale dataset is ~26 million complex points
  const double points = static_cast<double>(cfg.subcarriers_used) *
                        (cfg.trace_duration_ms + 1.0) * cfg.num_tx * cfg.num_rx;
  CHECK(points == Catch::Approx(26e6).epsilon(0.01));
}

TEST_CASE("config errors name the key and line") {
  CHECK_THROWS_WITH(parse_config_text("[dataset]\nsnr_db = abc\n"),
                    Catch::Matchers::ContainsSubstring("snr_db") &&
                        Catch::Matchers::ContainsSubstring("line 2"));
  CHECK_THROWS_WITH(parse_config_text("[channel]\nbandwidth = 5\n"),
                    Catch::Matchers::ContainsSubstring("unknown key") &&
                        Catch::Matchers::ContainsSubstring("channel.bandwidth"));
  CHECK_THROWS_WITH(parse_config_text("[frequency]\n"),
                    Catch::Matchers::ContainsSubstring("unknown section"));
  CHECK_THROWS_AS(parse_config_text("[plan]\nhorizons = 1,0\n"), Error);
  // Nyquist violation from the channel section
  CHECK_THROWS_AS(parse_config_text("[channel]\nue_speed_kmh = 100000\n"), Error);
}

TEST_CASE("zero speed is accepted with a warning") {
  const auto cfg = parse_config_text("[channel]\nue_speed_kmh = 0\n");
  REQUIRE(!cfg.warnings.empty());
  CHECK(cfg.warnings[0].find("static channel") != std::string::npos);
}

TEST_CASE("config echo parses back to the same configuration") {
  auto cfg = parse_config_text("[channel]\nue_speed_kmh = 30\n[plan]\nepochs = 5\n");
  const auto echoed = parse_config_text(config_echo(cfg));
  CHECK(echoed.ue_speed_kmh == 30.0);
  CHECK(echoed.epochs == 5);
  CHECK(config_echo(echoed) == config_echo(cfg));
}

TEST_CASE("scale presets adjust the protocol sizes") {
  RunConfig cfg;
  apply_scale(cfg, "desk");
  CHECK(cfg.train_count == 20000);
  CHECK(cfg.test_count == 2000);
  CHECK(cfg.epochs == 50);
  CHECK(cfg.horizons.size() == 10);
  apply_scale(cfg, "paper");
  CHECK(cfg.train_count == 90000);
  CHECK(cfg.epochs == 200);
  CHECK_THROWS_AS(apply_scale(cfg, "galaxy"), Error);
}

TEST_CASE("plan hash tracks experiment-defining settings only") {
  RunConfig a, b;
  CHECK(plan_hash(a) == plan_hash(b));
  b.out_dir = "elsewhere";
  CHECK(plan_hash(a) == plan_hash(b));
  b.epochs = 51;
  CHECK(plan_hash(a) != plan_hash(b));
  RunConfig c;
  c.master_seed = 2;
  CHECK(plan_hash(a) != plan_hash(c));
}

TEST_CASE("dB conversion and sentinel") {
  CHECK(to_db(0.01) == Catch::Approx(-20.0));
  CHECK(format_db(to_db(0.0)) == "-inf");
  CHECK(format_db(to_db(1.0)) == "0");
}

TEST_CASE("MLP fits a fixed linear map of the features") {
  // labels = A * features: the least-squares optimum is exact, so a trained
  // MLP must approach zero MSE.
  Rng rng(3);
  std::vector<std::vector<float>> A(8, std::vector<float>(40));
  for (auto& row : A)
    for (auto& v : row) v = static_cast<float>(rng.normal() / std::sqrt(40.0));
  DatasetSplit split;
  split.window_spec = WindowSpec{};
  auto make_window = [&](std::uint64_t seed) {
    SampleWindow w;
    Rng r(seed);
    w.features.resize(40);
    for (auto& v : w.features) v = static_cast<float>(r.normal() * 0.5);
    w.label.assign(8, 0.0f);
    for (int o = 0; o < 8; ++o)
      for (int i = 0; i < 40; ++i) w.label[o] += A[o][i] * w.features[i];
    return w;
  };
  for (std::uint64_t i = 0; i < 3000; ++i) split.train.push_back(make_window(1000 + i));
  for (std::uint64_t i = 0; i < 500; ++i) {
    const auto w = make_window(91000 + i);
    split.test_inputs_noisy.push_back(w);
    split.test_labels_clean.push_back(w.label);
  }

  ModelConfig mcfg;
  mcfg.architecture = "mlp";
  mcfg.mlp_layers = 2;
  mcfg.hidden_size = 128;
  mcfg.init_seed = 5;
  NNPredictor predictor(build_model<float>(mcfg), 1);
  AdamConfig adam;
  adam.lr = 3e-3;
  const auto result = train_model(predictor, split, 50, adam, 64, 77);
  CHECK(result.loss_curve.size() == 50);
  CHECK_FALSE(result.non_decreasing_warning);
  const auto ev = evaluate_nn(predictor, split);
  INFO("final train loss " << result.loss_curve.back() << ", test mse " << ev.mse_linear);
  CHECK(ev.mse_linear < 1e-4);
}

TEST_CASE("zero epochs returns the initialized model") {
  ModelConfig mcfg;
  mcfg.architecture = "mlp";
  mcfg.hidden_size = 8;
  NNPredictor predictor(build_model<float>(mcfg), 1);
  const auto before = predictor.model().parameters()[0]->v;
  DatasetSplit split;
  split.window_spec = WindowSpec{};
  const auto result = train_model(predictor, split, 0, AdamConfig{}, 32, 1);
  CHECK(result.loss_curve.empty());
  CHECK(predictor.model().parameters()[0]->v == before);
}

TEST_CASE("non-finite loss aborts with epoch and step diagnostics") {
  DatasetSplit split;
  split.window_spec = WindowSpec{};
  Rng rng(8);
  for (int i = 0; i < 256; ++i) {
    SampleWindow w;
    w.features.resize(40);
    for (auto& v : w.features) v = static_cast<float>(rng.normal());
    // a poisoned label drives the squared error to +inf on the first batch
    w.label.assign(8, std::numeric_limits<float>::infinity());
    split.train.push_back(w);
  }
  ModelConfig mcfg;
  mcfg.architecture = "mlp";
  mcfg.hidden_size = 16;
  NNPredictor predictor(build_model<float>(mcfg), 1);
  CHECK_THROWS_WITH(train_model(predictor, split, 3, AdamConfig{}, 64, 1),
                    Catch::Matchers::ContainsSubstring("epoch") &&
                        Catch::Matchers::ContainsSubstring("step"));
}

TEST_CASE("naive evaluation matches the Bessel curve on simulated data") {
  RunConfig cfg;
  cfg.subcarriers_used = 24;
  cfg.num_subcarriers = 48;
  cfg.trace_duration_ms = 599.0;
  cfg.train_count = 0;
  cfg.test_count = 4000;
  const auto profile = parse_tap_profile(repo_profile_text());
  const auto ctx = build_cell_context(cfg, profile, 1, 5, "clean");
  const auto ev = evaluate_naive(ctx.split);
  // reported MSE averages real components: analytic value is sigma^2(1-J0)
  const double fd = cfg.fading(0).max_doppler_hz();
  const double expected = 1.0 * (1.0 - oracle::jakes_autocorr(fd, 5e-3));
  INFO("naive " << ev.mse_db << " dB, analytic " << to_db(expected) << " dB");
  CHECK(std::abs(ev.mse_db - to_db(expected)) < 0.5);
}

TEST_CASE("micro sweep produces consistent, resumable reports") {
  TempDir tmp("seer_sweep_a");
  auto cfg = micro_config((tmp.path / "out").string());
  const auto profile_text = repo_profile_text();
  const auto profile = parse_tap_profile(profile_text);

  const auto outcome = run_sweep(cfg, profile, profile_text, 1, true);
  CHECK(outcome.computed == 24);  // 3 models x 2 horizons x 2 scenarios x 2 seeds
  CHECK(outcome.reused == 0);
  REQUIRE(outcome.cells.size() == 24);

  const fs::path out = tmp.path / "out";
  REQUIRE(fs::exists(out / "report.csv"));
  REQUIRE(fs::exists(out / "complexity.csv"));
  REQUIRE(fs::exists(out / "mse_vs_horizon_clean.svg"));
  REQUIRE(fs::exists(out / "mse_vs_horizon_noisy.svg"));
  REQUIRE(fs::exists(out / "config_resolved.txt"));
  REQUIRE(fs::exists(out / "run_info.txt"));

  const auto lines = read_lines((out / "report.csv").string());
  REQUIRE(lines.size() == 25);
  CHECK(lines[0] ==
        "model,horizon_ms,scenario,seed,mse_linear,mse_db,params,latency_us,train_seconds");

  // dB column consistent with the linear column; baselines present everywhere
  int naive_rows = 0, kalman_rows = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream ls(lines[i]);
    std::string model, horizon, scenario, seed, mse_lin, mse_db;
    std::getline(ls, model, ',');
    std::getline(ls, horizon, ',');
    std::getline(ls, scenario, ',');
    std::getline(ls, seed, ',');
    std::getline(ls, mse_lin, ',');
    std::getline(ls, mse_db, ',');
    if (mse_db != "-inf")
      CHECK(std::abs(10.0 * std::log10(std::stod(mse_lin)) - std::stod(mse_db)) < 1e-9);
    if (model == "naive") ++naive_rows;
    if (model == "kalman") ++kalman_rows;
  }
  CHECK(naive_rows == 8);
  CHECK(kalman_rows == 8);

  // Noisy-scenario MSE is higher than clean at the shortest horizon for the
  // deterministic baselines. (Trained cells at this micro scale are dominated
  // by training variation; the full-scale acceptance suite covers them.)
  for (const auto& c : outcome.cells)
    if (c.key.scenario == "noisy" && c.key.horizon == 1 &&
        (c.key.model == "naive" || c.key.model == "kalman"))
      for (const auto& d : outcome.cells)
        if (d.key.model == c.key.model && d.key.horizon == c.key.horizon &&
            d.key.seed == c.key.seed && d.key.scenario == "clean")
          CHECK(c.mse_linear > d.mse_linear);

  // resumability: everything is reused, reports identical
  const auto report_before = read_text_file((out / "report.csv").string());
  const auto again = run_sweep(cfg, profile, profile_text, 1, true);
  CHECK(again.computed == 0);
  CHECK(again.reused == 24);
  CHECK(read_text_file((out / "report.csv").string()) == report_before);

  // corrupting one manifest forces exactly that cell to re-run
  const fs::path cell_dir = out / "cells" / outcome.plan_hash_hex;
  const fs::path victim = cell_dir / "mlp_h1_clean_s1.json";
  REQUIRE(fs::exists(victim));
  auto bytes = read_text_file(victim.string());
  bytes[bytes.find("mse_linear") + 14] ^= 1;  // flip a digit character
  write_text_file(victim.string(), bytes);
  const auto healed = run_sweep(cfg, profile, profile_text, 1, true);
  CHECK(healed.computed == 1);
  CHECK(healed.reused == 23);
  // the recomputed cell reproduces the same results; only its wall-clock
  // columns may move
  const auto report_healed = read_text_file((out / "report.csv").string());
  {
    std::istringstream a(report_before), b(report_healed);
    std::string la, lb;
    while (std::getline(a, la) && std::getline(b, lb))
      CHECK(deterministic_columns(la) == deterministic_columns(lb));
  }

  // regeneration from manifests is idempotent
  const auto regen = regenerate_reports(cfg, profile, profile_text);
  CHECK(regen.reused == 24);
  CHECK(read_text_file((out / "report.csv").string()) == report_healed);
}

TEST_CASE("deterministic columns are bit-identical across fresh runs") {
  TempDir tmp_a("seer_det_a"), tmp_b("seer_det_b");
  auto cfg_a = micro_config((tmp_a.path / "out").string());
  auto cfg_b = micro_config((tmp_b.path / "out").string());
  cfg_a.models = {"naive", "kalman", "mlp"};
  cfg_b.models = cfg_a.models;
  const auto profile_text = repo_profile_text();
  const auto profile = parse_tap_profile(profile_text);
  run_sweep(cfg_a, profile, profile_text, 1, true);
  run_sweep(cfg_b, profile, profile_text, 1, true);
  const auto la = read_lines((tmp_a.path / "out/report.csv").string());
  const auto lb = read_lines((tmp_b.path / "out/report.csv").string());
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i)
    CHECK(deterministic_columns(la[i]) == deterministic_columns(lb[i]));
}

TEST_CASE("sweep with one model, one horizon, one seed runs one cell plus baselines") {
  TempDir tmp("seer_single");
  auto cfg = micro_config((tmp.path / "out").string());
  cfg.horizons = {1};
  cfg.scenarios = {"clean"};
  cfg.seeds = {1};
  cfg.models = {"naive", "kalman", "gru"};
  cfg.hidden_size = 12;
  const auto profile_text = repo_profile_text();
  const auto outcome = run_sweep(cfg, parse_tap_profile(profile_text), profile_text, 1, true);
  CHECK(outcome.cells.size() == 3);
  int trainable = 0;
  for (const auto& c : outcome.cells)
    if (!c.loss_curve.empty()) ++trainable;
  CHECK(trainable == 1);
}

TEST_CASE("report regeneration without manifests names the missing stage") {
  TempDir tmp("seer_noreport");
  auto cfg = micro_config((tmp.path / "out").string());
  const auto profile_text = repo_profile_text();
  CHECK_THROWS_WITH(regenerate_reports(cfg, parse_tap_profile(profile_text), profile_text),
                    Catch::Matchers::ContainsSubstring("sweep"));
}

TEST_CASE("trace export produces the shifted naive prediction") {
  FadingConfig fcfg;
  fcfg.rng_seed = 12;
  fcfg.num_subcarriers = 1;
  const auto traces = generate_dataset_traces(flat_profile(), fcfg, 0.053, 1);
  REQUIRE(traces[0].num_snapshots() == 54);
  WindowSpec wspec;
  NaivePredictor naive(2);
  TempDir tmp("seer_export");
  const std::string path = (tmp.path / "trace.csv").string();
  export_trace_csv(traces[0], traces[0], naive, wspec, 0, path);
  const auto lines = read_lines(path);
  REQUIRE(lines.size() == 55);  // header + 54 rows
  CHECK(lines[0] == "time_ms,true_re,true_im,noisy_re,noisy_im,pred_re,pred_im");
  // rows with a prediction satisfy pred[t] == true[t-2]
  int checked = 0;
  std::vector<std::array<std::string, 7>> cells;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream ls(lines[i]);
    std::array<std::string, 7> row;
    for (auto& c : row) std::getline(ls, c, ',');
    cells.push_back(row);
  }
  for (std::size_t t = 0; t < cells.size(); ++t) {
    if (cells[t][5].empty()) continue;
    REQUIRE(t >= 2);
    CHECK(cells[t][5] == cells[t - 2][1]);
    CHECK(cells[t][6] == cells[t - 2][2]);
    ++checked;
  }
  CHECK(checked == 54 - 7);  // origins from k*n=5: predictions at t = 7..53
}

TEST_CASE("histogram export matches the circular Gaussian distribution") {
  // Independent realizations: one snapshot every 25 ms from many subcarriers.
  FadingConfig fcfg;
  fcfg.rng_seed = 99;
  fcfg.num_subcarriers = 48;
  const auto profile = parse_tap_profile(repo_profile_text());
  const auto traces = generate_dataset_traces(profile, fcfg, 2.0, 48);
  std::vector<ChannelTrace> strided;
  for (const auto& tr : traces) {
    ChannelTrace s = tr;
    s.values.clear();
    for (std::size_t t = 0; t < tr.num_snapshots(); t += 25)
      for (int l = 0; l < 4; ++l) s.values.push_back(tr.at(t, l));
    strided.push_back(std::move(s));
  }
  TempDir tmp("seer_hist");
  const std::string path = (tmp.path / "hist.csv").string();
  const int bins = 21;
  const double half_range = 3.0;
  export_histogram_csv(strided, bins, half_range, path);
  const auto lines = read_lines(path);
  REQUIRE(lines.size() == 2 + bins * bins);

  // chi-square against ZMCSCG cell probabilities (sigma^2 = 1/2 per part)
  std::size_t total = 0;
  std::vector<double> counts(bins * bins, 0.0);
  for (std::size_t i = 2; i < lines.size(); ++i) {
    std::istringstream ls(lines[i]);
    std::string re, im, count;
    std::getline(ls, re, ',');
    std::getline(ls, im, ',');
    std::getline(ls, count, ',');
    counts[i - 2] = std::stod(count);
    total += static_cast<std::size_t>(counts[i - 2]);
  }
  const double cell = 2.0 * half_range / bins;
  const double sigma = std::sqrt(0.5);
  auto cdf = [&](double x) { return 0.5 * (1.0 + std::erf(x / (sigma * std::sqrt(2.0)))); };
  double chi2 = 0.0;
  int dof = 0;
  for (int by = 0; by < bins; ++by)
    for (int bx = 0; bx < bins; ++bx) {
      const double x0 = -half_range + bx * cell, x1 = x0 + cell;
      const double y0 = -half_range + by * cell, y1 = y0 + cell;
      const double p = (cdf(x1) - cdf(x0)) * (cdf(y1) - cdf(y0));
      const double expected = p * static_cast<double>(total);
      if (expected < 25.0) continue;
      const double obs = counts[by * bins + bx];
      chi2 += (obs - expected) * (obs - expected) / expected;
      ++dof;
    }
  REQUIRE(dof > 20);
  INFO("chi2 " << chi2 << " over " << dof << " cells");
  CHECK(chi2 < dof + 8.0 * std::sqrt(2.0 * static_cast<double>(dof)));
}
