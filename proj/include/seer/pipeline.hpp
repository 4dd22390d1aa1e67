#pragma once

// The staged command pipeline behind the CLI: simulate writes trace files,
// dataset writes CSPD splits, train fits one cell, sweep consumes the staged
// files for every cell, report re-renders from manifests. Each stage reads
// only the previous stage's files and fails by naming the missing command.

#include "seer/bench.hpp"

namespace seer {

// ---------------------------------------------------------------------------
// CSPT trace file (little-endian): magic "CSPT", u32 version, u32 trace
// count, then per trace: u32 subcarrier, num_tx, num_rx; f64 sample interval;
// CRC-guarded f64 section of interleaved re/im values (time-major,
// link-minor). Doubles keep the staged pipeline bit-identical to in-memory
// generation.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kTraceMagic = 0x54505343u;  // "CSPT"
inline constexpr std::uint32_t kTraceVersion = 1;

inline void save_traces(const std::vector<ChannelTrace>& traces, const std::string& path) {
  BinaryWriter out(path);
  out.put<std::uint32_t>(kTraceMagic);
  out.put<std::uint32_t>(kTraceVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(traces.size()));
  for (const auto& tr : traces) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(tr.subcarrier_index));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(tr.num_tx));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(tr.num_rx));
    out.put<double>(tr.sample_interval_s);
    std::vector<double> payload;
    payload.reserve(tr.values.size() * 2);
    for (const auto& v : tr.values) {
      payload.push_back(v.real());
      payload.push_back(v.imag());
    }
    out.put_section(payload);
  }
  if (!out.good()) throw Error("save_traces: write failure for " + path);
}

inline std::vector<ChannelTrace> load_traces(const std::string& path) {
  BinaryReader in(path);
  if (in.get<std::uint32_t>() != kTraceMagic)
    throw Error("load_traces: bad magic in " + path);
  const auto version = in.get<std::uint32_t>();
  if (version != kTraceVersion)
    throw Error("load_traces: unsupported version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  std::vector<ChannelTrace> traces(count);
  for (auto& tr : traces) {
    tr.subcarrier_index = static_cast<int>(in.get<std::uint32_t>());
    tr.num_tx = static_cast<int>(in.get<std::uint32_t>());
    tr.num_rx = static_cast<int>(in.get<std::uint32_t>());
    tr.sample_interval_s = in.get<double>();
    const auto payload = in.get_section<double>();
    if (payload.size() % 2 != 0) throw Error("load_traces: odd payload in " + path);
    tr.values.resize(payload.size() / 2);
    for (std::size_t i = 0; i < tr.values.size(); ++i)
      tr.values[i] = cplx(payload[2 * i], payload[2 * i + 1]);
  }
  return traces;
}

// ---------------------------------------------------------------------------
// Stage file layout.
// ---------------------------------------------------------------------------

inline fs::path traces_path(const RunConfig& cfg, std::uint64_t seed_value) {
  return fs::path(cfg.out_dir) / "traces" /
         ("traces_s" + std::to_string(seed_value) + ".cspt");
}

inline fs::path dataset_path(const RunConfig& cfg, std::uint64_t seed_value, int horizon,
                             const std::string& scenario) {
  return fs::path(cfg.out_dir) / "datasets" /
         ("ds_s" + std::to_string(seed_value) + "_h" + std::to_string(horizon) + "_" +
          scenario + ".cspd");
}

// ---------------------------------------------------------------------------
// Stages.
// ---------------------------------------------------------------------------

struct SimulateSummary {
  std::size_t traces = 0;
  std::size_t complex_points = 0;
  ComplexPoolStats stats;
};

// Generates and stores the fading traces for every plan seed, plus the
// pooled-distribution stats, the complex-plane histogram, and a sample
// true/noisy trace excerpt.
inline SimulateSummary stage_simulate(const RunConfig& cfg, const TapProfile& profile,
                                      const std::string& profile_text) {
  cfg.validate();
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir / "traces");
  write_run_info(cfg, profile, plan_hash(cfg), out_dir, profile_text);

  SimulateSummary summary;
  std::vector<ChannelTrace> first_traces;
  for (std::uint64_t seed : cfg.seeds) {
    auto traces = build_seed_traces(cfg, profile, seed);
    summary.traces += traces.size();
    summary.complex_points += total_complex_points(traces);
    save_traces(traces, traces_path(cfg, seed).string());
    if (first_traces.empty()) first_traces = std::move(traces);
  }
  summary.stats = pooled_stats(first_traces);

  std::ostringstream stats;
  stats.precision(6);
  stats << "traces=" << summary.traces << "\n";
  stats << "complex_points=" << summary.complex_points << "\n";
  stats << "mean_abs=" << summary.stats.mean_abs() << "\n";
  stats << "var_re=" << summary.stats.var_re << "\n";
  stats << "var_im=" << summary.stats.var_im << "\n";
  stats << "corr_re_im=" << summary.stats.corr_re_im << "\n";
  stats << "mean_power=" << summary.stats.mean_power << "\n";
  write_text_file((out_dir / "channel_stats.txt").string(), stats.str());

  export_histogram_csv(first_traces, 81, 3.5, (out_dir / "histogram.csv").string());

  // 53 ms excerpt of the first trace with its noisy counterpart and the
  // shifted naive prediction.
  const std::uint64_t eff = derive_seed(cfg.master_seed, "seed", cfg.seeds.at(0));
  double trace_power = 0.0;
  std::size_t cnt = 0;
  for (const auto& tr : first_traces) {
    for (const auto& v : tr.values) trace_power += std::norm(v);
    cnt += tr.values.size();
  }
  trace_power /= static_cast<double>(cnt);
  NoiseSpec trace_noise;
  trace_noise.snr_db = cfg.snr_db;
  trace_noise.rng_seed = derive_seed(eff, "kalman-noise");
  const auto noisy = noisy_traces({first_traces.at(0)}, trace_noise, trace_power);
  WindowSpec wspec;
  wspec.history_len = cfg.history_len;
  wspec.stride = cfg.stride;
  wspec.sample_interval_s = cfg.sample_interval_ms * 1e-3;
  ChannelTrace excerpt = first_traces.at(0);
  ChannelTrace excerpt_noisy = noisy.at(0);
  const std::size_t keep = std::min<std::size_t>(excerpt.num_snapshots(), 54);
  excerpt.values.resize(keep * excerpt.num_links());
  excerpt_noisy.values.resize(keep * excerpt.num_links());
  NaivePredictor naive(1);
  export_trace_csv(excerpt, excerpt_noisy, naive, wspec, 0,
                   (out_dir / "trace_sample.csv").string());
  return summary;
}

// Builds and stores the CSPD split for every (seed, horizon, scenario) cell
// of the plan, reading the simulate stage's trace files.
inline std::size_t stage_dataset(const RunConfig& cfg, const TapProfile& profile) {
  cfg.validate();
  fs::create_directories(fs::path(cfg.out_dir) / "datasets");
  std::size_t written = 0;
  for (std::uint64_t seed : cfg.seeds) {
    const auto tp = traces_path(cfg, seed);
    if (!fs::exists(tp))
      throw Error("dataset: missing " + tp.string() + "; run the `simulate` command first");
    const auto traces = load_traces(tp.string());
    for (int horizon : cfg.horizons)
      for (const auto& scenario : cfg.scenarios) {
        const auto ctx =
            build_cell_context(cfg, profile, seed, horizon, scenario, &traces);
        save_dataset(ctx.split, dataset_path(cfg, seed, horizon, scenario).string());
        ++written;
      }
  }
  return written;
}

// File-backed context provider for the sweep/train stages: splits come from
// the dataset stage, measurement traces from the simulate stage (noisy
// versions are re-derived deterministically from the stored seeds).
inline CellContextProvider file_context_provider(const RunConfig& cfg) {
  return [cfg](const CellKey& key) {
    const auto dp = dataset_path(cfg, key.seed, key.horizon, key.scenario);
    if (!fs::exists(dp))
      throw Error("sweep: missing " + dp.string() + "; run the `dataset` command first");
    const auto tp = traces_path(cfg, key.seed);
    if (!fs::exists(tp))
      throw Error("sweep: missing " + tp.string() + "; run the `simulate` command first");
    auto ctx = std::make_shared<CellContext>();
    ctx->split = load_dataset(dp.string());
    ctx->signal_power = ctx->split.signal_power;
    ctx->clean_traces = load_traces(tp.string());
    if (key.scenario == "noisy") {
      ctx->noise_var =
          NoiseSpec{cfg.snr_db, true, true, 0}.noise_variance(ctx->signal_power);
      const std::uint64_t eff = derive_seed(cfg.master_seed, "seed", key.seed);
      NoiseSpec trace_noise;
      trace_noise.snr_db = cfg.snr_db;
      trace_noise.rng_seed = derive_seed(eff, "kalman-noise");
      double trace_power = 0.0;
      std::size_t cnt = 0;
      for (const auto& tr : ctx->clean_traces) {
        for (const auto& v : tr.values) trace_power += std::norm(v);
        cnt += tr.values.size();
      }
      trace_power /= static_cast<double>(cnt);
      ctx->meas_traces = noisy_traces(ctx->clean_traces, trace_noise, trace_power);
    } else {
      ctx->meas_traces = ctx->clean_traces;
    }
    return std::shared_ptr<const CellContext>(std::move(ctx));
  };
}

inline SweepOutcome stage_sweep(const RunConfig& cfg, const TapProfile& profile,
                                const std::string& profile_text, int jobs,
                                bool quiet = false) {
  return run_sweep(cfg, profile, profile_text, jobs, quiet, file_context_provider(cfg));
}

inline SweepOutcome stage_report(const RunConfig& cfg, const TapProfile& profile,
                                 const std::string& profile_text) {
  return regenerate_reports(cfg, profile, profile_text);
}

// Trains one cell from the staged files, writes its manifest plus a
// checkpoint (or Kalman sidecar) and a predicted-trace excerpt.
inline CellResult stage_train(const RunConfig& cfg, const TapProfile& profile,
                              const CellKey& key) {
  cfg.validate();
  const auto provider = file_context_provider(cfg);
  const auto ctx = provider(key);
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir / "checkpoints");
  fs::create_directories(out_dir / "exports");

  const std::uint64_t eff = derive_seed(cfg.master_seed, "seed", key.seed);
  CellResult result;
  std::unique_ptr<Predictor> predictor;
  if (key.model == "naive") {
    predictor = std::make_unique<NaivePredictor>(key.horizon);
    result = run_cell(cfg, key, *ctx);
  } else if (key.model == "kalman") {
    result = run_cell(cfg, key, *ctx);
    auto kf = std::make_unique<KalmanPredictor>(
        kalman_fit(ctx->meas_traces, cfg.kalman_ar_order, ctx->noise_var, key.horizon));
    save_kalman_sidecar(*kf, (out_dir / "checkpoints" / (key.id() + ".kalman.txt")).string());
    predictor = std::move(kf);
  } else {
    auto nn = build_nn_predictor(
        cfg.model(key.model, derive_seed(eff, "init", key.horizon, key.scenario == "noisy")),
        key.horizon, ctx->split.window_spec, cfg.num_tx, cfg.num_rx);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.learning_rate;
    const auto train =
        train_model(*nn, ctx->split, cfg.epochs, adam_cfg, cfg.batch_size,
                    derive_seed(eff, "order", key.horizon, key.scenario == "noisy"));
    const auto ev = evaluate_nn(*nn, ctx->split);
    result.key = key;
    result.mse_linear = ev.mse_linear;
    result.mse_db = ev.mse_db;
    result.params = nn->model().parameter_count();
    result.train_seconds = train.train_seconds;
    result.loss_curve = train.loss_curve;
    result.warning = train.non_decreasing_warning;
    result.latency_us = mean_latency_us(*nn, latency_probe_history(*ctx, cfg), 400, 20);
    save_checkpoint(nn->model(), key.horizon,
                    (out_dir / "checkpoints" / (key.id() + ".cspm")).string());
    predictor = std::move(nn);
  }
  write_cell_manifest(result, plan_hash(cfg), out_dir / "cells" / plan_hash(cfg));

  // Fig-2-style excerpt: true, noisy, predicted sequences on one link.
  WindowSpec wspec = ctx->split.window_spec;
  const auto& clean_trace = ctx->clean_traces.at(0);
  const auto& meas_trace = ctx->meas_traces.at(0);
  ChannelTrace excerpt = clean_trace, excerpt_noisy = meas_trace;
  const std::size_t keep =
      std::min<std::size_t>(excerpt.num_snapshots(),
                            54 + static_cast<std::size_t>(wspec.stride) * wspec.history_len +
                                key.horizon);
  excerpt.values.resize(keep * excerpt.num_links());
  excerpt_noisy.values.resize(keep * excerpt.num_links());
  export_trace_csv(excerpt, excerpt_noisy, *predictor, wspec, 0,
                   (out_dir / "exports" / ("pred_" + key.id() + ".csv")).string());
  return result;
}

}  // namespace seer
