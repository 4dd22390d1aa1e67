#pragma once

// Experiment orchestration: training, evaluation against clean labels, the
// horizon sweep with resumable per-cell manifests, complexity measurement,
// and plot-ready exports (CSV + SVG).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "seer/channel.hpp"
#include "seer/config.hpp"
#include "seer/dataset.hpp"
#include "seer/predictors.hpp"

namespace seer {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct TrainResult {
  std::vector<double> loss_curve;  // mean squared error per epoch
  double train_seconds = 0.0;
  bool non_decreasing_warning = false;
};

// Mini-batch Adam training of an NN predictor on the split's train windows.
// Deterministic given the shuffle seed; a non-finite loss aborts with the
// failing epoch and step in the message.
inline TrainResult train_model(NNPredictor& predictor, const DatasetSplit& split,
                               int epochs, const AdamConfig& adam_cfg, int batch_size,
                               std::uint64_t shuffle_seed) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  auto& model = predictor.model();
  const int flen = model.config().feature_len();
  const int olen = model.config().output_dim;
  const std::size_t n = split.train.size();
  if (epochs == 0 || n == 0) return result;

  std::vector<float> features(n * flen), labels(n * olen);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(split.train[i].features.begin(), split.train[i].features.end(),
              features.begin() + i * flen);
    std::copy(split.train[i].label.begin(), split.train[i].label.end(),
              labels.begin() + i * olen);
  }

  Adam<float> opt(model.parameters(), adam_cfg);
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::vector<float> bx(static_cast<std::size_t>(batch_size) * flen);
  std::vector<float> by(static_cast<std::size_t>(batch_size) * olen);
  Tape<float> tape;  // reused across batches; retired buffers are recycled

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(derive_seed(shuffle_seed, "shuffle", epoch));
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_sq_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < n; start += batch_size, ++step) {
      const int b = static_cast<int>(std::min<std::size_t>(batch_size, n - start));
      for (int i = 0; i < b; ++i) {
        const std::uint32_t src = order[start + i];
        std::copy(features.begin() + static_cast<std::size_t>(src) * flen,
                  features.begin() + static_cast<std::size_t>(src + 1) * flen,
                  bx.begin() + static_cast<std::size_t>(i) * flen);
        std::copy(labels.begin() + static_cast<std::size_t>(src) * olen,
                  labels.begin() + static_cast<std::size_t>(src + 1) * olen,
                  by.begin() + static_cast<std::size_t>(i) * olen);
      }
      tape.clear();
      const auto x = tape.input({b, flen},
                                std::vector<float>(bx.begin(), bx.begin() + b * flen));
      const auto y = tape.input({b, olen},
                                std::vector<float>(by.begin(), by.begin() + b * olen));
      const auto loss = tape.mse(model.forward(tape, x, b), y);
      const double loss_v = tape.val(loss)[0];
      if (!std::isfinite(loss_v))
        throw Error("training diverged: model " + model.config().architecture + " epoch " +
                    std::to_string(epoch) + " step " + std::to_string(step) +
                    " produced a non-finite loss");
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      epoch_sq_sum += loss_v * b;
    }
    result.loss_curve.push_back(epoch_sq_sum / static_cast<double>(n));
  }
  if (result.loss_curve.size() >= 10 && result.loss_curve[9] >= result.loss_curve[0])
    result.non_decreasing_warning = true;
  result.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation. Test MSE is always computed against clean labels, averaged
// over test samples and the output's real components.
// ---------------------------------------------------------------------------

struct EvalResult {
  double mse_linear = 0.0;
  double mse_db = 0.0;  // 10*log10(mse); -inf when mse == 0
};

inline double to_db(double mse) {
  return mse > 0 ? 10.0 * std::log10(mse) : -std::numeric_limits<double>::infinity();
}

inline EvalResult evaluate_nn(const NNPredictor& predictor, const DatasetSplit& split,
                              int batch_size = 512) {
  const std::size_t n = split.test_inputs_noisy.size();
  if (n == 0) throw Error("evaluate: empty test set");
  const int flen = predictor.model().config().feature_len();
  const int olen = predictor.model().config().output_dim;
  double acc = 0.0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const int b = static_cast<int>(std::min<std::size_t>(batch_size, n - start));
    std::vector<float> bx(static_cast<std::size_t>(b) * flen);
    for (int i = 0; i < b; ++i)
      std::copy(split.test_inputs_noisy[start + i].features.begin(),
                split.test_inputs_noisy[start + i].features.end(),
                bx.begin() + static_cast<std::size_t>(i) * flen);
    const auto pred = predictor.predict_flat_batch(bx, b);
    for (int i = 0; i < b; ++i) {
      const auto& label = split.test_labels_clean[start + i];
      for (int j = 0; j < olen; ++j) {
        const double d = static_cast<double>(pred[static_cast<std::size_t>(i) * olen + j]) -
                         label[j];
        acc += d * d;
      }
    }
  }
  EvalResult r;
  r.mse_linear = acc / (static_cast<double>(n) * olen);
  r.mse_db = to_db(r.mse_linear);
  return r;
}

inline EvalResult evaluate_naive(const DatasetSplit& split) {
  const std::size_t n = split.test_inputs_noisy.size();
  if (n == 0) throw Error("evaluate: empty test set");
  const std::size_t olen = split.label_len();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = split.test_inputs_noisy[i];
    const auto& label = split.test_labels_clean[i];
    const std::size_t last = w.features.size() - olen;
    for (std::size_t j = 0; j < olen; ++j) {
      const double d = static_cast<double>(w.features[last + j]) - label[j];
      acc += d * d;
    }
  }
  EvalResult r;
  r.mse_linear = acc / (static_cast<double>(n) * olen);
  r.mse_db = to_db(r.mse_linear);
  return r;
}

// Kalman evaluation walks each measurement trace once, filtering from the
// start (the filter converges on this prefix) and rolling forward at every
// test origin on that subcarrier.
inline EvalResult evaluate_kalman(const KalmanPredictor& predictor,
                                  const DatasetSplit& split,
                                  const std::vector<ChannelTrace>& meas_traces,
                                  bool* converged_out = nullptr) {
  const std::size_t n = split.test_inputs_noisy.size();
  if (n == 0) throw Error("evaluate: empty test set");
  std::map<int, const ChannelTrace*> by_subcarrier;
  for (const auto& tr : meas_traces) by_subcarrier[tr.subcarrier_index] = &tr;

  // origin -> test indices, grouped per subcarrier
  std::map<int, std::vector<std::pair<int, std::size_t>>> plan;  // subc -> (origin, index)
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = split.test_inputs_noisy[i];
    plan[w.subcarrier_index].emplace_back(w.origin_time, i);
  }
  const int p = split.window_spec.horizon;
  const std::size_t olen = split.label_len();
  const int links = static_cast<int>(olen / 2);
  double acc = 0.0;
  bool converged = true;
  for (auto& [subc, items] : plan) {
    const auto it = by_subcarrier.find(subc);
    if (it == by_subcarrier.end())
      throw Error("evaluate_kalman: no measurement trace for subcarrier " +
                  std::to_string(subc));
    const ChannelTrace& tr = *it->second;
    std::sort(items.begin(), items.end());
    std::vector<ScalarKalman> filters;
    for (int l = 0; l < links; ++l) filters.emplace_back(predictor.links()[l]);
    std::size_t next = 0;
    for (std::size_t t = 0; t < tr.num_snapshots() && next < items.size(); ++t) {
      for (int l = 0; l < links; ++l) filters[l].update(tr.at(t, l));
      while (next < items.size() && items[next].first == static_cast<int>(t)) {
        const std::size_t i = items[next].second;
        const auto& label = split.test_labels_clean[i];
        for (int l = 0; l < links; ++l) {
          const cplx pred = filters[l].predict_ahead(p);
          const double dre = pred.real() - label[2 * l];
          const double dim = pred.imag() - label[2 * l + 1];
          acc += dre * dre + dim * dim;
          if (filters[l].trace_delta() > 1e-3) converged = false;
        }
        ++next;
      }
    }
    if (next != items.size())
      throw Error("evaluate_kalman: trace shorter than test origins require");
  }
  if (converged_out) *converged_out = converged;
  EvalResult r;
  r.mse_linear = acc / (static_cast<double>(n) * olen);
  r.mse_db = to_db(r.mse_linear);
  return r;
}

// ---------------------------------------------------------------------------
// Sweep cells and manifests.
// ---------------------------------------------------------------------------

struct CellKey {
  std::string model;
  int horizon = 1;
  std::string scenario;  // clean | noisy
  std::uint64_t seed = 1;

  std::string id() const {
    return model + "_h" + std::to_string(horizon) + "_" + scenario + "_s" +
           std::to_string(seed);
  }
};

struct CellResult {
  CellKey key;
  double mse_linear = 0.0;
  double mse_db = 0.0;
  std::size_t params = 0;
  double latency_us = 0.0;
  double train_seconds = 0.0;
  std::vector<double> loss_curve;
  bool warning = false;
};

namespace detail {

inline std::string canonical_payload(const CellResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s|%.17g|%.17g|%zu|%.6f|%.6f|%d", r.key.id().c_str(),
                r.mse_linear, r.mse_db, r.params, r.latency_us, r.train_seconds,
                r.warning ? 1 : 0);
  return buf;
}

}  // namespace detail

inline void write_cell_manifest(const CellResult& r, const std::string& plan_hash_hex,
                                const fs::path& dir) {
  nlohmann::json j;
  j["plan_hash"] = plan_hash_hex;
  j["version"] = std::string(kVersion);
  j["model"] = r.key.model;
  j["horizon_ms"] = r.key.horizon;
  j["scenario"] = r.key.scenario;
  j["seed"] = r.key.seed;
  j["mse_linear"] = r.mse_linear;
  j["mse_db"] = std::isfinite(r.mse_db) ? r.mse_db : -1e300;
  j["params"] = r.params;
  j["latency_us"] = r.latency_us;
  j["train_seconds"] = r.train_seconds;
  j["loss_curve"] = r.loss_curve;
  j["warning"] = r.warning;
  j["payload_crc"] = crc32(detail::canonical_payload(r));
  fs::create_directories(dir);
  const fs::path final_path = dir / (r.key.id() + ".json");
  const fs::path tmp_path = dir / (r.key.id() + ".json.tmp");
  write_text_file(tmp_path.string(), j.dump(2));
  fs::rename(tmp_path, final_path);
}

// Returns the stored result if the manifest exists, parses, matches the plan
// hash, and passes its payload checksum; otherwise nullopt (corrupt or stale
// manifests are re-run, never silently reused).
inline std::optional<CellResult> load_cell_manifest(const CellKey& key,
                                                    const std::string& plan_hash_hex,
                                                    const fs::path& dir) {
  const fs::path path = dir / (key.id() + ".json");
  if (!fs::exists(path)) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(read_text_file(path.string()));
    if (j.at("plan_hash").get<std::string>() != plan_hash_hex) return std::nullopt;
    CellResult r;
    r.key = key;
    r.mse_linear = j.at("mse_linear").get<double>();
    r.mse_db = j.at("mse_db").get<double>();
    if (r.mse_db <= -1e299) r.mse_db = -std::numeric_limits<double>::infinity();
    r.params = j.at("params").get<std::size_t>();
    r.latency_us = j.at("latency_us").get<double>();
    r.train_seconds = j.at("train_seconds").get<double>();
    r.loss_curve = j.at("loss_curve").get<std::vector<double>>();
    r.warning = j.at("warning").get<bool>();
    if (j.at("payload_crc").get<std::uint32_t>() != crc32(detail::canonical_payload(r)))
      return std::nullopt;
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Dataset derivation for one cell, derived purely from configuration and
// seeds so every cell is reproducible in isolation.
// ---------------------------------------------------------------------------

struct CellContext {
  std::vector<ChannelTrace> clean_traces;
  std::vector<ChannelTrace> meas_traces;  // what the model-based filter observes
  DatasetSplit split;
  double signal_power = 1.0;
  double noise_var = 0.0;  // complex measurement-noise variance (0 = clean)
};

inline std::vector<ChannelTrace> build_seed_traces(const RunConfig& cfg,
                                                   const TapProfile& profile,
                                                   std::uint64_t seed_value) {
  const std::uint64_t eff = derive_seed(cfg.master_seed, "seed", seed_value);
  const auto fading = cfg.fading(derive_seed(eff, "trace"));
  return generate_dataset_traces(profile, fading, cfg.trace_duration_ms * 1e-3,
                                 cfg.subcarriers_used);
}

inline CellContext build_cell_context(const RunConfig& cfg, const TapProfile& profile,
                                      std::uint64_t seed_value, int horizon,
                                      const std::string& scenario,
                                      const std::vector<ChannelTrace>* traces_hint = nullptr) {
  const std::uint64_t eff = derive_seed(cfg.master_seed, "seed", seed_value);
  CellContext ctx;
  ctx.clean_traces =
      traces_hint ? *traces_hint : build_seed_traces(cfg, profile, seed_value);

  WindowSpec wspec;
  wspec.history_len = cfg.history_len;
  wspec.stride = cfg.stride;
  wspec.horizon = horizon;
  wspec.sample_interval_s = cfg.sample_interval_ms * 1e-3;

  const auto windows = window_traces(ctx.clean_traces, wspec);
  ctx.signal_power = dataset_signal_power(windows);
  ctx.split = split_dataset(windows, cfg.train_count, cfg.test_count,
                            derive_seed(eff, "split", horizon));
  ctx.split.window_spec = wspec;
  ctx.split.num_tx = cfg.num_tx;
  ctx.split.num_rx = cfg.num_rx;
  ctx.split.master_seed = eff;
  ctx.split.signal_power = ctx.signal_power;

  if (scenario == "noisy") {
    ctx.split.snr_db = cfg.snr_db;
    NoiseSpec train_noise;
    train_noise.snr_db = cfg.snr_db;
    train_noise.apply_to_inputs = true;
    train_noise.apply_to_labels = true;  // noise in inputs and outputs of training data
    train_noise.rng_seed = derive_seed(eff, "noise-train", horizon);
    ctx.split.noise_seed = train_noise.rng_seed;
    apply_noise(ctx.split.train, train_noise, ctx.signal_power);

    NoiseSpec test_noise;
    test_noise.snr_db = cfg.snr_db;
    test_noise.apply_to_inputs = true;
    test_noise.apply_to_labels = false;  // test labels stay clean
    test_noise.rng_seed = derive_seed(eff, "noise-test", horizon);
    apply_noise(ctx.split.test_inputs_noisy, test_noise, ctx.signal_power);

    ctx.noise_var = NoiseSpec{cfg.snr_db, true, true, 0}.noise_variance(ctx.signal_power);
    NoiseSpec trace_noise;
    trace_noise.snr_db = cfg.snr_db;
    trace_noise.rng_seed = derive_seed(eff, "kalman-noise");
    double trace_power = 0.0;
    std::size_t cnt = 0;
    for (const auto& tr : ctx.clean_traces) {
      for (const auto& v : tr.values) trace_power += std::norm(v);
      cnt += tr.values.size();
    }
    trace_power /= static_cast<double>(cnt);
    ctx.meas_traces = noisy_traces(ctx.clean_traces, trace_noise, trace_power);
  } else {
    ctx.split.snr_db = std::numeric_limits<double>::quiet_NaN();
    ctx.meas_traces = ctx.clean_traces;
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Per-cell computation.
// ---------------------------------------------------------------------------

// Mean single-prediction latency through the uniform predictor interface.
inline double mean_latency_us(const Predictor& predictor, const History& sample,
                              int reps = 1000, int warmup = 50) {
  for (int i = 0; i < warmup; ++i) (void)predictor.predict(sample);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) (void)predictor.predict(sample);
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::micro>(t1 - t0).count() / reps;
}

// Median single-prediction latency over >= `reps` predictions (the rigorous
// protocol behind the complexity table).
inline double median_latency_us(const Predictor& predictor, const History& sample,
                                int reps = 10000, int warmup = 200) {
  for (int i = 0; i < warmup; ++i) (void)predictor.predict(sample);
  std::vector<double> times(reps);
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)predictor.predict(sample);
    const auto t1 = std::chrono::steady_clock::now();
    times[i] = std::chrono::duration<double, std::micro>(t1 - t0).count();
  }
  std::nth_element(times.begin(), times.begin() + reps / 2, times.end());
  return times[reps / 2];
}

inline History latency_probe_history(const CellContext& ctx, const RunConfig& cfg) {
  const auto& w = ctx.split.test_inputs_noisy.at(0);
  return history_from_features(w.features, cfg.history_len, cfg.num_tx, cfg.num_rx);
}

struct ComplexityRow {
  std::string model;
  std::size_t params = 0;
  double latency_us = 0.0;  // median over >= 10^4 single-sample predictions
};

inline CellResult run_cell(const RunConfig& cfg, const CellKey& key,
                           const CellContext& ctx) {
  const std::uint64_t eff = derive_seed(cfg.master_seed, "seed", key.seed);
  CellResult r;
  r.key = key;
  EvalResult ev;
  if (key.model == "naive") {
    ev = evaluate_naive(ctx.split);
    NaivePredictor naive(key.horizon);
    r.latency_us = mean_latency_us(naive, latency_probe_history(ctx, cfg));
    r.params = 0;
  } else if (key.model == "kalman") {
    const auto t0 = std::chrono::steady_clock::now();
    const auto kf = kalman_fit(ctx.meas_traces, cfg.kalman_ar_order, ctx.noise_var,
                               key.horizon);
    r.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool converged = true;
    ev = evaluate_kalman(kf, ctx.split, ctx.meas_traces, &converged);
    r.warning = !converged;
    r.latency_us = mean_latency_us(kf, latency_probe_history(ctx, cfg));
    // per-link AR coefficients plus the two noise variances
    r.params = kf.links().size() * (2 * cfg.kalman_ar_order + 2);
  } else {
    auto predictor = build_nn_predictor(cfg.model(key.model, derive_seed(eff, "init", key.horizon,
                                                                         key.scenario == "noisy")),
                                        key.horizon, ctx.split.window_spec, cfg.num_tx,
                                        cfg.num_rx);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.learning_rate;
    const auto train = train_model(*predictor, ctx.split, cfg.epochs, adam_cfg,
                                   cfg.batch_size,
                                   derive_seed(eff, "order", key.horizon,
                                               key.scenario == "noisy"));
    r.train_seconds = train.train_seconds;
    r.loss_curve = train.loss_curve;
    r.warning = train.non_decreasing_warning;
    ev = evaluate_nn(*predictor, ctx.split);
    r.params = predictor->model().parameter_count();
    r.latency_us = mean_latency_us(*predictor, latency_probe_history(ctx, cfg), 400, 20);
  }
  r.mse_linear = ev.mse_linear;
  r.mse_db = ev.mse_db;
  return r;
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

inline std::string format_db(double db) {
  if (!std::isfinite(db) && db < 0) return "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", db);
  return buf;
}

inline void write_report_csv(std::vector<CellResult> cells, const std::string& path) {
  const std::vector<std::string> model_order = {"naive",       "kalman", "mlp", "cnn",
                                                "lstm",        "gru",    "transformer"};
  auto rank = [&](const std::string& m) {
    const auto it = std::find(model_order.begin(), model_order.end(), m);
    return std::distance(model_order.begin(), it);
  };
  std::sort(cells.begin(), cells.end(), [&](const CellResult& a, const CellResult& b) {
    return std::tuple(rank(a.key.model), a.key.horizon, a.key.scenario, a.key.seed) <
           std::tuple(rank(b.key.model), b.key.horizon, b.key.scenario, b.key.seed);
  });
  std::ostringstream out;
  out << "model,horizon_ms,scenario,seed,mse_linear,mse_db,params,latency_us,train_seconds\n";
  for (const auto& r : cells) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%s,%d,%s,%llu,%.17g,%s,%zu,%.3f,%.3f\n",
                  r.key.model.c_str(), r.key.horizon, r.key.scenario.c_str(),
                  static_cast<unsigned long long>(r.key.seed), r.mse_linear,
                  format_db(r.mse_db).c_str(), r.params, r.latency_us, r.train_seconds);
    out << buf;
  }
  write_text_file(path, out.str());
}

inline void write_complexity_csv(const std::vector<ComplexityRow>& rows,
                                 const std::string& path) {
  std::ostringstream out;
  out << "model,params,latency_us\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%zu,%.3f\n", r.model.c_str(), r.params,
                  r.latency_us);
    out << buf;
  }
  write_text_file(path, out.str());
}

// Minimal SVG line chart: one polyline per series over a numeric x axis.
inline void write_svg_chart(const std::string& path, const std::string& title,
                            const std::string& x_label, const std::string& y_label,
                            const std::vector<double>& xs,
                            const std::vector<std::pair<std::string, std::vector<double>>>&
                                series) {
  const int W = 860, H = 560, ML = 70, MR = 180, MT = 50, MB = 60;
  double ymin = 1e300, ymax = -1e300;
  for (const auto& [name, ys] : series)
    for (double y : ys)
      if (std::isfinite(y)) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
  if (!(ymin < ymax)) {
    ymin -= 1.0;
    ymax += 1.0;
  }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  const double xmin = xs.front(), xmax = xs.back();
  auto px = [&](double x) {
    return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);
  };
  auto py = [&](double y) {
    return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB);
  };
  const std::vector<std::string> colors = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                           "#9467bd", "#8c564b", "#17becf"};
  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "' viewBox='0 0 " << W << " " << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='28' text-anchor='middle' font-size='18'>" << title
      << "</text>\n";
  // axes
  out << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='"
      << H - MB << "' stroke='black'/>\n";
  out << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
      << "' stroke='black'/>\n";
  out << "<text x='" << (ML + W - MR) / 2 << "' y='" << H - 18
      << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n";
  out << "<text x='20' y='" << (MT + H - MB) / 2
      << "' text-anchor='middle' font-size='13' transform='rotate(-90 20 "
      << (MT + H - MB) / 2 << ")'>" << y_label << "</text>\n";
  for (double x : xs) {
    out << "<line x1='" << px(x) << "' y1='" << H - MB << "' x2='" << px(x) << "' y2='"
        << H - MB + 5 << "' stroke='black'/>\n";
    out << "<text x='" << px(x) << "' y='" << H - MB + 20
        << "' text-anchor='middle' font-size='11'>" << x << "</text>\n";
  }
  const int yticks = 8;
  for (int i = 0; i <= yticks; ++i) {
    const double y = ymin + (ymax - ymin) * i / yticks;
    out << "<line x1='" << ML - 5 << "' y1='" << py(y) << "' x2='" << ML << "' y2='"
        << py(y) << "' stroke='black'/>\n";
    char lbl[32];
    std::snprintf(lbl, sizeof(lbl), "%.1f", y);
    out << "<text x='" << ML - 9 << "' y='" << py(y) + 4
        << "' text-anchor='end' font-size='11'>" << lbl << "</text>\n";
  }
  int ci = 0;
  for (const auto& [name, ys] : series) {
    const std::string color = colors[ci % colors.size()];
    std::ostringstream pts;
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (i < ys.size() && std::isfinite(ys[i]))
        pts << px(xs[i]) << "," << py(ys[i]) << " ";
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='"
        << pts.str() << "'/>\n";
    const int ly = MT + 20 * ci;
    out << "<line x1='" << W - MR + 12 << "' y1='" << ly << "' x2='" << W - MR + 40
        << "' y2='" << ly << "' stroke='" << color << "' stroke-width='2'/>\n";
    out << "<text x='" << W - MR + 46 << "' y='" << ly + 4 << "' font-size='13'>" << name
        << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
  write_text_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Trace and histogram exports.
// ---------------------------------------------------------------------------

// Plot-ready CSV of the true, noisy, and predicted sequences for one link of
// one subcarrier. Predictions are made from clean histories; rows whose
// history or horizon is out of range leave the prediction columns empty.
inline void export_trace_csv(const ChannelTrace& clean, const ChannelTrace& noisy,
                             const Predictor& predictor, const WindowSpec& wspec,
                             int link, const std::string& path) {
  const int p = predictor.horizon();
  const int n = wspec.history_len, k = wspec.stride;
  std::ostringstream out;
  out.precision(9);
  out << "time_ms,true_re,true_im,noisy_re,noisy_im,pred_re,pred_im\n";
  for (std::size_t t = 0; t < clean.num_snapshots(); ++t) {
    const cplx tv = clean.at(t, link);
    const cplx nv = noisy.at(t, link);
    out << t * wspec.sample_interval_s * 1e3 << "," << tv.real() << "," << tv.imag() << ","
        << nv.real() << "," << nv.imag() << ",";
    const std::int64_t origin = static_cast<std::int64_t>(t) - p;
    if (origin >= static_cast<std::int64_t>(k) * n) {
      History h;
      h.num_tx = clean.num_tx;
      h.num_rx = clean.num_rx;
      for (int s = n - 1; s >= 0; --s)
        h.snapshots.push_back(clean.snapshot(static_cast<std::size_t>(origin - static_cast<std::int64_t>(k) * s)));
      const auto pred = predictor.predict(h);
      out << pred[link].real() << "," << pred[link].imag();
    } else {
      out << ",";
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

// Complex-plane histogram of pooled channel samples, plot-ready.
inline void export_histogram_csv(const std::vector<ChannelTrace>& traces, int bins,
                                 double half_range, const std::string& path) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins) * bins, 0);
  const double cell = 2.0 * half_range / bins;
  std::size_t total = 0, inside = 0;
  for (const auto& tr : traces)
    for (const auto& v : tr.values) {
      ++total;
      const int bx = static_cast<int>(std::floor((v.real() + half_range) / cell));
      const int by = static_cast<int>(std::floor((v.imag() + half_range) / cell));
      if (bx < 0 || bx >= bins || by < 0 || by >= bins) continue;
      ++inside;
      ++counts[static_cast<std::size_t>(by) * bins + bx];
    }
  std::ostringstream out;
  out.precision(9);
  out << "# pooled complex channel histogram: " << total << " samples, " << inside
      << " within range\n";
  out << "re_center,im_center,count\n";
  for (int by = 0; by < bins; ++by)
    for (int bx = 0; bx < bins; ++bx)
      out << (-half_range + (bx + 0.5) * cell) << "," << (-half_range + (by + 0.5) * cell)
          << "," << counts[static_cast<std::size_t>(by) * bins + bx] << "\n";
  write_text_file(path, out.str());
}

// ---------------------------------------------------------------------------
// The sweep.
// ---------------------------------------------------------------------------

struct SweepOutcome {
  std::vector<CellResult> cells;
  std::vector<ComplexityRow> complexity;
  std::string plan_hash_hex;
  int computed = 0;
  int reused = 0;
};

inline std::vector<CellKey> enumerate_cells(const RunConfig& cfg) {
  std::vector<CellKey> cells;
  for (std::uint64_t seed : cfg.seeds)
    for (int horizon : cfg.horizons)
      for (const auto& scenario : cfg.scenarios)
        for (const auto& model : cfg.models)
          cells.push_back(CellKey{model, horizon, scenario, seed});
  return cells;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Median-over-seeds MSE (dB) per (model, horizon) for one scenario.
inline std::map<std::string, std::vector<double>> median_db_series(
    const std::vector<CellResult>& cells, const RunConfig& cfg,
    const std::string& scenario) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& model : cfg.models) {
    std::vector<double> ys;
    for (int h : cfg.horizons) {
      std::vector<double> vals;
      for (const auto& c : cells)
        if (c.key.model == model && c.key.horizon == h && c.key.scenario == scenario)
          vals.push_back(c.mse_linear);
      ys.push_back(to_db(median(vals)));
    }
    out[model] = std::move(ys);
  }
  return out;
}

inline void write_sweep_reports(const RunConfig& cfg, const SweepOutcome& outcome,
                                const fs::path& out_dir) {
  write_report_csv(outcome.cells, (out_dir / "report.csv").string());
  write_complexity_csv(outcome.complexity, (out_dir / "complexity.csv").string());
  std::vector<double> xs(cfg.horizons.begin(), cfg.horizons.end());
  for (const auto& scenario : cfg.scenarios) {
    const auto series_map = median_db_series(outcome.cells, cfg, scenario);
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (const auto& model : cfg.models) series.emplace_back(model, series_map.at(model));
    write_svg_chart((out_dir / ("mse_vs_horizon_" + scenario + ".svg")).string(),
                    "Test MSE vs prediction horizon (" + scenario + ")",
                    "prediction horizon (ms)", "MSE (dB)", xs, series);
  }
}

inline void write_run_info(const RunConfig& cfg, const TapProfile& profile,
                           const std::string& plan_hash_hex, const fs::path& out_dir,
                           const std::string& profile_text) {
  fs::create_directories(out_dir);
  write_text_file((out_dir / "config_resolved.txt").string(), config_echo(cfg));
  std::ostringstream info;
  info << "tool_version=" << kVersion << "\n";
  info << "plan_hash=" << plan_hash_hex << "\n";
  info << "master_seed=" << cfg.master_seed << "\n";
  char crcbuf[16];
  std::snprintf(crcbuf, sizeof(crcbuf), "%08x", crc32(profile_text));
  info << "profile_crc32=" << crcbuf << "\n";
  info << "profile_taps=" << profile.size() << "\n";
  info << "delay_spread_ns=" << profile.delay_spread_s * 1e9 << "\n";
  write_text_file((out_dir / "run_info.txt").string(), info.str());
}

// Provides the dataset context for one cell; the default builds everything
// in memory, the staged pipeline substitutes a file-backed provider.
using CellContextProvider =
    std::function<std::shared_ptr<const CellContext>(const CellKey&)>;

// Rigorous complexity table: parameter counts are structural; latency is the
// median over >= 10^4 single-sample predictions at the first plan horizon.
inline std::vector<ComplexityRow> measure_complexity_table(
    const RunConfig& cfg, const TapProfile& profile,
    const CellContextProvider& provider = {}) {
  const int horizon = cfg.horizons.at(0);
  const CellKey probe_key{cfg.models.at(0), horizon, "clean", cfg.seeds.at(0)};
  const std::shared_ptr<const CellContext> ctx_ptr =
      provider ? provider(probe_key)
               : std::make_shared<const CellContext>(build_cell_context(
                     cfg, profile, cfg.seeds.at(0), horizon, "clean"));
  const CellContext& ctx = *ctx_ptr;
  const auto probe = latency_probe_history(ctx, cfg);
  std::vector<ComplexityRow> rows;
  for (const auto& model : cfg.models) {
    ComplexityRow row;
    row.model = model;
    if (model == "naive") {
      NaivePredictor naive(horizon);
      row.params = 0;
      row.latency_us = median_latency_us(naive, probe);
    } else if (model == "kalman") {
      const auto kf = kalman_fit(ctx.meas_traces, cfg.kalman_ar_order, 0.0, horizon);
      row.params = kf.links().size() * (2 * cfg.kalman_ar_order + 2);
      row.latency_us = median_latency_us(kf, probe);
    } else {
      const std::uint64_t eff = derive_seed(cfg.master_seed, "seed", cfg.seeds.at(0));
      auto predictor = build_nn_predictor(cfg.model(model, derive_seed(eff, "init", horizon, 0)),
                                          horizon, ctx.split.window_spec, cfg.num_tx,
                                          cfg.num_rx);
      row.params = predictor->model().parameter_count();
      row.latency_us = median_latency_us(*predictor, probe);
    }
    rows.push_back(row);
  }
  return rows;
}

inline void write_complexity_manifest(const std::vector<ComplexityRow>& rows,
                                      const std::string& plan_hash_hex,
                                      const fs::path& dir) {
  nlohmann::json j;
  j["plan_hash"] = plan_hash_hex;
  for (const auto& r : rows)
    j["rows"].push_back({{"model", r.model}, {"params", r.params},
                         {"latency_us", r.latency_us}});
  fs::create_directories(dir);
  const fs::path tmp = dir / "complexity.json.tmp";
  write_text_file(tmp.string(), j.dump(2));
  fs::rename(tmp, dir / "complexity.json");
}

inline std::optional<std::vector<ComplexityRow>> load_complexity_manifest(
    const std::string& plan_hash_hex, const fs::path& dir) {
  const fs::path path = dir / "complexity.json";
  if (!fs::exists(path)) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(read_text_file(path.string()));
    if (j.at("plan_hash").get<std::string>() != plan_hash_hex) return std::nullopt;
    std::vector<ComplexityRow> rows;
    for (const auto& e : j.at("rows"))
      rows.push_back({e.at("model").get<std::string>(), e.at("params").get<std::size_t>(),
                      e.at("latency_us").get<double>()});
    return rows;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// Runs every missing cell of the plan (resumable via manifests keyed by the
// plan hash), then writes report.csv, complexity.csv, and the SVG charts.
inline SweepOutcome run_sweep(const RunConfig& cfg, const TapProfile& profile,
                              const std::string& profile_text, int jobs = 1,
                              bool quiet = false,
                              const CellContextProvider& provider = {}) {
  cfg.validate();
  const fs::path out_dir(cfg.out_dir);
  const std::string hash = plan_hash(cfg);
  const fs::path cell_dir = out_dir / "cells" / hash;
  write_run_info(cfg, profile, hash, out_dir, profile_text);

  const auto cells = enumerate_cells(cfg);
  SweepOutcome outcome;
  outcome.plan_hash_hex = hash;
  std::vector<CellKey> pending;
  for (const auto& key : cells) {
    if (auto cached = load_cell_manifest(key, hash, cell_dir)) {
      outcome.cells.push_back(*cached);
      ++outcome.reused;
    } else {
      pending.push_back(key);
    }
  }

  std::mutex results_mutex, cache_mutex, log_mutex;
  std::map<std::string, std::shared_ptr<const CellContext>> context_cache;
  std::map<std::uint64_t, std::shared_ptr<const std::vector<ChannelTrace>>> trace_cache;
  std::atomic<std::size_t> next{0};

  auto get_context = [&](const CellKey& key) {
    const std::string ck = std::to_string(key.seed) + "/" + std::to_string(key.horizon) +
                           "/" + key.scenario;
    std::lock_guard<std::mutex> lock(cache_mutex);
    if (auto it = context_cache.find(ck); it != context_cache.end()) return it->second;
    std::shared_ptr<const CellContext> ctx;
    if (provider) {
      ctx = provider(key);
    } else {
      std::shared_ptr<const std::vector<ChannelTrace>> traces;
      if (auto it = trace_cache.find(key.seed); it != trace_cache.end()) {
        traces = it->second;
      } else {
        traces = std::make_shared<const std::vector<ChannelTrace>>(
            build_seed_traces(cfg, profile, key.seed));
        if (trace_cache.size() >= 2) trace_cache.clear();
        trace_cache[key.seed] = traces;
      }
      ctx = std::make_shared<const CellContext>(build_cell_context(
          cfg, profile, key.seed, key.horizon, key.scenario, traces.get()));
    }
    if (context_cache.size() >= 4) context_cache.clear();
    context_cache[ck] = ctx;
    return ctx;
  };

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      const CellKey& key = pending[i];
      const auto ctx = get_context(key);
      if (!quiet) {
        std::lock_guard<std::mutex> lock(log_mutex);
        std::fprintf(stderr, "[sweep] %zu/%zu %s\n", i + 1, pending.size(),
                     key.id().c_str());
      }
      CellResult r = run_cell(cfg, key, *ctx);
      write_cell_manifest(r, hash, cell_dir);
      std::lock_guard<std::mutex> lock(results_mutex);
      outcome.cells.push_back(std::move(r));
      ++outcome.computed;
    }
  };

  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  if (auto cached = load_complexity_manifest(hash, cell_dir)) {
    outcome.complexity = *cached;
  } else {
    outcome.complexity = measure_complexity_table(cfg, profile, provider);
    write_complexity_manifest(outcome.complexity, hash, cell_dir);
  }
  write_sweep_reports(cfg, outcome, out_dir);
  return outcome;
}

// Rebuilds the CSV/SVG outputs from existing manifests without recomputation.
inline SweepOutcome regenerate_reports(const RunConfig& cfg, const TapProfile& profile,
                                       const std::string& profile_text) {
  const fs::path out_dir(cfg.out_dir);
  const std::string hash = plan_hash(cfg);
  const fs::path cell_dir = out_dir / "cells" / hash;
  SweepOutcome outcome;
  outcome.plan_hash_hex = hash;
  for (const auto& key : enumerate_cells(cfg)) {
    if (auto cached = load_cell_manifest(key, hash, cell_dir)) {
      outcome.cells.push_back(*cached);
      ++outcome.reused;
    }
  }
  if (outcome.cells.empty())
    throw Error("report: no completed cells under " + cell_dir.string() +
                "; run the `sweep` command first");
  if (auto cached = load_complexity_manifest(hash, cell_dir)) {
    outcome.complexity = *cached;
  } else {
    outcome.complexity = measure_complexity_table(cfg, profile);
    write_complexity_manifest(outcome.complexity, hash, cell_dir);
  }
  write_run_info(cfg, profile, hash, out_dir, profile_text);
  write_sweep_reports(cfg, outcome, out_dir);
  return outcome;
}

}  // namespace seer
