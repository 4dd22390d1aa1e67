#pragma once

// Supervised dataset construction: sliding-window extraction from channel
// traces, the noise protocol, train/test sampling, and the CSPD file format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "seer/channel.hpp"
#include "seer/common.hpp"

namespace seer {

// History window geometry. Input timestamps for an origin t are the n most
// recent snapshots {t - k*(n-1), ..., t - k, t}; the label is the snapshot at
// t + p. Admissible origins are t in [k*n, T-1-p].
struct WindowSpec {
  int history_len = 5;     // n
  int stride = 1;          // k, in sampling intervals
  int horizon = 1;         // p, in sampling intervals
  double sample_interval_s = 1e-3;

  void validate() const {
    if (history_len < 1) throw Error("window spec: history_len must be >= 1");
    if (stride < 1) throw Error("window spec: stride must be >= 1");
    if (horizon < 1) throw Error("window spec: horizon must be >= 1");
  }

  std::size_t min_trace_length() const {
    return static_cast<std::size_t>(stride) * history_len + horizon + 1;
  }
};

// One (history -> future snapshot) pair, flattened to real features.
// Feature layout (fixed, consumed identically by every model): time-major
// over the n input steps (oldest first), then link row-major (tx-major),
// then [re, im] per link. Labels use the same 8-real link layout.
struct SampleWindow {
  std::vector<float> features;  // n * num_tx * num_rx * 2
  std::vector<float> label;     // num_tx * num_rx * 2
  int subcarrier_index = 0;
  int origin_time = 0;          // snapshot index of the newest input
};

inline std::size_t feature_length(const WindowSpec& spec, int num_tx, int num_rx) {
  return static_cast<std::size_t>(spec.history_len) * num_tx * num_rx * 2;
}

inline std::vector<float> flatten_snapshot(const ChannelTrace& trace, std::size_t t) {
  std::vector<float> out(trace.num_links() * 2);
  for (int link = 0; link < trace.num_links(); ++link) {
    const cplx v = trace.at(t, link);
    out[2 * link] = static_cast<float>(v.real());
    out[2 * link + 1] = static_cast<float>(v.imag());
  }
  return out;
}

// Extracts every admissible window from one trace.
inline std::vector<SampleWindow> window_trace(const ChannelTrace& trace,
                                              const WindowSpec& spec) {
  spec.validate();
  const std::size_t T = trace.num_snapshots();
  if (T < spec.min_trace_length())
    throw Error("window_trace: trace has " + std::to_string(T) +
                " snapshots; need at least " + std::to_string(spec.min_trace_length()) +
                " for n=" + std::to_string(spec.history_len) + " k=" +
                std::to_string(spec.stride) + " p=" + std::to_string(spec.horizon));
  const int n = spec.history_len, k = spec.stride, p = spec.horizon;
  const int links2 = trace.num_links() * 2;
  std::vector<SampleWindow> out;
  out.reserve(T - static_cast<std::size_t>(k) * n - p);
  for (std::size_t t = static_cast<std::size_t>(k) * n; t + p < T; ++t) {
    SampleWindow w;
    w.subcarrier_index = trace.subcarrier_index;
    w.origin_time = static_cast<int>(t);
    w.features.resize(static_cast<std::size_t>(n) * links2);
    for (int s = 0; s < n; ++s) {
      const std::size_t ts = t - static_cast<std::size_t>(k) * (n - 1 - s);
      for (int link = 0; link < trace.num_links(); ++link) {
        const cplx v = trace.at(ts, link);
        w.features[static_cast<std::size_t>(s) * links2 + 2 * link] =
            static_cast<float>(v.real());
        w.features[static_cast<std::size_t>(s) * links2 + 2 * link + 1] =
            static_cast<float>(v.imag());
      }
    }
    w.label = flatten_snapshot(trace, t + p);
    out.push_back(std::move(w));
  }
  return out;
}

inline std::vector<SampleWindow> window_traces(const std::vector<ChannelTrace>& traces,
                                               const WindowSpec& spec) {
  std::vector<SampleWindow> out;
  for (const auto& tr : traces) {
    auto w = window_trace(tr, spec);
    out.insert(out.end(), std::make_move_iterator(w.begin()),
               std::make_move_iterator(w.end()));
  }
  return out;
}

// Mean |H|^2 over every complex entry (features and labels) of a clean
// window set; the reference signal power for the SNR definition.
inline double dataset_signal_power(const std::vector<SampleWindow>& windows) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& w : windows) {
    for (float v : w.features) acc += static_cast<double>(v) * v;
    for (float v : w.label) acc += static_cast<double>(v) * v;
    n += (w.features.size() + w.label.size()) / 2;  // complex entries
  }
  if (n == 0) throw Error("dataset_signal_power: empty window set");
  return acc / static_cast<double>(n);
}

struct NoiseSpec {
  double snr_db = 20.0;
  bool apply_to_inputs = true;
  bool apply_to_labels = true;
  std::uint64_t rng_seed = 0;

  // Complex noise variance for a given signal power; split equally over the
  // real components.
  double noise_variance(double signal_power) const {
    if (!std::isfinite(snr_db)) throw Error("noise spec: snr_db must be finite");
    return signal_power / std::pow(10.0, snr_db / 10.0);
  }
};

// Adds i.i.d. Gaussian noise (variance sigma_n^2 / 2 per real component) to
// the selected parts of each window. `signal_power` must come from the clean
// data. Deterministic per seed.
inline void apply_noise(std::vector<SampleWindow>& windows, const NoiseSpec& spec,
                        double signal_power) {
  if (!spec.apply_to_inputs && !spec.apply_to_labels) return;
  const double sigma = std::sqrt(spec.noise_variance(signal_power) / 2.0);
  Rng rng(derive_seed(spec.rng_seed, "window-noise"));
  for (auto& w : windows) {
    if (spec.apply_to_inputs)
      for (auto& v : w.features) v += static_cast<float>(sigma * rng.normal());
    if (spec.apply_to_labels)
      for (auto& v : w.label) v += static_cast<float>(sigma * rng.normal());
  }
}

// Adds the same noise model to raw traces (used for the model-based
// predictor's measurement stream and for trace exports).
inline std::vector<ChannelTrace> noisy_traces(const std::vector<ChannelTrace>& traces,
                                              const NoiseSpec& spec, double signal_power) {
  const double sigma = std::sqrt(spec.noise_variance(signal_power) / 2.0);
  std::vector<ChannelTrace> out = traces;
  for (auto& tr : out) {
    Rng rng(derive_seed(spec.rng_seed, "trace-noise", tr.subcarrier_index));
    for (auto& v : tr.values)
      v += cplx(sigma * rng.normal(), sigma * rng.normal());
  }
  return out;
}

// Train/test split. Train windows carry the training noise policy; test
// windows keep noisy inputs alongside clean labels so evaluation always
// scores against the clean channel.
struct DatasetSplit {
  WindowSpec window_spec;
  int num_tx = 2, num_rx = 2;
  double snr_db = std::numeric_limits<double>::quiet_NaN();  // NaN = clean scenario
  double signal_power = 1.0;  // mean |H|^2 of the clean windows
  std::uint64_t master_seed = 0, noise_seed = 0, split_seed = 0;

  std::vector<SampleWindow> train;               // noisy per train policy
  std::vector<SampleWindow> test_inputs_noisy;   // labels inside are clean copies
  std::vector<std::vector<float>> test_labels_clean;

  bool noisy() const { return std::isfinite(snr_db); }
  std::size_t feature_len() const { return feature_length(window_spec, num_tx, num_rx); }
  std::size_t label_len() const { return static_cast<std::size_t>(num_tx) * num_rx * 2; }
};

// Uniform sampling without replacement of train_count + test_count windows;
// train/test are disjoint at the (subcarrier, origin_time) level by
// construction. Deterministic per seed.
inline DatasetSplit split_dataset(const std::vector<SampleWindow>& windows,
                                  std::size_t train_count, std::size_t test_count,
                                  std::uint64_t seed) {
  if (train_count + test_count > windows.size())
    throw Error("split_dataset: requested " + std::to_string(train_count + test_count) +
                " samples but only " + std::to_string(windows.size()) + " windows exist");
  std::vector<std::uint32_t> index(windows.size());
  std::iota(index.begin(), index.end(), 0u);
  Rng rng(derive_seed(seed, "split"));
  // Partial Fisher-Yates over the prefix we consume.
  const std::size_t need = train_count + test_count;
  for (std::size_t i = 0; i < need; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(index.size() - i));
    std::swap(index[i], index[j]);
  }
  DatasetSplit split;
  split.split_seed = seed;
  split.train.reserve(train_count);
  split.test_inputs_noisy.reserve(test_count);
  split.test_labels_clean.reserve(test_count);
  for (std::size_t i = 0; i < train_count; ++i) split.train.push_back(windows[index[i]]);
  for (std::size_t i = 0; i < test_count; ++i) {
    const auto& w = windows[index[train_count + i]];
    split.test_inputs_noisy.push_back(w);
    split.test_labels_clean.push_back(w.label);
  }
  return split;
}

// ---------------------------------------------------------------------------
// CSPD dataset file format (little-endian):
//   magic "CSPD", u32 version,
//   header: u32 n, k, p, num_tx, num_rx; u64 train_count, test_count;
//           f64 sample_interval_s, snr_db (NaN for clean), signal_power;
//           u8 noise flags x2; u64 master_seed, noise_seed, split_seed
//   sections (each u64 byte length + payload + u32 CRC-32):
//     train features (f32), train labels (f32),
//     test features (f32), test labels inside windows (f32),
//     test labels clean (f32),
//     window metadata (u32 pairs subcarrier, origin) for train then test.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDatasetMagic = 0x44505343u;  // "CSPD"
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const DatasetSplit& split, const std::string& path) {
  BinaryWriter out(path);
  out.put<std::uint32_t>(kDatasetMagic);
  out.put<std::uint32_t>(kDatasetVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(split.window_spec.history_len));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(split.window_spec.stride));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(split.window_spec.horizon));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(split.num_tx));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(split.num_rx));
  out.put<std::uint64_t>(split.train.size());
  out.put<std::uint64_t>(split.test_inputs_noisy.size());
  out.put<double>(split.window_spec.sample_interval_s);
  out.put<double>(split.snr_db);
  out.put<double>(split.signal_power);
  out.put<std::uint8_t>(1);  // train noise on inputs+labels when snr finite
  out.put<std::uint8_t>(1);
  out.put<std::uint64_t>(split.master_seed);
  out.put<std::uint64_t>(split.noise_seed);
  out.put<std::uint64_t>(split.split_seed);

  auto concat_features = [](const std::vector<SampleWindow>& ws) {
    std::vector<float> v;
    if (!ws.empty()) v.reserve(ws.size() * ws[0].features.size());
    for (const auto& w : ws) v.insert(v.end(), w.features.begin(), w.features.end());
    return v;
  };
  auto concat_labels = [](const std::vector<SampleWindow>& ws) {
    std::vector<float> v;
    for (const auto& w : ws) v.insert(v.end(), w.label.begin(), w.label.end());
    return v;
  };
  out.put_section(concat_features(split.train));
  out.put_section(concat_labels(split.train));
  out.put_section(concat_features(split.test_inputs_noisy));
  out.put_section(concat_labels(split.test_inputs_noisy));
  std::vector<float> clean;
  for (const auto& l : split.test_labels_clean) clean.insert(clean.end(), l.begin(), l.end());
  out.put_section(clean);
  std::vector<std::uint32_t> meta;
  meta.reserve(2 * (split.train.size() + split.test_inputs_noisy.size()));
  for (const auto& w : split.train) {
    meta.push_back(static_cast<std::uint32_t>(w.subcarrier_index));
    meta.push_back(static_cast<std::uint32_t>(w.origin_time));
  }
  for (const auto& w : split.test_inputs_noisy) {
    meta.push_back(static_cast<std::uint32_t>(w.subcarrier_index));
    meta.push_back(static_cast<std::uint32_t>(w.origin_time));
  }
  out.put_section(meta);
  if (!out.good()) throw Error("save_dataset: write failure for " + path);
}

inline DatasetSplit load_dataset(const std::string& path) {
  BinaryReader in(path);
  if (in.get<std::uint32_t>() != kDatasetMagic)
    throw Error("load_dataset: bad magic in " + path);
  const auto version = in.get<std::uint32_t>();
  if (version != kDatasetVersion)
    throw Error("load_dataset: unsupported version " + std::to_string(version) + " in " + path);
  DatasetSplit split;
  split.window_spec.history_len = static_cast<int>(in.get<std::uint32_t>());
  split.window_spec.stride = static_cast<int>(in.get<std::uint32_t>());
  split.window_spec.horizon = static_cast<int>(in.get<std::uint32_t>());
  split.num_tx = static_cast<int>(in.get<std::uint32_t>());
  split.num_rx = static_cast<int>(in.get<std::uint32_t>());
  const auto train_count = in.get<std::uint64_t>();
  const auto test_count = in.get<std::uint64_t>();
  split.window_spec.sample_interval_s = in.get<double>();
  split.snr_db = in.get<double>();
  split.signal_power = in.get<double>();
  in.get<std::uint8_t>();
  in.get<std::uint8_t>();
  split.master_seed = in.get<std::uint64_t>();
  split.noise_seed = in.get<std::uint64_t>();
  split.split_seed = in.get<std::uint64_t>();

  const auto train_features = in.get_section<float>();
  const auto train_labels = in.get_section<float>();
  const auto test_features = in.get_section<float>();
  const auto test_labels = in.get_section<float>();
  const auto clean_labels = in.get_section<float>();
  const auto meta = in.get_section<std::uint32_t>();

  const std::size_t flen = split.feature_len();
  const std::size_t llen = split.label_len();
  if (train_features.size() != train_count * flen || train_labels.size() != train_count * llen ||
      test_features.size() != test_count * flen || test_labels.size() != test_count * llen ||
      clean_labels.size() != test_count * llen || meta.size() != 2 * (train_count + test_count))
    throw Error("load_dataset: inconsistent section sizes in " + path);

  auto unpack = [&](const std::vector<float>& feats, const std::vector<float>& labs,
                    std::size_t count, std::size_t meta_off) {
    std::vector<SampleWindow> ws(count);
    for (std::size_t i = 0; i < count; ++i) {
      ws[i].features.assign(feats.begin() + i * flen, feats.begin() + (i + 1) * flen);
      ws[i].label.assign(labs.begin() + i * llen, labs.begin() + (i + 1) * llen);
      ws[i].subcarrier_index = static_cast<int>(meta[meta_off + 2 * i]);
      ws[i].origin_time = static_cast<int>(meta[meta_off + 2 * i + 1]);
    }
    return ws;
  };
  split.train = unpack(train_features, train_labels, train_count, 0);
  split.test_inputs_noisy = unpack(test_features, test_labels, test_count, 2 * train_count);
  split.test_labels_clean.resize(test_count);
  for (std::size_t i = 0; i < test_count; ++i)
    split.test_labels_clean[i].assign(clean_labels.begin() + i * llen,
                                      clean_labels.begin() + (i + 1) * llen);
  return split;
}

}  // namespace seer
