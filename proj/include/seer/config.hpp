#pragma once

// Run configuration: plain-text key=value file with [sections], scale
// presets, validation, and a fully-resolved echo written beside outputs.

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "seer/common.hpp"
#include "seer/fading.hpp"
#include "seer/nn.hpp"

namespace seer {

struct RunConfig {
  // [channel]
  double carrier_freq_ghz = 2.0;
  double ue_speed_kmh = 20.0;
  double sample_interval_ms = 1.0;
  int num_tx = 2;
  int num_rx = 2;
  int num_resource_blocks = 52;       // grid width = 12 * resource blocks
  std::optional<int> num_subcarriers; // explicit override of the grid width
  double subcarrier_spacing_khz = 15.0;
  double delay_spread_ns = 100.0;
  int num_sinusoids = 16;
  std::string profile_file;           // empty: resolved against data dirs

  // [dataset]
  int history_len = 5;                // n
  int stride = 1;                     // k
  double snr_db = 20.0;               // noisy-scenario SNR
  int train_count = 90000;
  int test_count = 10000;
  double trace_duration_ms = 10416.0; // 10417 snapshots per trace
  int subcarriers_used = 624;         // traces generated per seed

  // [models]
  int hidden_size = 150;
  int mlp_layers = 6;
  int rnn_layers = 3;
  int cnn_fc_dim = 64;
  int tf_dim = 64;
  int tf_heads = 4;
  int tf_layers = 2;
  int tf_ffn = 128;
  std::string activation = "relu";
  std::string pooling = "mean";
  double learning_rate = 1e-3;
  int batch_size = 256;
  int kalman_ar_order = 5;

  // [plan]
  std::vector<int> horizons = {1, 2, 3, 5, 8, 10, 15, 20, 30, 40};
  std::vector<std::string> scenarios = {"clean", "noisy"};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  int epochs = 200;
  std::vector<std::string> models = {"naive", "kalman",      "mlp", "cnn",
                                     "lstm",  "gru", "transformer"};

  // [output]
  std::string out_dir = "out";

  std::uint64_t master_seed = 1;  // --seed flag
  std::vector<std::string> warnings;

  int grid_subcarriers() const {
    return num_subcarriers ? *num_subcarriers : 12 * num_resource_blocks;
  }

  FadingConfig fading(std::uint64_t trace_seed) const {
    FadingConfig f;
    f.carrier_freq_hz = carrier_freq_ghz * 1e9;
    f.ue_speed_mps = ue_speed_kmh / 3.6;
    f.sample_interval_s = sample_interval_ms * 1e-3;
    f.num_tx = num_tx;
    f.num_rx = num_rx;
    f.num_subcarriers = grid_subcarriers();
    f.subcarrier_spacing_hz = subcarrier_spacing_khz * 1e3;
    f.num_sinusoids = num_sinusoids;
    f.rng_seed = trace_seed;
    return f;
  }

  ModelConfig model(const std::string& architecture, std::uint64_t init_seed) const {
    ModelConfig m;
    m.architecture = architecture;
    m.input_steps = history_len;
    m.frame_dim = num_tx * num_rx * 2;
    m.output_dim = m.frame_dim;
    m.hidden_size = hidden_size;
    m.mlp_layers = mlp_layers;
    m.rnn_layers = rnn_layers;
    m.cnn_fc_dim = cnn_fc_dim;
    m.tf_dim = tf_dim;
    m.tf_heads = tf_heads;
    m.tf_layers = tf_layers;
    m.tf_ffn = tf_ffn;
    m.activation = activation;
    m.pooling = pooling;
    m.init_seed = init_seed;
    return m;
  }

  void validate() const {
    fading(0).validate();  // carrier/speed/grid/Nyquist checks
    if (history_len < 1 || stride < 1)
      throw Error("config: dataset.history_len and dataset.stride must be >= 1");
    if (!std::isfinite(snr_db)) throw Error("config: dataset.snr_db must be finite");
    if (train_count < 0 || test_count < 1)
      throw Error("config: dataset.train_count/test_count out of range");
    if (subcarriers_used < 1 || subcarriers_used > grid_subcarriers())
      throw Error("config: dataset.subcarriers_used must be within the subcarrier grid");
    if (trace_duration_ms <= 0) throw Error("config: dataset.trace_duration_ms must be > 0");
    if (horizons.empty()) throw Error("config: plan.horizons must not be empty");
    for (int h : horizons)
      if (h < 1) throw Error("config: plan.horizons entries must be >= 1");
    if (scenarios.empty()) throw Error("config: plan.scenarios must not be empty");
    for (const auto& s : scenarios)
      if (s != "clean" && s != "noisy")
        throw Error("config: plan.scenarios entries must be clean|noisy, got `" + s + "`");
    if (seeds.empty()) throw Error("config: plan.seeds must not be empty");
    if (epochs < 0) throw Error("config: plan.epochs must be >= 0");
    if (models.empty()) throw Error("config: plan.models must not be empty");
    for (const auto& m : models)
      if (m != "naive" && m != "kalman" && m != "mlp" && m != "cnn" && m != "lstm" &&
          m != "gru" && m != "transformer")
        throw Error("config: plan.models entry `" + m + "` unknown");
    if (learning_rate <= 0 || batch_size < 1)
      throw Error("config: models.learning_rate/batch_size out of range");
    if (kalman_ar_order < 1) throw Error("config: models.kalman_ar_order must be >= 1");
    model("gru", 0).validate();
  }
};

// Applies a scale preset. `paper` matches the published experiment sizes and
// is the default; `desk` is the laptop-scale protocol; `smoke` is a
// minutes-scale shakeout.
inline void apply_scale(RunConfig& cfg, const std::string& scale) {
  if (scale == "paper") {
    cfg.train_count = 90000;
    cfg.test_count = 10000;
    cfg.epochs = 200;
    cfg.subcarriers_used = 624;
    cfg.trace_duration_ms = 10416.0;
  } else if (scale == "desk") {
    cfg.train_count = 20000;
    cfg.test_count = 2000;
    cfg.epochs = 50;
    cfg.subcarriers_used = 96;
    cfg.trace_duration_ms = 599.0;
    cfg.horizons = {1, 2, 3, 5, 8, 10, 15, 20, 30, 40};
  } else if (scale == "smoke") {
    cfg.train_count = 2000;
    cfg.test_count = 500;
    cfg.epochs = 8;
    cfg.subcarriers_used = 16;
    cfg.trace_duration_ms = 299.0;
    cfg.horizons = {1, 10, 40};
    cfg.seeds = {1};
  } else {
    throw Error("unknown scale `" + scale + "` (expected paper|desk|smoke)");
  }
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, int line, const std::string& value);

template <>
inline double parse_number<double>(const std::string& key, int line, const std::string& value) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw Error("config line " + std::to_string(line) + ": key `" + key +
                "` expects a number, got `" + value + "`");
  }
  if (pos != value.size())
    throw Error("config line " + std::to_string(line) + ": key `" + key +
                "` expects a number, got `" + value + "`");
  return v;
}

template <>
inline int parse_number<int>(const std::string& key, int line, const std::string& value) {
  const double v = parse_number<double>(key, line, value);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw Error("config line " + std::to_string(line) + ": key `" + key +
                "` expects an integer, got `" + value + "`");
  return i;
}

template <>
inline std::uint64_t parse_number<std::uint64_t>(const std::string& key, int line,
                                                 const std::string& value) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error("config line " + std::to_string(line) + ": key `" + key +
                "` expects an unsigned integer, got `" + value + "`");
  }
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(value);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace detail

// Parses the documented key=value format. Unknown keys and malformed values
// are rejected with the key name and line number.
inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "channel" && section != "dataset" && section != "models" &&
          section != "plan" && section != "output")
        throw Error("config line " + std::to_string(lineno) + ": unknown section [" +
                    section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const std::string qual = section.empty() ? key : section + "." + key;

    auto num = [&](auto& field) {
      field = detail::parse_number<std::decay_t<decltype(field)>>(qual, lineno, value);
    };

    if (qual == "channel.carrier_freq_ghz") num(cfg.carrier_freq_ghz);
    else if (qual == "channel.ue_speed_kmh") num(cfg.ue_speed_kmh);
    else if (qual == "channel.sample_interval_ms") num(cfg.sample_interval_ms);
    else if (qual == "channel.num_tx") num(cfg.num_tx);
    else if (qual == "channel.num_rx") num(cfg.num_rx);
    else if (qual == "channel.num_resource_blocks") num(cfg.num_resource_blocks);
    else if (qual == "channel.num_subcarriers") {
      int v = 0;
      v = detail::parse_number<int>(qual, lineno, value);
      cfg.num_subcarriers = v;
    } else if (qual == "channel.subcarrier_spacing_khz") num(cfg.subcarrier_spacing_khz);
    else if (qual == "channel.delay_spread_ns") num(cfg.delay_spread_ns);
    else if (qual == "channel.num_sinusoids") num(cfg.num_sinusoids);
    else if (qual == "channel.profile_file") cfg.profile_file = value;
    else if (qual == "dataset.history_len") num(cfg.history_len);
    else if (qual == "dataset.stride") num(cfg.stride);
    else if (qual == "dataset.snr_db") num(cfg.snr_db);
    else if (qual == "dataset.train_count") num(cfg.train_count);
    else if (qual == "dataset.test_count") num(cfg.test_count);
    else if (qual == "dataset.trace_duration_ms") num(cfg.trace_duration_ms);
    else if (qual == "dataset.subcarriers_used") num(cfg.subcarriers_used);
    else if (qual == "models.hidden_size") num(cfg.hidden_size);
    else if (qual == "models.mlp_layers") num(cfg.mlp_layers);
    else if (qual == "models.rnn_layers") num(cfg.rnn_layers);
    else if (qual == "models.cnn_fc_dim") num(cfg.cnn_fc_dim);
    else if (qual == "models.tf_dim") num(cfg.tf_dim);
    else if (qual == "models.tf_heads") num(cfg.tf_heads);
    else if (qual == "models.tf_layers") num(cfg.tf_layers);
    else if (qual == "models.tf_ffn") num(cfg.tf_ffn);
    else if (qual == "models.activation") cfg.activation = value;
    else if (qual == "models.pooling") cfg.pooling = value;
    else if (qual == "models.learning_rate") num(cfg.learning_rate);
    else if (qual == "models.batch_size") num(cfg.batch_size);
    else if (qual == "models.kalman_ar_order") num(cfg.kalman_ar_order);
    else if (qual == "plan.epochs") num(cfg.epochs);
    else if (qual == "plan.horizons") {
      cfg.horizons.clear();
      for (const auto& s : detail::split_list(value))
        cfg.horizons.push_back(detail::parse_number<int>(qual, lineno, s));
    } else if (qual == "plan.scenarios") {
      cfg.scenarios = detail::split_list(value);
    } else if (qual == "plan.seeds") {
      cfg.seeds.clear();
      for (const auto& s : detail::split_list(value))
        cfg.seeds.push_back(detail::parse_number<std::uint64_t>(qual, lineno, s));
    } else if (qual == "plan.models") {
      cfg.models = detail::split_list(value);
    } else if (qual == "output.dir") {
      cfg.out_dir = value;
    } else {
      throw Error("config line " + std::to_string(lineno) + ": unknown key `" + qual + "`");
    }
  }
  if (cfg.ue_speed_kmh == 0.0)
    cfg.warnings.push_back("ue_speed_kmh = 0: static channel, every horizon is trivial");
  cfg.validate();
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

// Fully-resolved echo of every setting, written beside run outputs.
inline std::string config_echo(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  auto list_int = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  out << "[channel]\n";
  out << "carrier_freq_ghz = " << cfg.carrier_freq_ghz << "\n";
  out << "ue_speed_kmh = " << cfg.ue_speed_kmh << "\n";
  out << "sample_interval_ms = " << cfg.sample_interval_ms << "\n";
  out << "num_tx = " << cfg.num_tx << "\n";
  out << "num_rx = " << cfg.num_rx << "\n";
  out << "num_resource_blocks = " << cfg.num_resource_blocks << "\n";
  out << "num_subcarriers = " << cfg.grid_subcarriers() << "\n";
  out << "subcarrier_spacing_khz = " << cfg.subcarrier_spacing_khz << "\n";
  out << "delay_spread_ns = " << cfg.delay_spread_ns << "\n";
  out << "num_sinusoids = " << cfg.num_sinusoids << "\n";
  out << "profile_file = " << cfg.profile_file << "\n";
  out << "[dataset]\n";
  out << "history_len = " << cfg.history_len << "\n";
  out << "stride = " << cfg.stride << "\n";
  out << "snr_db = " << cfg.snr_db << "\n";
  out << "train_count = " << cfg.train_count << "\n";
  out << "test_count = " << cfg.test_count << "\n";
  out << "trace_duration_ms = " << cfg.trace_duration_ms << "\n";
  out << "subcarriers_used = " << cfg.subcarriers_used << "\n";
  out << "[models]\n";
  out << "hidden_size = " << cfg.hidden_size << "\n";
  out << "mlp_layers = " << cfg.mlp_layers << "\n";
  out << "rnn_layers = " << cfg.rnn_layers << "\n";
  out << "cnn_fc_dim = " << cfg.cnn_fc_dim << "\n";
  out << "tf_dim = " << cfg.tf_dim << "\n";
  out << "tf_heads = " << cfg.tf_heads << "\n";
  out << "tf_layers = " << cfg.tf_layers << "\n";
  out << "tf_ffn = " << cfg.tf_ffn << "\n";
  out << "activation = " << cfg.activation << "\n";
  out << "pooling = " << cfg.pooling << "\n";
  out << "learning_rate = " << cfg.learning_rate << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  out << "kalman_ar_order = " << cfg.kalman_ar_order << "\n";
  out << "[plan]\n";
  out << "horizons = " << list_int(cfg.horizons) << "\n";
  std::string scen;
  for (std::size_t i = 0; i < cfg.scenarios.size(); ++i)
    scen += (i ? "," : "") + cfg.scenarios[i];
  out << "scenarios = " << scen << "\n";
  std::string seeds;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
    seeds += (i ? "," : "") + std::to_string(cfg.seeds[i]);
  out << "seeds = " << seeds << "\n";
  out << "epochs = " << cfg.epochs << "\n";
  std::string models;
  for (std::size_t i = 0; i < cfg.models.size(); ++i)
    models += (i ? "," : "") + cfg.models[i];
  out << "models = " << models << "\n";
  out << "[output]\n";
  out << "dir = " << cfg.out_dir << "\n";
  return out.str();
}

// Stable hash over everything that defines the experiment (not the output
// location); keys the per-cell manifests.
inline std::string plan_hash(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.out_dir = "";
  std::string s = config_echo(c);
  s += "|master_seed=" + std::to_string(cfg.master_seed);
  const std::uint32_t h1 = crc32(s);
  const std::uint32_t h2 = crc32(s + "|second");
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%08x%08x", h1, h2);
  return buf;
}

}  // namespace seer
