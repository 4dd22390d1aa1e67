#pragma once

// Tapped-delay-line power-delay profile: loading, validation, normalization.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "seer/common.hpp"

namespace seer {

struct Tap {
  double delay_s = 0.0;   // absolute delay in seconds
  double power = 0.0;     // linear power, after normalization sums to 1
};

// A delay-power profile. Delays are strictly increasing and powers sum to 1
// after `normalize()`.
struct TapProfile {
  std::vector<Tap> taps;
  double delay_spread_s = 100e-9;

  std::size_t size() const { return taps.size(); }

  double total_power() const {
    double s = 0.0;
    for (const auto& t : taps) s += t.power;
    return s;
  }

  void validate() const {
    if (taps.empty()) throw Error("tap profile: no taps");
    for (std::size_t i = 0; i < taps.size(); ++i) {
      if (!(taps[i].power > 0.0)) throw Error("tap profile: tap power must be > 0");
      if (!(taps[i].delay_s >= 0.0)) throw Error("tap profile: tap delay must be >= 0");
      if (i > 0 && !(taps[i].delay_s > taps[i - 1].delay_s))
        throw Error("tap profile: delays must be strictly increasing");
    }
  }

  void normalize() {
    const double s = total_power();
    if (!(s > 0.0)) throw Error("tap profile: total power must be positive");
    for (auto& t : taps) t.power /= s;
  }
};

// Parses the plain-text profile format: one `<normalized_delay> <power_dB>`
// line per tap, `#` comments, optional `delay_spread_ns=<float>` header.
// Normalized delays are scaled by the delay spread; powers are converted
// from dB to linear and normalized to unit total power; taps are sorted by
// delay.
inline TapProfile parse_tap_profile(const std::string& text,
                                    double delay_spread_override_s = -1.0) {
  TapProfile profile;
  double delay_spread_ns = 100.0;
  std::vector<std::pair<double, double>> raw;  // (normalized delay, power dB)

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r\n");
    line = line.substr(b, e - b + 1);

    if (line.rfind("delay_spread_ns=", 0) == 0) {
      try {
        delay_spread_ns = std::stod(line.substr(16));
      } catch (const std::exception&) {
        throw Error("tap profile line " + std::to_string(lineno) + ": bad delay_spread_ns");
      }
      continue;
    }
    std::istringstream ls(line);
    double d = 0.0, p_db = 0.0;
    if (!(ls >> d >> p_db))
      throw Error("tap profile line " + std::to_string(lineno) +
                  ": expected `<normalized_delay> <power_dB>`");
    raw.emplace_back(d, p_db);
  }
  if (raw.empty()) throw Error("tap profile: no taps found");

  if (delay_spread_override_s > 0.0)
    profile.delay_spread_s = delay_spread_override_s;
  else
    profile.delay_spread_s = delay_spread_ns * 1e-9;

  std::sort(raw.begin(), raw.end());
  for (const auto& [d, p_db] : raw)
    profile.taps.push_back({d * profile.delay_spread_s, std::pow(10.0, p_db / 10.0)});
  profile.normalize();
  profile.validate();
  return profile;
}

inline TapProfile load_tap_profile(const std::string& path,
                                   double delay_spread_override_s = -1.0) {
  return parse_tap_profile(read_text_file(path), delay_spread_override_s);
}

// Single tap at delay zero carrying all power: flat fading. Used by tests
// and as a degenerate configuration.
inline TapProfile flat_profile() {
  TapProfile p;
  p.taps = {{0.0, 1.0}};
  return p;
}

}  // namespace seer
