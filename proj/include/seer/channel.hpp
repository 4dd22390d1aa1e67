#pragma once

// Frequency-domain channel traces: converting tap-domain fading realizations
// into per-subcarrier MIMO channel sequences, plus pooled-statistics helpers.

#include <complex>
#include <cstdint>
#include <vector>

#include "seer/common.hpp"
#include "seer/fading.hpp"
#include "seer/tap_profile.hpp"

namespace seer {

using cplx = std::complex<double>;

// Time-ordered per-subcarrier channel sequence. Snapshot t, link (tx, rx) is
// at `values[t * num_links + tx * num_rx + rx]`; link order is tx-major.
struct ChannelTrace {
  int subcarrier_index = 0;
  int num_tx = 0;
  int num_rx = 0;
  double sample_interval_s = 0.0;
  std::vector<cplx> values;  // length num_snapshots * num_tx * num_rx

  int num_links() const { return num_tx * num_rx; }
  std::size_t num_snapshots() const {
    return num_links() == 0 ? 0 : values.size() / num_links();
  }
  cplx at(std::size_t t, int link) const { return values[t * num_links() + link]; }
  cplx at(std::size_t t, int tx, int rx) const { return at(t, tx * num_rx + rx); }

  // One snapshot as a row-major num_tx x num_rx complex matrix.
  std::vector<cplx> snapshot(std::size_t t) const {
    const auto* base = values.data() + t * num_links();
    return std::vector<cplx>(base, base + num_links());
  }
};

// Frequency response of one link's tap gains at one subcarrier:
// H_k(t) = sum_l g_l(t) * exp(-j * 2*pi * f_k * tau_l). Total power is
// preserved: E[|H_k|^2] = sum_l P_l.
inline std::vector<cplx> taps_to_frequency_response_link(
    const std::vector<std::vector<cplx>>& tap_gains, const TapProfile& profile,
    const FadingConfig& cfg, int subcarrier) {
  if (subcarrier < 0 || subcarrier >= cfg.num_subcarriers)
    throw Error("taps_to_frequency_response: subcarrier out of range");
  if (tap_gains.size() != profile.size())
    throw Error("taps_to_frequency_response: gain series count != tap count");
  const double f_k = cfg.subcarrier_offset_hz(subcarrier);
  std::vector<cplx> phase(profile.size());
  for (std::size_t l = 0; l < profile.size(); ++l) {
    const double a = -kTwoPi * f_k * profile.taps[l].delay_s;
    phase[l] = cplx(std::cos(a), std::sin(a));
  }
  const std::size_t n = tap_gains.empty() ? 0 : tap_gains[0].size();
  std::vector<cplx> h(n, cplx(0.0, 0.0));
  for (std::size_t l = 0; l < profile.size(); ++l) {
    if (tap_gains[l].size() != n)
      throw Error("taps_to_frequency_response: ragged gain series");
    const cplx p = phase[l];
    for (std::size_t t = 0; t < n; ++t) h[t] += tap_gains[l][t] * p;
  }
  return h;
}

// Builds the full multi-link trace for one subcarrier from per-link tap
// gains (link-major: gains_per_link[link][tap][t]).
inline ChannelTrace taps_to_frequency_response(
    const std::vector<std::vector<std::vector<cplx>>>& gains_per_link,
    const TapProfile& profile, const FadingConfig& cfg, int subcarrier) {
  if (static_cast<int>(gains_per_link.size()) != cfg.num_links())
    throw Error("taps_to_frequency_response: expected one gain set per link");
  ChannelTrace trace;
  trace.subcarrier_index = subcarrier;
  trace.num_tx = cfg.num_tx;
  trace.num_rx = cfg.num_rx;
  trace.sample_interval_s = cfg.sample_interval_s;
  std::vector<std::vector<cplx>> link_h(cfg.num_links());
  for (int link = 0; link < cfg.num_links(); ++link)
    link_h[link] = taps_to_frequency_response_link(gains_per_link[link], profile, cfg, subcarrier);
  const std::size_t n = link_h[0].size();
  trace.values.resize(n * cfg.num_links());
  for (std::size_t t = 0; t < n; ++t)
    for (int link = 0; link < cfg.num_links(); ++link)
      trace.values[t * cfg.num_links() + link] = link_h[link][t];
  return trace;
}

inline std::size_t snapshots_for_duration(double duration_s, double sample_interval_s) {
  // Snapshots at t = 0, dt, ..., covering the duration inclusively:
  // 53 ms at 1 ms sampling -> 54 snapshots.
  return static_cast<std::size_t>(std::floor(duration_s / sample_interval_s + 1e-9)) + 1;
}

// Generates traces for `num_subcarriers_used` subcarriers (evenly spread over
// the configured grid). Each (subcarrier, link, tap) fading process has an
// independent seeded sub-stream, so traces are independent realizations and
// generation is embarrassingly parallel and deterministic per seed.
inline std::vector<ChannelTrace> generate_dataset_traces(const TapProfile& profile,
                                                         const FadingConfig& cfg,
                                                         double duration_s,
                                                         int num_subcarriers_used = -1) {
  cfg.validate();
  profile.validate();
  if (num_subcarriers_used <= 0) num_subcarriers_used = cfg.num_subcarriers;
  if (num_subcarriers_used > cfg.num_subcarriers)
    throw Error("generate_dataset_traces: more subcarriers requested than the grid has");
  const std::size_t num_snapshots = snapshots_for_duration(duration_s, cfg.sample_interval_s);
  if (num_snapshots < 1) throw Error("generate_dataset_traces: duration too short");

  std::vector<ChannelTrace> traces;
  traces.reserve(num_subcarriers_used);
  const int stride = cfg.num_subcarriers / num_subcarriers_used;
  for (int i = 0; i < num_subcarriers_used; ++i) {
    const int k = i * stride;
    std::vector<std::vector<std::vector<cplx>>> gains(cfg.num_links());
    for (int tx = 0; tx < cfg.num_tx; ++tx)
      for (int rx = 0; rx < cfg.num_rx; ++rx) {
        const int link = tx * cfg.num_rx + rx;
        gains[link].resize(profile.size());
        for (std::size_t l = 0; l < profile.size(); ++l) {
          TapGainProcess proc(profile.taps[l].power, cfg.max_doppler_hz(),
                              cfg.sample_interval_s, cfg.num_sinusoids,
                              derive_seed(cfg.rng_seed, "fading", k, tx, rx, l));
          gains[link][l] = proc.sample_series(0, num_snapshots);
        }
      }
    traces.push_back(taps_to_frequency_response(gains, profile, cfg, k));
  }
  return traces;
}

inline std::size_t total_complex_points(const std::vector<ChannelTrace>& traces) {
  std::size_t n = 0;
  for (const auto& t : traces) n += t.values.size();
  return n;
}

// Pooled first/second-order statistics of a set of traces, used by the
// distribution checks and the histogram export.
struct ComplexPoolStats {
  double mean_re = 0.0, mean_im = 0.0;
  double var_re = 0.0, var_im = 0.0;
  double corr_re_im = 0.0;   // Pearson correlation between Re and Im
  double mean_power = 0.0;   // E[|H|^2]
  std::size_t count = 0;

  double mean_abs() const { return std::hypot(mean_re, mean_im); }
};

inline ComplexPoolStats pooled_stats(const std::vector<ChannelTrace>& traces) {
  ComplexPoolStats s;
  double sre = 0, sim = 0, sre2 = 0, sim2 = 0, sreim = 0;
  std::size_t n = 0;
  for (const auto& tr : traces)
    for (const auto& v : tr.values) {
      sre += v.real();
      sim += v.imag();
      sre2 += v.real() * v.real();
      sim2 += v.imag() * v.imag();
      sreim += v.real() * v.imag();
      ++n;
    }
  if (n == 0) return s;
  const double dn = static_cast<double>(n);
  s.count = n;
  s.mean_re = sre / dn;
  s.mean_im = sim / dn;
  s.var_re = sre2 / dn - s.mean_re * s.mean_re;
  s.var_im = sim2 / dn - s.mean_im * s.mean_im;
  const double cov = sreim / dn - s.mean_re * s.mean_im;
  s.corr_re_im = cov / std::sqrt(s.var_re * s.var_im);
  s.mean_power = (sre2 + sim2) / dn;
  return s;
}

// Empirical complex autocorrelation of a scalar series at the given lags,
// normalized by the lag-0 value.
inline std::vector<double> normalized_autocorr(const std::vector<cplx>& series,
                                               const std::vector<int>& lags) {
  std::vector<double> out(lags.size(), 0.0);
  double r0 = 0.0;
  for (const auto& v : series) r0 += std::norm(v);
  r0 /= static_cast<double>(series.size());
  for (std::size_t i = 0; i < lags.size(); ++i) {
    const int lag = lags[i];
    double acc = 0.0;
    for (std::size_t t = 0; t + lag < series.size(); ++t)
      acc += (series[t] * std::conj(series[t + lag])).real();
    out[i] = acc / static_cast<double>(series.size() - lag) / r0;
  }
  return out;
}

// Cross-correlation magnitude at lag 0 between two zero-mean complex series.
inline double cross_correlation(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double pa = 0, pb = 0;
  cplx cross(0.0, 0.0);
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t t = 0; t < n; ++t) {
    cross += a[t] * std::conj(b[t]);
    pa += std::norm(a[t]);
    pb += std::norm(b[t]);
  }
  return std::abs(cross) / std::sqrt(pa * pb);
}

}  // namespace seer
