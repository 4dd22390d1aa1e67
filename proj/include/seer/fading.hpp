#pragma once

// Rayleigh fading tap-gain generation with a Jakes Doppler spectrum, via the
// Zheng-Xiao sum-of-sinusoids construction: structured arrival angles plus
// per-realization random rotation and phases. The ensemble autocorrelation of
// each complex gain is P * J0(2*pi*fd*tau).

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "seer/common.hpp"
#include "seer/tap_profile.hpp"

namespace seer {

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kTwoPi = 6.283185307179586476925286766559;

struct FadingConfig {
  double carrier_freq_hz = 2e9;
  double ue_speed_mps = 20.0 / 3.6;     // 20 km/h
  double sample_interval_s = 1e-3;
  int num_tx = 2;
  int num_rx = 2;
  int num_subcarriers = 624;            // 52 resource blocks * 12
  double subcarrier_spacing_hz = 15e3;
  int num_sinusoids = 16;
  std::uint64_t rng_seed = 1;

  double max_doppler_hz() const { return ue_speed_mps * carrier_freq_hz / kSpeedOfLight; }

  int num_links() const { return num_tx * num_rx; }

  // Subcarrier frequency offset from the carrier; the grid is centered on DC.
  double subcarrier_offset_hz(int k) const {
    return (static_cast<double>(k) - 0.5 * (num_subcarriers - 1)) * subcarrier_spacing_hz;
  }

  void validate() const {
    if (carrier_freq_hz <= 0) throw Error("fading config: carrier_freq_hz must be > 0");
    if (ue_speed_mps < 0) throw Error("fading config: ue_speed must be >= 0");
    if (sample_interval_s <= 0) throw Error("fading config: sample_interval must be > 0");
    if (num_tx < 1 || num_rx < 1) throw Error("fading config: antenna counts must be >= 1");
    if (num_subcarriers < 1) throw Error("fading config: num_subcarriers must be >= 1");
    if (subcarrier_spacing_hz <= 0)
      throw Error("fading config: subcarrier_spacing_hz must be > 0");
    if (num_sinusoids < 8)
      throw Error("fading config: num_sinusoids must be >= 8 for adequate Gaussianity");
    // Sampling must stay above the Nyquist rate of the fading process.
    const double fd_norm = max_doppler_hz() * sample_interval_s;
    if (!(fd_norm < 0.5))
      throw Error("fading config: max_doppler * sample_interval = " + std::to_string(fd_norm) +
                  " violates the Nyquist bound 0.5");
  }
};

// One tap's sum-of-sinusoids state. `sample_series` renders the complex gain
// sequence with a rotating-phasor recurrence (no per-sample trig calls).
class TapGainProcess {
 public:
  // `power` is the tap's linear power: E[|g(t)|^2] = power.
  TapGainProcess(double power, double max_doppler_hz, double sample_interval_s,
                 int num_sinusoids, std::uint64_t seed)
      : amplitude_(std::sqrt(power / num_sinusoids)) {
    if (num_sinusoids < 8) throw Error("tap gain process: num_sinusoids must be >= 8");
    Rng rng(seed);
    const double theta = rng.uniform(-3.14159265358979323846, 3.14159265358979323846);
    const int n = num_sinusoids;
    omega_re_.resize(n);
    omega_im_.resize(n);
    phase_re_.resize(n);
    phase_im_.resize(n);
    for (int i = 0; i < n; ++i) {
      // Structured angles covering one quadrant; the random rotation theta
      // de-biases the quadrature grid across realizations.
      const double alpha = (kTwoPi * (i + 1) - 3.14159265358979323846 + theta) / (4.0 * n);
      const double wd = kTwoPi * max_doppler_hz * sample_interval_s;
      omega_re_[i] = wd * std::cos(alpha);
      omega_im_[i] = wd * std::sin(alpha);
      phase_re_[i] = rng.uniform(-3.14159265358979323846, 3.14159265358979323846);
      phase_im_[i] = rng.uniform(-3.14159265358979323846, 3.14159265358979323846);
    }
  }

  // Gains at sample indices [t0, t0 + count).
  std::vector<std::complex<double>> sample_series(std::int64_t t0, std::size_t count) const {
    std::vector<std::complex<double>> out(count);
    const int n = static_cast<int>(omega_re_.size());
    std::vector<double> acc_re(count, 0.0), acc_im(count, 0.0);
    for (int i = 0; i < n; ++i) {
      // Real part uses cos-angle sinusoids, imaginary part sin-angle ones;
      // each contributes cos(omega*t + phase).
      accumulate_cos(acc_re, omega_re_[i], phase_re_[i] + omega_re_[i] * t0);
      accumulate_cos(acc_im, omega_im_[i], phase_im_[i] + omega_im_[i] * t0);
    }
    for (std::size_t t = 0; t < count; ++t)
      out[t] = std::complex<double>(amplitude_ * acc_re[t], amplitude_ * acc_im[t]);
    return out;
  }

 private:
  static void accumulate_cos(std::vector<double>& acc, double omega, double phase0) {
    // acc[t] += cos(omega * t + phase0) via complex rotation.
    std::complex<double> z(std::cos(phase0), std::sin(phase0));
    const std::complex<double> rot(std::cos(omega), std::sin(omega));
    const std::size_t renorm_every = 4096;
    for (std::size_t t = 0; t < acc.size(); ++t) {
      acc[t] += z.real();
      z *= rot;
      if ((t + 1) % renorm_every == 0) z /= std::abs(z);
    }
  }

  double amplitude_;
  std::vector<double> omega_re_, omega_im_;   // per-sinusoid angular steps (rad/sample)
  std::vector<double> phase_re_, phase_im_;
};

// Per-tap complex gain series for one (tx, rx) link. gains[l][t] is tap l at
// sample t. Deterministic given the seed; each tap gets an independent
// sub-stream.
inline std::vector<std::vector<std::complex<double>>> generate_tap_gains(
    const TapProfile& profile, const FadingConfig& cfg, std::size_t num_samples,
    std::uint64_t seed) {
  cfg.validate();
  profile.validate();
  if (num_samples < 1) throw Error("generate_tap_gains: num_samples must be >= 1");
  std::vector<std::vector<std::complex<double>>> gains(profile.size());
  for (std::size_t l = 0; l < profile.size(); ++l) {
    TapGainProcess proc(profile.taps[l].power, cfg.max_doppler_hz(), cfg.sample_interval_s,
                        cfg.num_sinusoids, derive_seed(seed, "tap", l));
    gains[l] = proc.sample_series(0, num_samples);
  }
  return gains;
}

}  // namespace seer
