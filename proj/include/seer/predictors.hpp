#pragma once

// The seven channel predictors behind one interface: naive, Kalman, and the
// five trainable architectures. The Kalman predictor is a per-link scalar
// complex filter in companion form, fitted by Yule-Walker (Levinson-Durbin)
// on empirical autocorrelation.

#include <Eigen/Dense>
#include <complex>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "seer/channel.hpp"
#include "seer/common.hpp"
#include "seer/dataset.hpp"
#include "seer/nn.hpp"

namespace seer {

// The n most recent snapshots (oldest first), each a row-major num_tx x
// num_rx complex matrix.
struct History {
  int num_tx = 2;
  int num_rx = 2;
  std::vector<std::vector<cplx>> snapshots;

  int num_links() const { return num_tx * num_rx; }
};

inline History history_from_features(const std::vector<float>& features, int steps,
                                     int num_tx, int num_rx) {
  const int links = num_tx * num_rx;
  if (features.size() != static_cast<std::size_t>(steps) * links * 2)
    throw Error("history_from_features: feature length mismatch");
  History h;
  h.num_tx = num_tx;
  h.num_rx = num_rx;
  h.snapshots.resize(steps);
  for (int s = 0; s < steps; ++s) {
    h.snapshots[s].resize(links);
    for (int l = 0; l < links; ++l)
      h.snapshots[s][l] = cplx(features[(static_cast<std::size_t>(s) * links + l) * 2],
                               features[(static_cast<std::size_t>(s) * links + l) * 2 + 1]);
  }
  return h;
}

inline std::vector<float> snapshot_to_flat(const std::vector<cplx>& snapshot) {
  std::vector<float> out(snapshot.size() * 2);
  for (std::size_t l = 0; l < snapshot.size(); ++l) {
    out[2 * l] = static_cast<float>(snapshot[l].real());
    out[2 * l + 1] = static_cast<float>(snapshot[l].imag());
  }
  return out;
}

inline std::vector<cplx> flat_to_snapshot(const std::vector<float>& flat) {
  if (flat.size() % 2 != 0) throw Error("flat_to_snapshot: odd length");
  std::vector<cplx> out(flat.size() / 2);
  for (std::size_t l = 0; l < out.size(); ++l) out[l] = cplx(flat[2 * l], flat[2 * l + 1]);
  return out;
}

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  virtual int horizon() const = 0;
  virtual bool trainable() const = 0;
  // Maps a history to the predicted snapshot (num_tx * num_rx complex).
  virtual std::vector<cplx> predict(const History& history) const = 0;
};

// Uses the most recent snapshot as the prediction for every horizon.
class NaivePredictor final : public Predictor {
 public:
  explicit NaivePredictor(int horizon) : horizon_(horizon) {}
  std::string name() const override { return "naive"; }
  int horizon() const override { return horizon_; }
  bool trainable() const override { return false; }
  std::vector<cplx> predict(const History& history) const override {
    if (history.snapshots.empty()) throw Error("naive predictor: empty history");
    return history.snapshots.back();
  }

 private:
  int horizon_;
};

// ---------------------------------------------------------------------------
// Kalman predictor.
// ---------------------------------------------------------------------------

// Complex biased autocorrelation r(0..max_lag) pooled over traces for one
// link. The biased estimator (dividing by the total sample count) keeps the
// sequence positive semidefinite, which in turn keeps Levinson-Durbin stable.
inline std::vector<cplx> link_autocorrelation(const std::vector<ChannelTrace>& traces,
                                              int link, int max_lag) {
  std::vector<cplx> r(max_lag + 1, cplx(0, 0));
  std::size_t total = 0;
  for (const auto& tr : traces) {
    const std::size_t T = tr.num_snapshots();
    total += T;
    for (int lag = 0; lag <= max_lag; ++lag)
      for (std::size_t t = lag; t < T; ++t)
        r[lag] += tr.at(t, link) * std::conj(tr.at(t - lag, link));
  }
  if (total <= static_cast<std::size_t>(max_lag))
    throw Error("kalman fit: not enough samples to estimate autocorrelation to lag " +
                std::to_string(max_lag));
  for (auto& v : r) v /= static_cast<double>(total);
  return r;
}

// Levinson-Durbin solution of the Yule-Walker equations for a complex AR(m)
// model. Returns coefficients a_1..a_m (prediction: sum_j a_j x_{t-j}) and
// the innovation variance.
struct ArFit {
  std::vector<cplx> coeffs;
  double innovation_var = 0.0;
};

inline ArFit yule_walker(const std::vector<cplx>& autocorr, int order) {
  if (static_cast<int>(autocorr.size()) < order + 1)
    throw Error("yule_walker: need autocorrelation to lag " + std::to_string(order));
  const double r0 = autocorr[0].real();
  if (!(r0 > 0)) throw Error("yule_walker: singular system (non-positive power)");
  std::vector<cplx> a;  // current coefficients
  double err = r0;
  for (int m = 1; m <= order; ++m) {
    cplx acc = autocorr[m];
    for (int j = 1; j < m; ++j) acc -= a[j - 1] * autocorr[m - j];
    if (!(err > 0)) throw Error("yule_walker: singular system at order " + std::to_string(m));
    const cplx k = acc / err;
    if (std::abs(k) >= 1.0 + 1e-9)
      throw Error("yule_walker: unstable fit (reflection coefficient " +
                  std::to_string(std::abs(k)) + " at order " + std::to_string(m) + ")");
    std::vector<cplx> next(m);
    for (int j = 0; j < m - 1; ++j) next[j] = a[j] - k * std::conj(a[m - 2 - j]);
    next[m - 1] = k;
    a = std::move(next);
    err *= (1.0 - std::norm(k));
  }
  ArFit fit;
  fit.coeffs = std::move(a);
  fit.innovation_var = std::max(err, 0.0);
  return fit;
}

// Fitted per-link AR model plus noise variances; the immutable part of the
// Kalman predictor.
struct KalmanLinkModel {
  std::vector<cplx> coeffs;      // a_1..a_m
  std::vector<cplx> autocorr;    // r(0..m), measurement-noise corrected
  double innovation_var = 0.0;
  double measurement_var = 0.0;  // complex variance of the measurement noise
};

// Scalar complex Kalman filter over the companion-form state
// x_t = [h_t, h_{t-1}, ..., h_{t-m+1}].
class ScalarKalman {
 public:
  explicit ScalarKalman(const KalmanLinkModel& model)
      : m_(static_cast<int>(model.coeffs.size())), model_(&model) {
    F_ = Eigen::MatrixXcd::Zero(m_, m_);
    for (int j = 0; j < m_; ++j) F_(0, j) = model.coeffs[j];
    for (int i = 1; i < m_; ++i) F_(i, i - 1) = 1.0;
    Q_ = Eigen::MatrixXcd::Zero(m_, m_);
    Q_(0, 0) = model.innovation_var;
    reset_stationary();
  }

  // Prior with the process's unconditional covariance (Hermitian Toeplitz of
  // the fitted autocorrelation) and zero mean.
  void reset_stationary() {
    x_ = Eigen::VectorXcd::Zero(m_);
    P_ = Eigen::MatrixXcd(m_, m_);
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < m_; ++j) {
        const int k = j - i;
        P_(i, j) = k >= 0 ? model_->autocorr[k] : std::conj(model_->autocorr[-k]);
      }
    last_trace_delta_ = std::numeric_limits<double>::infinity();
  }

  // One measurement: time update then measurement update.
  void update(cplx z) {
    const Eigen::VectorXcd x_prior = F_ * x_;
    const Eigen::MatrixXcd P_prior = F_ * P_ * F_.adjoint() + Q_;
    const double S = P_prior(0, 0).real() + model_->measurement_var;
    const Eigen::VectorXcd K = P_prior.col(0) / S;
    x_ = x_prior + K * (z - x_prior(0));
    Eigen::MatrixXcd P_new = P_prior - K * P_prior.row(0);
    // keep Hermitian against numerical drift
    P_new = 0.5 * (P_new + P_new.adjoint().eval());
    last_trace_delta_ = std::abs(P_new.trace().real() - P_.trace().real());
    P_ = P_new;
  }

  // Roll-forward: one-step predictions repeated p times, each prediction fed
  // back as the next pseudo-measurement (zero innovation, so no covariance
  // information enters from real data).
  cplx predict_ahead(int p) const {
    Eigen::VectorXcd x = x_;
    for (int i = 0; i < p; ++i) {
      const Eigen::VectorXcd x_prior = F_ * x;
      const cplx pseudo = x_prior(0);   // feeding back pseudo = H x_prior
      x = x_prior;                      // innovation pseudo - H x_prior = 0
      x(0) = pseudo;
    }
    return x(0);
  }

  double trace_delta() const { return last_trace_delta_; }
  const Eigen::VectorXcd& state() const { return x_; }

  // Steady-state a-priori covariance by Riccati fixed-point iteration.
  Eigen::MatrixXcd steady_state_prior_covariance(int max_iter = 20000,
                                                 double tol = 1e-12) const {
    Eigen::MatrixXcd P = Q_;
    for (int it = 0; it < max_iter; ++it) {
      const double S = P(0, 0).real() + model_->measurement_var;
      const Eigen::VectorXcd K = P.col(0) / S;
      const Eigen::MatrixXcd Ppost = P - K * P.row(0);
      const Eigen::MatrixXcd Pnext = F_ * Ppost * F_.adjoint() + Q_;
      const double delta = (Pnext - P).cwiseAbs().maxCoeff();
      P = Pnext;
      if (delta < tol) break;
    }
    return P;
  }

 private:
  int m_;
  const KalmanLinkModel* model_;
  Eigen::MatrixXcd F_, Q_, P_;
  Eigen::VectorXcd x_;
  double last_trace_delta_ = std::numeric_limits<double>::infinity();
};

class KalmanPredictor final : public Predictor {
 public:
  KalmanPredictor(std::vector<KalmanLinkModel> links, int horizon, int num_tx, int num_rx)
      : links_(std::move(links)), horizon_(horizon), num_tx_(num_tx), num_rx_(num_rx) {}

  std::string name() const override { return "kalman"; }
  int horizon() const override { return horizon_; }
  bool trainable() const override { return false; }

  const std::vector<KalmanLinkModel>& links() const { return links_; }
  int ar_order() const { return static_cast<int>(links_.at(0).coeffs.size()); }

  // Uniform-interface path: a fresh filter per link is warmed with the
  // stationary prior and the history snapshots, then rolled forward.
  std::vector<cplx> predict(const History& history) const override {
    if (history.snapshots.empty()) throw Error("kalman predictor: empty history");
    const int links = history.num_links();
    if (links != static_cast<int>(links_.size()))
      throw Error("kalman predictor: history has " + std::to_string(links) +
                  " links, model has " + std::to_string(links_.size()));
    std::vector<cplx> out(links);
    for (int l = 0; l < links; ++l) {
      ScalarKalman kf(links_[l]);
      for (const auto& snap : history.snapshots) kf.update(snap[l]);
      out[l] = kf.predict_ahead(horizon_);
    }
    return out;
  }

 private:
  std::vector<KalmanLinkModel> links_;
  int horizon_;
  int num_tx_, num_rx_;
};

// Fits one AR model per link from measurement traces. `measurement_var` is
// the known injected complex noise variance (0 for clean data); it is
// subtracted from the lag-0 autocorrelation so the AR model describes the
// underlying channel rather than the noise.
inline KalmanPredictor kalman_fit(const std::vector<ChannelTrace>& traces, int ar_order,
                                  double measurement_var, int horizon) {
  if (traces.empty()) throw Error("kalman fit: no traces");
  if (ar_order < 1) throw Error("kalman fit: ar_order must be >= 1");
  const int links = traces[0].num_links();
  std::vector<KalmanLinkModel> models;
  for (int l = 0; l < links; ++l) {
    auto r = link_autocorrelation(traces, l, ar_order);
    r[0] -= measurement_var;
    if (!(r[0].real() > 0))
      throw Error("kalman fit: measurement noise exceeds signal power at lag 0");
    const auto fit = yule_walker(r, ar_order);
    KalmanLinkModel m;
    m.coeffs = fit.coeffs;
    m.autocorr = std::move(r);
    m.innovation_var = fit.innovation_var;
    m.measurement_var = measurement_var;
    models.push_back(std::move(m));
  }
  return KalmanPredictor(std::move(models), horizon, traces[0].num_tx, traces[0].num_rx);
}

// Text sidecar with the fitted coefficients and noise variances.
inline void save_kalman_sidecar(const KalmanPredictor& kf, const std::string& path) {
  std::ostringstream out;
  out.precision(17);
  out << "# kalman predictor sidecar v1\n";
  out << "ar_order=" << kf.ar_order() << "\n";
  out << "horizon=" << kf.horizon() << "\n";
  out << "links=" << kf.links().size() << "\n";
  for (std::size_t l = 0; l < kf.links().size(); ++l) {
    const auto& m = kf.links()[l];
    out << "link " << l << "\n";
    out << "innovation_var=" << m.innovation_var << "\n";
    out << "measurement_var=" << m.measurement_var << "\n";
    for (const auto& c : m.coeffs) out << "coeff " << c.real() << " " << c.imag() << "\n";
    for (const auto& r : m.autocorr) out << "autocorr " << r.real() << " " << r.imag() << "\n";
  }
  write_text_file(path, out.str());
}

inline KalmanPredictor load_kalman_sidecar(const std::string& path, int num_tx, int num_rx) {
  std::istringstream in(read_text_file(path));
  std::string line;
  int ar_order = 0, horizon = 0, nlinks = 0;
  std::vector<KalmanLinkModel> models;
  KalmanLinkModel* cur = nullptr;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (line.rfind("ar_order=", 0) == 0)
      ar_order = std::stoi(line.substr(9));
    else if (line.rfind("horizon=", 0) == 0)
      horizon = std::stoi(line.substr(8));
    else if (line.rfind("links=", 0) == 0)
      nlinks = std::stoi(line.substr(6));
    else if (key == "link") {
      models.emplace_back();
      cur = &models.back();
    } else if (cur && line.rfind("innovation_var=", 0) == 0)
      cur->innovation_var = std::stod(line.substr(15));
    else if (cur && line.rfind("measurement_var=", 0) == 0)
      cur->measurement_var = std::stod(line.substr(16));
    else if (cur && key == "coeff") {
      double re = 0, im = 0;
      ls >> re >> im;
      cur->coeffs.emplace_back(re, im);
    } else if (cur && key == "autocorr") {
      double re = 0, im = 0;
      ls >> re >> im;
      cur->autocorr.emplace_back(re, im);
    }
  }
  if (static_cast<int>(models.size()) != nlinks || models.empty())
    throw Error("kalman sidecar: malformed file " + path);
  for (const auto& m : models)
    if (static_cast<int>(m.coeffs.size()) != ar_order)
      throw Error("kalman sidecar: coefficient count mismatch in " + path);
  return KalmanPredictor(std::move(models), horizon, num_tx, num_rx);
}

// ---------------------------------------------------------------------------
// Trainable predictors.
// ---------------------------------------------------------------------------

class NNPredictor final : public Predictor {
 public:
  NNPredictor(std::unique_ptr<Model<float>> model, int horizon)
      : model_(std::move(model)), horizon_(horizon) {}

  std::string name() const override { return model_->config().architecture; }
  int horizon() const override { return horizon_; }
  bool trainable() const override { return true; }

  Model<float>& model() { return *model_; }
  const Model<float>& model() const { return *model_; }

  std::vector<cplx> predict(const History& history) const override {
    const auto& cfg = model_->config();
    if (static_cast<int>(history.snapshots.size()) != cfg.input_steps)
      throw Error("nn predictor: history has " + std::to_string(history.snapshots.size()) +
                  " snapshots, model expects " + std::to_string(cfg.input_steps));
    std::vector<float> features;
    features.reserve(cfg.feature_len());
    for (const auto& snap : history.snapshots) {
      const auto flat = snapshot_to_flat(snap);
      features.insert(features.end(), flat.begin(), flat.end());
    }
    const auto out = predict_flat_batch(features, 1);
    return flat_to_snapshot(out);
  }

  // Batched forward on raw feature rows; returns (batch * output_dim) floats.
  std::vector<float> predict_flat_batch(const std::vector<float>& features,
                                        int batch) const {
    const auto& cfg = model_->config();
    if (features.size() != static_cast<std::size_t>(batch) * cfg.feature_len())
      throw Error("nn predictor: feature buffer does not match batch size");
    Tape<float> tape;
    const auto x = tape.input({batch, cfg.feature_len()}, features);
    const auto y = const_cast<Model<float>&>(*model_).forward(tape, x, batch);
    return tape.val(y);
  }

 private:
  std::unique_ptr<Model<float>> model_;
  int horizon_;
};

// Builds a trainable predictor, checking the feature geometry against the
// dataset's window spec.
inline std::unique_ptr<NNPredictor> build_nn_predictor(const ModelConfig& cfg, int horizon,
                                                       const WindowSpec& window_spec,
                                                       int num_tx, int num_rx) {
  cfg.validate();
  if (cfg.input_steps != window_spec.history_len ||
      cfg.frame_dim != num_tx * num_rx * 2 || cfg.output_dim != num_tx * num_rx * 2)
    throw Error("build_nn_predictor: model geometry (steps " +
                std::to_string(cfg.input_steps) + ", frame " + std::to_string(cfg.frame_dim) +
                ") does not match dataset windows (n " +
                std::to_string(window_spec.history_len) + ", frame " +
                std::to_string(num_tx * num_rx * 2) + ")");
  return std::make_unique<NNPredictor>(build_model<float>(cfg), horizon);
}

}  // namespace seer
