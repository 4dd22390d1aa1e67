#pragma once

// Model architectures built on the tape: MLP, CNN, stacked LSTM/GRU, and a
// transformer encoder, plus the Adam optimizer and the CSPM checkpoint
// format. All five consume the same flat feature vector and emit the
// 8-real output.

#include <memory>
#include <string>
#include <vector>

#include "seer/common.hpp"
#include "seer/tensor.hpp"

namespace seer {

struct ModelConfig {
  std::string architecture = "gru";  // mlp | cnn | lstm | gru | transformer
  int input_steps = 5;               // history length n
  int frame_dim = 8;                 // N_t * N_r * 2
  int output_dim = 8;
  int hidden_size = 150;             // recurrent hidden state / MLP width
  int mlp_layers = 6;                // linear layers in the MLP
  int rnn_layers = 3;                // stacked recurrent layers
  std::vector<int> cnn_channels = {16, 24, 32, 32};
  int cnn_fc_dim = 64;
  int tf_dim = 64;
  int tf_heads = 4;
  int tf_layers = 2;
  int tf_ffn = 128;
  std::string activation = "relu";   // MLP/CNN linear-stack activation
  std::string pooling = "mean";      // mean | max
  std::uint64_t init_seed = 1;

  int feature_len() const { return input_steps * frame_dim; }

  void validate() const {
    if (architecture != "mlp" && architecture != "cnn" && architecture != "lstm" &&
        architecture != "gru" && architecture != "transformer")
      throw Error("model config: unknown architecture `" + architecture + "`");
    if (input_steps < 1 || frame_dim < 1 || output_dim < 1)
      throw Error("model config: bad input/output dims");
    if (hidden_size < 1) throw Error("model config: hidden_size must be >= 1");
    if (mlp_layers < 2) throw Error("model config: mlp needs at least 2 layers");
    if (rnn_layers < 1) throw Error("model config: rnn_layers must be >= 1");
    if (cnn_channels.empty()) throw Error("model config: cnn needs conv layers");
    if (tf_dim % tf_heads != 0)
      throw Error("model config: tf_dim " + std::to_string(tf_dim) +
                  " not divisible by tf_heads " + std::to_string(tf_heads));
    if (activation != "relu" && activation != "tanh")
      throw Error("model config: unknown activation `" + activation + "`");
    if (pooling != "mean" && pooling != "max")
      throw Error("model config: unknown pooling `" + pooling + "`");
  }
};

// Uniform init in +-1/sqrt(fan_in); biases start at zero.
template <typename T>
void init_uniform(Tensor<T>& t, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (auto& v : t.v) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
struct Dense {
  Tensor<T> w, b;

  Dense() = default;
  Dense(int in, int out, Rng& rng) : w({in, out}, true), b({out}, true) {
    init_uniform(w, in, rng);
  }

  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var x) {
    return tape.add_bias(tape.matmul(x, tape.leaf(w)), tape.leaf(b));
  }

  void collect(std::vector<Tensor<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

// Sinusoidal positional encoding: PE(pos, 2i) = sin(pos / 10000^(2i/dim)),
// PE(pos, 2i+1) = cos(same). Row-major (seq_len, dim).
template <typename T>
std::vector<T> positional_encoding(int seq_len, int dim) {
  std::vector<T> pe(static_cast<std::size_t>(seq_len) * dim);
  for (int pos = 0; pos < seq_len; ++pos)
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / dim);
      const double angle = pos / rate;
      pe[static_cast<std::size_t>(pos) * dim + i] =
          static_cast<T>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

// Multi-head self-attention: softmax(Q K^T / sqrt(dk)) V per head,
// concatenated and output-projected.
template <typename T>
struct MultiHeadAttention {
  int dim = 0, heads = 0;
  Dense<T> wq, wk, wv, wo;

  MultiHeadAttention() = default;
  MultiHeadAttention(int dim_, int heads_, Rng& rng)
      : dim(dim_), heads(heads_), wq(dim_, dim_, rng), wk(dim_, dim_, rng),
        wv(dim_, dim_, rng), wo(dim_, dim_, rng) {
    if (dim % heads != 0) throw Error("attention: dim not divisible by heads");
  }

  // x is (batch*seq, dim). If probs_out is non-null it receives the
  // attention-weight node (batch*heads, seq, seq).
  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var x, int batch, int seq,
                                typename Tape<T>::Var* probs_out = nullptr) {
    const int dk = dim / heads;
    const auto q = tape.split_heads(wq.forward(tape, x), batch, seq, heads);
    const auto k = tape.split_heads(wk.forward(tape, x), batch, seq, heads);
    const auto v = tape.split_heads(wv.forward(tape, x), batch, seq, heads);
    auto scores = tape.batched_matmul(q, k, /*transpose_b=*/true);
    scores = tape.affine(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk))),
                         T(0));
    const auto probs = tape.softmax_lastdim(scores);
    if (probs_out) *probs_out = probs;
    const auto ctx = tape.merge_heads(tape.batched_matmul(probs, v), batch, seq, heads);
    return wo.forward(tape, ctx);
  }

  void collect(std::vector<Tensor<T>*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

template <typename T>
class Model {
 public:
  virtual ~Model() = default;
  virtual const ModelConfig& config() const = 0;
  // x is (batch, feature_len); returns (batch, output_dim).
  virtual typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var x,
                                        int batch) = 0;
  virtual std::vector<Tensor<T>*> parameters() = 0;

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* t : parameters()) n += t->numel();
    return n;
  }
};

namespace detail {

template <typename T>
typename Tape<T>::Var activation(Tape<T>& tape, typename Tape<T>::Var x,
                                 const std::string& act) {
  return act == "tanh" ? tape.tanh_(x) : tape.relu_(x);
}

}  // namespace detail

template <typename T>
class MlpModel final : public Model<T> {
 public:
  explicit MlpModel(const ModelConfig& cfg) : cfg_(cfg) {
    Rng rng(derive_seed(cfg.init_seed, "mlp"));
    int in = cfg.feature_len();
    for (int l = 0; l < cfg.mlp_layers; ++l) {
      const int out = (l == cfg.mlp_layers - 1) ? cfg.output_dim : cfg.hidden_size;
      layers_.emplace_back(in, out, rng);
      in = out;
    }
  }

  const ModelConfig& config() const override { return cfg_; }

  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var x, int) override {
    auto v = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      v = layers_[l].forward(tape, v);
      if (l + 1 < layers_.size()) v = detail::activation(tape, v, cfg_.activation);
    }
    return v;
  }

  std::vector<Tensor<T>*> parameters() override {
    std::vector<Tensor<T>*> out;
    for (auto& l : layers_) l.collect(out);
    return out;
  }

 private:
  ModelConfig cfg_;
  std::vector<Dense<T>> layers_;
};

// The input image is (1, input_steps, frame_dim); conv+pool stages planned to
// fit the geometry (kernels and pools shrink to 1 when an axis is exhausted;
// pooling acts on the feature axis so the short time axis survives the
// stack), then two linear layers.
template <typename T>
class CnnModel final : public Model<T> {
 public:
  explicit CnnModel(const ModelConfig& cfg) : cfg_(cfg) {
    Rng rng(derive_seed(cfg.init_seed, "cnn"));
    int c = 1, h = cfg.input_steps, w = cfg.frame_dim;
    for (int f : cfg.cnn_channels) {
      Stage s;
      s.kh = std::min(2, h);
      s.kw = std::min(2, w);
      const int oh = h - s.kh + 1, ow = w - s.kw + 1;
      s.ph = 1;
      s.pw = std::min(2, ow);
      s.kernels = Tensor<T>({f, c, s.kh, s.kw}, true);
      init_uniform(s.kernels, c * s.kh * s.kw, rng);
      s.bias = Tensor<T>({f}, true);
      stages_.push_back(std::move(s));
      c = f;
      h = oh / stages_.back().ph;
      w = ow / stages_.back().pw;
      if (h < 1 || w < 1) throw Error("cnn: input too small for the conv stack");
    }
    flat_dim_ = c * h * w;
    fc1_ = Dense<T>(flat_dim_, cfg.cnn_fc_dim, rng);
    fc2_ = Dense<T>(cfg.cnn_fc_dim, cfg.output_dim, rng);
  }

  const ModelConfig& config() const override { return cfg_; }

  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var x, int batch) override {
    auto v = tape.reshape(x, {batch, 1, cfg_.input_steps, cfg_.frame_dim});
    const auto kind = cfg_.pooling == "max" ? Tape<T>::PoolKind::kMax
                                            : Tape<T>::PoolKind::kMean;
    for (auto& s : stages_) {
      v = tape.conv2d(v, tape.leaf(s.kernels), tape.leaf(s.bias), 1, 1);
      v = detail::activation(tape, v, cfg_.activation);
      v = tape.pool2d(v, s.ph, s.pw, kind);
    }
    v = tape.reshape(v, {batch, flat_dim_});
    v = detail::activation(tape, fc1_.forward(tape, v), cfg_.activation);
    return fc2_.forward(tape, v);
  }

  std::vector<Tensor<T>*> parameters() override {
    std::vector<Tensor<T>*> out;
    for (auto& s : stages_) {
      out.push_back(&s.kernels);
      out.push_back(&s.bias);
    }
    fc1_.collect(out);
    fc2_.collect(out);
    return out;
  }

 private:
  struct Stage {
    Tensor<T> kernels, bias;
    int kh = 1, kw = 1, ph = 1, pw = 1;
  };
  ModelConfig cfg_;
  std::vector<Stage> stages_;
  int flat_dim_ = 0;
  Dense<T> fc1_, fc2_;
};

// Stacked recurrent model; `kind` selects LSTM or GRU cells. The prediction
// head reads the top layer's hidden state after the final input step.
template <typename T>
class RnnModel final : public Model<T> {
 public:
  enum class Kind { kLstm, kGru };

  RnnModel(const ModelConfig& cfg, Kind kind) : cfg_(cfg), kind_(kind) {
    Rng rng(derive_seed(cfg.init_seed, kind == Kind::kLstm ? "lstm" : "gru"));
    const int gates = kind == Kind::kLstm ? 4 : 3;
    int in = cfg.frame_dim;
    for (int l = 0; l < cfg.rnn_layers; ++l) {
      LayerParams lp;
      lp.w_ih = Tensor<T>({in, gates * cfg.hidden_size}, true);
      lp.w_hh = Tensor<T>({cfg.hidden_size, gates * cfg.hidden_size}, true);
      lp.b_ih = Tensor<T>({gates * cfg.hidden_size}, true);
      lp.b_hh = Tensor<T>({gates * cfg.hidden_size}, true);
      init_uniform(lp.w_ih, in, rng);
      init_uniform(lp.w_hh, cfg.hidden_size, rng);
      layers_.push_back(std::move(lp));
      in = cfg.hidden_size;
    }
    head_ = Dense<T>(cfg.hidden_size, cfg.output_dim, rng);
  }

  const ModelConfig& config() const override { return cfg_; }

  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var x, int batch) override {
    const int H = cfg_.hidden_size;
    const int F = cfg_.frame_dim;
    // Per-step frames from the time-major feature vector.
    std::vector<typename Tape<T>::Var> frames;
    for (int s = 0; s < cfg_.input_steps; ++s)
      frames.push_back(tape.slice_lastdim(x, s * F, (s + 1) * F));
    const std::vector<T> zeros(static_cast<std::size_t>(batch) * H, T(0));
    for (auto& lp : layers_) {
      auto h = tape.input({batch, H}, zeros);
      auto c = tape.input({batch, H}, zeros);
      const auto wih = tape.leaf(lp.w_ih);
      const auto whh = tape.leaf(lp.w_hh);
      const auto bih = tape.leaf(lp.b_ih);
      const auto bhh = tape.leaf(lp.b_hh);
      for (auto& frame : frames) {
        if (kind_ == Kind::kGru) {
          h = tape.gru_cell(frame, h, wih, whh, bih, bhh);
        } else {
          const auto packed = tape.lstm_cell_packed(frame, h, c, wih, whh, bih, bhh);
          h = tape.slice_lastdim(packed, 0, H);
          c = tape.slice_lastdim(packed, H, 2 * H);
        }
        frame = h;  // becomes input to the next layer
      }
    }
    return head_.forward(tape, frames.back());
  }

  std::vector<Tensor<T>*> parameters() override {
    std::vector<Tensor<T>*> out;
    for (auto& lp : layers_) {
      out.push_back(&lp.w_ih);
      out.push_back(&lp.w_hh);
      out.push_back(&lp.b_ih);
      out.push_back(&lp.b_hh);
    }
    head_.collect(out);
    return out;
  }

  // Exact per-layer trainable-parameter formula: gates*(i*h + h*h + 2h).
  static std::size_t layer_param_count(Kind kind, int input_dim, int hidden) {
    const std::size_t gates = kind == Kind::kLstm ? 4 : 3;
    return gates * (static_cast<std::size_t>(input_dim) * hidden +
                    static_cast<std::size_t>(hidden) * hidden + 2u * hidden);
  }

 private:
  struct LayerParams {
    Tensor<T> w_ih, w_hh, b_ih, b_hh;
  };
  ModelConfig cfg_;
  Kind kind_;
  std::vector<LayerParams> layers_;
  Dense<T> head_;
};

// Encoder-only transformer: embed frames, add positional encoding, run
// attention+FFN blocks with residual connections and layer norm, decode the
// final sequence position through one linear head.
template <typename T>
class TransformerModel final : public Model<T> {
 public:
  explicit TransformerModel(const ModelConfig& cfg) : cfg_(cfg) {
    Rng rng(derive_seed(cfg.init_seed, "transformer"));
    embed_ = Dense<T>(cfg.frame_dim, cfg.tf_dim, rng);
    for (int l = 0; l < cfg.tf_layers; ++l) {
      Block b;
      b.attn = MultiHeadAttention<T>(cfg.tf_dim, cfg.tf_heads, rng);
      b.ln1_g = ones({cfg.tf_dim});
      b.ln1_b = Tensor<T>({cfg.tf_dim}, true);
      b.ff1 = Dense<T>(cfg.tf_dim, cfg.tf_ffn, rng);
      b.ff2 = Dense<T>(cfg.tf_ffn, cfg.tf_dim, rng);
      b.ln2_g = ones({cfg.tf_dim});
      b.ln2_b = Tensor<T>({cfg.tf_dim}, true);
      blocks_.push_back(std::move(b));
    }
    head_ = Dense<T>(cfg.tf_dim, cfg.output_dim, rng);
    pos_enc_ = positional_encoding<T>(cfg.input_steps, cfg.tf_dim);
  }

  const ModelConfig& config() const override { return cfg_; }

  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var x, int batch) override {
    const int S = cfg_.input_steps, D = cfg_.tf_dim;
    auto v = tape.reshape(x, {batch * S, cfg_.frame_dim});
    v = embed_.forward(tape, v);
    // tile the positional encoding over the batch
    std::vector<T> pe(static_cast<std::size_t>(batch) * S * D);
    for (int b = 0; b < batch; ++b)
      std::copy(pos_enc_.begin(), pos_enc_.end(),
                pe.begin() + static_cast<std::size_t>(b) * S * D);
    v = tape.add(v, tape.input({batch * S, D}, std::move(pe)));
    for (auto& blk : blocks_) {
      const auto attn = blk.attn.forward(tape, v, batch, S);
      v = tape.layer_norm(tape.add(v, attn), tape.leaf(blk.ln1_g), tape.leaf(blk.ln1_b));
      auto ff = blk.ff2.forward(
          tape, detail::activation(tape, blk.ff1.forward(tape, v), cfg_.activation));
      v = tape.layer_norm(tape.add(v, ff), tape.leaf(blk.ln2_g), tape.leaf(blk.ln2_b));
    }
    // last sequence position of each sample
    v = tape.slice_rows_strided(v, S - 1, S, batch);
    return head_.forward(tape, v);
  }

  std::vector<Tensor<T>*> parameters() override {
    std::vector<Tensor<T>*> out;
    embed_.collect(out);
    for (auto& b : blocks_) {
      b.attn.collect(out);
      out.push_back(&b.ln1_g);
      out.push_back(&b.ln1_b);
      b.ff1.collect(out);
      b.ff2.collect(out);
      out.push_back(&b.ln2_g);
      out.push_back(&b.ln2_b);
    }
    head_.collect(out);
    return out;
  }

 private:
  static Tensor<T> ones(Shape s) {
    Tensor<T> t(std::move(s), true);
    std::fill(t.v.begin(), t.v.end(), T(1));
    return t;
  }

  struct Block {
    MultiHeadAttention<T> attn;
    Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;
    Dense<T> ff1, ff2;
  };
  ModelConfig cfg_;
  Dense<T> embed_;
  std::vector<Block> blocks_;
  Dense<T> head_;
  std::vector<T> pos_enc_;
};

template <typename T>
std::unique_ptr<Model<T>> build_model(const ModelConfig& cfg) {
  cfg.validate();
  if (cfg.architecture == "mlp") return std::make_unique<MlpModel<T>>(cfg);
  if (cfg.architecture == "cnn") return std::make_unique<CnnModel<T>>(cfg);
  if (cfg.architecture == "lstm")
    return std::make_unique<RnnModel<T>>(cfg, RnnModel<T>::Kind::kLstm);
  if (cfg.architecture == "gru")
    return std::make_unique<RnnModel<T>>(cfg, RnnModel<T>::Kind::kGru);
  return std::make_unique<TransformerModel<T>>(cfg);
}

// ---------------------------------------------------------------------------
// Adam with bias correction.
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>*> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.emplace_back(p->numel(), T(0));
      v_.emplace_back(p->numel(), T(0));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      Tensor<T>* p = params_[pi];
      if (!p->requires_grad || p->g.size() != p->v.size())
        throw Error("adam: parameter " + std::to_string(pi) + " has no gradient");
      const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
      for (std::size_t i = 0; i < p->v.size(); ++i) {
        const T g = p->g[i];
        m_[pi][i] = b1 * m_[pi][i] + (T(1) - b1) * g;
        v_[pi][i] = b2 * v_[pi][i] + (T(1) - b2) * g * g;
        const double mhat = static_cast<double>(m_[pi][i]) / bc1;
        const double vhat = static_cast<double>(v_[pi][i]) / bc2;
        p->v[i] -= static_cast<T>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
      }
    }
  }

  std::int64_t step_count() const { return step_count_; }

 private:
  std::vector<Tensor<T>*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t step_count_ = 0;
};

// ---------------------------------------------------------------------------
// CSPM checkpoint format (little-endian):
//   magic "CSPM", u32 version, architecture tag (u32 length + bytes),
//   hyperparameter block (u32s: input_steps frame_dim output_dim hidden_size
//   mlp_layers rnn_layers cnn_fc_dim tf_dim tf_heads tf_layers tf_ffn,
//   u32 cnn channel count + channels, activation tag, pooling tag,
//   u64 init_seed, u32 horizon_ms),
//   u32 parameter tensor count, then per tensor: u32 rank + dims,
//   f32 payload section (CRC-guarded, layer order as built).
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointMagic = 0x4d505343u;  // "CSPM"
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
inline void put_string(BinaryWriter& out, const std::string& s) {
  out.put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
  out.put_bytes(s.data(), s.size());
}
inline std::string get_string(BinaryReader& in) {
  const auto len = in.get<std::uint32_t>();
  if (len > 4096) throw Error("checkpoint: implausible string length");
  std::string s(len, '\0');
  if (len > 0) in.get_bytes(s.data(), len);
  return s;
}
}  // namespace detail

template <typename T>
void save_checkpoint(Model<T>& model, int horizon_ms, const std::string& path) {
  BinaryWriter out(path);
  const ModelConfig& cfg = model.config();
  out.put<std::uint32_t>(kCheckpointMagic);
  out.put<std::uint32_t>(kCheckpointVersion);
  detail::put_string(out, cfg.architecture);
  for (int v : {cfg.input_steps, cfg.frame_dim, cfg.output_dim, cfg.hidden_size,
                cfg.mlp_layers, cfg.rnn_layers, cfg.cnn_fc_dim, cfg.tf_dim, cfg.tf_heads,
                cfg.tf_layers, cfg.tf_ffn})
    out.put<std::uint32_t>(static_cast<std::uint32_t>(v));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.cnn_channels.size()));
  for (int c : cfg.cnn_channels) out.put<std::uint32_t>(static_cast<std::uint32_t>(c));
  detail::put_string(out, cfg.activation);
  detail::put_string(out, cfg.pooling);
  out.put<std::uint64_t>(cfg.init_seed);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(horizon_ms));
  const auto params = model.parameters();
  out.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(p->shape.size()));
    for (int d : p->shape) out.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    std::vector<float> payload(p->v.size());
    for (std::size_t i = 0; i < p->v.size(); ++i) payload[i] = static_cast<float>(p->v[i]);
    out.put_section(payload);
  }
  if (!out.good()) throw Error("save_checkpoint: write failure for " + path);
}

struct LoadedCheckpoint {
  ModelConfig config;
  int horizon_ms = 0;
};

template <typename T>
LoadedCheckpoint load_checkpoint(const std::string& path,
                                 std::unique_ptr<Model<T>>& model_out) {
  BinaryReader in(path);
  if (in.get<std::uint32_t>() != kCheckpointMagic)
    throw Error("load_checkpoint: bad magic in " + path);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error("load_checkpoint: unsupported version " + std::to_string(version));
  LoadedCheckpoint lc;
  ModelConfig& cfg = lc.config;
  cfg.architecture = detail::get_string(in);
  cfg.input_steps = static_cast<int>(in.get<std::uint32_t>());
  cfg.frame_dim = static_cast<int>(in.get<std::uint32_t>());
  cfg.output_dim = static_cast<int>(in.get<std::uint32_t>());
  cfg.hidden_size = static_cast<int>(in.get<std::uint32_t>());
  cfg.mlp_layers = static_cast<int>(in.get<std::uint32_t>());
  cfg.rnn_layers = static_cast<int>(in.get<std::uint32_t>());
  cfg.cnn_fc_dim = static_cast<int>(in.get<std::uint32_t>());
  cfg.tf_dim = static_cast<int>(in.get<std::uint32_t>());
  cfg.tf_heads = static_cast<int>(in.get<std::uint32_t>());
  cfg.tf_layers = static_cast<int>(in.get<std::uint32_t>());
  cfg.tf_ffn = static_cast<int>(in.get<std::uint32_t>());
  const auto ncc = in.get<std::uint32_t>();
  if (ncc > 64) throw Error("load_checkpoint: implausible conv stack");
  cfg.cnn_channels.assign(ncc, 0);
  for (auto& c : cfg.cnn_channels) c = static_cast<int>(in.get<std::uint32_t>());
  cfg.activation = detail::get_string(in);
  cfg.pooling = detail::get_string(in);
  cfg.init_seed = in.get<std::uint64_t>();
  lc.horizon_ms = static_cast<int>(in.get<std::uint32_t>());

  model_out = build_model<T>(cfg);
  const auto params = model_out->parameters();
  const auto count = in.get<std::uint32_t>();
  if (count != params.size())
    throw Error("load_checkpoint: parameter tensor count mismatch in " + path);
  for (auto* p : params) {
    const auto rank = in.get<std::uint32_t>();
    Shape s(rank);
    for (auto& d : s) d = static_cast<int>(in.get<std::uint32_t>());
    if (s != p->shape)
      throw Error("load_checkpoint: tensor shape mismatch, file has " + shape_str(s) +
                  " model expects " + shape_str(p->shape));
    const auto payload = in.get_section<float>();
    if (payload.size() != p->numel())
      throw Error("load_checkpoint: payload size mismatch in " + path);
    for (std::size_t i = 0; i < payload.size(); ++i) p->v[i] = static_cast<T>(payload[i]);
  }
  return lc;
}

}  // namespace seer
