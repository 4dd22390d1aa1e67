#pragma once

// Dense-tensor numerical core with reverse-mode automatic differentiation.
// A Tape executes operations eagerly and records backward closures; values
// are flat row-major arrays. The scalar type is a template parameter: float
// for training, double for gradient-check mode.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "seer/common.hpp"

namespace seer {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// A parameter or data tensor. `g` is the gradient accumulator, sized like
// `v` for trainable tensors.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> v;
  std::vector<T> g;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, bool rg = false) : shape(std::move(s)), requires_grad(rg) {
    v.assign(shape_numel(shape), T(0));
    if (requires_grad) g.assign(v.size(), T(0));
  }

  std::size_t numel() const { return v.size(); }
  void zero_grad() { std::fill(g.begin(), g.end(), T(0)); }
};

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
class Tape {
 public:
  using Var = int;
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ArrMat2 =
      Eigen::Map<Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstArrMat2 =
      Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  // Clears the graph, retiring buffers into a size-keyed pool. Training
  // loops rebuild an identically-shaped graph every batch, so pooled buffers
  // are recycled without reallocation (every op fully overwrites its output;
  // gradient buffers are re-zeroed on first use).
  void clear() {
    for (auto& n : nodes_) {
      retire(std::move(n.val));
      retire(std::move(n.grad));
    }
    nodes_.clear();
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- graph construction -------------------------------------------------

  Var leaf(Tensor<T>& t) {
    const Var id = new_node(t.shape, t.requires_grad);
    nodes_[id].val = t.v;  // copy keeps the tape self-contained
    if (t.requires_grad) {
      Tensor<T>* tp = &t;
      nodes_[id].back = [this, id, tp] {
        auto& n = nodes_[id];
        for (std::size_t i = 0; i < n.grad.size(); ++i) tp->g[i] += n.grad[i];
      };
    }
    return id;
  }

  Var input(Shape shape, std::vector<T> data) {
    if (shape_numel(shape) != data.size())
      throw Error("tape input: data size does not match shape " + shape_str(shape));
    const Var id = new_node(std::move(shape), false);
    nodes_[id].val = std::move(data);
    return id;
  }

  // ---- primitives ----------------------------------------------------------

  Var matmul(Var a, Var b) {
    const auto& sa = shape(a);
    const auto& sb = shape(b);
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
      throw Error("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
    const int M = sa[0], K = sa[1], N = sb[1];
    const Var id = new_node({M, N}, rg(a) || rg(b));
    MatMap<T>(nodes_[id].val.data(), M, N).noalias() =
        cmap(a, M, K) * cmap(b, K, N);
    if (rg(id))
      nodes_[id].back = [this, id, a, b, M, K, N] {
        ConstMatMap<T> G(nodes_[id].grad.data(), M, N);
        if (rg(a)) MatMap<T>(grad_buf(a), M, K).noalias() += G * cmap(b, K, N).transpose();
        if (rg(b)) MatMap<T>(grad_buf(b), K, N).noalias() += cmap(a, M, K).transpose() * G;
      };
    return id;
  }

  // Stacked matmul: a is (G, M, K); b is (G, K, N), or (G, N, K) when
  // transpose_b is set. Used by the attention heads.
  Var batched_matmul(Var a, Var b, bool transpose_b = false) {
    const auto& sa = shape(a);
    const auto& sb = shape(b);
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0])
      throw Error("batched_matmul: incompatible shapes " + shape_str(sa) + " x " +
                  shape_str(sb));
    const int G = sa[0], M = sa[1], K = sa[2];
    const int N = transpose_b ? sb[1] : sb[2];
    if ((transpose_b ? sb[2] : sb[1]) != K)
      throw Error("batched_matmul: inner dimension mismatch " + shape_str(sa) + " x " +
                  shape_str(sb));
    const Var id = new_node({G, M, N}, rg(a) || rg(b));
    for (int g = 0; g < G; ++g) {
      ConstMatMap<T> A(val(a).data() + static_cast<std::size_t>(g) * M * K, M, K);
      MatMap<T> C(nodes_[id].val.data() + static_cast<std::size_t>(g) * M * N, M, N);
      if (transpose_b) {
        ConstMatMap<T> B(val(b).data() + static_cast<std::size_t>(g) * N * K, N, K);
        C.noalias() = A * B.transpose();
      } else {
        ConstMatMap<T> B(val(b).data() + static_cast<std::size_t>(g) * K * N, K, N);
        C.noalias() = A * B;
      }
    }
    if (rg(id))
      nodes_[id].back = [this, id, a, b, transpose_b, G, M, K, N] {
        for (int g = 0; g < G; ++g) {
          ConstMatMap<T> Gm(nodes_[id].grad.data() + static_cast<std::size_t>(g) * M * N, M, N);
          ConstMatMap<T> A(val(a).data() + static_cast<std::size_t>(g) * M * K, M, K);
          if (transpose_b) {
            ConstMatMap<T> B(val(b).data() + static_cast<std::size_t>(g) * N * K, N, K);
            if (rg(a))
              MatMap<T>(grad_buf(a) + static_cast<std::size_t>(g) * M * K, M, K).noalias() +=
                  Gm * B;
            if (rg(b))
              MatMap<T>(grad_buf(b) + static_cast<std::size_t>(g) * N * K, N, K).noalias() +=
                  Gm.transpose() * A;
          } else {
            ConstMatMap<T> B(val(b).data() + static_cast<std::size_t>(g) * K * N, K, N);
            if (rg(a))
              MatMap<T>(grad_buf(a) + static_cast<std::size_t>(g) * M * K, M, K).noalias() +=
                  Gm * B.transpose();
            if (rg(b))
              MatMap<T>(grad_buf(b) + static_cast<std::size_t>(g) * K * N, K, N).noalias() +=
                  A.transpose() * Gm;
          }
        }
      };
    return id;
  }

  Var add(Var a, Var b) { return binary_elementwise(a, b, "add", Add{}); }
  Var sub(Var a, Var b) { return binary_elementwise(a, b, "sub", Sub{}); }
  Var mul(Var a, Var b) { return binary_elementwise(a, b, "mul", Mul{}); }

  // Broadcasting bias addition: x has last dimension C, bias has shape (C).
  Var add_bias(Var x, Var bias) {
    const auto& sx = shape(x);
    const auto& sbias = shape(bias);
    if (sbias.size() != 1 || sx.empty() || sx.back() != sbias[0])
      throw Error("add_bias: shapes " + shape_str(sx) + " and " + shape_str(sbias));
    const int C = sbias[0];
    const std::size_t rows = shape_numel(sx) / C;
    const Var id = new_node(sx, rg(x) || rg(bias));
    const T* xv = val(x).data();
    const T* bv = val(bias).data();
    T* out = nodes_[id].val.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (int c = 0; c < C; ++c) out[r * C + c] = xv[r * C + c] + bv[c];
    if (rg(id))
      nodes_[id].back = [this, id, x, bias, rows, C] {
        const T* g = nodes_[id].grad.data();
        if (rg(x)) {
          T* gx = grad_buf(x);
          for (std::size_t i = 0; i < rows * C; ++i) gx[i] += g[i];
        }
        if (rg(bias)) {
          T* gb = grad_buf(bias);
          for (std::size_t r = 0; r < rows; ++r)
            for (int c = 0; c < C; ++c) gb[c] += g[r * C + c];
        }
      };
    return id;
  }

  // Elementwise scale * x + shift.
  Var affine(Var x, T scale, T shift) {
    const Var id = new_node(shape(x), rg(x));
    ArrMap<T>(nodes_[id].val.data(), numel(x)) =
        ConstArrMap<T>(val(x).data(), numel(x)) * scale + shift;
    if (rg(id))
      nodes_[id].back = [this, id, x, scale] {
        ArrMap<T>(grad_buf(x), numel(x)) +=
            ConstArrMap<T>(nodes_[id].grad.data(), numel(x)) * scale;
      };
    return id;
  }

  Var tanh_(Var x) {
    const Var id = new_node(shape(x), rg(x));
    ArrMap<T>(nodes_[id].val.data(), numel(x)) =
        ConstArrMap<T>(val(x).data(), numel(x)).tanh();
    if (rg(id))
      nodes_[id].back = [this, id, x] {
        ConstArrMap<T> y(nodes_[id].val.data(), numel(x));
        ConstArrMap<T> g(nodes_[id].grad.data(), numel(x));
        ArrMap<T>(grad_buf(x), numel(x)) += g * (T(1) - y * y);
      };
    return id;
  }

  Var sigmoid_(Var x) {
    const Var id = new_node(shape(x), rg(x));
    ArrMap<T>(nodes_[id].val.data(), numel(x)) =
        T(1) / (T(1) + (-ConstArrMap<T>(val(x).data(), numel(x))).exp());
    if (rg(id))
      nodes_[id].back = [this, id, x] {
        ConstArrMap<T> y(nodes_[id].val.data(), numel(x));
        ConstArrMap<T> g(nodes_[id].grad.data(), numel(x));
        ArrMap<T>(grad_buf(x), numel(x)) += g * y * (T(1) - y);
      };
    return id;
  }

  Var relu_(Var x) {
    const Var id = new_node(shape(x), rg(x));
    ArrMap<T>(nodes_[id].val.data(), numel(x)) =
        ConstArrMap<T>(val(x).data(), numel(x)).max(T(0));
    if (rg(id))
      nodes_[id].back = [this, id, x] {
        const T* xv = val(x).data();
        const T* g = nodes_[id].grad.data();
        T* gx = grad_buf(x);
        for (std::size_t i = 0; i < numel(x); ++i)
          if (xv[i] > T(0)) gx[i] += g[i];
      };
    return id;
  }

  // Softmax over the last dimension; rows sum to 1.
  Var softmax_lastdim(Var x) {
    const auto& sx = shape(x);
    if (sx.empty()) throw Error("softmax: scalar input");
    const int C = sx.back();
    const std::size_t rows = shape_numel(sx) / C;
    const Var id = new_node(sx, rg(x));
    const T* xv = val(x).data();
    T* out = nodes_[id].val.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = xv + r * C;
      T m = row[0];
      for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
      T sum = T(0);
      for (int c = 0; c < C; ++c) {
        out[r * C + c] = std::exp(row[c] - m);
        sum += out[r * C + c];
      }
      for (int c = 0; c < C; ++c) out[r * C + c] /= sum;
    }
    if (rg(id))
      nodes_[id].back = [this, id, x, rows, C] {
        const T* y = nodes_[id].val.data();
        const T* g = nodes_[id].grad.data();
        T* gx = grad_buf(x);
        for (std::size_t r = 0; r < rows; ++r) {
          T dot = T(0);
          for (int c = 0; c < C; ++c) dot += g[r * C + c] * y[r * C + c];
          for (int c = 0; c < C; ++c)
            gx[r * C + c] += y[r * C + c] * (g[r * C + c] - dot);
        }
      };
    return id;
  }

  Var concat_lastdim(Var a, Var b) {
    auto sa = shape(a);
    const auto& sb = shape(b);
    if (sa.size() != sb.size())
      throw Error("concat: rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    for (std::size_t i = 0; i + 1 < sa.size(); ++i)
      if (sa[i] != sb[i])
        throw Error("concat: leading dims differ " + shape_str(sa) + " vs " + shape_str(sb));
    const int Ca = sa.back(), Cb = sb.back();
    const std::size_t rows = shape_numel(sa) / Ca;
    sa.back() = Ca + Cb;
    const Var id = new_node(sa, rg(a) || rg(b));
    const T* av = val(a).data();
    const T* bv = val(b).data();
    T* out = nodes_[id].val.data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(av + r * Ca, av + (r + 1) * Ca, out + r * (Ca + Cb));
      std::copy(bv + r * Cb, bv + (r + 1) * Cb, out + r * (Ca + Cb) + Ca);
    }
    if (rg(id))
      nodes_[id].back = [this, id, a, b, rows, Ca, Cb] {
        const T* g = nodes_[id].grad.data();
        if (rg(a)) {
          T* ga = grad_buf(a);
          for (std::size_t r = 0; r < rows; ++r)
            for (int c = 0; c < Ca; ++c) ga[r * Ca + c] += g[r * (Ca + Cb) + c];
        }
        if (rg(b)) {
          T* gb = grad_buf(b);
          for (std::size_t r = 0; r < rows; ++r)
            for (int c = 0; c < Cb; ++c) gb[r * Cb + c] += g[r * (Ca + Cb) + Ca + c];
        }
      };
    return id;
  }

  // Slice [from, to) of the last dimension.
  Var slice_lastdim(Var x, int from, int to) {
    auto sx = shape(x);
    const int C = sx.back();
    if (from < 0 || to > C || from >= to)
      throw Error("slice: range [" + std::to_string(from) + ", " + std::to_string(to) +
                  ") out of bounds for " + shape_str(sx));
    const std::size_t rows = shape_numel(sx) / C;
    const int W = to - from;
    sx.back() = W;
    const Var id = new_node(sx, rg(x));
    const T* xv = val(x).data();
    T* out = nodes_[id].val.data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(xv + r * C + from, xv + r * C + to, out + r * W);
    if (rg(id))
      nodes_[id].back = [this, id, x, rows, C, from, W] {
        const T* g = nodes_[id].grad.data();
        T* gx = grad_buf(x);
        for (std::size_t r = 0; r < rows; ++r)
          for (int c = 0; c < W; ++c) gx[r * C + from + c] += g[r * W + c];
      };
    return id;
  }

  // Strided row selection on a 2D tensor: rows start, start+stride, ...
  Var slice_rows_strided(Var x, int start, int stride, int count) {
    const auto& sx = shape(x);
    if (sx.size() != 2) throw Error("slice_rows: need 2D input, got " + shape_str(sx));
    const int R = sx[0], C = sx[1];
    if (start < 0 || stride < 1 || start + (count - 1) * stride >= R)
      throw Error("slice_rows: selection out of bounds for " + shape_str(sx));
    const Var id = new_node({count, C}, rg(x));
    const T* xv = val(x).data();
    T* out = nodes_[id].val.data();
    for (int i = 0; i < count; ++i)
      std::copy(xv + static_cast<std::size_t>(start + i * stride) * C,
                xv + static_cast<std::size_t>(start + i * stride + 1) * C, out + i * C);
    if (rg(id))
      nodes_[id].back = [this, id, x, start, stride, count, C] {
        const T* g = nodes_[id].grad.data();
        T* gx = grad_buf(x);
        for (int i = 0; i < count; ++i)
          for (int c = 0; c < C; ++c)
            gx[static_cast<std::size_t>(start + i * stride) * C + c] += g[i * C + c];
      };
    return id;
  }

  Var reshape(Var x, Shape new_shape) {
    if (shape_numel(new_shape) != numel(x))
      throw Error("reshape: cannot view " + shape_str(shape(x)) + " as " +
                  shape_str(new_shape));
    const Var id = new_node(std::move(new_shape), rg(x));
    nodes_[id].val = val(x);
    if (rg(id))
      nodes_[id].back = [this, id, x] {
        T* gx = grad_buf(x);
        const T* g = nodes_[id].grad.data();
        for (std::size_t i = 0; i < numel(x); ++i) gx[i] += g[i];
      };
    return id;
  }

  // (B*S, heads*dk) -> (B*heads, S, dk) permutation.
  Var split_heads(Var x, int batch, int seq, int heads) {
    const auto& sx = shape(x);
    if (sx.size() != 2 || sx[0] != batch * seq || sx[1] % heads != 0)
      throw Error("split_heads: shape " + shape_str(sx) + " incompatible with batch " +
                  std::to_string(batch) + " seq " + std::to_string(seq) + " heads " +
                  std::to_string(heads));
    const int dk = sx[1] / heads;
    const Var id = new_node({batch * heads, seq, dk}, rg(x));
    permute_heads(val(x).data(), nodes_[id].val.data(), batch, seq, heads, dk, false);
    if (rg(id))
      nodes_[id].back = [this, id, x, batch, seq, heads, dk] {
        permute_heads_add(nodes_[id].grad.data(), grad_buf(x), batch, seq, heads, dk, true);
      };
    return id;
  }

  // (B*heads, S, dk) -> (B*S, heads*dk) permutation.
  Var merge_heads(Var x, int batch, int seq, int heads) {
    const auto& sx = shape(x);
    if (sx.size() != 3 || sx[0] != batch * heads || sx[1] != seq)
      throw Error("merge_heads: shape " + shape_str(sx) + " incompatible");
    const int dk = sx[2];
    const Var id = new_node({batch * seq, heads * dk}, rg(x));
    permute_heads(val(x).data(), nodes_[id].val.data(), batch, seq, heads, dk, true);
    if (rg(id))
      nodes_[id].back = [this, id, x, batch, seq, heads, dk] {
        permute_heads_add(nodes_[id].grad.data(), grad_buf(x), batch, seq, heads, dk, false);
      };
    return id;
  }

  // Layer normalization over the last dimension with learnable gain/shift.
  Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5)) {
    const auto& sx = shape(x);
    const int C = sx.back();
    if (shape(gamma) != Shape{C} || shape(beta) != Shape{C})
      throw Error("layer_norm: gamma/beta must have shape [" + std::to_string(C) + "]");
    const std::size_t rows = shape_numel(sx) / C;
    const Var id = new_node(sx, rg(x) || rg(gamma) || rg(beta));
    auto st = std::make_shared<std::vector<T>>(rows * (C + 1));  // xhat rows + inv_std
    const T* xv = val(x).data();
    const T* gv = val(gamma).data();
    const T* bv = val(beta).data();
    T* out = nodes_[id].val.data();
    T* xhat = st->data();
    T* inv_std = st->data() + rows * C;
    for (std::size_t r = 0; r < rows; ++r) {
      T mean = T(0);
      for (int c = 0; c < C; ++c) mean += xv[r * C + c];
      mean /= T(C);
      T var = T(0);
      for (int c = 0; c < C; ++c) {
        const T d = xv[r * C + c] - mean;
        var += d * d;
      }
      var /= T(C);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[r] = is;
      for (int c = 0; c < C; ++c) {
        const T xh = (xv[r * C + c] - mean) * is;
        xhat[r * C + c] = xh;
        out[r * C + c] = gv[c] * xh + bv[c];
      }
    }
    if (rg(id))
      nodes_[id].back = [this, id, x, gamma, beta, rows, C, st] {
        const T* g = nodes_[id].grad.data();
        const T* xhat = st->data();
        const T* inv_std = st->data() + rows * C;
        const T* gv = val(gamma).data();
        for (std::size_t r = 0; r < rows; ++r) {
          T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
          for (int c = 0; c < C; ++c) {
            const T dxh = g[r * C + c] * gv[c];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xhat[r * C + c];
          }
          if (rg(x)) {
            T* gx = grad_buf(x);
            for (int c = 0; c < C; ++c) {
              const T dxh = g[r * C + c] * gv[c];
              gx[r * C + c] += inv_std[r] * (dxh - sum_dxhat / T(C) -
                                             xhat[r * C + c] * sum_dxhat_xhat / T(C));
            }
          }
        }
        if (rg(gamma)) {
          T* gg = grad_buf(gamma);
          for (std::size_t r = 0; r < rows; ++r)
            for (int c = 0; c < C; ++c) gg[c] += g[r * C + c] * xhat[r * C + c];
        }
        if (rg(beta)) {
          T* gb = grad_buf(beta);
          for (std::size_t r = 0; r < rows; ++r)
            for (int c = 0; c < C; ++c) gb[c] += g[r * C + c];
        }
      };
    return id;
  }

  // Valid cross-correlation. x (N, C, H, W), kernels (F, C, KH, KW),
  // bias (F); output (N, F, OH, OW) with OH = (H-KH)/sh + 1.
  Var conv2d(Var x, Var kernels, Var bias, int sh = 1, int sw = 1) {
    const auto& sx = shape(x);
    const auto& sk = shape(kernels);
    if (sx.size() != 4 || sk.size() != 4 || sx[1] != sk[1])
      throw Error("conv2d: shapes " + shape_str(sx) + " and " + shape_str(sk));
    const int N = sx[0], C = sx[1], H = sx[2], W = sx[3];
    const int F = sk[0], KH = sk[2], KW = sk[3];
    if (shape(bias) != Shape{F}) throw Error("conv2d: bias must have shape [F]");
    if (KH > H || KW > W)
      throw Error("conv2d: kernel " + shape_str(sk) + " larger than input " + shape_str(sx));
    const int OH = (H - KH) / sh + 1, OW = (W - KW) / sw + 1;
    const Var id = new_node({N, F, OH, OW}, rg(x) || rg(kernels) || rg(bias));
    const T* xv = val(x).data();
    const T* kv = val(kernels).data();
    const T* bv = val(bias).data();
    T* out = nodes_[id].val.data();
    auto xi = [C, H, W](int n, int c, int h, int w) {
      return ((static_cast<std::size_t>(n) * C + c) * H + h) * W + w;
    };
    auto ki = [C, KH, KW](int f, int c, int h, int w) {
      return ((static_cast<std::size_t>(f) * C + c) * KH + h) * KW + w;
    };
    auto oi = [F, OH, OW](int n, int f, int h, int w) {
      return ((static_cast<std::size_t>(n) * F + f) * OH + h) * OW + w;
    };
    for (int n = 0; n < N; ++n)
      for (int f = 0; f < F; ++f)
        for (int oh = 0; oh < OH; ++oh)
          for (int ow = 0; ow < OW; ++ow) {
            T acc = bv[f];
            for (int c = 0; c < C; ++c)
              for (int kh = 0; kh < KH; ++kh)
                for (int kw = 0; kw < KW; ++kw)
                  acc += xv[xi(n, c, oh * sh + kh, ow * sw + kw)] * kv[ki(f, c, kh, kw)];
            out[oi(n, f, oh, ow)] = acc;
          }
    if (rg(id))
      nodes_[id].back = [this, id, x, kernels, bias, N, C, H, W, F, KH, KW, OH, OW, sh, sw,
                         xi, ki, oi] {
        const T* g = nodes_[id].grad.data();
        const T* xv = val(x).data();
        const T* kv = val(kernels).data();
        T* gx = rg(x) ? grad_buf(x) : nullptr;
        T* gk = rg(kernels) ? grad_buf(kernels) : nullptr;
        T* gb = rg(bias) ? grad_buf(bias) : nullptr;
        for (int n = 0; n < N; ++n)
          for (int f = 0; f < F; ++f)
            for (int oh = 0; oh < OH; ++oh)
              for (int ow = 0; ow < OW; ++ow) {
                const T go = g[oi(n, f, oh, ow)];
                if (gb) gb[f] += go;
                for (int c = 0; c < C; ++c)
                  for (int kh = 0; kh < KH; ++kh)
                    for (int kw = 0; kw < KW; ++kw) {
                      if (gx)
                        gx[xi(n, c, oh * sh + kh, ow * sw + kw)] += go * kv[ki(f, c, kh, kw)];
                      if (gk)
                        gk[ki(f, c, kh, kw)] += go * xv[xi(n, c, oh * sh + kh, ow * sw + kw)];
                    }
              }
      };
    return id;
  }

  enum class PoolKind { kMean, kMax };

  // Non-overlapping pooling with window (ph, pw); stride equals the window,
  // trailing remainder rows/columns are dropped (floor semantics).
  Var pool2d(Var x, int ph, int pw, PoolKind kind) {
    const auto& sx = shape(x);
    if (sx.size() != 4) throw Error("pool2d: need NCHW input, got " + shape_str(sx));
    const int N = sx[0], C = sx[1], H = sx[2], W = sx[3];
    if (ph < 1 || pw < 1 || ph > H || pw > W)
      throw Error("pool2d: window " + std::to_string(ph) + "x" + std::to_string(pw) +
                  " invalid for input " + shape_str(sx));
    const int OH = H / ph, OW = W / pw;
    const Var id = new_node({N, C, OH, OW}, rg(x));
    const T* xv = val(x).data();
    T* out = nodes_[id].val.data();
    auto xi = [C, H, W](int n, int c, int h, int w) {
      return ((static_cast<std::size_t>(n) * C + c) * H + h) * W + w;
    };
    auto oi = [C, OH, OW](int n, int c, int h, int w) {
      return ((static_cast<std::size_t>(n) * C + c) * OH + h) * OW + w;
    };
    auto argmax = std::make_shared<std::vector<std::size_t>>(
        kind == PoolKind::kMax ? shape_numel(shape(id)) : 0);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int oh = 0; oh < OH; ++oh)
          for (int ow = 0; ow < OW; ++ow) {
            if (kind == PoolKind::kMean) {
              T acc = T(0);
              for (int a = 0; a < ph; ++a)
                for (int b = 0; b < pw; ++b) acc += xv[xi(n, c, oh * ph + a, ow * pw + b)];
              out[oi(n, c, oh, ow)] = acc / T(ph * pw);
            } else {
              std::size_t best = xi(n, c, oh * ph, ow * pw);
              for (int a = 0; a < ph; ++a)
                for (int b = 0; b < pw; ++b) {
                  const std::size_t cand = xi(n, c, oh * ph + a, ow * pw + b);
                  if (xv[cand] > xv[best]) best = cand;
                }
              (*argmax)[oi(n, c, oh, ow)] = best;
              out[oi(n, c, oh, ow)] = xv[best];
            }
          }
    if (rg(id))
      nodes_[id].back = [this, id, x, N, C, OH, OW, ph, pw, kind, argmax, xi, oi] {
        const T* g = nodes_[id].grad.data();
        T* gx = grad_buf(x);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < OH; ++oh)
              for (int ow = 0; ow < OW; ++ow) {
                const T go = g[oi(n, c, oh, ow)];
                if (kind == PoolKind::kMean) {
                  const T share = go / T(ph * pw);
                  for (int a = 0; a < ph; ++a)
                    for (int b = 0; b < pw; ++b)
                      gx[xi(n, c, oh * ph + a, ow * pw + b)] += share;
                } else {
                  gx[(*argmax)[oi(n, c, oh, ow)]] += go;
                }
              }
      };
    return id;
  }

  // Fused GRU cell (gate slab order [r | z | n], two bias vectors):
  //   r = sigm(x Wih_r + bih_r + h Whh_r + bhh_r)
  //   z = sigm(x Wih_z + bih_z + h Whh_z + bhh_z)
  //   n = tanh(x Wih_n + bih_n + r .* (h Whh_n + bhh_n))
  //   h' = (1 - z) .* n + z .* h
  Var gru_cell(Var x, Var h, Var w_ih, Var w_hh, Var b_ih, Var b_hh) {
    const auto& sx = shape(x);
    const auto& sh = shape(h);
    if (sx.size() != 2 || sh.size() != 2 || sx[0] != sh[0])
      throw Error("gru_cell: x " + shape_str(sx) + " and h " + shape_str(sh));
    const int B = sx[0], I = sx[1], H = sh[1];
    if (shape(w_ih) != Shape{I, 3 * H} || shape(w_hh) != Shape{H, 3 * H} ||
        shape(b_ih) != Shape{3 * H} || shape(b_hh) != Shape{3 * H})
      throw Error("gru_cell: parameter shapes do not match input " + shape_str(sx) +
                  " hidden " + shape_str(sh));
    const bool needs_grad =
        rg(x) || rg(h) || rg(w_ih) || rg(w_hh) || rg(b_ih) || rg(b_hh);
    const Var id = new_node({B, H}, needs_grad);
    // saved state: r, z, n, ahn  (each B x H); Eigen leaves it uninitialized
    auto st = std::make_shared<RowMat>(B, 4 * H);
    {
      RowMat gx(B, 3 * H), gh(B, 3 * H);
      gx.noalias() = cmap(x, B, I) * cmap(w_ih, I, 3 * H);
      gx.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
          val(b_ih).data(), 3 * H);
      gh.noalias() = cmap(h, B, H) * cmap(w_hh, H, 3 * H);
      gh.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
          val(b_hh).data(), 3 * H);
      auto r = st->leftCols(H).array();
      auto z = st->middleCols(H, H).array();
      auto n = st->middleCols(2 * H, H).array();
      auto ahn = st->rightCols(H).array();
      r = T(1) / (T(1) + (-(gx.leftCols(H).array() + gh.leftCols(H).array())).exp());
      z = T(1) /
          (T(1) + (-(gx.middleCols(H, H).array() + gh.middleCols(H, H).array())).exp());
      ahn = gh.rightCols(H).array();
      n = (gx.rightCols(H).array() + r * ahn).tanh();
      ConstArrMat2 hv(val(h).data(), B, H);
      ArrMat2 out(nodes_[id].val.data(), B, H);
      out = (T(1) - z) * n + z * hv;
    }
    if (!needs_grad) return id;
    nodes_[id].back = [this, id, x, h, w_ih, w_hh, b_ih, b_hh, B, I, H, st] {
      ConstArrMat2 G(nodes_[id].grad.data(), B, H);
      const auto r = st->leftCols(H).array();
      const auto z = st->middleCols(H, H).array();
      const auto n = st->middleCols(2 * H, H).array();
      const auto ahn = st->rightCols(H).array();
      ConstArrMat2 hv(val(h).data(), B, H);
      RowMat dge_x(B, 3 * H), dge_h(B, 3 * H);
      {
        const auto du = (G * (T(1) - z) * (T(1) - n * n)).eval();
        const auto dz = (G * (hv - n) * z * (T(1) - z)).eval();
        const auto dr = (du * ahn * r * (T(1) - r)).eval();
        dge_x.leftCols(H).array() = dr;
        dge_x.middleCols(H, H).array() = dz;
        dge_x.rightCols(H).array() = du;
        dge_h.leftCols(H).array() = dr;
        dge_h.middleCols(H, H).array() = dz;
        dge_h.rightCols(H).array() = du * r;
      }
      if (rg(x))
        MatMap<T>(grad_buf(x), B, I).noalias() += dge_x * cmap(w_ih, I, 3 * H).transpose();
      if (rg(w_ih))
        MatMap<T>(grad_buf(w_ih), I, 3 * H).noalias() += cmap(x, B, I).transpose() * dge_x;
      if (rg(w_hh))
        MatMap<T>(grad_buf(w_hh), H, 3 * H).noalias() += cmap(h, B, H).transpose() * dge_h;
      if (rg(h)) {
        MatMap<T> ghm(grad_buf(h), B, H);
        ghm.noalias() += dge_h * cmap(w_hh, H, 3 * H).transpose();
        ghm.array() += G * z;  // direct path h' = ... + z .* h
      }
      if (rg(b_ih))
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grad_buf(b_ih), 3 * H) +=
            dge_x.colwise().sum();
      if (rg(b_hh))
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grad_buf(b_hh), 3 * H) +=
            dge_h.colwise().sum();
    };
    return id;
  }

  // Fused LSTM cell (gate slab order [i | f | g | o], two bias vectors).
  // Returns the pair (h', c') packed as (B, 2H); slice to use.
  Var lstm_cell_packed(Var x, Var h, Var c, Var w_ih, Var w_hh, Var b_ih, Var b_hh) {
    const auto& sx = shape(x);
    const auto& sh = shape(h);
    if (sx.size() != 2 || sh.size() != 2 || sx[0] != sh[0] || shape(c) != sh)
      throw Error("lstm_cell: x " + shape_str(sx) + " h " + shape_str(sh) + " c " +
                  shape_str(shape(c)));
    const int B = sx[0], I = sx[1], H = sh[1];
    if (shape(w_ih) != Shape{I, 4 * H} || shape(w_hh) != Shape{H, 4 * H} ||
        shape(b_ih) != Shape{4 * H} || shape(b_hh) != Shape{4 * H})
      throw Error("lstm_cell: parameter shapes do not match input " + shape_str(sx) +
                  " hidden " + shape_str(sh));
    const bool needs_grad =
        rg(x) || rg(h) || rg(c) || rg(w_ih) || rg(w_hh) || rg(b_ih) || rg(b_hh);
    const Var id = new_node({B, 2 * H}, needs_grad);
    // saved: i, f, g, o, tanh_c' (each B x H); Eigen leaves it uninitialized
    auto st = std::make_shared<RowMat>(B, 5 * H);
    {
      RowMat pre(B, 4 * H);
      pre.noalias() = cmap(x, B, I) * cmap(w_ih, I, 4 * H);
      pre.noalias() += cmap(h, B, H) * cmap(w_hh, H, 4 * H);
      pre.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
          val(b_ih).data(), 4 * H);
      pre.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
          val(b_hh).data(), 4 * H);
      auto gi = st->leftCols(H).array();
      auto gf = st->middleCols(H, H).array();
      auto gg = st->middleCols(2 * H, H).array();
      auto go = st->middleCols(3 * H, H).array();
      auto tc = st->rightCols(H).array();
      gi = T(1) / (T(1) + (-pre.leftCols(H).array()).exp());
      gf = T(1) / (T(1) + (-pre.middleCols(H, H).array()).exp());
      gg = pre.middleCols(2 * H, H).array().tanh();
      go = T(1) / (T(1) + (-pre.rightCols(H).array()).exp());
      ConstArrMat2 cv(val(c).data(), B, H);
      // the output node packs [h' | c'] side by side
      MatMap<T> out(nodes_[id].val.data(), B, 2 * H);
      out.rightCols(H).array() = gf * cv + gi * gg;  // c'
      tc = out.rightCols(H).array().tanh();
      out.leftCols(H).array() = go * tc;  // h'
    }
    if (!needs_grad) return id;
    nodes_[id].back = [this, id, x, h, c, w_ih, w_hh, b_ih, b_hh, B, I, H, st] {
      ConstMatMap<T> G(nodes_[id].grad.data(), B, 2 * H);
      const auto gi = st->leftCols(H).array();
      const auto gf = st->middleCols(H, H).array();
      const auto gg = st->middleCols(2 * H, H).array();
      const auto go = st->middleCols(3 * H, H).array();
      const auto tc = st->rightCols(H).array();
      ConstArrMat2 cv(val(c).data(), B, H);
      const auto Gh = G.leftCols(H).array();
      const auto Gc = G.rightCols(H).array();
      RowMat dpre(B, 4 * H);
      const auto dc = (Gc + Gh * go * (T(1) - tc * tc)).eval();
      dpre.leftCols(H).array() = dc * gg * gi * (T(1) - gi);
      dpre.middleCols(H, H).array() = dc * cv * gf * (T(1) - gf);
      dpre.middleCols(2 * H, H).array() = dc * gi * (T(1) - gg * gg);
      dpre.rightCols(H).array() = Gh * tc * go * (T(1) - go);
      if (rg(c)) ArrMat2(grad_buf(c), B, H) += dc * gf;
      if (rg(x))
        MatMap<T>(grad_buf(x), B, I).noalias() += dpre * cmap(w_ih, I, 4 * H).transpose();
      if (rg(h))
        MatMap<T>(grad_buf(h), B, H).noalias() += dpre * cmap(w_hh, H, 4 * H).transpose();
      if (rg(w_ih))
        MatMap<T>(grad_buf(w_ih), I, 4 * H).noalias() += cmap(x, B, I).transpose() * dpre;
      if (rg(w_hh))
        MatMap<T>(grad_buf(w_hh), H, 4 * H).noalias() += cmap(h, B, H).transpose() * dpre;
      if (rg(b_ih))
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grad_buf(b_ih), 4 * H) +=
            dpre.colwise().sum();
      if (rg(b_hh))
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grad_buf(b_hh), 4 * H) +=
            dpre.colwise().sum();
    };
    return id;
  }

  // Mean squared error over every element: (1/numel) * sum (a - b)^2.
  Var mse(Var pred, Var target) {
    if (shape(pred) != shape(target))
      throw Error("mse: shape mismatch " + shape_str(shape(pred)) + " vs " +
                  shape_str(shape(target)));
    const Var id = new_node({1}, rg(pred) || rg(target));
    const std::size_t n = numel(pred);
    const T* a = val(pred).data();
    const T* b = val(target).data();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      acc += d * d;
    }
    nodes_[id].val[0] = static_cast<T>(acc / static_cast<double>(n));
    if (rg(id))
      nodes_[id].back = [this, id, pred, target, n] {
        const T gl = nodes_[id].grad[0];
        const T* a = val(pred).data();
        const T* b = val(target).data();
        const T scale = gl * T(2) / static_cast<T>(n);
        if (rg(pred)) {
          T* gp = grad_buf(pred);
          for (std::size_t i = 0; i < n; ++i) gp[i] += scale * (a[i] - b[i]);
        }
        if (rg(target)) {
          T* gt = grad_buf(target);
          for (std::size_t i = 0; i < n; ++i) gt[i] -= scale * (a[i] - b[i]);
        }
      };
    return id;
  }

  // ---- execution -----------------------------------------------------------

  void backward(Var loss) {
    if (shape(loss) != Shape{1})
      throw Error("backward: loss must be scalar, got " + shape_str(shape(loss)));
    ensure_grad(loss);
    nodes_[loss].grad[0] = T(1);
    for (int i = loss; i >= 0; --i) {
      auto& n = nodes_[i];
      if (!n.grad.empty() && n.back) n.back();
    }
  }

  const std::vector<T>& val(Var id) const { return nodes_[id].val; }
  const Shape& shape(Var id) const { return nodes_[id].shape; }
  std::size_t numel(Var id) const { return nodes_[id].val.size(); }
  bool rg(Var id) const { return nodes_[id].requires_grad; }
  const std::vector<T>& grad(Var id) const { return nodes_[id].grad; }

  // Throws a diagnostic error if the node holds NaN or Inf.
  void check_finite(Var id, const std::string& context) const {
    for (const T& x : nodes_[id].val)
      if (!std::isfinite(static_cast<double>(x)))
        throw Error("non-finite value detected in " + context);
  }

 private:
  struct Node {
    Shape shape;
    std::vector<T> val;
    std::vector<T> grad;  // allocated lazily
    bool requires_grad = false;
    std::function<void()> back;
  };

  struct Add {
    T operator()(T a, T b) const { return a + b; }
    void back(T g, T, T, T& ga, T& gb) const { ga += g; gb += g; }
  };
  struct Sub {
    T operator()(T a, T b) const { return a - b; }
    void back(T g, T, T, T& ga, T& gb) const { ga += g; gb -= g; }
  };
  struct Mul {
    T operator()(T a, T b) const { return a * b; }
    void back(T g, T a, T b, T& ga, T& gb) const { ga += g * b; gb += g * a; }
  };

  template <typename Op>
  Var binary_elementwise(Var a, Var b, const char* name, Op op) {
    if (shape(a) != shape(b))
      throw Error(std::string(name) + ": shape mismatch " + shape_str(shape(a)) + " vs " +
                  shape_str(shape(b)));
    const Var id = new_node(shape(a), rg(a) || rg(b));
    const T* av = val(a).data();
    const T* bv = val(b).data();
    T* out = nodes_[id].val.data();
    const std::size_t n = numel(a);
    for (std::size_t i = 0; i < n; ++i) out[i] = op(av[i], bv[i]);
    if (rg(id))
      nodes_[id].back = [this, id, a, b, n, op] {
        const T* g = nodes_[id].grad.data();
        const T* av = val(a).data();
        const T* bv = val(b).data();
        T dump{};
        T* ga = rg(a) ? grad_buf(a) : nullptr;
        T* gb = rg(b) ? grad_buf(b) : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
          T& ra = ga ? ga[i] : dump;
          T& rb = gb ? gb[i] : dump;
          op.back(g[i], av[i], bv[i], ra, rb);
        }
      };
    return id;
  }

  Var new_node(Shape shape, bool requires_grad) {
    Node n;
    n.shape = std::move(shape);
    n.val = take(shape_numel(n.shape));
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  void ensure_grad(Var id) {
    if (nodes_[id].grad.empty()) {
      nodes_[id].grad = take(nodes_[id].val.size());
      std::fill(nodes_[id].grad.begin(), nodes_[id].grad.end(), T(0));
    }
  }

  // Size-keyed buffer pool. Buffers come back with their previous contents;
  // callers own the initialization discipline.
  std::vector<T> take(std::size_t n) {
    if (n > 0) {
      const auto it = pool_.find(n);
      if (it != pool_.end()) {
        std::vector<T> v = std::move(it->second);
        pool_.erase(it);
        return v;
      }
    }
    return std::vector<T>(n, T(0));
  }

  void retire(std::vector<T>&& v) {
    if (v.empty() || pool_.size() >= 512) return;
    const std::size_t n = v.size();
    pool_.emplace(n, std::move(v));
  }

  T* grad_buf(Var id) {
    ensure_grad(id);
    return nodes_[id].grad.data();
  }

  ConstMatMap<T> cmap(Var id, int r, int c) const {
    return ConstMatMap<T>(nodes_[id].val.data(), r, c);
  }

  void permute_heads(const T* in, T* out, int B, int S, int Hd, int dk, bool merge) const {
    // split: in rows (b*S + s), cols (h*dk + d) -> out [(b*Hd + h), s, d]
    for (int b = 0; b < B; ++b)
      for (int s = 0; s < S; ++s)
        for (int h = 0; h < Hd; ++h) {
          const std::size_t split_ix =
              ((static_cast<std::size_t>(b) * Hd + h) * S + s) * dk;
          const std::size_t flat_ix =
              (static_cast<std::size_t>(b) * S + s) * (Hd * dk) + h * dk;
          if (!merge)
            std::copy(in + flat_ix, in + flat_ix + dk, out + split_ix);
          else
            std::copy(in + split_ix, in + split_ix + dk, out + flat_ix);
        }
  }

  void permute_heads_add(const T* in, T* out, int B, int S, int Hd, int dk,
                         bool to_flat) const {
    for (int b = 0; b < B; ++b)
      for (int s = 0; s < S; ++s)
        for (int h = 0; h < Hd; ++h) {
          const std::size_t split_ix =
              ((static_cast<std::size_t>(b) * Hd + h) * S + s) * dk;
          const std::size_t flat_ix =
              (static_cast<std::size_t>(b) * S + s) * (Hd * dk) + h * dk;
          if (to_flat)
            for (int d = 0; d < dk; ++d) out[flat_ix + d] += in[split_ix + d];
          else
            for (int d = 0; d < dk; ++d) out[split_ix + d] += in[flat_ix + d];
        }
  }

  std::vector<Node> nodes_;
  std::unordered_multimap<std::size_t, std::vector<T>> pool_;
};

}  // namespace seer
