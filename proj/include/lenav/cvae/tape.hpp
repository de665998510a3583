#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "lenav/core/error.hpp"

namespace lenav::cvae {

// Dense row-major matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
  std::size_t size() const { return data.size(); }
};

// Reverse-mode tape over matrix-valued nodes. Nodes are appended in
// evaluation order, so a reverse sweep visits every node after all its users.
class Tape {
 public:
  struct Var {
    int id = -1;
  };

  Var constant(Matrix m) { return push(std::move(m), false, nullptr); }
  Var variable(Matrix m) { return push(std::move(m), true, nullptr); }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool needs_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(out)/d(out) = 1 for a 1x1 output and sweeps backwards.
  void backward(Var out) {
    Node& o = nodes_[out.id];
    if (o.value.size() != 1) throw RangeError("backward: output must be scalar");
    ensure_grad(out.id);
    o.grad.data[0] = 1.0;
    for (int i = out.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.has_grad) n.backward();
    }
  }

  // ---- ops ---------------------------------------------------------------

  // X[n x k] * W[k x m]
  Var matmul(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols != B.rows) throw RangeError("matmul: shape mismatch");
    Matrix C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
      double* c = C.row(i);
      const double* ar = A.row(i);
      for (int k = 0; k < A.cols; ++k) {
        const double av = ar[k];
        const double* br = B.row(k);
        for (int j = 0; j < B.cols; ++j) c[j] += av * br[j];
      }
    }
    return push_op(std::move(C), {a, b}, [this, a, b, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      const Matrix& A = value(a);
      const Matrix& B = value(b);
      if (needs_grad(a)) {
        Matrix& GA = grad_ref(a);
        for (int i = 0; i < A.rows; ++i) {
          const double* g = G.row(i);
          double* ga = GA.row(i);
          for (int k = 0; k < A.cols; ++k) {
            const double* br = B.row(k);
            double s = 0.0;
            for (int j = 0; j < B.cols; ++j) s += g[j] * br[j];
            ga[k] += s;
          }
        }
      }
      if (needs_grad(b)) {
        Matrix& GB = grad_ref(b);
        for (int i = 0; i < A.rows; ++i) {
          const double* g = G.row(i);
          const double* ar = A.row(i);
          for (int k = 0; k < A.cols; ++k) {
            const double av = ar[k];
            double* gb = GB.row(k);
            for (int j = 0; j < B.cols; ++j) gb[j] += av * g[j];
          }
        }
      }
    });
  }

  // X[n x m] + b[1 x m] broadcast over rows.
  Var add_row(Var x, Var b) {
    const Matrix& X = value(x);
    const Matrix& B = value(b);
    if (B.rows != 1 || B.cols != X.cols) throw RangeError("add_row: shape mismatch");
    Matrix Y = X;
    for (int i = 0; i < Y.rows; ++i)
      for (int j = 0; j < Y.cols; ++j) Y(i, j) += B(0, j);
    return push_op(std::move(Y), {x, b}, [this, x, b, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      if (needs_grad(x)) accumulate(grad_ref(x), G);
      if (needs_grad(b)) {
        Matrix& GB = grad_ref(b);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < G.cols; ++j) GB(0, j) += G(i, j);
      }
    });
  }

  Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

  Var add(Var x, Var y) {
    const Matrix& X = value(x);
    const Matrix& Y = value(y);
    if (X.rows != Y.rows || X.cols != Y.cols) throw RangeError("add: shape mismatch");
    Matrix Z = X;
    for (std::size_t i = 0; i < Z.size(); ++i) Z.data[i] += Y.data[i];
    return push_op(std::move(Z), {x, y}, [this, x, y, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      if (needs_grad(x)) accumulate(grad_ref(x), G);
      if (needs_grad(y)) accumulate(grad_ref(y), G);
    });
  }

  Var sub(Var x, Var y) { return add(x, scale(y, -1.0)); }

  Var mul(Var x, Var y) {
    const Matrix& X = value(x);
    const Matrix& Y = value(y);
    if (X.rows != Y.rows || X.cols != Y.cols) throw RangeError("mul: shape mismatch");
    Matrix Z = X;
    for (std::size_t i = 0; i < Z.size(); ++i) Z.data[i] *= Y.data[i];
    return push_op(std::move(Z), {x, y}, [this, x, y, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      if (needs_grad(x)) {
        Matrix& GX = grad_ref(x);
        const Matrix& Y = value(y);
        for (std::size_t i = 0; i < G.size(); ++i) GX.data[i] += G.data[i] * Y.data[i];
      }
      if (needs_grad(y)) {
        Matrix& GY = grad_ref(y);
        const Matrix& X = value(x);
        for (std::size_t i = 0; i < G.size(); ++i) GY.data[i] += G.data[i] * X.data[i];
      }
    });
  }

  Var scale(Var x, double s) {
    Matrix Y = value(x);
    for (double& v : Y.data) v *= s;
    return push_op(std::move(Y), {x}, [this, x, s, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      Matrix& GX = grad_ref(x);
      for (std::size_t i = 0; i < G.size(); ++i) GX.data[i] += s * G.data[i];
    });
  }

  Var tanh(Var x) {
    Matrix Y = value(x);
    for (double& v : Y.data) v = std::tanh(v);
    return push_op(std::move(Y), {x}, [this, x, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      const Matrix& Y = nodes_[out].value;
      Matrix& GX = grad_ref(x);
      for (std::size_t i = 0; i < G.size(); ++i) GX.data[i] += G.data[i] * (1.0 - Y.data[i] * Y.data[i]);
    });
  }

  Var sigmoid(Var x) {
    Matrix Y = value(x);
    for (double& v : Y.data) v = 1.0 / (1.0 + std::exp(-v));
    return push_op(std::move(Y), {x}, [this, x, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      const Matrix& Y = nodes_[out].value;
      Matrix& GX = grad_ref(x);
      for (std::size_t i = 0; i < G.size(); ++i) GX.data[i] += G.data[i] * Y.data[i] * (1.0 - Y.data[i]);
    });
  }

  Var exp(Var x) {
    Matrix Y = value(x);
    for (double& v : Y.data) v = std::exp(v);
    return push_op(std::move(Y), {x}, [this, x, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      const Matrix& Y = nodes_[out].value;
      Matrix& GX = grad_ref(x);
      for (std::size_t i = 0; i < G.size(); ++i) GX.data[i] += G.data[i] * Y.data[i];
    });
  }

  // Row-wise layer normalization with affine gain/bias [1 x m].
  Var layernorm(Var x, Var gain, Var bias, double eps = 1e-5) {
    const Matrix& X = value(x);
    const int n = X.rows, m = X.cols;
    Matrix xhat(n, m), Y(n, m);
    std::vector<double> inv_std(static_cast<std::size_t>(n));
    const Matrix& g = value(gain);
    const Matrix& b = value(bias);
    for (int i = 0; i < n; ++i) {
      double mean = 0.0;
      for (int j = 0; j < m; ++j) mean += X(i, j);
      mean /= m;
      double var = 0.0;
      for (int j = 0; j < m; ++j) var += (X(i, j) - mean) * (X(i, j) - mean);
      var /= m;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(i)] = is;
      for (int j = 0; j < m; ++j) {
        xhat(i, j) = (X(i, j) - mean) * is;
        Y(i, j) = xhat(i, j) * g(0, j) + b(0, j);
      }
    }
    return push_op(std::move(Y), {x, gain, bias},
                   [this, x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), out = next_id()] {
                     const Matrix& G = nodes_[out].grad;
                     const Matrix& g = value(gain);
                     const int n = G.rows, m = G.cols;
                     if (needs_grad(gain) || needs_grad(bias)) {
                       for (int i = 0; i < n; ++i)
                         for (int j = 0; j < m; ++j) {
                           if (needs_grad(gain)) grad_ref(gain)(0, j) += G(i, j) * xhat(i, j);
                           if (needs_grad(bias)) grad_ref(bias)(0, j) += G(i, j);
                         }
                     }
                     if (!needs_grad(x)) return;
                     Matrix& GX = grad_ref(x);
                     for (int i = 0; i < n; ++i) {
                       double s1 = 0.0, s2 = 0.0;
                       for (int j = 0; j < m; ++j) {
                         const double d = G(i, j) * g(0, j);
                         s1 += d;
                         s2 += d * xhat(i, j);
                       }
                       const double is = inv_std[static_cast<std::size_t>(i)];
                       for (int j = 0; j < m; ++j) {
                         const double d = G(i, j) * g(0, j);
                         GX(i, j) += is * (d - s1 / m - xhat(i, j) * s2 / m);
                       }
                     }
                   });
  }

  // Multi-head self-attention over groups of `seq` consecutive rows.
  // qkv is [B*seq x 3d] laid out as [Q | K | V]; mask[b*seq + s] != 0 marks valid
  // tokens. Invalid keys are skipped entirely, so their contents cannot leak.
  Var masked_attention(Var qkv, const std::vector<std::uint8_t>& mask, int seq, int heads) {
    const Matrix& X = value(qkv);
    if (X.cols % 3 != 0) throw RangeError("attention: qkv width must be 3d");
    const int d = X.cols / 3;
    if (d % heads != 0) throw RangeError("attention: heads must divide the width");
    if (X.rows % seq != 0 || static_cast<int>(mask.size()) != X.rows) throw RangeError("attention: bad sequence shape");
    const int dh = d / heads;
    const int batch = X.rows / seq;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    // attention weights P[b][h][q][k]
    std::vector<double> P(static_cast<std::size_t>(batch) * heads * seq * seq, 0.0);
    auto pidx = [&](int b, int h, int q, int k) {
      return ((static_cast<std::size_t>(b) * heads + h) * seq + q) * seq + k;
    };
    Matrix Y(X.rows, d);
    for (int b = 0; b < batch; ++b) {
      bool any = false;
      for (int s = 0; s < seq; ++s) any = any || mask[static_cast<std::size_t>(b * seq + s)];
      if (!any) throw RangeError("attention: sequence without valid tokens");
      for (int h = 0; h < heads; ++h)
        for (int q = 0; q < seq; ++q) {
          const double* qr = X.row(b * seq + q) + h * dh;
          double mx = -INFINITY;
          for (int k = 0; k < seq; ++k) {
            if (!mask[static_cast<std::size_t>(b * seq + k)]) continue;
            const double* kr = X.row(b * seq + k) + d + h * dh;
            double s = 0.0;
            for (int t = 0; t < dh; ++t) s += qr[t] * kr[t];
            s *= inv_sqrt;
            P[pidx(b, h, q, k)] = s;
            mx = std::max(mx, s);
          }
          double z = 0.0;
          for (int k = 0; k < seq; ++k) {
            if (!mask[static_cast<std::size_t>(b * seq + k)]) continue;
            double& p = P[pidx(b, h, q, k)];
            p = std::exp(p - mx);
            z += p;
          }
          double* yr = Y.row(b * seq + q) + h * dh;
          for (int k = 0; k < seq; ++k) {
            if (!mask[static_cast<std::size_t>(b * seq + k)]) continue;
            double& p = P[pidx(b, h, q, k)];
            p /= z;
            const double* vr = X.row(b * seq + k) + 2 * d + h * dh;
            for (int t = 0; t < dh; ++t) yr[t] += p * vr[t];
          }
        }
    }
    return push_op(std::move(Y), {qkv}, [this, qkv, mask, seq, heads, d, dh, batch, inv_sqrt, P = std::move(P), out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      const Matrix& X = value(qkv);
      Matrix& GX = grad_ref(qkv);
      auto pidx = [&](int b, int h, int q, int k) {
        return ((static_cast<std::size_t>(b) * heads + h) * seq + q) * seq + k;
      };
      std::vector<double> dp(static_cast<std::size_t>(seq));
      for (int b = 0; b < batch; ++b)
        for (int h = 0; h < heads; ++h)
          for (int q = 0; q < seq; ++q) {
            const double* g = G.row(b * seq + q) + h * dh;
            double dot_pg = 0.0;
            for (int k = 0; k < seq; ++k) {
              if (!mask[static_cast<std::size_t>(b * seq + k)]) continue;
              const double p = P[pidx(b, h, q, k)];
              const double* vr = X.row(b * seq + k) + 2 * d + h * dh;
              double* gv = GX.row(b * seq + k) + 2 * d + h * dh;
              double s = 0.0;
              for (int t = 0; t < dh; ++t) {
                s += g[t] * vr[t];
                gv[t] += p * g[t];
              }
              dp[static_cast<std::size_t>(k)] = s;
              dot_pg += p * s;
            }
            const double* qr = X.row(b * seq + q) + h * dh;
            double* gq = GX.row(b * seq + q) + h * dh;
            for (int k = 0; k < seq; ++k) {
              if (!mask[static_cast<std::size_t>(b * seq + k)]) continue;
              const double p = P[pidx(b, h, q, k)];
              const double ds = p * (dp[static_cast<std::size_t>(k)] - dot_pg) * inv_sqrt;
              const double* kr = X.row(b * seq + k) + d + h * dh;
              double* gk = GX.row(b * seq + k) + d + h * dh;
              for (int t = 0; t < dh; ++t) {
                gq[t] += ds * kr[t];
                gk[t] += ds * qr[t];
              }
            }
          }
    });
  }

  // Mean over the valid rows of each group of `seq` rows -> [B x m].
  Var masked_mean(Var x, const std::vector<std::uint8_t>& mask, int seq) {
    const Matrix& X = value(x);
    const int batch = X.rows / seq;
    Matrix Y(batch, X.cols);
    std::vector<double> inv(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      int cnt = 0;
      for (int s = 0; s < seq; ++s)
        if (mask[static_cast<std::size_t>(b * seq + s)]) {
          ++cnt;
          const double* xr = X.row(b * seq + s);
          for (int j = 0; j < X.cols; ++j) Y(b, j) += xr[j];
        }
      if (cnt == 0) throw RangeError("masked_mean: no valid rows");
      inv[static_cast<std::size_t>(b)] = 1.0 / cnt;
      for (int j = 0; j < X.cols; ++j) Y(b, j) *= inv[static_cast<std::size_t>(b)];
    }
    return push_op(std::move(Y), {x}, [this, x, mask, seq, inv = std::move(inv), out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      Matrix& GX = grad_ref(x);
      for (int b = 0; b < G.rows; ++b)
        for (int s = 0; s < seq; ++s)
          if (mask[static_cast<std::size_t>(b * seq + s)])
            for (int j = 0; j < G.cols; ++j) GX(b * seq + s, j) += G(b, j) * inv[static_cast<std::size_t>(b)];
    });
  }

  Var concat_cols(Var x, Var y) {
    const Matrix& X = value(x);
    const Matrix& Y = value(y);
    if (X.rows != Y.rows) throw RangeError("concat: row mismatch");
    Matrix Z(X.rows, X.cols + Y.cols);
    for (int i = 0; i < X.rows; ++i) {
      for (int j = 0; j < X.cols; ++j) Z(i, j) = X(i, j);
      for (int j = 0; j < Y.cols; ++j) Z(i, X.cols + j) = Y(i, j);
    }
    return push_op(std::move(Z), {x, y}, [this, x, y, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      const int xc = value(x).cols;
      if (needs_grad(x)) {
        Matrix& GX = grad_ref(x);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < xc; ++j) GX(i, j) += G(i, j);
      }
      if (needs_grad(y)) {
        Matrix& GY = grad_ref(y);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < GY.cols; ++j) GY(i, j) += G(i, xc + j);
      }
    });
  }

  Var slice_cols(Var x, int start, int len) {
    const Matrix& X = value(x);
    if (start < 0 || start + len > X.cols) throw RangeError("slice: out of range");
    Matrix Y(X.rows, len);
    for (int i = 0; i < X.rows; ++i)
      for (int j = 0; j < len; ++j) Y(i, j) = X(i, start + j);
    return push_op(std::move(Y), {x}, [this, x, start, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      Matrix& GX = grad_ref(x);
      for (int i = 0; i < G.rows; ++i)
        for (int j = 0; j < G.cols; ++j) GX(i, start + j) += G(i, j);
    });
  }

  // Row-block repeat: [n x m] -> [n*times x m], row i copied to rows i*times .. i*times+times-1.
  Var repeat_rows(Var x, int times) {
    const Matrix& X = value(x);
    Matrix Y(X.rows * times, X.cols);
    for (int i = 0; i < X.rows; ++i)
      for (int r = 0; r < times; ++r)
        for (int j = 0; j < X.cols; ++j) Y(i * times + r, j) = X(i, j);
    return push_op(std::move(Y), {x}, [this, x, times, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      Matrix& GX = grad_ref(x);
      for (int i = 0; i < GX.rows; ++i)
        for (int r = 0; r < times; ++r)
          for (int j = 0; j < GX.cols; ++j) GX(i, j) += G(i * times + r, j);
    });
  }

  // Per-row sum -> [n x 1].
  Var sum_rows(Var x) {
    const Matrix& X = value(x);
    Matrix Y(X.rows, 1);
    for (int i = 0; i < X.rows; ++i)
      for (int j = 0; j < X.cols; ++j) Y(i, 0) += X(i, j);
    return push_op(std::move(Y), {x}, [this, x, out = next_id()] {
      const Matrix& G = nodes_[out].grad;
      Matrix& GX = grad_ref(x);
      for (int i = 0; i < GX.rows; ++i)
        for (int j = 0; j < GX.cols; ++j) GX(i, j) += G(i, 0);
    });
  }

  // Sum of all entries -> [1 x 1].
  Var sum(Var x) {
    double s = 0.0;
    for (double v : value(x).data) s += v;
    Matrix Y(1, 1, s);
    return push_op(std::move(Y), {x}, [this, x, out = next_id()] {
      const double g = nodes_[out].grad.data[0];
      for (double& v : grad_ref(x).data) v += g;
    });
  }

  Var square(Var x) { return mul(x, x); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::function<void()> backward;
  };

  int next_id() const { return static_cast<int>(nodes_.size()); }

  Var push(Matrix m, bool requires_grad, std::function<void()> bw) {
    Node n;
    n.value = std::move(m);
    n.requires_grad = requires_grad;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
  }

  Var push_op(Matrix m, std::initializer_list<Var> inputs, std::function<void()> bw) {
    bool rg = false;
    for (Var v : inputs) rg = rg || nodes_[v.id].requires_grad;
    return push(std::move(m), rg, rg ? std::move(bw) : nullptr);
  }

  void ensure_grad(int id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Matrix(n.value.rows, n.value.cols);
      n.has_grad = true;
    }
  }

  Matrix& grad_ref(Var v) {
    ensure_grad(v.id);
    return nodes_[v.id].grad;
  }

  static void accumulate(Matrix& dst, const Matrix& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst.data[i] += src.data[i];
  }

  std::vector<Node> nodes_;
};

}  // namespace lenav::cvae
