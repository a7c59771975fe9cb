#pragma once

// Dense 2-D tensors and a reverse-mode tape. The primitive set is closed:
// everything the encoder/decoder needs (attention included) is composed from
// the ops below, and each op carries its own backward rule so the whole set
// can be finite-difference checked one primitive at a time.

#include <cmath>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "audiodiff/util.hpp"

namespace audiodiff::grad {

template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), T(0)) {
    if (r <= 0 || c <= 0) throw std::invalid_argument("Mat: non-positive shape");
  }
  Mat(int r, int c, std::vector<T> data) : rows(r), cols(c), v(std::move(data)) {
    if (r <= 0 || c <= 0) throw std::invalid_argument("Mat: non-positive shape");
    if (v.size() != static_cast<size_t>(r) * static_cast<size_t>(c))
      throw std::invalid_argument("Mat: shape/value length mismatch");
  }

  size_t size() const { return v.size(); }
  T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  const T& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  T* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const T* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  static Mat zeros(int r, int c) { return Mat(r, c); }
  static Mat full(int r, int c, T value) {
    Mat m(r, c);
    std::fill(m.v.begin(), m.v.end(), value);
    return m;
  }
  static Mat gauss(int r, int c, T stddev, util::Rng& rng) {
    Mat m(r, c);
    for (auto& x : m.v) x = static_cast<T>(rng.next_gauss()) * stddev;
    return m;
  }
  static Mat uniform(int r, int c, T lo, T hi, util::Rng& rng) {
    Mat m(r, c);
    for (auto& x : m.v) x = static_cast<T>(rng.next_real(lo, hi));
    return m;
  }

  template <typename U>
  Mat<U> cast() const {
    Mat<U> m;
    m.rows = rows;
    m.cols = cols;
    m.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) m.v[i] = static_cast<U>(v[i]);
    return m;
  }
};

// --- raw matmul kernels; contiguous inner loops so the compiler vectorizes ---

template <typename T>
void mm_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<size_t>(i) * k;
    T* ci = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
void mm(const T* a, const T* b, T* c, int m, int k, int n) {
  std::memset(c, 0, sizeof(T) * static_cast<size_t>(m) * n);
  mm_acc(a, b, c, m, k, n);
}

template <typename T>
std::vector<T>& mm_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

// The grad kernels go through an explicit transpose so the inner loop stays a
// contiguous broadcast-FMA instead of a dot-product reduction.

// dA += dC * B^T
template <typename T>
void mm_grad_a(const T* dc, const T* b, T* da, int m, int k, int n) {
  auto& bt = mm_scratch<T>();
  bt.resize(static_cast<size_t>(n) * k);
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < n; ++j) bt[static_cast<size_t>(j) * k + p] = b[static_cast<size_t>(p) * n + j];
  mm_acc(dc, bt.data(), da, m, n, k);
}

// dB += A^T * dC
template <typename T>
void mm_grad_b(const T* a, const T* dc, T* db, int m, int k, int n) {
  auto& at = mm_scratch<T>();
  at.resize(static_cast<size_t>(k) * m);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) at[static_cast<size_t>(p) * m + i] = a[static_cast<size_t>(i) * k + p];
  mm_acc(at.data(), dc, db, k, m, n);
}

using VarId = int;

// Reverse-mode tape. Nodes are appended in forward order, which is already a
// topological order, so backward() is a single reverse sweep that visits each
// node exactly once. One Graph belongs to one training/inference pass.
template <typename T>
class Graph {
public:
  explicit Graph(bool record_grad = true, bool check_finite = false)
      : record_(record_grad), check_finite_(check_finite) {}

  bool recording() const { return record_; }

  VarId leaf(Mat<T> value, bool requires_grad) {
    return push(std::move(value), requires_grad && record_, {});
  }
  VarId constant(Mat<T> value) { return push(std::move(value), false, {}); }

  const Mat<T>& val(VarId id) const { return nodes_[check_id(id)].val; }
  const Mat<T>& grad(VarId id) const {
    const Node& n = nodes_[check_id(id)];
    if (!n.needs_grad) throw std::logic_error("grad requested for non-grad node");
    return n.grad;
  }
  T scalar(VarId id) const {
    const Mat<T>& m = val(id);
    if (m.size() != 1) throw std::invalid_argument("scalar: node is not 1x1");
    return m.v[0];
  }
  size_t node_count() const { return nodes_.size(); }

  // ---- primitives ----

  VarId add(VarId a, VarId b) {
    const Mat<T>&A = val(a), &B = val(b);
    require(A.same_shape(B), "add: shape mismatch");
    Mat<T> out(A.rows, A.cols);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = A.v[i] + B.v[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      if (g.needs(a)) g.accumulate(a, go.v.data());
      if (g.needs(b)) g.accumulate(b, go.v.data());
    });
  }

  // Gradient flows with +1 to a and -1 to b; both branches of a difference
  // representation receive updates.
  VarId sub(VarId a, VarId b) {
    const Mat<T>&A = val(a), &B = val(b);
    require(A.same_shape(B), "sub: shape mismatch");
    Mat<T> out(A.rows, A.cols);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = A.v[i] - B.v[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      if (g.needs(a)) g.accumulate(a, go.v.data());
      if (g.needs(b)) {
        Mat<T>& gb = g.nodes_[b].grad;
        for (size_t i = 0; i < go.size(); ++i) gb.v[i] -= go.v[i];
      }
    });
  }

  VarId mul(VarId a, VarId b) {
    const Mat<T>&A = val(a), &B = val(b);
    require(A.same_shape(B), "mul: shape mismatch");
    Mat<T> out(A.rows, A.cols);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = A.v[i] * B.v[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      const Mat<T>&A2 = g.val(a), &B2 = g.val(b);
      if (g.needs(a)) {
        Mat<T>& ga = g.nodes_[a].grad;
        for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i] * B2.v[i];
      }
      if (g.needs(b)) {
        Mat<T>& gb = g.nodes_[b].grad;
        for (size_t i = 0; i < go.size(); ++i) gb.v[i] += go.v[i] * A2.v[i];
      }
    });
  }

  VarId scale(VarId a, T s) {
    const Mat<T>& A = val(a);
    Mat<T> out(A.rows, A.cols);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = A.v[i] * s;
    return push(std::move(out), needs(a), [a, s](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      Mat<T>& ga = g.nodes_[a].grad;
      for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i] * s;
    });
  }

  VarId add_rowvec(VarId a, VarId v) {
    const Mat<T>&A = val(a), &V = val(v);
    require(V.rows == 1 && V.cols == A.cols, "add_rowvec: want 1xC bias");
    Mat<T> out(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j) + V.at(0, j);
    return push(std::move(out), needs(a) || needs(v), [a, v](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      if (g.needs(a)) g.accumulate(a, go.v.data());
      if (g.needs(v)) {
        Mat<T>& gv = g.nodes_[v].grad;
        for (int i = 0; i < go.rows; ++i)
          for (int j = 0; j < go.cols; ++j) gv.at(0, j) += go.at(i, j);
      }
    });
  }

  VarId mul_rowvec(VarId a, VarId v) {
    const Mat<T>&A = val(a), &V = val(v);
    require(V.rows == 1 && V.cols == A.cols, "mul_rowvec: want 1xC gain");
    Mat<T> out(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j) * V.at(0, j);
    return push(std::move(out), needs(a) || needs(v), [a, v](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      const Mat<T>&A2 = g.val(a), &V2 = g.val(v);
      if (g.needs(a)) {
        Mat<T>& ga = g.nodes_[a].grad;
        for (int i = 0; i < go.rows; ++i)
          for (int j = 0; j < go.cols; ++j) ga.at(i, j) += go.at(i, j) * V2.at(0, j);
      }
      if (g.needs(v)) {
        Mat<T>& gv = g.nodes_[v].grad;
        for (int i = 0; i < go.rows; ++i)
          for (int j = 0; j < go.cols; ++j) gv.at(0, j) += go.at(i, j) * A2.at(i, j);
      }
    });
  }

  VarId matmul(VarId a, VarId b) {
    const Mat<T>&A = val(a), &B = val(b);
    require(A.cols == B.rows, "matmul: inner dimension mismatch");
    Mat<T> out(A.rows, B.cols);
    mm(A.v.data(), B.v.data(), out.v.data(), A.rows, A.cols, B.cols);
    return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      const Mat<T>&A2 = g.val(a), &B2 = g.val(b);
      if (g.needs(a))
        mm_grad_a(go.v.data(), B2.v.data(), g.nodes_[a].grad.v.data(), A2.rows, A2.cols, B2.cols);
      if (g.needs(b))
        mm_grad_b(A2.v.data(), go.v.data(), g.nodes_[b].grad.v.data(), A2.rows, A2.cols, B2.cols);
    });
  }

  VarId transpose(VarId a) {
    const Mat<T>& A = val(a);
    Mat<T> out(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out.at(j, i) = A.at(i, j);
    return push(std::move(out), needs(a), [a](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      Mat<T>& ga = g.nodes_[a].grad;
      for (int i = 0; i < go.rows; ++i)
        for (int j = 0; j < go.cols; ++j) ga.at(j, i) += go.at(i, j);
    });
  }

  VarId reshape(VarId a, int r, int c) {
    const Mat<T>& A = val(a);
    require(static_cast<size_t>(r) * c == A.size(), "reshape: element count mismatch");
    Mat<T> out(r, c, A.v);
    return push(std::move(out), needs(a), [a](Graph& g, VarId o) {
      g.accumulate(a, g.nodes_[o].grad.v.data());
    });
  }

  VarId relu(VarId a) {
    const Mat<T>& A = val(a);
    Mat<T> out(A.rows, A.cols);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = A.v[i] > T(0) ? A.v[i] : T(0);
    return push(std::move(out), needs(a), [a](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      const Mat<T>& A2 = g.val(a);
      Mat<T>& ga = g.nodes_[a].grad;
      for (size_t i = 0; i < go.size(); ++i)
        if (A2.v[i] > T(0)) ga.v[i] += go.v[i];
    });
  }

  VarId tanh(VarId a) {
    const Mat<T>& A = val(a);
    Mat<T> out(A.rows, A.cols);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = std::tanh(A.v[i]);
    return push(std::move(out), needs(a), [a](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      const Mat<T>& Y = g.val(o);
      Mat<T>& ga = g.nodes_[a].grad;
      for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i] * (T(1) - Y.v[i] * Y.v[i]);
    });
  }

  // Row-wise normalization to zero mean / unit variance, no affine part.
  // Gain and bias are composed with mul_rowvec/add_rowvec where needed.
  VarId layernorm(VarId a, T eps = T(1e-5)) {
    const Mat<T>& A = val(a);
    Mat<T> out(A.rows, A.cols);
    std::vector<T> inv_std(static_cast<size_t>(A.rows));
    const int C = A.cols;
    for (int i = 0; i < A.rows; ++i) {
      const T* x = A.row(i);
      T mu = 0;
      for (int j = 0; j < C; ++j) mu += x[j];
      mu /= static_cast<T>(C);
      T var = 0;
      for (int j = 0; j < C; ++j) {
        const T d = x[j] - mu;
        var += d * d;
      }
      var /= static_cast<T>(C);
      const T inv = T(1) / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(i)] = inv;
      T* y = out.row(i);
      for (int j = 0; j < C; ++j) y[j] = (x[j] - mu) * inv;
    }
    return push(std::move(out), needs(a),
                [a, inv_std = std::move(inv_std)](Graph& g, VarId o) {
                  const Mat<T>& go = g.nodes_[o].grad;
                  const Mat<T>& Y = g.val(o);
                  Mat<T>& ga = g.nodes_[a].grad;
                  const int C = Y.cols;
                  for (int i = 0; i < Y.rows; ++i) {
                    const T* dy = go.row(i);
                    const T* y = Y.row(i);
                    T* dx = ga.row(i);
                    T mean_dy = 0, mean_dyy = 0;
                    for (int j = 0; j < C; ++j) {
                      mean_dy += dy[j];
                      mean_dyy += dy[j] * y[j];
                    }
                    mean_dy /= static_cast<T>(C);
                    mean_dyy /= static_cast<T>(C);
                    const T inv = inv_std[static_cast<size_t>(i)];
                    for (int j = 0; j < C; ++j)
                      dx[j] += inv * (dy[j] - mean_dy - y[j] * mean_dyy);
                  }
                });
  }

  VarId softmax_rows(VarId a) {
    const Mat<T>& A = val(a);
    Mat<T> out(A.rows, A.cols);
    const int C = A.cols;
    for (int i = 0; i < A.rows; ++i) {
      const T* x = A.row(i);
      T* p = out.row(i);
      T mx = x[0];
      for (int j = 1; j < C; ++j) mx = std::max(mx, x[j]);
      T z = 0;
      for (int j = 0; j < C; ++j) {
        p[j] = std::exp(x[j] - mx);
        z += p[j];
      }
      const T invz = T(1) / z;
      for (int j = 0; j < C; ++j) p[j] *= invz;
    }
    return push(std::move(out), needs(a), [a](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      const Mat<T>& P = g.val(o);
      Mat<T>& ga = g.nodes_[a].grad;
      const int C = P.cols;
      for (int i = 0; i < P.rows; ++i) {
        const T* dy = go.row(i);
        const T* p = P.row(i);
        T* dx = ga.row(i);
        T dot = 0;
        for (int j = 0; j < C; ++j) dot += dy[j] * p[j];
        for (int j = 0; j < C; ++j) dx[j] += p[j] * (dy[j] - dot);
      }
    });
  }

  // Mean over non-pad positions of -log softmax(logits)[target]. The scalar is
  // accumulated in double so the ln|V| anchor holds to 1e-6 in float mode.
  VarId softmax_cross_entropy(VarId logits, const std::vector<int>& targets, int pad_id) {
    const Mat<T>& L = val(logits);
    require(static_cast<int>(targets.size()) == L.rows, "cross_entropy: target length mismatch");
    const int V = L.cols;
    int live = 0;
    for (int id : targets) {
      if (id == pad_id) continue;
      require(id >= 0 && id < V, "cross_entropy: target id out of range");
      ++live;
    }
    require(live > 0, "cross_entropy: all positions are pad");

    Mat<T> probs(L.rows, V);
    double total = 0.0;
    for (int i = 0; i < L.rows; ++i) {
      const T* x = L.row(i);
      T* p = probs.row(i);
      T mx = x[0];
      for (int j = 1; j < V; ++j) mx = std::max(mx, x[j]);
      double z = 0.0;
      for (int j = 0; j < V; ++j) {
        p[j] = std::exp(x[j] - mx);
        z += static_cast<double>(p[j]);
      }
      const T invz = static_cast<T>(1.0 / z);
      for (int j = 0; j < V; ++j) p[j] *= invz;
      if (targets[static_cast<size_t>(i)] != pad_id)
        total -= std::log(static_cast<double>(p[targets[static_cast<size_t>(i)]]));
    }
    Mat<T> out(1, 1);
    out.v[0] = static_cast<T>(total / live);

    return push(std::move(out), needs(logits),
                [logits, targets, pad_id, live, probs = std::move(probs)](Graph& g, VarId o) {
                  const T go = g.nodes_[o].grad.v[0];
                  Mat<T>& gl = g.nodes_[logits].grad;
                  const T w = go / static_cast<T>(live);
                  for (int i = 0; i < probs.rows; ++i) {
                    if (targets[static_cast<size_t>(i)] == pad_id) continue;
                    const T* p = probs.row(i);
                    T* dx = gl.row(i);
                    for (int j = 0; j < probs.cols; ++j) dx[j] += w * p[j];
                    dx[targets[static_cast<size_t>(i)]] -= w;
                  }
                });
  }

  VarId embedding_gather(VarId table, const std::vector<int>& ids) {
    const Mat<T>& E = val(table);
    require(!ids.empty(), "embedding_gather: empty id list");
    for (int id : ids)
      require(id >= 0 && id < E.rows, "embedding_gather: id out of range");
    Mat<T> out(static_cast<int>(ids.size()), E.cols);
    for (size_t i = 0; i < ids.size(); ++i)
      std::memcpy(out.row(static_cast<int>(i)), E.row(ids[i]), sizeof(T) * static_cast<size_t>(E.cols));
    return push(std::move(out), needs(table), [table, ids](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      Mat<T>& ge = g.nodes_[table].grad;
      for (size_t i = 0; i < ids.size(); ++i) {
        const T* src = go.row(static_cast<int>(i));
        T* dst = ge.row(ids[i]);
        for (int j = 0; j < go.cols; ++j) dst[j] += src[j];
      }
    });
  }

  // im2col over time with zero "same" padding; a strided temporal conv is
  // unfold_time followed by matmul against a (kernel*C_in) x C_out weight.
  VarId unfold_time(VarId a, int kernel, int stride) {
    const Mat<T>& A = val(a);
    require(kernel >= 1 && kernel % 2 == 1, "unfold_time: kernel must be odd");
    require(stride >= 1, "unfold_time: stride must be >= 1");
    const int pad = (kernel - 1) / 2;
    const int t_out = (A.rows - 1) / stride + 1;  // == ceil(rows/stride)
    const int C = A.cols;
    Mat<T> out(t_out, kernel * C);
    for (int t = 0; t < t_out; ++t) {
      T* dst = out.row(t);
      for (int j = 0; j < kernel; ++j) {
        const int src = t * stride + j - pad;
        if (src >= 0 && src < A.rows)
          std::memcpy(dst + static_cast<size_t>(j) * C, A.row(src), sizeof(T) * static_cast<size_t>(C));
      }
    }
    return push(std::move(out), needs(a), [a, kernel, stride, pad](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      Mat<T>& ga = g.nodes_[a].grad;
      const int C = ga.cols;
      for (int t = 0; t < go.rows; ++t) {
        const T* src = go.row(t);
        for (int j = 0; j < kernel; ++j) {
          const int dst = t * stride + j - pad;
          if (dst < 0 || dst >= ga.rows) continue;
          T* d = ga.row(dst);
          const T* s = src + static_cast<size_t>(j) * C;
          for (int c = 0; c < C; ++c) d[c] += s[c];
        }
      }
    });
  }

  VarId col_slice(VarId a, int c0, int len) {
    const Mat<T>& A = val(a);
    require(c0 >= 0 && len >= 1 && c0 + len <= A.cols, "col_slice: out of range");
    Mat<T> out(A.rows, len);
    for (int i = 0; i < A.rows; ++i)
      std::memcpy(out.row(i), A.row(i) + c0, sizeof(T) * static_cast<size_t>(len));
    return push(std::move(out), needs(a), [a, c0](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      Mat<T>& ga = g.nodes_[a].grad;
      for (int i = 0; i < go.rows; ++i) {
        T* dst = ga.row(i) + c0;
        const T* src = go.row(i);
        for (int j = 0; j < go.cols; ++j) dst[j] += src[j];
      }
    });
  }

  VarId col_concat(const std::vector<VarId>& parts) {
    require(!parts.empty(), "col_concat: no inputs");
    const int rows = val(parts[0]).rows;
    int cols = 0;
    bool any_grad = false;
    for (VarId p : parts) {
      require(val(p).rows == rows, "col_concat: row mismatch");
      cols += val(p).cols;
      any_grad = any_grad || needs(p);
    }
    Mat<T> out(rows, cols);
    int off = 0;
    for (VarId p : parts) {
      const Mat<T>& P = val(p);
      for (int i = 0; i < rows; ++i)
        std::memcpy(out.row(i) + off, P.row(i), sizeof(T) * static_cast<size_t>(P.cols));
      off += P.cols;
    }
    return push(std::move(out), any_grad, [parts](Graph& g, VarId o) {
      const Mat<T>& go = g.nodes_[o].grad;
      int off2 = 0;
      for (VarId p : parts) {
        Mat<T>& gp = g.nodes_[p].grad;
        if (g.needs(p)) {
          for (int i = 0; i < go.rows; ++i) {
            const T* src = go.row(i) + off2;
            T* dst = gp.row(i);
            for (int j = 0; j < gp.cols; ++j) dst[j] += src[j];
          }
        }
        off2 += g.val(p).cols;
      }
    });
  }

  VarId sum_all(VarId a) {
    const Mat<T>& A = val(a);
    Mat<T> out(1, 1);
    double s = 0.0;
    for (T x : A.v) s += static_cast<double>(x);
    out.v[0] = static_cast<T>(s);
    return push(std::move(out), needs(a), [a](Graph& g, VarId o) {
      const T go = g.nodes_[o].grad.v[0];
      Mat<T>& ga = g.nodes_[a].grad;
      for (auto& x : ga.v) x += go;
    });
  }

  VarId mean_all(VarId a) {
    const Mat<T>& A = val(a);
    const T n = static_cast<T>(A.size());
    Mat<T> out(1, 1);
    double s = 0.0;
    for (T x : A.v) s += static_cast<double>(x);
    out.v[0] = static_cast<T>(s / static_cast<double>(A.size()));
    return push(std::move(out), needs(a), [a, n](Graph& g, VarId o) {
      const T go = g.nodes_[o].grad.v[0] / n;
      Mat<T>& ga = g.nodes_[a].grad;
      for (auto& x : ga.v) x += go;
    });
  }

  // ---- backward ----

  void backward(VarId loss) {
    check_id(loss);
    require(val(loss).size() == 1, "backward: loss must be a scalar");
    require(record_, "backward: graph was built without gradient recording");
    Node& l = nodes_[loss];
    require(l.needs_grad, "backward: loss does not depend on any gradient leaf");
    l.grad.v[0] = T(1);
    for (int i = loss; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.needs_grad && n.back) n.back(*this, i);
    }
  }

private:
  struct Node {
    Mat<T> val;
    Mat<T> grad;  // allocated iff needs_grad
    std::function<void(Graph&, VarId)> back;
    bool needs_grad = false;
  };

  bool needs(VarId id) const { return nodes_[check_id(id)].needs_grad; }

  void accumulate(VarId id, const T* src) {
    Mat<T>& g = nodes_[check_id(id)].grad;
    for (size_t i = 0; i < g.size(); ++i) g.v[i] += src[i];
  }

  VarId check_id(VarId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
      throw std::out_of_range("Graph: node referenced before definition");
    return id;
  }

  static void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  }

  VarId push(Mat<T> value, bool needs_grad, std::function<void(Graph&, VarId)> back) {
    if (check_finite_ && !value.all_finite())
      throw std::runtime_error("Graph: non-finite value produced");
    Node n;
    n.needs_grad = needs_grad && record_;
    if (n.needs_grad) {
      n.grad = Mat<T>::zeros(value.rows, value.cols);
      n.back = std::move(back);
    }
    n.val = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  bool record_;
  bool check_finite_;
};

}  // namespace audiodiff::grad
