// Copyright 2026 The refseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal reverse-mode automatic differentiation over Tensor values.
//
// A Var is a node of a dynamically built graph. Each op computes its value
// eagerly and records a closure that scatters the node's gradient into its
// parents. Nodes whose inputs do not require gradients record nothing.
//
// Layout conventions: matrices are [rows, cols]; feature maps are [C, H, W]
// for a single image (no batch axis).

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <unordered_set>
#include <vector>

#include "refseg/error.hpp"
#include "refseg/mask.hpp"
#include "refseg/tensor.hpp"

namespace refseg::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer() {
    if (grad.shape != value.shape) grad = Tensor(value.shape);
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  /// Gradient after backward(); zeros when the node was never reached.
  Tensor grad() const {
    return node_->grad.shape == node_->value.shape ? node_->grad : Tensor(node_->value.shape);
  }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

inline Var leaf(Tensor value, bool requires_grad = false) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

inline Var constant(Tensor value) { return leaf(std::move(value), false); }

namespace detail {

inline Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

inline void expect_shape(const Var& v, const Shape& s, const char* what) {
  if (v.shape() != s) {
    fail(ErrorCode::kShapeError,
         std::string(what) + ": got " + shape_str(v.shape()) + ", expected " + shape_str(s));
  }
}

inline void expect_rank(const Var& v, std::size_t r, const char* what) {
  if (v.shape().size() != r) {
    fail(ErrorCode::kShapeError, std::string(what) + ": expected rank " + std::to_string(r) +
                                     ", got " + shape_str(v.shape()));
  }
}

}  // namespace detail

/// Runs reverse accumulation from a scalar.
inline void backward(const Var& root) {
  if (root.value().size() != 1) fail(ErrorCode::kShapeError, "backward() needs a scalar root");
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS; graphs from deep encoders overflow naive recursion.
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer().data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
  detail::expect_shape(b, a.shape(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::expect_shape(b, a.shape(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.parents[0];
    Node& y = *self.parents[1];
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data) v *= s;
  return detail::make(std::move(out), {a}, [s](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

inline Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return detail::make(Tensor({1}, s), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g.data) v += self.grad[0];
  });
}

/// Mean of a list of scalars.
inline Var mean_scalars(std::span<const Var> xs) {
  if (xs.empty()) fail(ErrorCode::kEmptySequence, "mean of zero terms");
  Var acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return scale(acc, 1.0 / static_cast<double>(xs.size()));
}

inline Var relu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return detail::make(std::move(out), {a}, [](Node& self) {
    Node& x = *self.parents[0];
    auto& g = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.value[i] > 0.0) g[i] += self.grad[i];
  });
}

// tanh approximation of GELU
inline Var gelu(const Var& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  Tensor out = a.value();
  for (auto& v : out.data) v = 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v)));
  return detail::make(std::move(out), {a}, [](Node& self) {
    Node& x = *self.parents[0];
    auto& g = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x.value[i];
      const double u = k * (v + 0.044715 * v * v * v);
      const double t = std::tanh(u);
      const double du = k * (1.0 + 3.0 * 0.044715 * v * v);
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      g[i] += self.grad[i] * d;
    }
  });
}

inline Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.value().size()) {
    fail(ErrorCode::kShapeError, "reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  Tensor out(std::move(shape), a.value().data);
  return detail::make(std::move(out), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ------------------------------------------------------------------- matrices

inline Var matmul(const Var& a, const Var& b) {
  detail::expect_rank(a, 2, "matmul lhs");
  detail::expect_rank(b, 2, "matmul rhs");
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    fail(ErrorCode::kShapeError, "matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  const auto& A = a.value().data;
  const auto& B = b.value().data;
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      for (int j = 0; j < n; ++j) out.data[i * n + j] += av * B[p * n + j];
    }
  return detail::make(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& x = *self.parents[0];
    Node& y = *self.parents[1];
    const auto& G = self.grad.data;
    if (x.requires_grad) {
      auto& gx = x.grad_buffer().data;
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += G[i * n + j] * y.value.data[p * n + j];
          gx[i * k + p] += s;
        }
    }
    if (y.requires_grad) {
      auto& gy = y.grad_buffer().data;
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const double av = x.value.data[i * k + p];
          for (int j = 0; j < n; ++j) gy[p * n + j] += av * G[i * n + j];
        }
    }
  });
}

inline Var transpose(const Var& a) {
  detail::expect_rank(a, 2, "transpose");
  const int m = a.shape()[0], n = a.shape()[1];
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data[j * m + i] = a.value().data[i * n + j];
  return detail::make(std::move(out), {a}, [m, n](Node& self) {
    auto& g = self.parents[0]->grad_buffer().data;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g[i * n + j] += self.grad.data[j * m + i];
  });
}

/// x[m,n] + bias[n] broadcast over rows.
inline Var add_row_vector(const Var& x, const Var& bias) {
  detail::expect_rank(x, 2, "add_row_vector");
  const int m = x.shape()[0], n = x.shape()[1];
  detail::expect_shape(bias, {n}, "add_row_vector bias");
  Tensor out = x.value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data[i * n + j] += bias.value().data[j];
  return detail::make(std::move(out), {x, bias}, [m, n](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer().data;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) g[j] += self.grad.data[i * n + j];
    }
  });
}

inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row_vector(matmul(x, weight), bias);
}

inline Var softmax_rows(const Var& a) {
  detail::expect_rank(a, 2, "softmax_rows");
  const int m = a.shape()[0], n = a.shape()[1];
  Tensor out = a.value();
  for (int i = 0; i < m; ++i) {
    double* row = out.data.data() + static_cast<std::size_t>(i) * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += (row[j] = std::exp(row[j] - mx));
    for (int j = 0; j < n; ++j) row[j] /= z;
  }
  return detail::make(std::move(out), {a}, [m, n](Node& self) {
    auto& g = self.parents[0]->grad_buffer().data;
    for (int i = 0; i < m; ++i) {
      const double* y = self.value.data.data() + static_cast<std::size_t>(i) * n;
      const double* gy = self.grad.data.data() + static_cast<std::size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += y[j] * gy[j];
      for (int j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

/// Normalizes each row to zero mean / unit variance, then applies gain and shift.
inline Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  detail::expect_rank(x, 2, "layer_norm_rows");
  const int m = x.shape()[0], n = x.shape()[1];
  detail::expect_shape(gamma, {n}, "layer_norm gamma");
  detail::expect_shape(beta, {n}, "layer_norm beta");
  Tensor out({m, n});
  std::vector<double> xhat(static_cast<std::size_t>(m) * n);
  std::vector<double> inv_std(m);
  for (int i = 0; i < m; ++i) {
    const double* row = x.value().data.data() + static_cast<std::size_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= n;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) {
      const double h = (row[j] - mean) * inv_std[i];
      xhat[i * n + j] = h;
      out.data[i * n + j] = h * gamma.value().data[j] + beta.value().data[j];
    }
  }
  return detail::make(
      std::move(out), {x, gamma, beta},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& G = self.grad.data;
        if (pg.requires_grad) {
          auto& g = pg.grad_buffer().data;
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) g[j] += G[i * n + j] * xhat[i * n + j];
        }
        if (pb.requires_grad) {
          auto& g = pb.grad_buffer().data;
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) g[j] += G[i * n + j];
        }
        if (px.requires_grad) {
          auto& g = px.grad_buffer().data;
          std::vector<double> dh(n);
          for (int i = 0; i < m; ++i) {
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (int j = 0; j < n; ++j) {
              dh[j] = G[i * n + j] * pg.value.data[j];
              sum_dh += dh[j];
              sum_dh_h += dh[j] * xhat[i * n + j];
            }
            for (int j = 0; j < n; ++j) {
              g[i * n + j] +=
                  inv_std[i] * (dh[j] - sum_dh / n - xhat[i * n + j] * sum_dh_h / n);
            }
          }
        }
      });
}

/// Gathers rows of table[V,D] -> [T,D].
inline Var embedding(const Var& table, const std::vector<int>& ids) {
  detail::expect_rank(table, 2, "embedding");
  const int v = table.shape()[0], d = table.shape()[1];
  const int t = static_cast<int>(ids.size());
  Tensor out({t, d});
  for (int i = 0; i < t; ++i) {
    if (ids[i] < 0 || ids[i] >= v) {
      fail(ErrorCode::kTokenOutOfRange, "token id " + std::to_string(ids[i]) + " outside [0," +
                                            std::to_string(v) + ")");
    }
    std::copy_n(table.value().data.begin() + static_cast<std::ptrdiff_t>(ids[i]) * d, d,
                out.data.begin() + static_cast<std::ptrdiff_t>(i) * d);
  }
  return detail::make(std::move(out), {table}, [ids, d](Node& self) {
    auto& g = self.parents[0]->grad_buffer().data;
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < d; ++j) g[ids[i] * d + j] += self.grad.data[i * d + j];
  });
}

inline Var slice_rows(const Var& a, int start, int count) {
  detail::expect_rank(a, 2, "slice_rows");
  const int m = a.shape()[0], n = a.shape()[1];
  if (start < 0 || count < 0 || start + count > m) fail(ErrorCode::kShapeError, "slice_rows range");
  Tensor out({count, n});
  std::copy_n(a.value().data.begin() + static_cast<std::ptrdiff_t>(start) * n,
              static_cast<std::ptrdiff_t>(count) * n, out.data.begin());
  return detail::make(std::move(out), {a}, [start, n](Node& self) {
    auto& g = self.parents[0]->grad_buffer().data;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * n + i] += self.grad[i];
  });
}

inline Var slice_cols(const Var& a, int start, int count) {
  detail::expect_rank(a, 2, "slice_cols");
  const int m = a.shape()[0], n = a.shape()[1];
  if (start < 0 || count < 0 || start + count > n) fail(ErrorCode::kShapeError, "slice_cols range");
  Tensor out({m, count});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < count; ++j) out.data[i * count + j] = a.value().data[i * n + start + j];
  return detail::make(std::move(out), {a}, [m, n, start, count](Node& self) {
    auto& g = self.parents[0]->grad_buffer().data;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < count; ++j) g[i * n + start + j] += self.grad.data[i * count + j];
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorCode::kShapeError, "concat_cols of nothing");
  const int m = parts[0].shape()[0];
  std::vector<int> widths;
  int total = 0;
  for (const auto& p : parts) {
    detail::expect_rank(p, 2, "concat_cols");
    if (p.shape()[0] != m) fail(ErrorCode::kShapeError, "concat_cols row mismatch");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor out({m, total});
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < widths[k]; ++j)
        out.data[i * total + off + j] = parts[k].value().data[i * widths[k] + j];
    off += widths[k];
  }
  return detail::make(std::move(out), parts, [m, total, widths](Node& self) {
    int off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad) {
        auto& g = p.grad_buffer().data;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad.data[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

// -------------------------------------------------------------- feature maps

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
};

inline int conv_out_size(int in, int kernel, const ConvSpec& s) {
  return (in + 2 * s.padding - s.dilation * (kernel - 1) - 1) / s.stride + 1;
}

/// x[C,H,W] * w[O,C,k,k] + b[O] -> [O,H',W'] with zero padding.
inline Var conv2d(const Var& x, const Var& w, const Var& b, ConvSpec spec) {
  detail::expect_rank(x, 3, "conv2d input");
  detail::expect_rank(w, 4, "conv2d weight");
  const int c_in = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const int c_out = w.shape()[0], k = w.shape()[2];
  if (w.shape()[1] != c_in || w.shape()[3] != k) {
    fail(ErrorCode::kShapeError,
         "conv2d weight " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
  }
  detail::expect_shape(b, {c_out}, "conv2d bias");
  const int ho = conv_out_size(h, k, spec), wo = conv_out_size(wd, k, spec);
  if (ho < 1 || wo < 1) fail(ErrorCode::kShapeError, "conv2d output would be empty");

  Tensor out({c_out, ho, wo});
  const auto& X = x.value().data;
  const auto& W = w.value().data;
  for (int o = 0; o < c_out; ++o) {
    double* dst = out.data.data() + static_cast<std::size_t>(o) * ho * wo;
    std::fill(dst, dst + ho * wo, b.value().data[o]);
    for (int c = 0; c < c_in; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const double wv = W[((static_cast<std::size_t>(o) * c_in + c) * k + ky) * k + kx];
          if (wv == 0.0) continue;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * spec.stride - spec.padding + ky * spec.dilation;
            if (iy < 0 || iy >= h) continue;
            const double* src = X.data() + (static_cast<std::size_t>(c) * h + iy) * wd;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * spec.stride - spec.padding + kx * spec.dilation;
              if (ix < 0 || ix >= wd) continue;
              dst[oy * wo + ox] += wv * src[ix];
            }
          }
        }
  }
  return detail::make(
      std::move(out), {x, w, b}, [=](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& G = self.grad.data;
        if (pb.requires_grad) {
          auto& g = pb.grad_buffer().data;
          for (int o = 0; o < c_out; ++o)
            for (int i = 0; i < ho * wo; ++i) g[o] += G[static_cast<std::size_t>(o) * ho * wo + i];
        }
        const bool want_x = px.requires_grad;
        const bool want_w = pw.requires_grad;
        if (!want_x && !want_w) return;
        std::vector<double>* gx = want_x ? &px.grad_buffer().data : nullptr;
        std::vector<double>* gw = want_w ? &pw.grad_buffer().data : nullptr;
        const auto& Xv = px.value.data;
        const auto& Wv = pw.value.data;
        for (int o = 0; o < c_out; ++o) {
          const double* go = G.data() + static_cast<std::size_t>(o) * ho * wo;
          for (int c = 0; c < c_in; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const std::size_t widx = ((static_cast<std::size_t>(o) * c_in + c) * k + ky) * k + kx;
                const double wv = Wv[widx];
                double wacc = 0.0;
                for (int oy = 0; oy < ho; ++oy) {
                  const int iy = oy * spec.stride - spec.padding + ky * spec.dilation;
                  if (iy < 0 || iy >= h) continue;
                  const std::size_t row = (static_cast<std::size_t>(c) * h + iy) * wd;
                  for (int ox = 0; ox < wo; ++ox) {
                    const int ix = ox * spec.stride - spec.padding + kx * spec.dilation;
                    if (ix < 0 || ix >= wd) continue;
                    const double gv = go[oy * wo + ox];
                    if (gw) wacc += gv * Xv[row + ix];
                    if (gx) (*gx)[row + ix] += gv * wv;
                  }
                }
                if (gw) (*gw)[widx] += wacc;
              }
        }
      });
}

/// [C,H,W] -> [C]
inline Var global_avg_pool(const Var& x) {
  detail::expect_rank(x, 3, "global_avg_pool");
  const int c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
  Tensor out({c});
  for (int i = 0; i < c; ++i) {
    double s = 0.0;
    for (int p = 0; p < hw; ++p) s += x.value().data[static_cast<std::size_t>(i) * hw + p];
    out.data[i] = s / hw;
  }
  return detail::make(std::move(out), {x}, [c, hw](Node& self) {
    auto& g = self.parents[0]->grad_buffer().data;
    for (int i = 0; i < c; ++i)
      for (int p = 0; p < hw; ++p) g[static_cast<std::size_t>(i) * hw + p] += self.grad.data[i] / hw;
  });
}

/// [C] -> [C,H,W], constant over space.
inline Var broadcast_spatial(const Var& v, int h, int w) {
  detail::expect_rank(v, 1, "broadcast_spatial");
  const int c = v.shape()[0], hw = h * w;
  Tensor out({c, h, w});
  for (int i = 0; i < c; ++i)
    std::fill_n(out.data.begin() + static_cast<std::ptrdiff_t>(i) * hw, hw, v.value().data[i]);
  return detail::make(std::move(out), {v}, [c, hw](Node& self) {
    auto& g = self.parents[0]->grad_buffer().data;
    for (int i = 0; i < c; ++i)
      for (int p = 0; p < hw; ++p) g[i] += self.grad.data[static_cast<std::size_t>(i) * hw + p];
  });
}

inline Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorCode::kShapeError, "concat_channels of nothing");
  const int h = parts[0].shape().at(1), w = parts[0].shape().at(2);
  int total = 0;
  for (const auto& p : parts) {
    detail::expect_rank(p, 3, "concat_channels");
    if (p.shape()[1] != h || p.shape()[2] != w) {
      fail(ErrorCode::kShapeError, "concat_channels spatial mismatch");
    }
    total += p.shape()[0];
  }
  Tensor out({total, h, w});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
  }
  return detail::make(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        auto& g = p->grad_buffer().data;
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad.data[off + i];
      }
      off += n;
    }
  });
}

/// out[c,y,x] = x[c,y,x] * v[c]
inline Var scale_channels(const Var& x, const Var& v) {
  detail::expect_rank(x, 3, "scale_channels");
  const int c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
  detail::expect_shape(v, {c}, "scale_channels vector");
  Tensor out = x.value();
  for (int i = 0; i < c; ++i)
    for (int p = 0; p < hw; ++p) out.data[static_cast<std::size_t>(i) * hw + p] *= v.value().data[i];
  return detail::make(std::move(out), {x, v}, [c, hw](Node& self) {
    Node& px = *self.parents[0];
    Node& pv = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.grad_buffer().data;
      for (int i = 0; i < c; ++i)
        for (int p = 0; p < hw; ++p) {
          const std::size_t idx = static_cast<std::size_t>(i) * hw + p;
          g[idx] += self.grad.data[idx] * pv.value.data[i];
        }
    }
    if (pv.requires_grad) {
      auto& g = pv.grad_buffer().data;
      for (int i = 0; i < c; ++i)
        for (int p = 0; p < hw; ++p) {
          const std::size_t idx = static_cast<std::size_t>(i) * hw + p;
          g[i] += self.grad.data[idx] * px.value.data[idx];
        }
    }
  });
}

/// out[c,y,x] = x[c,y,x] + v[c]
inline Var add_channels(const Var& x, const Var& v) {
  detail::expect_rank(x, 3, "add_channels");
  return add(x, broadcast_spatial(v, x.shape()[1], x.shape()[2]));
}

/// Source coordinate and weights for half-pixel-centred bilinear resampling
/// of one axis (the align_corners=false convention).
struct LinearTap {
  int i0 = 0;
  int i1 = 0;
  double w0 = 1.0;
  double w1 = 0.0;
};

inline std::vector<LinearTap> bilinear_taps(int in, int out) {
  std::vector<LinearTap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const double frac = src - i0;
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

/// [C,h,w] -> [C,H,W]
inline Var upsample_bilinear(const Var& x, int out_h, int out_w) {
  detail::expect_rank(x, 3, "upsample_bilinear");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  Tensor out({c, out_h, out_w});
  const auto& X = x.value();
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& a = ty[oy];
        const auto& b = tx[ox];
        out.at(ch, oy, ox) = a.w0 * (b.w0 * X.at(ch, a.i0, b.i0) + b.w1 * X.at(ch, a.i0, b.i1)) +
                            a.w1 * (b.w0 * X.at(ch, a.i1, b.i0) + b.w1 * X.at(ch, a.i1, b.i1));
      }
  return detail::make(std::move(out), {x}, [c, out_h, out_w, ty, tx](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          const double gv = self.grad.at(ch, oy, ox);
          const auto& a = ty[oy];
          const auto& b = tx[ox];
          g.at(ch, a.i0, b.i0) += gv * a.w0 * b.w0;
          g.at(ch, a.i0, b.i1) += gv * a.w0 * b.w1;
          g.at(ch, a.i1, b.i0) += gv * a.w1 * b.w0;
          g.at(ch, a.i1, b.i1) += gv * a.w1 * b.w1;
        }
  });
}

// ---------------------------------------------------------------------- losses

/// Mean per-pixel two-class cross-entropy. Channel 0 is foreground, 1 background.
inline Var pixel_cross_entropy(const Var& logits, const Mask& target) {
  detail::expect_rank(logits, 3, "pixel_cross_entropy");
  if (logits.shape()[0] != 2 || logits.shape()[1] != target.height() ||
      logits.shape()[2] != target.width()) {
    fail(ErrorCode::kDimensionMismatch,
         "logits " + shape_str(logits.shape()) + " vs mask " + std::to_string(target.height()) +
             "x" + std::to_string(target.width()));
  }
  const std::size_t hw = target.size();
  const auto& L = logits.value().data;
  std::vector<double> p_fg(hw);
  double total = 0.0;
  for (std::size_t i = 0; i < hw; ++i) {
    const double fg = L[i], bg = L[hw + i];
    const double mx = std::max(fg, bg);
    const double lse = mx + std::log(std::exp(fg - mx) + std::exp(bg - mx));
    total += lse - (target[i] ? fg : bg);
    p_fg[i] = std::exp(fg - lse);
  }
  Tensor out({1}, total / static_cast<double>(hw));
  return detail::make(std::move(out), {logits}, [p_fg = std::move(p_fg), target, hw](Node& self) {
    auto& g = self.parents[0]->grad_buffer().data;
    const double s = self.grad.data[0] / static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) {
      const double y = target[i] ? 1.0 : 0.0;
      g[i] += s * (p_fg[i] - y);
      g[hw + i] += s * ((1.0 - p_fg[i]) - (1.0 - y));
    }
  });
}

/// Mean softmax cross-entropy over the listed rows of logits[T,V].
inline Var token_cross_entropy(const Var& logits, const std::vector<int>& rows,
                               const std::vector<int>& targets) {
  detail::expect_rank(logits, 2, "token_cross_entropy");
  if (rows.empty() || rows.size() != targets.size()) {
    fail(ErrorCode::kInvalidArgument, "token_cross_entropy needs matching, non-empty rows/targets");
  }
  const int v = logits.shape()[1];
  const auto& L = logits.value().data;
  std::vector<double> probs(rows.size() * static_cast<std::size_t>(v));
  double total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double* row = L.data() + static_cast<std::size_t>(rows[r]) * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (int j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[targets[r]];
    for (int j = 0; j < v; ++j) probs[r * v + j] = std::exp(row[j] - lse);
  }
  const double n = static_cast<double>(rows.size());
  return detail::make(Tensor({1}, total / n), {logits},
                      [probs = std::move(probs), rows, targets, v, n](Node& self) {
                        auto& g = self.parents[0]->grad_buffer().data;
                        const double s = self.grad.data[0] / n;
                        for (std::size_t r = 0; r < rows.size(); ++r)
                          for (int j = 0; j < v; ++j) {
                            const double y = j == targets[r] ? 1.0 : 0.0;
                            g[static_cast<std::size_t>(rows[r]) * v + j] += s * (probs[r * v + j] - y);
                          }
                      });
}

}  // namespace refseg::ag
