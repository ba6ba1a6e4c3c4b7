#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "csm/errors.hpp"
#include "csm/tensor.hpp"

namespace csm {

// out += a.b   with a (m,k), b (k,n), out (m,n)
template <typename T>
void gemm_nn_acc(Tensor<T>& out, const Tensor<T>& a, const Tensor<T>& b) {
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  for (int64_t i = 0; i < m; ++i) {
    T* oi = out.values.data() + i * n;
    const T* ai = a.values.data() + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b.values.data() + p * n;
      for (int64_t j = 0; j < n; ++j) oi[j] += av * bp[j];
    }
  }
}

// out += a.b^T   with a (m,k), b (n,k), out (m,n)
template <typename T>
void gemm_nt_acc(Tensor<T>& out, const Tensor<T>& a, const Tensor<T>& b) {
  const int64_t m = a.rows(), k = a.cols(), n = b.rows();
  for (int64_t i = 0; i < m; ++i) {
    const T* ai = a.values.data() + i * k;
    T* oi = out.values.data() + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T* bj = b.values.data() + j * k;
      T acc = T(0);
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      oi[j] += acc;
    }
  }
}

// out += a^T.b   with a (k,m), b (k,n), out (m,n)
template <typename T>
void gemm_tn_acc(Tensor<T>& out, const Tensor<T>& a, const Tensor<T>& b) {
  const int64_t k = a.rows(), m = a.cols(), n = b.cols();
  for (int64_t p = 0; p < k; ++p) {
    const T* ap = a.values.data() + p * m;
    const T* bp = b.values.data() + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const T av = ap[i];
      T* oi = out.values.data() + i * n;
      for (int64_t j = 0; j < n; ++j) oi[j] += av * bp[j];
    }
  }
}

// A (series, token) slot in the flattened series-major layout.
struct Slot {
  int series = 0;
  int token = 0;
};

// Reverse-mode tape over dense tensors. Node creation order is the
// topological order, so one reverse sweep visits every node exactly once.
// Leaves that do not participate in the loss keep their exact-zero gradient.
template <typename T>
class Tape {
 public:
  using Id = int32_t;

  Id leaf(Tensor<T> v, bool requires_grad, std::string label = "leaf") {
    return push(std::move(v), requires_grad, std::move(label), nullptr, false);
  }

  Id constant(Tensor<T> v, std::string label = "const") {
    return push(std::move(v), false, std::move(label), nullptr, false);
  }

  const Tensor<T>& value(Id id) const { return node(id).value; }

  const Tensor<T>& grad(Id id) const {
    if (!ran_backward_) throw UsageError("gradient requested before backward");
    const Node& nd = node(id);
    if (!nd.requires_grad) throw UsageError("gradient of a non-differentiable node");
    return nd.grad;
  }

  void set_finite_checks(bool on) { finite_checks_ = on; }

  size_t size() const { return nodes_.size(); }

  Id matmul(Id a, Id b, std::string label = "matmul") {
    const Tensor<T>&A = val(a), &B = val(b);
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.cols() != B.rows())
      throw UsageError(label + ": incompatible shapes " + shape_str(A.shape) +
                       " x " + shape_str(B.shape));
    Tensor<T> out({A.rows(), B.cols()});
    gemm_nn_acc(out, A, B);
    return push(std::move(out), needs_grad(a) || needs_grad(b), std::move(label),
                [this, a, b](Id o) {
                  if (needs_grad(a)) gemm_nt_acc(grad_buf(a), node(o).grad, val(b));
                  if (needs_grad(b)) gemm_tn_acc(grad_buf(b), val(a), node(o).grad);
                });
  }

  // a.b^T, used for attention scores so no explicit transpose node is needed.
  Id matmul_nt(Id a, Id b, std::string label = "matmul_nt") {
    const Tensor<T>&A = val(a), &B = val(b);
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.cols() != B.cols())
      throw UsageError(label + ": incompatible shapes");
    Tensor<T> out({A.rows(), B.rows()});
    gemm_nt_acc(out, A, B);
    return push(std::move(out), needs_grad(a) || needs_grad(b), std::move(label),
                [this, a, b](Id o) {
                  if (needs_grad(a)) gemm_nn_acc(grad_buf(a), node(o).grad, val(b));
                  if (needs_grad(b)) gemm_tn_acc(grad_buf(b), node(o).grad, val(a));
                });
  }

  Id add(Id a, Id b, std::string label = "add") {
    const Tensor<T>&A = val(a), &B = val(b);
    if (!A.same_shape(B)) throw UsageError(label + ": shape mismatch");
    Tensor<T> out = A;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += B.values[i];
    return push(std::move(out), needs_grad(a) || needs_grad(b), std::move(label),
                [this, a, b](Id o) {
                  const auto& g = node(o).grad.values;
                  if (needs_grad(a)) accumulate(grad_buf(a).values, g);
                  if (needs_grad(b)) accumulate(grad_buf(b).values, g);
                });
  }

  // (m,n) + broadcast row (n): standard bias add.
  Id add_row(Id a, Id row, std::string label = "add_row") {
    const Tensor<T>&A = val(a), &R = val(row);
    if (A.shape.size() != 2 || R.numel() != A.cols())
      throw UsageError(label + ": row length must equal column count");
    Tensor<T> out = A;
    const int64_t m = A.rows(), n = A.cols();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) out.values[static_cast<size_t>(i * n + j)] += R.values[static_cast<size_t>(j)];
    return push(std::move(out), needs_grad(a) || needs_grad(row), std::move(label),
                [this, a, row, m, n](Id o) {
                  const auto& g = node(o).grad.values;
                  if (needs_grad(a)) accumulate(grad_buf(a).values, g);
                  if (needs_grad(row)) {
                    auto& gr = grad_buf(row).values;
                    for (int64_t i = 0; i < m; ++i)
                      for (int64_t j = 0; j < n; ++j) gr[static_cast<size_t>(j)] += g[static_cast<size_t>(i * n + j)];
                  }
                });
  }

  Id scale(Id a, T c, std::string label = "scale") {
    Tensor<T> out = val(a);
    for (auto& v : out.values) v *= c;
    return push(std::move(out), needs_grad(a), std::move(label), [this, a, c](Id o) {
      if (!needs_grad(a)) return;
      auto& ga = grad_buf(a).values;
      const auto& g = node(o).grad.values;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
  }

  Id mul(Id a, Id b, std::string label = "mul") {
    const Tensor<T>&A = val(a), &B = val(b);
    if (!A.same_shape(B)) throw UsageError(label + ": shape mismatch");
    Tensor<T> out = A;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] *= B.values[i];
    return push(std::move(out), needs_grad(a) || needs_grad(b), std::move(label),
                [this, a, b](Id o) {
                  const auto& g = node(o).grad.values;
                  if (needs_grad(a)) {
                    auto& ga = grad_buf(a).values;
                    const auto& bv = val(b).values;
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                  }
                  if (needs_grad(b)) {
                    auto& gb = grad_buf(b).values;
                    const auto& av = val(a).values;
                    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                  }
                });
  }

  // tanh-form GELU
  Id gelu(Id a, std::string label = "gelu") {
    const Tensor<T>& A = val(a);
    Tensor<T> out = A;
    for (auto& v : out.values) v = gelu_fwd(v);
    return push(std::move(out), needs_grad(a), std::move(label), [this, a](Id o) {
      if (!needs_grad(a)) return;
      auto& ga = grad_buf(a).values;
      const auto& g = node(o).grad.values;
      const auto& x = val(a).values;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_bwd(x[i]);
    });
  }

  Id sigmoid(Id a, std::string label = "sigmoid") {
    Tensor<T> out = val(a);
    for (auto& v : out.values) v = T(1) / (T(1) + std::exp(-v));
    return push(std::move(out), needs_grad(a), std::move(label), [this, a](Id o) {
      if (!needs_grad(a)) return;
      auto& ga = grad_buf(a).values;
      const auto& g = node(o).grad.values;
      const auto& y = node(o).value.values;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
    });
  }

  // Row-wise layer norm with learned gamma/beta.
  Id layer_norm(Id x, Id gamma, Id beta, T eps, std::string label = "layer_norm") {
    const Tensor<T>& X = val(x);
    if (X.shape.size() != 2) throw UsageError(label + ": expects a 2-d input");
    const int64_t m = X.rows(), n = X.cols();
    if (val(gamma).numel() != n || val(beta).numel() != n)
      throw UsageError(label + ": gamma/beta length mismatch");
    if (!(eps > T(0))) throw ConfigError(label + ": epsilon must be positive");
    Tensor<T> out({m, n});
    Tensor<T> xhat({m, n});
    Tensor<T> inv_sd({m});
    const auto& gv = val(gamma).values;
    const auto& bv = val(beta).values;
    for (int64_t i = 0; i < m; ++i) {
      const T* xi = X.values.data() + i * n;
      T mean = T(0);
      for (int64_t j = 0; j < n; ++j) mean += xi[j];
      mean /= static_cast<T>(n);
      T var = T(0);
      for (int64_t j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
      var /= static_cast<T>(n);
      const T isd = T(1) / std::sqrt(var + eps);
      inv_sd.values[static_cast<size_t>(i)] = isd;
      for (int64_t j = 0; j < n; ++j) {
        const T xh = (xi[j] - mean) * isd;
        xhat.values[static_cast<size_t>(i * n + j)] = xh;
        out.values[static_cast<size_t>(i * n + j)] = gv[static_cast<size_t>(j)] * xh + bv[static_cast<size_t>(j)];
      }
    }
    auto xh_cache = std::make_shared<Tensor<T>>(std::move(xhat));
    auto isd_cache = std::make_shared<Tensor<T>>(std::move(inv_sd));
    return push(std::move(out), needs_grad(x) || needs_grad(gamma) || needs_grad(beta),
                std::move(label),
                [this, x, gamma, beta, m, n, xh_cache, isd_cache](Id o) {
                  const auto& g = node(o).grad.values;
                  const auto& xh = xh_cache->values;
                  const auto& gv = val(gamma).values;
                  if (needs_grad(gamma)) {
                    auto& gg = grad_buf(gamma).values;
                    for (int64_t i = 0; i < m; ++i)
                      for (int64_t j = 0; j < n; ++j)
                        gg[static_cast<size_t>(j)] += g[static_cast<size_t>(i * n + j)] * xh[static_cast<size_t>(i * n + j)];
                  }
                  if (needs_grad(beta)) {
                    auto& gb = grad_buf(beta).values;
                    for (int64_t i = 0; i < m; ++i)
                      for (int64_t j = 0; j < n; ++j) gb[static_cast<size_t>(j)] += g[static_cast<size_t>(i * n + j)];
                  }
                  if (needs_grad(x)) {
                    auto& gx = grad_buf(x).values;
                    for (int64_t i = 0; i < m; ++i) {
                      T sum_dxh = T(0), sum_dxh_xh = T(0);
                      for (int64_t j = 0; j < n; ++j) {
                        const T dxh = g[static_cast<size_t>(i * n + j)] * gv[static_cast<size_t>(j)];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[static_cast<size_t>(i * n + j)];
                      }
                      const T inv_n = T(1) / static_cast<T>(n);
                      const T isd = isd_cache->values[static_cast<size_t>(i)];
                      for (int64_t j = 0; j < n; ++j) {
                        const T dxh = g[static_cast<size_t>(i * n + j)] * gv[static_cast<size_t>(j)];
                        gx[static_cast<size_t>(i * n + j)] +=
                            isd * (dxh - inv_n * sum_dxh -
                                   xh[static_cast<size_t>(i * n + j)] * inv_n * sum_dxh_xh);
                      }
                    }
                  }
                });
  }

  Id softmax_rows(Id x, std::string label = "softmax") {
    const Tensor<T>& X = val(x);
    if (X.shape.size() != 2) throw UsageError(label + ": expects a 2-d input");
    const int64_t m = X.rows(), n = X.cols();
    Tensor<T> out({m, n});
    for (int64_t i = 0; i < m; ++i) {
      const T* xi = X.values.data() + i * n;
      T mx = xi[0];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
      T sum = T(0);
      for (int64_t j = 0; j < n; ++j) {
        const T e = std::exp(xi[j] - mx);
        out.values[static_cast<size_t>(i * n + j)] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (int64_t j = 0; j < n; ++j) out.values[static_cast<size_t>(i * n + j)] *= inv;
    }
    return push(std::move(out), needs_grad(x), std::move(label), [this, x, m, n](Id o) {
      if (!needs_grad(x)) return;
      auto& gx = grad_buf(x).values;
      const auto& g = node(o).grad.values;
      const auto& y = node(o).value.values;
      for (int64_t i = 0; i < m; ++i) {
        T dot = T(0);
        for (int64_t j = 0; j < n; ++j) dot += g[static_cast<size_t>(i * n + j)] * y[static_cast<size_t>(i * n + j)];
        for (int64_t j = 0; j < n; ++j)
          gx[static_cast<size_t>(i * n + j)] += y[static_cast<size_t>(i * n + j)] * (g[static_cast<size_t>(i * n + j)] - dot);
      }
    });
  }

  Id slice_cols(Id x, int64_t c0, int64_t c1, std::string label = "slice_cols") {
    const Tensor<T>& X = val(x);
    if (X.shape.size() != 2 || c0 < 0 || c1 > X.cols() || c0 >= c1)
      throw UsageError(label + ": bad column range");
    const int64_t m = X.rows(), n = X.cols(), w = c1 - c0;
    Tensor<T> out({m, w});
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j)
        out.values[static_cast<size_t>(i * w + j)] = X.values[static_cast<size_t>(i * n + c0 + j)];
    return push(std::move(out), needs_grad(x), std::move(label),
                [this, x, c0, m, n, w](Id o) {
                  if (!needs_grad(x)) return;
                  auto& gx = grad_buf(x).values;
                  const auto& g = node(o).grad.values;
                  for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < w; ++j)
                      gx[static_cast<size_t>(i * n + c0 + j)] += g[static_cast<size_t>(i * w + j)];
                });
  }

  Id concat_cols(const std::vector<Id>& parts, std::string label = "concat_cols") {
    if (parts.empty()) throw UsageError(label + ": empty part list");
    const int64_t m = val(parts[0]).rows();
    int64_t n = 0;
    bool req = false;
    for (Id p : parts) {
      if (val(p).shape.size() != 2 || val(p).rows() != m)
        throw UsageError(label + ": row count mismatch");
      n += val(p).cols();
      req = req || needs_grad(p);
    }
    Tensor<T> out({m, n});
    int64_t off = 0;
    for (Id p : parts) {
      const Tensor<T>& P = val(p);
      const int64_t w = P.cols();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < w; ++j)
          out.values[static_cast<size_t>(i * n + off + j)] = P.values[static_cast<size_t>(i * w + j)];
      off += w;
    }
    return push(std::move(out), req, std::move(label),
                [this, parts, m, n](Id o) {
                  const auto& g = node(o).grad.values;
                  int64_t off = 0;
                  for (Id p : parts) {
                    const int64_t w = val(p).cols();
                    if (needs_grad(p)) {
                      auto& gp = grad_buf(p).values;
                      for (int64_t i = 0; i < m; ++i)
                        for (int64_t j = 0; j < w; ++j)
                          gp[static_cast<size_t>(i * w + j)] += g[static_cast<size_t>(i * n + off + j)];
                    }
                    off += w;
                  }
                });
  }

  Id mean_rows(Id x, std::string label = "mean_rows") {
    const Tensor<T>& X = val(x);
    if (X.shape.size() != 2) throw UsageError(label + ": expects a 2-d input");
    const int64_t m = X.rows(), n = X.cols();
    Tensor<T> out({1, n});
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) out.values[static_cast<size_t>(j)] += X.values[static_cast<size_t>(i * n + j)];
    for (auto& v : out.values) v /= static_cast<T>(m);
    return push(std::move(out), needs_grad(x), std::move(label), [this, x, m, n](Id o) {
      if (!needs_grad(x)) return;
      auto& gx = grad_buf(x).values;
      const auto& g = node(o).grad.values;
      const T inv = T(1) / static_cast<T>(m);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) gx[static_cast<size_t>(i * n + j)] += g[static_cast<size_t>(j)] * inv;
    });
  }

  Id sum_all(Id x, std::string label = "sum_all") {
    const Tensor<T>& X = val(x);
    T s = T(0);
    for (T v : X.values) s += v;
    return push(Tensor<T>::scalar(s), needs_grad(x), std::move(label), [this, x](Id o) {
      if (!needs_grad(x)) return;
      auto& gx = grad_buf(x).values;
      const T g = node(o).grad.values[0];
      for (auto& v : gx) v += g;
    });
  }

  Id sum_scalars(const std::vector<Id>& xs, std::string label = "sum_scalars") {
    if (xs.empty()) throw UsageError(label + ": empty list");
    T s = T(0);
    bool req = false;
    for (Id x : xs) {
      if (!val(x).is_scalar()) throw UsageError(label + ": non-scalar input");
      s += val(x).values[0];
      req = req || needs_grad(x);
    }
    return push(Tensor<T>::scalar(s), req, std::move(label), [this, xs](Id o) {
      const T g = node(o).grad.values[0];
      for (Id x : xs)
        if (needs_grad(x)) grad_buf(x).values[0] += g;
    });
  }

  // Mean squared error over the listed rows of pred against a constant
  // target of identical shape. Rows outside the list contribute nothing and
  // receive exactly-zero gradient.
  Id masked_mse(Id pred, const Tensor<T>& target, std::vector<int64_t> rows,
                std::string label = "masked_mse") {
    const Tensor<T>& P = val(pred);
    if (!P.same_shape(target)) throw UsageError(label + ": prediction/target shape mismatch");
    if (P.shape.size() != 2) throw UsageError(label + ": expects a 2-d prediction");
    if (rows.empty()) throw ConfigError(label + ": empty eligible set");
    const int64_t n = P.cols();
    const T inv_m = T(1) / static_cast<T>(rows.size() * static_cast<size_t>(n));
    T loss = T(0);
    for (int64_t r : rows) {
      if (r < 0 || r >= P.rows()) throw UsageError(label + ": row index out of range");
      const T* pr = P.values.data() + r * n;
      const T* tr = target.values.data() + r * n;
      for (int64_t j = 0; j < n; ++j) {
        const T d = pr[j] - tr[j];
        loss += d * d;
      }
    }
    loss *= inv_m;
    auto tgt = std::make_shared<Tensor<T>>(target);
    auto rws = std::make_shared<std::vector<int64_t>>(std::move(rows));
    return push(Tensor<T>::scalar(loss), needs_grad(pred), std::move(label),
                [this, pred, tgt, rws, n, inv_m](Id o) {
                  if (!needs_grad(pred)) return;
                  auto& gp = grad_buf(pred).values;
                  const auto& pv = val(pred).values;
                  const T g = node(o).grad.values[0];
                  for (int64_t r : *rws) {
                    for (int64_t j = 0; j < n; ++j) {
                      const size_t idx = static_cast<size_t>(r * n + j);
                      gp[idx] += g * T(2) * (pv[idx] - tgt->values[idx]) * inv_m;
                    }
                  }
                });
  }

  // -log softmax(logits)[label], stable via log-sum-exp.
  Id cross_entropy_logits(Id logits, int label_index, std::string label = "cross_entropy") {
    const Tensor<T>& L = val(logits);
    const int64_t c = L.numel();
    if (L.shape.size() > 2 || (L.shape.size() == 2 && L.rows() != 1))
      throw UsageError(label + ": logits must be a single row");
    if (label_index < 0 || label_index >= c) throw UsageError(label + ": label out of range");
    T mx = L.values[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, L.values[static_cast<size_t>(j)]);
    T sum = T(0);
    for (int64_t j = 0; j < c; ++j) sum += std::exp(L.values[static_cast<size_t>(j)] - mx);
    const T lse = mx + std::log(sum);
    const T loss = lse - L.values[static_cast<size_t>(label_index)];
    return push(Tensor<T>::scalar(loss), needs_grad(logits), std::move(label),
                [this, logits, label_index, c, lse](Id o) {
                  if (!needs_grad(logits)) return;
                  auto& gl = grad_buf(logits).values;
                  const auto& lv = val(logits).values;
                  const T g = node(o).grad.values[0];
                  for (int64_t j = 0; j < c; ++j) {
                    T p = std::exp(lv[static_cast<size_t>(j)] - lse);
                    if (j == label_index) p -= T(1);
                    gl[static_cast<size_t>(j)] += g * p;
                  }
                });
  }

  // Soft Dice loss: 1 - (2*sum(p*t)+eps) / (sum(p)+sum(t)+eps).
  Id dice_loss(Id p, const Tensor<T>& target, T eps = T(1e-6), std::string label = "dice_loss") {
    const Tensor<T>& P = val(p);
    if (!P.same_shape(target)) throw UsageError(label + ": shape mismatch");
    T inter = T(0), total = T(0);
    for (size_t i = 0; i < P.values.size(); ++i) {
      inter += P.values[i] * target.values[i];
      total += P.values[i] + target.values[i];
    }
    const T denom = total + eps;
    const T num = T(2) * inter + eps;
    const T loss = T(1) - num / denom;
    auto tgt = std::make_shared<Tensor<T>>(target);
    return push(Tensor<T>::scalar(loss), needs_grad(p), std::move(label),
                [this, p, tgt, num, denom](Id o) {
                  if (!needs_grad(p)) return;
                  auto& gp = grad_buf(p).values;
                  const T g = node(o).grad.values[0];
                  for (size_t i = 0; i < gp.size(); ++i) {
                    const T t = tgt->values[i];
                    gp[i] += g * (-(T(2) * t * denom - num) / (denom * denom));
                  }
                });
  }

  // y[r] = x[r] + pos[token_r] + series[series_r] for each visible slot r.
  Id add_embeddings(Id x, Id pos_table, Id series_table, std::vector<Slot> slots,
                    std::string label = "add_embeddings") {
    const Tensor<T>& X = val(x);
    const Tensor<T>&P = val(pos_table), &S = val(series_table);
    const int64_t d = X.cols();
    if (P.cols() != d || S.cols() != d) throw UsageError(label + ": table width mismatch");
    if (static_cast<int64_t>(slots.size()) != X.rows())
      throw UsageError(label + ": slot list length mismatch");
    Tensor<T> out = X;
    for (size_t r = 0; r < slots.size(); ++r) {
      const Slot& s = slots[r];
      if (s.token < 0 || s.token >= P.rows() || s.series < 0 || s.series >= S.rows())
        throw UsageError(label + ": slot index outside embedding table");
      for (int64_t j = 0; j < d; ++j)
        out.values[r * static_cast<size_t>(d) + static_cast<size_t>(j)] +=
            P.at(s.token, j) + S.at(s.series, j);
    }
    auto sl = std::make_shared<std::vector<Slot>>(std::move(slots));
    return push(std::move(out), needs_grad(x) || needs_grad(pos_table) || needs_grad(series_table),
                std::move(label),
                [this, x, pos_table, series_table, sl, d](Id o) {
                  const auto& g = node(o).grad.values;
                  if (needs_grad(x)) accumulate(grad_buf(x).values, g);
                  for (size_t r = 0; r < sl->size(); ++r) {
                    const Slot& s = (*sl)[r];
                    if (needs_grad(pos_table)) {
                      auto& gp = grad_buf(pos_table);
                      for (int64_t j = 0; j < d; ++j)
                        gp.at(s.token, j) += g[r * static_cast<size_t>(d) + static_cast<size_t>(j)];
                    }
                    if (needs_grad(series_table)) {
                      auto& gs = grad_buf(series_table);
                      for (int64_t j = 0; j < d; ++j)
                        gs.at(s.series, j) += g[r * static_cast<size_t>(d) + static_cast<size_t>(j)];
                    }
                  }
                });
  }

  // Builds the full decoder input: every slot of the series-major layout gets
  // either its encoded visible row, or mask_token + pos + series embeddings.
  // visible_row[slot] is the row into `visible` or -1 for a masked slot.
  Id assemble_slots(Id visible, Id mask_token, Id pos_table, Id series_table,
                    std::vector<int64_t> visible_row, int series_count, int tokens_per_series,
                    std::string label = "assemble_slots") {
    const Tensor<T>& V = val(visible);
    const Tensor<T>&P = val(pos_table), &S = val(series_table), &M = val(mask_token);
    const int64_t d = V.cols();
    const int64_t total = static_cast<int64_t>(series_count) * tokens_per_series;
    if (static_cast<int64_t>(visible_row.size()) != total)
      throw UsageError(label + ": slot map length mismatch");
    if (P.cols() != d || S.cols() != d || M.numel() != d)
      throw UsageError(label + ": embedding width mismatch");
    if (P.rows() < tokens_per_series || S.rows() < series_count)
      throw UsageError(label + ": embedding table too small");
    Tensor<T> out({total, d});
    for (int64_t slot = 0; slot < total; ++slot) {
      const int64_t j = slot / tokens_per_series;
      const int64_t i = slot % tokens_per_series;
      const int64_t vr = visible_row[static_cast<size_t>(slot)];
      T* orow = out.values.data() + slot * d;
      if (vr >= 0) {
        if (vr >= V.rows()) throw UsageError(label + ": visible row out of range");
        const T* vrow = V.values.data() + vr * d;
        for (int64_t col = 0; col < d; ++col) orow[col] = vrow[col];
      } else {
        for (int64_t col = 0; col < d; ++col)
          orow[col] = M.values[static_cast<size_t>(col)] + P.at(i, col) + S.at(j, col);
      }
    }
    auto vmap = std::make_shared<std::vector<int64_t>>(std::move(visible_row));
    const bool req = needs_grad(visible) || needs_grad(mask_token) || needs_grad(pos_table) ||
                     needs_grad(series_table);
    return push(std::move(out), req, std::move(label),
                [this, visible, mask_token, pos_table, series_table, vmap, d,
                 tokens_per_series](Id o) {
                  const auto& g = node(o).grad.values;
                  const int64_t total = static_cast<int64_t>(vmap->size());
                  for (int64_t slot = 0; slot < total; ++slot) {
                    const int64_t j = slot / tokens_per_series;
                    const int64_t i = slot % tokens_per_series;
                    const int64_t vr = (*vmap)[static_cast<size_t>(slot)];
                    const T* grow = g.data() + slot * d;
                    if (vr >= 0) {
                      if (needs_grad(visible)) {
                        T* dst = grad_buf(visible).values.data() + vr * d;
                        for (int64_t col = 0; col < d; ++col) dst[col] += grow[col];
                      }
                    } else {
                      if (needs_grad(mask_token)) {
                        auto& gm = grad_buf(mask_token).values;
                        for (int64_t col = 0; col < d; ++col) gm[static_cast<size_t>(col)] += grow[col];
                      }
                      if (needs_grad(pos_table)) {
                        auto& gp = grad_buf(pos_table);
                        for (int64_t col = 0; col < d; ++col) gp.at(i, col) += grow[col];
                      }
                      if (needs_grad(series_table)) {
                        auto& gs = grad_buf(series_table);
                        for (int64_t col = 0; col < d; ++col) gs.at(j, col) += grow[col];
                      }
                    }
                  }
                });
  }

  // x has series_count * tokens_per_series rows in series-major order; the
  // result averages row (j, i) over j, giving tokens_per_series rows.
  Id mean_series_groups(Id x, int series_count, int tokens_per_series,
                        std::string label = "mean_series_groups") {
    const Tensor<T>& X = val(x);
    const int64_t total = static_cast<int64_t>(series_count) * tokens_per_series;
    if (X.shape.size() != 2 || X.rows() != total)
      throw UsageError(label + ": row count mismatch");
    const int64_t n = X.cols();
    Tensor<T> out({tokens_per_series, n});
    const T inv = T(1) / static_cast<T>(series_count);
    for (int64_t j = 0; j < series_count; ++j)
      for (int64_t i = 0; i < tokens_per_series; ++i) {
        const T* src = X.values.data() + (j * tokens_per_series + i) * n;
        T* dst = out.values.data() + i * n;
        for (int64_t c = 0; c < n; ++c) dst[c] += src[c] * inv;
      }
    return push(std::move(out), needs_grad(x), std::move(label),
                [this, x, series_count, tokens_per_series, n](Id o) {
                  if (!needs_grad(x)) return;
                  auto& gx = grad_buf(x).values;
                  const auto& g = node(o).grad.values;
                  const T inv = T(1) / static_cast<T>(series_count);
                  for (int64_t j = 0; j < series_count; ++j)
                    for (int64_t i = 0; i < tokens_per_series; ++i) {
                      T* dst = gx.data() + (j * tokens_per_series + i) * n;
                      const T* src = g.data() + i * n;
                      for (int64_t c = 0; c < n; ++c) dst[c] += src[c] * inv;
                    }
                });
  }

  void backward(Id loss) {
    const Node& ln = node(loss);
    if (!ln.value.is_scalar()) throw UsageError("backward: loss must be a scalar");
    if (ran_backward_) throw UsageError("backward: tape already traversed");
    ran_backward_ = true;
    for (auto& nd : nodes_)
      if (nd.requires_grad) nd.grad = Tensor<T>::zeros_like(nd.value);
    if (!ln.requires_grad) return;  // constant loss: every gradient stays zero
    nodes_[static_cast<size_t>(loss)].grad.values[0] = T(1);
    for (Id id = loss; id >= 0; --id) {
      Node& nd = nodes_[static_cast<size_t>(id)];
      if (nd.requires_grad && nd.backprop) nd.backprop(id);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::string label;
    std::function<void(Id)> backprop;
  };

  Id push(Tensor<T> value, bool requires_grad, std::string label,
          std::function<void(Id)> backprop, bool check = true) {
    if (ran_backward_) throw UsageError("tape: cannot grow after backward");
    if (check && finite_checks_ && !value.all_finite())
      throw NumericError("non-finite values produced by " + label);
    nodes_.push_back(Node{std::move(value), Tensor<T>{}, requires_grad,
                          std::move(label), std::move(backprop)});
    return static_cast<Id>(nodes_.size() - 1);
  }

  const Node& node(Id id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) throw UsageError("bad node id");
    return nodes_[static_cast<size_t>(id)];
  }
  Node& node(Id id) {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) throw UsageError("bad node id");
    return nodes_[static_cast<size_t>(id)];
  }

  const Tensor<T>& val(Id id) const { return node(id).value; }
  bool needs_grad(Id id) const { return node(id).requires_grad; }
  Tensor<T>& grad_buf(Id id) { return node(id).grad; }

  static void accumulate(std::vector<T>& dst, const std::vector<T>& src) {
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  static T gelu_fwd(T x) {
    const T c = T(0.7978845608028653558798921198687);  // sqrt(2/pi)
    const T u = c * (x + T(0.044715) * x * x * x);
    return T(0.5) * x * (T(1) + std::tanh(u));
  }

  static T gelu_bwd(T x) {
    const T c = T(0.7978845608028653558798921198687);
    const T u = c * (x + T(0.044715) * x * x * x);
    const T th = std::tanh(u);
    const T sech2 = T(1) - th * th;
    return T(0.5) * (T(1) + th) + T(0.5) * x * sech2 * c * (T(1) + T(3) * T(0.044715) * x * x);
  }

  std::vector<Node> nodes_;
  bool finite_checks_ = true;
  bool ran_backward_ = false;
};

}  // namespace csm
