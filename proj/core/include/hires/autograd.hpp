#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hires/ops.hpp"
#include "hires/tensor.hpp"

// Reverse-mode autodiff over the ops kernels. Each graph op computes its
// value eagerly and records a closure that scatters the output gradient
// into its parents. Gradient tracking is skipped entirely when no parent
// requires it, so inference-only forwards carry no backward state.
namespace hires::ag {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;
};

// Scoped switch that disables gradient recording (evaluation-only forwards).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(enabled_ref()) { enabled_ref() = false; }
  ~NoGradGuard() { enabled_ref() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool grad_enabled() { return enabled_ref(); }

 private:
  static bool& enabled_ref() {
    thread_local bool enabled = true;
    return enabled;
  }
  bool prev_;
};

template <typename T>
void accumulate(Node<T>& node, const Tensor<T>& g) {
  if (node.grad.numel() == 0) node.grad = Tensor<T>(node.value.shape());
  if (!node.grad.same_shape(g))
    throw std::runtime_error("gradient shape mismatch");
  for (int64_t i = 0; i < g.numel(); ++i) node.grad[i] += g[i];
}

template <typename T>
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor<T> value, bool requires_grad = false) {
    Var v;
    v.node_ = std::make_shared<Node<T>>();
    v.node_->value = std::move(value);
    v.node_->requires_grad = requires_grad;
    return v;
  }

  static Var op(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                std::function<void(Node<T>&)> backward_fn) {
    Var v;
    v.node_ = std::make_shared<Node<T>>();
    v.node_->value = std::move(value);
    bool rg = false;
    if (NoGradGuard::grad_enabled())
      for (const auto& p : parents) rg = rg || (p && p->requires_grad);
    v.node_->requires_grad = rg;
    if (rg) {
      v.node_->parents = std::move(parents);
      v.node_->backward_fn = std::move(backward_fn);
    }
    return v;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  const Tensor<T>& grad() const { return node_->grad; }
  void zero_grad() {
    if (node_ && node_->grad.numel() > 0) node_->grad.zero();
  }
  std::shared_ptr<Node<T>> node() const { return node_; }

  // Backpropagates from this variable. The default seed of ones makes the
  // implied loss "sum of all outputs".
  void backward() { backward(Tensor<T>::full(node_->value.shape(), T(1))); }

  void backward(const Tensor<T>& seed) {
    if (!node_) throw std::runtime_error("backward on undefined var");
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node<T>* p = n->parents[next++].get();
        if (p && p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    accumulate(*node_, seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn && n->grad.numel() > 0) n->backward_fn(*n);
    }
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>::leaf(std::move(value), false);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto an = a.node(), bn = b.node();
  return Var<T>::op(ops::add(an->value, bn->value), {an, bn}, [an, bn](Node<T>& self) {
    if (an->requires_grad) accumulate(*an, self.grad);
    if (bn->requires_grad) accumulate(*bn, self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  auto an = a.node(), bn = b.node();
  return Var<T>::op(ops::sub(an->value, bn->value), {an, bn}, [an, bn](Node<T>& self) {
    if (an->requires_grad) accumulate(*an, self.grad);
    if (bn->requires_grad) accumulate(*bn, ops::scale(self.grad, T(-1)));
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  auto an = a.node(), bn = b.node();
  return Var<T>::op(ops::mul(an->value, bn->value), {an, bn}, [an, bn](Node<T>& self) {
    if (an->requires_grad) accumulate(*an, ops::mul(self.grad, bn->value));
    if (bn->requires_grad) accumulate(*bn, ops::mul(self.grad, an->value));
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  auto an = a.node();
  return Var<T>::op(ops::scale(an->value, s), {an}, [an, s](Node<T>& self) {
    if (an->requires_grad) accumulate(*an, ops::scale(self.grad, s));
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  auto an = a.node(), bn = b.node();
  return Var<T>::op(ops::matmul(an->value, bn->value), {an, bn}, [an, bn](Node<T>& self) {
    if (an->requires_grad)
      accumulate(*an, ops::matmul(self.grad, ops::transpose(bn->value)));
    if (bn->requires_grad)
      accumulate(*bn, ops::matmul(ops::transpose(an->value), self.grad));
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  auto an = a.node();
  return Var<T>::op(ops::transpose(an->value), {an}, [an](Node<T>& self) {
    if (an->requires_grad) accumulate(*an, ops::transpose(self.grad));
  });
}

template <typename T>
Var<T> add_rowvec(const Var<T>& x, const Var<T>& v) {
  auto xn = x.node(), vn = v.node();
  return Var<T>::op(ops::add_rowvec(xn->value, vn->value), {xn, vn}, [xn, vn](Node<T>& self) {
    if (xn->requires_grad) accumulate(*xn, self.grad);
    if (vn->requires_grad) accumulate(*vn, ops::colsum(self.grad));
  });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  auto xn = x.node();
  Tensor<T> y = ops::softmax_rows(xn->value);
  return Var<T>::op(y, {xn}, [xn, y](Node<T>& self) {
    if (!xn->requires_grad) return;
    // dx_ij = y_ij * (g_ij - sum_k g_ik y_ik)
    Tensor<T> dx(y.shape());
    const int64_t m = y.dim(0), n = y.dim(1);
    for (int64_t i = 0; i < m; ++i) {
      T dot = 0;
      for (int64_t j = 0; j < n; ++j) dot += self.grad(i, j) * y(i, j);
      for (int64_t j = 0; j < n; ++j)
        dx(i, j) = y(i, j) * (self.grad(i, j) - dot);
    }
    accumulate(*xn, dx);
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  Tensor<T> y = ops::layer_norm(xn->value, gn->value, bn->value, eps);
  return Var<T>::op(y, {xn, gn, bn}, [xn, gn, bn, eps](Node<T>& self) {
    const Tensor<T>& xin = xn->value;
    const int64_t l = xin.dim(0), d = xin.dim(1);
    Tensor<T> dx(xin.shape());
    Tensor<T> dgamma({d});
    Tensor<T> dbeta({d});
    for (int64_t i = 0; i < l; ++i) {
      T mean = 0;
      for (int64_t j = 0; j < d; ++j) mean += xin(i, j);
      mean /= static_cast<T>(d);
      T var = 0;
      for (int64_t j = 0; j < d; ++j) {
        const T c = xin(i, j) - mean;
        var += c * c;
      }
      var /= static_cast<T>(d);
      const T inv = T(1) / std::sqrt(var + eps);
      // gh = g * gamma; dx = inv/D * (D*gh - sum(gh) - xhat * sum(gh*xhat))
      T sum_gh = 0, sum_gh_xhat = 0;
      for (int64_t j = 0; j < d; ++j) {
        const T xhat = (xin(i, j) - mean) * inv;
        const T gh = self.grad(i, j) * gn->value[j];
        sum_gh += gh;
        sum_gh_xhat += gh * xhat;
        dgamma[j] += self.grad(i, j) * xhat;
        dbeta[j] += self.grad(i, j);
      }
      for (int64_t j = 0; j < d; ++j) {
        const T xhat = (xin(i, j) - mean) * inv;
        const T gh = self.grad(i, j) * gn->value[j];
        dx(i, j) = inv / static_cast<T>(d) *
                   (static_cast<T>(d) * gh - sum_gh - xhat * sum_gh_xhat);
      }
    }
    if (xn->requires_grad) accumulate(*xn, dx);
    if (gn->requires_grad) accumulate(*gn, dgamma);
    if (bn->requires_grad) accumulate(*bn, dbeta);
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  auto xn = x.node();
  return Var<T>::op(ops::gelu(xn->value), {xn}, [xn](Node<T>& self) {
    if (xn->requires_grad) accumulate(*xn, ops::gelu_grad(xn->value, self.grad));
  });
}

template <typename T>
Var<T> depthwise_conv3x3(const Var<T>& f, const Var<T>& k) {
  auto fn = f.node(), kn = k.node();
  return Var<T>::op(ops::depthwise_conv3x3(fn->value, kn->value), {fn, kn},
                    [fn, kn](Node<T>& self) {
    const Tensor<T>& fin = fn->value;
    const Tensor<T>& ker = kn->value;
    const int64_t h = fin.dim(0), w = fin.dim(1), d = fin.dim(2);
    if (fn->requires_grad) {
      // Transposed convolution: scatter each output grad through the kernel.
      Tensor<T> df(fin.shape());
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
          for (int64_t c = 0; c < d; ++c) {
            const T g = self.grad(i, j, c);
            for (int64_t u = -1; u <= 1; ++u) {
              const int64_t ii = i + u;
              if (ii < 0 || ii >= h) continue;
              for (int64_t v = -1; v <= 1; ++v) {
                const int64_t jj = j + v;
                if (jj < 0 || jj >= w) continue;
                df(ii, jj, c) += g * ker(u + 1, v + 1, c);
              }
            }
          }
      accumulate(*fn, df);
    }
    if (kn->requires_grad) {
      Tensor<T> dk(ker.shape());
      for (int64_t u = -1; u <= 1; ++u)
        for (int64_t v = -1; v <= 1; ++v)
          for (int64_t c = 0; c < d; ++c) {
            T acc = 0;
            for (int64_t i = 0; i < h; ++i) {
              const int64_t ii = i + u;
              if (ii < 0 || ii >= h) continue;
              for (int64_t j = 0; j < w; ++j) {
                const int64_t jj = j + v;
                if (jj < 0 || jj >= w) continue;
                acc += self.grad(i, j, c) * fin(ii, jj, c);
              }
            }
            dk(u + 1, v + 1, c) = acc;
          }
      accumulate(*kn, dk);
    }
  });
}

template <typename T>
Var<T> avg_pool2d(const Var<T>& f, int64_t s) {
  auto fn = f.node();
  return Var<T>::op(ops::avg_pool2d(fn->value, s), {fn}, [fn, s](Node<T>& self) {
    if (!fn->requires_grad) return;
    const int64_t h = fn->value.dim(0), w = fn->value.dim(1), d = fn->value.dim(2);
    Tensor<T> df(fn->value.shape());
    const T inv = T(1) / static_cast<T>(s * s);
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j)
        for (int64_t c = 0; c < d; ++c)
          df(i, j, c) = self.grad(i / s, j / s, c) * inv;
    accumulate(*fn, df);
  });
}

template <typename T>
Var<T> resize_bilinear(const Var<T>& f, int64_t h2, int64_t w2) {
  auto fn = f.node();
  return Var<T>::op(ops::resize_bilinear(fn->value, h2, w2), {fn},
                    [fn, h2, w2](Node<T>& self) {
    if (!fn->requires_grad) return;
    const int64_t h = fn->value.dim(0), w = fn->value.dim(1), d = fn->value.dim(2);
    Tensor<T> df(fn->value.shape());
    for (int64_t i = 0; i < h2; ++i) {
      const ops::BilinearTap ty = ops::bilinear_tap(i, h2, h);
      for (int64_t j = 0; j < w2; ++j) {
        const ops::BilinearTap tx = ops::bilinear_tap(j, w2, w);
        const T fy = static_cast<T>(ty.frac), fx = static_cast<T>(tx.frac);
        for (int64_t c = 0; c < d; ++c) {
          const T g = self.grad(i, j, c);
          df(ty.lo, tx.lo, c) += g * (T(1) - fy) * (T(1) - fx);
          df(ty.lo, tx.hi, c) += g * (T(1) - fy) * fx;
          df(ty.hi, tx.lo, c) += g * fy * (T(1) - fx);
          df(ty.hi, tx.hi, c) += g * fy * fx;
        }
      }
    }
    accumulate(*fn, df);
  });
}

template <typename T>
Var<T> rope2d(const Var<T>& x, const std::vector<ops::TokenCoord>& coords, T base) {
  auto xn = x.node();
  return Var<T>::op(ops::rope2d(xn->value, coords, base), {xn},
                    [xn, coords, base](Node<T>& self) {
    // Rotations are orthonormal; the adjoint is the inverse rotation.
    if (xn->requires_grad)
      accumulate(*xn, ops::rope2d(self.grad, coords, base, /*inverse=*/true));
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, std::vector<int64_t> new_shape) {
  auto xn = x.node();
  const std::vector<int64_t> old_shape = xn->value.shape();
  return Var<T>::op(xn->value.reshaped(std::move(new_shape)), {xn},
                    [xn, old_shape](Node<T>& self) {
    if (xn->requires_grad) accumulate(*xn, self.grad.reshaped(old_shape));
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::vector<int64_t> idx) {
  auto xn = x.node();
  return Var<T>::op(ops::gather_rows(xn->value, idx), {xn},
                    [xn, idx = std::move(idx)](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T> dx(xn->value.shape());
    const int64_t d = dx.dim(1);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int64_t j = 0; j < d; ++j)
        dx(idx[i], j) += self.grad(static_cast<int64_t>(i), j);
    accumulate(*xn, dx);
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& x, int64_t r0, int64_t r1) {
  auto xn = x.node();
  return Var<T>::op(ops::slice_rows(xn->value, r0, r1), {xn}, [xn, r0](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T> dx(xn->value.shape());
    for (int64_t i = 0; i < self.grad.dim(0); ++i)
      for (int64_t j = 0; j < self.grad.dim(1); ++j) dx(r0 + i, j) = self.grad(i, j);
    accumulate(*xn, dx);
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& x, int64_t c0, int64_t c1) {
  auto xn = x.node();
  return Var<T>::op(ops::slice_cols(xn->value, c0, c1), {xn}, [xn, c0](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T> dx(xn->value.shape());
    for (int64_t i = 0; i < self.grad.dim(0); ++i)
      for (int64_t j = 0; j < self.grad.dim(1); ++j) dx(i, c0 + j) = self.grad(i, j);
    accumulate(*xn, dx);
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  std::vector<std::shared_ptr<Node<T>>> nodes;
  std::vector<Tensor<T>> values;
  nodes.reserve(parts.size());
  values.reserve(parts.size());
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    values.push_back(p.value());
  }
  return Var<T>::op(ops::concat_rows(values), nodes, [nodes](Node<T>& self) {
    int64_t r = 0;
    for (const auto& n : nodes) {
      const int64_t rows = n->value.dim(0);
      if (n->requires_grad)
        accumulate(*n, ops::slice_rows(self.grad, r, r + rows));
      r += rows;
    }
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  std::vector<std::shared_ptr<Node<T>>> nodes;
  std::vector<Tensor<T>> values;
  nodes.reserve(parts.size());
  values.reserve(parts.size());
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    values.push_back(p.value());
  }
  return Var<T>::op(ops::concat_cols(values), nodes, [nodes](Node<T>& self) {
    int64_t c = 0;
    for (const auto& n : nodes) {
      const int64_t cols = n->value.dim(1);
      if (n->requires_grad)
        accumulate(*n, ops::slice_cols(self.grad, c, c + cols));
      c += cols;
    }
  });
}

template <typename T>
Var<T> mean_rows(const Var<T>& x) {
  auto xn = x.node();
  return Var<T>::op(ops::mean_rows(xn->value), {xn}, [xn](Node<T>& self) {
    if (!xn->requires_grad) return;
    const int64_t l = xn->value.dim(0), d = xn->value.dim(1);
    Tensor<T> dx(xn->value.shape());
    for (int64_t i = 0; i < l; ++i)
      for (int64_t j = 0; j < d; ++j) dx(i, j) = self.grad(0, j) / static_cast<T>(l);
    accumulate(*xn, dx);
  });
}

// [1] scalar holding the sum of all elements.
template <typename T>
Var<T> sum_all(const Var<T>& x) {
  auto xn = x.node();
  Tensor<T> s({1});
  s[0] = ops::sum_all(xn->value);
  return Var<T>::op(s, {xn}, [xn](Node<T>& self) {
    if (!xn->requires_grad) return;
    accumulate(*xn, Tensor<T>::full(xn->value.shape(), self.grad[0]));
  });
}

// Mean cross-entropy of row-wise softmax(logits) against integer labels,
// with the usual fused (softmax - onehot)/N backward.
template <typename T>
Var<T> softmax_xent(const Var<T>& logits, const std::vector<int64_t>& labels) {
  auto ln = logits.node();
  const int64_t n = ln->value.dim(0), c = ln->value.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw std::invalid_argument("softmax_xent: label count mismatch");
  Tensor<T> probs = ops::softmax_rows(ln->value);
  Tensor<T> loss({1});
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= c)
      throw std::invalid_argument("softmax_xent: label out of range");
    acc -= std::log(std::max(probs(i, labels[i]), static_cast<T>(1e-30)));
  }
  loss[0] = acc / static_cast<T>(n);
  return Var<T>::op(loss, {ln}, [ln, probs, labels](Node<T>& self) {
    if (!ln->requires_grad) return;
    const int64_t n2 = probs.dim(0), c2 = probs.dim(1);
    Tensor<T> dx(probs.shape());
    const T g = self.grad[0] / static_cast<T>(n2);
    for (int64_t i = 0; i < n2; ++i)
      for (int64_t j = 0; j < c2; ++j)
        dx(i, j) = g * (probs(i, j) - (labels[i] == j ? T(1) : T(0)));
    accumulate(*ln, dx);
  });
}

// value + named gradients of a closure's output w.r.t. its named inputs,
// under the sum-of-outputs loss.
template <typename T>
struct GradResult {
  Tensor<T> value;
  std::map<std::string, Tensor<T>> grads;
};

template <typename T>
GradResult<T> eval_with_grads(
    const std::function<Var<T>(const std::vector<Var<T>>&)>& build,
    const std::vector<std::pair<std::string, Tensor<T>>>& named_inputs) {
  std::vector<Var<T>> vars;
  vars.reserve(named_inputs.size());
  for (const auto& [name, t] : named_inputs)
    vars.push_back(Var<T>::leaf(t, /*requires_grad=*/true));
  Var<T> out = build(vars);
  out.backward();
  GradResult<T> r;
  r.value = out.value();
  for (size_t i = 0; i < named_inputs.size(); ++i)
    r.grads[named_inputs[i].first] = vars[i].grad().numel() > 0
                                         ? vars[i].grad()
                                         : Tensor<T>(named_inputs[i].second.shape());
  return r;
}

// Central finite differences against the analytic gradients of `build`
// under the sum-of-outputs loss. Returns the max over all coordinates of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <typename T>
double grad_check(const std::function<Var<T>(const std::vector<Var<T>>&)>& build,
                  const std::vector<Tensor<T>>& inputs, T eps) {
  std::vector<Var<T>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(Var<T>::leaf(t, /*requires_grad=*/true));
  Var<T> out = build(vars);
  out.backward();

  auto eval_sum = [&](const std::vector<Tensor<T>>& xs) -> T {
    NoGradGuard off;
    std::vector<Var<T>> vs;
    vs.reserve(xs.size());
    for (const auto& t : xs) vs.push_back(Var<T>::leaf(t, false));
    return ops::sum_all(build(vs).value());
  };

  double max_err = 0.0;
  std::vector<Tensor<T>> work = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<T>& analytic = vars[i].grad().numel() > 0
                                    ? vars[i].grad()
                                    : Tensor<T>(inputs[i].shape());
    for (int64_t j = 0; j < inputs[i].numel(); ++j) {
      const T orig = work[i][j];
      work[i][j] = orig + eps;
      const double f_plus = static_cast<double>(eval_sum(work));
      work[i][j] = orig - eps;
      const double f_minus = static_cast<double>(eval_sum(work));
      work[i][j] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * static_cast<double>(eps));
      const double a = static_cast<double>(analytic[j]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_err = std::max(max_err, std::abs(a - numeric) / denom);
    }
  }
  return max_err;
}

}  // namespace hires::ag
