#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hires/tensor.hpp"
#include "hires/threading.hpp"

// Forward kernels. Every function is a pure map from inputs to a fresh
// tensor; shape violations throw std::invalid_argument.
namespace hires::ops {

template <typename T>
void check_rank(const Tensor<T>& t, int64_t r, const char* what) {
  if (t.rank() != r)
    throw std::invalid_argument(std::string(what) + ": expected rank " +
                                std::to_string(r) + ", got " + shape_str(t.shape()));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_rank(a, 2, "matmul lhs");
  check_rank(b, 2, "matmul rhs");
  if (a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: inner dims " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  parallel_for(m, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      T* row = pc + i * n;
      for (int64_t kk = 0; kk < k; ++kk) {
        const T aik = pa[i * k + kk];
        const T* brow = pb + kk * n;
        for (int64_t j = 0; j < n; ++j) row[j] += aik * brow[j];
      }
    }
  });
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  check_rank(a, 2, "transpose");
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor<T> t({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) t(j, i) = a(i, j);
  return t;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shapes differ " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> c(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] + b[i];
  return c;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> c(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] - b[i];
  return c;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> c(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] * b[i];
  return c;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> c(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] * s;
  return c;
}

// X: [L, D], v: [D]; broadcast add over rows.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  check_rank(x, 2, "add_rowvec lhs");
  check_rank(v, 1, "add_rowvec rhs");
  if (x.dim(1) != v.dim(0))
    throw std::invalid_argument("add_rowvec: width mismatch");
  Tensor<T> c(x.shape());
  for (int64_t i = 0; i < x.dim(0); ++i)
    for (int64_t j = 0; j < x.dim(1); ++j) c(i, j) = x(i, j) + v[j];
  return c;
}

template <typename T>
Tensor<T> colsum(const Tensor<T>& x) {
  check_rank(x, 2, "colsum");
  Tensor<T> s({x.dim(1)});
  for (int64_t i = 0; i < x.dim(0); ++i)
    for (int64_t j = 0; j < x.dim(1); ++j) s[j] += x(i, j);
  return s;
}

// Row-wise softmax with per-row max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  check_rank(x, 2, "softmax_rows");
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < m; ++i) {
    T mx = x(i, 0);
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x(i, j));
    T sum = 0;
    for (int64_t j = 0; j < n; ++j) {
      y(i, j) = std::exp(x(i, j) - mx);
      sum += y(i, j);
    }
    for (int64_t j = 0; j < n; ++j) y(i, j) /= sum;
  }
  return y;
}

// Per-row normalization to zero mean / unit variance (biased variance),
// then affine gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  check_rank(x, 2, "layer_norm");
  const int64_t l = x.dim(0), d = x.dim(1);
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
    throw std::invalid_argument("layer_norm: gamma/beta must be [D]");
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < l; ++i) {
    T mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= static_cast<T>(d);
    T var = 0;
    for (int64_t j = 0; j < d; ++j) {
      const T c = x(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + eps);
    for (int64_t j = 0; j < d; ++j)
      y(i, j) = (x(i, j) - mean) * inv * gamma[j] + beta[j];
  }
  return y;
}

inline constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluC1 = 0.044715;

// x * Phi(x), tanh approximation.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    const T u = static_cast<T>(kGeluC0) * (v + static_cast<T>(kGeluC1) * v * v * v);
    y[i] = T(0.5) * v * (T(1) + std::tanh(u));
  }
  return y;
}

template <typename T>
Tensor<T> gelu_grad(const Tensor<T>& x, const Tensor<T>& g) {
  check_same_shape(x, g, "gelu_grad");
  Tensor<T> dx(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    const T u = static_cast<T>(kGeluC0) * (v + static_cast<T>(kGeluC1) * v * v * v);
    const T t = std::tanh(u);
    const T du = static_cast<T>(kGeluC0) * (T(1) + T(3) * static_cast<T>(kGeluC1) * v * v);
    dx[i] = g[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du);
  }
  return dx;
}

// F: [H, W, D], K: [3, 3, D]; zero padding of one pixel, per-channel kernel.
template <typename T>
Tensor<T> depthwise_conv3x3(const Tensor<T>& f, const Tensor<T>& k) {
  check_rank(f, 3, "depthwise_conv3x3 input");
  check_rank(k, 3, "depthwise_conv3x3 kernel");
  if (k.dim(0) != 3 || k.dim(1) != 3 || k.dim(2) != f.dim(2))
    throw std::invalid_argument("depthwise_conv3x3: kernel must be [3,3,D]");
  const int64_t h = f.dim(0), w = f.dim(1), d = f.dim(2);
  Tensor<T> out(f.shape());
  parallel_for(h, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      for (int64_t j = 0; j < w; ++j) {
        for (int64_t c = 0; c < d; ++c) {
          T acc = 0;
          for (int64_t u = -1; u <= 1; ++u) {
            const int64_t ii = i + u;
            if (ii < 0 || ii >= h) continue;
            for (int64_t v = -1; v <= 1; ++v) {
              const int64_t jj = j + v;
              if (jj < 0 || jj >= w) continue;
              acc += f(ii, jj, c) * k(u + 1, v + 1, c);
            }
          }
          out(i, j, c) = acc;
        }
      }
    }
  });
  return out;
}

// F: [H, W, D]; S must divide H and W. Non-divisible sizes are rejected
// rather than padded; silent padding hides geometry bugs upstream.
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& f, int64_t s) {
  check_rank(f, 3, "avg_pool2d");
  if (s < 1) throw std::invalid_argument("avg_pool2d: kernel must be >= 1");
  const int64_t h = f.dim(0), w = f.dim(1), d = f.dim(2);
  if (h % s != 0 || w % s != 0)
    throw std::invalid_argument("avg_pool2d: kernel " + std::to_string(s) +
                                " does not divide " + shape_str(f.shape()));
  Tensor<T> out({h / s, w / s, d});
  const T inv = T(1) / static_cast<T>(s * s);
  for (int64_t i = 0; i < h / s; ++i)
    for (int64_t j = 0; j < w / s; ++j)
      for (int64_t c = 0; c < d; ++c) {
        T acc = 0;
        for (int64_t u = 0; u < s; ++u)
          for (int64_t v = 0; v < s; ++v) acc += f(i * s + u, j * s + v, c);
        out(i, j, c) = acc * inv;
      }
  return out;
}

struct BilinearTap {
  int64_t lo, hi;
  double frac;
};

// Half-pixel-center sampling: src = (dst + 0.5) * (src_size / dst_size) - 0.5,
// clamped at the borders (align-corners = false semantics).
inline BilinearTap bilinear_tap(int64_t dst, int64_t dst_size, int64_t src_size) {
  const double s =
      (static_cast<double>(dst) + 0.5) * (static_cast<double>(src_size) / static_cast<double>(dst_size)) - 0.5;
  const double fl = std::floor(s);
  BilinearTap t;
  t.frac = s - fl;
  const int64_t i0 = static_cast<int64_t>(fl);
  t.lo = std::clamp<int64_t>(i0, 0, src_size - 1);
  t.hi = std::clamp<int64_t>(i0 + 1, 0, src_size - 1);
  return t;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& f, int64_t h2, int64_t w2) {
  check_rank(f, 3, "resize_bilinear");
  if (h2 < 1 || w2 < 1) throw std::invalid_argument("resize_bilinear: target dims must be >= 1");
  const int64_t h = f.dim(0), w = f.dim(1), d = f.dim(2);
  Tensor<T> out({h2, w2, d});
  parallel_for(h2, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const BilinearTap ty = bilinear_tap(i, h2, h);
      for (int64_t j = 0; j < w2; ++j) {
        const BilinearTap tx = bilinear_tap(j, w2, w);
        const T fy = static_cast<T>(ty.frac), fx = static_cast<T>(tx.frac);
        for (int64_t c = 0; c < d; ++c) {
          const T v00 = f(ty.lo, tx.lo, c), v01 = f(ty.lo, tx.hi, c);
          const T v10 = f(ty.hi, tx.lo, c), v11 = f(ty.hi, tx.hi, c);
          out(i, j, c) = (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) +
                         fy * ((T(1) - fx) * v10 + fx * v11);
        }
      }
    }
  });
  return out;
}

struct TokenCoord {
  int64_t row = 0;
  int64_t col = 0;
};

// Rotary embedding over a 2D grid: the first half of the head dimension is
// rotated by the token's row index, the second half by its column index,
// each with the standard interleaved-pair 1D construction. The head
// dimension must be divisible by 4 so each half has whole pairs.
template <typename T>
Tensor<T> rope2d(const Tensor<T>& x, const std::vector<TokenCoord>& coords, T base,
                 bool inverse = false) {
  check_rank(x, 2, "rope2d");
  const int64_t l = x.dim(0), dh = x.dim(1);
  if (dh % 4 != 0)
    throw std::invalid_argument("rope2d: head dim must be divisible by 4, got " +
                                std::to_string(dh));
  if (static_cast<int64_t>(coords.size()) != l)
    throw std::invalid_argument("rope2d: coords length must equal token count");
  const int64_t half = dh / 2;
  Tensor<T> y(x.shape());
  for (int64_t t = 0; t < l; ++t) {
    for (int axis = 0; axis < 2; ++axis) {
      const int64_t off = axis == 0 ? 0 : half;
      const T pos = static_cast<T>(axis == 0 ? coords[t].row : coords[t].col);
      for (int64_t p = 0; p < half / 2; ++p) {
        const T freq = std::pow(base, static_cast<T>(-2.0 * static_cast<double>(p) /
                                                     static_cast<double>(half)));
        T theta = pos * freq;
        if (inverse) theta = -theta;
        const T c = std::cos(theta), s = std::sin(theta);
        const T x0 = x(t, off + 2 * p), x1 = x(t, off + 2 * p + 1);
        y(t, off + 2 * p) = x0 * c - x1 * s;
        y(t, off + 2 * p + 1) = x0 * s + x1 * c;
      }
    }
  }
  return y;
}

template <typename T>
T sum_all(const Tensor<T>& x) {
  T s = 0;
  for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
  return s;
}

// [L, D] -> [1, D] column means.
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  check_rank(x, 2, "mean_rows");
  Tensor<T> m({int64_t(1), x.dim(1)});
  for (int64_t i = 0; i < x.dim(0); ++i)
    for (int64_t j = 0; j < x.dim(1); ++j) m(0, j) += x(i, j);
  for (int64_t j = 0; j < x.dim(1); ++j) m(0, j) /= static_cast<T>(x.dim(0));
  return m;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int64_t>& idx) {
  check_rank(x, 2, "gather_rows");
  const int64_t d = x.dim(1);
  Tensor<T> out({static_cast<int64_t>(idx.size()), d});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.dim(0))
      throw std::invalid_argument("gather_rows: index out of range");
    for (int64_t j = 0; j < d; ++j) out(static_cast<int64_t>(i), j) = x(idx[i], j);
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, int64_t r0, int64_t r1) {
  check_rank(x, 2, "slice_rows");
  if (r0 < 0 || r1 > x.dim(0) || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range");
  Tensor<T> out({r1 - r0, x.dim(1)});
  for (int64_t i = r0; i < r1; ++i)
    for (int64_t j = 0; j < x.dim(1); ++j) out(i - r0, j) = x(i, j);
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int64_t c0, int64_t c1) {
  check_rank(x, 2, "slice_cols");
  if (c0 < 0 || c1 > x.dim(1) || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range");
  Tensor<T> out({x.dim(0), c1 - c0});
  for (int64_t i = 0; i < x.dim(0); ++i)
    for (int64_t j = c0; j < c1; ++j) out(i, j - c0) = x(i, j);
  return out;
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const int64_t d = parts[0].dim(1);
  int64_t rows = 0;
  for (const auto& p : parts) {
    check_rank(p, 2, "concat_rows part");
    if (p.dim(1) != d) throw std::invalid_argument("concat_rows: width mismatch");
    rows += p.dim(0);
  }
  Tensor<T> out({rows, d});
  int64_t r = 0;
  for (const auto& p : parts) {
    for (int64_t i = 0; i < p.dim(0); ++i, ++r)
      for (int64_t j = 0; j < d; ++j) out(r, j) = p(i, j);
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int64_t l = parts[0].dim(0);
  int64_t cols = 0;
  for (const auto& p : parts) {
    check_rank(p, 2, "concat_cols part");
    if (p.dim(0) != l) throw std::invalid_argument("concat_cols: height mismatch");
    cols += p.dim(1);
  }
  Tensor<T> out({l, cols});
  int64_t c = 0;
  for (const auto& p : parts) {
    for (int64_t j = 0; j < p.dim(1); ++j, ++c)
      for (int64_t i = 0; i < l; ++i) out(i, c) = p(i, j);
  }
  return out;
}

}  // namespace hires::ops
