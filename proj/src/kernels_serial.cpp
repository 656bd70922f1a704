#include <algorithm>
#include <cmath>

#include "docbin/kernels.hpp"

namespace docbin::kernels::serial {

template <class T>
void gemm(const T* a, const T* b, T* c, const GemmShape& s) {
  for (std::size_t bt = 0; bt < s.batch; ++bt) {
    const T* ab = a + bt * s.a_stride;
    const T* bb = b + bt * s.b_stride;
    T* cb = c + bt * s.m * s.n;
    for (std::size_t i = 0; i < s.m; ++i) {
      for (std::size_t j = 0; j < s.n; ++j) {
        T acc = T(0);
        for (std::size_t p = 0; p < s.k; ++p) {
          const T av = s.trans_a ? ab[p * s.m + i] : ab[i * s.k + p];
          const T bv = s.trans_b ? bb[j * s.k + p] : bb[p * s.n + j];
          acc += av * bv;
        }
        cb[i * s.n + j] = acc;
      }
    }
  }
}

template <class T>
void softmax_forward(const T* x, T* y, const AxisShape& s) {
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = x[base];
      for (std::size_t l = 1; l < s.len; ++l) {
        mx = std::max(mx, x[base + l * s.inner]);
      }
      T total = T(0);
      for (std::size_t l = 0; l < s.len; ++l) {
        const T e = std::exp(x[base + l * s.inner] - mx);
        y[base + l * s.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) y[base + l * s.inner] /= total;
    }
  }
}

template <class T>
void softmax_backward(const T* y, const T* dy, T* dx, const AxisShape& s) {
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T dot = T(0);
      for (std::size_t l = 0; l < s.len; ++l) {
        dot += y[base + l * s.inner] * dy[base + l * s.inner];
      }
      for (std::size_t l = 0; l < s.len; ++l) {
        const std::size_t idx = base + l * s.inner;
        dx[idx] = y[idx] * (dy[idx] - dot);
      }
    }
  }
}

template <class T>
void layer_norm_forward(const T* x, const T* gamma, const T* beta, T* y,
                        T* mean, T* rstd, std::size_t rows, std::size_t cols,
                        double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    T mu = T(0);
    for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      const T d = xr[c] - mu;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
    mean[r] = mu;
    rstd[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) {
      y[r * cols + c] = (xr[c] - mu) * inv * gamma[c] + beta[c];
    }
  }
}

template <class T>
void layer_norm_backward(const T* x, const T* gamma, const T* mean,
                         const T* rstd, const T* dy, T* dx, T* dgamma,
                         T* dbeta, std::size_t rows, std::size_t cols) {
  for (std::size_t c = 0; c < cols; ++c) {
    T dg = T(0);
    T db = T(0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T xhat = (x[r * cols + c] - mean[r]) * rstd[r];
      dg += dy[r * cols + c] * xhat;
      db += dy[r * cols + c];
    }
    dgamma[c] = dg;
    dbeta[c] = db;
  }
  const T n = static_cast<T>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    T sum_g = T(0);
    T sum_gx = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      const T g = dy[r * cols + c] * gamma[c];
      const T xhat = (x[r * cols + c] - mean[r]) * rstd[r];
      sum_g += g;
      sum_gx += g * xhat;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const T g = dy[r * cols + c] * gamma[c];
      const T xhat = (x[r * cols + c] - mean[r]) * rstd[r];
      dx[r * cols + c] = rstd[r] * (g - sum_g / n - xhat * sum_gx / n);
    }
  }
}

template <class T>
void gelu_forward(const T* x, T* y, std::size_t n) {
  const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
  }
}

template <class T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  const T inv_sqrt2pi = static_cast<T>(0.39894228040143267794);
  for (std::size_t i = 0; i < n; ++i) {
    const T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
    const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x[i] * x[i]);
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  }
}

template <class T>
void adamw_update(T* param, const T* grad, T* m, T* v, std::size_t n,
                  const AdamWHyper& h) {
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  const T lr = static_cast<T>(h.lr);
  const T eps = static_cast<T>(h.eps);
  const T wd = static_cast<T>(h.weight_decay);
  const T bc1 = static_cast<T>(h.bias_correction1);
  const T bc2 = static_cast<T>(h.bias_correction2);
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const T m_hat = m[i] / bc1;
    const T v_hat = v[i] / bc2;
    param[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * param[i]);
  }
}

#define DOCBIN_INSTANTIATE(T)                                                 \
  template void gemm<T>(const T*, const T*, T*, const GemmShape&);            \
  template void softmax_forward<T>(const T*, T*, const AxisShape&);           \
  template void softmax_backward<T>(const T*, const T*, T*, const AxisShape&); \
  template void layer_norm_forward<T>(const T*, const T*, const T*, T*, T*,   \
                                      T*, std::size_t, std::size_t, double);  \
  template void layer_norm_backward<T>(const T*, const T*, const T*,          \
                                       const T*, const T*, T*, T*, T*,        \
                                       std::size_t, std::size_t);             \
  template void gelu_forward<T>(const T*, T*, std::size_t);                   \
  template void gelu_backward<T>(const T*, const T*, T*, std::size_t);        \
  template void adamw_update<T>(T*, const T*, T*, T*, std::size_t,            \
                                const AdamWHyper&);

DOCBIN_INSTANTIATE(float)
DOCBIN_INSTANTIATE(double)
#undef DOCBIN_INSTANTIATE

}  // namespace docbin::kernels::serial
