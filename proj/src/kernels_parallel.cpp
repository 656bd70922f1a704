#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "docbin/kernels.hpp"

namespace docbin::kernels {

namespace {

int initial_thread_count() {
  if (const char* env = std::getenv("DOCBINFORMER_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) {
        omp_set_num_threads(n);
        return n;
      }
    } catch (const std::exception&) {
    }
  }
  return omp_get_max_threads();
}

int& configured_threads() {
  static int threads = initial_thread_count();
  return threads;
}

constexpr std::size_t kRowBlock = 4;

}  // namespace

int thread_count() { return configured_threads(); }

void set_thread_count(int threads) {
  if (threads < 1) threads = 1;
  configured_threads() = threads;
  omp_set_num_threads(threads);
}

namespace parallel {

template <class T>
void gemm(const T* a, const T* b, T* c, const GemmShape& s) {
  const int nthreads = thread_count();
  // Row-major B makes the inner j loop contiguous; a transposed B is copied
  // once so every case runs the same i-k-j accumulation order.
  std::vector<T> bt_buffer;
  std::size_t b_stride = s.b_stride;
  const T* bsrc = b;
  if (s.trans_b) {
    const std::size_t nb = s.b_stride == 0 ? 1 : s.batch;
    bt_buffer.resize(nb * s.k * s.n);
#pragma omp parallel for schedule(static) num_threads(nthreads)
    for (std::size_t bt = 0; bt < nb; ++bt) {
      const T* src = b + bt * s.b_stride;
      T* dst = bt_buffer.data() + bt * s.k * s.n;
      for (std::size_t j = 0; j < s.n; ++j) {
        for (std::size_t p = 0; p < s.k; ++p) dst[p * s.n + j] = src[j * s.k + p];
      }
    }
    bsrc = bt_buffer.data();
    b_stride = s.b_stride == 0 ? 0 : s.k * s.n;
  }

  const std::size_t blocks = (s.m + kRowBlock - 1) / kRowBlock;
  const std::size_t total = s.batch * blocks;
#pragma omp parallel for schedule(static) num_threads(nthreads)
  for (std::size_t task = 0; task < total; ++task) {
    const std::size_t bt = task / blocks;
    const std::size_t i0 = (task % blocks) * kRowBlock;
    const std::size_t rows = std::min(kRowBlock, s.m - i0);
    const T* ab = a + bt * s.a_stride;
    const T* bb = bsrc + bt * b_stride;
    T* cb = c + bt * s.m * s.n;
    for (std::size_t r = 0; r < rows; ++r) {
      std::fill_n(cb + (i0 + r) * s.n, s.n, T(0));
    }
    auto a_at = [&](std::size_t i, std::size_t p) {
      return s.trans_a ? ab[p * s.m + i] : ab[i * s.k + p];
    };
    if (rows == kRowBlock) {
      T* c0 = cb + (i0 + 0) * s.n;
      T* c1 = cb + (i0 + 1) * s.n;
      T* c2 = cb + (i0 + 2) * s.n;
      T* c3 = cb + (i0 + 3) * s.n;
      for (std::size_t p = 0; p < s.k; ++p) {
        const T a0 = a_at(i0 + 0, p);
        const T a1 = a_at(i0 + 1, p);
        const T a2 = a_at(i0 + 2, p);
        const T a3 = a_at(i0 + 3, p);
        const T* brow = bb + p * s.n;
#pragma omp simd
        for (std::size_t j = 0; j < s.n; ++j) {
          const T bv = brow[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        T* crow = cb + (i0 + r) * s.n;
        for (std::size_t p = 0; p < s.k; ++p) {
          const T av = a_at(i0 + r, p);
          const T* brow = bb + p * s.n;
#pragma omp simd
          for (std::size_t j = 0; j < s.n; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

template <class T>
void softmax_forward(const T* x, T* y, const AxisShape& s) {
  const std::size_t total = s.outer * s.inner;
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::size_t t = 0; t < total; ++t) {
    const std::size_t base = (t / s.inner) * s.len * s.inner + t % s.inner;
    T mx = x[base];
    for (std::size_t l = 1; l < s.len; ++l) {
      mx = std::max(mx, x[base + l * s.inner]);
    }
    T sum = T(0);
    for (std::size_t l = 0; l < s.len; ++l) {
      const T e = std::exp(x[base + l * s.inner] - mx);
      y[base + l * s.inner] = e;
      sum += e;
    }
    for (std::size_t l = 0; l < s.len; ++l) y[base + l * s.inner] /= sum;
  }
}

template <class T>
void softmax_backward(const T* y, const T* dy, T* dx, const AxisShape& s) {
  const std::size_t total = s.outer * s.inner;
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::size_t t = 0; t < total; ++t) {
    const std::size_t base = (t / s.inner) * s.len * s.inner + t % s.inner;
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

template <class T>
void layer_norm_forward(const T* x, const T* gamma, const T* beta, T* y,
                        T* mean, T* rstd, std::size_t rows, std::size_t cols,
                        double eps) {
#pragma omp parallel for schedule(static) num_threads(thread_count())
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
    T* yr = y + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      yr[c] = (xr[c] - mu) * inv * gamma[c] + beta[c];
    }
  }
}

template <class T>
void layer_norm_backward(const T* x, const T* gamma, const T* mean,
                         const T* rstd, const T* dy, T* dx, T* dgamma,
                         T* dbeta, std::size_t rows, std::size_t cols) {
  const int nthreads = thread_count();
#pragma omp parallel for schedule(static) num_threads(nthreads)
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
#pragma omp parallel for schedule(static) num_threads(nthreads)
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
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
  }
}

template <class T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  const T inv_sqrt2pi = static_cast<T>(0.39894228040143267794);
#pragma omp parallel for schedule(static) num_threads(thread_count())
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
#pragma omp parallel for schedule(static) num_threads(thread_count())
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

}  // namespace parallel
}  // namespace docbin::kernels
