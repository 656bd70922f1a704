#pragma once

#include <cstddef>

// Numeric inner loops behind the tensor ops. Every kernel exists twice:
// `serial` is the plain reference kept for testing and benchmarking, and
// `parallel` is the OpenMP version the ops dispatch to. Work is split so that
// each output element is produced by one thread with the same accumulation
// order as the serial loop, so both namespaces return identical bits.

namespace docbin::kernels {

/// Batched C = op(A) * op(B) where op transposes when requested.
/// Shapes per batch: op(A) is m x k, op(B) is k x n, C is m x n.
/// A zero batch stride broadcasts that operand across the batch.
struct GemmShape {
  std::size_t batch = 1;
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  std::size_t a_stride = 0;
  std::size_t b_stride = 0;
  bool trans_a = false;
  bool trans_b = false;
};

/// Softmax over the middle axis of an (outer, len, inner) view.
struct AxisShape {
  std::size_t outer = 1;
  std::size_t len = 0;
  std::size_t inner = 1;
};

struct AdamWHyper {
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double bias_correction1 = 1.0;
  double bias_correction2 = 1.0;
};

#define DOCBIN_KERNEL_DECLS                                                    \
  template <class T>                                                           \
  void gemm(const T* a, const T* b, T* c, const GemmShape& s);                 \
  template <class T>                                                           \
  void softmax_forward(const T* x, T* y, const AxisShape& s);                  \
  template <class T>                                                           \
  void softmax_backward(const T* y, const T* dy, T* dx, const AxisShape& s);   \
  template <class T>                                                           \
  void layer_norm_forward(const T* x, const T* gamma, const T* beta, T* y,     \
                          T* mean, T* rstd, std::size_t rows,                  \
                          std::size_t cols, double eps);                       \
  template <class T>                                                           \
  void layer_norm_backward(const T* x, const T* gamma, const T* mean,          \
                           const T* rstd, const T* dy, T* dx, T* dgamma,       \
                           T* dbeta, std::size_t rows, std::size_t cols);      \
  template <class T>                                                           \
  void gelu_forward(const T* x, T* y, std::size_t n);                          \
  template <class T>                                                           \
  void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n);           \
  template <class T>                                                           \
  void adamw_update(T* param, const T* grad, T* m, T* v, std::size_t n,        \
                    const AdamWHyper& h);

namespace serial {
DOCBIN_KERNEL_DECLS
}  // namespace serial

namespace parallel {
DOCBIN_KERNEL_DECLS
}  // namespace parallel

#undef DOCBIN_KERNEL_DECLS

/// Thread count used by the parallel kernels; honours DOCBINFORMER_THREADS.
int thread_count();
void set_thread_count(int threads);

}  // namespace docbin::kernels
