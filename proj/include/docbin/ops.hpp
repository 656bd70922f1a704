#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "docbin/tensor.hpp"

// Differentiable tensor ops. Each op records its gradient rule on the
// thread's active Tape when one is set and any input requires grad. Every
// forward result is checked for NaN/Inf and raises NumericalError.
//
// Broadcasting is limited to two forms: matmul batch dimensions that are
// equal or absent on one side, and add/sub where the second operand's shape
// is a suffix of the first (bias rows, positional tables).

namespace docbin {

/// Batched matrix product over the last two axes.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Swaps two axes (default: the last two).
template <class T>
Tensor<T> transpose(const Tensor<T>& x, int axis0 = -2, int axis1 = -1);

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(const Tensor<T>& x, double factor);

template <class T>
Tensor<T> square(const Tensor<T>& x);

template <class T>
Tensor<T> sum(const Tensor<T>& x);

template <class T>
Tensor<T> mean(const Tensor<T>& x);

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

/// Elements [begin, end) along `axis`.
template <class T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t begin,
                std::size_t end);

/// Max-subtracted softmax along `axis`.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

/// Normalizes over the last axis, then applies gamma * xhat + beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps);

/// Exact erf-form GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& x);

/// Logistic function 1 / (1 + exp(-x)).
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// out.flat[i] = x.flat[index[i]]. The backward pass scatter-adds, so
/// repeated indices are allowed.
template <class T>
Tensor<T> gather(const Tensor<T>& x,
                 std::shared_ptr<const std::vector<std::size_t>> index,
                 Shape out_shape);

/// Throws NumericalError if any element of `values` is NaN or Inf.
template <class T>
void check_finite(std::span<const T> values, const char* op);

}  // namespace docbin
