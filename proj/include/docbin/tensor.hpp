#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "docbin/errors.hpp"

namespace docbin {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor with shared storage. Copies of a Tensor are
/// handles to the same buffer; use clone() for a deep copy.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : impl_(std::make_shared<Storage>()) {
    impl_->data.assign(numel(shape), fill);
    impl_->shape = std::move(shape);
  }
  Tensor(Shape shape, std::vector<T> values)
      : impl_(std::make_shared<Storage>()) {
    if (numel(shape) != values.size()) {
      throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                           std::to_string(numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, value); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  /// Size of `axis`; negative axes count from the end.
  std::size_t dim(int axis) const;

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T item() const {
    if (size() != 1) {
      throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; allocated as zeros on first access. Gradients belong
  /// to the shared storage, so a const handle may still accumulate into it.
  std::span<T> grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
  }
  void zero_grad() const { impl_->grad.assign(impl_->data.size(), T(0)); }
  void drop_grad() const { impl_->grad.clear(); }

  /// Deep copy of data and shape; the copy does not require grad.
  Tensor clone() const { return Tensor(shape(), std::vector<T>(impl_->data)); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> impl_;
};

template <class T>
std::size_t Tensor<T>::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

/// Ordered record of differentiable ops. backward() replays the recorded
/// gradient rules in exact reverse order.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(const char* op, BackwardFn fn) {
    entries_.push_back({op, std::move(fn)});
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor.
  void backward(Tensor<T>& loss);

  std::size_t size() const { return entries_.size(); }
  const char* op_name(std::size_t i) const { return entries_[i].op; }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    const char* op;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

/// Tape that ops on the current thread record into, or nullptr.
template <class T>
Tape<T>*& active_tape();

/// Makes `tape` the active tape for the current thread for the scope's
/// lifetime.
template <class T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(active_tape<T>()) {
    active_tape<T>() = &tape;
  }
  ~TapeScope() { active_tape<T>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace docbin
