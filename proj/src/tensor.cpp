#include "docbin/tensor.hpp"

#include <algorithm>

namespace docbin {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <class T>
void Tape<T>::backward(Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : "(undefined)"));
  }
  auto g = loss.grad();
  g[0] = T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
}

template <class T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template Tape<float>*& active_tape<float>();
template Tape<double>*& active_tape<double>();

}  // namespace docbin
