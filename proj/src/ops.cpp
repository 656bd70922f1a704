#include "docbin/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "docbin/kernels.hpp"

namespace docbin {

namespace {

namespace kp = kernels::parallel;

int normalize_axis(int axis, std::size_t rank, const Shape& shape) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape));
  }
  return a;
}

template <class T, class... Ts>
Tape<T>* recording_tape(const Tensor<T>& first, const Ts&... rest) {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) return nullptr;
  const bool any = first.requires_grad() || (rest.requires_grad() || ...);
  return any ? tape : nullptr;
}

template <class T>
Tensor<T> finish(Tensor<T> out, Tape<T>* tape, const char* op) {
  check_finite<T>(out.data(), op);
  if (tape != nullptr) out.set_requires_grad(true);
  return out;
}

template <class T>
void accumulate(const Tensor<T>& t, std::span<const T> g) {
  if (!t.requires_grad()) return;
  auto dst = t.grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

Shape batch_dims(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

}  // namespace

template <class T>
void check_finite(std::span<const T> values, const char* op) {
  for (const T v : values) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string(op) + " produced a non-finite value");
    }
  }
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.dim(-1) != b.dim(-2)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const Shape ab = batch_dims(a.shape());
  const Shape bb = batch_dims(b.shape());
  const std::size_t na = numel(ab);
  const std::size_t nb = numel(bb);
  const bool b_bcast = nb == 1 && ab != bb;
  const bool a_bcast = !b_bcast && na == 1 && ab != bb;
  if (ab != bb && !a_bcast && !b_bcast) {
    throw DimensionError("matmul: batch dimensions of " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " do not broadcast");
  }
  const std::size_t m = a.dim(-2);
  const std::size_t k = a.dim(-1);
  const std::size_t n = b.dim(-1);
  Shape out_shape = a_bcast ? bb : ab;
  const std::size_t batch = numel(out_shape);
  out_shape.push_back(m);
  out_shape.push_back(n);

  Tensor<T> out(out_shape);
  kernels::GemmShape g;
  if (b_bcast) {
    // Shared right operand: fold the batch into the row dimension.
    g.batch = 1;
    g.m = batch * m;
  } else {
    g.batch = batch;
    g.m = m;
    g.a_stride = a_bcast ? 0 : m * k;
    g.b_stride = k * n;
  }
  g.k = k;
  g.n = n;
  kp::gemm(a.data().data(), b.data().data(), out.data().data(), g);

  Tape<T>* tape = recording_tape(a, b);
  out = finish(std::move(out), tape, "matmul");
  if (tape) {
    tape->record("matmul", [a, b, out, batch, m, k, n, a_bcast, b_bcast]() mutable {
      if (!out.has_grad()) return;
      const T* dc = out.grad().data();
      if (a.requires_grad()) {
        // dA = dC * B^T
        std::vector<T> da(batch * m * k);
        kernels::GemmShape g;
        if (b_bcast) {
          g = {1, batch * m, n, k, 0, 0, false, true};
        } else {
          g = {batch, m, n, k, m * n, k * n, false, true};
        }
        kp::gemm(dc, b.data().data(), da.data(), g);
        if (a_bcast) {
          std::vector<T> reduced(m * k, T(0));
          for (std::size_t bt = 0; bt < batch; ++bt) {
            for (std::size_t i = 0; i < m * k; ++i) reduced[i] += da[bt * m * k + i];
          }
          accumulate<T>(a, reduced);
        } else {
          accumulate<T>(a, da);
        }
      }
      if (b.requires_grad()) {
        // dB = A^T * dC
        if (b_bcast) {
          std::vector<T> db(k * n);
          kernels::GemmShape g{1, k, batch * m, n, 0, 0, true, false};
          kp::gemm(a.data().data(), dc, db.data(), g);
          accumulate<T>(b, db);
        } else {
          std::vector<T> db(batch * k * n);
          kernels::GemmShape g{batch, k, m, n, a_bcast ? 0 : m * k, m * n, true, false};
          kp::gemm(a.data().data(), dc, db.data(), g);
          accumulate<T>(b, db);
        }
      }
    });
  }
  return out;
}

namespace {

// View of a tensor as [pre, d0, mid, d1, post] for swapping d0 and d1.
struct SwapView {
  std::size_t pre = 1, d0 = 1, mid = 1, d1 = 1, post = 1;
};

SwapView swap_view(const Shape& s, int lo, int hi) {
  SwapView v;
  for (int i = 0; i < lo; ++i) v.pre *= s[i];
  v.d0 = s[lo];
  for (int i = lo + 1; i < hi; ++i) v.mid *= s[i];
  v.d1 = s[hi];
  for (std::size_t i = hi + 1; i < s.size(); ++i) v.post *= s[i];
  return v;
}

// dst[pre, j, mid, i, post] = src[pre, i, mid, j, post]
template <class T>
void swap_copy(const T* src, T* dst, const SwapView& v, bool accumulate_into) {
  for (std::size_t p = 0; p < v.pre; ++p) {
    for (std::size_t i = 0; i < v.d0; ++i) {
      for (std::size_t md = 0; md < v.mid; ++md) {
        for (std::size_t j = 0; j < v.d1; ++j) {
          const std::size_t s_off =
              (((p * v.d0 + i) * v.mid + md) * v.d1 + j) * v.post;
          const std::size_t d_off =
              (((p * v.d1 + j) * v.mid + md) * v.d0 + i) * v.post;
          if (accumulate_into) {
            for (std::size_t q = 0; q < v.post; ++q) dst[d_off + q] += src[s_off + q];
          } else {
            std::copy_n(src + s_off, v.post, dst + d_off);
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1) {
  int a0 = normalize_axis(axis0, x.rank(), x.shape());
  int a1 = normalize_axis(axis1, x.rank(), x.shape());
  if (a0 == a1) return reshape(x, x.shape());
  if (a0 > a1) std::swap(a0, a1);
  Shape out_shape = x.shape();
  std::swap(out_shape[a0], out_shape[a1]);
  Tensor<T> out(out_shape);
  const SwapView v = swap_view(x.shape(), a0, a1);
  swap_copy(x.data().data(), out.data().data(), v, false);
  Tape<T>* tape = recording_tape(x);
  out = finish(std::move(out), tape, "transpose");
  if (tape) {
    tape->record("transpose", [x, out, a0, a1]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      const SwapView vo = swap_view(out.shape(), a0, a1);
      swap_copy(out.grad().data(), x.grad().data(), vo, true);
    });
  }
  return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape),
                std::vector<T>(x.data().begin(), x.data().end()));
  Tape<T>* tape = recording_tape(x);
  if (tape) {
    out.set_requires_grad(true);
    tape->record("reshape", [x, out]() mutable {
      if (!out.has_grad()) return;
      accumulate<T>(x, out.grad());
    });
  }
  return out;
}

namespace {

template <class T>
Tensor<T> add_or_sub(const Tensor<T>& a, const Tensor<T>& b, T sign,
                     const char* op) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(b.shape()) +
                         " does not broadcast onto " + shape_str(a.shape()));
  }
  Tensor<T> out(a.shape());
  const std::size_t nb = b.size();
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < ad.size(); ++i) od[i] = ad[i] + sign * bd[i % nb];
  Tape<T>* tape = recording_tape(a, b);
  out = finish(std::move(out), tape, op);
  if (tape) {
    tape->record(op, [a, b, out, sign]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      accumulate<T>(a, g);
      if (b.requires_grad()) {
        auto gb = b.grad();
        const std::size_t nb = gb.size();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += sign * g[i];
      }
    });
  }
  return out;
}

template <class T, class Fwd, class Bwd>
Tensor<T> unary(const Tensor<T>& x, const char* op, Fwd fwd, Bwd bwd) {
  Tensor<T> out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = fwd(xd[i]);
  Tape<T>* tape = recording_tape(x);
  out = finish(std::move(out), tape, op);
  if (tape) {
    tape->record(op, [x, out, bwd]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      auto g = out.grad();
      auto xd = x.data();
      auto od = out.data();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * bwd(xd[i], od[i]);
    });
  }
  return out;
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return add_or_sub(a, b, T(1), "add");
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add_or_sub(a, b, T(-1), "sub");
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, double factor) {
  const T f = static_cast<T>(factor);
  return unary(
      x, "scale", [f](T v) { return v * f; }, [f](T, T) { return f; });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, "sigmoid",
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (const T v : x.data()) total += v;
  Tensor<T> out = Tensor<T>::scalar(total);
  Tape<T>* tape = recording_tape(x);
  out = finish(std::move(out), tape, "sum");
  if (tape) {
    tape->record("sum", [x, out]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      const T g = out.grad()[0];
      for (T& v : x.grad()) v += g;
    });
  }
  return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw DimensionError("mean of an empty tensor");
  const T n = static_cast<T>(x.size());
  T total = T(0);
  for (const T v : x.data()) total += v;
  Tensor<T> out = Tensor<T>::scalar(total / n);
  Tape<T>* tape = recording_tape(x);
  out = finish(std::move(out), tape, "mean");
  if (tape) {
    tape->record("mean", [x, out, n]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      const T g = out.grad()[0] / n;
      for (T& v : x.grad()) v += g;
    });
  }
  return out;
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& ref = parts.front().shape();
  const int ax = normalize_axis(axis, ref.size(), ref);
  Shape out_shape = ref;
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == ref.size();
    for (std::size_t d = 0; ok && d < ref.size(); ++d) {
      if (static_cast<int>(d) != ax && p.shape()[d] != ref[d]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(p.shape()) +
                           " incompatible with " + shape_str(ref) +
                           " along axis " + std::to_string(axis));
    }
    out_shape[ax] += p.shape()[ax];
  }
  std::size_t outer = 1;
  for (int d = 0; d < ax; ++d) outer *= ref[d];
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < ref.size(); ++d) inner *= ref[d];
  const std::size_t out_row = out_shape[ax] * inner;

  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t row = p.shape()[ax] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().data() + o * row, row,
                  out.data().data() + o * out_row + offset);
    }
    offset += row;
  }

  Tape<T>* tape = active_tape<T>();
  const bool any = std::any_of(parts.begin(), parts.end(),
                               [](const auto& p) { return p.requires_grad(); });
  if (!any) tape = nullptr;
  out = finish(std::move(out), tape, "concat");
  if (tape) {
    tape->record("concat", [parts, out, ax, outer, inner, out_row]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad().data();
      std::size_t off = 0;
      for (auto& p : parts) {
        const std::size_t row = p.shape()[ax] * inner;
        if (p.requires_grad()) {
          T* gp = p.grad().data();
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t q = 0; q < row; ++q) gp[o * row + q] += g[o * out_row + off + q];
          }
        }
        off += row;
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t begin,
                std::size_t end) {
  const int ax = normalize_axis(axis, x.rank(), x.shape());
  if (begin > end || end > x.shape()[ax]) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  std::size_t outer = 1;
  for (int d = 0; d < ax; ++d) outer *= x.shape()[d];
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < x.rank(); ++d) inner *= x.shape()[d];
  const std::size_t in_row = x.shape()[ax] * inner;
  const std::size_t out_row = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data().data() + o * in_row + off, out_row,
                out.data().data() + o * out_row);
  }
  Tape<T>* tape = recording_tape(x);
  out = finish(std::move(out), tape, "slice");
  if (tape) {
    tape->record("slice", [x, out, outer, in_row, out_row, off]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      const T* g = out.grad().data();
      T* gx = x.grad().data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t q = 0; q < out_row; ++q) gx[o * in_row + off + q] += g[o * out_row + q];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int ax = normalize_axis(axis, x.rank(), x.shape());
  kernels::AxisShape s;
  for (int d = 0; d < ax; ++d) s.outer *= x.shape()[d];
  s.len = x.shape()[ax];
  for (std::size_t d = ax + 1; d < x.rank(); ++d) s.inner *= x.shape()[d];
  Tensor<T> out(x.shape());
  kp::softmax_forward(x.data().data(), out.data().data(), s);
  Tape<T>* tape = recording_tape(x);
  out = finish(std::move(out), tape, "softmax");
  if (tape) {
    tape->record("softmax", [x, out, s]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      std::vector<T> dx(x.size());
      kp::softmax_backward(out.data().data(), out.grad().data(), dx.data(), s);
      accumulate<T>(x, dx);
    });
  }
  return out;
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps) {
  if (!(eps > 0.0)) {
    throw ConfigError("layer_norm: eps must be positive, got " + std::to_string(eps));
  }
  if (x.rank() < 1) throw DimensionError("layer_norm on a scalar");
  const std::size_t cols = x.dim(-1);
  if (gamma.shape() != Shape{cols} || beta.shape() != Shape{cols}) {
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) +
                         " / beta " + shape_str(beta.shape()) +
                         " do not match last dimension of " + shape_str(x.shape()));
  }
  const std::size_t rows = cols == 0 ? 0 : x.size() / cols;
  Tensor<T> out(x.shape());
  std::vector<T> mu(rows);
  std::vector<T> rstd(rows);
  kp::layer_norm_forward(x.data().data(), gamma.data().data(), beta.data().data(),
                         out.data().data(), mu.data(), rstd.data(), rows, cols, eps);
  Tape<T>* tape = recording_tape(x, gamma, beta);
  out = finish(std::move(out), tape, "layer_norm");
  if (tape) {
    tape->record("layer_norm", [x, gamma, beta, out, mu = std::move(mu),
                                rstd = std::move(rstd), rows, cols]() mutable {
      if (!out.has_grad()) return;
      std::vector<T> dx(x.size());
      std::vector<T> dgamma(cols);
      std::vector<T> dbeta(cols);
      kp::layer_norm_backward(x.data().data(), gamma.data().data(), mu.data(),
                              rstd.data(), out.grad().data(), dx.data(),
                              dgamma.data(), dbeta.data(), rows, cols);
      accumulate<T>(x, dx);
      accumulate<T>(gamma, dgamma);
      accumulate<T>(beta, dbeta);
    });
  }
  return out;
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  kp::gelu_forward(x.data().data(), out.data().data(), x.size());
  Tape<T>* tape = recording_tape(x);
  out = finish(std::move(out), tape, "gelu");
  if (tape) {
    tape->record("gelu", [x, out]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      std::vector<T> dx(x.size());
      kp::gelu_backward(x.data().data(), out.grad().data(), dx.data(), x.size());
      accumulate<T>(x, dx);
    });
  }
  return out;
}

template <class T>
Tensor<T> gather(const Tensor<T>& x,
                 std::shared_ptr<const std::vector<std::size_t>> index,
                 Shape out_shape) {
  if (numel(out_shape) != index->size()) {
    throw DimensionError("gather: index of length " + std::to_string(index->size()) +
                         " cannot fill shape " + shape_str(out_shape));
  }
  Tensor<T> out(std::move(out_shape));
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) {
    const std::size_t src = (*index)[i];
    if (src >= xd.size()) {
      throw DimensionError("gather: index " + std::to_string(src) +
                           " out of range for " + shape_str(x.shape()));
    }
    od[i] = xd[src];
  }
  Tape<T>* tape = recording_tape(x);
  out = finish(std::move(out), tape, "gather");
  if (tape) {
    tape->record("gather", [x, out, index]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[(*index)[i]] += g[i];
    });
  }
  return out;
}

#define DOCBIN_INSTANTIATE(T)                                                  \
  template void check_finite<T>(std::span<const T>, const char*);              \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> transpose<T>(const Tensor<T>&, int, int);                 \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                      \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> scale<T>(const Tensor<T>&, double);                       \
  template Tensor<T> square<T>(const Tensor<T>&);                              \
  template Tensor<T> sum<T>(const Tensor<T>&);                                 \
  template Tensor<T> mean<T>(const Tensor<T>&);                                \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);            \
  template Tensor<T> slice<T>(const Tensor<T>&, int, std::size_t, std::size_t); \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                        \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&,         \
                                   const Tensor<T>&, double);                  \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                             \
  template Tensor<T> gather<T>(const Tensor<T>&,                               \
                               std::shared_ptr<const std::vector<std::size_t>>, \
                               Shape);

DOCBIN_INSTANTIATE(float)
DOCBIN_INSTANTIATE(double)
#undef DOCBIN_INSTANTIATE

}  // namespace docbin
