#pragma once

// Dense N-d tensor with dynamic reverse-mode differentiation.
//
// A Tensor is a shared handle onto a graph node. Operations record their
// parents and a backward closure whenever an input requires a gradient and
// gradient recording is enabled on the calling thread. Reductions always run
// in a fixed loop order, so results are bit-reproducible for fixed inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sympoint {

class TensorError : public std::runtime_error {
 public:
  TensorError(const std::string& op, const std::string& what)
      : std::runtime_error(op + ": " + what), op_(op) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {
inline bool& grad_disabled_flag() {
  thread_local bool disabled = false;
  return disabled;
}
}  // namespace detail

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_disabled_flag()) { detail::grad_disabled_flag() = true; }
  ~NoGradGuard() { detail::grad_disabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return !detail::grad_disabled_flag(); }

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (shape_numel(shape) != values.size()) {
      throw TensorError("tensor", "value count " + std::to_string(values.size()) +
                                      " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }
  static Tensor full(Shape shape, T v) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v));
  }
  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  const char* op_name() const { return node_->op; }

  std::span<const T> values() const { return node_->value; }
  /// Mutable access for leaves (parameters, optimizer updates).
  std::span<T> mutable_values() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  T item() const {
    if (numel() != 1) throw TensorError("item", "tensor has " + std::to_string(numel()) + " elements");
    return node_->value[0];
  }
  T operator[](std::size_t i) const { return node_->value[i]; }
  T at(std::size_t i, std::size_t j) const { return node_->value[i * node_->shape.at(1) + j]; }

  /// Leaf copy that shares no graph history.
  Tensor detach() const { return Tensor(node_->shape, node_->value); }

  /// Reverse-mode sweep from this scalar. Each reachable node is visited
  /// once, in reverse topological order.
  void backward() const {
    if (numel() != 1) throw TensorError("backward", "output must be a scalar, got " + shape_str(shape()));
    if (!node_->requires_grad) return;
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node<T>* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
    }
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Builds an op result; records the backward closure only when needed.
  static Tensor make(Shape shape, std::vector<T> values, const char* op,
                     std::vector<Tensor> inputs, std::function<void(Node<T>&)> fn) {
    Tensor out(std::move(shape), std::move(values));
    out.node_->op = op;
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward_fn = std::move(fn);
    return out;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
inline std::vector<T>* grad_sink(Node<T>& self, std::size_t i) {
  Node<T>& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return &p.grad;
}

inline void check_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw TensorError(op, "axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit a{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

inline Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw TensorError(op, "shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

/// Maps each flat index of `out` to a flat index of the broadcast input.
class BroadcastIndex {
 public:
  BroadcastIndex(const Shape& out, const Shape& in) {
    const std::size_t n = shape_numel(out);
    const std::size_t m = shape_numel(in);
    if (m == n) {
      mode_ = Mode::identity;
      return;
    }
    // suffix broadcast: input equals the trailing dims of out (after leading ones)
    Shape trimmed = in;
    while (!trimmed.empty() && trimmed.front() == 1) trimmed.erase(trimmed.begin());
    if (trimmed.size() <= out.size() &&
        std::equal(trimmed.rbegin(), trimmed.rend(), out.rbegin())) {
      mode_ = Mode::modulo;
      m_ = m;
      return;
    }
    mode_ = Mode::table;
    const std::size_t r = out.size();
    std::vector<std::size_t> stride(r, 0);
    std::size_t acc = 1;
    for (std::size_t k = 0; k < in.size(); ++k) {
      const std::size_t i = in.size() - 1 - k;
      const std::size_t oi = r - 1 - k;
      stride[oi] = in[i] == 1 ? 0 : acc;
      acc *= in[i];
    }
    table_.resize(n);
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t f = 0; f < n; ++f) {
      table_[f] = off;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += stride[d];
        if (idx[d] < out[d]) break;
        off -= stride[d] * idx[d];
        idx[d] = 0;
      }
    }
  }

  std::size_t operator()(std::size_t f) const {
    switch (mode_) {
      case Mode::identity: return f;
      case Mode::modulo: return f % m_;
      default: return table_[f];
    }
  }

 private:
  enum class Mode { identity, modulo, table } mode_ = Mode::identity;
  std::size_t m_ = 1;
  std::vector<std::size_t> table_;
};

// C[m,n] (+)= A[m,k] B[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[k,n] += A[m,k]^T G[m,n]
template <typename T>
void gemm_tn_acc(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* a, std::size_t rows, std::size_t cols) {
  std::vector<T> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

template <typename T, typename F, typename DF>
Tensor<T> unary(const char* op, const Tensor<T>& a, F f, DF df) {
  const auto& av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return Tensor<T>::make(a.shape(), std::move(out), op, {a}, [df](Node<T>& self) {
    auto* ga = grad_sink(self, 0);
    if (!ga) return;
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, F f, DA da, DB db) {
  Shape shape = broadcast_shape(op, a.shape(), b.shape());
  const std::size_t n = shape_numel(shape);
  auto ia = std::make_shared<BroadcastIndex>(shape, a.shape());
  auto ib = std::make_shared<BroadcastIndex>(shape, b.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[(*ia)(i)], bv[(*ib)(i)]);
  return Tensor<T>::make(std::move(shape), std::move(out), op, {a, b}, [ia, ib, da, db](Node<T>& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    if (auto* ga = grad_sink(self, 0)) {
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        const std::size_t p = (*ia)(i), q = (*ib)(i);
        (*ga)[p] += self.grad[i] * da(x[p], y[q], self.value[i]);
      }
    }
    if (auto* gb = grad_sink(self, 1)) {
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        const std::size_t p = (*ia)(i), q = (*ib)(i);
        (*gb)[q] += self.grad[i] * db(x[p], y[q], self.value[i]);
      }
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(-1); });
}

/// Hadamard product with broadcasting.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
      [](T x, T, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
      [](T x, T y, T) { return -x / (y * y); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return detail::unary<T>(
      "scale", a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return detail::unary<T>(
      "add_scalar", a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary<T>(
      "exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  for (T x : a.values()) {
    if (!(x > T(0))) throw TensorError("log", "non-positive or NaN input " + std::to_string(double(x)));
  }
  return detail::unary<T>(
      "log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  for (T x : a.values()) {
    if (!(x >= T(0))) throw TensorError("sqrt", "negative or NaN input " + std::to_string(double(x)));
  }
  return detail::unary<T>(
      "sqrt", a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return detail::unary<T>(
      "square", a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary<T>(
      "sigmoid", a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary<T>(
      "relu", a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

/// log(1 + e^x), evaluated without overflow.
template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
  return detail::unary<T>(
      "softplus", a,
      [](T x) { return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](T x, T) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return scale(a, T(-1));
}

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

// --------------------------------------------------------------- axis ops

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  detail::check_axis("softmax", a.shape(), axis);
  const auto sp = detail::split_axis(a.shape(), axis);
  const auto& x = a.values();
  std::vector<T> y(x.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.n * sp.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < sp.n; ++k) {
        const T v = x[base + k * sp.inner];
        if (std::isnan(v)) throw TensorError("softmax", "NaN input");
        mx = std::max(mx, v);
      }
      if (!std::isfinite(mx)) throw TensorError("softmax", "slice has no finite entry");
      T s = 0;
      for (std::size_t k = 0; k < sp.n; ++k) {
        const T e = std::exp(x[base + k * sp.inner] - mx);
        y[base + k * sp.inner] = e;
        s += e;
      }
      for (std::size_t k = 0; k < sp.n; ++k) y[base + k * sp.inner] /= s;
    }
  }
  return Tensor<T>::make(a.shape(), std::move(y), "softmax", {a}, [sp](Node<T>& self) {
    auto* ga = detail::grad_sink(self, 0);
    if (!ga) return;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.n * sp.inner + in;
        T dot = 0;
        for (std::size_t k = 0; k < sp.n; ++k) {
          const std::size_t i = base + k * sp.inner;
          dot += self.grad[i] * self.value[i];
        }
        for (std::size_t k = 0; k < sp.n; ++k) {
          const std::size_t i = base + k * sp.inner;
          (*ga)[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a, std::size_t axis) {
  detail::check_axis("log_softmax", a.shape(), axis);
  const auto sp = detail::split_axis(a.shape(), axis);
  const auto& x = a.values();
  std::vector<T> y(x.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.n * sp.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < sp.n; ++k) {
        const T v = x[base + k * sp.inner];
        if (std::isnan(v)) throw TensorError("log_softmax", "NaN input");
        mx = std::max(mx, v);
      }
      if (!std::isfinite(mx)) throw TensorError("log_softmax", "slice has no finite entry");
      T s = 0;
      for (std::size_t k = 0; k < sp.n; ++k) s += std::exp(x[base + k * sp.inner] - mx);
      const T lse = mx + std::log(s);
      for (std::size_t k = 0; k < sp.n; ++k) y[base + k * sp.inner] = x[base + k * sp.inner] - lse;
    }
  }
  return Tensor<T>::make(a.shape(), std::move(y), "log_softmax", {a}, [sp](Node<T>& self) {
    auto* ga = detail::grad_sink(self, 0);
    if (!ga) return;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.n * sp.inner + in;
        T gs = 0;
        for (std::size_t k = 0; k < sp.n; ++k) gs += self.grad[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.n; ++k) {
          const std::size_t i = base + k * sp.inner;
          (*ga)[i] += self.grad[i] - std::exp(self.value[i]) * gs;
        }
      }
    }
  });
}

/// Normalizes over the last axis to zero mean / unit variance (no affine).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, T eps = T(1e-5)) {
  if (a.rank() == 0) throw TensorError("layer_norm", "scalar input");
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.numel() / c;
  const auto& x = a.values();
  std::vector<T> y(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * c;
    T mean = 0;
    for (std::size_t k = 0; k < c; ++k) mean += xr[k];
    mean /= T(c);
    T var = 0;
    for (std::size_t k = 0; k < c; ++k) var += (xr[k] - mean) * (xr[k] - mean);
    var /= T(c);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t k = 0; k < c; ++k) y[r * c + k] = (xr[k] - mean) * is;
  }
  return Tensor<T>::make(a.shape(), std::move(y), "layer_norm", {a}, [c, rows, inv_std](Node<T>& self) {
    auto* ga = detail::grad_sink(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* g = self.grad.data() + r * c;
      const T* yv = self.value.data() + r * c;
      T mg = 0, mgy = 0;
      for (std::size_t k = 0; k < c; ++k) {
        mg += g[k];
        mgy += g[k] * yv[k];
      }
      mg /= T(c);
      mgy /= T(c);
      for (std::size_t k = 0; k < c; ++k) (*ga)[r * c + k] += (*inv_std)[r] * (g[k] - mg - yv[k] * mgy);
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.values()) s += v;
  return Tensor<T>::make(Shape{}, {s}, "sum", {a}, [](Node<T>& self) {
    auto* ga = detail::grad_sink(self, 0);
    if (!ga) return;
    for (auto& g : *ga) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw TensorError("mean", "empty tensor");
  return scale(sum(a), T(1) / T(a.numel()));
}

/// Sums over `axis`, removing it.
template <typename T>
Tensor<T> sum(const Tensor<T>& a, std::size_t axis) {
  detail::check_axis("sum", a.shape(), axis);
  const auto sp = detail::split_axis(a.shape(), axis);
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto& x = a.values();
  std::vector<T> y(sp.outer * sp.inner, T(0));
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k)
      for (std::size_t in = 0; in < sp.inner; ++in)
        y[o * sp.inner + in] += x[(o * sp.n + k) * sp.inner + in];
  return Tensor<T>::make(std::move(shape), std::move(y), "sum_axis", {a}, [sp](Node<T>& self) {
    auto* ga = detail::grad_sink(self, 0);
    if (!ga) return;
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t k = 0; k < sp.n; ++k)
        for (std::size_t in = 0; in < sp.inner; ++in)
          (*ga)[(o * sp.n + k) * sp.inner + in] += self.grad[o * sp.inner + in];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, std::size_t axis) {
  detail::check_axis("mean", a.shape(), axis);
  if (a.dim(axis) == 0) throw TensorError("mean", "empty axis");
  return scale(sum(a, axis), T(1) / T(a.dim(axis)));
}

/// Maximum over `axis`, removing it; ties route the gradient to the first index.
template <typename T>
Tensor<T> max(const Tensor<T>& a, std::size_t axis) {
  detail::check_axis("max", a.shape(), axis);
  if (a.dim(axis) == 0) throw TensorError("max", "empty axis");
  const auto sp = detail::split_axis(a.shape(), axis);
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto& x = a.values();
  std::vector<T> y(sp.outer * sp.inner);
  auto arg = std::make_shared<std::vector<std::size_t>>(y.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      std::size_t best = o * sp.n * sp.inner + in;
      for (std::size_t k = 1; k < sp.n; ++k) {
        const std::size_t i = (o * sp.n + k) * sp.inner + in;
        if (x[i] > x[best]) best = i;
      }
      y[o * sp.inner + in] = x[best];
      (*arg)[o * sp.inner + in] = best;
    }
  }
  return Tensor<T>::make(std::move(shape), std::move(y), "max_axis", {a}, [arg](Node<T>& self) {
    auto* ga = detail::grad_sink(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < arg->size(); ++i) (*ga)[(*arg)[i]] += self.grad[i];
  });
}

// ------------------------------------------------------------ structural

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw TensorError("reshape", "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<T> v(a.values().begin(), a.values().end());
  return Tensor<T>::make(std::move(shape), std::move(v), "reshape", {a}, [](Node<T>& self) {
    auto* ga = detail::grad_sink(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& a, const Shape& shape) {
  if (detail::broadcast_shape("broadcast_to", a.shape(), shape) != shape) {
    throw TensorError("broadcast_to", "cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  auto idx = std::make_shared<detail::BroadcastIndex>(shape, a.shape());
  const std::size_t n = shape_numel(shape);
  std::vector<T> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a.values()[(*idx)(i)];
  return Tensor<T>::make(shape, std::move(v), "broadcast_to", {a}, [idx](Node<T>& self) {
    auto* ga = detail::grad_sink(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[(*idx)(i)] += self.grad[i];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw TensorError("transpose", "expects rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  return Tensor<T>::make(Shape{c, r}, detail::transposed(a.values().data(), r, c), "transpose", {a},
                         [r, c](Node<T>& self) {
                           auto* ga = detail::grad_sink(self, 0);
                           if (!ga) return;
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += self.grad[j * r + i];
                         });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw TensorError("concat", "no inputs");
  Shape shape = parts[0].shape();
  detail::check_axis("concat", shape, axis);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size()) throw TensorError("concat", "rank mismatch");
    for (std::size_t d = 0; d < shape.size(); ++d) {
      if (d != axis && p.dim(d) != shape[d]) {
        throw TensorError("concat", "shape " + shape_str(p.shape()) + " incompatible with " + shape_str(shape));
      }
    }
    total += p.dim(axis);
  }
  shape[axis] = total;
  const auto sp = detail::split_axis(shape, axis);
  std::vector<T> v(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t n = p.dim(axis);
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(p.values().data() + o * n * sp.inner, n * sp.inner,
                  v.data() + (o * total + off) * sp.inner);
    off += n;
  }
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) sizes.push_back(p.dim(axis));
  return Tensor<T>::make(std::move(shape), std::move(v), "concat", parts,
                         [sp, total, offsets, sizes](Node<T>& self) {
                           for (std::size_t k = 0; k < sizes.size(); ++k) {
                             auto* g = detail::grad_sink(self, k);
                             if (!g) continue;
                             const std::size_t n = sizes[k];
                             for (std::size_t o = 0; o < sp.outer; ++o)
                               for (std::size_t i = 0; i < n * sp.inner; ++i)
                                 (*g)[o * n * sp.inner + i] += self.grad[(o * total + offsets[k]) * sp.inner + i];
                           }
                         });
}

/// out[i] = a[idx[i]] along the leading axis.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> idx) {
  if (a.rank() == 0) throw TensorError("gather_rows", "scalar input");
  const std::size_t rows = a.dim(0);
  const std::size_t w = rows ? a.numel() / rows : 0;
  for (std::size_t i : idx) {
    if (i >= rows) throw TensorError("gather_rows", "index " + std::to_string(i) + " out of range " + std::to_string(rows));
  }
  Shape shape = a.shape();
  shape[0] = idx.size();
  std::vector<T> v(idx.size() * w);
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(a.values().data() + idx[i] * w, w, v.data() + i * w);
  auto keep = std::make_shared<std::vector<std::size_t>>(idx.begin(), idx.end());
  return Tensor<T>::make(std::move(shape), std::move(v), "gather_rows", {a}, [keep, w](Node<T>& self) {
    auto* ga = detail::grad_sink(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < keep->size(); ++i) {
      T* dst = ga->data() + (*keep)[i] * w;
      const T* src = self.grad.data() + i * w;
      for (std::size_t k = 0; k < w; ++k) dst[k] += src[k];
    }
  });
}

/// out has `rows` leading entries; out[idx[i]] += a[i].
template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& a, std::span<const std::size_t> idx, std::size_t rows) {
  if (a.rank() == 0 || a.dim(0) != idx.size()) throw TensorError("scatter_add_rows", "index count must equal leading dim");
  const std::size_t w = idx.empty() ? 0 : a.numel() / idx.size();
  for (std::size_t i : idx) {
    if (i >= rows) throw TensorError("scatter_add_rows", "index " + std::to_string(i) + " out of range " + std::to_string(rows));
  }
  Shape shape = a.shape();
  shape[0] = rows;
  std::vector<T> v(rows * w, T(0));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    T* dst = v.data() + idx[i] * w;
    const T* src = a.values().data() + i * w;
    for (std::size_t k = 0; k < w; ++k) dst[k] += src[k];
  }
  auto keep = std::make_shared<std::vector<std::size_t>>(idx.begin(), idx.end());
  return Tensor<T>::make(std::move(shape), std::move(v), "scatter_add_rows", {a}, [keep, w](Node<T>& self) {
    auto* ga = detail::grad_sink(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < keep->size(); ++i) {
      const T* src = self.grad.data() + (*keep)[i] * w;
      T* dst = ga->data() + i * w;
      for (std::size_t k = 0; k < w; ++k) dst[k] += src[k];
    }
  });
}

// ---------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw TensorError("matmul", "incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> c(m * n);
  detail::gemm_nn(a.values().data(), b.values().data(), c.data(), m, k, n, false);
  return Tensor<T>::make(Shape{m, n}, std::move(c), "matmul", {a, b}, [m, k, n](Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* ga = detail::grad_sink(self, 0)) {
      const auto bt = detail::transposed(bv.data(), k, n);
      detail::gemm_nn(self.grad.data(), bt.data(), ga->data(), m, n, k, true);
    }
    if (auto* gb = detail::grad_sink(self, 1)) {
      detail::gemm_tn_acc(av.data(), self.grad.data(), gb->data(), m, k, n);
    }
  });
}

/// a · bᵀ without materializing the transpose in the graph.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw TensorError("matmul_nt", "incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  const auto bt = detail::transposed(b.values().data(), n, k);
  std::vector<T> c(m * n);
  detail::gemm_nn(a.values().data(), bt.data(), c.data(), m, k, n, false);
  return Tensor<T>::make(Shape{m, n}, std::move(c), "matmul_nt", {a, b}, [m, k, n](Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* ga = detail::grad_sink(self, 0)) {
      detail::gemm_nn(self.grad.data(), bv.data(), ga->data(), m, n, k, true);
    }
    if (auto* gb = detail::grad_sink(self, 1)) {
      // dB[n,k] += G^T[n,m] A[m,k]
      detail::gemm_tn_acc(self.grad.data(), av.data(), gb->data(), m, n, k);
    }
  });
}

}  // namespace sympoint
