#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "psvae/tensor.hpp"

namespace psvae {

// Reverse-mode tape over the fixed op set the model needs. Nodes are created
// in forward order; backward walks them in reverse and frees value/grad
// buffers of internal nodes as soon as they are dead, which caps peak memory
// at roughly the forward activation footprint.
template <class T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, int)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    std::vector<int> parents;
    BackFn back;
    bool leaf = false;
    bool needs_grad = false;
  };

  int add_leaf(Tensor<T> v, bool needs_grad) {
    Node n;
    n.value = std::move(v);
    n.leaf = true;
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int add_op(Tensor<T> v, std::vector<int> parents, BackFn back) {
    Node n;
    n.value = std::move(v);
    n.parents = std::move(parents);
    for (int p : n.parents) {
      if (nodes_[static_cast<size_t>(p)].needs_grad) {
        n.needs_grad = true;
        break;
      }
    }
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Tensor<T>& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor<T>& grad(int id) { return nodes_[static_cast<size_t>(id)].grad; }

  // Pointer to the node's gradient buffer, allocating it (zeroed) on demand.
  // Returns nullptr when the node does not participate in differentiation,
  // which lets op backwards skip work for constant inputs.
  T* grad_ptr(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad) return nullptr;
    if (!n.grad.allocated()) n.grad = Tensor<T>(n.value.shape);
    return n.grad.ptr();
  }

  template <class F>
  void accumulate(int id, int64_t count, F&& contribution) {
    T* dst = grad_ptr(id);
    if (!dst) return;
    for (int64_t i = 0; i < count; ++i) dst[i] += contribution(i);
  }

  // Backward from a scalar root. Internal node buffers are released right
  // after their backward runs (all consumers have already executed).
  void backward(int root) {
    if (val(root).size() != 1) throw std::invalid_argument("backward: root must be scalar");
    Node& r = nodes_[static_cast<size_t>(root)];
    if (!r.needs_grad) throw std::invalid_argument("backward: root does not depend on parameters");
    r.grad = Tensor<T>::scalar(T(1));
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.grad.allocated() && n.back) n.back(*this, i);
      if (!n.leaf) {
        n.value.release();
        n.grad.release();
      }
    }
  }

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// Lightweight handle to a tape node.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  Var() = default;
  Var(Tape<T>* t, int i) : tape(t), id(i) {}
  const Tensor<T>& val() const { return tape->val(id); }
  T scalar_value() const { return tape->val(id).data.at(0); }
  const std::vector<int>& shape() const { return tape->val(id).shape; }
  int64_t size() const { return tape->val(id).size(); }
};

template <class T>
Var<T> make_leaf(Tape<T>& tp, Tensor<T> v, bool needs_grad = true) {
  return {&tp, tp.add_leaf(std::move(v), needs_grad)};
}

template <class T>
Var<T> make_const(Tape<T>& tp, Tensor<T> v) {
  return {&tp, tp.add_leaf(std::move(v), false)};
}

namespace detail {
template <class T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.val().shape != b.val().shape) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.val().shape) +
                                " vs " + shape_str(b.val().shape));
  }
}

// Wider accumulator for reductions: double for float tensors, long double for
// double tensors (keeps the finite-difference oracle honest in 64-bit mode).
template <class T>
struct Acc {
  using type = double;
};
template <>
struct Acc<double> {
  using type = long double;
};
}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "add");
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  const T* pb = b.val().ptr();
  for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = pa[i] + pb[i];
  const int ia = a.id, ib = b.id;
  int id = a.tape->add_op(std::move(out), {ia, ib}, [ia, ib, n](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    tp.accumulate(ia, n, [g](int64_t i) { return g[i]; });
    tp.accumulate(ib, n, [g](int64_t i) { return g[i]; });
  });
  return {a.tape, id};
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "sub");
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  const T* pb = b.val().ptr();
  for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = pa[i] - pb[i];
  const int ia = a.id, ib = b.id;
  int id = a.tape->add_op(std::move(out), {ia, ib}, [ia, ib, n](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    tp.accumulate(ia, n, [g](int64_t i) { return g[i]; });
    tp.accumulate(ib, n, [g](int64_t i) { return -g[i]; });
  });
  return {a.tape, id};
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "mul");
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  const T* pb = b.val().ptr();
  for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = pa[i] * pb[i];
  const int ia = a.id, ib = b.id;
  int id = a.tape->add_op(std::move(out), {ia, ib}, [ia, ib, n](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    const T* va = tp.val(ia).ptr();
    const T* vb = tp.val(ib).ptr();
    tp.accumulate(ia, n, [g, vb](int64_t i) { return g[i] * vb[i]; });
    tp.accumulate(ib, n, [g, va](int64_t i) { return g[i] * va[i]; });
  });
  return {a.tape, id};
}

template <class T>
Var<T> div(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "div");
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  const T* pb = b.val().ptr();
  for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = pa[i] / pb[i];
  const int ia = a.id, ib = b.id;
  int id = a.tape->add_op(std::move(out), {ia, ib}, [ia, ib, n](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    const T* va = tp.val(ia).ptr();
    const T* vb = tp.val(ib).ptr();
    tp.accumulate(ia, n, [g, vb](int64_t i) { return g[i] / vb[i]; });
    tp.accumulate(ib, n, [g, va, vb](int64_t i) { return -g[i] * va[i] / (vb[i] * vb[i]); });
  });
  return {a.tape, id};
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> scale(Var<T> a, T c) {
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = pa[i] * c;
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, n, c](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    tp.accumulate(ia, n, [g, c](int64_t i) { return g[i] * c; });
  });
  return {a.tape, id};
}

template <class T>
Var<T> add_const(Var<T> a, T c) {
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = pa[i] + c;
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, n](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    tp.accumulate(ia, n, [g](int64_t i) { return g[i]; });
  });
  return {a.tape, id};
}

template <class T>
Var<T> neg(Var<T> a) {
  return scale(a, T(-1));
}

template <class T>
Var<T> exp_v(Var<T> a) {
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = std::exp(pa[i]);
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, n](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    const T* y = tp.val(self).ptr();
    tp.accumulate(ia, n, [g, y](int64_t i) { return g[i] * y[i]; });
  });
  return {a.tape, id};
}

template <class T>
Var<T> log_v(Var<T> a) {
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = std::log(pa[i]);
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, n](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    const T* x = tp.val(ia).ptr();
    tp.accumulate(ia, n, [g, x](int64_t i) { return g[i] / x[i]; });
  });
  return {a.tape, id};
}

template <class T>
Var<T> square(Var<T> a) {
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = pa[i] * pa[i];
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, n](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    const T* x = tp.val(ia).ptr();
    tp.accumulate(ia, n, [g, x](int64_t i) { return T(2) * g[i] * x[i]; });
  });
  return {a.tape, id};
}

template <class T>
Var<T> relu(Var<T> a) {
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = pa[i] > T(0) ? pa[i] : T(0);
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, n](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    const T* x = tp.val(ia).ptr();
    tp.accumulate(ia, n, [g, x](int64_t i) { return x[i] > T(0) ? g[i] : T(0); });
  });
  return {a.tape, id};
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  for (int64_t i = 0; i < n; ++i) {
    const T x = pa[i];
    out.data[static_cast<size_t>(i)] =
        x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  }
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, n](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    const T* y = tp.val(self).ptr();
    tp.accumulate(ia, n, [g, y](int64_t i) { return g[i] * y[i] * (T(1) - y[i]); });
  });
  return {a.tape, id};
}

// Gradient passes through only strictly inside (lo, hi).
template <class T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  const int64_t n = a.size();
  Tensor<T> out(a.val().shape);
  const T* pa = a.val().ptr();
  for (int64_t i = 0; i < n; ++i)
    out.data[static_cast<size_t>(i)] = std::min(hi, std::max(lo, pa[i]));
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, n, lo, hi](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    const T* x = tp.val(ia).ptr();
    tp.accumulate(ia, n, [g, x, lo, hi](int64_t i) { return (x[i] > lo && x[i] < hi) ? g[i] : T(0); });
  });
  return {a.tape, id};
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> reshape(Var<T> a, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != a.size()) {
    throw std::invalid_argument("reshape: numel mismatch " + shape_str(a.val().shape) + " -> " +
                                shape_str(new_shape));
  }
  Tensor<T> out;
  out.shape = std::move(new_shape);
  out.data = a.val().data;
  const int ia = a.id;
  const int64_t n = a.size();
  int id = a.tape->add_op(std::move(out), {ia}, [ia, n](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    tp.accumulate(ia, n, [g](int64_t i) { return g[i]; });
  });
  return {a.tape, id};
}

template <class T>
Var<T> slice_cols(Var<T> a, int c0, int c1) {
  const auto& sh = a.val().shape;
  if (sh.size() != 2 || c0 < 0 || c1 > sh[1] || c0 >= c1) {
    throw std::invalid_argument("slice_cols: bad slice [" + std::to_string(c0) + "," +
                                std::to_string(c1) + ") on " + shape_str(sh));
  }
  const int rows = sh[0], cols = sh[1], w = c1 - c0;
  Tensor<T> out({rows, w});
  const T* pa = a.val().ptr();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < w; ++c) out.data[static_cast<size_t>(r) * w + c] = pa[static_cast<size_t>(r) * cols + c0 + c];
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, rows, cols, c0, w](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    T* dst = tp.grad_ptr(ia);
    if (!dst) return;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c) dst[static_cast<size_t>(r) * cols + c0 + c] += g[static_cast<size_t>(r) * w + c];
  });
  return {a.tape, id};
}

template <class T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  const auto& sa = a.val().shape;
  const auto& sb = b.val().shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[0] != sb[0]) {
    throw std::invalid_argument("concat_cols: incompatible " + shape_str(sa) + " and " + shape_str(sb));
  }
  const int rows = sa[0], wa = sa[1], wb = sb[1];
  Tensor<T> out({rows, wa + wb});
  const T* pa = a.val().ptr();
  const T* pb = b.val().ptr();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < wa; ++c) out.data[static_cast<size_t>(r) * (wa + wb) + c] = pa[static_cast<size_t>(r) * wa + c];
    for (int c = 0; c < wb; ++c) out.data[static_cast<size_t>(r) * (wa + wb) + wa + c] = pb[static_cast<size_t>(r) * wb + c];
  }
  const int ia = a.id, ib = b.id;
  int id = a.tape->add_op(std::move(out), {ia, ib}, [ia, ib, rows, wa, wb](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    if (T* da = tp.grad_ptr(ia)) {
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < wa; ++c) da[static_cast<size_t>(r) * wa + c] += g[static_cast<size_t>(r) * (wa + wb) + c];
    }
    if (T* db = tp.grad_ptr(ib)) {
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < wb; ++c) db[static_cast<size_t>(r) * wb + c] += g[static_cast<size_t>(r) * (wa + wb) + wa + c];
    }
  });
  return {a.tape, id};
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class T>
Var<T> sum_all(Var<T> a) {
  const int64_t n = a.size();
  typename detail::Acc<T>::type acc = 0;
  const T* pa = a.val().ptr();
  for (int64_t i = 0; i < n; ++i) acc += pa[i];
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, n](Tape<T>& tp, int self) {
    const T g = tp.grad(self).data[0];
    tp.accumulate(ia, n, [g](int64_t) { return g; });
  });
  return {a.tape, id};
}

template <class T>
Var<T> mean_all(Var<T> a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.size()));
}

// Sum over the last axis: [..., D] -> [...].
template <class T>
Var<T> sum_last(Var<T> a) {
  const auto& sh = a.val().shape;
  if (sh.size() < 2) throw std::invalid_argument("sum_last: needs rank >= 2, got " + shape_str(sh));
  const int d = sh.back();
  const int64_t rows = a.size() / d;
  std::vector<int> out_shape(sh.begin(), sh.end() - 1);
  Tensor<T> out(out_shape);
  const T* pa = a.val().ptr();
  for (int64_t r = 0; r < rows; ++r) {
    typename detail::Acc<T>::type acc = 0;
    for (int k = 0; k < d; ++k) acc += pa[r * d + k];
    out.data[static_cast<size_t>(r)] = static_cast<T>(acc);
  }
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, rows, d](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    T* dst = tp.grad_ptr(ia);
    if (!dst) return;
    for (int64_t r = 0; r < rows; ++r)
      for (int k = 0; k < d; ++k) dst[r * d + k] += g[r];
  });
  return {a.tape, id};
}

// Log-sum-exp over the middle axis: [M, J, D] -> [M, D], stabilized by the
// per-(i,k) max.
template <class T>
Var<T> logsumexp_mid(Var<T> a) {
  const auto& sh = a.val().shape;
  if (sh.size() != 3) throw std::invalid_argument("logsumexp_mid: needs rank 3, got " + shape_str(sh));
  const int m = sh[0], j = sh[1], d = sh[2];
  Tensor<T> out({m, d});
  const T* pa = a.val().ptr();
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < d; ++k) {
      T mx = pa[(static_cast<int64_t>(i) * j) * d + k];
      for (int q = 1; q < j; ++q) mx = std::max(mx, pa[(static_cast<int64_t>(i) * j + q) * d + k]);
      typename detail::Acc<T>::type acc = 0;
      for (int q = 0; q < j; ++q) acc += std::exp(pa[(static_cast<int64_t>(i) * j + q) * d + k] - mx);
      out.data[static_cast<size_t>(i) * d + k] = mx + static_cast<T>(std::log(static_cast<double>(acc)));
    }
  }
  const int ia = a.id;
  int id = a.tape->add_op(std::move(out), {ia}, [ia, m, j, d](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    const T* y = tp.val(self).ptr();
    const T* x = tp.val(ia).ptr();
    T* dst = tp.grad_ptr(ia);
    if (!dst) return;
    for (int i = 0; i < m; ++i)
      for (int q = 0; q < j; ++q)
        for (int k = 0; k < d; ++k) {
          const int64_t idx = (static_cast<int64_t>(i) * j + q) * d + k;
          dst[idx] += g[static_cast<size_t>(i) * d + k] * std::exp(x[idx] - y[static_cast<size_t>(i) * d + k]);
        }
  });
  return {a.tape, id};
}

// Pairwise diagonal-Gaussian log-density: out[i,j,k] = log N(z[i,k]; mu[j,k],
// exp(lv[j,k])). The cross term the minibatch marginal estimators need.
template <class T>
Var<T> cross_gauss_logpdf(Var<T> z, Var<T> mu, Var<T> lv) {
  detail::check_same_shape(mu, lv, "cross_gauss_logpdf");
  const auto& sz = z.val().shape;
  const auto& sm = mu.val().shape;
  if (sz.size() != 2 || sm.size() != 2 || sz[1] != sm[1]) {
    throw std::invalid_argument("cross_gauss_logpdf: incompatible " + shape_str(sz) + " and " + shape_str(sm));
  }
  const int m = sz[0], j = sm[0], d = sz[1];
  const T kLog2Pi = static_cast<T>(1.83787706640934548356);
  Tensor<T> out({m, j, d});
  {
    const T* pz = z.val().ptr();
    const T* pm = mu.val().ptr();
    const T* pl = lv.val().ptr();
    std::vector<T> prec(static_cast<size_t>(j) * d);
    for (int64_t i = 0; i < static_cast<int64_t>(j) * d; ++i) prec[static_cast<size_t>(i)] = std::exp(-pl[i]);
    for (int i = 0; i < m; ++i)
      for (int q = 0; q < j; ++q)
        for (int k = 0; k < d; ++k) {
          const T delta = pz[static_cast<size_t>(i) * d + k] - pm[static_cast<size_t>(q) * d + k];
          out.data[static_cast<size_t>((static_cast<int64_t>(i) * j + q) * d + k)] =
              T(-0.5) * (delta * delta * prec[static_cast<size_t>(q) * d + k] + pl[static_cast<size_t>(q) * d + k] + kLog2Pi);
        }
  }
  const int iz = z.id, im = mu.id, il = lv.id;
  int id = z.tape->add_op(std::move(out), {iz, im, il}, [iz, im, il, m, j, d](Tape<T>& tp, int self) {
    const T* g = tp.grad(self).ptr();
    const T* pz = tp.val(iz).ptr();
    const T* pm = tp.val(im).ptr();
    const T* pl = tp.val(il).ptr();
    std::vector<T> prec(static_cast<size_t>(j) * d);
    for (int64_t i = 0; i < static_cast<int64_t>(j) * d; ++i) prec[static_cast<size_t>(i)] = std::exp(-pl[i]);
    T* dz = tp.grad_ptr(iz);
    T* dm = tp.grad_ptr(im);
    T* dl = tp.grad_ptr(il);
    for (int i = 0; i < m; ++i)
      for (int q = 0; q < j; ++q)
        for (int k = 0; k < d; ++k) {
          const int64_t idx = (static_cast<int64_t>(i) * j + q) * d + k;
          const T delta = pz[static_cast<size_t>(i) * d + k] - pm[static_cast<size_t>(q) * d + k];
          const T wp = prec[static_cast<size_t>(q) * d + k];
          const T gd = g[idx];
          if (dz) dz[static_cast<size_t>(i) * d + k] += -gd * delta * wp;
          if (dm) dm[static_cast<size_t>(q) * d + k] += gd * delta * wp;
          if (dl) dl[static_cast<size_t>(q) * d + k] += gd * (T(0.5) * delta * delta * wp - T(0.5));
        }
  });
  return {z.tape, id};
}

}  // namespace psvae
