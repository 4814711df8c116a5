#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace smog {

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline int64_t shape_numel(const std::vector<int64_t>& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

template <class T>
struct Node {
  std::vector<int64_t> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily during backward
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;
  bool requires_grad = false;
  const char* op = "leaf";

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

// Value handle over a tape node. Copies are shallow; the underlying storage
// is shared.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  // Learnable leaf: participates in gradients on any tape.
  static Tensor parameter(std::vector<int64_t> shape, std::vector<T> data) {
    auto n = std::make_shared<Node<T>>();
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("parameter: shape " + shape_str(shape) +
                                  " does not match data length " + std::to_string(data.size()));
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = true;
    return Tensor(n);
  }

  bool defined() const { return n_ != nullptr; }
  const std::vector<int64_t>& shape() const { return n_->shape; }
  int64_t dim(size_t i) const { return n_->shape[i]; }
  int64_t rank() const { return static_cast<int64_t>(n_->shape.size()); }
  int64_t numel() const { return n_->numel(); }
  bool requires_grad() const { return n_->requires_grad; }

  const std::vector<T>& value() const { return n_->value; }
  std::vector<T>& mutable_value() { return n_->value; }
  const std::vector<T>& grad() const {
    n_->ensure_grad();
    return n_->grad;
  }
  void zero_grad() { n_->grad.assign(n_->value.size(), T(0)); }

  T item() const {
    if (numel() != 1)
      throw std::invalid_argument("item: tensor " + shape_str(n_->shape) + " is not scalar");
    return n_->value[0];
  }

  std::shared_ptr<Node<T>> node() const { return n_; }

 private:
  std::shared_ptr<Node<T>> n_;
};

// Records every gradient-requiring operation in creation order (parents
// always precede children). One tape per forward pass; a tape must only be
// used from one thread.
template <class T>
class Tape {
 public:
  using Tn = Tensor<T>;

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  size_t size() const { return nodes_.size(); }

  Tn constant(std::vector<int64_t> shape, std::vector<T> data) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("constant: shape " + shape_str(shape) +
                                  " does not match data length " + std::to_string(data.size()));
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return Tn(n);
  }

  Tn scalar(T v) { return constant({1}, {v}); }

  Tn zeros(std::vector<int64_t> shape) {
    const int64_t n = shape_numel(shape);
    return constant(std::move(shape), std::vector<T>(static_cast<size_t>(n), T(0)));
  }

  // ---- elementwise binary ----

  Tn add(const Tn& a, const Tn& b) {
    if (a.shape() == b.shape()) {
      std::vector<T> out(a.value().size());
      for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
      return make("add", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
        auto [pa, pb] = two_parents(n);
        for (size_t i = 0; i < n.grad.size(); ++i) {
          pa->grad[i] += n.grad[i];
          pb->grad[i] += n.grad[i];
        }
      });
    }
    // bias broadcast: a is [..., C], b is [C]
    if (b.rank() == 1 && a.rank() >= 2 && a.shape().back() == b.dim(0)) {
      const int64_t c = b.dim(0);
      const int64_t rows = a.numel() / c;
      std::vector<T> out(a.value().size());
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j)
          out[static_cast<size_t>(r * c + j)] =
              a.value()[static_cast<size_t>(r * c + j)] + b.value()[static_cast<size_t>(j)];
      return make("add", a.shape(), std::move(out), {a, b}, [rows, c](Node<T>& n) {
        auto [pa, pb] = two_parents(n);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < c; ++j) {
            const size_t i = static_cast<size_t>(r * c + j);
            pa->grad[i] += n.grad[i];
            pb->grad[static_cast<size_t>(j)] += n.grad[i];
          }
      });
    }
    throw std::invalid_argument("shape mismatch in add: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }

  Tn sub(const Tn& a, const Tn& b) {
    require_same("sub", a, b);
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make("sub", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
      auto [pa, pb] = two_parents(n);
      for (size_t i = 0; i < n.grad.size(); ++i) {
        pa->grad[i] += n.grad[i];
        pb->grad[i] -= n.grad[i];
      }
    });
  }

  Tn mul(const Tn& a, const Tn& b) {
    require_same("mul", a, b);
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
      auto [pa, pb] = two_parents(n);
      for (size_t i = 0; i < n.grad.size(); ++i) {
        pa->grad[i] += n.grad[i] * pb->value[i];
        pb->grad[i] += n.grad[i] * pa->value[i];
      }
    });
  }

  Tn div(const Tn& a, const Tn& b) {
    require_same("div", a, b);
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
    return make("div", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
      auto [pa, pb] = two_parents(n);
      for (size_t i = 0; i < n.grad.size(); ++i) {
        const T inv = T(1) / pb->value[i];
        pa->grad[i] += n.grad[i] * inv;
        pb->grad[i] -= n.grad[i] * pa->value[i] * inv * inv;
      }
    });
  }

  // a: [..., C], b: [..., 1] with matching leading dims
  Tn mul_bcast_last(const Tn& a, const Tn& b) {
    if (a.rank() != b.rank() || b.shape().back() != 1 ||
        !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin()))
      throw std::invalid_argument("shape mismatch in mul_bcast_last: " + shape_str(a.shape()) +
                                  " vs " + shape_str(b.shape()));
    const int64_t c = a.shape().back();
    const int64_t rows = a.numel() / c;
    std::vector<T> out(a.value().size());
    for (int64_t r = 0; r < rows; ++r) {
      const T s = b.value()[static_cast<size_t>(r)];
      for (int64_t j = 0; j < c; ++j)
        out[static_cast<size_t>(r * c + j)] = a.value()[static_cast<size_t>(r * c + j)] * s;
    }
    return make("mul_bcast_last", a.shape(), std::move(out), {a, b}, [rows, c](Node<T>& n) {
      auto [pa, pb] = two_parents(n);
      for (int64_t r = 0; r < rows; ++r) {
        const T s = pb->value[static_cast<size_t>(r)];
        T acc = T(0);
        for (int64_t j = 0; j < c; ++j) {
          const size_t i = static_cast<size_t>(r * c + j);
          pa->grad[i] += n.grad[i] * s;
          acc += n.grad[i] * pa->value[i];
        }
        pb->grad[static_cast<size_t>(r)] += acc;
      }
    });
  }

  Tn add_scalar(const Tn& a, T s) {
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + s;
    return make("add_scalar", a.shape(), std::move(out), {a}, [](Node<T>& n) {
      Node<T>* pa = n.parents[0].get();
      for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    });
  }

  Tn mul_scalar(const Tn& a, T s) {
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
    return make("mul_scalar", a.shape(), std::move(out), {a}, [s](Node<T>& n) {
      Node<T>* pa = n.parents[0].get();
      for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * s;
    });
  }

  Tn neg(const Tn& a) { return mul_scalar(a, T(-1)); }

  // ---- matrix products (Eigen-backed) ----

  using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const EMat>;
  using MMap = Eigen::Map<EMat>;

  // a: [m,k] x b: [k,n] -> [m,n]
  Tn matmul(const Tn& a, const Tn& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    if (a.dim(1) != b.dim(0))
      throw std::invalid_argument("shape mismatch in matmul: " + shape_str(a.shape()) + " vs " +
                                  shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(static_cast<size_t>(m * n));
    MMap(out.data(), m, n).noalias() = CMap(a.value().data(), m, k) * CMap(b.value().data(), k, n);
    return make("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& nd) {
      auto [pa, pb] = two_parents(nd);
      CMap g(nd.grad.data(), m, n);
      MMap(pa->grad.data(), m, k).noalias() += g * CMap(pb->value.data(), k, n).transpose();
      MMap(pb->grad.data(), k, n).noalias() +=
          CMap(pa->value.data(), m, k).transpose() * g;
    });
  }

  // a: [m,k] x b: [n,k] -> [m,n] = a * b^T
  Tn matmul_nt(const Tn& a, const Tn& b) {
    require_rank("matmul_nt", a, 2);
    require_rank("matmul_nt", b, 2);
    if (a.dim(1) != b.dim(1))
      throw std::invalid_argument("shape mismatch in matmul_nt: " + shape_str(a.shape()) +
                                  " vs " + shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    std::vector<T> out(static_cast<size_t>(m * n));
    MMap(out.data(), m, n).noalias() =
        CMap(a.value().data(), m, k) * CMap(b.value().data(), n, k).transpose();
    return make("matmul_nt", {m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& nd) {
      auto [pa, pb] = two_parents(nd);
      CMap g(nd.grad.data(), m, n);
      MMap(pa->grad.data(), m, k).noalias() += g * CMap(pb->value.data(), n, k);
      MMap(pb->grad.data(), n, k).noalias() += g.transpose() * CMap(pa->value.data(), m, k);
    });
  }

  // ---- structure ----

  Tn concat(const std::vector<Tn>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: empty input list");
    for (const Tn& p : parts) require_rank("concat", p, 2);
    if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
    const int64_t fixed = axis == 0 ? parts[0].dim(1) : parts[0].dim(0);
    int64_t total = 0;
    for (const Tn& p : parts) {
      const int64_t f = axis == 0 ? p.dim(1) : p.dim(0);
      if (f != fixed)
        throw std::invalid_argument("shape mismatch in concat: " + shape_str(parts[0].shape()) +
                                    " vs " + shape_str(p.shape()));
      total += axis == 0 ? p.dim(0) : p.dim(1);
    }
    const int64_t rows = axis == 0 ? total : fixed;
    const int64_t cols = axis == 0 ? fixed : total;
    std::vector<T> out(static_cast<size_t>(rows * cols));
    int64_t off = 0;
    for (const Tn& p : parts) {
      const int64_t pr = p.dim(0), pc = p.dim(1);
      for (int64_t r = 0; r < pr; ++r)
        for (int64_t c = 0; c < pc; ++c) {
          const int64_t rr = axis == 0 ? off + r : r;
          const int64_t cc = axis == 0 ? c : off + c;
          out[static_cast<size_t>(rr * cols + cc)] = p.value()[static_cast<size_t>(r * pc + c)];
        }
      off += axis == 0 ? pr : pc;
    }
    std::vector<Tn> parents = parts;
    return make("concat", {rows, cols}, std::move(out), parents, [axis, cols](Node<T>& n) {
      int64_t off2 = 0;
      for (auto& pp : n.parents) {
        const int64_t pr = pp->shape[0], pc = pp->shape[1];
        for (int64_t r = 0; r < pr; ++r)
          for (int64_t c = 0; c < pc; ++c) {
            const int64_t rr = axis == 0 ? off2 + r : r;
            const int64_t cc = axis == 0 ? c : off2 + c;
            pp->grad[static_cast<size_t>(r * pc + c)] +=
                n.grad[static_cast<size_t>(rr * cols + cc)];
          }
        off2 += axis == 0 ? pr : pc;
      }
    });
  }

  // rows of a 2D tensor by index; repeats allowed
  Tn gather_rows(const Tn& a, const std::vector<int64_t>& idx) {
    require_rank("gather_rows", a, 2);
    const int64_t rows = a.dim(0), cols = a.dim(1);
    for (int64_t i : idx)
      if (i < 0 || i >= rows)
        throw std::invalid_argument("gather_rows: index " + std::to_string(i) +
                                    " out of range for " + shape_str(a.shape()));
    const int64_t m = static_cast<int64_t>(idx.size());
    std::vector<T> out(static_cast<size_t>(m * cols));
    for (int64_t r = 0; r < m; ++r)
      std::copy_n(a.value().begin() + idx[static_cast<size_t>(r)] * cols, cols,
                  out.begin() + r * cols);
    auto idx_copy = idx;
    return make("gather_rows", {m, cols}, std::move(out), {a},
                [idx_copy = std::move(idx_copy), m, cols](Node<T>& n) {
                  Node<T>* pa = n.parents[0].get();
                  for (int64_t r = 0; r < m; ++r) {
                    const int64_t src = idx_copy[static_cast<size_t>(r)];
                    for (int64_t c = 0; c < cols; ++c)
                      pa->grad[static_cast<size_t>(src * cols + c)] +=
                          n.grad[static_cast<size_t>(r * cols + c)];
                  }
                });
  }

  Tn slice_cols(const Tn& a, int64_t start, int64_t len) {
    require_rank("slice_cols", a, 2);
    const int64_t rows = a.dim(0), cols = a.dim(1);
    if (start < 0 || len < 1 || start + len > cols)
      throw std::invalid_argument("slice_cols: window out of range for " + shape_str(a.shape()));
    std::vector<T> out(static_cast<size_t>(rows * len));
    for (int64_t r = 0; r < rows; ++r)
      std::copy_n(a.value().begin() + r * cols + start, len, out.begin() + r * len);
    return make("slice_cols", {rows, len}, std::move(out), {a}, [rows, cols, start, len](Node<T>& n) {
      Node<T>* pa = n.parents[0].get();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < len; ++c)
          pa->grad[static_cast<size_t>(r * cols + start + c)] +=
              n.grad[static_cast<size_t>(r * len + c)];
    });
  }

  Tn reshape(const Tn& a, std::vector<int64_t> shape) {
    if (shape_numel(shape) != a.numel())
      throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                  shape_str(shape));
    std::vector<T> out = a.value();
    return make("reshape", std::move(shape), std::move(out), {a}, [](Node<T>& n) {
      Node<T>* pa = n.parents[0].get();
      for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    });
  }

  // ---- reductions ----

  Tn sum_axis(const Tn& a, int axis) { return reduce_axis(a, axis, false); }
  Tn mean_axis(const Tn& a, int axis) { return reduce_axis(a, axis, true); }

  Tn sum_all(const Tn& a) {
    T s = T(0);
    for (T v : a.value()) s += v;
    return make("sum_all", {1}, {s}, {a}, [](Node<T>& n) {
      Node<T>* pa = n.parents[0].get();
      for (size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += n.grad[0];
    });
  }

  Tn mean_all(const Tn& a) {
    T s = T(0);
    for (T v : a.value()) s += v;
    const T inv = T(1) / static_cast<T>(a.numel());
    return make("mean_all", {1}, {s * inv}, {a}, [inv](Node<T>& n) {
      Node<T>* pa = n.parents[0].get();
      for (size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += n.grad[0] * inv;
    });
  }

  // ---- elementwise unary ----

  Tn relu(const Tn& a) {
    return unary("relu", a, [](T x) { return x > T(0) ? x : T(0); },
                 [](T x, T) { return x > T(0) ? T(1) : T(0); });
  }

  Tn softplus(const Tn& a) {
    return unary(
        "softplus", a,
        [](T x) {
          // overflow-safe: max(x,0) + log1p(exp(-|x|))
          const T ax = x < T(0) ? -x : x;
          return (x > T(0) ? x : T(0)) + std::log1p(std::exp(-ax));
        },
        [](T x, T) { return T(1) / (T(1) + std::exp(-x)); });
  }

  Tn exp(const Tn& a) {
    return unary("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
  }

  Tn sin(const Tn& a) {
    return unary("sin", a, [](T x) { return std::sin(x); }, [](T x, T) { return std::cos(x); });
  }

  Tn cos(const Tn& a) {
    return unary("cos", a, [](T x) { return std::cos(x); }, [](T x, T) { return -std::sin(x); });
  }

  Tn sqrt(const Tn& a) {
    return unary("sqrt", a, [](T x) { return std::sqrt(x); },
                 [](T, T y) { return T(0.5) / y; });
  }

  // scalar bounds; gradient is 1 inside [lo, hi] and 0 outside
  Tn clamp(const Tn& a, T lo, T hi) {
    return unary(
        "clamp", a, [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
  }

  // tensor bounds, same shape; gradient flows to the clamped input only
  // (bounds are treated as constants of the forward pass)
  Tn clamp_between(const Tn& a, const Tn& lo, const Tn& hi) {
    require_same("clamp_between", a, lo);
    require_same("clamp_between", a, hi);
    std::vector<T> out(a.value().size());
    std::vector<uint8_t> inside(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) {
      const T x = a.value()[i], l = lo.value()[i], h = hi.value()[i];
      out[i] = x < l ? l : (x > h ? h : x);
      inside[i] = (x >= l && x <= h) ? 1 : 0;
    }
    return make("clamp_between", a.shape(), std::move(out), {a},
                [inside = std::move(inside)](Node<T>& n) {
                  Node<T>* pa = n.parents[0].get();
                  for (size_t i = 0; i < n.grad.size(); ++i)
                    if (inside[i]) pa->grad[i] += n.grad[i];
                });
  }

  // elementwise max; ties route the gradient to the first argument
  Tn maximum(const Tn& a, const Tn& b) {
    require_same("maximum", a, b);
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.value()[i], b.value()[i]);
    return make("maximum", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
      auto [pa, pb] = two_parents(n);
      for (size_t i = 0; i < n.grad.size(); ++i) {
        if (pa->value[i] >= pb->value[i])
          pa->grad[i] += n.grad[i];
        else
          pb->grad[i] += n.grad[i];
      }
    });
  }

  // ---- normalization ----

  Tn softmax(const Tn& a, int axis) {
    auto [outer, mid, inner] = axis_split("softmax", a, axis);
    std::vector<T> out(a.value().size());
    const T* src = a.value().data();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < inner; ++i) {
        const int64_t base = o * mid * inner + i;
        T mx = src[base];
        for (int64_t j = 1; j < mid; ++j) mx = std::max(mx, src[base + j * inner]);
        T sum = T(0);
        for (int64_t j = 0; j < mid; ++j) {
          const T e = std::exp(src[base + j * inner] - mx);
          out[static_cast<size_t>(base + j * inner)] = e;
          sum += e;
        }
        const T inv = T(1) / sum;
        for (int64_t j = 0; j < mid; ++j) out[static_cast<size_t>(base + j * inner)] *= inv;
      }
    return make("softmax", a.shape(), std::move(out), {a},
                [outer = outer, mid = mid, inner = inner](Node<T>& n) {
                  Node<T>* pa = n.parents[0].get();
                  for (int64_t o = 0; o < outer; ++o)
                    for (int64_t i = 0; i < inner; ++i) {
                      const int64_t base = o * mid * inner + i;
                      T dotv = T(0);
                      for (int64_t j = 0; j < mid; ++j) {
                        const size_t k = static_cast<size_t>(base + j * inner);
                        dotv += n.grad[k] * n.value[k];
                      }
                      for (int64_t j = 0; j < mid; ++j) {
                        const size_t k = static_cast<size_t>(base + j * inner);
                        pa->grad[k] += n.value[k] * (n.grad[k] - dotv);
                      }
                    }
                });
  }

  // Row-wise layer norm over the last axis of a 2D tensor with learned
  // gain/bias.
  Tn layer_norm(const Tn& x, const Tn& gamma, const Tn& beta, T eps = T(1e-5)) {
    require_rank("layer_norm", x, 2);
    const int64_t rows = x.dim(0), cols = x.dim(1);
    if (gamma.numel() != cols || beta.numel() != cols)
      throw std::invalid_argument("shape mismatch in layer_norm: " + shape_str(x.shape()) +
                                  " vs " + shape_str(gamma.shape()));
    std::vector<T> out(x.value().size());
    std::vector<T> inv_std(static_cast<size_t>(rows));
    std::vector<T> xhat(x.value().size());
    for (int64_t r = 0; r < rows; ++r) {
      const T* row = x.value().data() + r * cols;
      T mu = T(0);
      for (int64_t c = 0; c < cols; ++c) mu += row[c];
      mu /= static_cast<T>(cols);
      T var = T(0);
      for (int64_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
      var /= static_cast<T>(cols);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(r)] = is;
      for (int64_t c = 0; c < cols; ++c) {
        const size_t k = static_cast<size_t>(r * cols + c);
        xhat[k] = (row[c] - mu) * is;
        out[k] = gamma.value()[static_cast<size_t>(c)] * xhat[k] +
                 beta.value()[static_cast<size_t>(c)];
      }
    }
    return make("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                [rows, cols, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node<T>& n) {
                  Node<T>* px = n.parents[0].get();
                  Node<T>* pg = n.parents[1].get();
                  Node<T>* pb = n.parents[2].get();
                  for (int64_t r = 0; r < rows; ++r) {
                    T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                    for (int64_t c = 0; c < cols; ++c) {
                      const size_t k = static_cast<size_t>(r * cols + c);
                      const T dxhat = n.grad[k] * pg->value[static_cast<size_t>(c)];
                      sum_dxhat += dxhat;
                      sum_dxhat_xhat += dxhat * xhat[k];
                      pg->grad[static_cast<size_t>(c)] += n.grad[k] * xhat[k];
                      pb->grad[static_cast<size_t>(c)] += n.grad[k];
                    }
                    const T is = inv_std[static_cast<size_t>(r)];
                    const T invc = T(1) / static_cast<T>(cols);
                    for (int64_t c = 0; c < cols; ++c) {
                      const size_t k = static_cast<size_t>(r * cols + c);
                      const T dxhat = n.grad[k] * pg->value[static_cast<size_t>(c)];
                      px->grad[k] +=
                          is * (dxhat - invc * sum_dxhat - xhat[k] * invc * sum_dxhat_xhat);
                    }
                  }
                });
  }

  // ---- backward ----

  void backward(const Tn& loss) {
    if (loss.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  shape_str(loss.shape()));
    Node<T>* root = loss.node().get();
    if (!root->requires_grad) return;  // nothing on the tape influences it
    // mark ancestors of the loss
    std::unordered_set<Node<T>*> live;
    std::vector<Node<T>*> stack{root};
    live.insert(root);
    while (!stack.empty()) {
      Node<T>* n = stack.back();
      stack.pop_back();
      for (auto& p : n->parents)
        if (live.insert(p.get()).second) stack.push_back(p.get());
    }
    for (Node<T>* n : live) n->ensure_grad();
    root->ensure_grad();
    root->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>* n = it->get();
      if (n->backprop && live.count(n)) n->backprop(*n);
    }
  }

 private:
  static std::pair<Node<T>*, Node<T>*> two_parents(Node<T>& n) {
    return {n.parents[0].get(), n.parents[1].get()};
  }

  static void require_same(const char* op, const Tn& a, const Tn& b) {
    if (a.shape() != b.shape())
      throw std::invalid_argument(std::string("shape mismatch in ") + op + ": " +
                                  shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }

  static void require_rank(const char* op, const Tn& a, int64_t rank) {
    if (a.rank() != rank)
      throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                  ", got " + shape_str(a.shape()));
  }

  static std::tuple<int64_t, int64_t, int64_t> axis_split(const char* op, const Tn& a, int axis) {
    if (axis < 0 || axis >= a.rank())
      throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                  " out of range for " + shape_str(a.shape()));
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.dim(static_cast<size_t>(i));
    for (int64_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(static_cast<size_t>(i));
    return {outer, a.dim(static_cast<size_t>(axis)), inner};
  }

  Tn reduce_axis(const Tn& a, int axis, bool mean) {
    auto [outer, mid, inner] = axis_split(mean ? "mean_axis" : "sum_axis", a, axis);
    std::vector<int64_t> shape;
    for (int64_t i = 0; i < a.rank(); ++i)
      if (i != axis) shape.push_back(a.dim(static_cast<size_t>(i)));
    if (shape.empty()) shape.push_back(1);
    const T scale = mean ? T(1) / static_cast<T>(mid) : T(1);
    std::vector<T> out(static_cast<size_t>(outer * inner), T(0));
    const T* src = a.value().data();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t j = 0; j < mid; ++j)
        for (int64_t i = 0; i < inner; ++i)
          out[static_cast<size_t>(o * inner + i)] += src[o * mid * inner + j * inner + i];
    if (mean)
      for (T& v : out) v *= scale;
    return make(mean ? "mean_axis" : "sum_axis", std::move(shape), std::move(out), {a},
                [outer = outer, mid = mid, inner = inner, scale](Node<T>& n) {
                  Node<T>* pa = n.parents[0].get();
                  for (int64_t o = 0; o < outer; ++o)
                    for (int64_t j = 0; j < mid; ++j)
                      for (int64_t i = 0; i < inner; ++i)
                        pa->grad[static_cast<size_t>(o * mid * inner + j * inner + i)] +=
                            n.grad[static_cast<size_t>(o * inner + i)] * scale;
                });
  }

  template <class Fwd, class Bwd>
  Tn unary(const char* op, const Tn& a, Fwd fwd, Bwd dfdx) {
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.value()[i]);
    return make(op, a.shape(), std::move(out), {a}, [dfdx](Node<T>& n) {
      Node<T>* pa = n.parents[0].get();
      for (size_t i = 0; i < n.grad.size(); ++i)
        pa->grad[i] += n.grad[i] * dfdx(pa->value[i], n.value[i]);
    });
  }

  Tn make(const char* op, std::vector<int64_t> shape, std::vector<T> value,
          const std::vector<Tn>& parents, std::function<void(Node<T>&)> backprop) {
    for (T v : value)
      if (!std::isfinite(v))
        throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    bool rg = false;
    if (grad_enabled_)
      for (const Tn& p : parents) rg = rg || p.requires_grad();
    if (rg) {
      n->requires_grad = true;
      for (const Tn& p : parents) n->parents.push_back(p.node());
      n->backprop = std::move(backprop);
      nodes_.push_back(n);
    }
    return Tn(n);
  }

  std::vector<std::shared_ptr<Node<T>>> nodes_;
  bool grad_enabled_ = true;
};

// Max relative error between reverse-mode gradients and central finite
// differences, taken over every coordinate of every listed leaf. `f` must
// rebuild its graph from the leaves' current values on the given tape.
template <class T>
double gradcheck(const std::function<Tensor<T>(Tape<T>&)>& f, std::vector<Tensor<T>> leaves,
                 T h = T(1e-5)) {
  for (auto& leaf : leaves) leaf.zero_grad();
  std::vector<std::vector<T>> analytic;
  {
    Tape<T> tape;
    Tensor<T> loss = f(tape);
    if (loss.numel() != 1) throw std::invalid_argument("gradcheck: f must be scalar-valued");
    tape.backward(loss);
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());
  }
  auto eval = [&]() -> T {
    Tape<T> tape;
    return f(tape).item();
  };
  double max_err = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].mutable_value();
    for (size_t i = 0; i < vals.size(); ++i) {
      const T orig = vals[i];
      vals[i] = orig + h;
      const T fp = eval();
      vals[i] = orig - h;
      const T fm = eval();
      vals[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("gradcheck: non-finite value at perturbed point");
      const double num = (static_cast<double>(fp) - static_cast<double>(fm)) / (2.0 * h);
      const double ana = analytic[li][i];
      const double err = std::abs(num - ana) / std::max(1.0, std::abs(ana));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

template <class T>
double gradcheck(const std::function<Tensor<T>(Tape<T>&, const Tensor<T>&)>& f, Tensor<T> x,
                 T h = T(1e-5)) {
  return gradcheck<T>([&](Tape<T>& tape) { return f(tape, x); }, {x}, h);
}

}  // namespace smog
