#pragma once

// Reverse-mode autodiff over dense tensors, templated on the scalar type.
// Graphs are built dynamically; gradients are accumulated into a GradStore
// keyed by node, so parameters carry no mutable gradient state of their own.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace attnreg::nn {

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

// Dims are row-major: a feature map is {C, H, W}, a vector {N}, a scalar {}.
using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// When disabled, ops evaluate values only and record no graph.
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename S>
struct TensorImpl;

template <typename S>
class GradStore {
 public:
  ArrayX<S>& of(const TensorImpl<S>* node) {
    auto it = slots_.find(node);
    if (it == slots_.end()) {
      it = slots_.emplace(node, ArrayX<S>::Zero(node->value.size())).first;
    }
    return it->second;
  }
  const ArrayX<S>* find(const TensorImpl<S>* node) const {
    auto it = slots_.find(node);
    return it == slots_.end() ? nullptr : &it->second;
  }
  void clear() { slots_.clear(); }

 private:
  std::unordered_map<const TensorImpl<S>*, ArrayX<S>> slots_;
};

template <typename S>
using BackwardFn = std::function<void(const ArrayX<S>&, GradStore<S>&)>;

template <typename S>
struct TensorImpl {
  Shape shape;
  ArrayX<S> value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl<S>>> parents;
  BackwardFn<S> backward;
};

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return from(std::move(shape), ArrayX<S>());
  }
  static Tensor full(Shape shape, S v) {
    auto n = numel(shape);
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<S>>();
    t.impl_->shape = std::move(shape);
    t.impl_->value = ArrayX<S>::Constant(n, v);
    return t;
  }
  static Tensor from(Shape shape, ArrayX<S> value) {
    auto n = numel(shape);
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<S>>();
    t.impl_->shape = std::move(shape);
    if (value.size() == 0 && n > 0) value = ArrayX<S>::Zero(n);
    if (value.size() != n) throw std::invalid_argument("Tensor::from: size mismatch");
    t.impl_->value = std::move(value);
    return t;
  }
  // A leaf that participates in differentiation (parameters, probed inputs).
  static Tensor leaf(Shape shape, ArrayX<S> value, bool requires_grad = true) {
    Tensor t = from(std::move(shape), std::move(value));
    t.impl_->requires_grad = requires_grad;
    return t;
  }
  static Tensor scalar(S v) { return full({}, v); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t size() const { return impl_->value.size(); }
  ArrayX<S>& value() { return impl_->value; }
  const ArrayX<S>& value() const { return impl_->value; }
  S item() const {
    if (impl_->value.size() != 1) throw std::logic_error("Tensor::item: not a scalar");
    return impl_->value[0];
  }
  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  TensorImpl<S>* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl<S>>& ptr() const { return impl_; }

  int dim(int i) const { return impl_->shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }

 private:
  std::shared_ptr<TensorImpl<S>> impl_;
};

// Wires `out` into the graph when grad recording is active and any parent
// needs gradients. The backward fn receives d(out) and scatters into parents.
template <typename S>
void attach(Tensor<S>& out, std::initializer_list<Tensor<S>> parents, BackwardFn<S> fn) {
  if (!grad_enabled()) return;
  bool need = false;
  for (const auto& p : parents) need = need || p.impl()->requires_grad;
  if (!need) return;
  out.impl()->requires_grad = true;
  out.impl()->parents.reserve(parents.size());
  for (const auto& p : parents) out.impl()->parents.push_back(p.ptr());
  out.impl()->backward = std::move(fn);
}

template <typename S>
inline bool wants_graph(std::initializer_list<Tensor<S>> parents) {
  if (!grad_enabled()) return false;
  for (const auto& p : parents)
    if (p.impl()->requires_grad) return true;
  return false;
}

// Reverse sweep from a scalar root. Every node's consumers are processed
// before the node itself (reversed post-order over the DAG).
template <typename S>
void backward(const Tensor<S>& root, GradStore<S>& grads) {
  if (root.size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!root.impl()->requires_grad) return;

  struct Frame {
    TensorImpl<S>* node;
    std::size_t next;
  };
  std::vector<TensorImpl<S>*> order;
  std::unordered_set<TensorImpl<S>*> seen;
  std::vector<Frame> stack;
  seen.insert(root.impl());
  stack.push_back({root.impl(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      TensorImpl<S>* p = f.node->parents[f.next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  grads.of(root.impl())[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl<S>* node = *it;
    if (!node->backward) continue;
    const ArrayX<S>* g = grads.find(node);
    if (!g) continue;
    node->backward(*g, grads);
  }
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

}  // namespace attnreg::nn
