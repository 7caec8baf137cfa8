#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <new>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace regioncl {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor shape has non-positive dimension");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

// Tensor storage is 64-byte aligned so vectorized reductions split their
// scalar prologue at the same element for every buffer of a given shape.
// With plain heap storage the split point follows the allocation address and
// reduction rounding, and therefore logged losses, can differ between
// otherwise identical runs.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t alignment = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    if (n == 0) return nullptr;
    const std::size_t bytes = (n * sizeof(T) + alignment - 1) / alignment * alignment;
    void* p = std::aligned_alloc(alignment, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { std::free(p); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
  template <typename U>
  bool operator!=(const AlignedAllocator<U>&) const {
    return false;
  }
};

template <typename T>
using AlignedVec = std::vector<T, AlignedAllocator<T>>;

// Expensive per-op value scans (NaN/Inf). On by default in debug builds only;
// tests may flip it at runtime.
inline bool& debug_checks() {
#ifdef NDEBUG
  static bool on = false;
#else
  static bool on = true;
#endif
  return on;
}

// Global tape switch. Forward passes run under NoGradGuard record nothing.
inline bool& grad_recording() {
  static bool on = true;
  return on;
}

struct NoGradGuard {
  NoGradGuard() : prev_(grad_recording()) { grad_recording() = false; }
  ~NoGradGuard() { grad_recording() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename Scalar>
struct TensorNode {
  Shape shape;
  AlignedVec<Scalar> value;
  AlignedVec<Scalar> grad;  // empty until the backward pass touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void accumulate(const Scalar* g, std::int64_t n) {
    if (static_cast<std::size_t>(n) != value.size())
      throw std::logic_error("gradient size mismatch during accumulation");
    if (grad.empty()) grad.assign(value.size(), Scalar(0));
    for (std::int64_t i = 0; i < n; ++i) grad[static_cast<std::size_t>(i)] += g[i];
  }

  void accumulate_at(std::int64_t index, Scalar g) {
    if (grad.empty()) grad.assign(value.size(), Scalar(0));
    grad[static_cast<std::size_t>(index)] += g;
  }

  void accumulate_slice(std::int64_t offset, const Scalar* g, std::int64_t n) {
    if (static_cast<std::size_t>(offset + n) > value.size())
      throw std::logic_error("gradient slice out of range during accumulation");
    if (grad.empty()) grad.assign(value.size(), Scalar(0));
    for (std::int64_t i = 0; i < n; ++i) grad[static_cast<std::size_t>(offset + i)] += g[i];
  }
};

template <typename Scalar>
class Tensor {
 public:
  using Node = TensorNode<Scalar>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), Scalar(0), requires_grad);
  }

  static Tensor full(Shape shape, Scalar v, bool requires_grad = false) {
    return filled(std::move(shape), v, requires_grad);
  }

  template <typename Vec = std::vector<Scalar>>
  static Tensor from_data(Shape shape, const Vec& data, bool requires_grad = false) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(data.begin(), data.end());
    t.node_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  Scalar* data() { return node_->value.data(); }
  const Scalar* data() const { return node_->value.data(); }
  AlignedVec<Scalar>& vec() { return node_->value; }
  const AlignedVec<Scalar>& vec() const { return node_->value; }
  Scalar operator[](std::int64_t i) const { return node_->value[static_cast<std::size_t>(i)]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  bool has_grad() const { return !node_->grad.empty(); }
  const AlignedVec<Scalar>& grad() const {
    if (node_->grad.empty())
      throw std::runtime_error("tensor has no gradient (backward not run or not reachable)");
    return node_->grad;
  }
  // zero when never touched by a backward pass
  Scalar grad_at(std::int64_t i) const {
    return node_->grad.empty() ? Scalar(0) : node_->grad[static_cast<std::size_t>(i)];
  }
  void zero_grad() { node_->grad.clear(); }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  static Tensor filled(Shape shape, Scalar fill, bool requires_grad) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    const std::int64_t n = shape_numel(shape);
    t.node_->shape = std::move(shape);
    t.node_->value.assign(static_cast<std::size_t>(n), fill);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  std::shared_ptr<Node> node_;
};

template <typename S>
void check_finite(const Tensor<S>& t, const char* op) {
  if (!debug_checks()) return;
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(t[i]))
      throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
  }
}

// Attach parents and a pull-style backward closure to `out`. Recording is
// skipped when the tape is off or no parent needs gradients, so inference
// passes build no graph.
template <typename S>
inline void record(Tensor<S>& out, std::vector<Tensor<S>> parents,
                   std::function<void(TensorNode<S>&)> backward_fn) {
  bool need = false;
  for (const auto& p : parents) need = need || p.requires_grad();
  if (!grad_recording() || !need) return;
  out.node()->requires_grad = true;
  for (auto& p : parents) out.node()->parents.push_back(p.node());
  out.node()->backward_fn = std::move(backward_fn);
}

// Reverse pass from a scalar loss. Every parameter reachable through recorded
// ops receives its accumulated gradient; nodes behind stop_gradient receive
// none through that path.
template <typename S>
void backward(const Tensor<S>& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss tensor");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_str(loss.shape()));

  using Node = TensorNode<S>;
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  // iterative post-order DFS over recorded parents
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad.assign(1, S(1));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

// Eigen views over tensor storage; Eigen is the math backend throughout.
template <typename S>
using EigenMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatView = Eigen::Map<EigenMat<S>>;
template <typename S>
using ConstMatView = Eigen::Map<const EigenMat<S>>;
template <typename S>
using ArrView = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
template <typename S>
using ConstArrView = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

template <typename S>
MatView<S> as_matrix(Tensor<S>& t, std::int64_t rows, std::int64_t cols) {
  return MatView<S>(t.data(), rows, cols);
}
template <typename S>
ConstMatView<S> as_matrix(const Tensor<S>& t, std::int64_t rows, std::int64_t cols) {
  return ConstMatView<S>(t.data(), rows, cols);
}
template <typename S>
ArrView<S> as_array(Tensor<S>& t) {
  return ArrView<S>(t.data(), t.numel());
}
template <typename S>
ConstArrView<S> as_array(const Tensor<S>& t) {
  return ConstArrView<S>(t.data(), t.numel());
}

}  // namespace regioncl
