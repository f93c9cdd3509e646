#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "deepssm/common.hpp"

namespace deepssm::autodiff {

struct Shape {
  std::vector<std::int64_t> dims;

  Shape() = default;
  Shape(std::initializer_list<std::int64_t> d) : dims(d) {}
  explicit Shape(std::vector<std::int64_t> d) : dims(std::move(d)) {}

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  int ndim() const { return static_cast<int>(dims.size()); }
  std::int64_t last() const { return dims.empty() ? 1 : dims.back(); }
  /// Product of all but the last dimension.
  std::int64_t rows() const { return dims.empty() ? 1 : numel() / dims.back(); }

  bool operator==(const Shape& o) const { return dims == o.dims; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
    os << ']';
    return os.str();
  }
};

class Tape;

/// Dense real array. Either detached (plain values) or a handle to a node
/// on a Tape, in which case gradients flow through it during backward().
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Vec data) : shape_(std::move(shape)) {
    if (static_cast<std::int64_t>(data.size()) != shape_.numel())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_.str());
    value_ = std::make_shared<Vec>(std::move(data));
  }
  static Tensor scalar(double v) { return Tensor(Shape{}, Vec{v}); }
  static Tensor zeros(Shape shape) {
    Vec v(static_cast<size_t>(shape.numel()), 0.0);
    return Tensor(std::move(shape), std::move(v));
  }
  static Tensor from_storage(Shape shape, std::shared_ptr<Vec> data) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.value_ = std::move(data);
    return t;
  }

  const Shape& shape() const { return shape_; }
  const Vec& value() const& { return *value_; }
  // rvalue access copies: the storage dies with the temporary
  Vec value() && { return *value_; }
  const std::shared_ptr<Vec>& storage() const { return value_; }
  std::int64_t numel() const { return shape_.numel(); }

  double item() const {
    if (shape_.numel() != 1)
      throw ValueError("item() on tensor of shape " + shape_.str());
    return (*value_)[0];
  }

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  /// Same values, no tape reference.
  Tensor detach() const {
    Tensor t;
    t.shape_ = shape_;
    t.value_ = value_;
    return t;
  }

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<Vec> value_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

/// Named trainable array. Gradients accumulate additively into `grad`;
/// callers zero it between optimizer steps.
struct Parameter {
  std::string name;
  Shape shape;
  Vec value;
  Vec grad;

  Parameter() = default;
  Parameter(std::string n, Shape s)
      : name(std::move(n)),
        shape(std::move(s)),
        value(static_cast<size_t>(shape.numel()), 0.0),
        grad(static_cast<size_t>(shape.numel()), 0.0) {}

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

/// While one of these is alive on a thread, no operations are recorded and
/// results are detached values.
class NoGradGuard {
 public:
  NoGradGuard() { ++depth(); }
  ~NoGradGuard() { --depth(); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active() { return depth() > 0; }

 private:
  static int& depth() {
    thread_local int d = 0;
    return d;
  }
};

/// Recorded computation graph for one forward/backward pass. Nodes are
/// appended in execution order, so parents always precede children and a
/// single reverse sweep propagates each node's gradient exactly once.
/// Confined to one logical thread; rebuilt for every pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Raises NumericError as soon as a non-finite value or gradient appears.
  bool check_finite = true;

  /// Registers a parameter as a leaf; backward() accumulates into p.grad.
  Tensor leaf(Parameter& p) {
    if (NoGradGuard::active()) {
      return Tensor(p.shape, p.value).detach();
    }
    Tensor t;
    t.shape_ = p.shape;
    t.value_ = std::make_shared<Vec>(p.value);
    t.tape_ = this;
    t.node_ = static_cast<int>(nodes_.size());
    Node nd;
    nd.op = "leaf";
    nd.label = p.name;
    nd.shape = p.shape;
    nd.value = t.value_;
    nd.external_grad = &p.grad;
    nodes_.push_back(std::move(nd));
    return t;
  }

  size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar output. Callable once per tape.
  void backward(const Tensor& out) {
    if (used_)
      throw ValueError(
          "backward() already ran on this tape; rebuild the graph before "
          "differentiating again");
    if (out.tape() != this) throw ValueError("output tensor is not on this tape");
    if (out.numel() != 1)
      throw ValueError("backward() requires a scalar output, got shape " +
                       out.shape().str());
    used_ = true;
    grad(out.node()) = Vec{1.0};
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& nd = nodes_[static_cast<size_t>(i)];
      Vec& g = nd.external_grad ? *nd.external_grad : nd.grad;
      if (!nd.external_grad && g.empty()) continue;  // no path to the output
      if (check_finite && !nd.external_grad) check_vec(g, "gradient", i, nd);
      if (nd.backward) nd.backward(*this, g);
      if (!nd.external_grad) Vec().swap(nd.grad);  // release as we go
      if (check_finite && nd.external_grad) check_vec(g, "gradient", i, nd);
    }
  }

  // -- used by the op implementations --

  using BackFn = std::function<void(Tape&, const Vec&)>;

  Tensor record(const char* op, Shape shape, std::shared_ptr<Vec> value,
                BackFn back) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.value_ = std::move(value);
    t.tape_ = this;
    t.node_ = static_cast<int>(nodes_.size());
    Node nd;
    nd.op = op;
    nd.shape = t.shape_;
    nd.value = t.value_;
    nd.backward = std::move(back);
    if (check_finite) check_vec(*t.value_, "forward value", t.node_, nd);
    nodes_.push_back(std::move(nd));
    return t;
  }

  Tensor record(const char* op, Shape shape, Vec value, BackFn back) {
    return record(op, std::move(shape),
                  std::make_shared<Vec>(std::move(value)), std::move(back));
  }

  /// Gradient accumulation buffer for a node (zero-initialized on demand).
  Vec& grad(int node) {
    Node& nd = nodes_[static_cast<size_t>(node)];
    if (nd.external_grad) return *nd.external_grad;
    if (nd.grad.empty())
      nd.grad.assign(static_cast<size_t>(nd.shape.numel()), 0.0);
    return nd.grad;
  }

  const Vec& node_value(int node) const {
    return *nodes_[static_cast<size_t>(node)].value;
  }

 private:
  struct Node {
    const char* op = "";
    std::string label;  // parameter name for leaves
    Shape shape;
    std::shared_ptr<Vec> value;
    Vec grad;
    Vec* external_grad = nullptr;
    BackFn backward;
  };

  void check_vec(const Vec& v, const char* what, int id, const Node& nd) const {
    for (double x : v) {
      if (!std::isfinite(x)) {
        std::string where = nd.label.empty() ? std::string(nd.op) : nd.label;
        throw NumericError("non-finite " + std::string(what) + " at node #" +
                           std::to_string(id) + " (" + where + ")");
      }
    }
  }

  std::vector<Node> nodes_;
  bool used_ = false;
};

}  // namespace deepssm::autodiff
