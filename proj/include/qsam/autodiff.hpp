#pragma once

#include "qsam/tensor.hpp"

#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace qsam {

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Named trainable tensor. Gradients accumulate across backward passes until
/// zero_grad() is called.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string name_, Tensor<T> value_)
      : name(std::move(name_)), value(std::move(value_)),
        grad(Tensor<T>::zeros_like(value)) {}

  void zero_grad() { grad.data.setZero(); }
};

/// Reverse-mode tape. Operations append nodes in execution order; backward()
/// replays the recorded closures in reverse. Values are kept alive on the
/// tape for the duration of the step (forward activations are saved eagerly,
/// nothing is recomputed). One tape per training step, single-threaded
/// recording, backward() may be called once.
template <typename T>
class Tape {
 public:
  using BackwardFn =
      std::function<void(Tape&, const Tensor<T>&, const Tensor<T>&)>;

  struct Node {
    const char* op = "";
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;    // grad buffer allocated and touched
    bool needs_grad = true;   // false for constants: gradients are not tracked
    BackwardFn backward;
  };

  /// Records a value that does not require gradients (e.g. input images).
  Var<T> constant(Tensor<T> v, const char* op = "const") {
    nodes_.push_back(Node{op, std::move(v), {}, false, false, nullptr});
    return {this, int(nodes_.size()) - 1};
  }

  /// Records a differentiable input; its gradient can be read back after
  /// backward() via grad().
  Var<T> input(Tensor<T> v, const char* op = "input") {
    nodes_.push_back(Node{op, std::move(v), {}, false, true, nullptr});
    return {this, int(nodes_.size()) - 1};
  }

  /// Records a parameter leaf; backward() accumulates into p.grad.
  Var<T> leaf(Parameter<T>& p) {
    Parameter<T>* pp = &p;
    nodes_.push_back(Node{
        "param", p.value, {}, false, true,
        [pp](Tape&, const Tensor<T>& gout, const Tensor<T>&) {
          pp->grad.data += gout.data;
        }});
    return {this, int(nodes_.size()) - 1};
  }

  /// Records an operation result. `back` receives (tape, grad_out, value_out)
  /// and is responsible for routing gradients to the op's inputs via accum().
  Var<T> record(const char* op, Tensor<T> value, BackwardFn back) {
    nodes_.push_back(Node{op, std::move(value), {}, false, true, std::move(back)});
    return {this, int(nodes_.size()) - 1};
  }

  const Tensor<T>& value(Var<T> v) const { return node(v).value; }

  /// Gradient of a node; zeros if backward never reached it.
  const Tensor<T>& grad(Var<T> v) {
    Node& nd = node(v);
    if (!nd.has_grad) allocate_grad(nd);
    return nd.grad;
  }

  bool wants_grad(Var<T> v) const { return node(v).needs_grad; }

  /// Adds an expression (any Eigen array expression of matching length) to a
  /// node's gradient. No-op for constants.
  template <typename E>
  void accum(Var<T> v, const E& expr) {
    Node& nd = node(v);
    if (!nd.needs_grad) return;
    if (!nd.has_grad) allocate_grad(nd);
    nd.grad.data += expr;
  }

  /// Reverse sweep from a scalar loss. Leaf parameter gradients accumulate
  /// into their Parameter::grad.
  void backward(Var<T> loss) {
    check(loss.tape == this, "backward: variable from a different tape");
    check(node(loss).value.numel() == 1,
          "backward requires a scalar loss, got " +
              node(loss).value.shape_str());
    if (backward_done_)
      throw std::logic_error("backward already ran on this tape");
    backward_done_ = true;
    Node& ln = node(loss);
    allocate_grad(ln);
    ln.grad.data[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& nd = nodes_[i];
      if (nd.has_grad && nd.backward) nd.backward(*this, nd.grad, nd.value);
    }
  }

  size_t size() const { return nodes_.size(); }

  /// Smallest |x| seen at any kinked activation recorded on this tape;
  /// +infinity when none was recorded. Gradient checking uses it to resample
  /// probe points that sit too close to a fold.
  double kink_margin() const { return kink_margin_; }
  void note_kink_margin(double d) {
    if (d < kink_margin_) kink_margin_ = d;
  }

 private:
  Node& node(Var<T> v) {
    check(v.valid() && v.tape == this && v.id < int(nodes_.size()),
          "invalid tape variable");
    return nodes_[size_t(v.id)];
  }
  const Node& node(Var<T> v) const {
    return const_cast<Tape*>(this)->node(v);
  }
  void allocate_grad(Node& nd) {
    nd.grad = Tensor<T>::zeros_like(nd.value);
    nd.has_grad = true;
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

}  // namespace qsam
