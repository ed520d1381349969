#pragma once

#include "neurodecode/autodiff/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>

namespace neurodecode::ad {

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape; }
  std::size_t dim(std::size_t i) const { return value().dim(i); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Ops append nodes in evaluation order, so reverse
// insertion order is a valid topological order for backward().
template <typename T>
class Tape {
 public:
  // Called with the node's own id; reads grad(self) and accumulates into the
  // gradients of its inputs.
  using Backward = std::function<void(std::size_t self)>;

  explicit Tape(ParamStore<T>* params = nullptr) : params_(params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, nullptr, -1); }
  Var<T> variable(Tensor<T> value) { return push("variable", std::move(value), true, nullptr, -1); }
  Var<T> param(std::size_t index);

  // Appends an op result. Throws NumericError on non-finite output.
  Var<T> record(const char* op, Tensor<T> value, bool requires_grad, Backward backward) {
    return push(op, std::move(value), requires_grad, std::move(backward), -1);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  // Gradient buffer of a node, zero-initialized on first access.
  Tensor<T>& grad(std::size_t id);

  // Seeds d(loss)/d(loss) = 1, runs every backward closure in reverse order
  // and adds the gradients of parameter leaves into the parameter store.
  void backward(const Var<T>& loss);

  ParamStore<T>* params() const { return params_; }
  std::size_t size() const { return nodes_.size(); }

  // Fingerprint of the branches taken by piecewise-linear ops (relu masks).
  // Two evaluations with equal fingerprints used the same linear pieces.
  void note_branches(std::uint64_t h) { branches_ = (branches_ ^ h) * 0x100000001b3ULL + (branches_ >> 29); }
  std::uint64_t branches() const noexcept { return branches_; }

 private:
  struct Node {
    const char* op;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad;
    Backward backward;
    std::ptrdiff_t param_index;
  };

  Var<T> push(const char* op, Tensor<T> value, bool requires_grad, Backward backward, std::ptrdiff_t param);

  ParamStore<T>* params_;
  std::deque<Node> nodes_;
  std::uint64_t branches_ = 0;
};

extern template class Tape<float>;
extern template class Tape<double>;
extern template class Tape<long double>;

}  // namespace neurodecode::ad
