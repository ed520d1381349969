#include "neurodecode/autodiff/tape.hpp"
#include "neurodecode/autodiff/tensor.hpp"

#include "neurodecode/errors.hpp"

#include <cmath>
#include <numeric>

namespace neurodecode::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != numel(shape)) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " given " + std::to_string(data.size()) + " values");
  }
}

template <typename T>
std::size_t ParamStore<T>::add(std::string name, Tensor<T> value) {
  Parameter<T> p;
  p.name = std::move(name);
  p.grad = Tensor<T>(value.shape);
  p.momentum = Tensor<T>(value.shape);
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

template <typename T>
std::optional<std::size_t> ParamStore<T>::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

template <typename T>
std::size_t ParamStore<T>::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), T{0});
}

template <typename T>
Var<T> Tape<T>::param(std::size_t index) {
  if (!params_) throw Error("tape has no parameter store");
  if (index >= params_->size()) throw Error("parameter index out of range");
  return push("param", (*params_)[index].value, true, nullptr, static_cast<std::ptrdiff_t>(index));
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape);
  return n.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (&loss.tape() != this) throw Error("loss recorded on a different tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  grad(loss.id()).data[0] = T{1};
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) n.backward(id);
  }
  if (!params_) return;
  for (auto& n : nodes_) {
    if (n.param_index < 0 || n.grad.empty()) continue;
    auto& g = (*params_)[static_cast<std::size_t>(n.param_index)].grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }
}

template <typename T>
Var<T> Tape<T>::push(const char* op, Tensor<T> value, bool requires_grad, Backward backward,
                     std::ptrdiff_t param) {
  for (const T v : value.data) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
  nodes_.push_back(Node{op, std::move(value), {}, requires_grad, requires_grad ? std::move(backward) : nullptr, param});
  return Var<T>(this, nodes_.size() - 1);
}

template struct Tensor<float>;
template struct Tensor<double>;
template class ParamStore<float>;
template class ParamStore<double>;
template class Tape<float>;
template class Tape<double>;
template struct Tensor<long double>;
template class ParamStore<long double>;
template class Tape<long double>;

}  // namespace neurodecode::ad
