#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace neurodecode::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array. float for training, double (and long double for
// finite-difference references) in gradient checks.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> values);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool empty() const noexcept { return data.empty(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T* ptr() noexcept { return data.data(); }
  const T* ptr() const noexcept { return data.data(); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  bool operator==(const Tensor&) const = default;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> momentum;
};

// Owns the trainable tensors of a model. Indices returned by add() are stable.
template <typename T>
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor<T> value);

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  std::optional<std::size_t> find(const std::string& name) const;

  // Total number of trainable scalars.
  std::size_t count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter<T>> params_;
};

// Running statistics of one batch-norm layer (not trainable).
template <typename T>
struct BatchNormState {
  std::string name;
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template struct Tensor<long double>;
extern template class ParamStore<long double>;

}  // namespace neurodecode::ad
