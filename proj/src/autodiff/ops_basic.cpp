#include "common.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace neurodecode::ad {

using detail::require;

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& b) {
  constexpr const char* op = "dense";
  detail::require_rank(w, 2, op, "weight");
  detail::require_same_tape(x, w, op);
  const std::size_t in = w.dim(0);
  const std::size_t out = w.dim(1);
  require(x.value().rank() >= 1 && x.shape().back() == in, op,
          "input " + shape_string(x.shape()) + " does not match weight " + shape_string(w.shape()));
  if (b) require(b->shape() == Shape{out}, op, "bias must be [" + std::to_string(out) + "]");
  const std::size_t rows = x.value().size() / in;

  Shape shape = x.shape();
  shape.back() = out;
  Tensor<T> y(shape);
  auto Y = detail::view(y, rows, out);
  Y.noalias() = detail::view(x.value(), rows, in) * detail::view(w.value(), in, out);
  if (b) Y.rowwise() += detail::view(b->value(), 1, out).row(0);

  auto& tape = x.tape();
  const bool rg = x.requires_grad() || w.requires_grad() || (b && b->requires_grad());
  return tape.record(op, std::move(y), rg, [=, &tape](std::size_t self) {
    const auto G = detail::view(std::as_const(tape.grad(self)), rows, out);
    if (x.requires_grad()) {
      detail::view(tape.grad(x.id()), rows, in).noalias() += G * detail::view(w.value(), in, out).transpose();
    }
    if (w.requires_grad()) {
      detail::view(tape.grad(w.id()), in, out).noalias() += detail::view(x.value(), rows, in).transpose() * G;
    }
    if (b && b->requires_grad()) {
      detail::view(tape.grad(b->id()), 1, out).row(0) += G.colwise().sum();
    }
  });
}

template <typename T>
Var<T> elu(const Var<T>& x) {
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T{0} ? xv[i] : std::expm1(xv[i]);
  auto& tape = x.tape();
  return tape.record("elu", std::move(y), x.requires_grad(), [=, &tape](std::size_t self) {
    const auto& g = tape.grad(self);
    const auto& yv = tape.value(self);
    const auto& xin = x.value();
    auto& gx = tape.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (xin[i] > T{0} ? T{1} : yv[i] + T{1});
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T{0} ? xv[i] : T{0};
  auto& tape = x.tape();
  tape.note_branches(detail::mask_hash(xv.data));
  return tape.record("relu", std::move(y), x.requires_grad(), [=, &tape](std::size_t self) {
    const auto& g = tape.grad(self);
    const auto& xin = x.value();
    auto& gx = tape.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xin[i] > T{0}) gx[i] += g[i];
    }
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  require(x.value().rank() >= 1, "softmax", "needs rank >= 1");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.value().size() / n;
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.ptr() + r * n;
    T* yr = y.ptr() + r * n;
    const T m = *std::max_element(xr, xr + n);
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) s += (yr[i] = std::exp(xr[i] - m));
    for (std::size_t i = 0; i < n; ++i) yr[i] /= s;
  }
  auto& tape = x.tape();
  return tape.record("softmax", std::move(y), x.requires_grad(), [=, &tape](std::size_t self) {
    const auto& g = tape.grad(self);
    const auto& yv = tape.value(self);
    auto& gx = tape.grad(x.id());
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * n;
      T dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += g[o + i] * yv[o + i];
      for (std::size_t i = 0; i < n; ++i) gx[o + i] += yv[o + i] * (g[o + i] - dot);
    }
  });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, bool training, Rng* rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  if (!rng) throw Error("dropout in training mode needs a random source");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask(x.shape());
  for (auto& m : mask.data) m = rng->uniform() < rate ? T{0} : keep_scale;
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.value()[i] * mask[i];
  auto& tape = x.tape();
  return tape.record("dropout", std::move(y), x.requires_grad(), [=, &tape](std::size_t self) {
    const auto& g = tape.grad(self);
    auto& gx = tape.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  constexpr const char* op = "layer_norm";
  const std::size_t d = x.shape().back();
  require(gamma.shape() == Shape{d} && beta.shape() == Shape{d}, op, "gamma/beta must match the last axis");
  const std::size_t rows = x.value().size() / d;
  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> inv(rows);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.ptr() + r * d;
    T mean = 0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<T>(d);
    inv[r] = T{1} / std::sqrt(var + static_cast<T>(eps));
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t k = r * d + i;
      xhat[k] = (xr[i] - mean) * inv[r];
      y[k] = gamma.value()[i] * xhat[k] + beta.value()[i];
    }
  }
  auto& tape = x.tape();
  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return tape.record(op, std::move(y), rg, [=, &tape](std::size_t self) {
    const auto& g = tape.grad(self);
    if (gamma.requires_grad() || beta.requires_grad()) {
      auto& gg = tape.grad(gamma.id());
      auto& gb = tape.grad(beta.id());
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < d; ++i) {
          gg[i] += g[r * d + i] * xhat[r * d + i];
          gb[i] += g[r * d + i];
        }
      }
    }
    if (!x.requires_grad()) return;
    auto& gx = tape.grad(x.id());
    const auto& gam = gamma.value();
    for (std::size_t r = 0; r < rows; ++r) {
      T sum = 0;
      T sum_xhat = 0;
      for (std::size_t i = 0; i < d; ++i) {
        const T gh = g[r * d + i] * gam[i];
        sum += gh;
        sum_xhat += gh * xhat[r * d + i];
      }
      for (std::size_t i = 0; i < d; ++i) {
        const std::size_t k = r * d + i;
        const T gh = g[k] * gam[i];
        gx[k] += inv[r] / static_cast<T>(d) * (static_cast<T>(d) * gh - sum - xhat[k] * sum_xhat);
      }
    }
  });
}

template <typename T>
Tensor<T> sinusoidal_positions(std::size_t steps, std::size_t d) {
  Tensor<T> pe({steps, d});
  for (std::size_t pos = 0; pos < steps; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * freq;
      pe[pos * d + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  constexpr const char* op = "cross_entropy";
  detail::require_rank(logits, 2, op, "logits");
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  require(labels.size() == batch, op, "one label per row required");
  Tensor<T> probs({batch, classes});
  using A = detail::Acc<T>;
  A loss = 0;
  const auto& z = logits.value();
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    require(label >= 0 && static_cast<std::size_t>(label) < classes, op, "label out of range");
    const T* zr = z.ptr() + b * classes;
    const T m = *std::max_element(zr, zr + classes);
    T s = 0;
    for (std::size_t c = 0; c < classes; ++c) s += (probs[b * classes + c] = std::exp(zr[c] - m));
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] /= s;
    loss += static_cast<A>(m + std::log(s) - zr[label]);
  }
  std::vector<int> y(labels.begin(), labels.end());
  Tensor<T> out({1}, static_cast<T>(loss / static_cast<A>(batch)));
  auto& tape = logits.tape();
  return tape.record(op, std::move(out), logits.requires_grad(), [=, &tape](std::size_t self) {
    const T g = tape.grad(self)[0] / static_cast<T>(batch);
    auto& gz = tape.grad(logits.id());
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < classes; ++c) {
        const T target = static_cast<std::size_t>(y[b]) == c ? T{1} : T{0};
        gz[b * classes + c] += g * (probs[b * classes + c] - target);
      }
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& x, const Var<T>& y) {
  constexpr const char* op = "add";
  detail::require_same_tape(x, y, op);
  const auto& xs = x.shape();
  const auto& ys = y.shape();
  require(ys.size() <= xs.size() && std::equal(ys.begin(), ys.end(), xs.end() - static_cast<std::ptrdiff_t>(ys.size())),
          op, "cannot broadcast " + shape_string(ys) + " onto " + shape_string(xs));
  const std::size_t inner = y.value().size();
  const std::size_t outer = x.value().size() / inner;
  Tensor<T> out = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += y.value()[i];
  }
  auto& tape = x.tape();
  return tape.record(op, std::move(out), x.requires_grad() || y.requires_grad(), [=, &tape](std::size_t self) {
    const auto& g = tape.grad(self);
    if (x.requires_grad()) {
      auto& gx = tape.grad(x.id());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (y.requires_grad()) {
      auto& gy = tape.grad(y.id());
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) gy[i] += g[o * inner + i];
      }
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  require(numel(shape) == x.value().size(), "reshape",
          "cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  Tensor<T> y(std::move(shape), x.value().data);
  auto& tape = x.tape();
  return tape.record("reshape", std::move(y), x.requires_grad(), [=, &tape](std::size_t self) {
    const auto& g = tape.grad(self);
    auto& gx = tape.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var<T> transpose_last2(const Var<T>& x) {
  detail::require_rank(x, 3, "transpose_last2", "input");
  const std::size_t B = x.dim(0), M = x.dim(1), N = x.dim(2);
  Tensor<T> y({B, N, M});
  for (std::size_t b = 0; b < B; ++b) {
    detail::view(y, N, M, b * M * N) = detail::view(x.value(), M, N, b * M * N).transpose();
  }
  auto& tape = x.tape();
  return tape.record("transpose_last2", std::move(y), x.requires_grad(), [=, &tape](std::size_t self) {
    const auto& g = tape.grad(self);
    auto& gx = tape.grad(x.id());
    for (std::size_t b = 0; b < B; ++b) {
      detail::view(gx, M, N, b * M * N) += detail::view(g, N, M, b * M * N).transpose();
    }
  });
}

template <typename T>
Var<T> mean_axis(const Var<T>& x, std::size_t axis) {
  const auto& s = x.shape();
  require(axis < s.size(), "mean_axis", "axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape shape = s;
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor<T> y(shape);
  const T scale = T{1} / static_cast<T>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      const T* xr = x.value().ptr() + (o * n + k) * inner;
      T* yr = y.ptr() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) yr[i] += xr[i] * scale;
    }
  }
  auto& tape = x.tape();
  return tape.record("mean_axis", std::move(y), x.requires_grad(), [=, &tape](std::size_t self) {
    const auto& g = tape.grad(self);
    auto& gx = tape.grad(x.id());
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < inner; ++i) gx[(o * n + k) * inner + i] += g[o * inner + i] * scale;
      }
    }
  });
}

template <typename T>
Var<T> select_step(const Var<T>& x, std::size_t step) {
  detail::require_rank(x, 3, "select_step", "input");
  const std::size_t B = x.dim(0), S = x.dim(1), H = x.dim(2);
  require(step < S, "select_step", "step out of range");
  Tensor<T> y({B, H});
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(x.value().ptr() + (b * S + step) * H, H, y.ptr() + b * H);
  }
  auto& tape = x.tape();
  return tape.record("select_step", std::move(y), x.requires_grad(), [=, &tape](std::size_t self) {
    const auto& g = tape.grad(self);
    auto& gx = tape.grad(x.id());
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < H; ++h) gx[(b * S + step) * H + h] += g[b * H + h];
    }
  });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights) {
  require(weights.shape == x.shape(), "weighted_sum", "weights must match the input shape");
  T s = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += x.value()[i] * weights[i];
  auto& tape = x.tape();
  return tape.record("weighted_sum", Tensor<T>({1}, s), x.requires_grad(), [=, &tape](std::size_t self) {
    const T g = tape.grad(self)[0];
    auto& gx = tape.grad(x.id());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
  });
}

#define NEURODECODE_INSTANTIATE(T)                                                                   \
  template Var<T> dense(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);                 \
  template Var<T> elu(const Var<T>&);                                                                \
  template Var<T> relu(const Var<T>&);                                                               \
  template Var<T> softmax(const Var<T>&);                                                            \
  template Var<T> dropout(const Var<T>&, double, bool, Rng*);                                        \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);                   \
  template Tensor<T> sinusoidal_positions(std::size_t, std::size_t);                                 \
  template Var<T> cross_entropy(const Var<T>&, std::span<const int>);                                \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> reshape(const Var<T>&, Shape);                                                     \
  template Var<T> transpose_last2(const Var<T>&);                                                    \
  template Var<T> mean_axis(const Var<T>&, std::size_t);                                             \
  template Var<T> select_step(const Var<T>&, std::size_t);                                           \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);

NEURODECODE_INSTANTIATE(float)
NEURODECODE_INSTANTIATE(double)
NEURODECODE_INSTANTIATE(long double)

#undef NEURODECODE_INSTANTIATE

}  // namespace neurodecode::ad
