#include "common.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace neurodecode::ad {

using detail::require;

template <typename T>
Var<T> conv_temporal(const Var<T>& x, const Var<T>& k, const std::optional<Var<T>>& bias, std::size_t groups,
                     Padding padding) {
  constexpr const char* op = "conv_temporal";
  detail::require_rank(x, 4, op, "input");
  detail::require_rank(k, 3, op, "kernel");
  detail::require_same_tape(x, k, op);
  const std::size_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), Tin = x.dim(3);
  const std::size_t Cout = k.dim(0), cpg = k.dim(1), K = k.dim(2);
  require(groups > 0 && Cin % groups == 0 && Cout % groups == 0 && cpg == Cin / groups, op,
          "kernel " + shape_string(k.shape()) + " incompatible with input " + shape_string(x.shape()) +
              " and " + std::to_string(groups) + " groups");
  if (bias) require(bias->shape() == Shape{Cout}, op, "bias must be [Cout]");
  require(padding == Padding::same || Tin >= K, op, "kernel longer than the input");
  const std::size_t opg = Cout / groups;
  const std::ptrdiff_t pad = padding == Padding::same ? static_cast<std::ptrdiff_t>((K - 1) / 2) : 0;
  const std::size_t Tout = padding == Padding::same ? Tin : Tin - K + 1;

  // Visits every (output row, input row, tap) triple with the valid time range.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t o = 0; o < Cout; ++o) {
        const std::size_t grp = o / opg;
        for (std::size_t ci = 0; ci < cpg; ++ci) {
          const std::size_t c = grp * cpg + ci;
          for (std::size_t h = 0; h < H; ++h) {
            const std::size_t xrow = ((b * Cin + c) * H + h) * Tin;
            const std::size_t yrow = ((b * Cout + o) * H + h) * Tout;
            for (std::size_t j = 0; j < K; ++j) {
              const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
              const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
              const std::ptrdiff_t hi =
                  std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(Tout), static_cast<std::ptrdiff_t>(Tin) - off);
              if (lo >= hi) continue;
              fn((o * cpg + ci) * K + j, xrow + static_cast<std::size_t>(lo + off), yrow + static_cast<std::size_t>(lo),
                 static_cast<std::size_t>(hi - lo));
            }
          }
        }
      }
    }
  };

  Tensor<T> y({B, Cout, H, Tout});
  const T* xv = x.value().ptr();
  const T* kv = k.value().ptr();
  T* yv = y.ptr();
  for_each_tap([&](std::size_t ki, std::size_t xo, std::size_t yo, std::size_t n) {
    const T w = kv[ki];
    for (std::size_t t = 0; t < n; ++t) yv[yo + t] += w * xv[xo + t];
  });
  if (bias) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t o = 0; o < Cout; ++o) {
        T* row = yv + (b * Cout + o) * H * Tout;
        const T bo = bias->value()[o];
        for (std::size_t i = 0; i < H * Tout; ++i) row[i] += bo;
      }
    }
  }

  auto& tape = x.tape();
  const bool rg = x.requires_grad() || k.requires_grad() || (bias && bias->requires_grad());
  return tape.record(op, std::move(y), rg, [=, &tape](std::size_t self) {
    const T* g = std::as_const(tape.grad(self)).ptr();
    const T* xin = x.value().ptr();
    const T* kin = k.value().ptr();
    T* gx = x.requires_grad() ? tape.grad(x.id()).ptr() : nullptr;
    T* gk = k.requires_grad() ? tape.grad(k.id()).ptr() : nullptr;
    for_each_tap([&](std::size_t ki, std::size_t xo, std::size_t yo, std::size_t n) {
      if (gk) {
        T acc = 0;
        for (std::size_t t = 0; t < n; ++t) acc += g[yo + t] * xin[xo + t];
        gk[ki] += acc;
      }
      if (gx) {
        const T w = kin[ki];
        for (std::size_t t = 0; t < n; ++t) gx[xo + t] += w * g[yo + t];
      }
    });
    if (bias && bias->requires_grad()) {
      auto& gb = tape.grad(bias->id());
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < Cout; ++o) {
          const T* row = g + (b * Cout + o) * H * Tout;
          T acc = 0;
          for (std::size_t i = 0; i < H * Tout; ++i) acc += row[i];
          gb[o] += acc;
        }
      }
    }
  });
}

template <typename T>
Var<T> conv_spatial(const Var<T>& x, const Var<T>& k, const std::optional<Var<T>>& bias, std::size_t groups) {
  constexpr const char* op = "conv_spatial";
  detail::require_rank(x, 4, op, "input");
  detail::require_rank(k, 3, op, "kernel");
  detail::require_same_tape(x, k, op);
  const std::size_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), Tn = x.dim(3);
  const std::size_t Cout = k.dim(0), cpg = k.dim(1);
  require(groups > 0 && Cin % groups == 0 && Cout % groups == 0 && cpg == Cin / groups && k.dim(2) == H, op,
          "kernel " + shape_string(k.shape()) + " incompatible with input " + shape_string(x.shape()));
  if (bias) require(bias->shape() == Shape{Cout}, op, "bias must be [Cout]");
  const std::size_t opg = Cout / groups;
  const std::size_t inner = cpg * H;

  Tensor<T> y({B, Cout, 1, Tn});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t grp = 0; grp < groups; ++grp) {
      auto Y = detail::view(y, opg, Tn, (b * Cout + grp * opg) * Tn);
      Y.noalias() = detail::view(k.value(), opg, inner, grp * opg * inner) *
                    detail::view(x.value(), inner, Tn, (b * Cin + grp * cpg) * H * Tn);
      if (bias) {
        for (std::size_t o = 0; o < opg; ++o) Y.row(static_cast<Eigen::Index>(o)).array() += bias->value()[grp * opg + o];
      }
    }
  }

  auto& tape = x.tape();
  const bool rg = x.requires_grad() || k.requires_grad() || (bias && bias->requires_grad());
  return tape.record(op, std::move(y), rg, [=, &tape](std::size_t self) {
    const auto& g = std::as_const(tape.grad(self));
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t grp = 0; grp < groups; ++grp) {
        const auto G = detail::view(g, opg, Tn, (b * Cout + grp * opg) * Tn);
        const std::size_t xoff = (b * Cin + grp * cpg) * H * Tn;
        const std::size_t koff = grp * opg * inner;
        if (k.requires_grad()) {
          detail::view(tape.grad(k.id()), opg, inner, koff).noalias() +=
              G * detail::view(x.value(), inner, Tn, xoff).transpose();
        }
        if (x.requires_grad()) {
          detail::view(tape.grad(x.id()), inner, Tn, xoff).noalias() +=
              detail::view(k.value(), opg, inner, koff).transpose() * G;
        }
        if (bias && bias->requires_grad()) {
          auto& gb = tape.grad(bias->id());
          for (std::size_t o = 0; o < opg; ++o) gb[grp * opg + o] += G.row(static_cast<Eigen::Index>(o)).sum();
        }
      }
    }
  });
}

template <typename T>
Var<T> conv_spatial_depthwise(const Var<T>& x, const Var<T>& k) {
  return conv_spatial<T>(x, k, std::nullopt, x.dim(1));
}

template <typename T>
Var<T> separable_conv(const Var<T>& x, const Var<T>& kd, const Var<T>& kp, Padding padding) {
  require(kp.value().rank() == 3 && kp.dim(2) == 1, "separable_conv", "pointwise kernel must be [Cout, C, 1]");
  auto depthwise = conv_temporal<T>(x, kd, std::nullopt, x.dim(1), padding);
  return conv_temporal<T>(depthwise, kp, std::nullopt, 1, Padding::valid);
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state,
                  bool training, double momentum, double eps) {
  constexpr const char* op = "batch_norm";
  require(x.value().rank() >= 2, op, "input needs a feature axis");
  const std::size_t B = x.dim(0), F = x.dim(1);
  const std::size_t inner = x.value().size() / (B * F);
  require(gamma.shape() == Shape{F} && beta.shape() == Shape{F}, op, "gamma/beta must be [features]");
  if (state.running_mean.empty()) state.running_mean = Tensor<T>({F}, T{0});
  if (state.running_var.empty()) state.running_var = Tensor<T>({F}, T{1});
  require(state.running_mean.size() == F && state.running_var.size() == F, op, "running statistics size mismatch");

  const std::size_t n = B * inner;
  if (training) require(n > 1, op, "training mode needs more than one value per feature");
  std::vector<T> mean(F), inv(F);
  const auto& xv = x.value();
  for (std::size_t f = 0; f < F; ++f) {
    using A = detail::Acc<T>;
    if (training) {
      A s = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* row = xv.ptr() + (b * F + f) * inner;
        for (std::size_t i = 0; i < inner; ++i) s += row[i];
      }
      const A m = s / static_cast<A>(n);
      A v = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* row = xv.ptr() + (b * F + f) * inner;
        for (std::size_t i = 0; i < inner; ++i) v += (row[i] - m) * (row[i] - m);
      }
      v /= static_cast<A>(n);
      mean[f] = static_cast<T>(m);
      inv[f] = static_cast<T>(A{1} / std::sqrt(v + static_cast<A>(eps)));
      const A mom = static_cast<A>(momentum);
      state.running_mean[f] = static_cast<T>((A{1} - mom) * state.running_mean[f] + mom * m);
      state.running_var[f] = static_cast<T>((A{1} - mom) * state.running_var[f] +
                                            mom * v * static_cast<A>(n) / static_cast<A>(n - 1));
    } else {
      mean[f] = state.running_mean[f];
      inv[f] = static_cast<T>(A{1} / std::sqrt(static_cast<A>(state.running_var[f]) + static_cast<A>(eps)));
    }
  }

  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t f = 0; f < F; ++f) {
      const std::size_t o = (b * F + f) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        xhat[o + i] = (xv[o + i] - mean[f]) * inv[f];
        y[o + i] = gamma.value()[f] * xhat[o + i] + beta.value()[f];
      }
    }
  }

  auto& tape = x.tape();
  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return tape.record(op, std::move(y), rg, [=, &tape](std::size_t self) {
    const auto& g = std::as_const(tape.grad(self));
    std::vector<T> sum_g(F, T{0}), sum_gx(F, T{0});
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t f = 0; f < F; ++f) {
        const std::size_t o = (b * F + f) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          sum_g[f] += g[o + i];
          sum_gx[f] += g[o + i] * xhat[o + i];
        }
      }
    }
    if (gamma.requires_grad()) {
      auto& gg = tape.grad(gamma.id());
      for (std::size_t f = 0; f < F; ++f) gg[f] += sum_gx[f];
    }
    if (beta.requires_grad()) {
      auto& gb = tape.grad(beta.id());
      for (std::size_t f = 0; f < F; ++f) gb[f] += sum_g[f];
    }
    if (!x.requires_grad()) return;
    auto& gx = tape.grad(x.id());
    const T nn = static_cast<T>(n);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t f = 0; f < F; ++f) {
        const std::size_t o = (b * F + f) * inner;
        const T scale = gamma.value()[f] * inv[f];
        for (std::size_t i = 0; i < inner; ++i) {
          if (training) {
            gx[o + i] += scale / nn * (nn * g[o + i] - sum_g[f] - xhat[o + i] * sum_gx[f]);
          } else {
            gx[o + i] += scale * g[o + i];
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> avg_pool_time(const Var<T>& x, std::size_t k) {
  constexpr const char* op = "avg_pool_time";
  require(x.value().rank() >= 1 && k > 0, op, "needs rank >= 1 and k > 0");
  const std::size_t Tin = x.shape().back();
  const std::size_t Tout = Tin / k;
  require(Tout > 0, op, "pool window " + std::to_string(k) + " exceeds length " + std::to_string(Tin));
  const std::size_t rows = x.value().size() / Tin;
  Shape shape = x.shape();
  shape.back() = Tout;
  Tensor<T> y(shape);
  const T scale = T{1} / static_cast<T>(k);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < Tout; ++t) {
      T s = 0;
      for (std::size_t j = 0; j < k; ++j) s += x.value()[r * Tin + t * k + j];
      y[r * Tout + t] = s * scale;
    }
  }
  auto& tape = x.tape();
  return tape.record(op, std::move(y), x.requires_grad(), [=, &tape](std::size_t self) {
    const auto& g = std::as_const(tape.grad(self));
    auto& gx = tape.grad(x.id());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t t = 0; t < Tout; ++t) {
        for (std::size_t j = 0; j < k; ++j) gx[r * Tin + t * k + j] += g[r * Tout + t] * scale;
      }
    }
  });
}

#define NEURODECODE_INSTANTIATE(T)                                                                               \
  template Var<T> conv_temporal(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, std::size_t, Padding); \
  template Var<T> conv_spatial(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, std::size_t);          \
  template Var<T> conv_spatial_depthwise(const Var<T>&, const Var<T>&);                                          \
  template Var<T> separable_conv(const Var<T>&, const Var<T>&, const Var<T>&, Padding);                          \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormState<T>&, bool, double,      \
                             double);                                                                            \
  template Var<T> avg_pool_time(const Var<T>&, std::size_t);

NEURODECODE_INSTANTIATE(float)
NEURODECODE_INSTANTIATE(double)
NEURODECODE_INSTANTIATE(long double)

#undef NEURODECODE_INSTANTIATE

}  // namespace neurodecode::ad
