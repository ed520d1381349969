#include "common.hpp"

#include <cmath>
#include <utility>

namespace neurodecode::ad {

using detail::require;

namespace {

template <typename T>
T sigmoid(T v) {
  return T{1} / (T{1} + std::exp(-v));
}

template <typename T>
detail::StridedR<T> strided(T* base, std::size_t rows, std::size_t cols, std::size_t stride) {
  return detail::StridedR<T>(base, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
                             Eigen::OuterStride<>(static_cast<Eigen::Index>(stride)));
}

template <typename T>
detail::CStridedR<T> strided(const T* base, std::size_t rows, std::size_t cols, std::size_t stride) {
  return detail::CStridedR<T>(base, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
                              Eigen::OuterStride<>(static_cast<Eigen::Index>(stride)));
}

}  // namespace

template <typename T>
Var<T> lstm_layer(const Var<T>& x, const Var<T>& wih, const Var<T>& whh, const Var<T>& b) {
  constexpr const char* op = "lstm_layer";
  detail::require_rank(x, 3, op, "input");
  detail::require_rank(wih, 2, op, "input weights");
  detail::require_rank(whh, 2, op, "recurrent weights");
  const std::size_t B = x.dim(0), S = x.dim(1), D = x.dim(2);
  const std::size_t H = whh.dim(0);
  const std::size_t G = 4 * H;
  require(wih.dim(0) == D && wih.dim(1) == G && whh.dim(1) == G && b.shape() == Shape{G}, op,
          "weight shapes do not match input " + shape_string(x.shape()) + " and hidden size " + std::to_string(H));
  const std::size_t R = B * S;

  // Gate activations per (batch, step) row, laid out like the input rows.
  Tensor<T> gates({R, G});
  Tensor<T> cells({R, H});
  Tensor<T> y({B, S, H});
  {
    auto pre = detail::view(gates, R, G);
    pre.noalias() = detail::view(x.value(), R, D) * detail::view(wih.value(), D, G);
    pre.rowwise() += detail::view(b.value(), 1, G).row(0);
  }
  const auto Whh = detail::view(whh.value(), H, G);
  detail::MatR<T> a(B, G);
  for (std::size_t s = 0; s < S; ++s) {
    auto pre_s = strided(gates.ptr() + s * G, B, G, S * G);
    if (s > 0) {
      a.noalias() = strided(std::as_const(y).ptr() + (s - 1) * H, B, H, S * H) * Whh;
      pre_s += a;
    }
    for (std::size_t bi = 0; bi < B; ++bi) {
      T* gr = gates.ptr() + (bi * S + s) * G;
      T* cr = cells.ptr() + (bi * S + s) * H;
      T* hr = y.ptr() + (bi * S + s) * H;
      const T* c_prev = s > 0 ? cells.ptr() + (bi * S + s - 1) * H : nullptr;
      for (std::size_t h = 0; h < H; ++h) {
        const T i = sigmoid(gr[h]);
        const T f = sigmoid(gr[H + h]);
        const T g = std::tanh(gr[2 * H + h]);
        const T o = sigmoid(gr[3 * H + h]);
        gr[h] = i;
        gr[H + h] = f;
        gr[2 * H + h] = g;
        gr[3 * H + h] = o;
        cr[h] = i * g + (c_prev ? f * c_prev[h] : T{0});
        hr[h] = o * std::tanh(cr[h]);
      }
    }
  }

  auto& tape = x.tape();
  const bool rg = x.requires_grad() || wih.requires_grad() || whh.requires_grad() || b.requires_grad();
  return tape.record(op, std::move(y), rg, [=, &tape](std::size_t self) {
    const auto& gy = std::as_const(tape.grad(self));
    const auto& hv = tape.value(self);
    const auto Whh = detail::view(whh.value(), H, G);
    Tensor<T> dpre({R, G});
    detail::MatR<T> dh_next = detail::MatR<T>::Zero(B, H);
    detail::MatR<T> dc_next = detail::MatR<T>::Zero(B, H);
    for (std::size_t s = S; s-- > 0;) {
      for (std::size_t bi = 0; bi < B; ++bi) {
        const std::size_t r = bi * S + s;
        const T* gr = gates.ptr() + r * G;
        const T* cr = cells.ptr() + r * H;
        const T* c_prev = s > 0 ? cells.ptr() + (r - 1) * H : nullptr;
        T* dr = dpre.ptr() + r * G;
        for (std::size_t h = 0; h < H; ++h) {
          const T i = gr[h], f = gr[H + h], g = gr[2 * H + h], o = gr[3 * H + h];
          const T dh = gy[r * H + h] + dh_next(bi, h);
          const T tc = std::tanh(cr[h]);
          const T dc = dh * o * (T{1} - tc * tc) + dc_next(bi, h);
          dr[h] = dc * g * i * (T{1} - i);
          dr[H + h] = (c_prev ? dc * c_prev[h] : T{0}) * f * (T{1} - f);
          dr[2 * H + h] = dc * i * (T{1} - g * g);
          dr[3 * H + h] = dh * tc * o * (T{1} - o);
          dc_next(bi, h) = dc * f;
        }
      }
      const auto da = strided(std::as_const(dpre).ptr() + s * G, B, G, S * G);
      if (s > 0) {
        if (whh.requires_grad()) {
          detail::view(tape.grad(whh.id()), H, G).noalias() +=
              strided(hv.ptr() + (s - 1) * H, B, H, S * H).transpose() * da;
        }
        dh_next.noalias() = da * Whh.transpose();
      }
    }
    const auto dP = detail::view(std::as_const(dpre), R, G);
    if (wih.requires_grad()) {
      detail::view(tape.grad(wih.id()), D, G).noalias() += detail::view(x.value(), R, D).transpose() * dP;
    }
    if (b.requires_grad()) detail::view(tape.grad(b.id()), 1, G).row(0) += dP.colwise().sum();
    if (x.requires_grad()) {
      detail::view(tape.grad(x.id()), R, D).noalias() += dP * detail::view(wih.value(), D, G).transpose();
    }
  });
}

template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads) {
  constexpr const char* op = "attention";
  detail::require_rank(q, 3, op, "query");
  require(k.shape() == q.shape() && v.shape() == q.shape(), op, "q, k and v must share a shape");
  const std::size_t B = q.dim(0), S = q.dim(1), d = q.dim(2);
  require(heads > 0 && d % heads == 0, op, "width " + std::to_string(d) + " not divisible by heads");
  const std::size_t dh = d / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));

  Tensor<T> probs({B, heads, S, S});
  Tensor<T> y({B, S, d});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * S * d + h * dh;
      auto P = detail::view(probs, S, S, (b * heads + h) * S * S);
      P.noalias() = scale * strided(q.value().ptr() + off, S, dh, d) * strided(k.value().ptr() + off, S, dh, d).transpose();
      for (Eigen::Index r = 0; r < P.rows(); ++r) {
        P.row(r).array() -= P.row(r).maxCoeff();
        P.row(r) = P.row(r).array().exp().matrix();
        P.row(r) /= P.row(r).sum();
      }
      strided(y.ptr() + off, S, dh, d).noalias() = P * strided(v.value().ptr() + off, S, dh, d);
    }
  }

  auto& tape = q.tape();
  const bool rg = q.requires_grad() || k.requires_grad() || v.requires_grad();
  return tape.record(op, std::move(y), rg, [=, &tape](std::size_t self) {
    const auto& g = std::as_const(tape.grad(self));
    T* gq = q.requires_grad() ? tape.grad(q.id()).ptr() : nullptr;
    T* gk = k.requires_grad() ? tape.grad(k.id()).ptr() : nullptr;
    T* gv = v.requires_grad() ? tape.grad(v.id()).ptr() : nullptr;
    detail::MatR<T> dP(S, S);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = b * S * d + h * dh;
        const auto P = detail::view(probs, S, S, (b * heads + h) * S * S);
        const auto gO = strided(g.ptr() + off, S, dh, d);
        if (gv) strided(gv + off, S, dh, d).noalias() += P.transpose() * gO;
        if (!gq && !gk) continue;
        dP.noalias() = gO * strided(v.value().ptr() + off, S, dh, d).transpose();
        const auto rowdot = (dP.array() * P.array()).rowwise().sum().eval();
        dP = (P.array() * (dP.array().colwise() - rowdot)).matrix() * scale;
        if (gq) strided(gq + off, S, dh, d).noalias() += dP * strided(k.value().ptr() + off, S, dh, d);
        if (gk) strided(gk + off, S, dh, d).noalias() += dP.transpose() * strided(q.value().ptr() + off, S, dh, d);
      }
    }
  });
}

template <typename T>
Var<T> multi_head_attention(const Var<T>& x, const AttentionWeights<T>& w, std::size_t heads) {
  auto q = dense<T>(x, w.wq, w.bq);
  auto k = dense<T>(x, w.wk, w.bk);
  auto v = dense<T>(x, w.wv, w.bv);
  return dense<T>(attention<T>(q, k, v, heads), w.wo, w.bo);
}

#define NEURODECODE_INSTANTIATE(T)                                                             \
  template Var<T> lstm_layer(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&);      \
  template Var<T> attention(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t);         \
  template Var<T> multi_head_attention(const Var<T>&, const AttentionWeights<T>&, std::size_t);

NEURODECODE_INSTANTIATE(float)
NEURODECODE_INSTANTIATE(double)
NEURODECODE_INSTANTIATE(long double)

#undef NEURODECODE_INSTANTIATE

}  // namespace neurodecode::ad
