#include "common.hpp"

#include <cmath>
#include <utility>

namespace neurodecode::ad {

using detail::require;

template <typename T>
double power_iteration(const Tensor<T>& sym, int steps) {
  require(sym.rank() == 2 && sym.dim(0) == sym.dim(1), "power_iteration", "needs a square matrix");
  const std::size_t n = sym.dim(0);
  if (n == 0 || steps <= 0) return 0.0;
  const Eigen::MatrixXd m = detail::view(sym, n, n).template cast<double>();
  // Fixed start with components along every eigenvector in general position.
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = std::cos(0.7 * static_cast<double>(i) + 0.3) + 0.1;
  v.normalize();
  // Rayleigh-Ritz over the span of the power iterates v, Mv, ..., M^(steps-1) v
  // (orthonormalized as they are generated).
  const auto dim = std::min<Eigen::Index>(steps, static_cast<Eigen::Index>(n));
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(n), dim);
  basis.col(0) = v;
  Eigen::Index used = 1;
  for (; used < dim; ++used) {
    Eigen::VectorXd w = m * basis.col(used - 1);
    for (int pass = 0; pass < 2; ++pass) w -= basis.leftCols(used) * (basis.leftCols(used).transpose() * w);
    const double norm = w.norm();
    if (norm < 1e-12) break;
    basis.col(used) = w / norm;
  }
  const Eigen::MatrixXd q = basis.leftCols(used);
  const Eigen::MatrixXd projected = q.transpose() * m * q;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (projected + projected.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

template <typename T>
ScaledLaplacian<T> scaled_laplacian(const Tensor<T>& adjacency, const GraphConvOptions& opts) {
  require(adjacency.rank() == 2 && adjacency.dim(0) == adjacency.dim(1), "scaled_laplacian",
          "adjacency must be square, got " + shape_string(adjacency.shape));
  const std::size_t n = adjacency.dim(0);
  ScaledLaplacian<T> out;
  out.rectified = Tensor<T>({n, n});
  out.inv_sqrt_degree = Tensor<T>({n});
  out.laplacian = Tensor<T>({n, n});
  out.scaled = Tensor<T>({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const T s = (adjacency[i * n + j] + adjacency[j * n + i]) / T{2};
      out.rectified[i * n + j] = i != j && s > T{0} ? s : T{0};
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    T deg = 0;
    for (std::size_t j = 0; j < n; ++j) deg += out.rectified[i * n + j];
    out.inv_sqrt_degree[i] = T{1} / std::sqrt(deg + static_cast<T>(opts.degree_eps));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const T m = out.inv_sqrt_degree[i] * out.rectified[i * n + j] * out.inv_sqrt_degree[j];
      out.laplacian[i * n + j] = (i == j ? T{1} : T{0}) - m;
    }
  }
  out.lambda_max = opts.lambda_max ? *opts.lambda_max : power_iteration(out.laplacian, opts.power_steps);
  if (!(out.lambda_max > 1e-6) || !std::isfinite(out.lambda_max)) {
    throw NumericError("graph Laplacian has a degenerate spectral radius " + std::to_string(out.lambda_max));
  }
  const T factor = static_cast<T>(2.0 / out.lambda_max);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.scaled[i * n + j] = factor * out.laplacian[i * n + j] - (i == j ? T{1} : T{0});
    }
  }
  return out;
}

template <typename T>
Var<T> chebyshev_graph_conv(const Var<T>& x, const Var<T>& adjacency, const Var<T>& theta,
                            const GraphConvOptions& opts, double* lambda_used) {
  constexpr const char* op = "chebyshev_graph_conv";
  detail::require_rank(x, 3, op, "input");
  detail::require_rank(adjacency, 2, op, "adjacency");
  detail::require_rank(theta, 3, op, "theta");
  const std::size_t B = x.dim(0), N = x.dim(1), F = x.dim(2);
  const std::size_t K = theta.dim(0), H = theta.dim(2);
  require(adjacency.dim(0) == N && adjacency.dim(1) == N, op, "adjacency must be [nodes, nodes]");
  require(theta.dim(1) == F && K >= 1, op, "theta must be [K, features, out]");

  const auto lap = scaled_laplacian(adjacency.value(), opts);
  if (lambda_used) *lambda_used = lap.lambda_max;
  {
    // The rectification of the symmetrized adjacency is a relu.
    std::vector<T> sym(N * N);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j)
        sym[i * N + j] = i == j ? T{0} : adjacency.value()[i * N + j] + adjacency.value()[j * N + i];
    x.tape().note_branches(detail::mask_hash(sym));
  }
  const auto Lt = detail::view(lap.scaled, N, N);

  // Chebyshev terms stored as [K, B, N, F] so each order is one (B*N x F) block.
  const std::size_t block = B * N * F;
  Tensor<T> terms({K, B, N, F});
  std::copy(x.value().data.begin(), x.value().data.end(), terms.data.begin());
  for (std::size_t k = 1; k < K; ++k) {
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t off = b * N * F;
      auto Tk = detail::view(terms, N, F, k * block + off);
      Tk.noalias() = Lt * detail::view(std::as_const(terms), N, F, (k - 1) * block + off);
      if (k >= 2) {
        Tk *= T{2};
        Tk -= detail::view(std::as_const(terms), N, F, (k - 2) * block + off);
      }
    }
  }
  Tensor<T> y({B, N, H});
  auto Y = detail::view(y, B * N, H);
  for (std::size_t k = 0; k < K; ++k) {
    Y.noalias() += detail::view(std::as_const(terms), B * N, F, k * block) * detail::view(theta.value(), F, H, k * F * H);
  }

  auto& tape = x.tape();
  const bool rg = x.requires_grad() || adjacency.requires_grad() || theta.requires_grad();
  return tape.record(op, std::move(y), rg, [=, &tape](std::size_t self) {
    const auto G = detail::view(std::as_const(tape.grad(self)), B * N, H);
    const auto Lt = detail::view(lap.scaled, N, N);
    if (theta.requires_grad()) {
      auto& gt = tape.grad(theta.id());
      for (std::size_t k = 0; k < K; ++k) {
        detail::view(gt, F, H, k * F * H).noalias() += detail::view(terms, B * N, F, k * block).transpose() * G;
      }
    }
    if (!x.requires_grad() && !adjacency.requires_grad()) return;
    Tensor<T> dterms({K, B, N, F});
    for (std::size_t k = 0; k < K; ++k) {
      detail::view(dterms, B * N, F, k * block).noalias() = G * detail::view(theta.value(), F, H, k * F * H).transpose();
    }
    detail::MatR<T> dLt = detail::MatR<T>::Zero(N, N);
    for (std::size_t k = K; k-- > 1;) {
      const T c = k >= 2 ? T{2} : T{1};
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t off = b * N * F;
        const auto dTk = detail::view(std::as_const(dterms), N, F, k * block + off);
        detail::view(dterms, N, F, (k - 1) * block + off).noalias() += c * (Lt * dTk);
        if (k >= 2) detail::view(dterms, N, F, (k - 2) * block + off) -= dTk;
        if (adjacency.requires_grad()) {
          dLt.noalias() += c * (dTk * detail::view(terms, N, F, (k - 1) * block + off).transpose());
        }
      }
    }
    if (x.requires_grad()) {
      auto& gx = tape.grad(x.id());
      for (std::size_t i = 0; i < block; ++i) gx[i] += dterms[i];
    }
    if (!adjacency.requires_grad()) return;
    // L~ = 2 L / lambda - I, L = I - M, M_ij = dinv_i Ahat_ij dinv_j; lambda is held constant.
    const T to_m = static_cast<T>(-2.0 / lap.lambda_max);
    const auto& ahat = lap.rectified;
    const auto& dinv = lap.inv_sqrt_degree;
    std::vector<T> ddeg(N, T{0});
    detail::MatR<T> dahat(N, N);
    for (std::size_t i = 0; i < N; ++i) {
      T ddinv = 0;
      for (std::size_t j = 0; j < N; ++j) {
        const T dm_ij = to_m * dLt(i, j);
        const T dm_ji = to_m * dLt(j, i);
        dahat(i, j) = dm_ij * dinv[i] * dinv[j];
        ddinv += ahat[i * N + j] * dinv[j] * (dm_ij + dm_ji);
      }
      ddeg[i] = ddinv * T{-0.5} * dinv[i] * dinv[i] * dinv[i];
    }
    auto& ga = tape.grad(adjacency.id());
    const auto& av = adjacency.value();
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = 0; j < N; ++j) {
        if (i == j) continue;
        const T sym = (av[i * N + j] + av[j * N + i]) / T{2};
        if (!(sym > T{0})) continue;
        // Ahat_ij = Ahat_ji both depend on S_ij; split evenly onto A_ij and A_ji.
        const T ds = dahat(i, j) + ddeg[i];
        ga[i * N + j] += ds / T{2};
        ga[j * N + i] += ds / T{2};
      }
    }
  });
}

#define NEURODECODE_INSTANTIATE(T)                                                                      \
  template double power_iteration(const Tensor<T>&, int);                                               \
  template ScaledLaplacian<T> scaled_laplacian(const Tensor<T>&, const GraphConvOptions&);              \
  template Var<T> chebyshev_graph_conv(const Var<T>&, const Var<T>&, const Var<T>&, const GraphConvOptions&, \
                                       double*);

NEURODECODE_INSTANTIATE(float)
NEURODECODE_INSTANTIATE(double)
NEURODECODE_INSTANTIATE(long double)

#undef NEURODECODE_INSTANTIATE

}  // namespace neurodecode::ad
