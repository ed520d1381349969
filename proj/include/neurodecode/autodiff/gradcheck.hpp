#pragma once

#include "neurodecode/autodiff/tape.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace neurodecode::ad {

// Builds a scalar loss from the parameters bound to the given tape. Must be
// deterministic: same parameters, same loss.
template <typename T>
using LossClosureT = std::function<Var<T>(Tape<T>&)>;
using LossClosure = LossClosureT<double>;

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every entry. Otherwise tensors larger than this are probed at
  // their largest-gradient entry plus seeded random entries, `limit` in total.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
  // With a wide reference, double-precision probes at or above this relative
  // error are repeated in the wide type before they count. Also the agreement
  // a kink-crossing probe needs to be kept.
  double refine_above = 1e-6;
};

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;
};

struct GradCheckReport {
  double max_error = 0.0;
  GradCheckEntry worst;
  std::size_t checked = 0;
  // Probes whose +/- step evaluations switched a relu branch and disagree by
  // at least refine_above. A central difference across a kink does not
  // estimate the derivative, so these are excluded (and replaced by another
  // entry when the tensor is sampled). Crossings that agree still count.
  std::size_t kink_skipped = 0;
  std::size_t refined = 0;  // probes repeated in the wide type
};

double relative_error(double analytic, double numeric);

// Gradients of the loss w.r.t. every parameter, one tensor per store entry.
std::vector<Tensor<double>> analytic_gradients(const LossClosure& loss, ParamStore<double>& params);

// Central finite differences against the supplied analytic gradients. The
// loss may be evaluated in a wider type than the analytic pass (same
// parameter values), which lowers the round-off floor of the reference.
// Throws Error if two evaluations at the same point disagree.
template <typename N>
GradCheckReport compare_gradients(const LossClosureT<N>& loss, ParamStore<N>& params,
                                  const std::vector<Tensor<double>>& analytic, const GradCheckOptions& opts = {});

// Screens every probe in double and repeats the doubtful ones against the
// same parameters held in long double. Both closures must compute the same
// function.
GradCheckReport compare_gradients(const LossClosure& loss, ParamStore<double>& params,
                                  const LossClosureT<long double>& wide_loss, ParamStore<long double>& wide_params,
                                  const std::vector<Tensor<double>>& analytic, const GradCheckOptions& opts = {});

// analytic_gradients + compare_gradients on the same closure.
GradCheckReport grad_check(const LossClosure& loss, ParamStore<double>& params, const GradCheckOptions& opts = {});

}  // namespace neurodecode::ad
