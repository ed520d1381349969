#include "neurodecode/autodiff/gradcheck.hpp"

#include "neurodecode/errors.hpp"
#include "neurodecode/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace neurodecode::ad {

namespace {

struct Evaluation {
  long double loss;
  std::uint64_t branches;
};

template <typename N>
Evaluation evaluate(const LossClosureT<N>& loss, ParamStore<N>& params) {
  Tape<N> tape(&params);
  const auto out = loss(tape);
  if (out.value().size() != 1) throw ShapeError("gradient check needs a scalar loss");
  return {static_cast<long double>(out.value()[0]), tape.branches()};
}

std::size_t largest_entry(const Tensor<double>& grad) {
  std::size_t top = 0;
  for (std::size_t i = 1; i < grad.size(); ++i) {
    if (std::abs(grad[i]) > std::abs(grad[top])) top = i;
  }
  return top;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

std::vector<Tensor<double>> analytic_gradients(const LossClosure& loss, ParamStore<double>& params) {
  params.zero_grad();
  Tape<double> tape(&params);
  const auto out = loss(tape);
  if (out.value().size() != 1) throw ShapeError("gradient check needs a scalar loss");
  tape.backward(out);
  std::vector<Tensor<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad);
  return grads;
}

namespace {

// One loss closure with its parameters and the branch signature of the
// unperturbed point.
template <typename N>
struct Probe {
  const LossClosureT<N>& loss;
  ParamStore<N>& params;
  std::uint64_t base_branches = 0;

  void check_deterministic() {
    const auto base = evaluate(loss, params);
    const auto again = evaluate(loss, params);
    if (again.loss != base.loss || again.branches != base.branches) {
      throw Error("gradient check closure is not deterministic: two forward passes disagree");
    }
    base_branches = base.branches;
  }

  struct Estimate {
    double numeric;
    bool crossed_kink;  // either side switched a branch
  };

  Estimate central(std::size_t p, std::size_t i, double step) {
    auto& value = params[p].value;
    const N saved = value[i];
    const N h = static_cast<N>(step);
    value[i] = saved + h;
    const auto up = evaluate(loss, params);
    value[i] = saved - h;
    const auto down = evaluate(loss, params);
    value[i] = saved;
    return {static_cast<double>((up.loss - down.loss) / (2.0L * static_cast<long double>(h))),
            up.branches != base_branches || down.branches != base_branches};
  }
};

template <typename N, typename W>
GradCheckReport run_check(Probe<N>& fast, Probe<W>* wide, const std::vector<Tensor<double>>& analytic,
                          const GradCheckOptions& opts) {
  auto& params = fast.params;
  if (analytic.size() != params.size()) throw ShapeError("one analytic gradient per parameter required");
  fast.check_deterministic();
  if (wide) {
    if (wide->params.size() != params.size()) throw ShapeError("wide reference has a different parameter layout");
    wide->check_deterministic();
  }
  Rng rng(opts.seed);
  GradCheckReport report;

  // A difference across a kink does not estimate the derivative, so such a
  // probe only counts when it agrees anyway. Returns false when it is excluded.
  auto probe = [&](std::size_t p, std::size_t i) {
    auto est = fast.central(p, i, opts.step);
    double err = relative_error(analytic[p][i], est.numeric);
    // The wide type takes the same step and would cross the same kink.
    if (wide && err >= opts.refine_above && !est.crossed_kink) {
      const auto w = wide->central(p, i, opts.step);
      est = {w.numeric, w.crossed_kink};
      err = relative_error(analytic[p][i], est.numeric);
      ++report.refined;
    }
    if (est.crossed_kink && err >= opts.refine_above) {
      ++report.kink_skipped;
      return false;
    }
    ++report.checked;
    if (err >= report.max_error) {
      report.max_error = err;
      report.worst = {params[p].name, i, analytic[p][i], est.numeric, err};
    }
    return true;
  };

  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::size_t n = params[p].value.size();
    if (analytic[p].size() != n) throw ShapeError("analytic gradient shape mismatch for " + params[p].name);
    const std::size_t limit = opts.max_entries_per_tensor;
    if (limit == 0 || n <= limit) {
      for (std::size_t i = 0; i < n; ++i) probe(p, i);
      continue;
    }
    std::vector<std::size_t> tried{largest_entry(analytic[p])};
    std::size_t valid = probe(p, tried[0]) ? 1 : 0;
    // Bounded redraws so a tensor that sits on kinks everywhere cannot stall the check.
    for (std::size_t attempts = 0; valid < limit && attempts < 4 * limit; ++attempts) {
      const std::size_t i = rng.below(n);
      if (std::find(tried.begin(), tried.end(), i) != tried.end()) continue;
      tried.push_back(i);
      if (probe(p, i)) ++valid;
    }
  }
  return report;
}

}  // namespace

template <typename N>
GradCheckReport compare_gradients(const LossClosureT<N>& loss, ParamStore<N>& params,
                                  const std::vector<Tensor<double>>& analytic, const GradCheckOptions& opts) {
  Probe<N> fast{loss, params};
  return run_check<N, N>(fast, nullptr, analytic, opts);
}

GradCheckReport compare_gradients(const LossClosure& loss, ParamStore<double>& params,
                                  const LossClosureT<long double>& wide_loss, ParamStore<long double>& wide_params,
                                  const std::vector<Tensor<double>>& analytic, const GradCheckOptions& opts) {
  Probe<double> fast{loss, params};
  Probe<long double> wide{wide_loss, wide_params};
  return run_check(fast, &wide, analytic, opts);
}

template GradCheckReport compare_gradients(const LossClosureT<double>&, ParamStore<double>&,
                                           const std::vector<Tensor<double>>&, const GradCheckOptions&);
template GradCheckReport compare_gradients(const LossClosureT<long double>&, ParamStore<long double>&,
                                           const std::vector<Tensor<double>>&, const GradCheckOptions&);

GradCheckReport grad_check(const LossClosure& loss, ParamStore<double>& params, const GradCheckOptions& opts) {
  const auto grads = analytic_gradients(loss, params);
  return compare_gradients(loss, params, grads, opts);
}

}  // namespace neurodecode::ad
