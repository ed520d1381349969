// Python bindings for the numeric core. Arrays cross the boundary as numpy;
// library exceptions map onto a small Python hierarchy.

#include "neurodecode/analysis.hpp"
#include "neurodecode/cli.hpp"
#include "neurodecode/csp_lda.hpp"
#include "neurodecode/dataset.hpp"
#include "neurodecode/errors.hpp"
#include "neurodecode/models.hpp"
#include "neurodecode/signal.hpp"
#include "neurodecode/training.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace neurodecode;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

// scipy layout: one row [b0 b1 b2 a0 a1 a2] per section.
py::array_t<double> sos_to_array(const std::vector<signal::SosSection>& sos) {
  py::array_t<double> out({static_cast<py::ssize_t>(sos.size()), py::ssize_t{6}});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < sos.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      m(i, k) = sos[i].b[k];
      m(i, 3 + k) = sos[i].a[k];
    }
  }
  return out;
}

std::vector<signal::SosSection> sos_from_array(const DoubleArray& arr) {
  if (arr.ndim() != 2 || arr.shape(1) != 6) throw ShapeError("sos must have shape (n_sections, 6)");
  auto m = arr.unchecked<2>();
  std::vector<signal::SosSection> sos(static_cast<std::size_t>(arr.shape(0)));
  for (std::size_t i = 0; i < sos.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      sos[i].b[k] = m(i, k);
      sos[i].a[k] = m(i, 3 + k);
    }
  }
  return sos;
}

std::span<const double> as_span(const DoubleArray& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

py::dict epoch_set_to_dict(const data::EpochSet& set) {
  const auto n = static_cast<py::ssize_t>(set.size());
  FloatArray x({n, static_cast<py::ssize_t>(set.n_channels), static_cast<py::ssize_t>(set.n_samples)});
  std::copy(set.tensor.begin(), set.tensor.end(), x.mutable_data());
  py::array_t<int> labels(n), subjects(n), concepts(n);
  py::array_t<std::int64_t> trial_ids(n);
  py::list categories, splits;
  for (py::ssize_t i = 0; i < n; ++i) {
    const auto& m = set.meta[static_cast<std::size_t>(i)];
    labels.mutable_at(i) = m.label;
    subjects.mutable_at(i) = m.subject;
    concepts.mutable_at(i) = m.concept_id;
    trial_ids.mutable_at(i) = m.trial_id;
    categories.append(m.category);
    splits.append(data::to_string(m.split));
  }
  py::dict d;
  d["X"] = x;
  d["labels"] = labels;
  d["subjects"] = subjects;
  d["concept_ids"] = concepts;
  d["trial_ids"] = trial_ids;
  d["categories"] = categories;
  d["splits"] = splits;
  return d;
}

struct Trials {
  std::size_t n = 0, channels = 0, samples = 0;
  const float* data = nullptr;
  std::span<const float> trial(std::size_t i) const { return {data + i * channels * samples, channels * samples}; }
};

Trials trials_of(const FloatArray& x) {
  if (x.ndim() != 3) throw ShapeError("epochs must have shape (trials, channels, samples)");
  return {static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1)),
          static_cast<std::size_t>(x.shape(2)), x.data()};
}

// CSP + LDA on raw arrays, labels 0/1. Returns test predictions and scores.
py::dict csp_lda_fit_predict(const FloatArray& x_train, const IntArray& y_train, const FloatArray& x_test, int m) {
  const auto tr = trials_of(x_train), te = trials_of(x_test);
  if (static_cast<std::size_t>(y_train.size()) != tr.n) throw ShapeError("one label per training trial is required");
  if (te.channels != tr.channels || te.samples != tr.samples) throw ShapeError("train and test epochs differ in shape");
  Eigen::MatrixXd sigma[2] = {Eigen::MatrixXd::Zero(tr.channels, tr.channels),
                              Eigen::MatrixXd::Zero(tr.channels, tr.channels)};
  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < tr.n; ++i) {
    const int y = y_train.data()[i];
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    sigma[y] += csp::normalized_covariance(tr.trial(i), tr.channels, tr.samples);
    ++count[y];
  }
  if (count[0] == 0 || count[1] == 0) throw DataError("both classes need training trials");
  const auto model = csp::fit_csp_covariances(sigma[0] / static_cast<double>(count[0]),
                                              sigma[1] / static_cast<double>(count[1]), m);
  auto features = [&](const Trials& t) {
    Eigen::MatrixXd f(t.n, 2 * m);
    for (std::size_t i = 0; i < t.n; ++i) f.row(i) = csp::csp_features(t.trial(i), t.channels, t.samples, model).transpose();
    return f;
  };
  const auto lda = csp::fit_lda(features(tr), {y_train.data(), tr.n});
  const auto test_features = features(te);
  py::array_t<int> pred(static_cast<py::ssize_t>(te.n));
  py::array_t<double> score(static_cast<py::ssize_t>(te.n));
  for (std::size_t i = 0; i < te.n; ++i) {
    const auto p = csp::predict(lda, test_features.row(i).transpose());
    pred.mutable_at(i) = p.label;
    score.mutable_at(i) = p.score;
  }
  py::dict d;
  d["predictions"] = pred;
  d["scores"] = score;
  d["eigenvalues"] = model.eigenvalues;
  d["filters"] = model.filters;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Numeric core of the neurodecode benchmark";

  // Translators run newest first, so the base class is registered first.
  auto& base = py::register_exception<Error>(mod, "NeurodecodeError");
  py::register_exception<ConfigError>(mod, "ConfigError", base.ptr());
  py::register_exception<DataError>(mod, "DataError", base.ptr());
  py::register_exception<ShapeError>(mod, "ShapeError", base.ptr());
  py::register_exception<NumericError>(mod, "NumericError", base.ptr());

  // signal
  mod.def("butterworth_bandpass",
          [](int order, double low, double high, double rate) {
            return sos_to_array(signal::butterworth_bandpass(order, low, high, rate));
          },
          py::arg("order"), py::arg("low_hz"), py::arg("high_hz"), py::arg("sample_rate"));
  mod.def("sosfiltfilt",
          [](const DoubleArray& sos, const DoubleArray& x) {
            if (x.ndim() != 1) throw ShapeError("sosfiltfilt expects a 1-d signal");
            const auto y = signal::sosfiltfilt(sos_from_array(sos), as_span(x));
            return py::array_t<double>(static_cast<py::ssize_t>(y.size()), y.data());
          },
          py::arg("sos"), py::arg("x"));
  mod.def("sos_gain",
          [](const DoubleArray& sos, double freq, double rate) {
            return std::abs(signal::sos_response(sos_from_array(sos), freq, rate));
          },
          py::arg("sos"), py::arg("freq_hz"), py::arg("sample_rate"));

  // data
  mod.def("generate_synthetic",
          [](const std::string& mode, std::size_t n_trials, int n_subjects, double snr, std::uint64_t seed) {
            data::SynthConfig cfg;
            cfg.mode = data::synth_mode_from_string(mode);
            cfg.n_trials = n_trials;
            cfg.n_subjects = n_subjects;
            cfg.snr = snr;
            cfg.seed = seed;
            return epoch_set_to_dict(data::generate_synthetic(cfg));
          },
          py::arg("mode") = "linear", py::arg("n_trials") = 1000, py::arg("n_subjects") = 1, py::arg("snr") = 1.0,
          py::arg("seed") = 0);
  mod.def("load_epochs", [](const std::string& path) { return epoch_set_to_dict(data::load_epoch_set(path)); },
          py::arg("path"));

  // csp + lda
  mod.def("fit_csp_covariances",
          [](const Eigen::MatrixXd& s0, const Eigen::MatrixXd& s1, int m) {
            const auto model = csp::fit_csp_covariances(s0, s1, m);
            return py::make_tuple(model.filters, model.eigenvalues);
          },
          py::arg("sigma0"), py::arg("sigma1"), py::arg("m") = 3);
  mod.def("csp_lda_fit_predict", &csp_lda_fit_predict, py::arg("x_train"), py::arg("y_train"), py::arg("x_test"),
          py::arg("m") = 3);

  // models
  mod.def("audit_params",
          [](double tolerance) {
            const auto report = models::audit_params(tolerance);
            py::list rows;
            for (const auto& r : report.rows) {
              py::dict d;
              d["arch"] = models::to_string(r.arch);
              d["size"] = models::to_string(r.size);
              d["target"] = r.target;
              d["actual"] = r.actual;
              d["ratio"] = r.ratio;
              d["within_budget"] = r.within_budget;
              rows.append(d);
            }
            py::dict out;
            out["rows"] = rows;
            out["ordering_ok"] = report.ordering_ok;
            return out;
          },
          py::arg("tolerance") = 0.3);
  mod.def("grad_check",
          [](const std::string& arch, const std::string& size, std::size_t entries, std::uint64_t seed,
             std::size_t batch) {
            ad::GradCheckOptions opts;
            opts.max_entries_per_tensor = entries;
            opts.seed = seed;
            const auto r = models::model_grad_check(models::arch_from_string(arch), models::size_from_string(size),
                                                    opts, batch);
            py::dict d;
            d["max_error"] = r.max_error;
            d["checked"] = r.checked;
            d["kink_skipped"] = r.kink_skipped;
            d["worst_tensor"] = r.worst.tensor;
            d["seconds"] = r.seconds;
            return d;
          },
          py::arg("arch"), py::arg("size"), py::arg("entries_per_tensor") = 8, py::arg("seed") = 0,
          py::arg("batch") = 4);

  // schedule
  mod.def("lr_at", &train::lr_at, py::arg("t_cur"), py::arg("t_i"), py::arg("eta_max"), py::arg("eta_min"));
  mod.def("restart_epochs", &train::restart_epochs, py::arg("t0"), py::arg("t_mult"), py::arg("total_epochs"));

  // statistics
  mod.def("paired_ttest",
          [](const DoubleArray& a, const DoubleArray& b) {
            const auto r = analysis::paired_ttest(as_span(a), as_span(b));
            py::dict d;
            d["t"] = r.t;
            d["p"] = r.p;
            d["df"] = r.df;
            d["degenerate"] = r.degenerate;
            return d;
          },
          py::arg("a"), py::arg("b"));
  mod.def("two_sided_p", &analysis::two_sided_p, py::arg("t"), py::arg("df"));

  // command line
  mod.def("run_cli",
          [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code = 0;
            {
              py::gil_scoped_release release;
              code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
          },
          py::arg("args"));
}
