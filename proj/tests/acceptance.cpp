// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 4 7        run the listed criteria
//
// Exit status is 0 iff every selected criterion passes.

#include "report_checks.hpp"
#include "signal_oracle.hpp"

#include "neurodecode/analysis.hpp"
#include "neurodecode/cli.hpp"
#include "neurodecode/csp_lda.hpp"
#include "neurodecode/dataset.hpp"
#include "neurodecode/errors.hpp"
#include "neurodecode/models.hpp"
#include "neurodecode/training.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

using namespace neurodecode;

namespace {

// Synthetic settings fixed by pilot runs.
constexpr double kXorSnr = 1.0;
constexpr std::uint64_t kXorSeed = 11;
constexpr std::size_t kSubjectTrials = 1000;
constexpr int kSubjectEpochs = 15;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const std::filesystem::path&)> check;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs the CLI in-process; throws with its stderr on a nonzero exit.
void cli_ok(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) {
    std::string cmd;
    for (const auto& a : args) cmd += " " + a;
    throw std::runtime_error("neurodecode" + cmd + " exited " + std::to_string(code) + ": " + err.str());
  }
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double final_test_acc(const std::filesystem::path& run) {
  const auto r = train::load_run(run);
  if (r.history.records.empty()) throw DataError("run has no history: " + run.string());
  return r.history.records.back().test_acc;
}

Outcome gradient_integrity(const std::filesystem::path&) {
  const auto t0 = std::chrono::steady_clock::now();
  ad::GradCheckOptions opts;  // step 1e-5
  opts.max_entries_per_tensor = 8;
  double worst = 0.0;
  std::string worst_build;
  std::size_t probes = 0;
  for (const auto arch : models::kArchs) {
    for (const auto size : models::kSizes) {
      const auto r = models::model_grad_check(arch, size, opts, 4);
      probes += r.checked;
      if (r.max_error >= worst) {
        worst = r.max_error;
        worst_build = std::string(models::to_string(arch)) + "/" + models::to_string(size);
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 600.0,
          fmt("15 builds, %zu probes, max rel err %.3g (%s), %.0f s", probes, worst, worst_build.c_str(), secs)};
}

Outcome parameter_audit(const std::filesystem::path&) {
  const auto rep = models::audit_params(0.3);
  std::string off;
  for (const auto& r : rep.rows) {
    if (!r.within_budget) off += fmt(" %s/%s=%.2f", models::to_string(r.arch), models::to_string(r.size), r.ratio);
  }
  return {rep.rows.size() == 15 && rep.within_budget >= 12 && rep.ordering_ok,
          fmt("%d/15 within 30%%, ordering %s%s", rep.within_budget, rep.ordering_ok ? "ok" : "broken",
              off.empty() ? "" : (", outside:" + off).c_str())};
}

Outcome scheduler(const std::filesystem::path&) {
  const bool ends = train::restart_epochs(15, 2, 945) == std::vector<int>{15, 45, 105, 225, 465, 945};
  const double hi = 0.05, lo = 1e-6;
  double worst = 0.0;
  for (const double ti : {15.0, 30.0, 60.0, 120.0, 240.0, 480.0}) {
    worst = std::max(worst, std::abs(train::lr_at(0.0, ti, hi, lo) - hi));
    worst = std::max(worst, std::abs(train::lr_at(ti, ti, hi, lo) - lo));
    worst = std::max(worst, std::abs(train::lr_at(ti / 2, ti, hi, lo) - 0.5 * (hi + lo)));
  }
  return {ends && worst <= 1e-12, fmt("restart epochs %s, worst boundary deviation %.2g", ends ? "match" : "differ", worst)};
}

Outcome dissociation(const std::filesystem::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = (dir / "xor.eegb").string();
  const auto seed = std::to_string(kXorSeed);
  cli_ok({"synth", "--mode", "xor", "--trials", "5000", "--snr", fmt("%g", kXorSnr), "--seed", seed, "--out", data});
  const auto set = data::load_epoch_set(data);
  const auto n_train = data::indices_of(set, data::Split::train).size();
  const auto n_test = data::indices_of(set, data::Split::test).size();
  cli_ok({"baseline", "--data", data, "--seed", seed, "--out", (dir / "xor_csp").string()});
  cli_ok({"train", "--data", data, "--arch", "eegnet", "--size", "small", "--epochs", "45", "--seed", seed, "--quiet",
          "--out", (dir / "xor_eegnet").string()});
  const double csp = final_test_acc(dir / "xor_csp"), net = final_test_acc(dir / "xor_eegnet");
  const double secs = seconds_since(t0);
  const bool split_ok = n_train == 4000 && n_test == 1000;
  return {split_ok && csp >= 0.47 && csp <= 0.53 && net >= 0.60 && net - csp >= 0.15 && secs < 900.0,
          fmt("%zu/%zu trials, csp_lda %.4f, eegnet/small %.4f, gap %.4f, %.0f s", n_train, n_test, csp, net, net - csp,
              secs)};
}

Outcome linear_sanity(const std::filesystem::path& dir) {
  const auto linear = (dir / "linear.eegb").string();
  cli_ok({"synth", "--mode", "linear", "--trials", "2500", "--snr", "1", "--seed", "5", "--out", linear});
  cli_ok({"baseline", "--data", linear, "--seed", "5", "--out", (dir / "linear_csp").string()});
  const double csp = final_test_acc(dir / "linear_csp");

  const auto subj = (dir / "subject.eegb").string();
  cli_ok({"synth", "--mode", "subject", "--subjects", "4", "--trials", std::to_string(kSubjectTrials), "--snr", "1",
          "--seed", "6", "--out", subj});
  cli_ok({"train", "--data", subj, "--arch", "eegnet", "--size", "small", "--target", "subject", "--epochs",
          std::to_string(kSubjectEpochs), "--seed", "6", "--quiet", "--out", (dir / "subject_eegnet").string()});
  const double net = final_test_acc(dir / "subject_eegnet");
  return {csp >= 0.95 && net >= 0.95, fmt("linear csp_lda %.4f, 4-subject eegnet/small %.4f", csp, net)};
}

Eigen::MatrixXd random_spd(Eigen::Index n, Rng& rng) {
  const Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(n, 2 * n, [&] { return rng.normal(); });
  return b * b.transpose() / static_cast<double>(2 * n) + 1e-3 * Eigen::MatrixXd::Identity(n, n);
}

Outcome csp_algebra(const std::filesystem::path&) {
  Rng rng(606);
  double diag = 0.0, swap = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::MatrixXd s0 = random_spd(63, rng), s1 = random_spd(63, rng);
    const auto m = csp::fit_csp_covariances(s0, s1, 3);
    const Eigen::MatrixXd& w = m.all_filters;
    const Eigen::MatrixXd resid = w * (s0 + s1) * w.transpose() - Eigen::MatrixXd::Identity(63, 63);
    diag = std::max(diag, resid.cwiseAbs().rowwise().sum().maxCoeff());
    const auto sw = csp::fit_csp_covariances(s1, s0, 3);
    for (Eigen::Index i = 0; i < 63; ++i) {
      swap = std::max(swap, std::abs(sw.eigenvalues(i) - (1.0 - m.eigenvalues(62 - i))));
    }
  }
  return {diag < 1e-8 && swap < 1e-9, fmt("100 pairs: diagonalization residual %.2g, swap deviation %.2g", diag, swap)};
}

Outcome filter_response(const std::filesystem::path&) {
  const double g10 = testing::gain_at(10.0, 10.0), g60 = testing::gain_at(60.0, 10.0);
  const double g01 = testing::gain_at(0.1, 100.0);
  const int lag = testing::filter_lag();
  return {g10 >= 0.9 && g60 <= 0.1 && g01 <= 0.1 && lag == 0,
          fmt("gain 10 Hz %.4f, 60 Hz %.2g, 0.1 Hz %.2g, lag %d", g10, g60, g01, lag)};
}

Outcome statistics_oracle(const std::filesystem::path&) {
  Rng rng(808);
  double worst_t = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 429;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform();
    }
    long double mean = 0, ss = 0;
    for (std::size_t i = 0; i < n; ++i) mean += static_cast<long double>(a[i]) - b[i];
    mean /= n;
    for (std::size_t i = 0; i < n; ++i) {
      const long double d = static_cast<long double>(a[i]) - b[i] - mean;
      ss += d * d;
    }
    const long double t = mean / (std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<long double>(n)));
    worst_t = std::max(worst_t, std::abs(analysis::paired_ttest(a, b).t - static_cast<double>(t)));
  }
  struct Row {
    double df, t, p;
  };
  const Row table[] = {{1, 0, 1.0},
                       {1, 1, 0.5},
                       {1, 2, 0.29516723530086654835},
                       {10, 0, 1.0},
                       {10, 1, 0.34089313230205987267},
                       {10, 2, 0.073388034770740365618},
                       {428, 0, 1.0},
                       {428, 1, 0.31787552966541630111},
                       {428, 2, 0.04613169357926246254}};
  double worst_p = 0.0;
  for (const auto& r : table) worst_p = std::max(worst_p, std::abs(analysis::two_sided_p(r.t, r.df) - r.p));
  const std::vector<double> x(429, 0.5);
  std::vector<double> y(429);
  for (auto& v : y) v = rng.uniform();
  const int df = analysis::paired_ttest(x, y).df;
  return {worst_t <= 1e-10 && worst_p < 1e-6 && df == 428,
          fmt("t deviation %.2g over 20 pairs, p deviation %.2g over 9 references, df %d", worst_t, worst_p, df)};
}

Outcome determinism(const std::filesystem::path& dir) {
  std::string files[2][3];
  for (int rep = 0; rep < 2; ++rep) {
    const auto d = dir / ("det" + std::to_string(rep));
    std::filesystem::create_directories(d);
    const auto data = (d / "x.eegb").string();
    cli_ok({"synth", "--mode", "xor", "--trials", "300", "--seed", "21", "--out", data});
    cli_ok({"train", "--data", data, "--arch", "eegnet", "--size", "small", "--epochs", "3", "--seed", "21", "--quiet",
            "--out", (d / "run").string()});
    std::ostringstream out, err;
    if (cli::run({"eval", "--run", (d / "run").string()}, out, err) != 0) throw std::runtime_error(err.str());
    files[rep][0] = slurp(data);
    files[rep][1] = slurp(d / "run" / "history.jsonl");
    files[rep][2] = out.str();
  }
  const bool epochs = files[0][0] == files[1][0], history = files[0][1] == files[1][1], eval = files[0][2] == files[1][2];
  return {epochs && history && eval && !files[0][1].empty(),
          fmt("epoch file %s, history %s, eval output %s", epochs ? "identical" : "differs",
              history ? "identical" : "differs", eval ? "identical" : "differs")};
}

FormatErrorKind load_kind(const std::function<void()>& load) {
  try {
    load();
  } catch (const FormatError& e) {
    return e.kind();
  }
  throw std::runtime_error("corrupted file loaded without error");
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes;
}

Outcome round_trips(const std::filesystem::path& dir) {
  data::SynthConfig cfg;
  cfg.n_trials = 40;
  cfg.seed = 3;
  const auto set = data::split(data::generate_synthetic(cfg), 0.2, 1);
  const auto ep = dir / "rt.eegb";
  data::save_epoch_set(set, ep);
  const bool set_ok = data::load_epoch_set(ep) == set;
  data::save_epoch_set(data::load_epoch_set(ep), dir / "rt2.eegb");
  const bool set_bytes = slurp(ep) == slurp(dir / "rt2.eegb");

  bool ckpt_ok = true;
  for (const auto arch : models::kArchs) {
    models::Model<float> m(models::ModelSpec::make(arch, models::Size::small), 5);
    const auto p = dir / (std::string(models::to_string(arch)) + ".ckpt");
    models::save_checkpoint(m, p);
    auto back = models::load_checkpoint(p);
    for (std::size_t i = 0; i < m.params().size(); ++i) ckpt_ok = ckpt_ok && back.params()[i].value == m.params()[i].value;
    models::save_checkpoint(back, dir / "again.ckpt");
    ckpt_ok = ckpt_ok && slurp(p) == slurp(dir / "again.ckpt");
  }

  // The three header corruptions, on both containers.
  std::set<FormatErrorKind> kinds;
  bool distinct = true;
  for (const auto& [path, load] :
       {std::pair<std::filesystem::path, std::function<void(const std::filesystem::path&)>>{
            ep, [](const auto& p) { data::load_epoch_set(p); }},
        {dir / "eegnet.ckpt", [](const auto& p) { models::load_checkpoint(p); }}}) {
    const std::string good = slurp(path);
    std::string magic = good, version = good, truncated = good;
    magic[0] = 'X';
    version[4] = 9;
    truncated.resize(good.size() - 5);
    std::vector<FormatErrorKind> seen;
    for (const auto* bytes : {&magic, &version, &truncated}) {
      const auto bad = dir / "corrupt.bin";
      write_bytes(bad, *bytes);
      seen.push_back(load_kind([&] { load(bad); }));
    }
    distinct = distinct && seen == std::vector<FormatErrorKind>{FormatErrorKind::bad_magic,
                                                                 FormatErrorKind::version_mismatch,
                                                                 FormatErrorKind::truncated_payload};
    kinds.insert(seen.begin(), seen.end());
  }
  return {set_ok && set_bytes && ckpt_ok && distinct && kinds.size() == 3,
          fmt("epoch set %s, checkpoints %s, corrupted headers -> %zu distinct errors", set_ok && set_bytes ? "exact" : "differ",
              ckpt_ok ? "exact" : "differ", kinds.size())};
}

Outcome report_conformance(const std::filesystem::path& dir) {
  const auto data = (dir / "report.eegb").string();
  cli_ok({"synth", "--mode", "linear", "--trials", "400", "--seed", "31", "--out", data});
  for (const char* arch : {"eegnet", "dgcnn"}) {
    cli_ok({"train", "--data", data, "--arch", arch, "--size", "small", "--epochs", "5", "--seed", "31", "--quiet",
            "--out", (dir / arch).string()});
  }
  const auto out = dir / "report";
  cli_ok({"analyze", "--runs", (dir / "eegnet").string() + "," + (dir / "dgcnn").string(), "--out", out.string()});

  std::vector<std::string> problems;
  if (testing::first_line(out / "metrics.csv") != analysis::kMetricsHeader) problems.push_back("metrics header");
  if (testing::lines_of(out / "metrics.csv").size() != 3) problems.push_back("metrics rows");
  if (testing::first_line(out / "category_table.csv") != analysis::kCategoryHeader) problems.push_back("category header");
  for (const char* svg : {"training_curves.svg", "object_comparison.svg"}) {
    if (!testing::well_formed_svg(out / svg)) problems.push_back(std::string(svg) + " not well-formed");
  }
  std::vector<analysis::ObjectAccuracyProfile> profiles;
  for (const char* arch : {"eegnet", "dgcnn"}) {
    profiles.push_back(analysis::per_object_accuracy(train::load_run(dir / arch).predictions));
  }
  const auto mean = analysis::combine_profiles(profiles);
  std::set<int> ids;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (mean.present(i)) ids.insert(static_cast<int>(i));
  }
  const auto bars = testing::background_bars(out / "object_comparison.svg");
  if (!testing::ordering_is_valid(bars, ids)) problems.push_back("object ordering");
  std::string detail = fmt("%zu objects ordered, %zu overlay lines", bars.size(),
                           testing::polyline_count(out / "object_comparison.svg"));
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  std::string work;
  app.add_option("criteria", selected, "Criterion numbers (default: all)");
  app.add_option("--work", work, "Scratch directory (default: system temp)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "gradient integrity", gradient_integrity},
      {2, "parameter audit", parameter_audit},
      {3, "scheduler", scheduler},
      {4, "linear/nonlinear dissociation", dissociation},
      {5, "linear sanity", linear_sanity},
      {6, "CSP algebra", csp_algebra},
      {7, "filter response", filter_response},
      {8, "statistics oracle", statistics_oracle},
      {9, "determinism", determinism},
      {10, "format round-trips", round_trips},
      {11, "report conformance", report_conformance},
  };
  if (selected.empty()) {
    for (const auto& c : criteria) selected.push_back(c.id);
  }
  const std::filesystem::path root =
      work.empty() ? std::filesystem::temp_directory_path() / "neurodecode_acceptance" : std::filesystem::path(work);

  int failed = 0;
  for (const int id : selected) {
    const auto it = std::find_if(criteria.begin(), criteria.end(), [&](const auto& c) { return c.id == id; });
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << id << "\n";
      return 1;
    }
    const auto dir = root / ("criterion_" + std::to_string(id));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    Outcome o;
    try {
      o = it->check(dir);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << it->name << ": " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
