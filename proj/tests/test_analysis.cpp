#include "report_checks.hpp"
#include "support.hpp"

#include "neurodecode/analysis.hpp"
#include "neurodecode/errors.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <set>

using namespace neurodecode;
using namespace neurodecode::analysis;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

train::RunHistory history_of(const std::vector<double>& acc, std::vector<int> restarts) {
  train::RunHistory h;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    train::EpochRecord r;
    r.epoch = static_cast<int>(i + 1);
    r.test_acc = acc[i];
    r.test_precision = acc[i] + 0.01;
    r.test_recall = acc[i] - 0.01;
    h.records.push_back(r);
  }
  h.restart_epochs = std::move(restarts);
  return h;
}

bool same_peak(const PeakMetric& a, const PeakMetric& b) {
  return a.value == b.value && a.epoch == b.epoch && a.cycle_index == b.cycle_index;
}

// Textbook paired t statistic in long double, two-pass.
long double textbook_t(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  long double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += static_cast<long double>(a[i]) - b[i];
  mean /= n;
  long double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i] - mean;
    ss += d * d;
  }
  return mean / (std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<long double>(n)));
}

ObjectAccuracyProfile random_profile(Rng& rng, std::size_t n = 429) {
  ObjectAccuracyProfile p;
  p.accuracy.resize(n);
  p.correct.resize(n);
  p.counts.assign(n, 12);
  for (std::size_t i = 0; i < n; ++i) {
    p.correct[i] = static_cast<int>(rng.below(13));
    p.accuracy[i] = p.correct[i] / 12.0;
  }
  return p;
}

train::LoadedRun synthetic_run(const std::string& arch, const std::string& size, std::uint64_t seed,
                               const std::filesystem::path& dir) {
  Rng rng(seed);
  train::LoadedRun run;
  run.dir = dir;
  run.info.arch = arch;
  run.info.size = size;
  run.info.label = arch == "csp_lda" ? "csp_lda" : arch + "/" + size;
  run.info.training_seconds = 100.0 + static_cast<double>(seed);
  std::vector<double> acc;
  const int epochs = arch == "csp_lda" ? 1 : 45;
  for (int e = 0; e < epochs; ++e) acc.push_back(0.5 + 0.1 * rng.uniform());
  run.history = history_of(acc, arch == "csp_lda" ? std::vector<int>{} : train::restart_epochs(15, 2, 45));
  if (arch == "csp_lda") run.history.records[0].epoch = 0;
  for (auto& r : run.history.records) r.train_acc = 0.6;
  const auto& catalog = data::concept_catalog();
  for (int t = 0; t < 600; ++t) {
    train::TrialPrediction p;
    p.trial_id = t;
    p.concept_id = static_cast<int>(rng.below(60));
    p.category = catalog[static_cast<std::size_t>(p.concept_id)].category;
    p.truth = catalog[static_cast<std::size_t>(p.concept_id)].label;
    p.predicted = rng.uniform() < 0.6 ? p.truth : 1 - p.truth;
    run.predictions.push_back(p);
  }
  return run;
}

}  // namespace

TEST_CASE("peak metric examples", "[peak]") {
  const auto flat = history_of(std::vector<double>(45, 0.57), {15, 45});
  for (const auto mode : {PeakMode::max_last5, PeakMode::mean_last5}) {
    CHECK(peak_metric(flat, mode).value == Catch::Approx(0.57).margin(1e-15));
  }

  std::vector<double> rising;
  for (int e = 1; e <= 15; ++e) rising.push_back((e - 1) / 14.0);
  const auto h = history_of(rising, {15});
  const auto mx = peak_metric(h, PeakMode::max_last5);
  CHECK(mx.value == 1.0);
  CHECK(mx.epoch == 15);
  CHECK(mx.cycle_index == 0);
  CHECK(mx.precision == Catch::Approx(1.01));
  const auto mean = peak_metric(h, PeakMode::mean_last5);
  CHECK(mean.value == Catch::Approx((10 + 11 + 12 + 13 + 14) / 14.0 / 5.0).margin(1e-15));
  CHECK(mean.epoch == 15);
  CHECK(mean.recall == Catch::Approx(mean.value - 0.01).margin(1e-12));
  CHECK(peak_metric(h, PeakMode::max_last5, Series::test_recall).value == Catch::Approx(0.99));

  // Truncated final cycle uses its own window; NaN epochs are skipped.
  std::vector<double> tail(20, 0.5);
  tail[19] = 0.9;
  tail[16] = kNaN;
  const auto partial = history_of(tail, {15, 20});
  const auto p = peak_metric(partial, PeakMode::max_last5);
  CHECK(p.value == 0.9);
  CHECK(p.cycle_index == 1);
  CHECK(peak_metric(partial, PeakMode::mean_last5).value == Catch::Approx((0.5 * 3 + 0.9) / 4.0));

  // Ties keep the earliest epoch.
  const auto tie = peak_metric(history_of({0.1, 0.7, 0.7, 0.2, 0.3}, {5}), PeakMode::max_last5);
  CHECK(tie.epoch == 2);

  // No restart list: one cycle ending at the last record.
  const auto baseline = peak_metric(history_of({0.52}, {}), PeakMode::mean_last5);
  CHECK(baseline.value == 0.52);
  CHECK(baseline.epoch == 1);

  CHECK_THROWS_AS(peak_metric(train::RunHistory{}, PeakMode::max_last5), DataError);
  CHECK_THROWS_AS(peak_metric(history_of({kNaN, kNaN}, {2}), PeakMode::max_last5), DataError);
}

TEST_CASE("peak metric ignores values outside the last-5 windows", "[peak][property]") {
  Rng rng(12);
  const auto ends = train::restart_epochs(15, 2, 945);
  std::set<int> in_window;
  for (const int e : ends) {
    for (int k = e - 4; k <= e; ++k) in_window.insert(k);
  }
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> acc(945);
    for (auto& v : acc) v = rng.uniform();
    const auto base = history_of(acc, ends);
    for (int e = 1; e <= 945; ++e) {
      if (!in_window.count(e)) acc[static_cast<std::size_t>(e - 1)] = rng.uniform() * 2.0;
    }
    const auto changed = history_of(acc, ends);
    for (const auto mode : {PeakMode::max_last5, PeakMode::mean_last5}) {
      const auto a = peak_metric(base, mode), b = peak_metric(changed, mode);
      CHECK(same_peak(a, b));
      if (mode == PeakMode::max_last5) CHECK(in_window.count(a.epoch) == 1);
      CHECK(a.epoch <= ends[static_cast<std::size_t>(a.cycle_index)]);
      CHECK(a.epoch >= ends[static_cast<std::size_t>(a.cycle_index)] - 4);
    }
  }
}

TEST_CASE("per-object accuracy", "[objects]") {
  std::vector<train::TrialPrediction> preds;
  for (int i = 0; i < 4; ++i) preds.push_back({i, 1, 7, "tool", 1, i < 3 ? 1 : 0});
  preds.push_back({4, 1, 2, "animal", 0, 0});
  const auto p = per_object_accuracy(preds);
  CHECK(p.size() == 429);
  CHECK(p.accuracy[7] == 0.75);
  CHECK(p.accuracy[2] == 1.0);
  CHECK(std::isnan(p.accuracy[0]));
  CHECK_FALSE(p.present(0));
  CHECK(p.total_trials() == preds.size());
  CHECK(p.missing().size() == 427);

  const std::vector<int> truth{0, 1, 1, 0}, pred = truth;
  std::vector<data::TrialMeta> meta(4);
  for (std::size_t i = 0; i < 4; ++i) meta[i].concept_id = static_cast<int>(i);
  const auto ones = per_object_accuracy(pred, truth, meta, 4);
  for (double a : ones.accuracy) CHECK(a == 1.0);
  CHECK_THROWS_AS(per_object_accuracy(pred, truth, meta, 3), DataError);
  CHECK_THROWS_AS(per_object_accuracy(std::vector<int>{1}, truth, meta, 4), DataError);
}

TEST_CASE("combining profiles", "[objects]") {
  ObjectAccuracyProfile a, b;
  a.accuracy = {1.0, 0.5, kNaN};
  a.correct = {1, 1, 0};
  a.counts = {1, 2, 0};
  b.accuracy = {0.0, 0.75, 1.0};
  b.correct = {0, 3, 1};
  b.counts = {3, 4, 1};
  const std::vector<ObjectAccuracyProfile> both{a, b};
  const auto mean = combine_profiles(both, Combine::mean_of_models);
  const auto pooled = combine_profiles(both, Combine::pooled);
  CHECK(mean.accuracy[0] == 0.5);
  CHECK(pooled.accuracy[0] == 0.25);
  CHECK(mean.accuracy[1] == 0.625);
  CHECK(pooled.accuracy[1] == Catch::Approx(4.0 / 6.0));
  CHECK(std::isnan(mean.accuracy[2]));
  CHECK_FALSE(pooled.present(2));
}

TEST_CASE("paired t-test matches the textbook formula", "[ttest][oracle]") {
  Rng rng(20);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 5 + rng.below(425);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform() + 0.02 * rng.normal();
    }
    const auto r = paired_ttest(a, b);
    const long double t = textbook_t(a, b);
    INFO("n " << n << " t " << r.t);
    CHECK(std::abs(r.t - static_cast<double>(t)) <= 1e-10);
    CHECK(r.df == static_cast<int>(n - 1));
    const auto swapped = paired_ttest(b, a);
    CHECK(swapped.t == -r.t);
    CHECK(swapped.p == r.p);
    CHECK(r.p >= 0.0);
    CHECK(r.p <= 1.0);
  }
}

TEST_CASE("two-sided p-values against a high-precision table", "[ttest][oracle]") {
  struct Row {
    double df, t, p;
  };
  const Row table[] = {
      {1, 0, 1.0},
      {1, 1, 0.5},
      {1, 2, 0.29516723530086654835},
      {10, 0, 1.0},
      {10, 1, 0.34089313230205987267},
      {10, 2, 0.073388034770740365618},
      {428, 0, 1.0},
      {428, 1, 0.31787552966541630111},
      {428, 2, 0.04613169357926246254},
  };
  for (const auto& row : table) {
    INFO("df " << row.df << " t " << row.t);
    CHECK(std::abs(two_sided_p(row.t, row.df) - row.p) < 1e-6);
    CHECK(two_sided_p(-row.t, row.df) == two_sided_p(row.t, row.df));
  }
  CHECK(two_sided_p(std::numeric_limits<double>::infinity(), 5) == 0.0);
  CHECK_THROWS_AS(two_sided_p(1.0, 0.0), NumericError);
}

TEST_CASE("t-test degrees of freedom and degenerate inputs", "[ttest]") {
  Rng rng(4);
  const auto a = random_profile(rng), b = random_profile(rng);
  const auto r = paired_ttest(a.accuracy, b.accuracy);
  CHECK(r.df == 428);

  const std::vector<double> x{0.1, 0.2, 0.3, 0.4};
  const auto same = paired_ttest(x, x);
  CHECK(same.t == 0.0);
  CHECK(same.p == 1.0);
  CHECK(same.degenerate);

  const std::vector<double> up{2, 3, 4, 5}, down{1, 2, 3, 4};
  const auto shifted = paired_ttest(up, down);
  CHECK(std::isinf(shifted.t));
  CHECK(shifted.t > 0);
  CHECK(shifted.p == 0.0);
  CHECK(shifted.degenerate);
  CHECK(paired_ttest(down, up).t < 0);

  CHECK_THROWS_AS(paired_ttest(x, std::vector<double>{1, 2}), ShapeError);
  CHECK_THROWS_AS(paired_ttest(std::vector<double>{1}, std::vector<double>{2}), ShapeError);
}

TEST_CASE("category table rows and aggregation", "[categories]") {
  const auto& cats = data::category_table();
  const auto& catalog = data::concept_catalog();
  // One category with objects at 0.4 and 0.6, everything else absent.
  ObjectAccuracyProfile p;
  p.accuracy.assign(429, kNaN);
  p.correct.assign(429, 0);
  p.counts.assign(429, 0);
  std::vector<int> picked;
  for (const auto& c : catalog) {
    if (c.category == cats[0].name && picked.size() < 2) picked.push_back(c.id);
  }
  REQUIRE(picked.size() == 2);
  p.accuracy[picked[0]] = 0.4;
  p.accuracy[picked[1]] = 0.6;
  p.counts[picked[0]] = p.counts[picked[1]] = 5;
  const auto single = category_table(p);
  REQUIRE(single.rows.size() == 3);
  CHECK(single.rows[0].category == cats[0].name);
  CHECK(single.rows[0].n_objects == 2);
  CHECK(single.rows[0].accuracy == Catch::Approx(0.5).margin(1e-15));
  CHECK(single.rows[1].category == "all");
  CHECK(single.rows[2].label == "Total");
  CHECK(single.rows[2].category.empty());
  CHECK(single.warnings.size() == cats.size() - 1);

  ObjectAccuracyProfile wrong;
  wrong.accuracy.assign(10, 0.5);
  wrong.counts.assign(10, 1);
  wrong.correct.assign(10, 0);
  CHECK_THROWS_AS(category_table(wrong), ShapeError);
}

TEST_CASE("category means reassemble the label and total means", "[categories][property]") {
  Rng rng(77);
  for (int rep = 0; rep < 10; ++rep) {
    const auto p = random_profile(rng);
    const auto table = category_table(p);
    CHECK(table.rows.size() == data::category_table().size() + 3);
    CHECK(table.warnings.empty());
    for (const std::string label : {"Alive", "Non-living"}) {
      double weighted = 0.0;
      int n = 0;
      double label_acc = kNaN;
      int label_n = 0;
      for (const auto& r : table.rows) {
        if (r.label != label) continue;
        if (r.category == "all") {
          label_acc = r.accuracy;
          label_n = r.n_objects;
        } else {
          weighted += r.accuracy * r.n_objects;
          n += r.n_objects;
        }
      }
      CHECK(n == label_n);
      CHECK(std::abs(weighted / n - label_acc) < 1e-9);
    }
    const auto& total = table.rows.back();
    CHECK(total.n_objects == 429);
    double mean = 0.0;
    for (double a : p.accuracy) mean += a;
    CHECK(std::abs(mean / 429.0 - total.accuracy) < 1e-9);
  }
  const auto& t = data::category_table();
  int alive = 0, nonliving = 0;
  for (const auto& c : t) (c.label == data::kAlive ? alive : nonliving) += c.n_objects;
  CHECK(alive == 214);
  CHECK(nonliving == 215);
}

TEST_CASE("object order sorts by mean accuracy with id tie-break", "[objects]") {
  ObjectAccuracyProfile a, b;
  a.accuracy = {0.5, 0.9, 0.5, kNaN, 0.1};
  a.counts = {1, 1, 1, 0, 1};
  a.correct = {0, 0, 0, 0, 0};
  b.accuracy = {0.5, 0.7, 0.5, 0.3, 0.3};
  b.counts = {1, 1, 1, 1, 1};
  b.correct = {0, 0, 0, 0, 0};
  const std::vector<ObjectAccuracyProfile> both{a, b};
  CHECK(object_order(both) == std::vector<int>{1, 0, 2, 4});
}

TEST_CASE("duration formatting", "[report]") {
  CHECK(format_duration(10059) == "2h 47m 39s");
  CHECK(format_duration(0) == "0h 0m 0s");
  CHECK(format_duration(59.6) == "0h 1m 0s");
}

TEST_CASE("report files follow the frozen layout", "[report]") {
  const auto dir = testing::scratch_dir("analysis_report");
  std::vector<train::LoadedRun> runs{synthetic_run("eegnet", "small", 1, dir / "a"),
                                     synthetic_run("conformer", "small", 2, dir / "b"),
                                     synthetic_run("csp_lda", "csp_lda", 3, dir / "c")};
  const auto out = dir / "report";
  std::filesystem::create_directories(out);
  const auto files = emit_report(runs, out);
  for (const char* name : {"metrics.csv", "peaks.csv", "training_curves.csv", "training_curves.svg",
                           "object_order.csv", "object_comparison.svg", "ttests.csv", "category_table.csv"}) {
    INFO(name);
    CHECK(std::filesystem::exists(out / name));
  }
  CHECK(testing::first_line(out / "metrics.csv") == kMetricsHeader);
  CHECK(testing::first_line(out / "peaks.csv") == kPeaksHeader);
  CHECK(testing::first_line(out / "training_curves.csv") == kCurvesHeader);
  CHECK(testing::first_line(out / "ttests.csv") == kTTestHeader);
  CHECK(testing::first_line(out / "category_table.csv") == kCategoryHeader);
  CHECK(testing::first_line(out / "object_order.csv").rfind(kObjectOrderHeader, 0) == 0);

  const auto metrics = testing::lines_of(out / "metrics.csv");
  REQUIRE(metrics.size() == 4);
  CHECK(metrics[1].rfind("eegnet,small,", 0) == 0);
  CHECK(metrics[3].rfind("csp_lda,", 0) == 0);
  CHECK(metrics[1].find(",0h 1m 41s,cross,max_last5,1") != std::string::npos);

  std::string error;
  CHECK(testing::well_formed_svg(out / "training_curves.svg", &error));
  CHECK(testing::well_formed_svg(out / "object_comparison.svg", &error));
  INFO(error);

  // Baseline excluded from the object comparison: two overlay lines.
  CHECK(testing::polyline_count(out / "object_comparison.svg") == 2);
  const auto bars = testing::background_bars(out / "object_comparison.svg");
  std::vector<ObjectAccuracyProfile> profiles{per_object_accuracy(runs[0].predictions),
                                              per_object_accuracy(runs[1].predictions)};
  const auto mean = combine_profiles(profiles);
  std::set<int> ids;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (mean.present(i)) ids.insert(static_cast<int>(i));
  }
  CHECK(testing::ordering_is_valid(bars, ids));
  for (const auto& [id, acc] : bars) CHECK(acc == Catch::Approx(mean.accuracy[id]).margin(1e-11));

  const auto ttests = testing::lines_of(out / "ttests.csv");
  REQUIRE(ttests.size() == 2);
  CHECK(ttests[1].find("," + std::to_string(ids.size() - 1) + "," + std::to_string(ids.size())) != std::string::npos);

  const auto cats = testing::lines_of(out / "category_table.csv");
  CHECK(cats.back().rfind("Total,,", 0) == 0);

  // Shuffled bars fail the ordering check.
  auto shuffled = bars;
  std::swap(shuffled.front(), shuffled.back());
  CHECK_FALSE(testing::ordering_is_valid(shuffled, ids));
}
