#pragma once

#include "neurodecode/training.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace neurodecode::analysis {

// max_last5: best single epoch inside any last-5 window before a restart.
// mean_last5: best window mean over the restart cycles.
enum class PeakMode { max_last5, mean_last5 };

const char* to_string(PeakMode m);
PeakMode peak_mode_from_string(std::string_view s);

// Which recorded series a peak is taken over.
enum class Series { test_acc, test_precision, test_recall };

struct PeakMetric {
  double value = 0.0;
  int cycle_index = 0;  // 0-based index into the restart epochs
  int epoch = 0;        // argmax epoch (max_last5) or the cycle end (mean_last5)
  PeakMode mode = PeakMode::max_last5;
  // Companion series over the same epoch or window, for the metrics table.
  double precision = 0.0;
  double recall = 0.0;
};

// Windows are [e - 4, e] for every cycle end e, restricted to recorded
// epochs. Epochs without a test evaluation (NaN) are not recorded. A history
// without restart epochs is treated as one cycle ending at its last record.
// Throws DataError for an empty history or when no window holds a record.
PeakMetric peak_metric(const train::RunHistory& history, PeakMode mode, Series series = Series::test_acc);

struct ObjectAccuracyProfile {
  std::vector<double> accuracy;  // per concept id; NaN where the concept has no trials
  std::vector<int> correct;
  std::vector<int> counts;

  std::size_t size() const noexcept { return accuracy.size(); }
  bool present(std::size_t concept_id) const { return counts.at(concept_id) > 0; }
  std::size_t total_trials() const;
  std::vector<int> missing() const;  // concept ids without trials
};

// n_concepts defaults to the catalog size. Concept ids outside [0, n) throw.
ObjectAccuracyProfile per_object_accuracy(std::span<const train::TrialPrediction> predictions,
                                          std::size_t n_concepts = 0);
ObjectAccuracyProfile per_object_accuracy(std::span<const int> predicted, std::span<const int> truth,
                                          std::span<const data::TrialMeta> meta, std::size_t n_concepts = 0);

// How several models' profiles are merged for the category table.
enum class Combine {
  mean_of_models,  // per-object mean of the models' accuracies
  pooled,          // correct and trial counts summed over models
};

// Concepts missing from any profile stay missing in the result.
ObjectAccuracyProfile combine_profiles(std::span<const ObjectAccuracyProfile> profiles,
                                       Combine mode = Combine::mean_of_models);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
  // Zero variance of the differences: t is 0 (all equal, p = 1) or
  // +-infinity (constant nonzero difference, p = 0).
  bool degenerate = false;
};

// Paired two-sided Student t-test on a - b. Needs n >= 2 equal-length vectors.
TTest paired_ttest(std::span<const double> a, std::span<const double> b);

// Two-sided tail probability P(|T| >= |t|) with df degrees of freedom.
double two_sided_p(double t, double df);

struct CategoryRow {
  std::string label;     // "Alive", "Non-living" or "Total"
  std::string category;  // top-down category, "all" for label rows, empty for the total
  int n_objects = 0;
  double accuracy = 0.0;
};

struct CategoryTable {
  std::vector<CategoryRow> rows;
  std::vector<std::string> warnings;  // omitted empty categories
};

// Unweighted mean of per-object accuracies per category, per label and in
// total, over the concepts present in the profile. Categories come from the
// concept catalog.
CategoryTable category_table(const ObjectAccuracyProfile& profile);

// Concepts present in every profile, ordered by descending mean accuracy
// (ties by ascending id).
std::vector<int> object_order(std::span<const ObjectAccuracyProfile> profiles);

// "2h 47m 39s".
std::string format_duration(double seconds);

struct ReportOptions {
  Combine combine = Combine::mean_of_models;
};

struct ReportFiles {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> warnings;
};

// Writes metrics.csv, peaks.csv, training_curves.csv/.svg, object_order.csv,
// object_comparison.svg, ttests.csv and category_table.csv into out_dir.
// Object-level outputs use the trained runs, or every run when only
// baselines are given.
ReportFiles emit_report(std::span<const train::LoadedRun> runs, const std::filesystem::path& out_dir,
                        const ReportOptions& opts = {});

// Frozen CSV headers.
inline constexpr const char* kMetricsHeader =
    "model,size,accuracy,precision,recall,training_time,task,extraction,n_runs";
inline constexpr const char* kPeaksHeader = "run,model,size,task,extraction,value,cycle,epoch,precision,recall";
inline constexpr const char* kCurvesHeader = "model,size,task,epoch,n_runs,train_acc,test_acc";
inline constexpr const char* kObjectOrderHeader = "rank,concept_id,category,mean_accuracy";
inline constexpr const char* kTTestHeader = "model_a,model_b,t,p,df,n_objects";
inline constexpr const char* kCategoryHeader = "label,category,n_objects,accuracy";

}  // namespace neurodecode::analysis
