#pragma once

#include "neurodecode/dataset.hpp"
#include "neurodecode/metrics.hpp"
#include "neurodecode/models.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace neurodecode::train {

// Cosine annealing with warm restarts.
struct Schedule {
  int t0 = 15;
  int t_mult = 2;
  double eta_max = 0.05;
  double eta_min = 1e-6;
};

struct TrainConfig {
  std::size_t batch_size = 128;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  Schedule schedule;
  int epochs = 945;
  std::uint64_t seed = 0;
  int eval_every = 1;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

inline constexpr int kCrossSubjectEpochs = 945;
inline constexpr int kSingleSubjectEpochs = 460;

// eta_min + (eta_max - eta_min)(1 + cos(pi t_cur / t_i)) / 2.
double lr_at(double t_cur, double t_i, double eta_max, double eta_min);

// Cumulative cycle ends t0, t0 + t0 t_mult, ... The last entry is
// total_epochs when the final cycle is cut short.
std::vector<int> restart_epochs(int t0, int t_mult, int total_epochs);

// Learning rate used throughout 1-based epoch `epoch`: the schedule is stepped
// once per epoch, so the first epoch of every cycle runs at eta_max.
double lr_for_epoch(const Schedule& s, int epoch);

// Coupled L2 SGD with momentum: g' = g + wd theta; v = mu v + g'; theta -= lr v.
// Throws NumericError if an update is not finite.
template <typename T>
void sgd_step(ad::ParamStore<T>& params, double lr, double momentum, double weight_decay);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double test_precision = 0.0;  // macro
  double test_recall = 0.0;     // macro
  std::vector<double> test_class_precision;
  std::vector<double> test_class_recall;

  nlohmann::json to_json() const;
  static EpochRecord from_json(const nlohmann::json& j);
  bool operator==(const EpochRecord&) const = default;
};

struct RunHistory {
  std::vector<EpochRecord> records;
  std::vector<int> restart_epochs;
  nlohmann::json config;      // TrainConfig snapshot
  nlohmann::json model_spec;  // ModelSpec descriptor
};

struct Evaluation {
  ClassificationMetrics metrics;
  std::vector<int> predictions;  // aligned with the evaluated trials
};

// Eval-mode predictions (argmax of the logits) for the given trials.
std::vector<int> predict(models::Model<float>& model, const data::EpochSet& set, std::span<const std::size_t> trials,
                         std::size_t batch_size = 128);

Evaluation evaluate(models::Model<float>& model, const data::EpochSet& set, std::span<const std::size_t> trials,
                    std::span<const int> targets, int n_classes, std::size_t batch_size = 128);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains on the train split of `set` and evaluates on its test split after
// every epoch. targets[i] is the class of trial i. Deterministic given the
// config seed, the model's initial state and the data.
RunHistory train(models::Model<float>& model, const data::EpochSet& set, const data::Targets& targets,
                 const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// --- run directories -------------------------------------------------------
//
// run_dir/config.json      train config, model spec, task, target, restart epochs
// run_dir/history.jsonl    one EpochRecord per line
// run_dir/model.ckpt       final parameters (trained models only)
// run_dir/predictions.csv  final test-split predictions
// run_dir/manifest.json    wall-clock training time and file list

struct RunInfo {
  std::string label;  // e.g. "eegnet/small" or "csp_lda"
  std::string arch;
  std::string size;
  std::string task = "cross";
  std::string target = "animacy";
  std::string data_path;
  double training_seconds = 0.0;
  // Extra fields merged into manifest.json (command line, seed, timestamps).
  nlohmann::json provenance = nlohmann::json::object();
};

struct TrialPrediction {
  std::int64_t trial_id = 0;
  int subject = 0;
  int concept_id = 0;
  std::string category;
  int truth = 0;
  int predicted = 0;
};

void write_run(const std::filesystem::path& dir, const RunInfo& info, const RunHistory& history,
               std::span<const TrialPrediction> predictions, const models::Model<float>* model);

struct LoadedRun {
  std::filesystem::path dir;
  RunInfo info;
  RunHistory history;
  std::vector<TrialPrediction> predictions;
};

// Throws DataError naming the missing or malformed file.
LoadedRun load_run(const std::filesystem::path& dir);

// Full training job: builds the model from `spec` (initialized from the
// config seed), trains, evaluates and writes the run directory.
// Single-subject jobs must use small models and always train with dropout 0.5.
struct TrainJob {
  models::ModelSpec spec;
  TrainConfig config;
  data::TaskSpec task;
  data::Target target = data::Target::animacy;
  std::string data_path;
  std::filesystem::path out_dir;
  nlohmann::json provenance = nlohmann::json::object();
};

LoadedRun run_training(const data::EpochSet& task_set, const TrainJob& job, const EpochCallback& on_epoch = {});

// CSP+LDA on the same split, written as a run with a single epoch-0 record.
LoadedRun run_baseline(const data::EpochSet& task_set, const std::string& data_path, const std::string& task,
                       const std::filesystem::path& out_dir, int m = 3,
                       const nlohmann::json& provenance = nlohmann::json::object());

}  // namespace neurodecode::train
