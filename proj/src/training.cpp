#include "neurodecode/training.hpp"

#include "csv.hpp"
#include "neurodecode/csp_lda.hpp"
#include "neurodecode/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace neurodecode::train {

using nlohmann::json;

namespace {

// Independent random streams derived from the run seed.
enum Stream : std::uint64_t { kInit = 1, kShuffle = 2, kDropout = 3 };

double json_number(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

json parse_json(const std::filesystem::path& path, const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

// --- config -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (schedule.t0 < 1) throw ConfigError("schedule T0 must be >= 1");
  if (schedule.t_mult < 1) throw ConfigError("schedule Tmult must be >= 1");
  if (!(schedule.eta_min < schedule.eta_max)) throw ConfigError("eta_min must be below eta_max");
  if (schedule.eta_min < 0.0) throw ConfigError("eta_min must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

json TrainConfig::to_json() const {
  return {{"batch_size", batch_size}, {"momentum", momentum}, {"weight_decay", weight_decay},
          {"T0", schedule.t0},        {"Tmult", schedule.t_mult}, {"eta_max", schedule.eta_max},
          {"eta_min", schedule.eta_min}, {"epochs", epochs},     {"seed", seed},
          {"eval_every", eval_every}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "T0") c.schedule.t0 = v.get<int>();
      else if (key == "Tmult") c.schedule.t_mult = v.get<int>();
      else if (key == "eta_max") c.schedule.eta_max = v.get<double>();
      else if (key == "eta_min") c.schedule.eta_min = v.get<double>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "eval_every") c.eval_every = v.get<int>();
      else throw ConfigError("unknown train config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid train config: ") + e.what());
  }
  c.validate();
  return c;
}

// --- schedule ---------------------------------------------------------------

double lr_at(double t_cur, double t_i, double eta_max, double eta_min) {
  return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(std::numbers::pi * t_cur / t_i));
}

std::vector<int> restart_epochs(int t0, int t_mult, int total_epochs) {
  if (t0 < 1 || t_mult < 1) throw ConfigError("schedule needs T0 >= 1 and Tmult >= 1");
  std::vector<int> ends;
  long long end = 0, len = t0;
  while (end < total_epochs) {
    end = std::min<long long>(end + len, total_epochs);
    ends.push_back(static_cast<int>(end));
    len *= t_mult;
  }
  return ends;
}

double lr_for_epoch(const Schedule& s, int epoch) {
  if (epoch < 1) throw ConfigError("epochs are numbered from 1");
  long long start = 0, len = s.t0;
  while (start + len < epoch) {
    start += len;
    len *= s.t_mult;
  }
  return lr_at(static_cast<double>(epoch - 1 - start), static_cast<double>(len), s.eta_max, s.eta_min);
}

template <typename T>
void sgd_step(ad::ParamStore<T>& params, double lr, double momentum, double weight_decay) {
  const T lr_t = static_cast<T>(lr), mu = static_cast<T>(momentum), wd = static_cast<T>(weight_decay);
  for (auto& p : params) {
    auto& theta = p.value.data;
    const auto& g = p.grad.data;
    auto& v = p.momentum.data;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = mu * v[i] + (g[i] + wd * theta[i]);
      theta[i] -= lr_t * v[i];
      if (!std::isfinite(theta[i])) {
        throw NumericError("non-finite update of parameter '" + p.name + "' (entry " + std::to_string(i) + ")");
      }
    }
  }
}

template void sgd_step(ad::ParamStore<float>&, double, double, double);
template void sgd_step(ad::ParamStore<double>&, double, double, double);

// --- records ----------------------------------------------------------------

json EpochRecord::to_json() const {
  return {{"epoch", epoch},
          {"lr", lr},
          {"train_loss", number_or_null(train_loss)},
          {"train_acc", number_or_null(train_acc)},
          {"test_acc", number_or_null(test_acc)},
          {"test_precision", number_or_null(test_precision)},
          {"test_recall", number_or_null(test_recall)},
          {"test_class_precision", test_class_precision},
          {"test_class_recall", test_class_recall}};
}

EpochRecord EpochRecord::from_json(const json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.lr = json_number(j.at("lr"));
  r.train_loss = json_number(j.at("train_loss"));
  r.train_acc = json_number(j.at("train_acc"));
  r.test_acc = json_number(j.at("test_acc"));
  r.test_precision = json_number(j.at("test_precision"));
  r.test_recall = json_number(j.at("test_recall"));
  r.test_class_precision = j.value("test_class_precision", std::vector<double>{});
  r.test_class_recall = j.value("test_class_recall", std::vector<double>{});
  return r;
}

// --- evaluation -------------------------------------------------------------

namespace {

ad::Tensor<float> gather(const data::EpochSet& set, std::span<const std::size_t> trials, std::size_t begin,
                         std::size_t end) {
  ad::Tensor<float> x({end - begin, set.n_channels, set.n_samples});
  const std::size_t stride = set.trial_stride();
  for (std::size_t i = begin; i < end; ++i) {
    const auto t = set.trial(trials[i]);
    std::copy(t.begin(), t.end(), x.ptr() + (i - begin) * stride);
  }
  return x;
}

int argmax_row(const float* row, std::size_t n) {
  return static_cast<int>(std::max_element(row, row + n) - row);
}

}  // namespace

std::vector<int> predict(models::Model<float>& model, const data::EpochSet& set, std::span<const std::size_t> trials,
                         std::size_t batch_size) {
  std::vector<int> out;
  out.reserve(trials.size());
  const auto classes = static_cast<std::size_t>(model.spec().n_classes);
  for (std::size_t begin = 0; begin < trials.size(); begin += batch_size) {
    const std::size_t end = std::min(trials.size(), begin + batch_size);
    ad::Tape<float> tape(&model.params());
    const auto logits = model.forward(tape, gather(set, trials, begin, end), false);
    for (std::size_t r = 0; r < end - begin; ++r) out.push_back(argmax_row(logits.value().ptr() + r * classes, classes));
  }
  return out;
}

Evaluation evaluate(models::Model<float>& model, const data::EpochSet& set, std::span<const std::size_t> trials,
                    std::span<const int> targets, int n_classes, std::size_t batch_size) {
  if (trials.empty()) throw DataError("cannot evaluate an empty split");
  Evaluation e;
  e.predictions = predict(model, set, trials, batch_size);
  std::vector<int> truth;
  truth.reserve(trials.size());
  for (std::size_t i : trials) truth.push_back(targets[i]);
  e.metrics = classification_metrics(e.predictions, truth, n_classes);
  return e;
}

// --- training loop ----------------------------------------------------------

RunHistory train(models::Model<float>& model, const data::EpochSet& set, const data::Targets& targets,
                 const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (targets.values.size() != set.size()) throw DataError("one target per trial required");
  if (targets.n_classes != model.spec().n_classes) {
    throw ConfigError("model has " + std::to_string(model.spec().n_classes) + " outputs but the target has " +
                      std::to_string(targets.n_classes) + " classes");
  }
  auto order = data::indices_of(set, data::Split::train);
  const auto test = data::indices_of(set, data::Split::test);
  if (order.empty()) throw DataError("train split is empty");
  if (test.empty()) throw DataError("test split is empty");

  RunHistory history;
  history.config = cfg.to_json();
  history.model_spec = model.spec().to_json();
  if (cfg.epochs > 0) history.restart_epochs = restart_epochs(cfg.schedule.t0, cfg.schedule.t_mult, cfg.epochs);

  const Rng base(cfg.seed);
  Rng shuffle = base.fork(kShuffle);
  Rng dropout = base.fork(kDropout);
  const auto classes = static_cast<std::size_t>(model.spec().n_classes);
  std::vector<int> labels;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_for_epoch(cfg.schedule, epoch);
    shuffle.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      labels.clear();
      for (std::size_t i = begin; i < end; ++i) labels.push_back(targets.values[order[i]]);
      ad::Tape<float> tape(&model.params());
      const auto logits = model.forward(tape, gather(set, order, begin, end), true, &dropout);
      const auto loss = ad::cross_entropy(logits, labels);
      model.params().zero_grad();
      tape.backward(loss);
      sgd_step(model.params(), rec.lr, cfg.momentum, cfg.weight_decay);
      loss_sum += static_cast<double>(loss.value()[0]) * static_cast<double>(end - begin);
      for (std::size_t r = 0; r < end - begin; ++r) {
        if (argmax_row(logits.value().ptr() + r * classes, classes) == labels[r]) ++correct;
      }
    }
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      const auto ev = evaluate(model, set, test, targets.values, targets.n_classes);
      rec.test_acc = ev.metrics.accuracy;
      rec.test_precision = ev.metrics.precision;
      rec.test_recall = ev.metrics.recall;
      rec.test_class_precision = ev.metrics.class_precision;
      rec.test_class_recall = ev.metrics.class_recall;
    } else {
      rec.test_acc = rec.test_precision = rec.test_recall = std::numeric_limits<double>::quiet_NaN();
    }
    history.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

// --- run directories --------------------------------------------------------

void write_run(const std::filesystem::path& dir, const RunInfo& info, const RunHistory& history,
               std::span<const TrialPrediction> predictions, const models::Model<float>* model) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create run directory '" + dir.string() + "': " + ec.message());

  json config = {{"label", info.label},
                 {"arch", info.arch},
                 {"size", info.size},
                 {"task", info.task},
                 {"target", info.target},
                 {"data", info.data_path},
                 {"train", history.config},
                 {"model", history.model_spec},
                 {"restart_epochs", history.restart_epochs}};
  write_text(dir / "config.json", config.dump(2) + "\n");

  std::string lines;
  for (const auto& r : history.records) lines += r.to_json().dump() + "\n";
  write_text(dir / "history.jsonl", lines);

  std::string csv = "trial_id,subject,concept_id,category,truth,predicted\n";
  for (const auto& p : predictions) {
    csv += std::to_string(p.trial_id) + "," + std::to_string(p.subject) + "," + std::to_string(p.concept_id) + "," +
           detail::csv_field(p.category) + "," + std::to_string(p.truth) + "," + std::to_string(p.predicted) + "\n";
  }
  write_text(dir / "predictions.csv", csv);

  std::vector<std::string> files{"config.json", "history.jsonl", "predictions.csv"};
  if (model) {
    models::save_checkpoint(*model, dir / "model.ckpt");
    files.push_back("model.ckpt");
  }
  json manifest = info.provenance.is_object() ? info.provenance : json::object();
  manifest["training_seconds"] = info.training_seconds;
  manifest["created_utc"] = utc_now();
  manifest["files"] = files;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

LoadedRun load_run(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("run directory '" + dir.string() + "' does not exist");
  LoadedRun run;
  run.dir = dir;
  const auto config = parse_json(dir / "config.json", read_text(dir / "config.json"));
  try {
    run.info.label = config.at("label").get<std::string>();
    run.info.arch = config.at("arch").get<std::string>();
    run.info.size = config.at("size").get<std::string>();
    run.info.task = config.at("task").get<std::string>();
    run.info.target = config.at("target").get<std::string>();
    run.info.data_path = config.at("data").get<std::string>();
    run.history.config = config.at("train");
    run.history.model_spec = config.at("model");
    run.history.restart_epochs = config.at("restart_epochs").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw DataError("malformed '" + (dir / "config.json").string() + "': " + e.what());
  }

  std::istringstream hist(read_text(dir / "history.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(hist, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      run.history.records.push_back(EpochRecord::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("malformed line " + std::to_string(n) + " of '" + (dir / "history.jsonl").string() +
                      "': " + e.what());
    }
  }

  std::istringstream preds(read_text(dir / "predictions.csv"));
  std::getline(preds, line);
  n = 1;
  while (std::getline(preds, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = detail::csv_split(line);
    try {
      if (f.size() != 6) throw std::invalid_argument("expected 6 fields");
      run.predictions.push_back(
          {std::stoll(f[0]), std::stoi(f[1]), std::stoi(f[2]), f[3], std::stoi(f[4]), std::stoi(f[5])});
    } catch (const std::exception& e) {
      throw DataError("malformed line " + std::to_string(n) + " of '" + (dir / "predictions.csv").string() +
                      "': " + e.what());
    }
  }

  const auto manifest_file = dir / "manifest.json";
  if (std::filesystem::exists(manifest_file)) {
    const auto manifest = parse_json(manifest_file, read_text(manifest_file));
    run.info.training_seconds = manifest.value("training_seconds", 0.0);
  }
  return run;
}

namespace {

std::vector<TrialPrediction> collect_predictions(const data::EpochSet& set, std::span<const std::size_t> trials,
                                                 std::span<const int> targets, std::span<const int> predicted) {
  std::vector<TrialPrediction> out;
  out.reserve(trials.size());
  for (std::size_t k = 0; k < trials.size(); ++k) {
    const auto& m = set.meta[trials[k]];
    out.push_back({m.trial_id, m.subject, m.concept_id, m.category, targets[trials[k]], predicted[k]});
  }
  return out;
}

}  // namespace

LoadedRun run_training(const data::EpochSet& task_set, const TrainJob& job, const EpochCallback& on_epoch) {
  job.config.validate();
  const auto targets = data::make_targets(task_set, job.target);
  models::ModelSpec spec = job.spec;
  if (job.task.kind == data::TaskSpec::Kind::single_subject) {
    if (spec.size != models::Size::small) throw ConfigError("single-subject runs use small models only");
    spec.dropout = 0.5;
  }
  spec.n_classes = targets.n_classes;
  spec.n_channels = task_set.n_channels;
  spec.n_samples = task_set.n_samples;
  models::Model<float> model(spec, Rng(job.config.seed).fork(kInit).next_u64());

  const auto start = std::chrono::steady_clock::now();
  auto history = train(model, task_set, targets, job.config, on_epoch);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto test = data::indices_of(task_set, data::Split::test);
  const auto predicted = predict(model, task_set, test);

  LoadedRun run;
  run.dir = job.out_dir;
  run.info = {std::string(models::to_string(spec.arch)) + "/" + models::to_string(spec.size),
              models::to_string(spec.arch),
              models::to_string(spec.size),
              job.task.to_string(),
              data::to_string(job.target),
              job.data_path,
              seconds,
              job.provenance};
  run.history = std::move(history);
  run.predictions = collect_predictions(task_set, test, targets.values, predicted);
  write_run(job.out_dir, run.info, run.history, run.predictions, &model);
  return run;
}

LoadedRun run_baseline(const data::EpochSet& task_set, const std::string& data_path, const std::string& task,
                       const std::filesystem::path& out_dir, int m, const json& provenance) {
  const auto start = std::chrono::steady_clock::now();
  const auto result = csp::csp_lda_pipeline(task_set, m);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  EpochRecord rec;
  rec.epoch = 0;
  rec.lr = 0.0;
  rec.train_loss = std::numeric_limits<double>::quiet_NaN();
  rec.train_acc = std::numeric_limits<double>::quiet_NaN();
  rec.test_acc = result.metrics.accuracy;
  rec.test_precision = result.metrics.precision;
  rec.test_recall = result.metrics.recall;
  rec.test_class_precision = result.metrics.class_precision;
  rec.test_class_recall = result.metrics.class_recall;

  LoadedRun run;
  run.dir = out_dir;
  run.info = {"csp_lda", "csp_lda", "-", task, "animacy", data_path, seconds, provenance};
  run.history.records = {rec};
  run.history.config = nullptr;
  run.history.model_spec = {{"arch", "csp_lda"}, {"m", m}};

  const auto test = data::indices_of(task_set, data::Split::test);
  std::vector<int> labels(task_set.size());
  for (std::size_t i = 0; i < task_set.size(); ++i) labels[i] = task_set.meta[i].label;
  run.predictions = collect_predictions(task_set, test, labels, result.predictions);
  write_run(out_dir, run.info, run.history, run.predictions, nullptr);
  return run;
}

}  // namespace neurodecode::train
