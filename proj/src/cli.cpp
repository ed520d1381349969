#include "neurodecode/cli.hpp"

#include "neurodecode/analysis.hpp"
#include "neurodecode/config.hpp"
#include "neurodecode/errors.hpp"
#include "neurodecode/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace neurodecode::cli {

using nlohmann::json;

namespace {

// Stream key for deriving the split seed of generated datasets.
constexpr std::uint64_t kSplitStream = 0x5350;
constexpr double kTestFraction = 0.2;

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("NEURODECODE_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("NEURODECODE_SEED is not an unsigned integer: '") + env + "'");
  }
  return 0;
}

std::string join(const std::vector<std::string>& args) {
  std::string s = "neurodecode";
  for (const auto& a : args) s += " " + a;
  return s;
}

json provenance(const std::vector<std::string>& args, const std::string& command, std::uint64_t seed,
                const std::string& config_path, const json& resolved, const std::string& started) {
  return {{"command", command},
          {"argv", join(args)},
          {"config_path", config_path},
          {"config", resolved},
          {"seed", seed},
          {"tool_version", kVersion},
          {"started_utc", started},
          {"finished_utc", utc_timestamp()}};
}

void write_manifest(const std::filesystem::path& path, json manifest, const std::vector<std::string>& artifacts) {
  manifest["artifacts"] = artifacts;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << manifest.dump(2) << "\n";
}

std::filesystem::path file_manifest(const std::filesystem::path& data_file) {
  auto p = data_file;
  p += ".manifest.json";
  return p;
}

// Trials without a split get a seeded 80/20 assignment.
data::EpochSet ensure_split(data::EpochSet set, std::uint64_t split_seed) {
  const bool unassigned =
      std::any_of(set.meta.begin(), set.meta.end(), [](const auto& m) { return m.split == data::Split::unassigned; });
  return unassigned ? data::split(set, kTestFraction, split_seed) : set;
}

// Optional sub-object of a config file: {"train": {...}} or the bare object.
json config_section(const json& j, const char* key) {
  if (j.is_object() && j.contains(key)) return j.at(key);
  return j;
}

// --- subcommands ------------------------------------------------------------

struct SynthArgs {
  std::string mode = "linear";
  std::size_t trials = 1000;
  int subjects = 1;
  double snr = 1.0;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool raw = false;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto started = utc_timestamp();
  data::SynthConfig cfg;
  cfg.mode = data::synth_mode_from_string(a.mode);
  cfg.n_trials = a.trials;
  cfg.n_subjects = a.subjects;
  cfg.snr = a.snr;
  cfg.seed = resolve_seed(a.seed);
  cfg.validate();
  const std::filesystem::path path(a.out);
  if (a.raw) {
    const auto raw = data::generate_synthetic_raw(cfg);
    data::save_raw(raw, path);
    out << "wrote raw recording " << path.string() << " (" << raw.meta.size() << " events, "
        << raw.recording.data.rows() << " channels, " << raw.recording.data.cols() << " samples)\n";
  } else {
    const auto set = data::split(data::generate_synthetic(cfg), kTestFraction, Rng(cfg.seed).fork(kSplitStream).next_u64());
    data::save_epoch_set(set, path);
    out << "wrote " << set.size() << " trials to " << path.string() << " ("
        << data::indices_of(set, data::Split::train).size() << " train / "
        << data::indices_of(set, data::Split::test).size() << " test)\n";
  }
  write_manifest(file_manifest(path), provenance(args, "synth", cfg.seed, "", to_json(cfg), started),
                 {path.string(), data::manifest_path(path).string()});
  return kExitOk;
}

struct PreprocessArgs {
  std::string in, out, config;
  std::optional<std::uint64_t> seed;
};

int cmd_preprocess(const PreprocessArgs& a, const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
  const auto started = utc_timestamp();
  signal::PipelineConfig cfg;
  if (!a.config.empty()) cfg = pipeline_config_from_json(config_section(read_json_file(a.config), "pipeline"));
  cfg.validate();
  const std::uint64_t seed = resolve_seed(a.seed);
  const auto raw = data::load_raw(a.in);
  auto result = data::preprocess(raw, cfg);
  for (const auto& s : result.skipped) err << "skipped trial " << s.trial_id << ": " << s.reason << "\n";
  const auto set = data::split(result.set, kTestFraction, Rng(seed).fork(kSplitStream).next_u64());
  const std::filesystem::path path(a.out);
  data::save_epoch_set(set, path);
  out << "wrote " << set.size() << " trials to " << path.string() << " (" << result.skipped.size()
      << " skipped)\n";
  write_manifest(file_manifest(path), provenance(args, "preprocess", seed, a.config, to_json(cfg), started),
                 {path.string(), data::manifest_path(path).string()});
  return kExitOk;
}

struct TrainArgs {
  std::string data, arch = "eegnet", size = "small", task = "cross", target = "animacy", out, config;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<int> eval_every;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool quiet = false;
};

// "single:all" or "single:1,2,5" expand to several single-subject tasks.
std::vector<data::TaskSpec> expand_tasks(const std::string& text, const data::EpochSet& set) {
  constexpr std::string_view prefix = "single:";
  if (!text.starts_with(prefix)) return {data::TaskSpec::parse(text)};
  const std::string rest = text.substr(prefix.size());
  if (rest == "all") {
    std::set<int> subjects;
    for (const auto& m : set.meta) subjects.insert(m.subject);
    std::vector<data::TaskSpec> out;
    for (int s : subjects) out.push_back(data::TaskSpec::single(s));
    return out;
  }
  std::vector<data::TaskSpec> out;
  std::stringstream ss(rest);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(data::TaskSpec::parse(std::string(prefix) + item));
  return out;
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto started = utc_timestamp();
  const auto arch = models::arch_from_string(a.arch);
  const auto size = models::size_from_string(a.size);
  const auto target = data::target_from_string(a.target);
  if (a.jobs < 1) throw ConfigError("--jobs must be >= 1");

  train::TrainConfig cfg;
  json file_cfg = json::object();
  if (!a.config.empty()) {
    file_cfg = config_section(read_json_file(a.config), "train");
    cfg = train::TrainConfig::from_json(file_cfg);
  }
  const bool file_sets_epochs = file_cfg.contains("epochs");
  if (a.seed || !file_cfg.contains("seed")) cfg.seed = resolve_seed(a.seed);
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.eval_every) cfg.eval_every = *a.eval_every;

  const auto full = ensure_split(data::load_epoch_set(a.data), Rng(cfg.seed).fork(kSplitStream).next_u64());
  const auto tasks = expand_tasks(a.task, full);
  const bool single = tasks.front().kind == data::TaskSpec::Kind::single_subject;
  if (a.epochs) cfg.epochs = *a.epochs;
  else if (!file_sets_epochs) cfg.epochs = single ? train::kSingleSubjectEpochs : train::kCrossSubjectEpochs;
  cfg.validate();

  const std::filesystem::path root(a.out);
  std::mutex io;
  auto run_one = [&](const data::TaskSpec& task, const std::filesystem::path& dir) {
    train::TrainJob job;
    job.spec = models::ModelSpec::make(arch, size);
    job.config = cfg;
    job.task = task;
    job.target = target;
    job.data_path = a.data;
    job.out_dir = dir;
    const auto task_set = data::build_task(full, task);
    json resolved = {{"train", cfg.to_json()}, {"model", job.spec.to_json()}, {"task", task.to_string()},
                     {"target", data::to_string(target)}};
    job.provenance = provenance(args, "train", cfg.seed, a.config, resolved, started);
    const std::string tag = task.to_string();
    const auto run = train::run_training(task_set, job, [&](const train::EpochRecord& r) {
      if (a.quiet || !std::isfinite(r.test_acc)) return;
      std::lock_guard lock(io);
      err << tag << " epoch " << r.epoch << "/" << cfg.epochs << " lr " << std::setprecision(4) << r.lr << " loss "
          << r.train_loss << " train " << r.train_acc << " test " << r.test_acc << "\n";
    });
    const auto pk = analysis::peak_metric(run.history, single ? analysis::PeakMode::mean_last5
                                                              : analysis::PeakMode::max_last5);
    std::lock_guard lock(io);
    out << tag << " " << a.arch << "/" << a.size << " final test acc " << std::setprecision(4)
        << run.history.records.back().test_acc << ", peak (" << analysis::to_string(pk.mode) << ") " << pk.value
        << " -> " << dir.string() << "\n";
  };

  if (tasks.size() == 1) {
    run_one(tasks.front(), root);
    return kExitOk;
  }
  // Independent single-subject runs, one output directory each.
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex fail_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < tasks.size();) {
      try {
        run_one(tasks[i], root / ("subject-" + std::to_string(tasks[i].subject)));
      } catch (...) {
        std::lock_guard lock(fail_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::min<int>(a.jobs, static_cast<int>(tasks.size())); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return kExitOk;
}

struct BaselineArgs {
  std::string data, task = "cross", out;
  int m = 3;
  std::optional<std::uint64_t> seed;
};

int cmd_baseline(const BaselineArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto started = utc_timestamp();
  if (a.m < 1) throw ConfigError("--m must be >= 1");
  const std::uint64_t seed = resolve_seed(a.seed);
  const auto full = ensure_split(data::load_epoch_set(a.data), Rng(seed).fork(kSplitStream).next_u64());
  const auto task = data::TaskSpec::parse(a.task);
  const auto set = data::build_task(full, task);
  const json resolved = {{"m", a.m}, {"task", task.to_string()}};
  const auto run = train::run_baseline(set, a.data, task.to_string(), a.out, a.m,
                                       provenance(args, "baseline", seed, "", resolved, started));
  const auto& r = run.history.records.front();
  out << "csp_lda test acc " << std::setprecision(4) << r.test_acc << " precision " << r.test_precision
      << " recall " << r.test_recall << " -> " << a.out << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& dir, bool as_json, std::ostream& out) {
  const auto run = train::load_run(dir);
  json j = {{"run", dir}, {"label", run.info.label}, {"task", run.info.task}};
  for (const auto mode : {analysis::PeakMode::max_last5, analysis::PeakMode::mean_last5}) {
    const auto pk = analysis::peak_metric(run.history, mode);
    j[analysis::to_string(mode)] = {{"accuracy", pk.value},   {"precision", pk.precision}, {"recall", pk.recall},
                                    {"cycle", pk.cycle_index}, {"epoch", pk.epoch}};
  }
  if (as_json) {
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  out << run.info.label << " (" << run.info.task << ", " << run.history.records.size() << " records)\n";
  for (const auto mode : {analysis::PeakMode::max_last5, analysis::PeakMode::mean_last5}) {
    const auto& m = j[analysis::to_string(mode)];
    out << "  " << std::left << std::setw(11) << analysis::to_string(mode) << std::right << " accuracy "
        << std::fixed << std::setprecision(4) << m["accuracy"].get<double>() << " precision "
        << m["precision"].get<double>() << " recall " << m["recall"].get<double>() << " (cycle "
        << m["cycle"].get<int>() << ", epoch " << m["epoch"].get<int>() << ")\n";
  }
  out.unsetf(std::ios::fixed);
  return kExitOk;
}

int cmd_analyze(const std::string& runs_arg, const std::string& out_dir, const std::string& combine,
                const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto started = utc_timestamp();
  std::vector<train::LoadedRun> runs;
  std::stringstream ss(runs_arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) runs.push_back(train::load_run(item));
  }
  if (runs.empty()) throw ConfigError("--runs needs at least one run directory");
  analysis::ReportOptions opts;
  if (combine == "mean") opts.combine = analysis::Combine::mean_of_models;
  else if (combine == "pooled") opts.combine = analysis::Combine::pooled;
  else throw ConfigError("--combine must be 'mean' or 'pooled'");
  const auto files = analysis::emit_report(runs, out_dir, opts);
  for (const auto& w : files.warnings) err << "warning: " << w << "\n";
  std::vector<std::string> artifacts;
  for (const auto& f : files.written) {
    artifacts.push_back(f.string());
    out << "wrote " << f.string() << "\n";
  }
  write_manifest(std::filesystem::path(out_dir) / "manifest.json",
                 provenance(args, "analyze", 0, "", {{"runs", runs_arg}, {"combine", combine}}, started), artifacts);
  return kExitOk;
}

int cmd_gradcheck(const std::string& arch_arg, const std::string& size_arg, double tolerance, std::size_t sample,
                  std::uint64_t seed, std::ostream& out) {
  std::vector<models::Arch> archs(std::begin(models::kArchs), std::end(models::kArchs));
  std::vector<models::Size> sizes(std::begin(models::kSizes), std::end(models::kSizes));
  if (!arch_arg.empty()) archs = {models::arch_from_string(arch_arg)};
  if (!size_arg.empty()) sizes = {models::size_from_string(size_arg)};
  ad::GradCheckOptions opts;
  opts.max_entries_per_tensor = sample;
  opts.seed = seed;
  bool ok = true;
  const auto start = std::chrono::steady_clock::now();
  for (const auto a : archs) {
    for (const auto s : sizes) {
      const auto r = models::model_grad_check(a, s, opts);
      const bool pass = r.max_error < tolerance;
      ok = ok && pass;
      out << (pass ? "PASS " : "FAIL ") << std::left << std::setw(12) << models::to_string(a) << std::setw(7)
          << models::to_string(s) << std::right << " max rel err " << std::scientific << std::setprecision(2)
          << r.max_error << " over " << r.checked << " entries (" << r.refined << " refined, " << r.kink_skipped
          << " kink probes skipped), worst "
          << r.worst.tensor << "[" << r.worst.index << "], " << std::fixed << std::setprecision(1) << r.seconds
          << "s\n";
      out.unsetf(std::ios::floatfield);
    }
  }
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << (ok ? "all gradient checks passed" : "gradient check FAILED") << " in " << std::fixed
      << std::setprecision(1) << total << "s\n";
  out.unsetf(std::ios::floatfield);
  return ok ? kExitOk : kExitNumeric;
}

int cmd_audit(bool as_json, std::ostream& out) {
  const auto report = models::audit_params(0.3);
  if (as_json) {
    json rows = json::array();
    for (const auto& r : report.rows) {
      rows.push_back({{"arch", models::to_string(r.arch)}, {"size", models::to_string(r.size)}, {"target", r.target},
                      {"actual", r.actual}, {"ratio", r.ratio}, {"within_30pct", r.within_budget}});
    }
    out << json{{"rows", rows}, {"within_30pct", report.within_budget}, {"ordering_ok", report.ordering_ok}}.dump(2)
        << "\n";
  } else {
    out << std::left << std::setw(12) << "arch" << std::setw(8) << "size" << std::right << std::setw(10) << "target"
        << std::setw(10) << "actual" << std::setw(8) << "ratio" << "  verdict\n";
    for (const auto& r : report.rows) {
      out << std::left << std::setw(12) << models::to_string(r.arch) << std::setw(8) << models::to_string(r.size)
          << std::right << std::setw(10) << r.target << std::setw(10) << r.actual << std::setw(8) << std::fixed
          << std::setprecision(3) << r.ratio << "  " << (r.within_budget ? "within 30%" : "OUTSIDE 30%") << "\n";
      out.unsetf(std::ios::floatfield);
    }
    out << report.within_budget << "/" << report.rows.size() << " within 30%, size ordering "
        << (report.ordering_ok ? "ok" : "VIOLATED") << "\n";
  }
  return report.within_budget >= 12 && report.ordering_ok ? kExitOk : kExitNumeric;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"EEG decoding benchmark: synthetic data, preprocessing, training, baselines and analysis",
               "neurodecode"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic epoch file (or raw recording with --raw)");
  s->add_option("--mode", synth.mode, "Effect type: linear, xor or subject")
      ->check(CLI::IsMember({"linear", "xor", "subject"}))
      ->capture_default_str();
  s->add_option("--trials", synth.trials, "Number of trials (even)")->capture_default_str();
  s->add_option("--subjects", synth.subjects, "Number of synthetic subjects")->capture_default_str();
  s->add_option("--snr", synth.snr, "Effect amplitude relative to the noise")->capture_default_str();
  s->add_option("--seed", synth.seed, "Random seed (default: NEURODECODE_SEED or 0)");
  s->add_option("--out", synth.out, "Output file")->required();
  s->add_flag("--raw", synth.raw, "Write a continuous raw recording instead of epochs");

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Run the preprocessing pipeline over a raw recording");
  p->add_option("--in", pre.in, "Raw recording file")->required();
  p->add_option("--out", pre.out, "Output epoch file")->required();
  p->add_option("--config", pre.config, "JSON pipeline config");
  p->add_option("--seed", pre.seed, "Seed of the train/test split (default: NEURODECODE_SEED or 0)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a decoder and write a run directory");
  t->add_option("--data", tr.data, "Epoch file")->required();
  t->add_option("--arch", tr.arch, "eegnet, lstm, dgcnn, transformer or conformer")->capture_default_str();
  t->add_option("--size", tr.size, "small, medium or large")->capture_default_str();
  t->add_option("--task", tr.task, "cross, single:<id>, single:<id>,<id>... or single:all")->capture_default_str();
  t->add_option("--target", tr.target, "animacy or subject")->capture_default_str();
  t->add_option("--epochs", tr.epochs, "Epochs (default 945 cross-subject, 460 single-subject)");
  t->add_option("--batch-size", tr.batch_size, "Minibatch size (default 128)");
  t->add_option("--eval-every", tr.eval_every, "Evaluate the test split every N epochs (default 1)");
  t->add_option("--seed", tr.seed, "Random seed (default: NEURODECODE_SEED or 0)");
  t->add_option("--config", tr.config, "JSON train config; flags override its values");
  t->add_option("--jobs", tr.jobs, "Parallel single-subject runs")->capture_default_str();
  t->add_option("--out", tr.out, "Run directory (parent directory for several subjects)")->required();
  t->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  BaselineArgs bl;
  auto* b = app.add_subcommand("baseline", "Fit the CSP+LDA baseline and write a run directory");
  b->add_option("--data", bl.data, "Epoch file")->required();
  b->add_option("--m", bl.m, "Filter pairs kept from each end of the CSP spectrum")->capture_default_str();
  b->add_option("--task", bl.task, "cross or single:<id>")->capture_default_str();
  b->add_option("--seed", bl.seed, "Seed of the train/test split when the file has none");
  b->add_option("--out", bl.out, "Run directory")->required();

  std::string eval_dir;
  bool eval_json = false;
  auto* e = app.add_subcommand("eval", "Print peak metrics of a run (both extraction modes)");
  e->add_option("--run", eval_dir, "Run directory")->required();
  e->add_flag("--json", eval_json, "Print JSON");

  std::string runs_arg, report_dir, combine = "mean";
  auto* an = app.add_subcommand("analyze", "Write metric tables, curves and object/category comparisons");
  an->add_option("--runs", runs_arg, "Comma-separated run directories")->required();
  an->add_option("--out", report_dir, "Report directory")->required();
  an->add_option("--combine", combine, "Category table over models: mean of accuracies or pooled trials")
      ->check(CLI::IsMember({"mean", "pooled"}))
      ->capture_default_str();

  std::string gc_arch, gc_size;
  double gc_tol = 1e-4;
  std::size_t gc_sample = 8;
  std::uint64_t gc_seed = 0;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient check of every model build");
  g->add_option("--arch", gc_arch, "Only this architecture");
  g->add_option("--size", gc_size, "Only this size");
  g->add_option("--tolerance", gc_tol, "Maximum relative error")->capture_default_str();
  g->add_option("--sample", gc_sample, "Entries probed per tensor (0 = all)")->capture_default_str();
  g->add_option("--seed", gc_seed, "Seed of the probed entries")->capture_default_str();

  bool audit_json = false;
  auto* au = app.add_subcommand("audit-params", "Compare trainable parameter counts with the reference targets");
  au->add_flag("--json", audit_json, "Print JSON");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    // CLI11 prints help/version on success and a diagnostic otherwise.
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth, args, out);
    if (*p) return cmd_preprocess(pre, args, out, err);
    if (*t) return cmd_train(tr, args, out, err);
    if (*b) return cmd_baseline(bl, args, out);
    if (*e) return cmd_eval(eval_dir, eval_json, out);
    if (*an) return cmd_analyze(runs_arg, report_dir, combine, args, out, err);
    if (*g) return cmd_gradcheck(gc_arch, gc_size, gc_tol, gc_sample, gc_seed, out);
    if (*au) return cmd_audit(audit_json, out);
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const DataError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitData;
  } catch (const ShapeError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace neurodecode::cli
