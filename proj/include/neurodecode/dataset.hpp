#pragma once

#include "neurodecode/signal.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace neurodecode::data {

inline constexpr int kAlive = 1;
inline constexpr int kNonliving = 0;
inline constexpr int kChannels = 63;
inline constexpr int kSamples = 50;
inline constexpr int kMaxSubject = 46;
inline constexpr int kRepetitions = 12;

enum class Split { unassigned, train, test };

const char* to_string(Split s);
Split split_from_string(std::string_view s);

struct TrialMeta {
  std::int64_t trial_id = 0;
  int subject = 1;
  int concept_id = 0;
  std::string concept_name;
  std::string category;
  int label = 0;
  Split split = Split::unassigned;

  bool operator==(const TrialMeta&) const = default;
};

// Trials x channels x samples, single precision, trial-major row-major.
struct EpochSet {
  std::size_t n_channels = kChannels;
  std::size_t n_samples = kSamples;
  std::vector<float> tensor;
  std::vector<TrialMeta> meta;

  std::size_t size() const noexcept { return meta.size(); }
  std::size_t trial_stride() const noexcept { return n_channels * n_samples; }
  std::span<const float> trial(std::size_t i) const;
  std::span<float> trial(std::size_t i);

  // Throws DataError when tensor and meta lengths disagree or a label does not
  // follow its category.
  void validate() const;

  bool operator==(const EpochSet&) const = default;
};

// "animal" family, "body part", "people" -> alive; the five handleable-object
// categories -> nonliving; anything else is excluded (nullopt).
std::optional<int> category_to_label(std::string_view category);

struct CategoryInfo {
  std::string name;
  int label = 0;
  int n_objects = 0;
};

// The 11 top-down categories with their object counts (214 alive, 215 nonliving).
const std::vector<CategoryInfo>& category_table();

struct Concept {
  int id = 0;
  std::string name;
  std::string category;
  int label = 0;
};

// 429 concepts, ids 0..428, grouped by category in category_table() order.
// Names are placeholders of the form "<category>/<index>" standing in for the
// THINGS concept names, which are not bundled.
const std::vector<Concept>& concept_catalog();

// Concept ids of one class, in catalog order.
const std::vector<int>& concepts_with_label(int label);

struct TaskSpec {
  enum class Kind { cross_subject, single_subject };
  Kind kind = Kind::cross_subject;
  int subject = 0;

  static TaskSpec cross() { return {}; }
  static TaskSpec single(int subject) { return {Kind::single_subject, subject}; }
  // "cross" or "single:<id>".
  static TaskSpec parse(std::string_view text);
  std::string to_string() const;
};

// Indices of the trials that belong to the task. Unknown subject ids throw.
std::vector<std::size_t> select_trials(std::span<const TrialMeta> meta, const TaskSpec& task);

EpochSet subset(const EpochSet& set, std::span<const std::size_t> indices);

EpochSet build_task(const EpochSet& set, const TaskSpec& task);

// Metadata of the full-scale task: every subject sees every concept
// `repetitions` times.
std::vector<TrialMeta> full_scale_meta(int n_subjects = kMaxSubject, int repetitions = kRepetitions);

// Uniform random assignment of round(test_frac * n) trials to the test split.
EpochSet split(const EpochSet& set, double test_frac, std::uint64_t seed);

std::vector<std::size_t> indices_of(const EpochSet& set, Split s);

// Training targets: the animacy label, or the subject mapped onto 0..K-1 in
// ascending subject order.
enum class Target { animacy, subject };

const char* to_string(Target t);
Target target_from_string(std::string_view s);

struct Targets {
  std::vector<int> values;
  int n_classes = 2;
};

Targets make_targets(const EpochSet& set, Target target);

enum class SynthMode { linear, xor_, subject_signature };

const char* to_string(SynthMode m);
SynthMode synth_mode_from_string(std::string_view s);

struct SynthConfig {
  SynthMode mode = SynthMode::linear;
  std::size_t n_trials = 1000;
  int n_subjects = 1;
  double snr = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Epoch-level synthetic data: 63 x 70 samples at 100 Hz (-200..500 ms) per
// trial, baseline corrected and cropped/z-scored exactly like the pipeline.
EpochSet generate_synthetic(const SynthConfig& cfg);

struct RawDataset {
  signal::RawRecording recording;
  std::vector<TrialMeta> meta;  // one entry per event, same order
};

// Continuous 64-channel recording at 1000 Hz with a 10 Hz stimulus train,
// line noise, slow drift and a noisy Cz reference mixed into every channel.
RawDataset generate_synthetic_raw(const SynthConfig& cfg);

// Runs the preprocessing pipeline over a raw dataset and packs the epochs.
struct PreprocessResult {
  EpochSet set;
  std::vector<signal::SkippedTrial> skipped;
};

PreprocessResult preprocess(const RawDataset& raw, const signal::PipelineConfig& cfg);

// --- persistence -------------------------------------------------------------
//
// Binary container, little-endian:
//   "EEGB" | u32 version=1 | u32 n_trials | u32 n_channels | u32 n_samples |
//   u32 dtype (0 = float32, 1 = float64) | payload, trial-major row-major.
// Metadata lives in a JSON-lines sidecar at <path>.jsonl, one TrialMeta object
// per trial. Raw recordings use the same container with n_trials = 1 and
// dtype 1; their sidecar starts with a {"kind":"raw",...} header line.

inline constexpr char kMagic[4] = {'E', 'E', 'G', 'B'};
inline constexpr std::uint32_t kFormatVersion = 1;

std::filesystem::path manifest_path(const std::filesystem::path& path);

void save_epoch_set(const EpochSet& set, const std::filesystem::path& path);
EpochSet load_epoch_set(const std::filesystem::path& path);

void save_raw(const RawDataset& raw, const std::filesystem::path& path);
RawDataset load_raw(const std::filesystem::path& path);

}  // namespace neurodecode::data
