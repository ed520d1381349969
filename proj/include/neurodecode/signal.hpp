#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace neurodecode::signal {

struct EventOnset {
  std::int64_t sample = 0;
  std::int64_t trial_id = 0;
};

// Continuous multichannel recording, channels x samples, in microvolts.
struct RawRecording {
  Eigen::MatrixXd data;
  std::vector<std::string> channel_names;
  int sample_rate = 0;
  std::vector<EventOnset> events;

  // Throws DataError if names are not unique, an onset is out of bounds,
  // the rate is below 100 Hz or the matrix and name list disagree.
  void validate() const;

  // Index of a channel by name, or -1.
  int channel_index(std::string_view name) const;
};

// Stimulus-locked window. t0_offset is the number of samples before onset.
struct Epoch {
  Eigen::MatrixXd data;
  int t0_offset = 0;
  std::int64_t trial_id = 0;
};

struct PipelineConfig {
  std::string ref_channel = "Cz";
  double low_hz = 1.0;
  double high_hz = 40.0;
  int filter_order = 4;
  int target_rate = 100;
  double baseline_start_ms = -200.0;
  double baseline_end_ms = 0.0;
  double crop_start_ms = 0.0;
  double crop_end_ms = 500.0;
  double zscore_epsilon = 1e-8;
  // Channel count the final epochs must have (reference excluded).
  int expected_channels = 63;

  void validate() const;
};

// One biquad in direct form II transposed; a[0] == 1.
struct SosSection {
  std::array<double, 3> b{};
  std::array<double, 3> a{};
};

// Digital Butterworth band-pass of the given prototype order (2*order poles),
// designed by bilinear transform with pre-warped edges and normalized to unit
// gain at the geometric band centre. Returns `order` second-order sections.
std::vector<SosSection> butterworth_bandpass(int order, double low_hz, double high_hz,
                                             double sample_rate);

// Complex frequency response of a cascade at `freq_hz`.
std::complex<double> sos_response(std::span<const SosSection> sos, double freq_hz,
                                  double sample_rate);

// Single forward pass with explicit initial state (2 values per section).
std::vector<double> sosfilt(std::span<const SosSection> sos, std::span<const double> x,
                            std::span<const double> zi = {});

// Steady-state initial conditions for a unit step, 2 values per section.
std::vector<double> sosfilt_zi(std::span<const SosSection> sos);

// Number of samples reflected at each edge before forward-backward filtering.
std::size_t filtfilt_padding(std::span<const SosSection> sos);

// Zero-phase forward-backward filtering with odd reflection padding and
// steady-state initial conditions at both passes.
std::vector<double> sosfiltfilt(std::span<const SosSection> sos, std::span<const double> x);

RawRecording rereference(const RawRecording& rec, std::string_view ref);

RawRecording bandpass(const RawRecording& rec, double low_hz, double high_hz, int order = 4);

RawRecording downsample(const RawRecording& rec, int target_rate);

struct SkippedTrial {
  std::int64_t trial_id = 0;
  std::int64_t onset = 0;
  std::string reason;
};

struct EpochExtraction {
  std::vector<Epoch> epochs;
  std::vector<SkippedTrial> skipped;
};

// Cuts [onset - pre_ms, onset + post_ms) around every event. Windows that
// leave the recording are reported in `skipped`.
EpochExtraction extract_epochs(const RawRecording& rec, double pre_ms, double post_ms);

// Subtracts, per channel, the mean of samples [0, t0_offset).
Epoch baseline_correct(const Epoch& e);

// Keeps samples [t0_offset, t0_offset + n_samples) and z-scores every channel
// with population std; constant channels become zero.
Eigen::MatrixXd crop_and_zscore(const Epoch& e, int n_samples = 50, double eps = 1e-8);

struct PipelineResult {
  std::vector<Eigen::MatrixXd> epochs;
  std::vector<std::int64_t> trial_ids;
  std::vector<SkippedTrial> skipped;
};

// rereference -> bandpass -> downsample -> extract -> baseline -> crop/z-score.
PipelineResult run_pipeline(const RawRecording& rec, const PipelineConfig& cfg);

}  // namespace neurodecode::signal
