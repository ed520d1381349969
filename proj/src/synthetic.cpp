#include "neurodecode/dataset.hpp"

#include "neurodecode/errors.hpp"
#include "neurodecode/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace neurodecode::data {

namespace {

constexpr int kEpochRate = 100;
constexpr int kPreSamples = 20;  // 200 ms at 100 Hz
constexpr int kEpochLength = kPreSamples + kSamples;
constexpr int kCommonSources = 16;
constexpr double kCommonShare = 0.5;

// Sum of unit-variance AR(1) processes with log-spaced corner frequencies:
// unit variance, approximately 1/f between the first and last corner.
class PinkNoise {
 public:
  explicit PinkNoise(double rate) {
    for (double f = 0.5; f < rate / 2.5; f *= 3.0) {
      const double a = std::exp(-2.0 * std::numbers::pi * f / rate);
      poles_.push_back(a);
      innovations_.push_back(std::sqrt(1.0 - a * a));
    }
    scale_ = 1.0 / std::sqrt(static_cast<double>(poles_.size()));
  }

  void fill(Rng& rng, double* out, std::size_t n, double gain) const {
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
    for (std::size_t k = 0; k < poles_.size(); ++k) {
      double x = rng.normal();
      for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) x = poles_[k] * x + innovations_[k] * rng.normal();
        out[i] += gain * scale_ * x;
      }
    }
  }

 private:
  std::vector<double> poles_;
  std::vector<double> innovations_;
  double scale_ = 1.0;
};

Eigen::VectorXd unit_rms(Eigen::VectorXd v) {
  return v * (std::sqrt(static_cast<double>(v.size())) / v.norm());
}

Eigen::VectorXd random_pattern(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return unit_rms(v);
}

// Channels x sources mixing with unit-norm rows.
Eigen::MatrixXd mixing_matrix(Rng& rng, Eigen::Index channels) {
  Eigen::MatrixXd m(channels, kCommonSources);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  for (Eigen::Index r = 0; r < channels; ++r) m.row(r).normalize();
  return m;
}

// Gaussian-windowed 5 Hz half-cycle peaking at 170 ms, unit peak.
double erp_bump(double t) {
  const double c = 0.17;
  const double sigma = 0.04;
  return std::cos(2.0 * std::numbers::pi * 5.0 * (t - c)) * std::exp(-(t - c) * (t - c) / (2 * sigma * sigma));
}

double biphasic(double t, double centre) {
  const double sigma = 0.035;
  return std::sin(2.0 * std::numbers::pi * 6.0 * (t - centre)) *
         std::exp(-(t - centre) * (t - centre) / (2 * sigma * sigma));
}

struct Waveforms {
  Eigen::VectorXd erp;    // length kEpochLength
  Eigen::VectorXd early;  // zero-mean on the crop window, orthogonal to late
  Eigen::VectorXd late;
};

Waveforms make_waveforms() {
  Waveforms w;
  w.erp.resize(kEpochLength);
  w.early = Eigen::VectorXd::Zero(kEpochLength);
  w.late = Eigen::VectorXd::Zero(kEpochLength);
  for (int j = 0; j < kEpochLength; ++j) {
    const double t = static_cast<double>(j - kPreSamples) / kEpochRate;
    w.erp[j] = erp_bump(t);
  }
  Eigen::VectorXd e(kSamples), l(kSamples);
  for (int j = 0; j < kSamples; ++j) {
    const double t = static_cast<double>(j) / kEpochRate;
    e[j] = biphasic(t, 0.15);
    l[j] = biphasic(t, 0.30);
  }
  e.array() -= e.mean();
  l.array() -= l.mean();
  l -= (l.dot(e) / e.dot(e)) * e;
  e /= e.cwiseAbs().maxCoeff();
  l /= l.cwiseAbs().maxCoeff();
  w.early.tail(kSamples) = e;
  w.late.tail(kSamples) = l;
  return w;
}

struct Scene {
  Eigen::VectorXd p;
  Eigen::VectorXd q;
  Eigen::MatrixXd mixing;
  std::vector<Eigen::VectorXd> fingerprints;
};

Scene make_scene(const SynthConfig& cfg, Eigen::Index channels) {
  Rng rng = Rng(cfg.seed).fork(1);
  Scene s;
  s.p = random_pattern(rng, channels);
  Eigen::VectorXd q = random_pattern(rng, channels);
  q -= (q.dot(s.p) / s.p.dot(s.p)) * s.p;
  s.q = unit_rms(q);
  s.mixing = mixing_matrix(rng, channels);
  for (int k = 0; k < cfg.n_subjects; ++k) s.fingerprints.push_back(random_pattern(rng, channels));
  return s;
}

// Channels x samples background: independent pink noise per channel plus a
// spatially mixed pink component; unit variance per channel.
Eigen::MatrixXd background(Rng& rng, const PinkNoise& pink, const Eigen::MatrixXd& mixing,
                           Eigen::Index samples) {
  const Eigen::Index channels = mixing.rows();
  Eigen::MatrixXd noise(channels, samples);
  std::vector<double> row(static_cast<std::size_t>(samples));
  const double own = std::sqrt(1.0 - kCommonShare);
  for (Eigen::Index c = 0; c < channels; ++c) {
    pink.fill(rng, row.data(), row.size(), own);
    for (Eigen::Index t = 0; t < samples; ++t) noise(c, t) = row[static_cast<std::size_t>(t)];
  }
  Eigen::MatrixXd sources(kCommonSources, samples);
  for (Eigen::Index k = 0; k < kCommonSources; ++k) {
    pink.fill(rng, row.data(), row.size(), 1.0);
    for (Eigen::Index t = 0; t < samples; ++t) sources(k, t) = row[static_cast<std::size_t>(t)];
  }
  noise.noalias() += std::sqrt(kCommonShare) * mixing * sources;
  return noise;
}

struct TrialPlan {
  int label;
  int concept_id;
  int subject;
};

// Alternating labels (even index alive), concepts cycled within each class,
// subjects in contiguous equal blocks.
TrialPlan plan_trial(std::size_t i, const SynthConfig& cfg) {
  const int label = (i % 2 == 0) ? kAlive : kNonliving;
  const auto& pool = concepts_with_label(label);
  const int concept_id = pool[(i / 2) % pool.size()];
  const int subject = 1 + static_cast<int>(i * static_cast<std::size_t>(cfg.n_subjects) / cfg.n_trials);
  return {label, concept_id, subject};
}

TrialMeta meta_for(std::size_t i, const TrialPlan& plan) {
  const auto& c = concept_catalog()[static_cast<std::size_t>(plan.concept_id)];
  return {static_cast<std::int64_t>(i), plan.subject, c.id, c.name, c.category, plan.label, Split::unassigned};
}

// Adds the mode-specific evoked component of one trial, sampled at `times`
// (seconds relative to onset) through `wave(kind, t)`.
template <typename WaveAt>
void add_signal(Eigen::MatrixXd& x, const Scene& scene, const SynthConfig& cfg, const TrialPlan& plan,
                Rng& rng, Eigen::Index first_col, Eigen::Index n_cols, WaveAt wave) {
  switch (cfg.mode) {
    case SynthMode::linear: {
      const Eigen::VectorXd& pattern = plan.label == kAlive ? scene.p : scene.q;
      for (Eigen::Index t = 0; t < n_cols; ++t) x.col(first_col + t) += cfg.snr * wave(0, t) * pattern;
      break;
    }
    case SynthMode::xor_: {
      const double s1 = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double s2 = plan.label == kAlive ? s1 : -s1;
      for (Eigen::Index t = 0; t < n_cols; ++t) {
        x.col(first_col + t) += cfg.snr * (s1 * wave(1, t) * scene.p + s2 * wave(2, t) * scene.q);
      }
      break;
    }
    case SynthMode::subject_signature: {
      const Eigen::VectorXd& f = scene.fingerprints[static_cast<std::size_t>(plan.subject - 1)];
      for (Eigen::Index t = 0; t < n_cols; ++t) x.col(first_col + t) += cfg.snr * wave(0, t) * f;
      break;
    }
  }
}

}  // namespace

const char* to_string(SynthMode m) {
  switch (m) {
    case SynthMode::linear: return "linear";
    case SynthMode::xor_: return "xor";
    case SynthMode::subject_signature: return "subject";
  }
  return "linear";
}

SynthMode synth_mode_from_string(std::string_view s) {
  if (s == "linear") return SynthMode::linear;
  if (s == "xor") return SynthMode::xor_;
  if (s == "subject" || s == "subject_signature") return SynthMode::subject_signature;
  throw ConfigError("invalid synthetic mode '" + std::string(s) + "' (linear|xor|subject)");
}

void SynthConfig::validate() const {
  if (n_trials == 0 || n_trials % 2 != 0) throw ConfigError("n_trials must be positive and even");
  if (n_subjects < 1 || n_subjects > kMaxSubject) throw ConfigError("n_subjects must be in [1, 46]");
  if (static_cast<std::size_t>(n_subjects) > n_trials) throw ConfigError("more subjects than trials");
  if (!(snr > 0.0) || !std::isfinite(snr)) throw ConfigError("snr must be positive");
}

EpochSet generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const Scene scene = make_scene(cfg, kChannels);
  const Waveforms waves = make_waveforms();
  const PinkNoise pink(kEpochRate);
  Rng rng = Rng(cfg.seed).fork(3);

  EpochSet set;
  set.tensor.reserve(cfg.n_trials * set.trial_stride());
  set.meta.reserve(cfg.n_trials);
  const auto wave = [&](int kind, Eigen::Index t) {
    switch (kind) {
      case 1: return waves.early[t];
      case 2: return waves.late[t];
      default: return waves.erp[t];
    }
  };
  for (std::size_t i = 0; i < cfg.n_trials; ++i) {
    const TrialPlan plan = plan_trial(i, cfg);
    signal::Epoch e;
    e.data = background(rng, pink, scene.mixing, kEpochLength);
    e.t0_offset = kPreSamples;
    e.trial_id = static_cast<std::int64_t>(i);
    add_signal(e.data, scene, cfg, plan, rng, 0, kEpochLength, wave);
    const Eigen::MatrixXd z = signal::crop_and_zscore(signal::baseline_correct(e), kSamples, 1e-8);
    for (Eigen::Index c = 0; c < z.rows(); ++c) {
      for (Eigen::Index t = 0; t < z.cols(); ++t) set.tensor.push_back(static_cast<float>(z(c, t)));
    }
    set.meta.push_back(meta_for(i, plan));
  }
  return set;
}

namespace {

const std::vector<std::string>& montage64() {
  static const std::vector<std::string> names = {
      "Fp1", "Fz",  "F3",  "F7",  "FT9", "FC5", "FC1", "C3",  "T7",  "TP9", "CP5", "CP1", "Pz",
      "P3",  "P7",  "O1",  "Oz",  "O2",  "P4",  "P8",  "TP10", "CP6", "CP2", "Cz",  "C4",  "T8",
      "FT10", "FC6", "FC2", "F4",  "F8",  "Fp2", "AF7", "AF3", "AFz", "F1",  "F5",  "FT7", "FC3",
      "C1",  "C5",  "TP7", "CP3", "P1",  "P5",  "PO7", "PO3", "POz", "PO4", "PO8", "P6",  "P2",
      "CPz", "CP4", "TP8", "C6",  "C2",  "FC4", "FT8", "F6",  "AF8", "AF4", "F2",  "Iz"};
  return names;
}

}  // namespace

RawDataset generate_synthetic_raw(const SynthConfig& cfg) {
  cfg.validate();
  constexpr int rate = 1000;
  constexpr Eigen::Index lead = 1000;
  constexpr Eigen::Index spacing = 100;  // 10 Hz presentation
  constexpr Eigen::Index tail = 1000;
  const auto& names = montage64();
  const Eigen::Index channels = static_cast<Eigen::Index>(names.size());
  const auto cz_it = std::find(names.begin(), names.end(), "Cz");
  const Eigen::Index cz = cz_it - names.begin();
  const Eigen::Index n = lead + static_cast<Eigen::Index>(cfg.n_trials) * spacing + tail;

  const Scene scene = make_scene(cfg, channels - 1);
  const PinkNoise pink(rate);
  Rng rng = Rng(cfg.seed).fork(4);

  Eigen::MatrixXd brain = background(rng, pink, scene.mixing, n);
  RawDataset raw;
  const Eigen::Index pre = 200;
  const Eigen::Index post = 500;
  for (std::size_t i = 0; i < cfg.n_trials; ++i) {
    const TrialPlan plan = plan_trial(i, cfg);
    const Eigen::Index onset = lead + static_cast<Eigen::Index>(i) * spacing;
    const auto wave = [&](int kind, Eigen::Index k) {
      const double t = static_cast<double>(k - pre) / rate;
      switch (kind) {
        case 1: return t >= 0.0 ? biphasic(t, 0.15) : 0.0;
        case 2: return t >= 0.0 ? biphasic(t, 0.30) : 0.0;
        default: return erp_bump(t);
      }
    };
    add_signal(brain, scene, cfg, plan, rng, onset - pre, pre + post, wave);
    raw.recording.events.push_back({onset, static_cast<std::int64_t>(i)});
    raw.meta.push_back(meta_for(i, plan));
  }

  std::vector<double> ref(static_cast<std::size_t>(n));
  pink.fill(rng, ref.data(), ref.size(), 2.0);
  auto& data = raw.recording.data;
  data.resize(channels, n);
  Eigen::Index b = 0;
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (Eigen::Index t = 0; t < n; ++t) {
      const double sec = static_cast<double>(t) / rate;
      const double line = 1.5 * std::sin(2.0 * std::numbers::pi * 50.0 * sec + 0.1 * static_cast<double>(c));
      const double drift = 4.0 * std::sin(2.0 * std::numbers::pi * 0.1 * sec + 0.05 * static_cast<double>(c));
      const double r = ref[static_cast<std::size_t>(t)];
      data(c, t) = (c == cz) ? r : brain(b, t) + r + line + drift;
    }
    if (c != cz) ++b;
  }
  raw.recording.channel_names = names;
  raw.recording.sample_rate = rate;
  return raw;
}

PreprocessResult preprocess(const RawDataset& raw, const signal::PipelineConfig& cfg) {
  if (raw.meta.size() != raw.recording.events.size()) {
    throw DataError("raw dataset has " + std::to_string(raw.meta.size()) + " metadata entries for " +
                    std::to_string(raw.recording.events.size()) + " events");
  }
  std::map<std::int64_t, const TrialMeta*> by_id;
  for (const auto& m : raw.meta) by_id.emplace(m.trial_id, &m);

  const auto result = signal::run_pipeline(raw.recording, cfg);
  PreprocessResult out;
  out.skipped = result.skipped;
  if (!result.epochs.empty()) {
    out.set.n_channels = static_cast<std::size_t>(result.epochs.front().rows());
    out.set.n_samples = static_cast<std::size_t>(result.epochs.front().cols());
  }
  for (std::size_t k = 0; k < result.epochs.size(); ++k) {
    const auto it = by_id.find(result.trial_ids[k]);
    if (it == by_id.end()) throw DataError("no metadata for trial " + std::to_string(result.trial_ids[k]));
    const auto& z = result.epochs[k];
    for (Eigen::Index c = 0; c < z.rows(); ++c) {
      for (Eigen::Index t = 0; t < z.cols(); ++t) out.set.tensor.push_back(static_cast<float>(z(c, t)));
    }
    out.set.meta.push_back(*it->second);
  }
  return out;
}

}  // namespace neurodecode::data
