#include "neurodecode/signal.hpp"

#include "neurodecode/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace neurodecode::signal {

namespace {

using cd = std::complex<double>;

std::int64_t ms_to_samples(double ms, int rate) {
  return static_cast<std::int64_t>(std::llround(ms * rate / 1000.0));
}

}  // namespace

void RawRecording::validate() const {
  if (sample_rate < 100) {
    throw DataError("sample rate must be >= 100 Hz, got " + std::to_string(sample_rate));
  }
  if (static_cast<std::size_t>(data.rows()) != channel_names.size()) {
    throw DataError("recording has " + std::to_string(data.rows()) + " rows but " +
                    std::to_string(channel_names.size()) + " channel names");
  }
  std::set<std::string> seen;
  for (const auto& name : channel_names) {
    if (!seen.insert(name).second) throw DataError("duplicate channel name '" + name + "'");
  }
  for (const auto& ev : events) {
    if (ev.sample < 0 || ev.sample >= data.cols()) {
      throw DataError("event onset " + std::to_string(ev.sample) + " of trial " +
                      std::to_string(ev.trial_id) + " outside recording");
    }
  }
}

int RawRecording::channel_index(std::string_view name) const {
  for (std::size_t i = 0; i < channel_names.size(); ++i) {
    if (channel_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void PipelineConfig::validate() const {
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < target_rate / 2.0)) {
    throw ConfigError("band must satisfy 0 < low < high < target_rate/2");
  }
  if (filter_order < 1) throw ConfigError("filter_order must be >= 1");
  if (baseline_start_ms >= baseline_end_ms) throw ConfigError("empty baseline window");
  if (baseline_end_ms != 0.0 || crop_start_ms != 0.0) {
    throw ConfigError("baseline window must end, and crop window start, at stimulus onset (0 ms)");
  }
  if (crop_end_ms <= crop_start_ms) throw ConfigError("empty crop window");
  if (!(zscore_epsilon > 0.0)) throw ConfigError("zscore_epsilon must be positive");
  if (expected_channels < 1) throw ConfigError("expected_channels must be positive");
}

std::vector<SosSection> butterworth_bandpass(int order, double low_hz, double high_hz,
                                             double sample_rate) {
  if (order < 1) throw ConfigError("filter order must be >= 1");
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < sample_rate / 2.0)) {
    throw ConfigError("band [" + std::to_string(low_hz) + ", " + std::to_string(high_hz) +
                      "] Hz outside (0, Nyquist) for rate " + std::to_string(sample_rate));
  }
  const double fs2 = 2.0 * sample_rate;
  const double wl = fs2 * std::tan(std::numbers::pi * low_hz / sample_rate);
  const double wh = fs2 * std::tan(std::numbers::pi * high_hz / sample_rate);
  const double bw = wh - wl;
  const double w0sq = wl * wh;

  std::vector<cd> upper;  // analog band-pass poles in the upper half plane
  for (int k = 1; k <= order; ++k) {
    const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + order - 1) / (2.0 * order));
    const cd disc = std::sqrt(p * p * bw * bw - 4.0 * w0sq);
    for (const cd s : {(p * bw + disc) / 2.0, (p * bw - disc) / 2.0}) {
      if (s.imag() > 0.0) upper.push_back(s);
    }
  }
  if (upper.size() != static_cast<std::size_t>(order)) {
    throw NumericError("band-pass design produced real poles; band too wide for this design");
  }

  std::vector<SosSection> sos;
  for (const cd s : upper) {
    const cd z = (fs2 + s) / (fs2 - s);
    SosSection sec;
    sec.b = {1.0, 0.0, -1.0};
    sec.a = {1.0, -2.0 * z.real(), std::norm(z)};
    sos.push_back(sec);
  }

  const double f0 = sample_rate / std::numbers::pi * std::atan(std::sqrt(w0sq) / fs2);
  const double gain = std::abs(sos_response(sos, f0, sample_rate));
  for (double& b : sos.front().b) b /= gain;
  return sos;
}

std::complex<double> sos_response(std::span<const SosSection> sos, double freq_hz,
                                  double sample_rate) {
  const cd z1 = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / sample_rate);
  const cd z2 = z1 * z1;
  cd h = 1.0;
  for (const auto& s : sos) {
    h *= (s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (s.a[0] + s.a[1] * z1 + s.a[2] * z2);
  }
  return h;
}

std::vector<double> sosfilt(std::span<const SosSection> sos, std::span<const double> x,
                            std::span<const double> zi) {
  std::vector<double> y(x.begin(), x.end());
  std::vector<double> state(2 * sos.size(), 0.0);
  if (!zi.empty()) {
    if (zi.size() != state.size()) throw ShapeError("sosfilt: zi needs 2 values per section");
    std::copy(zi.begin(), zi.end(), state.begin());
  }
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const auto& b = sos[s].b;
    const auto& a = sos[s].a;
    double z1 = state[2 * s];
    double z2 = state[2 * s + 1];
    for (double& v : y) {
      const double in = v;
      const double out = b[0] * in + z1;
      z1 = b[1] * in - a[1] * out + z2;
      z2 = b[2] * in - a[2] * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> sosfilt_zi(std::span<const SosSection> sos) {
  std::vector<double> zi;
  zi.reserve(2 * sos.size());
  double level = 1.0;
  for (const auto& s : sos) {
    const double g = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
    const double y = g * level;
    zi.push_back(y - s.b[0] * level);
    zi.push_back(s.b[2] * level - s.a[2] * y);
    level = y;
  }
  return zi;
}

std::size_t filtfilt_padding(std::span<const SosSection> sos) {
  return 3 * (2 * sos.size() + 1);
}

std::vector<double> sosfiltfilt(std::span<const SosSection> sos, std::span<const double> x) {
  const std::size_t pad = filtfilt_padding(sos);
  const std::size_t n = x.size();
  if (n <= pad) {
    throw DataError("signal of " + std::to_string(n) + " samples too short for filtering (needs > " +
                    std::to_string(pad) + ")");
  }
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const std::vector<double> zi = sosfilt_zi(sos);
  std::vector<double> scaled(zi.size());

  for (std::size_t i = 0; i < zi.size(); ++i) scaled[i] = zi[i] * ext.front();
  std::vector<double> y = sosfilt(sos, ext, scaled);

  std::reverse(y.begin(), y.end());
  for (std::size_t i = 0; i < zi.size(); ++i) scaled[i] = zi[i] * y.front();
  y = sosfilt(sos, y, scaled);
  std::reverse(y.begin(), y.end());

  return std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(pad),
                             y.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

RawRecording rereference(const RawRecording& rec, std::string_view ref) {
  const int r = rec.channel_index(ref);
  if (r < 0) throw DataError("unknown reference channel '" + std::string(ref) + "'");
  RawRecording out;
  out.sample_rate = rec.sample_rate;
  out.events = rec.events;
  out.data.resize(rec.data.rows() - 1, rec.data.cols());
  Eigen::Index row = 0;
  for (Eigen::Index c = 0; c < rec.data.rows(); ++c) {
    if (c == r) continue;
    out.data.row(row++) = rec.data.row(c) - rec.data.row(r);
    out.channel_names.push_back(rec.channel_names[static_cast<std::size_t>(c)]);
  }
  return out;
}

RawRecording bandpass(const RawRecording& rec, double low_hz, double high_hz, int order) {
  const auto sos = butterworth_bandpass(order, low_hz, high_hz, rec.sample_rate);
  RawRecording out = rec;
  std::vector<double> row(static_cast<std::size_t>(rec.data.cols()));
  for (Eigen::Index c = 0; c < rec.data.rows(); ++c) {
    for (Eigen::Index t = 0; t < rec.data.cols(); ++t) row[static_cast<std::size_t>(t)] = rec.data(c, t);
    const auto filtered = sosfiltfilt(sos, row);
    for (Eigen::Index t = 0; t < rec.data.cols(); ++t) out.data(c, t) = filtered[static_cast<std::size_t>(t)];
  }
  return out;
}

RawRecording downsample(const RawRecording& rec, int target_rate) {
  if (target_rate <= 0 || rec.sample_rate % target_rate != 0) {
    throw ConfigError("cannot decimate " + std::to_string(rec.sample_rate) + " Hz to " +
                      std::to_string(target_rate) + " Hz: non-integer factor");
  }
  const Eigen::Index k = rec.sample_rate / target_rate;
  const Eigen::Index n_out = (rec.data.cols() + k - 1) / k;
  RawRecording out;
  out.channel_names = rec.channel_names;
  out.sample_rate = target_rate;
  out.data.resize(rec.data.rows(), n_out);
  for (Eigen::Index t = 0; t < n_out; ++t) out.data.col(t) = rec.data.col(t * k);
  out.events = rec.events;
  for (auto& ev : out.events) ev.sample /= k;
  return out;
}

EpochExtraction extract_epochs(const RawRecording& rec, double pre_ms, double post_ms) {
  const std::int64_t pre = ms_to_samples(pre_ms, rec.sample_rate);
  const std::int64_t post = ms_to_samples(post_ms, rec.sample_rate);
  if (pre < 0 || post <= 0) throw ConfigError("epoch window must have pre >= 0 and post > 0");
  EpochExtraction out;
  for (const auto& ev : rec.events) {
    const std::int64_t start = ev.sample - pre;
    const std::int64_t stop = ev.sample + post;
    if (start < 0) {
      out.skipped.push_back({ev.trial_id, ev.sample, "window underflow"});
      continue;
    }
    if (stop > rec.data.cols()) {
      out.skipped.push_back({ev.trial_id, ev.sample, "window overflow"});
      continue;
    }
    Epoch e;
    e.data = rec.data.middleCols(start, stop - start);
    e.t0_offset = static_cast<int>(pre);
    e.trial_id = ev.trial_id;
    out.epochs.push_back(std::move(e));
  }
  return out;
}

Epoch baseline_correct(const Epoch& e) {
  if (e.t0_offset <= 0) throw DataError("baseline correction needs t0_offset > 0");
  if (e.t0_offset > e.data.cols()) throw DataError("t0_offset beyond epoch length");
  Epoch out = e;
  const Eigen::VectorXd mean = e.data.leftCols(e.t0_offset).rowwise().mean();
  out.data.colwise() -= mean;
  return out;
}

Eigen::MatrixXd crop_and_zscore(const Epoch& e, int n_samples, double eps) {
  if (e.t0_offset < 0 || e.t0_offset + n_samples > e.data.cols()) {
    throw DataError("epoch of " + std::to_string(e.data.cols()) + " samples too short to crop " +
                    std::to_string(n_samples) + " samples after offset " + std::to_string(e.t0_offset));
  }
  Eigen::MatrixXd out = e.data.middleCols(e.t0_offset, n_samples);
  for (Eigen::Index c = 0; c < out.rows(); ++c) {
    const double mean = out.row(c).mean();
    out.row(c).array() -= mean;
    const double sd = std::sqrt(out.row(c).squaredNorm() / static_cast<double>(n_samples));
    out.row(c) /= (sd + eps);
  }
  return out;
}

PipelineResult run_pipeline(const RawRecording& rec, const PipelineConfig& cfg) {
  cfg.validate();
  rec.validate();
  RawRecording r = rereference(rec, cfg.ref_channel);
  r = bandpass(r, cfg.low_hz, cfg.high_hz, cfg.filter_order);
  r = downsample(r, cfg.target_rate);
  if (r.data.rows() != cfg.expected_channels) {
    throw DataError("expected " + std::to_string(cfg.expected_channels) + " channels after re-referencing, got " +
                    std::to_string(r.data.rows()));
  }
  auto extraction = extract_epochs(r, -cfg.baseline_start_ms, cfg.crop_end_ms);
  const int n_samples = static_cast<int>(ms_to_samples(cfg.crop_end_ms - cfg.crop_start_ms, cfg.target_rate));

  PipelineResult result;
  result.skipped = std::move(extraction.skipped);
  for (const auto& e : extraction.epochs) {
    Eigen::MatrixXd z = crop_and_zscore(baseline_correct(e), n_samples, cfg.zscore_epsilon);
    if (!z.allFinite()) throw NumericError("non-finite values in epoch of trial " + std::to_string(e.trial_id));
    result.epochs.push_back(std::move(z));
    result.trial_ids.push_back(e.trial_id);
  }
  return result;
}

}  // namespace neurodecode::signal
