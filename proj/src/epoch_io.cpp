#include "neurodecode/dataset.hpp"

#include "binary_io.hpp"
#include "neurodecode/errors.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace neurodecode::data {

namespace {

using nlohmann::json;

constexpr std::uint32_t kFloat32 = 0;
constexpr std::uint32_t kFloat64 = 1;

struct Header {
  std::uint32_t n_trials = 0;
  std::uint32_t n_channels = 0;
  std::uint32_t n_samples = 0;
  std::uint32_t dtype = 0;
};

void write_header(detail::BinaryWriter& w, const Header& h) {
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kFormatVersion);
  w.u32(h.n_trials);
  w.u32(h.n_channels);
  w.u32(h.n_samples);
  w.u32(h.dtype);
}

Header read_header(detail::BinaryReader& r) {
  char magic[4] = {};
  r.bytes(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw FormatError(FormatErrorKind::bad_magic, "'" + r.path().string() + "' is not an EEGB container");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kFormatVersion) {
    throw FormatError(FormatErrorKind::version_mismatch,
                      "'" + r.path().string() + "' has version " + std::to_string(version) + ", expected " +
                          std::to_string(kFormatVersion));
  }
  Header h;
  h.n_trials = r.u32("n_trials");
  h.n_channels = r.u32("n_channels");
  h.n_samples = r.u32("n_samples");
  h.dtype = r.u32("dtype");
  return h;
}

json meta_to_json(const TrialMeta& m) {
  return json{{"trial_id", m.trial_id}, {"subject", m.subject},   {"concept_id", m.concept_id},
              {"concept_name", m.concept_name}, {"category", m.category}, {"label", m.label},
              {"split", to_string(m.split)}};
}

TrialMeta meta_from_json(const json& j) {
  TrialMeta m;
  m.trial_id = j.at("trial_id").get<std::int64_t>();
  m.subject = j.at("subject").get<int>();
  m.concept_id = j.at("concept_id").get<int>();
  m.concept_name = j.at("concept_name").get<std::string>();
  m.category = j.at("category").get<std::string>();
  m.label = j.at("label").get<int>();
  m.split = split_from_string(j.at("split").get<std::string>());
  return m;
}

void write_lines(const std::filesystem::path& path, const std::vector<json>& lines) {
  std::ofstream out(path);
  if (!out) throw FormatError(FormatErrorKind::io, "cannot open '" + path.string() + "' for writing");
  for (const auto& j : lines) out << j.dump() << '\n';
  if (!out) throw FormatError(FormatErrorKind::io, "failed writing '" + path.string() + "'");
}

std::vector<json> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrorKind::io, "cannot open manifest '" + path.string() + "'");
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(FormatErrorKind::bad_manifest,
                        path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <typename Fn>
auto manifest_field(const std::filesystem::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::bad_manifest, path.string() + ": " + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const DataError& e) {
    throw FormatError(FormatErrorKind::bad_manifest, path.string() + ": " + e.what());
  }
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".jsonl");
}

void save_epoch_set(const EpochSet& set, const std::filesystem::path& path) {
  if (set.tensor.size() != set.meta.size() * set.trial_stride()) {
    throw DataError("cannot save epoch set: tensor and metadata lengths disagree");
  }
  detail::BinaryWriter w(path);
  write_header(w, {static_cast<std::uint32_t>(set.size()), static_cast<std::uint32_t>(set.n_channels),
                   static_cast<std::uint32_t>(set.n_samples), kFloat32});
  w.values(set.tensor);
  w.finish();

  std::vector<json> lines;
  lines.reserve(set.meta.size());
  for (const auto& m : set.meta) lines.push_back(meta_to_json(m));
  write_lines(manifest_path(path), lines);
}

EpochSet load_epoch_set(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  const Header h = read_header(r);
  if (h.dtype != kFloat32) {
    throw FormatError(FormatErrorKind::unsupported_dtype,
                      "'" + path.string() + "' has dtype " + std::to_string(h.dtype) + ", expected 0 (float32)");
  }
  EpochSet set;
  set.n_channels = h.n_channels;
  set.n_samples = h.n_samples;
  const std::size_t n = static_cast<std::size_t>(h.n_trials) * h.n_channels * h.n_samples;
  set.tensor = r.values<float>(n, "payload");
  if (r.remaining() != 0) {
    throw FormatError(FormatErrorKind::length_mismatch,
                      "'" + path.string() + "' has " + std::to_string(r.remaining()) + " trailing bytes");
  }

  const auto mpath = manifest_path(path);
  const auto lines = read_lines(mpath);
  if (lines.size() != h.n_trials) {
    throw FormatError(FormatErrorKind::length_mismatch,
                      "manifest '" + mpath.string() + "' has " + std::to_string(lines.size()) +
                          " entries but the tensor header declares " + std::to_string(h.n_trials) + " trials");
  }
  set.meta.reserve(lines.size());
  for (const auto& j : lines) set.meta.push_back(manifest_field(mpath, [&] { return meta_from_json(j); }));
  return set;
}

void save_raw(const RawDataset& raw, const std::filesystem::path& path) {
  raw.recording.validate();
  const auto& d = raw.recording.data;
  detail::BinaryWriter w(path);
  write_header(w, {1, static_cast<std::uint32_t>(d.rows()), static_cast<std::uint32_t>(d.cols()), kFloat64});
  std::vector<double> row_major(static_cast<std::size_t>(d.size()));
  for (Eigen::Index c = 0; c < d.rows(); ++c) {
    for (Eigen::Index t = 0; t < d.cols(); ++t) row_major[static_cast<std::size_t>(c * d.cols() + t)] = d(c, t);
  }
  w.values(row_major);
  w.finish();

  std::vector<json> lines;
  lines.push_back(json{{"kind", "raw"},
                       {"sample_rate", raw.recording.sample_rate},
                       {"channel_names", raw.recording.channel_names},
                       {"n_events", raw.recording.events.size()}});
  if (raw.meta.size() != raw.recording.events.size()) {
    throw DataError("raw dataset metadata and events disagree in length");
  }
  for (std::size_t i = 0; i < raw.meta.size(); ++i) {
    json j = meta_to_json(raw.meta[i]);
    j["onset"] = raw.recording.events[i].sample;
    lines.push_back(std::move(j));
  }
  write_lines(manifest_path(path), lines);
}

RawDataset load_raw(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  const Header h = read_header(r);
  if (h.dtype != kFloat64) {
    throw FormatError(FormatErrorKind::unsupported_dtype,
                      "'" + path.string() + "' has dtype " + std::to_string(h.dtype) + ", expected 1 (float64)");
  }
  if (h.n_trials != 1) {
    throw FormatError(FormatErrorKind::length_mismatch, "raw container must hold exactly one recording");
  }
  const auto values = r.values<double>(static_cast<std::size_t>(h.n_channels) * h.n_samples, "payload");
  if (r.remaining() != 0) {
    throw FormatError(FormatErrorKind::length_mismatch, "'" + path.string() + "' has trailing bytes");
  }
  RawDataset raw;
  raw.recording.data.resize(h.n_channels, h.n_samples);
  for (std::uint32_t c = 0; c < h.n_channels; ++c) {
    for (std::uint32_t t = 0; t < h.n_samples; ++t) {
      raw.recording.data(c, t) = values[static_cast<std::size_t>(c) * h.n_samples + t];
    }
  }

  const auto mpath = manifest_path(path);
  const auto lines = read_lines(mpath);
  if (lines.empty()) throw FormatError(FormatErrorKind::bad_manifest, mpath.string() + ": missing header line");
  manifest_field(mpath, [&] {
    const auto& head = lines.front();
    if (head.at("kind").get<std::string>() != "raw") throw DataError("first line is not a raw header");
    raw.recording.sample_rate = head.at("sample_rate").get<int>();
    raw.recording.channel_names = head.at("channel_names").get<std::vector<std::string>>();
    const auto n_events = head.at("n_events").get<std::size_t>();
    if (n_events != lines.size() - 1) {
      throw FormatError(FormatErrorKind::length_mismatch,
                        "raw manifest declares " + std::to_string(n_events) + " events but lists " +
                            std::to_string(lines.size() - 1));
    }
    return 0;
  });
  if (raw.recording.channel_names.size() != h.n_channels) {
    throw FormatError(FormatErrorKind::length_mismatch, "raw manifest channel list disagrees with tensor header");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    manifest_field(mpath, [&] {
      raw.meta.push_back(meta_from_json(lines[i]));
      raw.recording.events.push_back({lines[i].at("onset").get<std::int64_t>(), raw.meta.back().trial_id});
      return 0;
    });
  }
  raw.recording.validate();
  return raw;
}

}  // namespace neurodecode::data
