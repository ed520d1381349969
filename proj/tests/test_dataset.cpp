#include "support.hpp"

#include "neurodecode/dataset.hpp"
#include "neurodecode/errors.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <set>

using namespace neurodecode;
using namespace neurodecode::data;

namespace {

EpochSet synth(SynthMode mode, std::size_t n, std::uint64_t seed, double snr = 1.0, int subjects = 1) {
  SynthConfig cfg;
  cfg.mode = mode;
  cfg.n_trials = n;
  cfg.seed = seed;
  cfg.snr = snr;
  cfg.n_subjects = subjects;
  return generate_synthetic(cfg);
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FormatErrorKind load_error(const std::filesystem::path& p) {
  try {
    load_epoch_set(p);
  } catch (const FormatError& e) {
    return e.kind();
  }
  FAIL("load succeeded on a corrupted file");
  return FormatErrorKind::io;
}

}  // namespace

TEST_CASE("category to label mapping", "[dataset]") {
  CHECK(category_to_label("tool") == kNonliving);
  CHECK(category_to_label("weapon") == kNonliving);
  CHECK(category_to_label("animal, food") == kAlive);
  CHECK(category_to_label("people") == kAlive);
  CHECK_FALSE(category_to_label("vehicle").has_value());
}

TEST_CASE("concept catalog matches the category table", "[dataset]") {
  const auto& cats = category_table();
  REQUIRE(cats.size() == 11);
  int alive = 0, nonliving = 0;
  for (const auto& c : cats) (c.label == kAlive ? alive : nonliving) += c.n_objects;
  CHECK(alive == 214);
  CHECK(nonliving == 215);
  const auto& catalog = concept_catalog();
  REQUIRE(catalog.size() == 429);
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    CHECK(catalog[i].id == static_cast<int>(i));
    CHECK(category_to_label(catalog[i].category) == catalog[i].label);
  }
  CHECK(concepts_with_label(kAlive).size() == 214);
  CHECK(concepts_with_label(kNonliving).size() == 215);
}

TEST_CASE("full-scale task arithmetic", "[dataset]") {
  const auto meta = full_scale_meta();
  CHECK(meta.size() == 236808);
  CHECK(select_trials(meta, TaskSpec::single(1)).size() == 5148);
  CHECK(select_trials(meta, TaskSpec::cross()).size() == 236808);
  CHECK_THROWS_AS(select_trials(meta, TaskSpec::single(47)), DataError);
  std::size_t alive = 0;
  for (const auto& m : meta) alive += m.label == kAlive;
  // The classes differ by exactly one concept's trials (46 subjects x 12 repetitions).
  CHECK(meta.size() - 2 * alive == 46 * 12);
}

TEST_CASE("task spec parsing", "[dataset]") {
  CHECK(TaskSpec::parse("cross").kind == TaskSpec::Kind::cross_subject);
  const auto s = TaskSpec::parse("single:7");
  CHECK(s.kind == TaskSpec::Kind::single_subject);
  CHECK(s.subject == 7);
  CHECK(s.to_string() == "single:7");
  CHECK_THROWS_AS(TaskSpec::parse("single:x"), ConfigError);
  CHECK_THROWS_AS(TaskSpec::parse("pooled"), ConfigError);
}

TEST_CASE("single-subject build of a two-subject set", "[dataset]") {
  const auto set = synth(SynthMode::linear, 200, 4, 1.0, 2);
  const auto one = build_task(set, TaskSpec::single(1));
  CHECK(one.size() == 100);
  for (const auto& m : one.meta) CHECK(m.subject == 1);
  CHECK(build_task(set, TaskSpec::cross()).size() == 200);
  CHECK_THROWS(build_task(set, TaskSpec::single(3)));
}

TEST_CASE("split sizes and determinism", "[dataset]") {
  const auto set = synth(SynthMode::linear, 10, 1);
  const auto a = split(set, 0.2, 5);
  CHECK(indices_of(a, Split::test).size() == 2);
  CHECK(indices_of(a, Split::train).size() == 8);
  CHECK(split(set, 0.2, 5).meta == a.meta);
  CHECK(std::llround(0.2 * 236808) == 47362);
}

TEST_CASE("split partitions the trials for any size and seed", "[dataset][property]") {
  Rng rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 2 * (5 + rng.below(200));
    const auto set = synth(SynthMode::linear, n, rep);
    const auto s = split(set, 0.2, rng.next_u64());
    const auto train = indices_of(s, Split::train), test = indices_of(s, Split::test);
    CHECK(train.size() + test.size() == n);
    CHECK(test.size() == static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n))));
    std::set<std::size_t> all(train.begin(), train.end());
    all.insert(test.begin(), test.end());
    CHECK(all.size() == n);
  }
  CHECK_THROWS_AS(split(synth(SynthMode::linear, 2, 0), 0.2, 0), DataError);
}

TEST_CASE("synthetic generation is bit-exact per seed", "[dataset]") {
  for (const auto mode : {SynthMode::linear, SynthMode::xor_, SynthMode::subject_signature}) {
    const auto a = synth(mode, 40, 123, 1.0, 2);
    const auto b = synth(mode, 40, 123, 1.0, 2);
    CHECK(a == b);
    CHECK_FALSE(a.tensor == synth(mode, 40, 124, 1.0, 2).tensor);
    CHECK(a.tensor.size() == 40u * 63u * 50u);
  }
}

TEST_CASE("linear mode is recoverable at high snr", "[dataset]") {
  const auto set = synth(SynthMode::linear, 200, 8, 50.0);
  // Class templates from the first half, nearest template on the second half.
  const std::size_t stride = set.trial_stride(), half = set.size() / 2;
  std::vector<double> mean[2] = {std::vector<double>(stride), std::vector<double>(stride)};
  for (std::size_t i = 0; i < half; ++i) {
    const auto t = set.trial(i);
    for (std::size_t k = 0; k < stride; ++k) mean[set.meta[i].label][k] += t[k];
  }
  std::size_t correct = 0;
  for (std::size_t i = half; i < set.size(); ++i) {
    const auto t = set.trial(i);
    double d[2] = {0, 0};
    for (int c = 0; c < 2; ++c) {
      for (std::size_t k = 0; k < stride; ++k) d[c] += t[k] * mean[c][k];
    }
    correct += (d[1] > d[0] ? 1 : 0) == set.meta[i].label;
  }
  CHECK(correct == set.size() - half);
}

TEST_CASE("xor mode has matching class means", "[dataset]") {
  const auto set = synth(SynthMode::xor_, 10000, 21);
  const std::size_t stride = set.trial_stride();
  std::vector<double> sum[2], sq[2];
  std::size_t n[2] = {0, 0};
  for (int c = 0; c < 2; ++c) sum[c].assign(stride, 0.0), sq[c].assign(stride, 0.0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const int c = set.meta[i].label;
    ++n[c];
    const auto t = set.trial(i);
    for (std::size_t k = 0; k < stride; ++k) {
      sum[c][k] += t[k];
      sq[c][k] += static_cast<double>(t[k]) * t[k];
    }
  }
  std::size_t beyond = 0;
  double max_z = 0.0;
  for (std::size_t k = 0; k < stride; ++k) {
    double se2 = 0.0, diff = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double m = sum[c][k] / n[c];
      const double var = (sq[c][k] - n[c] * m * m) / (n[c] - 1);
      se2 += var / n[c];
      diff += c ? m : -m;
    }
    const double z = std::abs(diff) / std::sqrt(se2);
    beyond += z > 3.0;
    max_z = std::max(max_z, z);
  }
  CHECK(static_cast<double>(beyond) <= 0.01 * static_cast<double>(stride));
  CHECK(max_z < 5.0);
}

TEST_CASE("subject targets map onto consecutive classes", "[dataset]") {
  const auto set = synth(SynthMode::subject_signature, 80, 2, 1.0, 4);
  const auto t = make_targets(set, Target::subject);
  CHECK(t.n_classes == 4);
  for (std::size_t i = 0; i < set.size(); ++i) CHECK(t.values[i] == set.meta[i].subject - 1);
  CHECK(make_targets(set, Target::animacy).n_classes == 2);
}

TEST_CASE("epoch files round-trip exactly", "[dataset][io]") {
  const auto dir = testing::scratch_dir("dataset_io");
  const auto set = split(synth(SynthMode::xor_, 30, 3, 1.0, 3), 0.2, 1);
  save_epoch_set(set, dir / "a.eegb");
  const auto back = load_epoch_set(dir / "a.eegb");
  CHECK(back == set);
  save_epoch_set(back, dir / "b.eegb");
  CHECK(read_bytes(dir / "a.eegb") == read_bytes(dir / "b.eegb"));
  CHECK(read_bytes(manifest_path(dir / "a.eegb")) == read_bytes(manifest_path(dir / "b.eegb")));
}

TEST_CASE("raw recordings round-trip exactly", "[dataset][io]") {
  const auto dir = testing::scratch_dir("dataset_raw");
  SynthConfig cfg;
  cfg.n_trials = 6;
  cfg.seed = 4;
  const auto raw = generate_synthetic_raw(cfg);
  save_raw(raw, dir / "r.eegb");
  const auto back = load_raw(dir / "r.eegb");
  CHECK(back.recording.data == raw.recording.data);
  CHECK(back.recording.channel_names == raw.recording.channel_names);
  CHECK(back.recording.sample_rate == raw.recording.sample_rate);
  CHECK(back.meta == raw.meta);
  REQUIRE(back.recording.events.size() == raw.recording.events.size());
  for (std::size_t i = 0; i < raw.meta.size(); ++i) {
    CHECK(back.recording.events[i].sample == raw.recording.events[i].sample);
  }
  CHECK_THROWS_AS(load_epoch_set(dir / "r.eegb"), FormatError);
}

TEST_CASE("corrupted epoch files raise distinct errors", "[dataset][io]") {
  const auto dir = testing::scratch_dir("dataset_bad");
  const auto set = synth(SynthMode::linear, 6, 3);
  const auto path = dir / "x.eegb";
  save_epoch_set(set, path);
  const auto good = read_bytes(path);

  auto bytes = good;
  bytes[0] = 'X';
  write_bytes(path, bytes);
  CHECK(load_error(path) == FormatErrorKind::bad_magic);

  bytes = good;
  bytes[4] = 2;
  write_bytes(path, bytes);
  CHECK(load_error(path) == FormatErrorKind::version_mismatch);

  bytes = good;
  bytes.resize(bytes.size() - 7);
  write_bytes(path, bytes);
  CHECK(load_error(path) == FormatErrorKind::truncated_payload);

  // Manifest with 5 lines for a 6-trial tensor.
  write_bytes(path, good);
  std::ifstream in(manifest_path(path));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  in.close();
  REQUIRE(lines.size() == 6);
  std::ofstream out(manifest_path(path), std::ios::trunc);
  for (std::size_t i = 0; i < 5; ++i) out << lines[i] << "\n";
  out.close();
  CHECK(load_error(path) == FormatErrorKind::length_mismatch);

  CHECK_THROWS_AS(load_epoch_set(dir / "missing.eegb"), DataError);
}

TEST_CASE("epoch set validation", "[dataset]") {
  auto set = synth(SynthMode::linear, 4, 0);
  set.validate();
  set.meta[0].label = 1 - set.meta[0].label;
  CHECK_THROWS_AS(set.validate(), DataError);
  set = synth(SynthMode::linear, 4, 0);
  set.tensor.pop_back();
  CHECK_THROWS_AS(set.validate(), DataError);
}

TEST_CASE("synthetic config validation", "[dataset]") {
  SynthConfig cfg;
  cfg.n_trials = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.n_trials = 8;
  cfg.snr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(synth_mode_from_string("quadratic"), ConfigError);
}
