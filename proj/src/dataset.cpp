#include "neurodecode/dataset.hpp"

#include "neurodecode/errors.hpp"
#include "neurodecode/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace neurodecode::data {

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  if (s == "unassigned") return Split::unassigned;
  throw DataError("unknown split '" + std::string(s) + "'");
}

std::span<const float> EpochSet::trial(std::size_t i) const {
  return {tensor.data() + i * trial_stride(), trial_stride()};
}

std::span<float> EpochSet::trial(std::size_t i) {
  return {tensor.data() + i * trial_stride(), trial_stride()};
}

void EpochSet::validate() const {
  if (tensor.size() != meta.size() * trial_stride()) {
    throw DataError("epoch tensor holds " + std::to_string(tensor.size()) + " values, expected " +
                    std::to_string(meta.size()) + " trials x " + std::to_string(trial_stride()));
  }
  std::map<int, std::string> names;
  for (const auto& m : meta) {
    const auto label = category_to_label(m.category);
    if (!label || *label != m.label) {
      throw DataError("trial " + std::to_string(m.trial_id) + ": label " + std::to_string(m.label) +
                      " inconsistent with category '" + m.category + "'");
    }
    auto [it, inserted] = names.emplace(m.concept_id, m.concept_name);
    if (!inserted && it->second != m.concept_name) {
      throw DataError("concept id " + std::to_string(m.concept_id) + " used for both '" + it->second +
                      "' and '" + m.concept_name + "'");
    }
  }
}

std::optional<int> category_to_label(std::string_view category) {
  static const std::set<std::string_view> nonliving = {
      "tool", "sports equipment", "musical instrument", "electronic device", "weapon"};
  static const std::set<std::string_view> alive = {
      "animal", "animal, bird", "animal, insect", "animal, food", "body part", "people"};
  if (nonliving.contains(category)) return kNonliving;
  if (alive.contains(category)) return kAlive;
  return std::nullopt;
}

const std::vector<CategoryInfo>& category_table() {
  static const std::vector<CategoryInfo> table = {
      {"animal", kAlive, 113},           {"body part", kAlive, 34},
      {"animal, bird", kAlive, 25},      {"animal, food", kAlive, 20},
      {"animal, insect", kAlive, 17},    {"people", kAlive, 5},
      {"tool", kNonliving, 59},          {"sports equipment", kNonliving, 51},
      {"electronic device", kNonliving, 43}, {"musical instrument", kNonliving, 33},
      {"weapon", kNonliving, 29},
  };
  return table;
}

const std::vector<Concept>& concept_catalog() {
  static const std::vector<Concept> catalog = [] {
    std::vector<Concept> out;
    for (const auto& cat : category_table()) {
      for (int k = 0; k < cat.n_objects; ++k) {
        const int id = static_cast<int>(out.size());
        out.push_back({id, cat.name + " #" + std::to_string(k + 1), cat.name, cat.label});
      }
    }
    return out;
  }();
  return catalog;
}

const std::vector<int>& concepts_with_label(int label) {
  static const auto lists = [] {
    std::array<std::vector<int>, 2> out;
    for (const auto& c : concept_catalog()) out[static_cast<std::size_t>(c.label)].push_back(c.id);
    return out;
  }();
  if (label != kAlive && label != kNonliving) throw DataError("label must be 0 or 1");
  return lists[static_cast<std::size_t>(label)];
}

TaskSpec TaskSpec::parse(std::string_view text) {
  if (text == "cross") return cross();
  constexpr std::string_view prefix = "single:";
  if (text.starts_with(prefix)) {
    const std::string id(text.substr(prefix.size()));
    try {
      std::size_t used = 0;
      const int subject = std::stoi(id, &used);
      if (used == id.size()) return single(subject);
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("task must be 'cross' or 'single:<subject id>', got '" + std::string(text) + "'");
}

std::string TaskSpec::to_string() const {
  return kind == Kind::cross_subject ? "cross" : "single:" + std::to_string(subject);
}

std::vector<std::size_t> select_trials(std::span<const TrialMeta> meta, const TaskSpec& task) {
  std::vector<std::size_t> idx;
  if (task.kind == TaskSpec::Kind::cross_subject) {
    idx.resize(meta.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  if (task.subject < 1 || task.subject > kMaxSubject) {
    throw DataError("unknown subject id " + std::to_string(task.subject));
  }
  for (std::size_t i = 0; i < meta.size(); ++i) {
    if (meta[i].subject == task.subject) idx.push_back(i);
  }
  if (idx.empty()) throw DataError("unknown subject id " + std::to_string(task.subject) + ": no trials");
  return idx;
}

EpochSet subset(const EpochSet& set, std::span<const std::size_t> indices) {
  EpochSet out;
  out.n_channels = set.n_channels;
  out.n_samples = set.n_samples;
  out.tensor.reserve(indices.size() * set.trial_stride());
  out.meta.reserve(indices.size());
  for (const std::size_t i : indices) {
    const auto t = set.trial(i);
    out.tensor.insert(out.tensor.end(), t.begin(), t.end());
    out.meta.push_back(set.meta[i]);
  }
  return out;
}

EpochSet build_task(const EpochSet& set, const TaskSpec& task) {
  return subset(set, select_trials(set.meta, task));
}

std::vector<TrialMeta> full_scale_meta(int n_subjects, int repetitions) {
  std::vector<TrialMeta> meta;
  meta.reserve(static_cast<std::size_t>(n_subjects) * concept_catalog().size() *
               static_cast<std::size_t>(repetitions));
  std::int64_t id = 0;
  for (int s = 1; s <= n_subjects; ++s) {
    for (const auto& c : concept_catalog()) {
      for (int r = 0; r < repetitions; ++r) {
        meta.push_back({id++, s, c.id, c.name, c.category, c.label, Split::unassigned});
      }
    }
  }
  return meta;
}

EpochSet split(const EpochSet& set, double test_frac, std::uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0)) throw ConfigError("test fraction must be in (0, 1)");
  const std::size_t n = set.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(n)));
  if (n_test == 0 || n_test >= n) {
    throw DataError(std::to_string(n) + " trials too few for a non-empty split at fraction " +
                    std::to_string(test_frac));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  EpochSet out = set;
  for (auto& m : out.meta) m.split = Split::train;
  for (std::size_t k = 0; k < n_test; ++k) out.meta[order[k]].split = Split::test;
  return out;
}

std::vector<std::size_t> indices_of(const EpochSet& set, Split s) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.meta[i].split == s) idx.push_back(i);
  }
  return idx;
}

const char* to_string(Target t) { return t == Target::animacy ? "animacy" : "subject"; }

Target target_from_string(std::string_view s) {
  if (s == "animacy") return Target::animacy;
  if (s == "subject") return Target::subject;
  throw ConfigError("target must be 'animacy' or 'subject', got '" + std::string(s) + "'");
}

Targets make_targets(const EpochSet& set, Target target) {
  Targets out;
  out.values.reserve(set.size());
  if (target == Target::animacy) {
    for (const auto& m : set.meta) out.values.push_back(m.label);
    out.n_classes = 2;
    return out;
  }
  std::set<int> subjects;
  for (const auto& m : set.meta) subjects.insert(m.subject);
  std::map<int, int> index;
  for (const int s : subjects) index.emplace(s, static_cast<int>(index.size()));
  for (const auto& m : set.meta) out.values.push_back(index.at(m.subject));
  out.n_classes = std::max(2, static_cast<int>(index.size()));
  return out;
}

}  // namespace neurodecode::data
