#include "neurodecode/metrics.hpp"

#include "neurodecode/errors.hpp"

#include <string>

namespace neurodecode {

ClassificationMetrics classification_metrics(std::span<const int> predicted, std::span<const int> truth,
                                             int n_classes) {
  if (predicted.empty()) throw DataError("cannot score an empty split");
  if (predicted.size() != truth.size()) {
    throw DataError("prediction count " + std::to_string(predicted.size()) + " does not match label count " +
                    std::to_string(truth.size()));
  }
  const auto k = static_cast<std::size_t>(n_classes);
  std::vector<std::size_t> tp(k), pred_count(k), true_count(k);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int p = predicted[i], t = truth[i];
    if (p < 0 || p >= n_classes || t < 0 || t >= n_classes) {
      throw ConfigError("class index outside [0, " + std::to_string(n_classes) + ")");
    }
    ++pred_count[static_cast<std::size_t>(p)];
    ++true_count[static_cast<std::size_t>(t)];
    if (p == t) {
      ++correct;
      ++tp[static_cast<std::size_t>(p)];
    }
  }
  ClassificationMetrics m;
  m.n = predicted.size();
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
  m.class_precision.resize(k);
  m.class_recall.resize(k);
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    m.class_precision[c] = pred_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(pred_count[c]) : 0.0;
    m.class_recall[c] = true_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(true_count[c]) : 0.0;
    m.precision += m.class_precision[c];
    if (true_count[c]) {
      m.recall += m.class_recall[c];
      ++present;
    }
  }
  m.precision /= static_cast<double>(k);
  m.recall = present ? m.recall / static_cast<double>(present) : 0.0;
  return m;
}

}  // namespace neurodecode
