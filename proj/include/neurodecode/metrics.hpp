#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace neurodecode {

struct ClassificationMetrics {
  double accuracy = 0.0;
  // Macro averages over classes. A class that is never predicted has
  // precision 0; a class absent from the labels has recall 0 and is left out
  // of the macro recall.
  double precision = 0.0;
  double recall = 0.0;
  std::vector<double> class_precision;
  std::vector<double> class_recall;
  std::size_t n = 0;
};

// Throws DataError on empty or misaligned inputs, ConfigError on labels
// outside [0, n_classes).
ClassificationMetrics classification_metrics(std::span<const int> predicted, std::span<const int> truth,
                                             int n_classes = 2);

}  // namespace neurodecode
