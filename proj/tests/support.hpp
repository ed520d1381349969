#pragma once

#include "neurodecode/autodiff/gradcheck.hpp"
#include "neurodecode/autodiff/tensor.hpp"
#include "neurodecode/random.hpp"

#include <filesystem>
#include <string>

namespace testing {

using neurodecode::ad::ParamStore;
using neurodecode::ad::Shape;
using neurodecode::ad::Tensor;

inline Tensor<double> random_tensor(Shape shape, neurodecode::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("neurodecode_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
