#pragma once

#include "neurodecode/autodiff/ops.hpp"
#include "neurodecode/errors.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

namespace neurodecode::ad::detail {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using StridedR = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedR = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;

template <typename T>
CMapR<T> view(const Tensor<T>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return CMapR<T>(t.ptr() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MapR<T> view(Tensor<T>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MapR<T>(t.ptr() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

template <typename T>
void require_rank(const Var<T>& v, std::size_t rank, const char* op, const char* name) {
  require(v.value().rank() == rank, op,
          std::string(name) + " must have rank " + std::to_string(rank) + ", got " + shape_string(v.shape()));
}

template <typename T>
void require_same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  require(&a.tape() == &b.tape(), op, "operands recorded on different tapes");
}

// Accumulator for reductions: at least double, wider when T is.
template <typename T>
using Acc = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;

// Hash of the positive-entry mask of `v`.
template <typename T>
std::uint64_t mask_hash(const std::vector<T>& v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    word = (word << 1) | (v[i] > T{0} ? 1U : 0U);
    if (i % 64 == 63 || i + 1 == v.size()) {
      h = (h ^ word) * 0x100000001b3ULL;
      h ^= h >> 31;
      word = 0;
    }
  }
  return h;
}

}  // namespace neurodecode::ad::detail
