// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace emotag {

inline constexpr int kNumLabels = 28;
inline constexpr int kSeqLen = 30;
inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kOovId = 1;

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using IdMatrix = Mat<std::int32_t>;
using LabelMatrix = Mat<std::uint8_t>;

/// Bad input data: malformed files, out-of-range ids, violated preconditions.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure during training or evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command line or configuration.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace emotag
