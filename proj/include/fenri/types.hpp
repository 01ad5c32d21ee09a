#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fenri {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Input that fails a structural precondition (shape mismatch, bad range).
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Query outside the domain a grid or field is defined on.
struct OutOfDomain : std::domain_error {
  using std::domain_error::domain_error;
};

/// File exists but does not conform to the format this build supports.
struct UnsupportedFormat : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File is structurally broken (truncated body, missing terminator).
struct CorruptFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numeric breakdown during iteration (NaN loss, divergence).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr double kPi = 3.14159265358979323846;

}  // namespace fenri
