#pragma once

#include <unsupported/Eigen/AutoDiff>

namespace evpose {

/// Forward-mode scalar with a run-time sized derivative vector.
using AdScalar = Eigen::AutoDiffScalar<Eigen::VectorXd>;

inline double value_of(double x) { return x; }
inline double value_of(const AdScalar& x) { return x.value(); }

/// Seeds an active variable: value x, unit derivative in slot `index` of `size`.
inline AdScalar ad_variable(double x, Eigen::Index size, Eigen::Index index) {
  return AdScalar(x, size, index);
}

inline AdScalar ad_constant(double x, Eigen::Index size) {
  return AdScalar(x, Eigen::VectorXd::Zero(size));
}

}  // namespace evpose
