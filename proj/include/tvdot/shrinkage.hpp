#pragma once

#include <Eigen/Core>

#include <cmath>

namespace tvdot {

/// Soft thresholding max(|x| - t, 0) x / |x|, with 0/0 = 0.
template <typename Scalar>
Scalar shrink_scalar(Scalar x, Scalar t) {
  const Scalar mag = std::abs(x);
  if (mag == Scalar(0)) return Scalar(0);
  const Scalar kept = mag - t;
  return kept > Scalar(0) ? kept * (x / mag) : Scalar(0);
}

/// Componentwise soft thresholding of a whole vector expression.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> shrink_componentwise(
    const Eigen::MatrixBase<Derived>& x, typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([t](Scalar v) { return shrink_scalar(v, t); });
}

/// Coupled (group) shrinkage: every component is scaled by max(s - t, 0) / s
/// with s the Euclidean norm of the group, and 0/0 = 0.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> shrink_coupled(
    const Eigen::MatrixBase<Derived>& components, typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  const Scalar s = components.norm();
  if (s == Scalar(0)) return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(components.size());
  const Scalar kept = s - t;
  if (!(kept > Scalar(0))) return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(components.size());
  return components * (kept / s);
}

}  // namespace tvdot
