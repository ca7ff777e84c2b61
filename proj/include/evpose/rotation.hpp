#pragma once

// Rotation algebra shared by the body model, the losses and the fitter.
// Everything here is templated on the scalar so the same code path runs in
// plain double and in forward-mode autodiff.

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "evpose/autodiff.hpp"
#include "evpose/error.hpp"
#include "evpose/types.hpp"

namespace evpose {

/// Continuous 6D rotation: the two generating columns of a rotation matrix.
template <typename Scalar>
struct Rot6D {
  Vec3<Scalar> a;
  Vec3<Scalar> b;

  static Rot6D identity() {
    return {Vec3<Scalar>(Scalar(1), Scalar(0), Scalar(0)),
            Vec3<Scalar>(Scalar(0), Scalar(1), Scalar(0))};
  }
};

using Rot6d = Rot6D<double>;

namespace detail {
template <typename Scalar>
Scalar sqrt_of(const Scalar& x) {
  using std::sqrt;
  return sqrt(x);
}
}  // namespace detail

/// Gram-Schmidt: c1 = a/|a|, c2 = normalize(b - (c1.b) c1), c3 = c1 x c2.
template <typename Scalar>
Mat3<Scalar> rot6d_to_matrix(const Rot6D<Scalar>& r) {
  const Scalar a_norm = detail::sqrt_of(r.a.squaredNorm());
  const double a_val = value_of(a_norm);
  if (!(a_val >= 1e-12)) throw Error(Errc::DegenerateInput, "6D rotation with zero first column");
  const double b_val = std::sqrt(value_of(r.b.squaredNorm()));
  Vec3<double> av, bv;
  for (int i = 0; i < 3; ++i) {
    av[i] = value_of(r.a[i]);
    bv[i] = value_of(r.b[i]);
  }
  if (!(b_val > 0.0) || !(av.cross(bv).norm() / (a_val * b_val) >= 1e-9))
    throw Error(Errc::DegenerateInput, "6D rotation with parallel columns");

  const Vec3<Scalar> c1 = r.a / a_norm;
  const Vec3<Scalar> ortho = r.b - c1.dot(r.b) * c1;
  const Vec3<Scalar> c2 = ortho / detail::sqrt_of(ortho.squaredNorm());
  Mat3<Scalar> m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c1.cross(c2);
  return m;
}

/// Frobenius check of orthonormality and determinant.
inline bool is_rotation(const Mat3<double>& m, double tol = 1e-9) {
  if (!m.allFinite()) return false;
  return (m.transpose() * m - Mat3<double>::Identity()).norm() <= tol &&
         std::abs(m.determinant() - 1.0) <= tol;
}

template <typename Scalar>
Rot6D<Scalar> matrix_to_rot6d(const Mat3<Scalar>& m) {
  if constexpr (std::is_same_v<Scalar, double>) {
    if (!is_rotation(m)) throw Error(Errc::NotARotation, "matrix is not in SO(3)");
  }
  return {m.col(0), m.col(1)};
}

/// Applies `delta` after `prev`: R(delta) * R(prev).
template <typename Scalar>
Rot6D<Scalar> compose_pose(const Rot6D<Scalar>& delta, const Rot6D<Scalar>& prev) {
  return matrix_to_rot6d<Scalar>(rot6d_to_matrix(delta) * rot6d_to_matrix(prev));
}

inline constexpr double kGeodesicClamp = 1e-7;

/// arccos^2 of x clamped to [-1, 1]. The derivative is taken at x clamped to
/// [-1 + delta, 1 - delta] so it stays finite at both ends.
inline double acos_sq(double x) {
  const double c = std::clamp(x, -1.0, 1.0);
  const double a = std::acos(c);
  return a * a;
}

inline double acos_sq_derivative(double x) {
  const double c = std::clamp(x, -1.0 + kGeodesicClamp, 1.0 - kGeodesicClamp);
  return -2.0 * std::acos(c) / std::sqrt(1.0 - c * c);
}

inline AdScalar acos_sq(const AdScalar& x) {
  return AdScalar(acos_sq(x.value()), x.derivatives() * acos_sq_derivative(x.value()));
}

/// Squared geodesic angle between two rotations.
template <typename Scalar>
Scalar geodesic_sq(const Mat3<Scalar>& r1, const Mat3<Scalar>& r2) {
  const Scalar trace = (r1.transpose() * r2).trace();
  const Scalar x = (trace - Scalar(1)) / Scalar(2);
  return acos_sq(x);
}

/// Rodrigues formula; the zero vector maps to the identity.
inline Mat3<double> axis_angle_to_matrix(const Vec3<double>& aa) {
  const double angle = aa.norm();
  if (angle == 0.0) return Mat3<double>::Identity();
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

/// Inverse Rodrigues with angle in [0, pi]. At angle pi the axis sign is fixed
/// so that its first nonzero component is positive.
inline Vec3<double> matrix_to_axis_angle(const Mat3<double>& m) {
  const Eigen::Quaterniond q(m);
  const Vec3<double> v = q.vec();
  const double s = v.norm();
  if (s == 0.0) return Vec3<double>::Zero();
  double angle = 2.0 * std::atan2(s, q.w());
  Vec3<double> axis = v / s;
  if (angle > std::numbers::pi) {
    angle = 2.0 * std::numbers::pi - angle;
    axis = -axis;
  }
  if (std::abs(angle - std::numbers::pi) < 1e-12) {
    for (int i = 0; i < 3; ++i) {
      if (std::abs(axis[i]) > 1e-12) {
        if (axis[i] < 0) axis = -axis;
        break;
      }
    }
  }
  return axis * angle;
}

/// Geodesic interpolation: r0 at u = 0, r1 at u = 1.
inline Mat3<double> slerp(const Mat3<double>& r0, const Mat3<double>& r1, double u) {
  const Vec3<double> rel = matrix_to_axis_angle(r0.transpose() * r1);
  return r0 * axis_angle_to_matrix(u * rel);
}

}  // namespace evpose
