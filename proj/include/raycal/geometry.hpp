#pragma once

#include <Eigen/Dense>

#include "raycal/autodiff.hpp"

namespace raycal {

template <class T> using Vec2T = Eigen::Matrix<T, 2, 1>;
template <class T> using Vec3T = Eigen::Matrix<T, 3, 1>;
template <class T> using Vec6T = Eigen::Matrix<T, 6, 1>;
template <class T> using Mat3T = Eigen::Matrix<T, 3, 3>;

using Vec2d = Eigen::Vector2d;
using Vec3d = Eigen::Vector3d;
using Vec6d = Eigen::Matrix<double, 6, 1>;
using Mat3d = Eigen::Matrix3d;
using Vec2i = Eigen::Vector2i;
using Vec3i = Eigen::Vector3i;

using ad::value;
inline long double value(long double x) { return x; }

// World-space ray. Directions are deliberately not normalized; everything
// downstream must stay well-defined under positive rescaling of `dir`.
template <class T>
struct RayT {
  Vec3T<T> origin;
  Vec3T<T> dir;

  Vec3T<T> point_at(const T& t) const {
    return Vec3T<T>(origin.x() + t * dir.x(), origin.y() + t * dir.y(),
                    origin.z() + t * dir.z());
  }
};

using Ray = RayT<double>;

// Scalar-ordered replacements for Eigen's reductions. Eigen may vectorize
// double reductions with a different summation order than the scalar path the
// tape type takes; keeping one fixed order makes the recorded and plain
// evaluations bitwise identical, so exactly-solved configurations have
// exactly-zero gradients and stay fixed points of the optimizer.
template <class T>
T vdot(const Vec3T<T>& a, const Vec3T<T>& b) {
  return a.x() * b.x() + a.y() * b.y() + a.z() * b.z();
}

template <class T>
Vec3T<T> mat_vec(const Mat3T<T>& m, const Vec3T<T>& v) {
  return Vec3T<T>(m(0, 0) * v.x() + m(0, 1) * v.y() + m(0, 2) * v.z(),
                  m(1, 0) * v.x() + m(1, 1) * v.y() + m(1, 2) * v.z(),
                  m(2, 0) * v.x() + m(2, 1) * v.y() + m(2, 2) * v.z());
}

// m^T v without materializing the transpose.
template <class T>
Vec3T<T> mat_t_vec(const Mat3T<T>& m, const Vec3T<T>& v) {
  return Vec3T<T>(m(0, 0) * v.x() + m(1, 0) * v.y() + m(2, 0) * v.z(),
                  m(0, 1) * v.x() + m(1, 1) * v.y() + m(2, 1) * v.z(),
                  m(0, 2) * v.x() + m(1, 2) * v.y() + m(2, 2) * v.z());
}

template <class T>
T vec_norm(const Vec3T<T>& v) {
  using std::sqrt;
  using ad::sqrt;
  return sqrt(v.x() * v.x() + v.y() * v.y() + v.z() * v.z());
}

// 2-vector norm that is safe to differentiate through an exact zero (the
// true subgradient 0 is recorded instead of 0/0).
template <class T>
T vec2_norm_safe(const T& dx, const T& dy) {
  using std::sqrt;
  using ad::sqrt;
  T s = dx * dx + dy * dy;
  if (value(s) == 0.0) return T(0.0);
  return sqrt(s);
}

}  // namespace raycal

// The finite-difference oracle evaluates the scalar-templated pipeline in
// extended precision; Eigen needs the mixed combinations spelled out.
namespace Eigen {
template <typename BinaryOp>
struct ScalarBinaryOpTraits<double, long double, BinaryOp> {
  using ReturnType = long double;
};
template <typename BinaryOp>
struct ScalarBinaryOpTraits<long double, double, BinaryOp> {
  using ReturnType = long double;
};
}  // namespace Eigen
