#pragma once

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "raycal/camera.hpp"
#include "raycal/geometry.hpp"

namespace raycal {

// A feature seen in two images (sub-pixel coordinates).
struct Correspondence {
  int cam_a = 0;
  int cam_b = 0;
  Vec2d p_a{0.0, 0.0};
  Vec2d p_b{0.0, 0.0};
};

template <class T>
struct RayPairT {
  RayT<T> ray_a, ray_b;
  T t_a{}, t_b{};        // closest-point parameters along each ray
  Vec3T<T> x_a, x_b;     // the closest points themselves
};

using RayPair = RayPairT<double>;

// Rays whose directions have a cross product below this squared norm are
// treated as parallel and skipped (near-pure-translation pairs are routine).
inline constexpr double kParallelEps2 = 1e-12;

// Closest points between two (not necessarily unit-speed) lines. Returns
// nullopt for near-parallel directions. t_a, t_b minimize |A(s) - B(t)|
// globally: with a = dA.dA, b = dA.dB, c = dB.dB, d = dA.w, e = dB.w,
// w = oA - oB, the solution is t_a = (b e - c d) / (a c - b^2),
// t_b = (a e - b d) / (a c - b^2).
template <class T>
std::optional<RayPairT<T>> closest_points(const RayT<T>& ray_a,
                                          const RayT<T>& ray_b) {
  const Vec3T<T> cross = ray_a.dir.cross(ray_b.dir);
  const T denom = vdot<T>(cross, cross);
  if (value(denom) < kParallelEps2) return std::nullopt;
  const Vec3T<T> w = ray_a.origin - ray_b.origin;
  const T a = vdot<T>(ray_a.dir, ray_a.dir);
  const T b = vdot<T>(ray_a.dir, ray_b.dir);
  const T c = vdot<T>(ray_b.dir, ray_b.dir);
  const T d = vdot<T>(ray_a.dir, w);
  const T e = vdot<T>(ray_b.dir, w);
  RayPairT<T> pair;
  pair.ray_a = ray_a;
  pair.ray_b = ray_b;
  pair.t_a = (b * e - c * d) / denom;
  pair.t_b = (a * e - b * d) / denom;
  pair.x_a = ray_a.point_at(pair.t_a);
  pair.x_b = ray_b.point_at(pair.t_b);
  return pair;
}

// Shortest distance between the two lines:
// |(oA - oB) . (dA x dB)| / |dA x dB|. Homogeneous in both direction
// magnitudes; nullopt when near parallel.
template <class T>
std::optional<T> ray_distance(const RayT<T>& ray_a, const RayT<T>& ray_b) {
  using std::abs;
  using std::sqrt;
  using ad::abs;
  using ad::sqrt;
  const Vec3T<T> cross = ray_a.dir.cross(ray_b.dir);
  const T denom2 = vdot<T>(cross, cross);
  if (value(denom2) < kParallelEps2) return std::nullopt;
  const T num = vdot<T>(Vec3T<T>(ray_a.origin - ray_b.origin), cross);
  if (value(num) == 0.0) return T(0.0);
  return abs(num) / sqrt(denom2);
}

// True iff both triangulated points have strictly positive depth in the
// opposite camera: z of R_A^T (x_b - t_A) and of R_B^T (x_a - t_B).
template <class T>
bool chirality_valid(const CameraModel<T>& cam_a, const CameraModel<T>& cam_b,
                     const Vec3T<T>& x_a, const Vec3T<T>& x_b) {
  return value(world_to_camera(cam_a, x_b).z()) > 0.0 &&
         value(world_to_camera(cam_b, x_a).z()) > 0.0;
}

inline constexpr double kNoEta = std::numeric_limits<double>::infinity();

// Projected ray distance of one correspondence:
// d_pi = (|pi_A(x_b) - p_A| + |pi_B(x_a) - p_B|) / 2  (pixels).
// Returns nullopt ("skipped") on parallel rays, chirality failure, projection
// failure, or d_pi > eta; skipped pairs contribute no gradient.
template <class T>
std::optional<T> projected_ray_distance(const CameraModel<T>& cam_a,
                                        const CameraModel<T>& cam_b,
                                        const Correspondence& corr,
                                        double eta = kNoEta) {
  const RayT<T> ray_a = unproject(cam_a, corr.p_a);
  const RayT<T> ray_b = unproject(cam_b, corr.p_b);
  const auto pair = closest_points(ray_a, ray_b);
  if (!pair) return std::nullopt;
  if (!chirality_valid(cam_a, cam_b, pair->x_a, pair->x_b)) return std::nullopt;
  Vec2T<T> proj_a, proj_b;
  try {
    proj_a = project(cam_a, pair->x_b);
    proj_b = project(cam_b, pair->x_a);
  } catch (const BehindCamera&) {
    return std::nullopt;
  } catch (const NonConvergent&) {
    return std::nullopt;
  }
  const T da = vec2_norm_safe<T>(proj_a.x() - corr.p_a.x(),
                                 proj_a.y() - corr.p_a.y());
  const T db = vec2_norm_safe<T>(proj_b.x() - corr.p_b.x(),
                                 proj_b.y() - corr.p_b.y());
  const T d_pi = (da + db) * 0.5;
  if (value(d_pi) > eta) return std::nullopt;
  return d_pi;
}

template <class T>
struct PrdResult {
  T loss{};
  int valid = 0;
  int total = 0;
};

namespace detail {

// Mean over the non-skipped distances; zero (with zero gradient) if none.
template <class T>
PrdResult<T> prd_aggregate(std::span<const std::optional<T>> dpis) {
  PrdResult<T> res;
  res.total = static_cast<int>(dpis.size());
  T sum(0.0);
  for (const auto& d : dpis) {
    if (d) {
      sum += *d;
      ++res.valid;
    }
  }
  res.loss = res.valid > 0 ? sum / static_cast<double>(res.valid) : T(0.0);
  return res;
}

}  // namespace detail

// Mean projected ray distance over the valid correspondences (d_pi <= eta).
template <class T>
PrdResult<T> prd_loss(std::span<const CameraModel<T>> cameras,
                      std::span<const Correspondence> corrs, double eta) {
  if (!(eta > 0.0)) throw Error("prd_loss: eta must be positive");
  std::vector<std::optional<T>> dpis;
  dpis.reserve(corrs.size());
  for (const Correspondence& corr : corrs) {
    dpis.push_back(projected_ray_distance(cameras[corr.cam_a],
                                          cameras[corr.cam_b], corr, eta));
  }
  return detail::prd_aggregate<T>(dpis);
}

// Plain-double convenience over camera parameter sets.
PrdResult<double> prd_loss(std::span<const CameraParams> cameras,
                           std::span<const Correspondence> corrs, double eta);

}  // namespace raycal
