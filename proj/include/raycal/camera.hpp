#pragma once

#include <utility>
#include <vector>

#include "raycal/geometry.hpp"

namespace raycal {

// Learnable camera state. Initialization values (suffix 0) are frozen; only
// the residuals are touched by the optimizer.
struct Intrinsics {
  Vec2d f0{0.0, 0.0};  // focal lengths, pixels
  Vec2d c0{0.0, 0.0};  // principal point, pixels
  Vec2d df{0.0, 0.0};
  Vec2d dc{0.0, 0.0};
};

struct Extrinsics {
  Vec6d a0 = (Vec6d() << 1, 0, 0, 0, 1, 0).finished();  // two rotation columns
  Vec3d t0{0.0, 0.0, 0.0};
  Vec6d da = Vec6d::Zero();
  Vec3d dt{0.0, 0.0, 0.0};
};

struct RadialDistortion {
  Vec2d k0{0.0, 0.0};
  Vec2d zk{0.0, 0.0};
};

// Control grid of per-region ray offsets, bilinearly interpolated over the
// image. Node (0,0) sits at pixel (0,0) and node (cols-1, rows-1) at (W,H).
struct RaxelGrid {
  int cols = 0;
  int rows = 0;
  std::vector<Vec3d> dir_offset;  // z_d, row-major
  std::vector<Vec3d> org_offset;  // z_o, row-major

  static RaxelGrid zero(int cols, int rows) {
    RaxelGrid g;
    g.cols = cols;
    g.rows = rows;
    g.dir_offset.assign(static_cast<std::size_t>(cols) * rows, Vec3d::Zero());
    g.org_offset.assign(static_cast<std::size_t>(cols) * rows, Vec3d::Zero());
    return g;
  }
  std::size_t node_count() const {
    return static_cast<std::size_t>(cols) * rows;
  }
};

struct CameraParams {
  int width = 0;
  int height = 0;
  Intrinsics intrinsics;
  Extrinsics extrinsics;
  RadialDistortion radial;
  RaxelGrid raxel;

  Vec2d effective_f() const { return intrinsics.f0 + intrinsics.df; }
  Vec2d effective_c() const { return intrinsics.c0 + intrinsics.dc; }
  Vec2d effective_k() const { return radial.k0 + radial.zk; }
  Vec6d effective_a() const { return extrinsics.a0 + extrinsics.da; }
  Vec3d effective_t() const { return extrinsics.t0 + extrinsics.dt; }

  void validate() const;
};

// Default control-grid resolution: one node per 8x8 pixel block.
inline int default_raxel_dim(int pixels) {
  return std::max(2, (pixels + 7) / 8);
}

// Camera ready for evaluation: effective parameters with the rotation already
// orthonormalized. T is double for plain evaluation or ad::Var when recording.
template <class T>
struct CameraModel {
  int width = 0;
  int height = 0;
  Vec2T<T> f;
  Vec2T<T> c;
  Vec2T<T> k;
  Mat3T<T> R;
  Vec3T<T> t;
  int raxel_cols = 0;
  int raxel_rows = 0;
  std::vector<Vec3T<T>> raxel_dir;
  std::vector<Vec3T<T>> raxel_org;
};

// Orthonormalizes two unnormalized 3-columns into a rotation matrix:
// b1 = N(a1), b2 = N(a2 - (b1.a2) b1), b3 = b1 x b2.
template <class T>
Mat3T<T> rotation_from_6vec(const Vec6T<T>& a) {
  const Vec3T<T> a1 = a.template head<3>();
  const Vec3T<T> a2 = a.template tail<3>();
  const T n1 = vec_norm<T>(a1);
  if (value(n1) < 1e-12) {
    throw DegenerateRotation("rotation_from_6vec: first column near zero");
  }
  const Vec3T<T> b1 = a1 / n1;
  const Vec3T<T> u2 = a2 - vdot<T>(b1, a2) * b1;
  const T n2 = vec_norm<T>(u2);
  if (value(n2) < 1e-12) {
    throw DegenerateRotation("rotation_from_6vec: columns near parallel");
  }
  const Vec3T<T> b2 = u2 / n2;
  const Vec3T<T> b3 = b1.cross(b2);
  Mat3T<T> r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b3;
  return r;
}

// Fourth-order radial distortion, exactly as modeled: coordinates are
// normalized by the principal point (not the focal length) and each axis is
// scaled independently. Returns the distorted homogeneous pixel.
template <class T>
Vec3T<T> apply_radial(const Vec2d& p, const Vec2T<T>& c, const Vec2T<T>& k) {
  if (value(c.x()) == 0.0 || value(c.y()) == 0.0) {
    throw InvalidCamera("apply_radial: principal point component is zero");
  }
  const T nx = (p.x() - c.x()) / c.x();
  const T ny = (p.y() - c.y()) / c.y();
  const T nx2 = nx * nx;
  const T ny2 = ny * ny;
  const T dx = T(1.0) + k.x() * nx2 + k.y() * nx2 * nx2;
  const T dy = T(1.0) + k.x() * ny2 + k.y() * ny2 * ny2;
  return Vec3T<T>(p.x() * dx, p.y() * dy, T(1.0));
}

namespace detail {

struct BilinearCell {
  int i0, j0;     // lower-left node
  double fx, fy;  // fractions inside the cell
};

inline BilinearCell raxel_cell(int cols, int rows, int width, int height,
                               const Vec2d& p) {
  if (p.x() < 0.0 || p.x() > width || p.y() < 0.0 || p.y() > height) {
    throw OutOfBounds("raxel_offset: pixel outside image bounds");
  }
  const double gx = p.x() / width * (cols - 1);
  const double gy = p.y() / height * (rows - 1);
  BilinearCell cell;
  cell.i0 = std::min(static_cast<int>(gx), cols - 2);
  cell.j0 = std::min(static_cast<int>(gy), rows - 2);
  cell.fx = gx - cell.i0;
  cell.fy = gy - cell.j0;
  return cell;
}

}  // namespace detail

// Bilinear interpolation of the ray direction/origin offsets at pixel p.
// The four node weights (1-|x-px|)(1-|y-py|) sum to one.
template <class T>
std::pair<Vec3T<T>, Vec3T<T>> raxel_offset(const CameraModel<T>& cam,
                                           const Vec2d& p) {
  const auto cell = detail::raxel_cell(cam.raxel_cols, cam.raxel_rows,
                                       cam.width, cam.height, p);
  const double w00 = (1.0 - cell.fx) * (1.0 - cell.fy);
  const double w10 = cell.fx * (1.0 - cell.fy);
  const double w01 = (1.0 - cell.fx) * cell.fy;
  const double w11 = cell.fx * cell.fy;
  const auto at = [&](const std::vector<Vec3T<T>>& nodes, int i, int j) {
    return nodes[static_cast<std::size_t>(j) * cam.raxel_cols + i];
  };
  Vec3T<T> dir = w00 * at(cam.raxel_dir, cell.i0, cell.j0) +
                 w10 * at(cam.raxel_dir, cell.i0 + 1, cell.j0) +
                 w01 * at(cam.raxel_dir, cell.i0, cell.j0 + 1) +
                 w11 * at(cam.raxel_dir, cell.i0 + 1, cell.j0 + 1);
  Vec3T<T> org = w00 * at(cam.raxel_org, cell.i0, cell.j0) +
                 w10 * at(cam.raxel_org, cell.i0 + 1, cell.j0) +
                 w01 * at(cam.raxel_org, cell.i0, cell.j0 + 1) +
                 w11 * at(cam.raxel_org, cell.i0 + 1, cell.j0 + 1);
  return {dir, org};
}

std::pair<Vec3d, Vec3d> raxel_offset(const RaxelGrid& grid, int width,
                                     int height, const Vec2d& p);

// Pixel -> world ray. The direction R K^-1 p' is left unnormalized; raxel
// offsets are added after the world transform.
template <class T>
RayT<T> unproject(const CameraModel<T>& cam, const Vec2d& p) {
  const Vec3T<T> pp = apply_radial(p, cam.c, cam.k);
  const Vec3T<T> dir_cam((pp.x() - cam.c.x()) / cam.f.x(),
                         (pp.y() - cam.c.y()) / cam.f.y(), T(1.0));
  RayT<T> ray;
  ray.dir = mat_vec<T>(cam.R, dir_cam);
  ray.origin = cam.t;
  if (cam.raxel_cols >= 2 && cam.raxel_rows >= 2) {
    auto [ddir, dorg] = raxel_offset(cam, p);
    ray.dir += ddir;
    ray.origin += dorg;
  }
  return ray;
}

template <class T>
Vec3T<T> world_to_camera(const CameraModel<T>& cam, const Vec3T<T>& x) {
  return mat_t_vec<T>(cam.R, Vec3T<T>(x.x() - cam.t.x(), x.y() - cam.t.y(),
                                      x.z() - cam.t.z()));
}

namespace detail {

// Solves p * (1 + k1 n^2 + k2 n^4) = target for p, with n = (p - c)/c, by
// ten unrolled Newton iterations. The distortion acts per axis, so the two
// pixel coordinates invert independently.
template <class T>
T undistort_axis(const T& target, const T& c, const Vec2T<T>& k) {
  T p = target;
  for (int it = 0; it < 10; ++it) {
    const T n = (p - c) / c;
    const T n2 = n * n;
    const T d = T(1.0) + k.x() * n2 + k.y() * n2 * n2;
    const T dd = (2.0 * k.x() * n + 4.0 * k.y() * n2 * n) / c;
    const T g = p * d - target;
    const T gp = d + p * dd;
    if (std::abs(value(gp)) < 1e-12) {
      throw NonConvergent("project: radial inversion hit a flat derivative");
    }
    p = p - g / gp;
  }
  const T n = (p - c) / c;
  const T n2 = n * n;
  const T d = T(1.0) + k.x() * n2 + k.y() * n2 * n2;
  if (std::abs(value(p * d - target)) > 1e-6) {
    throw NonConvergent("project: radial inversion residual above 1e-6 px");
  }
  return p;
}

}  // namespace detail

// World point -> pixel. Inverts the radial map only; raxel offsets are
// additive on rays, not pixels, and are ignored here.
template <class T>
Vec2T<T> project(const CameraModel<T>& cam, const Vec3T<T>& x) {
  const Vec3T<T> q = world_to_camera(cam, x);
  if (value(q.z()) <= 1e-9) {
    throw BehindCamera("project: point has non-positive camera depth");
  }
  const T ux = cam.f.x() * q.x() / q.z() + cam.c.x();
  const T uy = cam.f.y() * q.y() / q.z() + cam.c.y();
  return Vec2T<T>(detail::undistort_axis(ux, cam.c.x(), cam.k),
                  detail::undistort_axis(uy, cam.c.y(), cam.k));
}

// Assembly into an evaluation-ready model with scalar type T (double for
// normal use; the finite-difference oracle instantiates long double).
template <class T>
CameraModel<T> assemble_as(const CameraParams& params) {
  CameraModel<T> m;
  m.width = params.width;
  m.height = params.height;
  m.f = params.effective_f().cast<T>();
  m.c = params.effective_c().cast<T>();
  m.k = params.effective_k().cast<T>();
  m.R = rotation_from_6vec<T>(params.effective_a().cast<T>().eval());
  m.t = params.effective_t().cast<T>();
  m.raxel_cols = params.raxel.cols;
  m.raxel_rows = params.raxel.rows;
  m.raxel_dir.reserve(params.raxel.dir_offset.size());
  m.raxel_org.reserve(params.raxel.org_offset.size());
  for (const Vec3d& node : params.raxel.dir_offset) m.raxel_dir.push_back(node.cast<T>());
  for (const Vec3d& node : params.raxel.org_offset) m.raxel_org.push_back(node.cast<T>());
  return m;
}

// Plain-double assembly and convenience entry points.
CameraModel<double> assemble(const CameraParams& params);
Ray unproject(const CameraParams& params, const Vec2d& p);
Vec2d project(const CameraParams& params, const Vec3d& x);
Vec3d world_to_camera(const CameraParams& params, const Vec3d& x);

// Residual clamps applied after every optimizer step: |df| <= 0.5 f0 and
// |dc| <= 0.25 min(W, H).
void clamp_residuals(CameraParams& params);

}  // namespace raycal
