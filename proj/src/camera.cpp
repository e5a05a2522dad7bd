#include "raycal/camera.hpp"

#include <algorithm>
#include <cmath>

namespace raycal {

void CameraParams::validate() const {
  if (width <= 0 || height <= 0) {
    throw InvalidCamera("camera: non-positive image size");
  }
  const Vec2d f = effective_f();
  if (!(f.x() > 0.0) || !(f.y() > 0.0)) {
    throw InvalidCamera("camera: effective focal length must be positive");
  }
  const Vec2d c = effective_c();
  if (c.x() < -0.5 * width || c.x() > 1.5 * width || c.y() < -0.5 * height ||
      c.y() > 1.5 * height) {
    throw InvalidCamera("camera: principal point outside bounds +/- 50%");
  }
  if (c.x() == 0.0 || c.y() == 0.0) {
    throw InvalidCamera("camera: principal point component is zero");
  }
  const Vec2d k = effective_k();
  if (!std::isfinite(k.x()) || !std::isfinite(k.y())) {
    throw InvalidCamera("camera: radial coefficients not finite");
  }
  if (raxel.cols != 0 || raxel.rows != 0) {
    if (raxel.cols < 2 || raxel.rows < 2) {
      throw InvalidCamera("camera: raxel grid must be at least 2x2");
    }
    if (raxel.dir_offset.size() != raxel.node_count() ||
        raxel.org_offset.size() != raxel.node_count()) {
      throw InvalidCamera("camera: raxel node count mismatch");
    }
    for (std::size_t i = 0; i < raxel.node_count(); ++i) {
      if (!raxel.dir_offset[i].allFinite() || !raxel.org_offset[i].allFinite()) {
        throw InvalidCamera("camera: raxel offsets not finite");
      }
    }
  }
  // Exercises the degeneracy checks.
  (void)rotation_from_6vec<double>(effective_a());
}

CameraModel<double> assemble(const CameraParams& params) {
  return assemble_as<double>(params);
}

std::pair<Vec3d, Vec3d> raxel_offset(const RaxelGrid& grid, int width,
                                     int height, const Vec2d& p) {
  CameraModel<double> m;
  m.width = width;
  m.height = height;
  m.raxel_cols = grid.cols;
  m.raxel_rows = grid.rows;
  m.raxel_dir.assign(grid.dir_offset.begin(), grid.dir_offset.end());
  m.raxel_org.assign(grid.org_offset.begin(), grid.org_offset.end());
  return raxel_offset<double>(m, p);
}

Ray unproject(const CameraParams& params, const Vec2d& p) {
  return unproject<double>(assemble(params), p);
}

Vec2d project(const CameraParams& params, const Vec3d& x) {
  return project<double>(assemble(params), x);
}

Vec3d world_to_camera(const CameraParams& params, const Vec3d& x) {
  return world_to_camera<double>(assemble(params), x);
}

void clamp_residuals(CameraParams& params) {
  const Vec2d fmax = 0.5 * params.intrinsics.f0;
  const double cmax = 0.25 * std::min(params.width, params.height);
  params.intrinsics.df.x() =
      std::clamp(params.intrinsics.df.x(), -fmax.x(), fmax.x());
  params.intrinsics.df.y() =
      std::clamp(params.intrinsics.df.y(), -fmax.y(), fmax.y());
  params.intrinsics.dc.x() = std::clamp(params.intrinsics.dc.x(), -cmax, cmax);
  params.intrinsics.dc.y() = std::clamp(params.intrinsics.dc.y(), -cmax, cmax);
}

}  // namespace raycal
