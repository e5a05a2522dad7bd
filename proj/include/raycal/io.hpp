#pragma once

#include <string>
#include <vector>

#include "raycal/camera.hpp"
#include "raycal/optimizer.hpp"
#include "raycal/radiance_field.hpp"
#include "raycal/ray_geometry.hpp"

namespace raycal {

// Full-precision decimal for value-exact text round-trips.
std::string format_double(double v);

// Camera file: one block per camera, lines
//   W H
//   f fx fy
//   c cx cy
//   k k1 k2
//   a a1x a1y a1z a2x a2y a2z
//   t tx ty tz
//   raxel Wg Hg            (optional; then Wg*Hg lines of six floats,
//                           z_d.xyz followed by z_o.xyz per node)
void write_cameras(const std::string& path,
                   std::span<const CameraParams> cameras);
std::vector<CameraParams> read_cameras(const std::string& path);

// Residuals use the same schema with every label prefixed by `d`
// (d f, d c, d k, d a, d t, d raxel). Loading requires matching camera
// count and raxel dimensions.
void write_residuals(const std::string& path,
                     std::span<const CameraParams> cameras);
void read_residuals(const std::string& path, std::vector<CameraParams>& cameras);

// Correspondences: text lines `camA camB xA yA xB yB`; `#` starts a comment.
void write_correspondences(const std::string& path,
                           std::span<const Correspondence> corrs);
std::vector<Correspondence> read_correspondences(const std::string& path);

// Field checkpoint: "RFG1", three u32 dims, six f64 bounds, then
// Nx*Ny*Nz*4 f64 (s, r, g, b logits), x fastest. Little-endian.
void write_field(const std::string& path, const RadianceField& field);
RadianceField read_field(const std::string& path);

// Optimizer state: "ADM1", u32 group count, per group a name, step counter
// and the two f64 moment vectors. Supports exact resume.
void write_adam(const std::string& path, const AdamState& state);
AdamState read_adam(const std::string& path);

}  // namespace raycal
