#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "raycal/image.hpp"
#include "raycal/radiance_field.hpp"
#include "raycal/ray_geometry.hpp"

namespace raycal {

// Ground-truth generation knobs. The defaults give a field of well-separated
// colored density bumps with cameras on a 60-degree arc looking at its center.
struct SceneOptions {
  int grid = 32;                // field resolution per axis
  double extent = 1.25;         // half-width of the field box, world units
  double arc_deg = 60.0;
  double radius_factor = 4.0;   // ring radius = factor * extent
  double frame_frac = 1.0;      // fraction of the extent framed by the cameras
  Vec2d k_gt{0.0, 0.0};         // ground-truth radial coefficients
  double sigma_floor = 1e-4;    // ambient density floor
  double blob_amp_lo = 6.0;
  double blob_amp_hi = 14.0;
  int gt_samples = 96;          // samples per ray for ground-truth renders
  int corrs_per_pair = 24;
  double corr_sigma_min = 1.0;  // density threshold for correspondence points
  double corr_pixel_noise = 0.0;
};

struct SyntheticScene {
  RadianceField field;
  std::vector<CameraParams> cameras;
  std::vector<ImageBuffer> images;
  std::vector<Correspondence> corrs;
  SamplingSpec sampling;  // near/far/samples used for the ground-truth renders
  std::uint64_t seed = 0;
  SceneOptions options;
};

// Deterministic ground-truth scene: procedural Gaussian blob field, camera
// ring, rendered images and exact correspondences, all derived from `seed`.
SyntheticScene make_scene(std::uint64_t seed, int n_cameras, int width,
                          int height, int n_blobs, const SceneOptions& opts = {});

// Samples 3-D points with density above sigma_min, projects them into both
// cameras of every requested pair and keeps in-bounds, chirality-positive
// points whose projected ray distance under the ground-truth cameras is below
// 1e-8 px. Optional Gaussian pixel noise is added after that filter.
std::vector<Correspondence> gen_correspondences(
    const SyntheticScene& scene, std::span<const std::pair<int, int>> pairs,
    int per_pair, std::uint64_t seed, double sigma_min = 1.0,
    double pixel_noise = 0.0);

struct NoiseSpec {
  double focal_pct = 0.0;      // f <- f * (1 + pct/100)
  double trans_range = 0.0;    // t components += U(-range, range)
  double rot_range_deg = 0.0;  // compose a random axis-angle of U(-deg, deg)
  std::uint64_t seed = 0;

  bool any() const {
    return focal_pct != 0.0 || trans_range != 0.0 || rot_range_deg != 0.0;
  }
};

// Writes the perturbations into the learnable residual slots (df, dt, da), so
// the frozen initialization stays intact and zeroing the residuals restores
// the cameras bit for bit. Deterministic from spec.seed.
void inject_noise(std::span<CameraParams> cameras, const NoiseSpec& spec);

// Scene bundle directory: cameras.txt, corrs.txt, field.rfg, meta.txt and
// images/NNNN.ppm (+ .pfm for float-exact supervision).
void write_scene_bundle(const std::string& dir, const SyntheticScene& scene);

struct SceneBundle {
  std::vector<CameraParams> cameras;
  std::vector<ImageBuffer> images;  // PFM when present, PPM otherwise
  std::vector<Correspondence> corrs;
  RadianceField field;
  std::map<std::string, std::string> meta;
};

SceneBundle load_scene_bundle(const std::string& dir);

// Flat key=value text used by meta.txt and config files.
std::map<std::string, std::string> read_kv_file(const std::string& path);
void write_kv_file(const std::string& path,
                   const std::map<std::string, std::string>& kv);

}  // namespace raycal
