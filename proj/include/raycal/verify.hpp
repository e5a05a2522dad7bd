#pragma once

#include "raycal/calibration.hpp"

namespace raycal {

struct SceneGradCheckOptions {
  double eps = 1e-5;
  int rays_per_camera = 4;
  int samples = 16;             // samples per ray during the check
  double residual_noise = 1.0;  // camera perturbation scale
  double field_noise = 0.4;     // raw field value perturbation (std dev)
  std::uint64_t seed = 7;
  // Minimum distance (fraction of a voxel) between any ray sample and the
  // interpolation planes. Central differences straddling a trilinear kink
  // measure the smoothed slope instead of the recorded one-sided derivative,
  // so the check is run on rays where that cannot happen.
  double plane_margin = 0.02;
};

struct SceneGradCheckReport {
  GradCheckResult photometric;
  GradCheckResult prd;
  double max_rel = 0.0;
  int prd_corrs_checked = 0;
};

// Finite-difference verification of the recorded gradients of both losses on
// a (perturbed copy of a) scene: photometric over hand-picked clean pixel
// batches for every camera, projected ray distance over the scene's
// correspondences. Every scalar of every active group is compared.
SceneGradCheckReport scene_grad_check(const TrainState& reference,
                                      const SceneGradCheckOptions& opts = {});

}  // namespace raycal
