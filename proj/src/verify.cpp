#include "raycal/verify.hpp"

#include <algorithm>
#include <cmath>


namespace raycal {

namespace {

struct RayClearance {
  double min_plane_dist = std::numeric_limits<double>::infinity();
  int inside_samples = 0;
};

// Distance (in voxel fractions) from every sample on the ray to the nearest
// trilinear interpolation plane or field bounding plane, plus how many
// samples actually traverse the field box. Rays that miss the box carry no
// field gradient at all and are useless for the check.
RayClearance ray_plane_clearance(const RadianceField& field, const Ray& ray,
                                 const SamplingSpec& spec) {
  RayClearance rc;
  const int n = spec.n_samples;
  const double h_t = (spec.far - spec.near) / n;
  for (int i = 0; i < n; ++i) {
    const double t = spec.near + (i + 0.5) * h_t;
    const Vec3d x = ray.point_at(t);
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      const double h = (field.hi[a] - field.lo[a]) / field.res[a];
      const double lo_d = std::abs(x[a] - field.lo[a]) / h;
      const double hi_d = std::abs(x[a] - field.hi[a]) / h;
      rc.min_plane_dist = std::min({rc.min_plane_dist, lo_d, hi_d});
      if (x[a] < field.lo[a] || x[a] > field.hi[a]) inside = false;
    }
    if (!inside) continue;  // fully outside: identically zero locally
    ++rc.inside_samples;
    for (int a = 0; a < 3; ++a) {
      const double h = (field.hi[a] - field.lo[a]) / field.res[a];
      const double u = (x[a] - field.lo[a]) / h - 0.5;
      const double frac = u - std::floor(u);
      rc.min_plane_dist = std::min({rc.min_plane_dist, frac, 1.0 - frac});
    }
  }
  return rc;
}

}  // namespace

SceneGradCheckReport scene_grad_check(const TrainState& reference,
                                      const SceneGradCheckOptions& opts) {
  // Work on perturbed copies: exact ground truth sits at stationary points
  // (zero-gradient, zero-distance norms) where finite differences degenerate.
  RadianceField field = reference.field;
  std::vector<CameraParams> cameras = reference.cameras;
  Rng rng(opts.seed);
  for (double& v : field.data) v += opts.field_noise * rng.gauss();
  for (CameraParams& cam : cameras) {
    for (int i = 0; i < 2; ++i) {
      cam.intrinsics.df[i] += opts.residual_noise * rng.uniform(-0.5, 0.5);
      cam.intrinsics.dc[i] += opts.residual_noise * rng.uniform(-0.5, 0.5);
      cam.radial.zk[i] += opts.residual_noise * rng.uniform(-0.01, 0.01);
    }
    for (int i = 0; i < 6; ++i) {
      cam.extrinsics.da[i] += opts.residual_noise * rng.uniform(-0.01, 0.01);
    }
    for (int i = 0; i < 3; ++i) {
      cam.extrinsics.dt[i] += opts.residual_noise * rng.uniform(-0.01, 0.01);
    }
    for (Vec3d& node : cam.raxel.dir_offset) {
      for (int i = 0; i < 3; ++i) node[i] += opts.residual_noise * rng.uniform(-1e-3, 1e-3);
    }
    for (Vec3d& node : cam.raxel.org_offset) {
      for (int i = 0; i < 3; ++i) node[i] += opts.residual_noise * rng.uniform(-1e-3, 1e-3);
    }
  }

  SamplingSpec spec;
  spec.near = reference.cfg.near;
  spec.far = reference.cfg.far;
  spec.n_samples = opts.samples;
  spec.stratified = false;
  spec.seed = 0;

  // Clean pixel batches: the rays with the largest clearance from the
  // interpolation planes, so the finite differences see a smooth function.
  std::vector<std::vector<Vec2i>> batches(cameras.size());
  for (std::size_t ci = 0; ci < cameras.size(); ++ci) {
    const CameraModel<double> model = assemble(cameras[ci]);
    // Rank by (traverses the field, clearance); rays skimming the box or
    // missing it entirely carry no usable field gradient.
    std::vector<std::pair<std::pair<int, double>, Vec2i>> candidates;
    const int tries = std::max(60, 15 * opts.rays_per_camera);
    const int min_inside = std::max(2, opts.samples / 3);
    for (int t = 0; t < tries; ++t) {
      const Vec2i px(rng.uniform_int(cameras[ci].width),
                     rng.uniform_int(cameras[ci].height));
      const Ray ray = unproject<double>(model, Vec2d(px.x() + 0.5, px.y() + 0.5));
      const RayClearance rc = ray_plane_clearance(field, ray, spec);
      candidates.push_back({{rc.inside_samples >= min_inside ? 1 : 0,
                             rc.min_plane_dist},
                            px});
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < opts.rays_per_camera && i < static_cast<int>(candidates.size()); ++i) {
      batches[ci].push_back(candidates[i].second);
    }
  }

  Scene scene{&field, &cameras};
  ad::Tape tape;
  std::vector<double> adj;

  SceneGradCheckReport report;

  {
    LiftOptions all;
    // Extended-precision evaluation for the difference quotient; see grad_check.
    const auto plain = [&]() {
      long double acc = 0.0L;
      const FieldView<long double> fv{&field};
      for (std::size_t ci = 0; ci < cameras.size(); ++ci) {
        acc += photometric_loss<long double>(fv, assemble_as<long double>(cameras[ci]),
                                             batches[ci], reference.images[ci], spec);
      }
      return acc;
    };
    const auto grads = [&]() {
      ad::TapeScope ts(tape);
      LiftedScene lifted(scene, all);
      ad::Var acc(0.0);
      for (std::size_t ci = 0; ci < cameras.size(); ++ci) {
        acc += photometric_loss<ad::Var>(lifted.field_view(), lifted.camera(ci),
                                         batches[ci], reference.images[ci], spec);
      }
      return extract_grads(tape, acc, lifted, adj);
    };
    report.photometric = grad_check(scene, all, grads, plain, opts.eps);
  }

  {
    // The projected ray distance never touches the field, so its parameter
    // set is the four camera groups. Correspondences too close to zero
    // distance or to the eta gate are excluded: the norm's curvature blows
    // up at zero and the gate flips under perturbation.
    const double eta = reference.cfg.schedule.eta;
    std::vector<Correspondence> corrs;
    {
      std::vector<CameraModel<double>> models;
      models.reserve(cameras.size());
      for (const CameraParams& cam : cameras) models.push_back(assemble(cam));
      for (const Correspondence& corr : reference.corrs) {
        const auto d = projected_ray_distance<double>(models[corr.cam_a],
                                                      models[corr.cam_b], corr, eta);
        if (d && *d > 0.3 && *d < 0.8 * eta) corrs.push_back(corr);
      }
    }
    report.prd_corrs_checked = static_cast<int>(corrs.size());
    LiftOptions cam_groups;
    cam_groups.active[static_cast<int>(Group::kField)] = false;
    const auto plain = [&]() {
      std::vector<CameraModel<long double>> models;
      models.reserve(cameras.size());
      for (const CameraParams& cam : cameras) models.push_back(assemble_as<long double>(cam));
      return prd_loss<long double>(models, corrs, eta).loss;
    };
    const auto grads = [&]() {
      ad::TapeScope ts(tape);
      LiftedScene lifted(scene, cam_groups);
      std::vector<CameraModel<ad::Var>> models;
      models.reserve(cameras.size());
      for (int ci = 0; ci < lifted.camera_count(); ++ci) models.push_back(lifted.camera(ci));
      const auto res = prd_loss<ad::Var>(models, corrs, eta);
      return extract_grads(tape, res.loss, lifted, adj);
    };
    report.prd = grad_check(scene, cam_groups, grads, plain, opts.eps);
  }

  report.max_rel = std::max(report.photometric.max_rel, report.prd.max_rel);
  return report;
}

}  // namespace raycal
