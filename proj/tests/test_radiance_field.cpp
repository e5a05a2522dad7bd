#include <doctest.h>

#include <cmath>

#include "raycal/calibration.hpp"
#include "raycal/radiance_field.hpp"
#include "raycal/rng.hpp"
#include "raycal/synth.hpp"
#include "raycal/verify.hpp"
#include "test_util.hpp"

using namespace raycal;

namespace {

RadianceField empty_field(int res = 8) {
  // softplus(-800) underflows to an exact 0 density.
  RadianceField f = RadianceField::create(Vec3i::Constant(res),
                                          Vec3d::Constant(-1.0), Vec3d::Constant(1.0),
                                          1.0, Vec3d::Constant(0.5));
  for (std::size_t v = 0; v < f.voxel_count(); ++v) f.data[4 * v] = -800.0;
  return f;
}

RadianceField constant_field(double sigma, const Vec3d& color, int res = 8) {
  return RadianceField::create(Vec3i::Constant(res), Vec3d::Constant(-1.0),
                               Vec3d::Constant(1.0), sigma, color);
}

// Direct transcription of the rendering sum used as an independent oracle:
// alpha_i = exp(-sigma_i dt_i |d|), C = sum (prod_{j<i} alpha_j)(1-alpha_i) c_i.
Vec3d quadrature_oracle(const RadianceField& field, const Ray& ray, double near,
                        double far, int n) {
  const FieldView<double> fv{&field};
  const double h = (far - near) / n;
  const double dn = ray.dir.norm();
  Vec3d color = Vec3d::Zero();
  double trans = 1.0;
  for (int i = 0; i < n; ++i) {
    const double t = near + (i + 0.5) * h;
    const double delta = (i + 1 < n ? near + (i + 1.5) * h : far) - t;
    const auto s = field_query(fv, ray.point_at(t));
    const double alpha = std::exp(-s.sigma * delta * dn);
    color += trans * (1.0 - alpha) * s.color;
    trans *= alpha;
  }
  return color;
}

}  // namespace

TEST_CASE("field_query: outside bounds is empty space") {
  const RadianceField f = constant_field(3.0, Vec3d(0.2, 0.4, 0.8));
  const FieldView<double> fv{&f};
  for (const Vec3d& x : {Vec3d(1.5, 0, 0), Vec3d(0, -1.01, 0), Vec3d(9, 9, 9)}) {
    const auto s = field_query(fv, x);
    CHECK(s.sigma == 0.0);
    CHECK(s.color == Vec3d::Zero());
  }
}

TEST_CASE("field_query: exact at voxel centers") {
  RadianceField f = constant_field(1.0, Vec3d(0.5, 0.5, 0.5), 6);
  Rng rng(5);
  for (double& v : f.data) v += rng.uniform(-1.0, 1.0);
  const FieldView<double> fv{&f};
  const Vec3d h = (f.hi - f.lo) / 6.0;
  for (int trial = 0; trial < 30; ++trial) {
    const int ix = rng.uniform_int(6), iy = rng.uniform_int(6), iz = rng.uniform_int(6);
    const Vec3d center = f.lo + Vec3d(ix + 0.5, iy + 0.5, iz + 0.5).cwiseProduct(h);
    const auto s = field_query(fv, center);
    const double* vox = f.voxel(ix, iy, iz);
    CHECK(s.sigma == doctest::Approx(ad::softplus_value(vox[0])).epsilon(1e-13));
    CHECK(s.color.x() == doctest::Approx(ad::sigmoid_value(vox[1])).epsilon(1e-13));
    CHECK(s.color.z() == doctest::Approx(ad::sigmoid_value(vox[3])).epsilon(1e-13));
  }
}

TEST_CASE("field_query: cell center averages the 8 activated corners") {
  RadianceField f = constant_field(1.0, Vec3d(0.5, 0.5, 0.5), 4);
  Rng rng(7);
  for (double& v : f.data) v += rng.uniform(-1.5, 1.5);
  const FieldView<double> fv{&f};
  const Vec3d h = (f.hi - f.lo) / 4.0;
  // Center of the cell spanned by voxel centers (1..2)^3.
  const Vec3d x = f.lo + Vec3d(2.0, 2.0, 2.0).cwiseProduct(h);
  const auto s = field_query(fv, x);
  double sigma_mean = 0.0;
  Vec3d color_mean = Vec3d::Zero();
  for (int k = 0; k < 8; ++k) {
    const double* vox = f.voxel(1 + (k & 1), 1 + ((k >> 1) & 1), 1 + ((k >> 2) & 1));
    sigma_mean += ad::softplus_value(vox[0]) / 8.0;
    for (int c = 0; c < 3; ++c) color_mean[c] += ad::sigmoid_value(vox[1 + c]) / 8.0;
  }
  CHECK(s.sigma == doctest::Approx(sigma_mean).epsilon(1e-12));
  CHECK((s.color - color_mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("render_ray: zero-density field renders black with zero weight") {
  const RadianceField f = empty_field();
  const FieldView<double> fv{&f};
  SamplingSpec spec{0.5, 4.0, 32, false, 0};
  RenderStats stats;
  const Vec3d c = render_ray(fv, Ray{Vec3d(0, 0, -2), Vec3d(0, 0, 1)}, spec, &stats);
  CHECK(c == Vec3d::Zero());
  CHECK(stats.weight_sum == 0.0);
}

TEST_CASE("render_ray: opaque limit saturates to the field color") {
  const Vec3d color(0.8, 0.3, 0.6);
  // sigma * (far - near) * |d| = 20 along a unit-speed ray crossing the box.
  const double sigma = 10.0;
  const RadianceField f = constant_field(sigma, color);
  const FieldView<double> fv{&f};
  SamplingSpec spec;
  spec.near = 0.5;
  spec.far = 2.5;
  spec.n_samples = 64;
  const Ray ray{Vec3d(0, 0, -1.5), Vec3d(0, 0, 1)};  // inside the box on [0.5, 2.5]
  RenderStats stats;
  const Vec3d c = render_ray(fv, ray, spec, &stats);
  const Vec3d expect = color * (1.0 - std::exp(-20.0));
  CHECK((c - expect).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(stats.weight_sum <= 1.0);
}

TEST_CASE("render_ray: coarse sum agrees with dense quadrature on a smooth field") {
  SceneOptions opts;
  opts.grid = 32;
  opts.blob_amp_lo = 2.0;
  opts.blob_amp_hi = 5.0;
  const SyntheticScene scene = make_scene(17, 2, 16, 16, 4, opts);
  const FieldView<double> fv{&scene.field};
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Ray ray;
    ray.origin = Vec3d(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), -4.0);
    ray.dir = Vec3d(rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), 1.0);
    SamplingSpec spec;
    spec.near = 2.0;
    spec.far = 6.0;
    spec.n_samples = 64;
    RenderStats stats;
    const Vec3d coarse = render_ray(fv, ray, spec, &stats);
    const Vec3d dense = quadrature_oracle(scene.field, ray, 2.0, 6.0, 8192);
    CHECK((coarse - dense).cwiseAbs().maxCoeff() < 1e-3);
    CHECK(stats.weight_sum >= 0.0);
    CHECK(stats.weight_sum <= 1.0);
  }
}

TEST_CASE("render_ray: occlusion is monotone in the first sample's density") {
  // Front half red, back half blue; the ray sees red first.
  RadianceField f = constant_field(0.5, Vec3d(0.5, 0.5, 0.5), 4);
  const double red_logit = logit(0.9), blue_logit = logit(0.1);
  for (int z = 0; z < 4; ++z) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        double* vox = f.voxel(x, y, z);
        vox[1] = z < 2 ? red_logit : blue_logit;  // red channel
        vox[3] = z < 2 ? blue_logit : red_logit;  // blue channel
      }
    }
  }
  SamplingSpec spec{0.75, 2.75, 2, false, 0};  // two samples: z=-0.5 and z=+0.5
  const Ray ray{Vec3d(0, 0, -2.0), Vec3d(0, 0, 1)};
  double prev_dist = std::numeric_limits<double>::infinity();
  const Vec3d front_color(ad::sigmoid_value(red_logit), 0.5,
                          ad::sigmoid_value(blue_logit));
  for (double s_raw : {-2.0, 0.0, 2.0, 4.0, 8.0}) {
    RadianceField variant = f;
    for (int z = 0; z < 2; ++z) {
      for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) variant.voxel(x, y, z)[0] = s_raw;
      }
    }
    const FieldView<double> fv{&variant};
    const Vec3d c = render_ray(fv, ray, spec);
    const double dist = (c - front_color).norm();
    CHECK(dist < prev_dist);
    prev_dist = dist;
  }
}

TEST_CASE("render_ray: invariant under joint direction/near/far rescaling") {
  SceneOptions opts;
  opts.grid = 16;
  const SyntheticScene scene = make_scene(31, 2, 16, 16, 3, opts);
  const FieldView<double> fv{&scene.field};
  Rng rng(37);
  for (int trial = 0; trial < 25; ++trial) {
    Ray ray;
    ray.origin = Vec3d(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), -4.0);
    ray.dir = Vec3d(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 1.0);
    SamplingSpec spec{2.5, 5.5, 48, false, 0};
    const Vec3d base = render_ray(fv, ray, spec);
    const double s = rng.uniform(0.2, 5.0);
    Ray scaled = ray;
    scaled.dir *= s;
    SamplingSpec spec2 = spec;
    spec2.near = spec.near / s;
    spec2.far = spec.far / s;
    const Vec3d same = render_ray(fv, scaled, spec2);
    CHECK((base - same).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("render_image: zero field gives an all-black image") {
  const RadianceField f = empty_field();
  CameraParams cam;
  cam.width = 16;
  cam.height = 16;
  cam.intrinsics.f0 = Vec2d(20.0, 20.0);
  cam.intrinsics.c0 = Vec2d(8.0, 8.0);
  cam.extrinsics.t0 = Vec3d(0, 0, -4);
  SamplingSpec spec{2.0, 6.0, 16, false, 0};
  const ImageBuffer img = render_image(f, cam, spec);
  for (double v : img.data) CHECK(v == 0.0);
}

TEST_CASE("render_image: opaque constant field fills the frame uniformly") {
  const Vec3d color(0.25, 0.6, 0.9);
  const RadianceField f = constant_field(40.0, color);
  CameraParams cam;
  cam.width = 12;
  cam.height = 12;
  cam.intrinsics.f0 = Vec2d(24.0, 24.0);  // narrow view, fully inside the box
  cam.intrinsics.c0 = Vec2d(6.0, 6.0);
  cam.extrinsics.t0 = Vec3d(0, 0, -4);
  SamplingSpec spec{3.2, 5.0, 96, false, 0};
  const ImageBuffer img = render_image(f, cam, spec);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 12; ++x) {
      for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(img.at(x, y, c) - color[c]) < 1e-6);
      }
    }
  }
}

TEST_CASE("render_image: matches per-pixel render_ray calls bitwise") {
  SceneOptions opts;
  opts.grid = 16;
  const SyntheticScene scene = make_scene(41, 2, 8, 8, 3, opts);
  const CameraParams& cam = scene.cameras[0];
  SamplingSpec spec = scene.sampling;
  spec.stratified = true;  // jitter must also line up per pixel
  spec.seed = 12345;
  const ImageBuffer img = render_image(scene.field, cam, spec);
  const CameraModel<double> model = assemble(cam);
  const FieldView<double> fv{&scene.field};
  for (int j = 0; j < 8; ++j) {
    for (int i = 0; i < 8; ++i) {
      const Ray ray = unproject<double>(model, Vec2d(i + 0.5, j + 0.5));
      const Vec3d c = render_ray(
          fv, ray, per_pixel_spec(spec, static_cast<std::uint64_t>(j) * 8 + i));
      for (int ch = 0; ch < 3; ++ch) CHECK(img.at(i, j, ch) == c[ch]);
    }
  }
}

TEST_CASE("photometric_loss: zero on its own rendering, 3.0 on full error") {
  SceneOptions opts;
  opts.grid = 16;
  const SyntheticScene scene = make_scene(43, 2, 16, 16, 3, opts);
  const FieldView<double> fv{&scene.field};
  std::vector<Vec2i> batch;
  for (int i = 0; i < 16; ++i) batch.emplace_back(i, (5 * i) % 16);

  const double self = photometric_loss<double>(fv, assemble(scene.cameras[0]), batch,
                                               scene.images[0], scene.sampling);
  CHECK(self == 0.0);

  const RadianceField empty = empty_field();
  const FieldView<double> empty_fv{&empty};
  ImageBuffer white = ImageBuffer::create(16, 16, 1.0);
  SamplingSpec spec{2.0, 6.0, 8, false, 0};
  const double full = photometric_loss<double>(empty_fv, assemble(scene.cameras[0]),
                                               batch, white, spec);
  CHECK(full == 3.0);
}

TEST_CASE("photometric_loss: gradients for every group match finite differences") {
  SceneOptions opts;
  opts.grid = 10;
  const SyntheticScene scene = make_scene(47, 3, 16, 16, 3, opts);
  TrainConfig cfg;
  cfg.grid = 10;
  cfg.samples = 12;
  const TrainState state = init_train_state(cfg, scene);
  SceneGradCheckOptions gc;
  gc.samples = 12;
  gc.rays_per_camera = 3;
  const SceneGradCheckReport report = scene_grad_check(state, gc);
  CHECK(report.photometric.max_rel < 1e-4);
  CHECK(report.prd.max_rel < 1e-4);
  CHECK(report.prd_corrs_checked > 0);
}
