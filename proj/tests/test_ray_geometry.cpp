#include <doctest.h>

#include <Eigen/Geometry>
#include <functional>

#include "raycal/optimizer.hpp"
#include "raycal/params.hpp"
#include "raycal/ray_geometry.hpp"
#include "raycal/rng.hpp"
#include "test_util.hpp"

using namespace raycal;

namespace {

Ray make_ray(double ox, double oy, double oz, double dx, double dy, double dz) {
  return Ray{Vec3d(ox, oy, oz), Vec3d(dx, dy, dz)};
}

double golden_min(const std::function<double(double)>& f, double a, double b) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  for (int it = 0; it < 80; ++it) {
    if (f(c) < f(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - gr * (b - a);
    d = a + gr * (b - a);
  }
  return 0.5 * (a + b);
}

// Brute-force minimum distance between two lines: 2-D grid search over
// (s, t) in [-100, 100]^2, then nested golden sections (the outer objective
// min_t d2(s, t) is a clean 1-D quadratic, so this stays robust even when the
// valley is strongly correlated in s and t).
double brute_force_line_distance(const Ray& ra, const Ray& rb) {
  const auto d2 = [&](double s, double t) {
    return (ra.point_at(s) - rb.point_at(t)).squaredNorm();
  };
  const int n = 201;
  double bs = 0, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double s = -100.0 + 200.0 * i / (n - 1);
    for (int j = 0; j < n; ++j) {
      const double t = -100.0 + 200.0 * j / (n - 1);
      const double v = d2(s, t);
      if (v < best) {
        best = v;
        bs = s;
      }
    }
  }
  const auto inner = [&](double s) {
    const double t = golden_min([&](double tt) { return d2(s, tt); }, -100.0, 100.0);
    return d2(s, t);
  };
  const double s_opt = golden_min(inner, bs - 2.0, bs + 2.0);
  return std::sqrt(inner(s_opt));
}

// A camera on a radius-r arc in the xz plane, looking at the origin.
CameraParams arc_camera(double angle_deg, double radius, int size = 96,
                        double f = 120.0) {
  const double a = angle_deg * M_PI / 180.0;
  const Vec3d pos(radius * std::sin(a), 0.0, -radius * std::cos(a));
  Vec3d fwd = radius == 0.0 ? Vec3d(0, 0, 1) : (-pos).normalized();
  const Vec3d right = Vec3d(0, 1, 0).cross(fwd).normalized();
  const Vec3d down = fwd.cross(right);
  Mat3d rot;
  rot.col(0) = right;
  rot.col(1) = down;
  rot.col(2) = fwd;
  CameraParams cam;
  cam.width = size;
  cam.height = size;
  cam.intrinsics.f0 = Vec2d(f, f);
  cam.intrinsics.c0 = Vec2d(size / 2.0, size / 2.0);
  cam.extrinsics.a0 = testutil::six_vec_of(rot);
  cam.extrinsics.t0 = pos;
  cam.raxel = RaxelGrid::zero(2, 2);
  return cam;
}

// An exact correspondence: one world point projected into both cameras.
Correspondence exact_corr(const CameraParams& a, const CameraParams& b,
                          const Vec3d& q) {
  Correspondence corr;
  corr.cam_a = 0;
  corr.cam_b = 1;
  corr.p_a = project(a, q);
  corr.p_b = project(b, q);
  return corr;
}

}  // namespace

TEST_CASE("closest_points: orthogonal skew lines") {
  const auto pair =
      closest_points<double>(make_ray(0, 0, 0, 1, 0, 0), make_ray(0, 0, 1, 0, 1, 0));
  REQUIRE(pair.has_value());
  CHECK(pair->x_a.norm() < 1e-15);
  CHECK((pair->x_b - Vec3d(0, 0, 1)).norm() < 1e-15);
  CHECK((pair->x_a - pair->x_b).norm() == doctest::Approx(1.0));
}

TEST_CASE("closest_points: intersecting rays meet at the common point") {
  const Vec3d q(0.7, -0.3, 2.0);
  Ray ra{Vec3d(0, 0, 0), q - Vec3d(0, 0, 0)};
  Ray rb{Vec3d(1, 1, 0), q - Vec3d(1, 1, 0)};
  const auto pair = closest_points(ra, rb);
  REQUIRE(pair.has_value());
  CHECK((pair->x_a - q).norm() < 1e-12);
  CHECK((pair->x_b - q).norm() < 1e-12);
  const auto d = ray_distance(ra, rb);
  REQUIRE(d.has_value());
  CHECK(*d < 1e-12);
}

TEST_CASE("closest_points: x hat lies on the ray at t hat") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Ray ra{Vec3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)),
           Vec3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    Ray rb{Vec3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)),
           Vec3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    const auto pair = closest_points(ra, rb);
    if (!pair) continue;
    CHECK((pair->x_a - ra.point_at(pair->t_a)).norm() == 0.0);
    CHECK((pair->x_b - rb.point_at(pair->t_b)).norm() == 0.0);
  }
}

TEST_CASE("closest_points and ray_distance: brute-force oracle on random pairs") {
  Rng rng(7);
  int tested = 0;
  while (tested < 300) {
    Ray ra{Vec3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)),
           Vec3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    Ray rb{Vec3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)),
           Vec3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    if (ra.dir.norm() < 0.3 || rb.dir.norm() < 0.3) continue;
    if (ra.dir.cross(rb.dir).squaredNorm() < 1e-6) continue;
    const auto pair = closest_points(ra, rb);
    REQUIRE(pair.has_value());
    // The oracle's search box is [-100, 100]^2; keep the optimum inside it.
    if (std::abs(pair->t_a) > 80.0 || std::abs(pair->t_b) > 80.0) continue;
    const double closed_form = (pair->x_a - pair->x_b).norm();
    const auto d = ray_distance(ra, rb);
    REQUIRE(d.has_value());
    CHECK(std::abs(*d - closed_form) < 1e-10);
    CHECK(std::abs(closed_form - brute_force_line_distance(ra, rb)) < 1e-6);
    ++tested;
  }
}

TEST_CASE("closest_points: swapping the rays swaps the points") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    Ray ra{Vec3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)),
           Vec3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    Ray rb{Vec3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)),
           Vec3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    const auto ab = closest_points(ra, rb);
    const auto ba = closest_points(rb, ra);
    if (!ab || !ba) continue;
    CHECK((ab->x_a - ba->x_b).norm() < 1e-12);
    CHECK((ab->x_b - ba->x_a).norm() < 1e-12);
    const double dab = (ab->x_a - ab->x_b).norm();
    const double dba = (ba->x_a - ba->x_b).norm();
    CHECK(std::abs(dab - dba) < 1e-12);
  }
}

TEST_CASE("ray_distance: invariant under positive direction rescaling") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    Ray ra{Vec3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)),
           Vec3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    Ray rb{Vec3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)),
           Vec3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    const auto d0 = ray_distance(ra, rb);
    if (!d0) continue;
    Ray ra2 = ra;
    ra2.dir *= rng.uniform(0.1, 10.0);
    Ray rb2 = rb;
    rb2.dir *= rng.uniform(0.1, 10.0);
    const auto d1 = ray_distance(ra2, rb2);
    REQUIRE(d1.has_value());
    CHECK(std::abs(*d1 - *d0) <= 1e-12 * std::max(1.0, std::abs(*d0)));
  }
}

TEST_CASE("parallel rays are reported as skipped, not fatal") {
  const Ray ra = make_ray(0, 0, 0, 1, 0, 0);
  const Ray rb = make_ray(0, 1, 0, 2, 0, 0);
  CHECK(!closest_points(ra, rb).has_value());
  CHECK(!ray_distance(ra, rb).has_value());
}

TEST_CASE("chirality: in-front points pass, behind points fail") {
  CameraParams a = arc_camera(0.0, 0.0);  // at origin facing +z
  CameraParams b = arc_camera(0.0, 0.0);
  const auto ma = assemble(a), mb = assemble(b);
  CHECK(chirality_valid<double>(ma, mb, Vec3d(0, 0, 5), Vec3d(0, 0, 5)));
  CHECK(!chirality_valid<double>(ma, mb, Vec3d(0, 0, 5), Vec3d(0, 0, -5)));
  CHECK(!chirality_valid<double>(ma, mb, Vec3d(0, 0, -5), Vec3d(0, 0, 5)));

  // Depth oracle on a random pose: z of R^T (x - t).
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    CameraParams rc = testutil::make_camera(64, 64, rng);
    const Vec3d x(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Mat3d r = rotation_from_6vec<double>(rc.effective_a());
    const double depth = (r.transpose() * (x - rc.effective_t())).z();
    const auto m = assemble(rc);
    CHECK(chirality_valid<double>(m, m, x, x) == (depth > 0.0));
  }
}

TEST_CASE("projected_ray_distance: exact correspondences are near zero") {
  const CameraParams a = arc_camera(-8.0, 4.0);
  const CameraParams b = arc_camera(8.0, 4.0);
  Rng rng(19);
  for (int i = 0; i < 25; ++i) {
    const Vec3d q(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                  rng.uniform(-0.4, 0.4));
    const Correspondence corr = exact_corr(a, b, q);
    const auto d = projected_ray_distance<double>(assemble(a), assemble(b), corr);
    REQUIRE(d.has_value());
    CHECK(*d < 1e-10);
  }
}

TEST_CASE("projected_ray_distance: behind-camera triangulation is skipped") {
  // Both cameras face +z; the rays meet at z = 1, which is behind camera B
  // placed at z = 2. Chirality must reject the pair.
  CameraParams a = arc_camera(0.0, 0.0);
  CameraParams b = arc_camera(0.0, 0.0);
  b.extrinsics.t0 = Vec3d(0, 0, 2);
  Correspondence corr;
  corr.cam_a = 0;
  corr.cam_b = 1;
  corr.p_a = Vec2d(a.intrinsics.c0.x() - 0.3 * a.intrinsics.f0.x(),
                   a.intrinsics.c0.y());
  corr.p_b = Vec2d(b.intrinsics.c0.x() + 0.3 * b.intrinsics.f0.x(),
                   b.intrinsics.c0.y());
  const auto d = projected_ray_distance<double>(assemble(a), assemble(b), corr);
  CHECK(!d.has_value());
}

TEST_CASE("projected_ray_distance: eta threshold skips outliers") {
  const CameraParams a = arc_camera(-8.0, 4.0);
  const CameraParams b = arc_camera(8.0, 4.0);
  Correspondence corr = exact_corr(a, b, Vec3d(0.1, 0.05, 0.0));
  // An off-epipolar (vertical) shift forces d_pi well above 5 px.
  corr.p_b += Vec2d(0.0, 10.0);
  const auto unthresholded =
      projected_ray_distance<double>(assemble(a), assemble(b), corr);
  REQUIRE(unthresholded.has_value());
  CHECK(*unthresholded > 5.0);
  const auto gated =
      projected_ray_distance<double>(assemble(a), assemble(b), corr, 5.0);
  CHECK(!gated.has_value());
}

TEST_CASE("prd_aggregate: mean over valid entries only") {
  std::vector<std::optional<double>> dpis = {0.2, 0.4, std::nullopt};
  const auto res = detail::prd_aggregate<double>(dpis);
  CHECK(res.loss == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(res.valid == 2);
  CHECK(res.total == 3);

  std::vector<std::optional<double>> none = {std::nullopt, std::nullopt};
  const auto empty = detail::prd_aggregate<double>(none);
  CHECK(empty.loss == 0.0);
  CHECK(empty.valid == 0);
}

TEST_CASE("prd_loss: exact set is near zero with full valid count") {
  std::vector<CameraParams> cams = {arc_camera(-10.0, 4.0), arc_camera(10.0, 4.0)};
  Rng rng(23);
  std::vector<Correspondence> corrs;
  for (int i = 0; i < 20; ++i) {
    corrs.push_back(exact_corr(cams[0], cams[1],
                               Vec3d(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                                     rng.uniform(-0.4, 0.4))));
  }
  const auto res = prd_loss(cams, corrs, 5.0);
  CHECK(res.loss < 1e-10);
  CHECK(res.valid == 20);

  // One forced outlier above eta drops out of the mean.
  corrs[0].p_a += Vec2d(0.0, 12.0);
  const auto res2 = prd_loss(cams, corrs, 5.0);
  CHECK(res2.valid == 19);
  CHECK(res2.loss < 1e-10);
}

TEST_CASE("projected_ray_distance: invariant under a global rigid transform") {
  std::vector<CameraParams> cams = {arc_camera(-12.0, 4.0), arc_camera(9.0, 4.0)};
  Rng rng(29);
  std::vector<Correspondence> corrs;
  for (int i = 0; i < 10; ++i) {
    corrs.push_back(exact_corr(cams[0], cams[1],
                               Vec3d(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                                     rng.uniform(-0.4, 0.4))));
  }
  testutil::noise_residuals(cams[0], rng, 0.5);
  testutil::noise_residuals(cams[1], rng, 0.5);

  const Mat3d g = testutil::random_rotation(rng);
  const Vec3d shift(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
  std::vector<CameraParams> moved = cams;
  for (CameraParams& cam : moved) {
    const Mat3d r_new = g * rotation_from_6vec<double>(cam.effective_a());
    cam.extrinsics.a0 = testutil::six_vec_of(r_new);
    cam.extrinsics.da.setZero();
    cam.extrinsics.t0 = g * cam.effective_t() + shift;
    cam.extrinsics.dt.setZero();
    // Raxel offsets are world-space vectors and rotate with the scene.
    for (Vec3d& node : cam.raxel.dir_offset) node = g * node;
    for (Vec3d& node : cam.raxel.org_offset) node = g * node;
  }

  for (const Correspondence& corr : corrs) {
    const auto d0 =
        projected_ray_distance<double>(assemble(cams[0]), assemble(cams[1]), corr);
    const auto d1 =
        projected_ray_distance<double>(assemble(moved[0]), assemble(moved[1]), corr);
    REQUIRE(d0.has_value());
    REQUIRE(d1.has_value());
    CHECK(std::abs(*d0 - *d1) < 1e-8);
  }
}

TEST_CASE("prd_loss gradients match finite differences on random configs") {
  Rng rng(31);
  ad::Tape tape;
  std::vector<double> scratch;
  int configs = 0;
  while (configs < 50) {
    std::vector<CameraParams> cams = {arc_camera(rng.uniform(-15.0, -5.0), 4.0),
                                      arc_camera(rng.uniform(5.0, 15.0), 4.0)};
    std::vector<Correspondence> corrs;
    for (int i = 0; i < 8; ++i) {
      corrs.push_back(exact_corr(cams[0], cams[1],
                                 Vec3d(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                                       rng.uniform(-0.4, 0.4))));
    }
    // Perturb so d_pi is positive and smooth (the norm is not differentiable
    // at exactly zero) while staying far from the eta gate.
    testutil::noise_residuals(cams[0], rng, 1.0);
    testutil::noise_residuals(cams[1], rng, 1.0);

    Scene scene{nullptr, &cams};
    LiftOptions opts;
    const auto plain = [&]() { return prd_loss(cams, corrs, 5.0).loss; };
    const auto grads = [&]() {
      ad::TapeScope ts(tape);
      LiftedScene lifted(scene, opts);
      std::vector<CameraModel<ad::Var>> models = {lifted.camera(0),
                                                  lifted.camera(1)};
      const auto res = prd_loss<ad::Var>(models, corrs, 5.0);
      return extract_grads(tape, res.loss, lifted, scratch);
    };
    // Keep every pair smooth and clear of the eta gate: the curvature of the
    // norm scales as 1/d_pi, so near-zero distances drown the finite
    // difference in truncation error, and the gate flips right at eta.
    bool well_conditioned = true;
    const auto ma = assemble(cams[0]), mb = assemble(cams[1]);
    for (const Correspondence& corr : corrs) {
      const auto d = projected_ray_distance<double>(ma, mb, corr, 5.0);
      if (!d || *d < 0.3 || *d > 4.0) {
        well_conditioned = false;
        break;
      }
    }
    if (!well_conditioned) continue;
    const auto result = grad_check(scene, opts, grads, plain, 1e-5);
    CHECK(result.max_rel < 1e-4);
    ++configs;
  }
}
