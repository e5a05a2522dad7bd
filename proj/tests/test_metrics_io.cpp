#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "raycal/io.hpp"
#include "raycal/metrics.hpp"
#include "raycal/rng.hpp"
#include "raycal/synth.hpp"
#include "test_util.hpp"

using namespace raycal;

namespace {

ImageBuffer pattern_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer img = ImageBuffer::create(w, h);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("psnr: cap, closed forms and basic properties") {
  const ImageBuffer a = pattern_image(16, 16, 1);
  CHECK(psnr(a, a) == 99.0);

  ImageBuffer half = ImageBuffer::create(16, 16, 0.5);
  ImageBuffer zero = ImageBuffer::create(16, 16, 0.0);
  CHECK(psnr(half, zero) == doctest::Approx(6.0206).epsilon(1e-4));

  ImageBuffer base = ImageBuffer::create(16, 16, 0.3);
  ImageBuffer offset = ImageBuffer::create(16, 16, 0.4);
  CHECK(psnr(offset, base) == doctest::Approx(20.0).epsilon(1e-12));

  // Symmetry and translation-of-both invariance.
  const ImageBuffer b = pattern_image(16, 16, 2);
  CHECK(psnr(a, b) == psnr(b, a));
  ImageBuffer a_shift = a, b_shift = b;
  for (double& v : a_shift.data) v = 0.25 + 0.5 * v;
  for (double& v : b_shift.data) v = 0.25 + 0.5 * v;
  // Affine rescaling of both changes MSE by a known factor; pure translation:
  ImageBuffer a_t = a, b_t = b;
  for (double& v : a_t.data) v *= 0.5;
  for (double& v : b_t.data) v *= 0.5;
  for (double& v : a_t.data) v += 0.2;
  for (double& v : b_t.data) v += 0.2;
  CHECK(psnr(a_t, b_t) == doctest::Approx(psnr(a, b) + 10 * std::log10(4.0)).epsilon(1e-12));

  ImageBuffer c = a;
  for (double& v : c.data) v += 0.1;
  ImageBuffer d = a;
  for (double& v : d.data) v += 0.1;
  CHECK(psnr(c, d) == 99.0);

  // Strictly decreasing in noise amplitude.
  Rng rng(3);
  std::vector<double> noise(a.data.size());
  for (double& v : noise) v = rng.uniform(-1.0, 1.0);
  double prev = 99.0;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    ImageBuffer noisy = ImageBuffer::create(16, 16, 0.5);
    for (std::size_t i = 0; i < noisy.data.size(); ++i) {
      noisy.data[i] = 0.5 + amp * noise[i];
    }
    const double p = psnr(noisy, ImageBuffer::create(16, 16, 0.5));
    CHECK(p < prev);
    prev = p;
  }

  CHECK_THROWS_AS(psnr(a, ImageBuffer::create(8, 8)), DimensionMismatch);
}

TEST_CASE("ssim: identity, inversion, constants and guards") {
  const ImageBuffer a = pattern_image(24, 24, 7);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  ImageBuffer inverted = a;
  for (double& v : inverted.data) v = 1.0 - v;
  CHECK(ssim(a, inverted) < 0.3);

  // Constant images: every window reduces to the luminance term.
  ImageBuffer c1 = ImageBuffer::create(16, 16, 0.3);
  ImageBuffer c2 = ImageBuffer::create(16, 16, 0.7);
  const double c1sq = 0.01 * 0.01;
  const double expect = (2 * 0.3 * 0.7 + c1sq) / (0.3 * 0.3 + 0.7 * 0.7 + c1sq);
  CHECK(ssim(c1, c2) == doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(ssim(a, ImageBuffer::create(24, 16)), DimensionMismatch);
  CHECK_THROWS_AS(ssim(ImageBuffer::create(8, 8), ImageBuffer::create(8, 8)), TooSmall);
}

TEST_CASE("camera_error: identity, focal scale and constructed rotation") {
  Rng rng(5);
  std::vector<CameraParams> gt;
  for (int i = 0; i < 3; ++i) gt.push_back(testutil::make_camera(32, 32, rng));

  const CameraErrors zero = camera_error(gt, gt);
  CHECK(zero.mean_focal_pct == 0.0);
  CHECK(zero.mean_rotation_deg < 1e-6);
  CHECK(zero.mean_translation == 0.0);

  std::vector<CameraParams> est = gt;
  for (CameraParams& cam : est) cam.intrinsics.df = 0.1 * cam.intrinsics.f0;
  const CameraErrors focal = camera_error(gt, est);
  CHECK(focal.mean_focal_pct == doctest::Approx(10.0).epsilon(1e-12));

  est = gt;
  const Mat3d tweak =
      Eigen::AngleAxisd(2.0 * M_PI / 180.0, Vec3d(1, 2, -1).normalized())
          .toRotationMatrix();
  for (CameraParams& cam : est) {
    const Mat3d r = rotation_from_6vec<double>(cam.effective_a());
    cam.extrinsics.a0 = testutil::six_vec_of(r * tweak);
    cam.extrinsics.da.setZero();
  }
  const CameraErrors rot = camera_error(gt, est);
  for (double r : rot.rotation_deg) CHECK(r == doctest::Approx(2.0).epsilon(1e-9));

  est = gt;
  est[1].extrinsics.dt = Vec3d(0.3, -0.4, 0.0);
  const CameraErrors trans = camera_error(gt, est);
  CHECK(trans.translation[1] == doctest::Approx(0.5).epsilon(1e-12));

  std::vector<CameraParams> fewer(gt.begin(), gt.begin() + 2);
  CHECK_THROWS_AS(camera_error(gt, fewer), CountMismatch);
}

TEST_CASE("camera text format: value-exact round-trip") {
  Rng rng(9);
  std::vector<CameraParams> cams;
  for (int i = 0; i < 3; ++i) {
    cams.push_back(testutil::make_camera(48, 36, rng));
    testutil::noise_residuals(cams.back(), rng);
  }
  const std::string path = "/tmp/raycal_test_cameras.txt";
  write_cameras(path, cams);
  const std::vector<CameraParams> loaded = read_cameras(path);
  REQUIRE(loaded.size() == cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    CHECK(loaded[i].width == cams[i].width);
    CHECK(loaded[i].intrinsics.f0 == cams[i].intrinsics.f0);
    CHECK(loaded[i].intrinsics.c0 == cams[i].intrinsics.c0);
    CHECK(loaded[i].radial.k0 == cams[i].radial.k0);
    CHECK(loaded[i].extrinsics.a0 == cams[i].extrinsics.a0);
    CHECK(loaded[i].extrinsics.t0 == cams[i].extrinsics.t0);
    CHECK(loaded[i].raxel.cols == cams[i].raxel.cols);
    for (std::size_t n = 0; n < cams[i].raxel.node_count(); ++n) {
      CHECK(loaded[i].raxel.dir_offset[n] == cams[i].raxel.dir_offset[n]);
      CHECK(loaded[i].raxel.org_offset[n] == cams[i].raxel.org_offset[n]);
    }
  }
  // A second write of the loaded cameras is byte-identical.
  const std::string path2 = "/tmp/raycal_test_cameras2.txt";
  write_cameras(path2, loaded);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("residual file: round-trip and schema checks") {
  Rng rng(11);
  std::vector<CameraParams> cams;
  for (int i = 0; i < 2; ++i) {
    cams.push_back(testutil::make_camera(32, 32, rng));
    testutil::noise_residuals(cams.back(), rng);
  }
  const std::string path = "/tmp/raycal_test_residuals.txt";
  write_residuals(path, cams);

  std::vector<CameraParams> fresh;
  for (const CameraParams& cam : cams) {
    CameraParams f = cam;
    f.intrinsics.df.setZero();
    f.intrinsics.dc.setZero();
    f.extrinsics.da.setZero();
    f.extrinsics.dt.setZero();
    f.radial.zk.setZero();
    for (auto& n : f.raxel.dir_offset) n.setZero();
    for (auto& n : f.raxel.org_offset) n.setZero();
    fresh.push_back(f);
  }
  read_residuals(path, fresh);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    CHECK(fresh[i].intrinsics.df == cams[i].intrinsics.df);
    CHECK(fresh[i].intrinsics.dc == cams[i].intrinsics.dc);
    CHECK(fresh[i].extrinsics.da == cams[i].extrinsics.da);
    CHECK(fresh[i].extrinsics.dt == cams[i].extrinsics.dt);
    CHECK(fresh[i].radial.zk == cams[i].radial.zk);
    for (std::size_t n = 0; n < cams[i].raxel.node_count(); ++n) {
      CHECK(fresh[i].raxel.dir_offset[n] == cams[i].raxel.dir_offset[n]);
    }
  }

  // Block-count mismatch is rejected.
  std::vector<CameraParams> three = {fresh[0], fresh[0], fresh[0]};
  CHECK_THROWS_AS(read_residuals(path, three), ParseError);
}

TEST_CASE("correspondence file: round-trip, comments, diagnostics") {
  std::vector<Correspondence> corrs;
  Rng rng(13);
  for (int i = 0; i < 10; ++i) {
    Correspondence c;
    c.cam_a = i % 3;
    c.cam_b = 3 + (i % 2);
    c.p_a = Vec2d(rng.uniform(0, 32), rng.uniform(0, 32));
    c.p_b = Vec2d(rng.uniform(0, 32), rng.uniform(0, 32));
    corrs.push_back(c);
  }
  const std::string path = "/tmp/raycal_test_corrs.txt";
  write_correspondences(path, corrs);
  const auto loaded = read_correspondences(path);
  REQUIRE(loaded.size() == corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    CHECK(loaded[i].cam_a == corrs[i].cam_a);
    CHECK(loaded[i].cam_b == corrs[i].cam_b);
    CHECK(loaded[i].p_a == corrs[i].p_a);
    CHECK(loaded[i].p_b == corrs[i].p_b);
  }

  {
    std::ofstream os(path);
    os << "# comment line\n0 1 1.5 2.5 3.5 4.5\n\n0 1 bad 2 3 4\n";
  }
  try {
    read_correspondences(path);
    CHECK(false);
  } catch (const ParseError& e) {
    // Diagnostics carry the file position of the offending line.
    CHECK(std::string(e.what()).find(":4:") != std::string::npos);
  }

  {
    std::ofstream os(path);
    os << "0 1 nan 2 3 4\n";
  }
  CHECK_THROWS_AS(read_correspondences(path), ParseError);
}

TEST_CASE("field checkpoint: byte-identical round-trip") {
  SceneOptions opts;
  opts.grid = 10;
  const SyntheticScene scene = make_scene(15, 2, 16, 16, 3, opts);
  const std::string path = "/tmp/raycal_test_field.rfg";
  write_field(path, scene.field);
  const RadianceField loaded = read_field(path);
  CHECK(loaded.res == scene.field.res);
  CHECK(loaded.lo == scene.field.lo);
  CHECK(loaded.hi == scene.field.hi);
  CHECK(loaded.data == scene.field.data);
  const std::string path2 = "/tmp/raycal_test_field2.rfg";
  write_field(path2, loaded);
  CHECK(slurp(path) == slurp(path2));

  // Corrupt magic rejected.
  {
    std::ofstream os(path2, std::ios::binary);
    os << "RFGX";
  }
  CHECK_THROWS_AS(read_field(path2), ParseError);
}

TEST_CASE("PPM: quantization is the only loss, then exact") {
  const ImageBuffer img = pattern_image(9, 7, 21);
  const std::string path = "/tmp/raycal_test.ppm";
  write_ppm(path, img);
  const ImageBuffer once = read_ppm(path);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double quantized = std::lround(img.data[i] * 255.0) / 255.0;
    CHECK(once.data[i] == doctest::Approx(quantized).epsilon(1e-12));
    CHECK(std::abs(once.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
  }
  write_ppm(path, once);
  const ImageBuffer twice = read_ppm(path);
  CHECK(twice.data == once.data);
}

TEST_CASE("PFM: float-exact round-trip and NaN rejection") {
  const ImageBuffer img = pattern_image(11, 5, 23);
  const std::string path = "/tmp/raycal_test.pfm";
  write_pfm(path, img);
  const ImageBuffer once = read_pfm(path);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    CHECK(once.data[i] == static_cast<double>(static_cast<float>(img.data[i])));
  }
  const std::string path2 = "/tmp/raycal_test2.pfm";
  write_pfm(path2, once);
  const ImageBuffer twice = read_pfm(path2);
  CHECK(twice.data == once.data);

  // Bit-patch one float to NaN: the loader must reject it.
  std::string bytes = slurp(path);
  const std::size_t header_end = bytes.find("-1.0\n") + 5;
  const uint32_t nan_bits = 0x7fc00000u;
  std::memcpy(bytes.data() + header_end + 12, &nan_bits, 4);
  {
    std::ofstream os(path, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(read_pfm(path), ParseError);
}

TEST_CASE("error maps: grayscale PFM of the mean absolute difference") {
  const ImageBuffer a = pattern_image(12, 12, 31);
  ImageBuffer b = a;
  b.at(3, 4, 0) += 0.25;
  b.at(3, 4, 1) -= 0.10;
  const std::string path = "/tmp/raycal_test_err.pfm";
  write_error_map(path, b, a);
  const ImageBuffer err = read_pfm(path);  // grayscale broadcast to rgb
  CHECK(err.at(3, 4, 0) == doctest::Approx((0.25 + 0.10) / 3.0).epsilon(1e-6));
  CHECK(err.at(0, 0, 0) == 0.0);
}

TEST_CASE("camera loader: malformed inputs carry line diagnostics") {
  const std::string path = "/tmp/raycal_test_bad_cam.txt";
  {
    std::ofstream os(path);
    os << "32 32\nf 100 100\nc 16 16\nk oops 0\na 1 0 0 0 1 0\nt 0 0 0\n";
  }
  try {
    read_cameras(path);
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":4:") != std::string::npos);
  }
  {
    std::ofstream os(path);
    os << "32 32\nf 100 inf\nc 16 16\nk 0 0\na 1 0 0 0 1 0\nt 0 0 0\n";
  }
  CHECK_THROWS_AS(read_cameras(path), ParseError);
}

TEST_CASE("kv files: round-trip and diagnostics") {
  std::map<std::string, std::string> kv;
  kv["alpha"] = "1.25";
  kv["path"] = "/tmp/somewhere";
  const std::string path = "/tmp/raycal_test_kv.txt";
  write_kv_file(path, kv);
  CHECK(read_kv_file(path) == kv);
  {
    std::ofstream os(path);
    os << "# fine\nkey_without_value\n";
  }
  CHECK_THROWS_AS(read_kv_file(path), ParseError);
}
