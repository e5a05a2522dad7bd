#include "raycal/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "raycal/io.hpp"
#include "raycal/rng.hpp"

namespace raycal {

namespace {

struct Blob {
  Vec3d center;
  double width;
  double amplitude;
  Vec3d color;
};

Vec3d hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 360.0) / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Vec3d rgb(0, 0, 0);
  if (hp < 1) rgb = Vec3d(c, x, 0);
  else if (hp < 2) rgb = Vec3d(x, c, 0);
  else if (hp < 3) rgb = Vec3d(0, c, x);
  else if (hp < 4) rgb = Vec3d(0, x, c);
  else if (hp < 5) rgb = Vec3d(x, 0, c);
  else rgb = Vec3d(c, 0, x);
  return rgb.array() + (v - c);
}

double blob_density(const std::vector<Blob>& blobs, const Vec3d& x,
                    double floor) {
  double sigma = floor;
  for (const Blob& b : blobs) {
    sigma += b.amplitude * std::exp(-(x - b.center).squaredNorm() /
                                    (2.0 * b.width * b.width));
  }
  return sigma;
}

Vec3d blob_color(const std::vector<Blob>& blobs, const Vec3d& x) {
  Vec3d acc = Vec3d::Constant(0.5) * 1e-6;  // neutral gray where empty
  double total = 1e-6;
  for (const Blob& b : blobs) {
    const double w = b.amplitude * std::exp(-(x - b.center).squaredNorm() /
                                            (2.0 * b.width * b.width));
    acc += w * b.color;
    total += w;
  }
  return acc / total;
}

Mat3d look_at_rotation(const Vec3d& pos, const Vec3d& target) {
  const Vec3d fwd = (target - pos).normalized();
  Vec3d up_hint(0, 1, 0);
  if (std::abs(up_hint.dot(fwd)) > 0.99) up_hint = Vec3d(1, 0, 0);
  const Vec3d right = up_hint.cross(fwd).normalized();
  const Vec3d down = fwd.cross(right);
  Mat3d rot;
  rot.col(0) = right;
  rot.col(1) = down;
  rot.col(2) = fwd;
  return rot;
}

Vec6d six_vec(const Mat3d& rot) {
  Vec6d a;
  a.head<3>() = rot.col(0);
  a.tail<3>() = rot.col(1);
  return a;
}

double axis_angle_deg(const CameraParams& a, const CameraParams& b) {
  const Vec3d za = rotation_from_6vec<double>(a.effective_a()).col(2);
  const Vec3d zb = rotation_from_6vec<double>(b.effective_a()).col(2);
  return std::acos(std::clamp(za.dot(zb), -1.0, 1.0)) * 180.0 / M_PI;
}

}  // namespace

SyntheticScene make_scene(std::uint64_t seed, int n_cameras, int width,
                          int height, int n_blobs, const SceneOptions& opts) {
  if (n_cameras < 2) throw Error("make_scene: need at least 2 cameras");
  if (width < 8 || height < 8) throw Error("make_scene: resolution below 8x8");

  SyntheticScene scene;
  scene.seed = seed;
  scene.options = opts;
  Rng rng(mix_seed(seed, 0x5ce9e));

  // Procedural blob field.
  std::vector<Blob> blobs;
  const double e = opts.extent;
  for (int b = 0; b < n_blobs; ++b) {
    Blob blob;
    blob.center = Vec3d(rng.uniform(-0.7 * e, 0.7 * e), rng.uniform(-0.7 * e, 0.7 * e),
                        rng.uniform(-0.7 * e, 0.7 * e));
    blob.width = e * rng.uniform(0.16, 0.30);
    blob.amplitude = rng.uniform(opts.blob_amp_lo, opts.blob_amp_hi);
    const double hue = 360.0 * b / n_blobs + rng.uniform(0.0, 25.0);
    blob.color = hsv_to_rgb(hue, rng.uniform(0.7, 1.0), rng.uniform(0.7, 1.0));
    blobs.push_back(blob);
  }
  scene.field = RadianceField::create(Vec3i::Constant(opts.grid),
                                      Vec3d::Constant(-e), Vec3d::Constant(e),
                                      opts.sigma_floor, Vec3d::Constant(0.5));
  const Vec3d h = (scene.field.hi - scene.field.lo).cwiseQuotient(
      scene.field.res.cast<double>());
  for (int z = 0; z < opts.grid; ++z) {
    for (int y = 0; y < opts.grid; ++y) {
      for (int x = 0; x < opts.grid; ++x) {
        const Vec3d center = scene.field.lo +
                             Vec3d(x + 0.5, y + 0.5, z + 0.5).cwiseProduct(h);
        double* vox = scene.field.voxel(x, y, z);
        const double sigma = blob_density(blobs, center, opts.sigma_floor);
        const Vec3d color = blob_color(blobs, center);
        vox[0] = softplus_inverse(sigma);
        for (int ch = 0; ch < 3; ++ch) {
          vox[1 + ch] = logit(std::clamp(color[ch], 1e-6, 1.0 - 1e-6));
        }
      }
    }
  }

  // Camera ring on an arc, optical axes through the scene center. The focal
  // length frames the content region rather than the full bounding sphere.
  const double radius = opts.radius_factor * e;
  const double bound_radius = std::sqrt(3.0) * e;
  const double half_angle =
      std::asin(std::min(0.95, opts.frame_frac * e / radius));
  const double f = 0.5 * std::min(width, height) / std::tan(half_angle);
  for (int ci = 0; ci < n_cameras; ++ci) {
    const double frac = n_cameras == 1 ? 0.5 : static_cast<double>(ci) / (n_cameras - 1);
    const double angle = (-0.5 + frac) * opts.arc_deg * M_PI / 180.0;
    const Vec3d pos(radius * std::sin(angle), 0.0, -radius * std::cos(angle));
    CameraParams cam;
    cam.width = width;
    cam.height = height;
    cam.intrinsics.f0 = Vec2d(f, f);
    cam.intrinsics.c0 = Vec2d(width / 2.0, height / 2.0);
    cam.radial.k0 = opts.k_gt;
    cam.extrinsics.a0 = six_vec(look_at_rotation(pos, Vec3d::Zero()));
    cam.extrinsics.t0 = pos;
    cam.raxel = RaxelGrid::zero(default_raxel_dim(width), default_raxel_dim(height));
    scene.cameras.push_back(std::move(cam));
  }

  scene.sampling.near = radius - 1.15 * bound_radius;
  scene.sampling.far = radius + 1.15 * bound_radius;
  scene.sampling.n_samples = opts.gt_samples;
  scene.sampling.stratified = false;
  scene.sampling.seed = mix_seed(seed, 0x11117);

  for (const CameraParams& cam : scene.cameras) {
    scene.images.push_back(render_image(scene.field, cam, scene.sampling));
  }

  // Exact correspondences for every pair close enough for pair selection,
  // with adjacent pairs always included.
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n_cameras; ++i) {
    for (int j = i + 1; j < n_cameras; ++j) {
      if (j == i + 1 || axis_angle_deg(scene.cameras[i], scene.cameras[j]) < 30.0) {
        pairs.emplace_back(i, j);
      }
    }
  }
  scene.corrs = gen_correspondences(scene, pairs, opts.corrs_per_pair,
                                    mix_seed(seed, 0xc0221), opts.corr_sigma_min,
                                    opts.corr_pixel_noise);
  return scene;
}

std::vector<Correspondence> gen_correspondences(
    const SyntheticScene& scene, std::span<const std::pair<int, int>> pairs,
    int per_pair, std::uint64_t seed, double sigma_min, double pixel_noise) {
  std::vector<Correspondence> corrs;
  Rng rng(seed);
  const FieldView<double> fv{&scene.field};
  for (const auto& [ia, ib] : pairs) {
    if (ia < 0 || ib < 0 ||
        ia >= static_cast<int>(scene.cameras.size()) ||
        ib >= static_cast<int>(scene.cameras.size()) || ia == ib) {
      throw Error("gen_correspondences: invalid camera pair");
    }
    const CameraModel<double> ma = assemble(scene.cameras[ia]);
    const CameraModel<double> mb = assemble(scene.cameras[ib]);
    const auto in_bounds = [](const CameraModel<double>& m, const Vec2d& p) {
      return p.x() >= 0.5 && p.x() <= m.width - 0.5 && p.y() >= 0.5 &&
             p.y() <= m.height - 0.5;
    };
    int found = 0;
    long attempts = 0;
    const long max_attempts = 100L * per_pair;
    while (found < per_pair && attempts < max_attempts) {
      ++attempts;
      const Vec3d x(rng.uniform(scene.field.lo.x(), scene.field.hi.x()),
                    rng.uniform(scene.field.lo.y(), scene.field.hi.y()),
                    rng.uniform(scene.field.lo.z(), scene.field.hi.z()));
      if (field_query(fv, x).sigma < sigma_min) continue;
      Correspondence corr;
      corr.cam_a = ia;
      corr.cam_b = ib;
      try {
        corr.p_a = project<double>(ma, x);
        corr.p_b = project<double>(mb, x);
      } catch (const BehindCamera&) {
        continue;
      } catch (const NonConvergent&) {
        continue;
      }
      if (!in_bounds(ma, corr.p_a) || !in_bounds(mb, corr.p_b)) continue;
      if (!chirality_valid<double>(ma, mb, x, x)) continue;
      const auto d = projected_ray_distance<double>(ma, mb, corr);
      if (!d || *d > 1e-8) continue;
      if (pixel_noise > 0.0) {
        corr.p_a += pixel_noise * Vec2d(rng.gauss(), rng.gauss());
        corr.p_b += pixel_noise * Vec2d(rng.gauss(), rng.gauss());
        if (!in_bounds(ma, corr.p_a) || !in_bounds(mb, corr.p_b)) continue;
      }
      corrs.push_back(corr);
      ++found;
    }
    if (found < per_pair) {
      throw InsufficientGeometry(
          "gen_correspondences: only " + std::to_string(found) + "/" +
          std::to_string(per_pair) + " points for pair " + std::to_string(ia) +
          "-" + std::to_string(ib));
    }
  }
  return corrs;
}

void inject_noise(std::span<CameraParams> cameras, const NoiseSpec& spec) {
  Rng rng(spec.seed);
  for (CameraParams& cam : cameras) {
    if (spec.focal_pct != 0.0) {
      cam.intrinsics.df += cam.effective_f() * (spec.focal_pct / 100.0);
    }
    if (spec.trans_range != 0.0) {
      for (int i = 0; i < 3; ++i) {
        cam.extrinsics.dt[i] += rng.uniform(-spec.trans_range, spec.trans_range);
      }
    }
    if (spec.rot_range_deg != 0.0) {
      Vec3d axis(rng.gauss(), rng.gauss(), rng.gauss());
      if (axis.norm() < 1e-9) axis = Vec3d(0, 0, 1);
      axis.normalize();
      const double angle_deg = rng.uniform(-spec.rot_range_deg, spec.rot_range_deg);
      const Mat3d r_eff = rotation_from_6vec<double>(cam.effective_a());
      const Mat3d r_new =
          r_eff * Eigen::AngleAxisd(angle_deg * M_PI / 180.0, axis).toRotationMatrix();
      cam.extrinsics.da = six_vec(r_new) - cam.extrinsics.a0;
    }
  }
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError(path + ": cannot open");
  std::map<std::string, std::string> kv;
  std::string line;
  long lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (strip(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

void write_kv_file(const std::string& path,
                   const std::map<std::string, std::string>& kv) {
  std::ofstream os(path);
  if (!os) throw Error("write_kv_file: cannot open " + path);
  for (const auto& [key, value] : kv) os << key << "=" << value << "\n";
  if (!os) throw Error("write_kv_file: write failed for " + path);
}

void write_scene_bundle(const std::string& dir, const SyntheticScene& scene) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  write_cameras((fs::path(dir) / "cameras.txt").string(), scene.cameras);
  write_correspondences((fs::path(dir) / "corrs.txt").string(), scene.corrs);
  write_field((fs::path(dir) / "field.rfg").string(), scene.field);
  char name[32];
  for (std::size_t i = 0; i < scene.images.size(); ++i) {
    std::snprintf(name, sizeof(name), "%04zu", i);
    write_ppm((fs::path(dir) / "images" / (std::string(name) + ".ppm")).string(),
              scene.images[i]);
    write_pfm((fs::path(dir) / "images" / (std::string(name) + ".pfm")).string(),
              scene.images[i]);
  }
  std::map<std::string, std::string> meta;
  meta["seed"] = std::to_string(scene.seed);
  meta["cameras"] = std::to_string(scene.cameras.size());
  meta["width"] = std::to_string(scene.cameras.empty() ? 0 : scene.cameras[0].width);
  meta["height"] = std::to_string(scene.cameras.empty() ? 0 : scene.cameras[0].height);
  meta["near"] = format_double(scene.sampling.near);
  meta["far"] = format_double(scene.sampling.far);
  meta["gt_samples"] = std::to_string(scene.sampling.n_samples);
  meta["grid"] = std::to_string(scene.options.grid);
  meta["extent"] = format_double(scene.options.extent);
  meta["k1_gt"] = format_double(scene.options.k_gt.x());
  meta["k2_gt"] = format_double(scene.options.k_gt.y());
  write_kv_file((fs::path(dir) / "meta.txt").string(), meta);
}

SceneBundle load_scene_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  SceneBundle bundle;
  bundle.cameras = read_cameras((fs::path(dir) / "cameras.txt").string());
  const auto corr_path = fs::path(dir) / "corrs.txt";
  if (fs::exists(corr_path)) {
    bundle.corrs = read_correspondences(corr_path.string());
  }
  bundle.field = read_field((fs::path(dir) / "field.rfg").string());
  bundle.meta = read_kv_file((fs::path(dir) / "meta.txt").string());
  char name[32];
  for (std::size_t i = 0; i < bundle.cameras.size(); ++i) {
    std::snprintf(name, sizeof(name), "%04zu", i);
    const auto pfm = fs::path(dir) / "images" / (std::string(name) + ".pfm");
    const auto ppm = fs::path(dir) / "images" / (std::string(name) + ".ppm");
    if (fs::exists(pfm)) {
      bundle.images.push_back(read_pfm(pfm.string()));
    } else if (fs::exists(ppm)) {
      bundle.images.push_back(read_ppm(ppm.string()));
    } else {
      throw ParseError("scene bundle missing image " + std::string(name));
    }
  }
  return bundle;
}

}  // namespace raycal
