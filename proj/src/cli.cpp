#include "raycal/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>

#include "raycal/calibration.hpp"
#include "raycal/io.hpp"
#include "raycal/metrics.hpp"
#include "raycal/synth.hpp"
#include "raycal/verify.hpp"

namespace raycal {

namespace {

namespace fs = std::filesystem;

constexpr const char* kSynopsis =
    "usage: raycal <synth|calibrate|render|eval|gradcheck> [options]";

struct SynthArgs {
  std::uint64_t seed = 1;
  std::string out;
  int cameras = 20;
  int width = 32, height = 32;
  int blobs = 5;
  int grid = 32;
  double k1 = 0.0, k2 = 0.0;
  int corrs_per_pair = 24;
  double pixel_noise = 0.0;
  double noise_focal = 0.0, noise_trans = 0.0, noise_rot = 0.0;
  std::uint64_t noise_seed = 99;
  bool noise_all = false;
};

int cmd_synth(const SynthArgs& args) {
  SceneOptions opts;
  opts.grid = args.grid;
  opts.k_gt = Vec2d(args.k1, args.k2);
  opts.corrs_per_pair = args.corrs_per_pair;
  opts.corr_pixel_noise = args.pixel_noise;
  SyntheticScene scene =
      make_scene(args.seed, args.cameras, args.width, args.height, args.blobs, opts);
  write_scene_bundle(args.out, scene);

  NoiseSpec noise;
  noise.focal_pct = args.noise_focal;
  noise.trans_range = args.noise_trans;
  noise.rot_range_deg = args.noise_rot;
  noise.seed = args.noise_seed;
  if (noise.any()) {
    std::vector<CameraParams> noisy = scene.cameras;
    // Camera 0 anchors the gauge in recovery runs and stays clean unless
    // explicitly requested otherwise.
    const std::size_t first = args.noise_all ? 0 : 1;
    inject_noise(std::span<CameraParams>(noisy).subspan(first), noise);
    write_residuals((fs::path(args.out) / "residuals_init.txt").string(), noisy);
  }
  std::printf("scene: %d cameras, %dx%d, %zu correspondences -> %s\n",
              args.cameras, args.width, args.height, scene.corrs.size(),
              args.out.c_str());
  return 0;
}

struct CalibrateArgs {
  std::string scene, config, out, resume;
  std::vector<std::string> overrides;
};

TrainConfig build_train_config(const CalibrateArgs& args) {
  std::map<std::string, std::string> kv;
  if (!args.config.empty()) kv = read_kv_file(args.config);
  for (const std::string& kvpair : args.overrides) {
    const auto eq = kvpair.find('=');
    if (eq == std::string::npos) {
      throw ParseError("--set expects key=value, got '" + kvpair + "'");
    }
    kv[kvpair.substr(0, eq)] = kvpair.substr(eq + 1);
  }
  if (!args.scene.empty()) kv["scene"] = args.scene;
  if (!args.out.empty()) kv["out"] = args.out;
  TrainConfig cfg = parse_train_config(kv);
  if (cfg.scene_dir.empty()) throw ParseError("calibrate: no scene directory given");
  // A noisy initialization written by `synth` is picked up automatically.
  if (cfg.residuals_init.empty()) {
    const fs::path auto_res = fs::path(cfg.scene_dir) / "residuals_init.txt";
    if (fs::exists(auto_res)) cfg.residuals_init = auto_res.string();
  }
  return cfg;
}

int cmd_calibrate(const CalibrateArgs& args) {
  const TrainConfig cfg = build_train_config(args);
  const TrainState state = calibrate(cfg, args.resume);
  std::printf("calibrated %zu cameras for %lld iterations -> %s\n",
              state.cameras.size(), static_cast<long long>(state.iter),
              cfg.out_dir.c_str());
  return 0;
}

struct RenderArgs {
  std::string field, cameras, residuals, out;
  int samples = 64;
  double near = 0.0, far = 0.0;
  std::uint64_t seed = 0;
  bool stratified = false;
};

int cmd_render(const RenderArgs& args) {
  const RadianceField field = read_field(args.field);
  std::vector<CameraParams> cams = read_cameras(args.cameras);
  if (!args.residuals.empty()) read_residuals(args.residuals, cams);
  SamplingSpec spec;
  spec.near = args.near;
  spec.far = args.far;
  spec.n_samples = args.samples;
  spec.stratified = args.stratified;
  spec.seed = args.seed;
  auto_near_far(spec.near, spec.far, field, cams);
  fs::create_directories(fs::path(args.out) / "images");
  char name[32];
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const ImageBuffer img = render_image(field, cams[i], spec);
    std::snprintf(name, sizeof(name), "%04zu", i);
    write_ppm((fs::path(args.out) / "images" / (std::string(name) + ".ppm")).string(), img);
    write_pfm((fs::path(args.out) / "images" / (std::string(name) + ".pfm")).string(), img);
  }
  std::printf("rendered %zu images -> %s/images\n", cams.size(), args.out.c_str());
  return 0;
}

std::vector<CameraParams> load_cameras_dir(const std::string& dir) {
  std::vector<CameraParams> cams = read_cameras((fs::path(dir) / "cameras.txt").string());
  const fs::path res = fs::path(dir) / "residuals.txt";
  if (fs::exists(res)) read_residuals(res.string(), cams);
  return cams;
}

std::vector<ImageBuffer> load_images_dir(const std::string& dir, std::size_t count) {
  std::vector<ImageBuffer> images;
  char name[32];
  for (std::size_t i = 0; i < count; ++i) {
    std::snprintf(name, sizeof(name), "%04zu", i);
    const fs::path pfm = fs::path(dir) / "images" / (std::string(name) + ".pfm");
    const fs::path ppm = fs::path(dir) / "images" / (std::string(name) + ".ppm");
    if (fs::exists(pfm)) {
      images.push_back(read_pfm(pfm.string()));
    } else if (fs::exists(ppm)) {
      images.push_back(read_ppm(ppm.string()));
    } else {
      break;
    }
  }
  return images;
}

struct EvalArgs {
  std::string gt, est;
  int samples = 0;  // 0: take from est config.txt when rendering is needed
};

int cmd_eval(const EvalArgs& args) {
  const std::vector<CameraParams> gt_cams = load_cameras_dir(args.gt);
  const std::vector<CameraParams> est_cams = load_cameras_dir(args.est);
  const CameraErrors err = camera_error(gt_cams, est_cams);

  std::printf("camera   focal%%      rot(deg)    trans\n");
  for (std::size_t i = 0; i < gt_cams.size(); ++i) {
    std::printf("%6zu   %-9.5f   %-9.5f   %.6f\n", i, err.focal_pct[i],
                err.rotation_deg[i], err.translation[i]);
  }
  std::printf("  mean   %-9.5f   %-9.5f   %.6f\n", err.mean_focal_pct,
              err.mean_rotation_deg, err.mean_translation);

  const std::vector<ImageBuffer> gt_images = load_images_dir(args.gt, gt_cams.size());
  if (gt_images.size() != gt_cams.size()) {
    std::printf("(no ground-truth images; skipping PSNR/SSIM)\n");
    return 0;
  }
  std::vector<ImageBuffer> est_images = load_images_dir(args.est, est_cams.size());
  if (est_images.size() != est_cams.size()) {
    const fs::path field_path = fs::path(args.est) / "field.rfg";
    if (!fs::exists(field_path)) {
      std::printf("(no estimated images or field; skipping PSNR/SSIM)\n");
      return 0;
    }
    const RadianceField field = read_field(field_path.string());
    SamplingSpec spec;
    spec.n_samples = args.samples > 0 ? args.samples : 64;
    const fs::path cfg_path = fs::path(args.est) / "config.txt";
    if (fs::exists(cfg_path)) {
      const TrainConfig cfg = parse_train_config(read_kv_file(cfg_path.string()));
      spec.near = cfg.near;
      spec.far = cfg.far;
      if (args.samples <= 0) spec.n_samples = cfg.samples;
    }
    auto_near_far(spec.near, spec.far, field, est_cams);
    est_images.clear();
    for (const CameraParams& cam : est_cams) {
      est_images.push_back(render_image(field, cam, spec));
    }
  }

  double psnr_acc = 0.0, ssim_acc = 0.0;
  std::printf("image    PSNR(dB)    SSIM\n");
  for (std::size_t i = 0; i < gt_images.size(); ++i) {
    const double p = psnr(est_images[i], gt_images[i]);
    const double s = ssim(est_images[i], gt_images[i]);
    psnr_acc += p;
    ssim_acc += s;
    std::printf("%6zu   %-9.4f   %.6f\n", i, p, s);
  }
  std::printf("  mean   %-9.4f   %.6f\n", psnr_acc / gt_images.size(),
              ssim_acc / gt_images.size());
  return 0;
}

struct GradcheckArgs {
  std::string scene;
  double eps = 1e-5;
  double tol = 1e-4;
  std::uint64_t seed = 7;
  int rays = 4;
  int samples = 16;
  int grid = 16;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  TrainConfig cfg;
  cfg.scene_dir = args.scene;
  cfg.grid = args.grid;
  cfg.seed = args.seed;
  const TrainState state = init_train_state(cfg);

  SceneGradCheckOptions opts;
  opts.eps = args.eps;
  opts.seed = args.seed;
  opts.rays_per_camera = args.rays;
  opts.samples = args.samples;
  const SceneGradCheckReport report = scene_grad_check(state, opts);

  const auto print_group = [](const char* loss, const GradCheckResult& res) {
    for (int gi = 0; gi < kGroupCount; ++gi) {
      if (res.per_group[gi] < 0.0) continue;
      std::printf("%-12s %-11s max rel err %.3e\n", loss,
                  group_name(static_cast<Group>(gi)), res.per_group[gi]);
    }
  };
  print_group("photometric", report.photometric);
  print_group("prd", report.prd);
  std::printf("checked %d correspondences; overall max rel err %.3e (tol %.1e)\n",
              report.prd_corrs_checked, report.max_rel, args.tol);
  if (!(report.max_rel < args.tol)) {
    std::fprintf(stderr, "gradcheck FAILED: %.3e >= %.1e\n", report.max_rel, args.tol);
    return 2;
  }
  std::printf("gradcheck OK\n");
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Self-calibrating camera + radiance field toolkit"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene bundle");
  synth->add_option("--seed", synth_args.seed);
  synth->add_option("--out", synth_args.out)->required();
  synth->add_option("--cameras", synth_args.cameras);
  synth->add_option("--width", synth_args.width);
  synth->add_option("--height", synth_args.height);
  synth->add_option("--blobs", synth_args.blobs);
  synth->add_option("--grid", synth_args.grid);
  synth->add_option("--k1", synth_args.k1);
  synth->add_option("--k2", synth_args.k2);
  synth->add_option("--corrs-per-pair", synth_args.corrs_per_pair);
  synth->add_option("--pixel-noise", synth_args.pixel_noise);
  synth->add_option("--noise-focal", synth_args.noise_focal,
                    "percent additive focal noise");
  synth->add_option("--noise-trans", synth_args.noise_trans,
                    "translation noise range, world units");
  synth->add_option("--noise-rot", synth_args.noise_rot,
                    "rotation noise range, degrees");
  synth->add_option("--noise-seed", synth_args.noise_seed);
  synth->add_flag("--noise-all", synth_args.noise_all,
                  "also perturb camera 0 (the gauge anchor)");

  CalibrateArgs cal_args;
  CLI::App* cal = app.add_subcommand("calibrate", "run the joint optimization");
  cal->add_option("--scene", cal_args.scene);
  cal->add_option("--config", cal_args.config);
  cal->add_option("--out", cal_args.out);
  cal->add_option("--resume", cal_args.resume, "checkpoint directory");
  cal->add_option("--set", cal_args.overrides, "config override key=value");

  RenderArgs render_args;
  CLI::App* render = app.add_subcommand("render", "render images from a field");
  render->add_option("--field", render_args.field)->required();
  render->add_option("--cameras", render_args.cameras)->required();
  render->add_option("--residuals", render_args.residuals);
  render->add_option("--out", render_args.out)->required();
  render->add_option("--samples", render_args.samples);
  render->add_option("--near", render_args.near);
  render->add_option("--far", render_args.far);
  render->add_option("--seed", render_args.seed);
  render->add_flag("--stratified", render_args.stratified);

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "camera errors and image quality");
  eval->add_option("--gt", eval_args.gt)->required();
  eval->add_option("--est", eval_args.est)->required();
  eval->add_option("--samples", eval_args.samples);

  GradcheckArgs gc_args;
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gc->add_option("--scene", gc_args.scene)->required();
  gc->add_option("--eps", gc_args.eps);
  gc->add_option("--tol", gc_args.tol);
  gc->add_option("--seed", gc_args.seed);
  gc->add_option("--rays", gc_args.rays);
  gc->add_option("--samples", gc_args.samples);
  gc->add_option("--grid", gc_args.grid);

  try {
    // CLI11's vector overload consumes a reversed argument list.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      return app.exit(e);
    }
    std::fprintf(stderr, "%s\n%s\n", e.what(), kSynopsis);
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (cal->parsed()) return cmd_calibrate(cal_args);
    if (render->parsed()) return cmd_render(render_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (gc->parsed()) return cmd_gradcheck(gc_args);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  std::fprintf(stderr, "%s\n", kSynopsis);
  return 1;
}

}  // namespace raycal
