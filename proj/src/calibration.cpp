#include "raycal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "raycal/io.hpp"

namespace raycal {

ActiveMask get_params(std::int64_t iter, const CurriculumSchedule& schedule) {
  ActiveMask mask{false, false, false, false, false};
  mask[static_cast<int>(Group::kField)] = true;
  if (iter >= schedule.phase_ie) {
    mask[static_cast<int>(Group::kIntrinsics)] = true;
    mask[static_cast<int>(Group::kExtrinsics)] = true;
  }
  if (iter >= schedule.phase_radial) mask[static_cast<int>(Group::kRadial)] = true;
  if (iter >= schedule.phase_raxel) mask[static_cast<int>(Group::kRaxel)] = true;
  return mask;
}

CorrIndex CorrIndex::build(std::span<const Correspondence> corrs) {
  CorrIndex index;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto key = std::minmax(corrs[i].cam_a, corrs[i].cam_b);
    index.by_pair_[{key.first, key.second}].push_back(static_cast<int>(i));
  }
  return index;
}

const std::vector<int>* CorrIndex::pair_corrs(int a, int b) const {
  const auto key = std::minmax(a, b);
  const auto it = by_pair_.find({key.first, key.second});
  return it == by_pair_.end() ? nullptr : &it->second;
}

int CorrIndex::shared_count(int a, int b) const {
  const std::vector<int>* v = pair_corrs(a, b);
  return v == nullptr ? 0 : static_cast<int>(v->size());
}

std::optional<int> select_pair(int source, std::span<const CameraParams> cameras,
                               const CorrIndex& index, Rng& rng,
                               double max_angle_deg, int min_shared) {
  if (cameras.size() < 2) return std::nullopt;
  const Vec3d src_axis =
      rotation_from_6vec<double>(cameras[source].effective_a()).col(2);
  std::vector<int> candidates;
  for (int j = 0; j < static_cast<int>(cameras.size()); ++j) {
    if (j == source) continue;
    const Vec3d axis = rotation_from_6vec<double>(cameras[j].effective_a()).col(2);
    const double angle =
        std::acos(std::clamp(src_axis.dot(axis), -1.0, 1.0)) * 180.0 / M_PI;
    // Strictly interior: exact boundary angles (e.g. a ring spaced so a
    // two-hop neighbor sits at the limit) never qualify.
    if (angle >= max_angle_deg - 1e-9) continue;
    if (index.shared_count(source, j) < min_shared) continue;
    candidates.push_back(j);
  }
  if (candidates.empty()) return std::nullopt;
  return candidates[rng.uniform_int(static_cast<int>(candidates.size()))];
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& value);

template <>
double parse_number<double>(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ParseError("config: bad value for " + key + ": '" + value + "'");
  }
  if (used != value.size() || !std::isfinite(v)) {
    throw ParseError("config: bad value for " + key + ": '" + value + "'");
  }
  return v;
}

template <>
std::int64_t parse_number<std::int64_t>(const std::string& key,
                                        const std::string& value) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw ParseError("config: bad value for " + key + ": '" + value + "'");
  }
  if (used != value.size()) {
    throw ParseError("config: bad value for " + key + ": '" + value + "'");
  }
  return v;
}

}  // namespace

TrainConfig parse_train_config(const std::map<std::string, std::string>& kv,
                               TrainConfig base) {
  TrainConfig cfg = std::move(base);
  for (const auto& [key, value] : kv) {
    const auto num = [&] { return parse_number<double>(key, value); };
    const auto integer = [&] { return parse_number<std::int64_t>(key, value); };
    if (key == "seed") cfg.seed = static_cast<std::uint64_t>(integer());
    else if (key == "budget") cfg.budget = integer();
    else if (key == "batch") cfg.batch = static_cast<int>(integer());
    else if (key == "samples") cfg.samples = static_cast<int>(integer());
    else if (key == "stratified") cfg.stratified = integer() != 0;
    else if (key == "phase_ie") cfg.schedule.phase_ie = integer();
    else if (key == "phase_radial") cfg.schedule.phase_radial = integer();
    else if (key == "phase_raxel") cfg.schedule.phase_raxel = integer();
    else if (key == "prd_start") cfg.schedule.prd_start = integer();
    else if (key == "prd_period") cfg.schedule.prd_period = integer();
    else if (key == "lambda") cfg.schedule.lambda = num();
    else if (key == "eta") cfg.schedule.eta = num();
    else if (key == "min_shared") cfg.schedule.min_shared = static_cast<int>(integer());
    else if (key == "max_pair_angle") cfg.schedule.max_pair_angle_deg = num();
    else if (key == "lr_field") cfg.adam.base_lr[static_cast<int>(Group::kField)] = num();
    else if (key == "lr_intrinsics") cfg.adam.base_lr[static_cast<int>(Group::kIntrinsics)] = num();
    else if (key == "lr_extrinsics") cfg.adam.base_lr[static_cast<int>(Group::kExtrinsics)] = num();
    else if (key == "lr_radial") cfg.adam.base_lr[static_cast<int>(Group::kRadial)] = num();
    else if (key == "lr_raxel") cfg.adam.base_lr[static_cast<int>(Group::kRaxel)] = num();
    else if (key == "decay_steps") cfg.adam.decay_steps = num();
    else if (key == "near") cfg.near = num();
    else if (key == "far") cfg.far = num();
    else if (key == "grid") cfg.grid = static_cast<int>(integer());
    else if (key == "field_sigma_init") cfg.field_sigma_init = num();
    else if (key == "fix_gauge") cfg.fix_gauge = integer() != 0;
    else if (key == "log_every") cfg.log_every = integer();
    else if (key == "checkpoint_every") cfg.checkpoint_every = integer();
    else if (key == "scene") cfg.scene_dir = value;
    else if (key == "out") cfg.out_dir = value;
    else if (key == "residuals") cfg.residuals_init = value;
    else throw ParseError("config: unknown key '" + key + "'");
  }
  cfg.schedule.validate();
  if (cfg.batch < 1) throw ParseError("config: batch must be >= 1");
  if (cfg.budget < 0) throw ParseError("config: budget must be >= 0");
  return cfg;
}

std::map<std::string, std::string> dump_train_config(const TrainConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(cfg.seed);
  kv["budget"] = std::to_string(cfg.budget);
  kv["batch"] = std::to_string(cfg.batch);
  kv["samples"] = std::to_string(cfg.samples);
  kv["stratified"] = cfg.stratified ? "1" : "0";
  kv["phase_ie"] = std::to_string(cfg.schedule.phase_ie);
  kv["phase_radial"] = std::to_string(cfg.schedule.phase_radial);
  kv["phase_raxel"] = std::to_string(cfg.schedule.phase_raxel);
  kv["prd_start"] = std::to_string(cfg.schedule.prd_start);
  kv["prd_period"] = std::to_string(cfg.schedule.prd_period);
  kv["lambda"] = format_double(cfg.schedule.lambda);
  kv["eta"] = format_double(cfg.schedule.eta);
  kv["min_shared"] = std::to_string(cfg.schedule.min_shared);
  kv["max_pair_angle"] = format_double(cfg.schedule.max_pair_angle_deg);
  kv["lr_field"] = format_double(cfg.adam.base_lr[static_cast<int>(Group::kField)]);
  kv["lr_intrinsics"] = format_double(cfg.adam.base_lr[static_cast<int>(Group::kIntrinsics)]);
  kv["lr_extrinsics"] = format_double(cfg.adam.base_lr[static_cast<int>(Group::kExtrinsics)]);
  kv["lr_radial"] = format_double(cfg.adam.base_lr[static_cast<int>(Group::kRadial)]);
  kv["lr_raxel"] = format_double(cfg.adam.base_lr[static_cast<int>(Group::kRaxel)]);
  kv["decay_steps"] = format_double(cfg.adam.decay_steps);
  kv["near"] = format_double(cfg.near);
  kv["far"] = format_double(cfg.far);
  kv["grid"] = std::to_string(cfg.grid);
  kv["field_sigma_init"] = format_double(cfg.field_sigma_init);
  kv["fix_gauge"] = cfg.fix_gauge ? "1" : "0";
  kv["log_every"] = std::to_string(cfg.log_every);
  kv["checkpoint_every"] = std::to_string(cfg.checkpoint_every);
  kv["scene"] = cfg.scene_dir;
  kv["out"] = cfg.out_dir;
  kv["residuals"] = cfg.residuals_init;
  return kv;
}

SamplingSpec TrainState::sampling_spec() const {
  SamplingSpec spec;
  spec.near = cfg.near;
  spec.far = cfg.far;
  spec.n_samples = cfg.samples;
  spec.stratified = cfg.stratified;
  spec.seed = mix_seed(cfg.seed, 0xbeefcafe);
  return spec;
}

void auto_near_far(double& near, double& far, const RadianceField& field,
                   std::span<const CameraParams> cameras) {
  if (near > 0.0 && far > near) return;
  const Vec3d center = 0.5 * (field.lo + field.hi);
  const double bound = 0.5 * (field.hi - field.lo).norm();
  double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
  for (const CameraParams& cam : cameras) {
    const double d = (cam.effective_t() - center).norm();
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  near = std::max(0.05 * dmin, dmin - 1.15 * bound);
  far = dmax + 1.15 * bound;
}

namespace {

TrainState init_train_state_impl(const TrainConfig& cfg,
                                 std::vector<CameraParams> cameras,
                                 std::vector<ImageBuffer> images,
                                 std::vector<Correspondence> corrs,
                                 const Vec3d& lo, const Vec3d& hi) {
  TrainState state;
  state.cfg = cfg;
  state.cameras = std::move(cameras);
  state.images = std::move(images);
  state.corrs = std::move(corrs);
  state.corr_index = CorrIndex::build(state.corrs);
  if (!cfg.residuals_init.empty()) {
    read_residuals(cfg.residuals_init, state.cameras);
  }
  for (const CameraParams& cam : state.cameras) cam.validate();
  if (state.images.size() != state.cameras.size()) {
    throw Error("init_train_state: image/camera count mismatch");
  }
  // Fresh field over the ground-truth bounds; the bundle's field content is
  // withheld (it is the recovery target, not the initialization).
  state.field = RadianceField::create(Vec3i::Constant(cfg.grid), lo, hi,
                                      cfg.field_sigma_init, Vec3d::Constant(0.5));
  auto_near_far(state.cfg.near, state.cfg.far, state.field, state.cameras);
  state.rng = Rng(cfg.seed);
  state.opt.ensure_sizes(state.scene_refs());
  return state;
}

}  // namespace

TrainState init_train_state(const TrainConfig& cfg) {
  SceneBundle bundle = load_scene_bundle(cfg.scene_dir);
  return init_train_state_impl(cfg, std::move(bundle.cameras),
                               std::move(bundle.images), std::move(bundle.corrs),
                               bundle.field.lo, bundle.field.hi);
}

TrainState init_train_state(const TrainConfig& cfg, const SyntheticScene& scene) {
  return init_train_state_impl(cfg, scene.cameras, scene.images, scene.corrs,
                               scene.field.lo, scene.field.hi);
}

StepInfo joint_step(TrainState& state) {
  const TrainConfig& cfg = state.cfg;
  StepInfo info;
  info.active = get_params(state.iter, cfg.schedule);

  const int image_index = state.rng.uniform_int(static_cast<int>(state.images.size()));
  const CameraParams& cam = state.cameras[image_index];
  state.batch.clear();
  for (int i = 0; i < cfg.batch; ++i) {
    const int p = state.rng.uniform_int(cam.width * cam.height);
    state.batch.emplace_back(p % cam.width, p / cam.width);
  }

  LiftOptions opts;
  opts.active = info.active;
  opts.frozen_extrinsics_camera = cfg.fix_gauge ? 0 : -1;

  ad::TapeScope scope(state.tape);
  Scene scene = state.scene_refs();
  LiftedScene lifted(scene, opts);

  SamplingSpec spec = state.sampling_spec();
  spec.seed = mix_seed(spec.seed, static_cast<std::uint64_t>(state.iter));
  ad::Var loss = photometric_loss<ad::Var>(lifted.field_view(),
                                           lifted.camera(image_index),
                                           state.batch, state.images[image_index],
                                           spec);
  info.photometric = value(loss);

  if (cfg.schedule.lambda > 0.0 && !state.corrs.empty() &&
      state.iter >= cfg.schedule.prd_start &&
      state.iter % cfg.schedule.prd_period == 0) {
    const std::optional<int> partner =
        select_pair(image_index, state.cameras, state.corr_index, state.rng,
                    cfg.schedule.max_pair_angle_deg, cfg.schedule.min_shared);
    if (partner) {
      const std::vector<int>* shared =
          state.corr_index.pair_corrs(image_index, *partner);
      std::vector<Correspondence> pair_corrs;
      pair_corrs.reserve(shared->size());
      for (int ci : *shared) pair_corrs.push_back(state.corrs[ci]);
      // Camera models indexed by the correspondence records.
      std::vector<CameraModel<ad::Var>> models(state.cameras.size());
      models[image_index] = lifted.camera(image_index);
      models[*partner] = lifted.camera(*partner);
      const PrdResult<ad::Var> prd =
          prd_loss<ad::Var>(models, pair_corrs, cfg.schedule.eta);
      info.prd = value(prd.loss);
      info.prd_valid = prd.valid;
      loss += cfg.schedule.lambda * prd.loss;
    }
  }

  if (!std::isfinite(value(loss))) {
    throw NonFinite("joint_step: loss is not finite at iteration " +
                    std::to_string(state.iter));
  }
  const Grads grads = extract_grads(state.tape, loss, lifted, state.adj);
  adam_step(scene, info.active, grads, state.opt, cfg.adam, state.iter);
  ++state.iter;
  return info;
}

void append_history_csv(const std::string& path,
                        std::span<const HistoryRow> rows, bool write_header) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw Error("append_history_csv: cannot open " + path);
  if (write_header) os << "iter,photometric,prd,prd_valid,lr,active_groups\n";
  for (const HistoryRow& row : rows) {
    os << row.iter << "," << format_double(row.photometric) << ","
       << format_double(row.prd) << "," << row.prd_valid << ","
       << format_double(row.lr) << "," << row.active << "\n";
  }
  if (!os) throw Error("append_history_csv: write failed for " + path);
}

void write_checkpoint(const TrainState& state, const std::string& ckpt_dir) {
  namespace fs = std::filesystem;
  const fs::path final_dir(ckpt_dir);
  const fs::path tmp_dir(ckpt_dir + ".tmp");
  fs::remove_all(tmp_dir);
  fs::create_directories(tmp_dir);
  write_field((tmp_dir / "field.rfg").string(), state.field);
  write_residuals((tmp_dir / "residuals.txt").string(), state.cameras);
  write_adam((tmp_dir / "optim.adm").string(), state.opt);
  {
    std::ofstream os(tmp_dir / "state.txt");
    os << "iter " << state.iter << "\n";
    os << "rng " << state.rng << "\n";
    if (!os) throw Error("write_checkpoint: cannot write state.txt");
  }
  fs::remove_all(final_dir);
  fs::rename(tmp_dir, final_dir);
}

void load_checkpoint(TrainState& state, const std::string& ckpt_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(ckpt_dir);
  state.field = read_field((dir / "field.rfg").string());
  read_residuals((dir / "residuals.txt").string(), state.cameras);
  state.opt = read_adam((dir / "optim.adm").string());
  std::ifstream is(dir / "state.txt");
  if (!is) throw ParseError(ckpt_dir + ": missing state.txt");
  std::string tag;
  if (!(is >> tag) || tag != "iter" || !(is >> state.iter)) {
    throw ParseError(ckpt_dir + ": malformed state.txt");
  }
  if (!(is >> tag) || tag != "rng" || !(is >> state.rng)) {
    throw ParseError(ckpt_dir + ": malformed rng state");
  }
  for (int gi = 0; gi < kGroupCount; ++gi) {
    const auto expect = group_size(state.scene_refs(), static_cast<Group>(gi));
    if (static_cast<std::size_t>(state.opt.m[gi].size()) != expect) {
      throw ParseError(ckpt_dir + ": optimizer state does not match the scene");
    }
  }
}

TrainState calibrate(const TrainConfig& cfg, const std::string& resume_ckpt) {
  namespace fs = std::filesystem;
  TrainState state = init_train_state(cfg);
  const bool resuming = !resume_ckpt.empty();
  if (resuming) load_checkpoint(state, resume_ckpt);
  const bool logging = !cfg.out_dir.empty();
  std::string csv_path;
  bool header_pending = true;
  if (logging) {
    fs::create_directories(cfg.out_dir);
    write_kv_file((fs::path(cfg.out_dir) / "config.txt").string(),
                  dump_train_config(state.cfg));
    csv_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
    if (resuming && fs::exists(csv_path)) {
      header_pending = false;  // continue the existing log
    } else {
      std::ofstream truncate(csv_path, std::ios::trunc);
    }
  }

  while (state.iter < cfg.budget) {
    const std::int64_t it = state.iter;
    const StepInfo info = joint_step(state);
    if (cfg.log_every > 0 && it % cfg.log_every == 0) {
      HistoryRow row;
      row.iter = it;
      row.photometric = info.photometric;
      row.prd = info.prd.value_or(-1.0);
      row.prd_valid = info.prd_valid;
      row.lr = lr_at(static_cast<double>(it),
                     cfg.adam.base_lr[static_cast<int>(Group::kField)],
                     cfg.adam.decay_steps);
      row.active = active_token(info.active);
      state.history.push_back(row);
      if (logging) {
        append_history_csv(csv_path, {&row, 1}, header_pending);
        header_pending = false;
      }
    }
    if (logging && cfg.checkpoint_every > 0 &&
        state.iter % cfg.checkpoint_every == 0 && state.iter < cfg.budget) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%08lld",
                    static_cast<long long>(state.iter));
      write_checkpoint(state, (fs::path(cfg.out_dir) / name).string());
    }
  }

  if (logging) {
    write_checkpoint(state, (fs::path(cfg.out_dir) / "final").string());
    write_cameras((fs::path(cfg.out_dir) / "cameras.txt").string(), state.cameras);
    write_residuals((fs::path(cfg.out_dir) / "residuals.txt").string(),
                    state.cameras);
    write_field((fs::path(cfg.out_dir) / "field.rfg").string(), state.field);
  }
  return state;
}

}  // namespace raycal
