#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "raycal/optimizer.hpp"
#include "raycal/params.hpp"
#include "raycal/radiance_field.hpp"
#include "raycal/ray_geometry.hpp"
#include "raycal/rng.hpp"
#include "raycal/synth.hpp"

namespace raycal {

// Staged activation of parameter groups: the field trains alone first, then
// the linear camera (intrinsics + extrinsics), then radial, then the raxel
// offsets. The projected-ray-distance term joins every `prd_period` steps
// from `prd_start` with weight `lambda` and threshold `eta`.
struct CurriculumSchedule {
  std::int64_t phase_ie = 2000;
  std::int64_t phase_radial = 4000;
  std::int64_t phase_raxel = 6000;
  std::int64_t prd_start = 2000;
  std::int64_t prd_period = 10;
  double lambda = 0.1;
  double eta = 5.0;
  int min_shared = 8;             // correspondences required to run a PRD step
  double max_pair_angle_deg = 30.0;

  void validate() const {
    if (phase_ie > phase_radial || phase_radial > phase_raxel) {
      throw Error("schedule: phase boundaries must be nondecreasing");
    }
    if (prd_period < 1) throw Error("schedule: prd_period must be >= 1");
    if (!(eta > 0.0)) throw Error("schedule: eta must be positive");
    if (lambda < 0.0) throw Error("schedule: lambda must be >= 0");
  }
};

ActiveMask get_params(std::int64_t iter, const CurriculumSchedule& schedule);

// Correspondence lookup by unordered camera pair.
class CorrIndex {
 public:
  static CorrIndex build(std::span<const Correspondence> corrs);
  const std::vector<int>* pair_corrs(int a, int b) const;
  int shared_count(int a, int b) const;

 private:
  std::map<std::pair<int, int>, std::vector<int>> by_pair_;
};

// Uniformly samples a partner whose optical axis is within max_angle_deg of
// the source and which shares at least min_shared correspondences. Ties at
// the angle boundary are excluded.
std::optional<int> select_pair(int source, std::span<const CameraParams> cameras,
                               const CorrIndex& index, Rng& rng,
                               double max_angle_deg = 30.0, int min_shared = 1);

struct TrainConfig {
  std::uint64_t seed = 1;
  std::int64_t budget = 8000;
  int batch = 1024;
  int samples = 64;
  bool stratified = false;
  CurriculumSchedule schedule;
  AdamConfig adam;
  double near = 0.0;  // 0 = derive from field bounds and cameras
  double far = 0.0;
  int grid = 32;                 // training field resolution
  double field_sigma_init = 0.05;
  bool fix_gauge = true;         // freeze camera 0 extrinsics
  std::int64_t log_every = 1;
  std::int64_t checkpoint_every = 0;  // 0 = only at the end
  std::string scene_dir;
  std::string out_dir;
  std::string residuals_init;  // optional pre-perturbed residual file
};

TrainConfig parse_train_config(const std::map<std::string, std::string>& kv,
                               TrainConfig base = {});
std::map<std::string, std::string> dump_train_config(const TrainConfig& cfg);

struct HistoryRow {
  std::int64_t iter = 0;
  double photometric = 0.0;
  double prd = -1.0;  // -1 when no PRD term ran this step
  int prd_valid = 0;
  double lr = 0.0;
  std::string active;
};

struct TrainState {
  TrainConfig cfg;
  RadianceField field;
  std::vector<CameraParams> cameras;
  std::vector<ImageBuffer> images;
  std::vector<Correspondence> corrs;
  CorrIndex corr_index;
  AdamState opt;
  Rng rng;
  std::int64_t iter = 0;
  std::vector<HistoryRow> history;

  // reused evaluation buffers
  ad::Tape tape;
  std::vector<double> adj;
  std::vector<Vec2i> batch;

  Scene scene_refs() { return Scene{&field, &cameras}; }
  SamplingSpec sampling_spec() const;
};

// Builds the initial training state from the bundle referenced by cfg, or
// directly from an in-memory scene (bounds come from its ground-truth field;
// the field contents are withheld and training starts from a flat init).
TrainState init_train_state(const TrainConfig& cfg);
TrainState init_train_state(const TrainConfig& cfg, const SyntheticScene& scene);

struct StepInfo {
  double photometric = 0.0;
  std::optional<double> prd;
  int prd_valid = 0;
  ActiveMask active{};
};

// One optimization step: photometric batch on a random image, periodic PRD
// term against a selected partner view, reverse pass, Adam update over the
// groups active at this iteration.
StepInfo joint_step(TrainState& state);

// Runs joint_step for cfg.budget iterations with CSV logging and atomic
// checkpoints under cfg.out_dir. Returns the final state. A non-empty
// resume_ckpt restores a previous checkpoint and continues from its
// iteration, reproducing the uninterrupted run bit for bit.
TrainState calibrate(const TrainConfig& cfg, const std::string& resume_ckpt = "");

// Continues a previous run: state files are loaded from ckpt_dir and training
// resumes with the surrounding config.
void load_checkpoint(TrainState& state, const std::string& ckpt_dir);
void write_checkpoint(const TrainState& state, const std::string& ckpt_dir);

void append_history_csv(const std::string& path,
                        std::span<const HistoryRow> rows, bool write_header);

// Conservative near/far from the camera positions and the field box; leaves
// the values alone when already set (near > 0 and far > near).
void auto_near_far(double& near, double& far, const RadianceField& field,
                   std::span<const CameraParams> cameras);

}  // namespace raycal
