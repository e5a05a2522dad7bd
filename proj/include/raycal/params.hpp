#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "raycal/camera.hpp"
#include "raycal/radiance_field.hpp"

namespace raycal {

// Learnable parameter groups, in curriculum order. Every learnable scalar in
// the artifact belongs to exactly one group.
enum class Group : int {
  kField = 0,
  kIntrinsics,   // df, dc
  kExtrinsics,   // da, dt
  kRadial,       // zk
  kRaxel,        // z_d, z_o nodes
};
inline constexpr int kGroupCount = 5;

inline const char* group_name(Group g) {
  switch (g) {
    case Group::kField: return "field";
    case Group::kIntrinsics: return "intrinsics";
    case Group::kExtrinsics: return "extrinsics";
    case Group::kRadial: return "radial";
    case Group::kRaxel: return "raxel";
  }
  return "?";
}

using ActiveMask = std::array<bool, kGroupCount>;
inline constexpr ActiveMask kAllGroups{true, true, true, true, true};
inline constexpr ActiveMask kFieldOnly{true, false, false, false, false};

// Compact token for logs: subset of "FIERX".
std::string active_token(const ActiveMask& mask);

// Non-owning handle on the trainable model.
struct Scene {
  RadianceField* field = nullptr;
  std::vector<CameraParams>* cameras = nullptr;
};

// Flat parameter order per group (gather/scatter/lift all agree on it):
//   field       raw voxel data in storage order
//   intrinsics  per camera: df.x df.y dc.x dc.y
//   extrinsics  per camera: da[0..5] dt[0..2]
//   radial      per camera: zk.x zk.y
//   raxel       per camera: all z_d nodes (xyz), then all z_o nodes (xyz)
std::size_t group_size(const Scene& scene, Group g);
Eigen::VectorXd gather(const Scene& scene, Group g);
void scatter(Scene& scene, Group g, const Eigen::VectorXd& values);
double get_scalar(const Scene& scene, Group g, std::size_t index);
void set_scalar(Scene& scene, Group g, std::size_t index, double v);

struct LiftOptions {
  ActiveMask active = kAllGroups;
  // Gauge fix: this camera's extrinsics lift as constants and never update.
  int frozen_extrinsics_camera = -1;
};

// Tape leaves for the active groups plus lazily assembled camera models.
// Leaf ids align with the flat gather order; -1 marks a frozen scalar.
class LiftedScene {
 public:
  LiftedScene(const Scene& scene, const LiftOptions& opts);

  const FieldView<ad::Var>& field_view() const { return field_view_; }
  const CameraModel<ad::Var>& camera(int index) const;
  int camera_count() const { return static_cast<int>(residuals_.size()); }
  const std::vector<int32_t>& leaf_ids(Group g) const {
    return leaf_ids_[static_cast<int>(g)];
  }
  const LiftOptions& options() const { return opts_; }

 private:
  struct CameraResiduals {
    Vec2T<ad::Var> df, dc, zk;
    Vec6T<ad::Var> da;
    Vec3T<ad::Var> dt;
    std::vector<Vec3T<ad::Var>> zd, zo;
  };

  const Scene scene_;
  LiftOptions opts_;
  std::vector<ad::Var> field_leaves_;
  FieldView<ad::Var> field_view_;
  std::vector<CameraResiduals> residuals_;
  mutable std::vector<std::optional<CameraModel<ad::Var>>> models_;
  std::array<std::vector<int32_t>, kGroupCount> leaf_ids_;
};

// Per-group gradients of a recorded scalar loss, in flat gather order.
struct Grads {
  std::array<Eigen::VectorXd, kGroupCount> g;
};

Grads extract_grads(const ad::Tape& tape, const ad::Var& loss,
                    const LiftedScene& lifted, std::vector<double>& scratch);

}  // namespace raycal
