#include "raycal/params.hpp"

namespace raycal {

std::string active_token(const ActiveMask& mask) {
  static constexpr char kLetters[kGroupCount] = {'F', 'I', 'E', 'R', 'X'};
  std::string token;
  for (int i = 0; i < kGroupCount; ++i) {
    if (mask[i]) token.push_back(kLetters[i]);
  }
  return token;
}

namespace {

constexpr std::size_t kIntrPerCam = 4;
constexpr std::size_t kExtrPerCam = 9;
constexpr std::size_t kRadialPerCam = 2;

std::size_t raxel_per_cam(const CameraParams& cam) {
  return cam.raxel.node_count() * 6;
}

// Visits every scalar of a group in flat order. fn(double& value).
template <class Fn>
void for_each_scalar(const Scene& scene, Group g, Fn&& fn) {
  switch (g) {
    case Group::kField: {
      for (double& v : scene.field->data) fn(v);
      return;
    }
    case Group::kIntrinsics: {
      for (CameraParams& cam : *scene.cameras) {
        fn(cam.intrinsics.df.x());
        fn(cam.intrinsics.df.y());
        fn(cam.intrinsics.dc.x());
        fn(cam.intrinsics.dc.y());
      }
      return;
    }
    case Group::kExtrinsics: {
      for (CameraParams& cam : *scene.cameras) {
        for (int i = 0; i < 6; ++i) fn(cam.extrinsics.da[i]);
        for (int i = 0; i < 3; ++i) fn(cam.extrinsics.dt[i]);
      }
      return;
    }
    case Group::kRadial: {
      for (CameraParams& cam : *scene.cameras) {
        fn(cam.radial.zk.x());
        fn(cam.radial.zk.y());
      }
      return;
    }
    case Group::kRaxel: {
      for (CameraParams& cam : *scene.cameras) {
        for (Vec3d& node : cam.raxel.dir_offset) {
          fn(node.x());
          fn(node.y());
          fn(node.z());
        }
        for (Vec3d& node : cam.raxel.org_offset) {
          fn(node.x());
          fn(node.y());
          fn(node.z());
        }
      }
      return;
    }
  }
}

}  // namespace

std::size_t group_size(const Scene& scene, Group g) {
  switch (g) {
    case Group::kField:
      return scene.field != nullptr ? scene.field->data.size() : 0;
    case Group::kIntrinsics:
      return kIntrPerCam * scene.cameras->size();
    case Group::kExtrinsics:
      return kExtrPerCam * scene.cameras->size();
    case Group::kRadial:
      return kRadialPerCam * scene.cameras->size();
    case Group::kRaxel: {
      std::size_t n = 0;
      for (const CameraParams& cam : *scene.cameras) n += raxel_per_cam(cam);
      return n;
    }
  }
  return 0;
}

Eigen::VectorXd gather(const Scene& scene, Group g) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(group_size(scene, g)));
  Eigen::Index i = 0;
  for_each_scalar(scene, g, [&](double& v) { out[i++] = v; });
  return out;
}

void scatter(Scene& scene, Group g, const Eigen::VectorXd& values) {
  if (static_cast<std::size_t>(values.size()) != group_size(scene, g)) {
    throw CountMismatch("scatter: size mismatch for group " +
                        std::string(group_name(g)));
  }
  Eigen::Index i = 0;
  for_each_scalar(scene, g, [&](double& v) { v = values[i++]; });
}

namespace {

double* scalar_ptr(const Scene& scene, Group g, std::size_t index) {
  switch (g) {
    case Group::kField:
      if (index >= scene.field->data.size()) return nullptr;
      return &scene.field->data[index];
    case Group::kIntrinsics: {
      const std::size_t cam_idx = index / kIntrPerCam;
      if (cam_idx >= scene.cameras->size()) return nullptr;
      CameraParams& cam = (*scene.cameras)[cam_idx];
      const std::size_t w = index % kIntrPerCam;
      return w < 2 ? &cam.intrinsics.df[static_cast<int>(w)]
                   : &cam.intrinsics.dc[static_cast<int>(w - 2)];
    }
    case Group::kExtrinsics: {
      const std::size_t cam_idx = index / kExtrPerCam;
      if (cam_idx >= scene.cameras->size()) return nullptr;
      CameraParams& cam = (*scene.cameras)[cam_idx];
      const std::size_t w = index % kExtrPerCam;
      return w < 6 ? &cam.extrinsics.da[static_cast<int>(w)]
                   : &cam.extrinsics.dt[static_cast<int>(w - 6)];
    }
    case Group::kRadial: {
      const std::size_t cam_idx = index / kRadialPerCam;
      if (cam_idx >= scene.cameras->size()) return nullptr;
      return &(*scene.cameras)[cam_idx].radial.zk[static_cast<int>(index % 2)];
    }
    case Group::kRaxel: {
      std::size_t rest = index;
      for (CameraParams& cam : *scene.cameras) {
        const std::size_t per_cam = raxel_per_cam(cam);
        if (rest < per_cam) {
          const std::size_t half = per_cam / 2;
          auto& nodes = rest < half ? cam.raxel.dir_offset : cam.raxel.org_offset;
          const std::size_t w = rest < half ? rest : rest - half;
          return &nodes[w / 3][static_cast<int>(w % 3)];
        }
        rest -= per_cam;
      }
      return nullptr;
    }
  }
  return nullptr;
}

}  // namespace

double get_scalar(const Scene& scene, Group g, std::size_t index) {
  const double* p = scalar_ptr(scene, g, index);
  if (p == nullptr) throw CountMismatch("get_scalar: index out of range");
  return *p;
}

void set_scalar(Scene& scene, Group g, std::size_t index, double value) {
  double* p = scalar_ptr(scene, g, index);
  if (p == nullptr) throw CountMismatch("set_scalar: index out of range");
  *p = value;
}

LiftedScene::LiftedScene(const Scene& scene, const LiftOptions& opts)
    : scene_(scene), opts_(opts) {
  const auto active = [&](Group g) { return opts.active[static_cast<int>(g)]; };
  auto& ids = leaf_ids_;

  // Field leaves first, aligned one-to-one with the raw voxel data.
  if (scene.field != nullptr && active(Group::kField)) {
    field_leaves_.reserve(scene.field->data.size());
    auto& field_ids = ids[static_cast<int>(Group::kField)];
    field_ids.reserve(scene.field->data.size());
    for (double v : scene.field->data) {
      const ad::Var leaf = ad::leaf(v);
      field_ids.push_back(leaf.idx);
      field_leaves_.push_back(leaf);
    }
  }
  field_view_.field = scene.field;
  field_view_.leaves = field_leaves_;

  // Camera residual leaves, per camera, in gather order within each group.
  const int ncam = static_cast<int>(scene.cameras->size());
  residuals_.resize(ncam);
  models_.resize(ncam);
  for (int ci = 0; ci < ncam; ++ci) {
    const CameraParams& cam = (*scene.cameras)[ci];
    CameraResiduals& res = residuals_[ci];
    const auto mk = [&](double v, Group g, bool frozen) {
      if (!active(g)) return ad::Var(v);
      auto& group_ids = ids[static_cast<int>(g)];
      if (frozen) {
        group_ids.push_back(-1);
        return ad::Var(v);
      }
      const ad::Var leaf = ad::leaf(v);
      group_ids.push_back(leaf.idx);
      return leaf;
    };
    for (int i = 0; i < 2; ++i) res.df[i] = mk(cam.intrinsics.df[i], Group::kIntrinsics, false);
    for (int i = 0; i < 2; ++i) res.dc[i] = mk(cam.intrinsics.dc[i], Group::kIntrinsics, false);
    const bool frozen_extr = ci == opts.frozen_extrinsics_camera;
    for (int i = 0; i < 6; ++i) res.da[i] = mk(cam.extrinsics.da[i], Group::kExtrinsics, frozen_extr);
    for (int i = 0; i < 3; ++i) res.dt[i] = mk(cam.extrinsics.dt[i], Group::kExtrinsics, frozen_extr);
    for (int i = 0; i < 2; ++i) res.zk[i] = mk(cam.radial.zk[i], Group::kRadial, false);
    res.zd.resize(cam.raxel.node_count());
    res.zo.resize(cam.raxel.node_count());
    for (std::size_t nd = 0; nd < cam.raxel.node_count(); ++nd) {
      for (int i = 0; i < 3; ++i) res.zd[nd][i] = mk(cam.raxel.dir_offset[nd][i], Group::kRaxel, false);
    }
    for (std::size_t nd = 0; nd < cam.raxel.node_count(); ++nd) {
      for (int i = 0; i < 3; ++i) res.zo[nd][i] = mk(cam.raxel.org_offset[nd][i], Group::kRaxel, false);
    }
  }
}

const CameraModel<ad::Var>& LiftedScene::camera(int index) const {
  auto& slot = models_[index];
  if (!slot.has_value()) {
    const CameraParams& cam = (*scene_.cameras)[index];
    const CameraResiduals& res = residuals_[index];
    CameraModel<ad::Var> m;
    m.width = cam.width;
    m.height = cam.height;
    for (int i = 0; i < 2; ++i) {
      m.f[i] = res.df[i] + cam.intrinsics.f0[i];
      m.c[i] = res.dc[i] + cam.intrinsics.c0[i];
      m.k[i] = res.zk[i] + cam.radial.k0[i];
    }
    Vec6T<ad::Var> a;
    for (int i = 0; i < 6; ++i) a[i] = res.da[i] + cam.extrinsics.a0[i];
    m.R = rotation_from_6vec<ad::Var>(a);
    for (int i = 0; i < 3; ++i) m.t[i] = res.dt[i] + cam.extrinsics.t0[i];
    m.raxel_cols = cam.raxel.cols;
    m.raxel_rows = cam.raxel.rows;
    m.raxel_dir = res.zd;
    m.raxel_org = res.zo;
    slot.emplace(std::move(m));
  }
  return *slot;
}

Grads extract_grads(const ad::Tape& tape, const ad::Var& loss,
                    const LiftedScene& lifted, std::vector<double>& scratch) {
  tape.backward(loss.idx, scratch);  // zeros everywhere if loss is untracked
  Grads grads;
  for (int gi = 0; gi < kGroupCount; ++gi) {
    const auto& ids = lifted.leaf_ids(static_cast<Group>(gi));
    auto& out = grads.g[gi];
    out.resize(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      out[static_cast<Eigen::Index>(i)] =
          (ids[i] >= 0 && ids[i] < static_cast<int32_t>(scratch.size()))
              ? scratch[ids[i]]
              : 0.0;
    }
  }
  return grads;
}

}  // namespace raycal
