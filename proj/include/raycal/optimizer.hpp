#pragma once

#include <cstdint>
#include <functional>

#include "raycal/params.hpp"

namespace raycal {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::array<double, kGroupCount> base_lr{5e-4, 5e-4, 5e-4, 5e-4, 5e-4};
  double decay_steps = 400000.0;
};

// Exponential decay to one tenth every decay_steps iterations.
inline double lr_at(double iter, double base_lr = 5e-4,
                    double decay_steps = 400000.0) {
  return base_lr * std::pow(0.1, iter / decay_steps);
}

struct AdamState {
  std::array<Eigen::VectorXd, kGroupCount> m;
  std::array<Eigen::VectorXd, kGroupCount> v;
  std::array<std::int64_t, kGroupCount> step{0, 0, 0, 0, 0};

  void ensure_sizes(const Scene& scene) {
    for (int gi = 0; gi < kGroupCount; ++gi) {
      const auto n = static_cast<Eigen::Index>(
          group_size(scene, static_cast<Group>(gi)));
      if (m[gi].size() != n) m[gi] = Eigen::VectorXd::Zero(n);
      if (v[gi].size() != n) v[gi] = Eigen::VectorXd::Zero(n);
    }
  }
};

// One Adam update over the active groups (bias-corrected, per-group step
// counters), followed by the intrinsics residual clamps. Inactive groups are
// untouched bit for bit. `iter` drives the learning-rate decay.
void adam_step(Scene& scene, const ActiveMask& active, const Grads& grads,
               AdamState& state, const AdamConfig& cfg, std::int64_t iter);

struct GradCheckResult {
  double max_rel = 0.0;
  Group worst_group = Group::kField;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_fd = 0.0;
  // Max relative error seen per group; -1 for groups with no scalars checked.
  std::array<double, kGroupCount> per_group{-1, -1, -1, -1, -1};
};

// Compares recorded partials against central finite differences
// (f(x+eps) - f(x-eps)) / 2eps for every active scalar. `eval_plain` must
// evaluate the same loss without recording; parameters are restored bitwise.
// Relative errors use max(|analytic|, |fd|) floored at 1e-12. The closure may
// evaluate in extended precision: the difference quotient is formed in long
// double, which keeps cancellation noise below the 1e-4 bar even for scalars
// whose influence on the loss is many orders below its magnitude.
GradCheckResult grad_check(Scene& scene, const LiftOptions& opts,
                           const std::function<Grads()>& eval_grads,
                           const std::function<long double()>& eval_plain,
                           double eps = 1e-5);

}  // namespace raycal
