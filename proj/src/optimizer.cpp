#include "raycal/optimizer.hpp"

#include <cmath>

namespace raycal {

void adam_step(Scene& scene, const ActiveMask& active, const Grads& grads,
               AdamState& state, const AdamConfig& cfg, std::int64_t iter) {
  state.ensure_sizes(scene);
  for (int gi = 0; gi < kGroupCount; ++gi) {
    if (!active[gi]) continue;
    const Group g = static_cast<Group>(gi);
    const Eigen::VectorXd& grad = grads.g[gi];
    if (grad.size() == 0) continue;
    if (static_cast<std::size_t>(grad.size()) != group_size(scene, g)) {
      throw CountMismatch("adam_step: gradient size mismatch for group " +
                          std::string(group_name(g)));
    }
    if (!grad.allFinite()) {
      throw NonFinite("adam_step: non-finite gradient in group " +
                      std::string(group_name(g)));
    }
    const std::int64_t t = ++state.step[gi];
    const double lr = lr_at(static_cast<double>(iter), cfg.base_lr[gi],
                            cfg.decay_steps);
    Eigen::VectorXd& m = state.m[gi];
    Eigen::VectorXd& v = state.v[gi];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    Eigen::VectorXd theta = gather(scene, g);
    theta.array() -= lr * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + cfg.eps);
    scatter(scene, g, theta);
  }
  if (active[static_cast<int>(Group::kIntrinsics)]) {
    for (CameraParams& cam : *scene.cameras) clamp_residuals(cam);
  }
}

GradCheckResult grad_check(Scene& scene, const LiftOptions& opts,
                           const std::function<Grads()>& eval_grads,
                           const std::function<long double()>& eval_plain,
                           double eps) {
  const Grads analytic = eval_grads();
  GradCheckResult result;
  for (int gi = 0; gi < kGroupCount; ++gi) {
    if (!opts.active[gi]) continue;
    const Group g = static_cast<Group>(gi);
    const std::size_t n = group_size(scene, g);
    if (n == 0) continue;
    if (static_cast<std::size_t>(analytic.g[gi].size()) != n) {
      throw CountMismatch("grad_check: recorded gradient size mismatch");
    }
    result.per_group[gi] = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double original = get_scalar(scene, g, j);
      set_scalar(scene, g, j, original + eps);
      const long double f_plus = eval_plain();
      set_scalar(scene, g, j, original - eps);
      const long double f_minus = eval_plain();
      set_scalar(scene, g, j, original);
      if (!std::isfinite(static_cast<double>(f_plus)) ||
          !std::isfinite(static_cast<double>(f_minus))) {
        throw NonFinite("grad_check: loss evaluation not finite");
      }
      const double fd =
          static_cast<double>((f_plus - f_minus) / (2.0L * static_cast<long double>(eps)));
      const double a = analytic.g[gi][static_cast<Eigen::Index>(j)];
      const double denom = std::max({std::abs(a), std::abs(fd), 1e-12});
      const double rel = std::abs(a - fd) / denom;
      result.per_group[gi] = std::max(result.per_group[gi], rel);
      if (rel > result.max_rel) {
        result.max_rel = rel;
        result.worst_group = g;
        result.worst_index = j;
        result.worst_analytic = a;
        result.worst_fd = fd;
      }
    }
  }
  return result;
}

}  // namespace raycal
