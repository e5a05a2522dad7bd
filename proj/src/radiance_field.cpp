#include "raycal/radiance_field.hpp"

#include <cmath>

#include "raycal/parallel.hpp"

namespace raycal {

RadianceField RadianceField::create(const Vec3i& res, const Vec3d& lo,
                                    const Vec3d& hi, double sigma_init,
                                    const Vec3d& color_init) {
  if (res.minCoeff() < 2) throw Error("field: grid must be at least 2^3");
  if (!((hi - lo).minCoeff() > 0.0)) throw Error("field: empty bounds");
  RadianceField f;
  f.res = res;
  f.lo = lo;
  f.hi = hi;
  const double s = softplus_inverse(sigma_init);
  const Vec3d l(logit(color_init.x()), logit(color_init.y()),
                logit(color_init.z()));
  f.data.resize(f.voxel_count() * 4);
  for (std::size_t v = 0; v < f.voxel_count(); ++v) {
    f.data[4 * v + 0] = s;
    f.data[4 * v + 1] = l.x();
    f.data[4 * v + 2] = l.y();
    f.data[4 * v + 3] = l.z();
  }
  return f;
}

double softplus_inverse(double y) {
  if (y > 30.0) return y;
  if (y <= 0.0) throw Error("softplus_inverse: non-positive input");
  return std::log(std::expm1(y));
}

double logit(double p) {
  if (!(p > 0.0) || !(p < 1.0)) throw Error("logit: input outside (0,1)");
  return std::log(p / (1.0 - p));
}



FieldSample<ad::Var> field_query(const FieldView<ad::Var>& fv,
                                 const Vec3T<ad::Var>& x) {
  const auto cell =
      detail::trilerp_cell<double>(*fv.field, x.x().v, x.y().v, x.z().v);
  FieldSample<ad::Var> out{ad::Var(0.0),
                           Vec3T<ad::Var>(ad::Var(0.0), ad::Var(0.0), ad::Var(0.0))};
  if (!cell.inside) return out;
  const double* data = fv.field->data.data();
  const bool lifted = !fv.leaves.empty();

  // One fused node per channel: partials are w_k * act'(raw_k) for the eight
  // corner scalars plus the weight gradients contracted against the activated
  // corner values for each tracked position coordinate.
  for (int ch = 0; ch < 4; ++ch) {
    double val = 0.0;
    double dpos[3] = {0.0, 0.0, 0.0};
    ad::Var ops[11];
    double ws[11];
    std::size_t n = 0;
    for (int k = 0; k < 8; ++k) {
      const double raw = data[cell.base[k] + ch];
      double act, dact;
      if (ch == 0) {
        act = ad::softplus_value(raw);
        dact = ad::sigmoid_value(raw);
      } else {
        act = ad::sigmoid_value(raw);
        dact = act * (1.0 - act);
      }
      val += cell.w[k] * act;
      for (int a = 0; a < 3; ++a) dpos[a] += cell.dw[k][a] * act;
      if (lifted) {
        const ad::Var& leaf = fv.leaves[cell.base[k] + ch];
        if (leaf.tracked()) {
          ops[n] = leaf;
          ws[n++] = cell.w[k] * dact;
        }
      }
    }
    for (int a = 0; a < 3; ++a) {
      if (x[a].tracked()) {
        ops[n] = x[a];
        ws[n++] = dpos[a];
      }
    }
    const ad::Var node = ad::fused(val, {ops, n}, {ws, n});
    if (ch == 0) {
      out.sigma = node;
    } else {
      out.color[ch - 1] = node;
    }
  }
  return out;
}

ImageBuffer render_image(const RadianceField& field, const CameraParams& cam,
                         const SamplingSpec& spec) {
  spec.validate();
  const CameraModel<double> model = assemble(cam);
  const FieldView<double> fv{&field};
  ImageBuffer img = ImageBuffer::create(cam.width, cam.height);
  parallel_for(static_cast<std::size_t>(cam.height), [&](std::size_t j) {
    for (int i = 0; i < cam.width; ++i) {
      const std::uint64_t idx = j * static_cast<std::uint64_t>(cam.width) + i;
      const Ray ray = unproject<double>(model, Vec2d(i + 0.5, j + 0.5));
      const Vec3d c = render_ray(fv, ray, per_pixel_spec(spec, idx));
      for (int ch = 0; ch < 3; ++ch) img.at(i, static_cast<int>(j), ch) = c[ch];
    }
  });
  return img;
}

}  // namespace raycal
