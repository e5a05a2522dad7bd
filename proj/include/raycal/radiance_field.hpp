#pragma once

#include <span>
#include <vector>

#include "raycal/camera.hpp"
#include "raycal/geometry.hpp"
#include "raycal/image.hpp"
#include "raycal/rng.hpp"

namespace raycal {

// Dense voxel grid over an axis-aligned box. Each voxel stores four raw
// scalars (s, r, g, b); density is softplus(s) and colors are sigmoid of the
// logits, so the constraints sigma >= 0 and c in [0,1]^3 hold unconditionally.
// Values live at voxel centers and are interpolated trilinearly in activated
// space, so a query is always a convex combination of valid voxel values.
struct RadianceField {
  Vec3i res{0, 0, 0};
  Vec3d lo{0, 0, 0};
  Vec3d hi{0, 0, 0};
  std::vector<double> data;  // res.prod() * 4, voxel-interleaved (s, r, g, b)

  static RadianceField create(const Vec3i& res, const Vec3d& lo, const Vec3d& hi,
                              double sigma_init, const Vec3d& color_init);

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(res.x()) * res.y() * res.z();
  }
  std::size_t voxel_index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * res.y() + y) * res.x() + x;
  }
  double* voxel(int x, int y, int z) { return &data[4 * voxel_index(x, y, z)]; }
  const double* voxel(int x, int y, int z) const {
    return &data[4 * voxel_index(x, y, z)];
  }
};

double softplus_inverse(double y);
double logit(double p);

// View used by the templated query/render paths. The Var specialization adds
// one tape leaf per raw scalar, aligned with `field->data`.
template <class T>
struct FieldView {
  const RadianceField* field = nullptr;
};

template <>
struct FieldView<ad::Var> {
  const RadianceField* field = nullptr;
  std::span<const ad::Var> leaves;  // size field->data.size(), possibly empty
};

template <class T>
struct FieldSample {
  T sigma;
  Vec3T<T> color;
};

namespace detail {

template <class T>
T act_softplus(const T& x) {
  using std::exp;
  using std::log1p;
  if (x > T(30.0)) return x;
  if (x < T(-30.0)) return exp(x);
  return log1p(exp(x));
}

template <class T>
T act_sigmoid(const T& x) {
  using std::exp;
  if (x >= T(0.0)) return T(1.0) / (T(1.0) + exp(-x));
  const T e = exp(x);
  return e / (T(1.0) + e);
}

template <class W>
struct TrilerpCell {
  bool inside = false;
  std::size_t base[8];  // offsets of the 8 corner voxels into `data`
  W w[8];
  W dw[8][3];  // d w[k] / d world coordinate
};

// Corner voxels and bilinear weights of the query point on the voxel-center
// lattice, with border replication (flat, not extrapolated) inside the box.
template <class W>
TrilerpCell<W> trilerp_cell(const RadianceField& field, const W& x, const W& y,
                            const W& z) {
  TrilerpCell<W> cell;
  const W pos[3] = {x, y, z};
  int i0[3];
  W frac[3], dfrac[3];
  for (int a = 0; a < 3; ++a) {
    if (pos[a] < field.lo[a] || pos[a] > field.hi[a]) {
      cell.inside = false;
      return cell;
    }
    const W h = W(field.hi[a] - field.lo[a]) / W(field.res[a]);
    const W u = (pos[a] - field.lo[a]) / h - W(0.5);
    int i = static_cast<int>(std::floor(u));
    i = std::min(std::max(i, 0), field.res[a] - 2);
    W f = u - W(i);
    W df = W(1.0) / h;
    if (f < W(0.0)) {
      f = W(0.0);
      df = W(0.0);
    } else if (f > W(1.0)) {
      f = W(1.0);
      df = W(0.0);
    }
    i0[a] = i;
    frac[a] = f;
    dfrac[a] = df;
  }
  cell.inside = true;
  for (int k = 0; k < 8; ++k) {
    const int cx = k & 1, cy = (k >> 1) & 1, cz = (k >> 2) & 1;
    cell.base[k] = 4 * field.voxel_index(i0[0] + cx, i0[1] + cy, i0[2] + cz);
    const W wx = cx ? frac[0] : W(1.0) - frac[0];
    const W wy = cy ? frac[1] : W(1.0) - frac[1];
    const W wz = cz ? frac[2] : W(1.0) - frac[2];
    cell.w[k] = wx * wy * wz;
    cell.dw[k][0] = (cx ? dfrac[0] : -dfrac[0]) * wy * wz;
    cell.dw[k][1] = wx * (cy ? dfrac[1] : -dfrac[1]) * wz;
    cell.dw[k][2] = wx * wy * (cz ? dfrac[2] : -dfrac[2]);
  }
  return cell;
}

}  // namespace detail

// Plain scalar query (double for evaluation, long double for the
// finite-difference oracle): activate per voxel, then interpolate.
template <class T>
FieldSample<T> field_query(const FieldView<T>& fv, const Vec3T<T>& x) {
  const auto cell = detail::trilerp_cell<T>(*fv.field, x.x(), x.y(), x.z());
  FieldSample<T> out{T(0.0), Vec3T<T>(T(0.0), T(0.0), T(0.0))};
  if (!cell.inside) return out;
  const double* data = fv.field->data.data();
  for (int k = 0; k < 8; ++k) {
    const double* vox = data + cell.base[k];
    out.sigma += cell.w[k] * detail::act_softplus(T(vox[0]));
    out.color.x() += cell.w[k] * detail::act_sigmoid(T(vox[1]));
    out.color.y() += cell.w[k] * detail::act_sigmoid(T(vox[2]));
    out.color.z() += cell.w[k] * detail::act_sigmoid(T(vox[3]));
  }
  return out;
}

// Recording query: one fused tape node per channel.
FieldSample<ad::Var> field_query(const FieldView<ad::Var>& fv,
                                 const Vec3T<ad::Var>& x);

struct SamplingSpec {
  double near = 0.0;
  double far = 0.0;
  int n_samples = 64;
  bool stratified = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(near > 0.0) || !(far > near)) {
      throw Error("sampling: require 0 < near < far");
    }
    if (n_samples < 2) throw Error("sampling: need at least 2 samples");
  }
};

// Spec for a single pixel's ray, with its own deterministic jitter stream.
inline SamplingSpec per_pixel_spec(const SamplingSpec& base,
                                   std::uint64_t pixel_index) {
  SamplingSpec s = base;
  s.seed = mix_seed(base.seed, pixel_index);
  return s;
}

struct RenderStats {
  double weight_sum = 0.0;
};

// exp(-a * delta) and a*b+c, with fused tape nodes for the Var instantiation.
template <class T>
T ad_exp_neg(const T& a, double delta) {
  using std::exp;
  return exp(-a * T(delta));
}
inline ad::Var ad_exp_neg(const ad::Var& a, double delta) {
  const double v = std::exp(-a.v * delta);
  if (a.idx < 0) return ad::Var(v);
  return ad::Var(v, ad::active_tape().node1(a.idx, -delta * v));
}
template <class T>
T ad_madd(const T& a, const T& b, const T& c) {
  return a * b + c;
}
inline ad::Var ad_madd(const ad::Var& a, const ad::Var& b, const ad::Var& c) {
  return ad::madd(a, b, c);
}

// Volumetric color along a ray: samples t_1..t_N in [near, far] (one jitter
// per segment when stratified), per-segment transparency
// alpha_i = exp(-sigma(r(t_i)) * delta_i * |d|) with delta_N = far - t_N, and
// C = sum_i (prod_{j<i} alpha_j) (1 - alpha_i) c_i.
template <class T>
Vec3T<T> render_ray(const FieldView<T>& fv, const RayT<T>& ray,
                    const SamplingSpec& spec, RenderStats* stats = nullptr) {
  spec.validate();
  const int n = spec.n_samples;
  const double h = (spec.far - spec.near) / n;
  Rng jitter(spec.seed);

  thread_local std::vector<double> ts;
  ts.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = spec.stratified ? jitter.uniform() : 0.5;
    ts[i] = spec.near + (i + u) * h;
  }

  const T dir_norm = vec_norm<T>(ray.dir);
  Vec3T<T> color(T(0.0), T(0.0), T(0.0));
  T trans = T(1.0);
  double weight_sum = 0.0;

  for (int i = 0; i < n; ++i) {
    const double delta = (i + 1 < n ? ts[i + 1] : spec.far) - ts[i];
    const T t_i(ts[i]);
    const Vec3T<T> x(ad_madd(ray.dir.x(), t_i, ray.origin.x()),
                     ad_madd(ray.dir.y(), t_i, ray.origin.y()),
                     ad_madd(ray.dir.z(), t_i, ray.origin.z()));
    const FieldSample<T> s = field_query(fv, x);
    const T alpha = ad_exp_neg(s.sigma * dir_norm, delta);
    const T pass = trans * alpha;
    const T w = trans - pass;
    const double wv = static_cast<double>(value(w));
    if (!(wv >= -1e-12) || !std::isfinite(wv)) {
      throw NonFinite("render_ray: invalid sample weight");
    }
    weight_sum += wv;
    color.x() = ad_madd(w, s.color.x(), color.x());
    color.y() = ad_madd(w, s.color.y(), color.y());
    color.z() = ad_madd(w, s.color.z(), color.z());
    trans = pass;
  }
  if (weight_sum > 1.0 + 1e-9) {
    throw NonFinite("render_ray: weights exceed 1");
  }
  if (stats != nullptr) stats->weight_sum = weight_sum;
  return color;
}

// Renders pixel (i, j) along the ray through its center (i+0.5, j+0.5).
ImageBuffer render_image(const RadianceField& field, const CameraParams& cam,
                         const SamplingSpec& spec);

// Mean over the batch of |C(p) - C_hat(r(p))|^2 (squared 2-norm per pixel).
template <class T>
T photometric_loss(const FieldView<T>& fv, const CameraModel<T>& cam,
                   std::span<const Vec2i> pixels, const ImageBuffer& gt,
                   const SamplingSpec& spec) {
  if (pixels.empty()) throw Error("photometric_loss: empty batch");
  T acc(0.0);
  for (const Vec2i& px : pixels) {
    const Vec2d center(px.x() + 0.5, px.y() + 0.5);
    const RayT<T> ray = unproject(cam, center);
    const std::uint64_t idx =
        static_cast<std::uint64_t>(px.y()) * cam.width + px.x();
    const Vec3T<T> c = render_ray(fv, ray, per_pixel_spec(spec, idx));
    for (int ch = 0; ch < 3; ++ch) {
      const T e = c[ch] - T(gt.at(px.x(), px.y(), ch));
      acc = ad_madd(e, e, acc);
    }
  }
  return acc / static_cast<double>(pixels.size());
}

}  // namespace raycal
