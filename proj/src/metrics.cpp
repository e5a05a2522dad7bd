#include "raycal/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace raycal {

double psnr(const ImageBuffer& img, const ImageBuffer& ref) {
  if (!img.same_size(ref)) throw DimensionMismatch("psnr: image sizes differ");
  double sse = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double d = img.data[i] - ref.data[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(img.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 L)^2
constexpr double kC2 = 0.03 * 0.03;  // (K2 L)^2

const double* gaussian_kernel() {
  static double kernel[kWin * kWin];
  static bool ready = false;
  if (!ready) {
    double sum = 0.0;
    for (int j = 0; j < kWin; ++j) {
      for (int i = 0; i < kWin; ++i) {
        const double dx = i - kWin / 2, dy = j - kWin / 2;
        kernel[j * kWin + i] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
        sum += kernel[j * kWin + i];
      }
    }
    for (double& w : kernel) w /= sum;
    ready = true;
  }
  return kernel;
}

}  // namespace

double ssim(const ImageBuffer& img, const ImageBuffer& ref) {
  if (!img.same_size(ref)) throw DimensionMismatch("ssim: image sizes differ");
  if (img.width < kWin || img.height < kWin) {
    throw TooSmall("ssim: image smaller than the 11x11 window");
  }
  const double* kernel = gaussian_kernel();
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    double acc = 0.0;
    std::size_t windows = 0;
    for (int y = 0; y + kWin <= img.height; ++y) {
      for (int x = 0; x + kWin <= img.width; ++x) {
        double mu1 = 0, mu2 = 0, s11 = 0, s22 = 0, s12 = 0;
        for (int j = 0; j < kWin; ++j) {
          for (int i = 0; i < kWin; ++i) {
            const double w = kernel[j * kWin + i];
            const double a = img.at(x + i, y + j, c);
            const double b = ref.at(x + i, y + j, c);
            mu1 += w * a;
            mu2 += w * b;
            s11 += w * a * a;
            s22 += w * b * b;
            s12 += w * a * b;
          }
        }
        const double var1 = s11 - mu1 * mu1;
        const double var2 = s22 - mu2 * mu2;
        const double cov = s12 - mu1 * mu2;
        const double num = (2.0 * mu1 * mu2 + kC1) * (2.0 * cov + kC2);
        const double den = (mu1 * mu1 + mu2 * mu2 + kC1) * (var1 + var2 + kC2);
        acc += num / den;
        ++windows;
      }
    }
    total += acc / static_cast<double>(windows);
  }
  return total / 3.0;
}

CameraErrors camera_error(std::span<const CameraParams> gt,
                          std::span<const CameraParams> estimated) {
  if (gt.size() != estimated.size()) {
    throw CountMismatch("camera_error: camera counts differ");
  }
  CameraErrors err;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Vec2d fg = gt[i].effective_f();
    const Vec2d fe = estimated[i].effective_f();
    err.focal_pct.push_back(
        50.0 * (std::abs(fe.x() - fg.x()) / fg.x() + std::abs(fe.y() - fg.y()) / fg.y()));

    const Mat3d rg = rotation_from_6vec<double>(gt[i].effective_a());
    const Mat3d re = rotation_from_6vec<double>(estimated[i].effective_a());
    const double cos_angle =
        std::clamp(((rg.transpose() * re).trace() - 1.0) / 2.0, -1.0, 1.0);
    err.rotation_deg.push_back(std::acos(cos_angle) * 180.0 / M_PI);

    err.translation.push_back(
        (estimated[i].effective_t() - gt[i].effective_t()).norm());
  }
  const auto mean = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
  };
  err.mean_focal_pct = mean(err.focal_pct);
  err.mean_rotation_deg = mean(err.rotation_deg);
  err.mean_translation = mean(err.translation);
  return err;
}

}  // namespace raycal
