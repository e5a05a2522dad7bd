#pragma once

#include <span>
#include <vector>

#include "raycal/camera.hpp"
#include "raycal/image.hpp"

namespace raycal {

// Peak signal-to-noise ratio in dB with MAX = 1, capped at 99.0 so that
// identical images stay finite in logs.
inline constexpr double kPsnrCap = 99.0;
double psnr(const ImageBuffer& img, const ImageBuffer& ref);

// Mean structural similarity with the standard 11x11 Gaussian window
// (sigma 1.5, K1 = 0.01, K2 = 0.03, L = 1), per channel then averaged.
double ssim(const ImageBuffer& img, const ImageBuffer& ref);

struct CameraErrors {
  std::vector<double> focal_pct;   // mean over both axes of |f_e - f_g|/f_g, percent
  std::vector<double> rotation_deg;  // geodesic angle
  std::vector<double> translation;   // |t_e - t_g|, world units
  double mean_focal_pct = 0.0;
  double mean_rotation_deg = 0.0;
  double mean_translation = 0.0;
};

// Per-camera and mean recovery errors between two rigs of equal size. The
// comparison is in absolute coordinates; recovery runs pin the gauge by
// freezing camera 0, otherwise a global similarity can hide in these numbers.
CameraErrors camera_error(std::span<const CameraParams> gt,
                          std::span<const CameraParams> estimated);

}  // namespace raycal
