#include "raycal/ray_geometry.hpp"

namespace raycal {

PrdResult<double> prd_loss(std::span<const CameraParams> cameras,
                           std::span<const Correspondence> corrs, double eta) {
  std::vector<CameraModel<double>> models;
  models.reserve(cameras.size());
  for (const CameraParams& cam : cameras) models.push_back(assemble(cam));
  return prd_loss<double>(models, corrs, eta);
}

}  // namespace raycal
