#pragma once

#include <string>
#include <vector>

#include "raycal/errors.hpp"

namespace raycal {

// RGB image with doubles in [0,1], row-major, channel-interleaved.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  static ImageBuffer create(int w, int h, double fill = 0.0) {
    ImageBuffer img;
    img.width = w;
    img.height = h;
    img.data.assign(static_cast<std::size_t>(w) * h * 3, fill);
    return img;
  }

  double& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool same_size(const ImageBuffer& other) const {
    return width == other.width && height == other.height;
  }
};

// PPM (P6, maxval 255): 8-bit quantized, for viewing.
void write_ppm(const std::string& path, const ImageBuffer& img);
ImageBuffer read_ppm(const std::string& path);

// PFM ("PF", little-endian, scale -1): float-exact storage, bottom row first.
void write_pfm(const std::string& path, const ImageBuffer& img);
ImageBuffer read_pfm(const std::string& path);

// Grayscale PFM ("Pf") of the per-pixel mean absolute difference.
void write_error_map(const std::string& path, const ImageBuffer& img,
                     const ImageBuffer& ref);

}  // namespace raycal
