#include "raycal/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace raycal {

namespace {

void check_image(const ImageBuffer& img, const char* who) {
  if (img.width <= 0 || img.height <= 0 ||
      img.data.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
    throw Error(std::string(who) + ": malformed image buffer");
  }
}

// Consumes PNM whitespace and '#' comments.
void skip_pnm_space(std::istream& is) {
  for (;;) {
    const int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      return;
    }
  }
}

long read_pnm_int(std::istream& is, const std::string& path) {
  skip_pnm_space(is);
  long v = 0;
  if (!(is >> v)) throw ParseError(path + ": bad PNM header integer");
  return v;
}

}  // namespace

void write_ppm(const std::string& path, const ImageBuffer& img) {
  check_image(img, "write_ppm");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_ppm: cannot open " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
        row[3 * x + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw Error("write_ppm: write failed for " + path);
}

ImageBuffer read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("read_ppm: cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw ParseError(path + ": not a P6 PPM");
  const long w = read_pnm_int(is, path);
  const long h = read_pnm_int(is, path);
  const long maxval = read_pnm_int(is, path);
  if (w <= 0 || h <= 0) throw ParseError(path + ": bad PPM dimensions");
  if (maxval != 255) throw ParseError(path + ": only maxval 255 supported");
  is.get();  // single whitespace byte after the header
  ImageBuffer img = ImageBuffer::create(static_cast<int>(w), static_cast<int>(h));
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (long y = 0; y < h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
    if (!is) throw ParseError(path + ": truncated PPM pixel data");
    for (long x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(static_cast<int>(x), static_cast<int>(y), c) = row[3 * x + c] / 255.0;
      }
    }
  }
  return img;
}

void write_pfm(const std::string& path, const ImageBuffer& img) {
  check_image(img, "write_pfm");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_pfm: cannot open " + path);
  os << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(img.width) * 3);
  // PFM scanlines run bottom to top.
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        row[3 * x + c] = static_cast<float>(img.at(x, y, c));
      }
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw Error("write_pfm: write failed for " + path);
}

ImageBuffer read_pfm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("read_pfm: cannot open " + path);
  std::string magic;
  is >> magic;
  const bool gray = magic == "Pf";
  if (magic != "PF" && magic != "Pf") throw ParseError(path + ": not a PFM");
  long w = 0, h = 0;
  double scale = 0.0;
  if (!(is >> w >> h >> scale)) throw ParseError(path + ": bad PFM header");
  if (w <= 0 || h <= 0) throw ParseError(path + ": bad PFM dimensions");
  if (scale >= 0.0) throw ParseError(path + ": big-endian PFM not supported");
  is.get();
  const int channels = gray ? 1 : 3;
  ImageBuffer img = ImageBuffer::create(static_cast<int>(w), static_cast<int>(h));
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (long y = h - 1; y >= 0; --y) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!is) throw ParseError(path + ": truncated PFM pixel data");
    for (long x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = row[channels * x + (gray ? 0 : c)];
        if (!std::isfinite(v)) throw ParseError(path + ": non-finite PFM value");
        img.at(static_cast<int>(x), static_cast<int>(y), c) =
            std::clamp(static_cast<double>(v), 0.0, 1.0);
      }
    }
  }
  return img;
}

void write_error_map(const std::string& path, const ImageBuffer& img,
                     const ImageBuffer& ref) {
  check_image(img, "write_error_map");
  if (!img.same_size(ref)) {
    throw DimensionMismatch("write_error_map: image sizes differ");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_error_map: cannot open " + path);
  os << "Pf\n" << img.width << " " << img.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(img.width));
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) acc += std::abs(img.at(x, y, c) - ref.at(x, y, c));
      row[x] = static_cast<float>(acc / 3.0);
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw Error("write_error_map: write failed for " + path);
}

}  // namespace raycal
