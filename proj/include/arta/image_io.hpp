#pragma once

// RGB images in [0,1] and the plain netpbm formats used on disk: 8-bit
// binary PPM (P6) for images and overlays, 16-bit binary PGM (P5, maxval
// 65535) for label maps.

#include <string>
#include <vector>

#include "arta/boundary.hpp"

namespace arta {

struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> rgb;  // row-major, 3 channels interleaved

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, fill) {}

  double& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

// Zero-extends on the bottom/right.
Image pad_image(const Image& img, int height, int width);

void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);
void write_pgm16(const std::string& path, const LabelMap& labels);
LabelMap read_pgm16(const std::string& path);

std::string encode_ppm(const Image& img);
Image decode_ppm(const std::string& bytes);
std::string encode_pgm16(const LabelMap& labels);
LabelMap decode_pgm16(const std::string& bytes);

}  // namespace arta
