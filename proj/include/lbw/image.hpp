#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lbw/common.hpp"

namespace lbw {

// Pixel raster with values in [0, 1], row-major, channel-interleaved.
// 1 channel = gray, 3 channels = rgb.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> pix;

  Image() = default;
  Image(int h, int w, int ch, double fill = 0.0);

  double& at(int r, int c, int ch = 0) {
    return pix[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  double at(int r, int c, int ch = 0) const {
    return pix[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  std::size_t size() const { return pix.size(); }
};

// Binary PGM (P5) / PPM (P6), maxval 255 only. Byte b maps to b/255.
Image read_pnm(std::istream& in);
Image read_pnm(const std::string& path);
// Writes P5 for 1-channel images, P6 for 3-channel. Values are clamped to
// [0, 1] and rounded to the nearest byte.
void write_pnm(const Image& img, std::ostream& out);
void write_pnm(const Image& img, const std::string& path);

}  // namespace lbw
