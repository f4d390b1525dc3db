#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgeseg/tensor.hpp"

namespace edgeseg {

/// Interleaved 8-bit RGB image, row-major.
struct RgbImage {
  int w = 0;
  int h = 0;
  std::vector<std::uint8_t> data;  // 3 * w * h

  std::uint8_t* pixel(int y, int x) {
    return data.data() + 3 * (static_cast<std::size_t>(y) * w + x);
  }
  const std::uint8_t* pixel(int y, int x) const {
    return data.data() + 3 * (static_cast<std::size_t>(y) * w + x);
  }
};

/// Reads an 8-bit image. PNG (truecolor, palette, or grayscale, all expanded
/// to RGB) and binary PPM (P6, maxval 255) are accepted; the format is
/// detected from the file contents.
RgbImage read_image(const std::string& path);

void write_png(const RgbImage& img, const std::string& path);
void write_ppm(const RgbImage& img, const std::string& path);

/// (1, 3, h, w) tensor with values scaled to [0, 1].
Tensor<float> image_to_tensor(const RgbImage& img);
RgbImage tensor_to_image(const Tensor<float>& t);

/// General bilinear resize with half-pixel centers, any target size. Distinct
/// from the integer-factor upsampling kernel; this one handles downscaling for
/// dataset ingestion.
Tensor<float> resize_bilinear(const Tensor<float>& input, int out_h, int out_w);

/// Nearest-neighbor label resize (class indices cannot be interpolated).
LabelMap resize_nearest(const LabelMap& labels, int out_h, int out_w);

}  // namespace edgeseg
