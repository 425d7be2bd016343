#pragma once

// 8-bit PNG read/write (grayscale and RGB) backed by libpng.

#include "attnreg/util/image.hpp"

#include <string>

namespace attnreg::util {

// Intensity image in [0,1] <-> 8-bit gray PNG (value = round(v * 255)).
void write_png_gray(const std::string& path, const Image& img);
Image read_png_gray(const std::string& path);

// Binary mask <-> 8-bit gray PNG with the 0/255 convention.
void write_png_mask(const std::string& path, const Mask& mask);
Mask read_png_mask(const std::string& path);

// Interleaved RGB rows (3 * w * h bytes), for overlay rendering.
void write_png_rgb(const std::string& path, int h, int w, const std::vector<std::uint8_t>& rgb);

}  // namespace attnreg::util
