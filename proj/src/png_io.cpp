#include "attnreg/util/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace attnreg::util {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_gray8(const std::string& path, int h, int w, const std::vector<std::uint8_t>& bytes) {
  if (std::int64_t(bytes.size()) != std::int64_t(h) * w)
    throw std::invalid_argument("write_gray8: byte count mismatch");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + std::size_t(y) * w));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_gray8(const std::string& path, int& h, int& w) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open for reading: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  w = int(png_get_image_width(png, info));
  h = int(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  // Normalize anything to 8-bit gray.
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != png_size_t(w))
    throw std::runtime_error("unexpected png row size: " + path);
  std::vector<std::uint8_t> bytes(std::size_t(h) * w);
  for (int y = 0; y < h; ++y) png_read_row(png, bytes.data() + std::size_t(y) * w, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return bytes;
}

}  // namespace

void write_png_gray(const std::string& path, const Image& img) {
  std::vector<std::uint8_t> bytes(std::size_t(img.h) * img.w);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::min(1.f, std::max(0.f, img.pix[i]));
    bytes[i] = std::uint8_t(std::lround(v * 255.f));
  }
  write_gray8(path, img.h, img.w, bytes);
}

Image read_png_gray(const std::string& path) {
  int h = 0, w = 0;
  const auto bytes = read_gray8(path, h, w);
  Image img(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pix[i] = float(bytes[i]) / 255.f;
  return img;
}

void write_png_mask(const std::string& path, const Mask& mask) {
  std::vector<std::uint8_t> bytes(std::size_t(mask.h) * mask.w);
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.pix[i] ? 255 : 0;
  write_gray8(path, mask.h, mask.w, bytes);
}

Mask read_png_mask(const std::string& path) {
  int h = 0, w = 0;
  const auto bytes = read_gray8(path, h, w);
  Mask mask(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) mask.pix[i] = bytes[i] >= 128 ? 1 : 0;
  return mask;
}

void write_png_rgb(const std::string& path, int h, int w, const std::vector<std::uint8_t>& rgb) {
  if (std::int64_t(rgb.size()) != std::int64_t(h) * w * 3)
    throw std::invalid_argument("write_png_rgb: byte count mismatch");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(rgb.data() + std::size_t(y) * w * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace attnreg::util
