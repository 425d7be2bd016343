#pragma once

// Plain raster containers: a grayscale intensity image in [0,1] and a binary
// mask. Row-major, y first.

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace attnreg::util {

struct Image {
  int h = 0, w = 0;
  std::vector<float> pix;  // h*w, values in [0,1]

  Image() = default;
  Image(int h_, int w_, float fill = 0.f) : h(h_), w(w_), pix(std::size_t(h_) * w_, fill) {}

  float& at(int y, int x) { return pix[std::size_t(y) * w + x]; }
  float at(int y, int x) const { return pix[std::size_t(y) * w + x]; }
  std::int64_t size() const { return std::int64_t(h) * w; }
};

struct Mask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> pix;  // h*w, values 0/1

  Mask() = default;
  Mask(int h_, int w_, std::uint8_t fill = 0) : h(h_), w(w_), pix(std::size_t(h_) * w_, fill) {}

  std::uint8_t& at(int y, int x) { return pix[std::size_t(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return pix[std::size_t(y) * w + x]; }
  std::int64_t size() const { return std::int64_t(h) * w; }

  std::int64_t count() const {
    std::int64_t n = 0;
    for (auto v : pix) n += v != 0;
    return n;
  }

  bool operator==(const Mask& o) const { return h == o.h && w == o.w && pix == o.pix; }
};

inline bool contains(const Mask& outer, const Mask& inner) {
  if (outer.h != inner.h || outer.w != inner.w) return false;
  for (std::size_t i = 0; i < inner.pix.size(); ++i)
    if (inner.pix[i] && !outer.pix[i]) return false;
  return true;
}

inline std::int64_t intersection_count(const Mask& a, const Mask& b) {
  if (a.h != b.h || a.w != b.w) throw std::invalid_argument("intersection_count: shape mismatch");
  std::int64_t n = 0;
  for (std::size_t i = 0; i < a.pix.size(); ++i) n += (a.pix[i] && b.pix[i]);
  return n;
}

}  // namespace attnreg::util
