#include "attnreg/data/preprocess.hpp"

#include <cmath>
#include <stdexcept>

namespace attnreg::data {

using util::Image;
using util::Mask;

PadRecord plan_preprocess(int h, int w, int target) {
  if (h < 1 || w < 1) throw std::invalid_argument("preprocess: empty input");
  if (target < 1) throw std::invalid_argument("preprocess: bad target");
  const int long_side = std::max(h, w);
  PadRecord rec;
  rec.orig_h = h;
  rec.orig_w = w;
  rec.scale = double(target) / double(long_side);
  // Integer arithmetic so the floor is exact: the long side maps to the
  // target, the short side to floor(short * target / long).
  rec.content_h = (h == long_side) ? target : int(std::int64_t(h) * target / long_side);
  rec.content_w = (w == long_side) ? target : int(std::int64_t(w) * target / long_side);
  rec.pad_top = (target - rec.content_h) / 2;
  rec.pad_left = (target - rec.content_w) / 2;
  rec.out_size = target;
  return rec;
}

namespace {

// Half-pixel source coordinate for destination index d.
inline double src_coord(int d, int in, int out) {
  double s = (d + 0.5) * double(in) / double(out) - 0.5;
  if (s < 0) s = 0;
  if (s > in - 1) s = in - 1;
  return s;
}

}  // namespace

std::pair<Image, PadRecord> preprocess_image(const Image& img, int target) {
  const PadRecord rec = plan_preprocess(img.h, img.w, target);
  Image out(target, target, 0.f);
  for (int y = 0; y < rec.content_h; ++y) {
    const double sy = src_coord(y, img.h, rec.content_h);
    const int y0 = int(sy), y1 = std::min(y0 + 1, img.h - 1);
    const float ty = float(sy - y0);
    for (int x = 0; x < rec.content_w; ++x) {
      const double sx = src_coord(x, img.w, rec.content_w);
      const int x0 = int(sx), x1 = std::min(x0 + 1, img.w - 1);
      const float tx = float(sx - x0);
      const float v = (1 - ty) * ((1 - tx) * img.at(y0, x0) + tx * img.at(y0, x1)) +
                      ty * ((1 - tx) * img.at(y1, x0) + tx * img.at(y1, x1));
      out.at(y + rec.pad_top, x + rec.pad_left) = v;
    }
  }
  return {std::move(out), rec};
}

Mask preprocess_mask(const Mask& mask, const PadRecord& rec) {
  if (mask.h != rec.orig_h || mask.w != rec.orig_w)
    throw std::invalid_argument("preprocess_mask: mask does not match the recorded geometry");
  Mask out(rec.out_size, rec.out_size, 0);
  for (int y = 0; y < rec.content_h; ++y) {
    const int sy = std::min(mask.h - 1, std::max(0, int(std::lround(src_coord(y, mask.h, rec.content_h)))));
    for (int x = 0; x < rec.content_w; ++x) {
      const int sx =
          std::min(mask.w - 1, std::max(0, int(std::lround(src_coord(x, mask.w, rec.content_w)))));
      out.at(y + rec.pad_top, x + rec.pad_left) = mask.at(sy, sx);
    }
  }
  return out;
}

Mask unpad_mask(const Mask& padded, const PadRecord& rec) {
  if (padded.h != rec.out_size || padded.w != rec.out_size)
    throw std::invalid_argument("unpad_mask: mask does not match the recorded geometry");
  Mask out(rec.orig_h, rec.orig_w, 0);
  for (int y = 0; y < rec.orig_h; ++y) {
    const int sy = rec.pad_top + std::min(rec.content_h - 1,
                                          std::max(0, int(std::lround(src_coord(y, rec.content_h, rec.orig_h)))));
    for (int x = 0; x < rec.orig_w; ++x) {
      const int sx = rec.pad_left +
                     std::min(rec.content_w - 1,
                              std::max(0, int(std::lround(src_coord(x, rec.content_w, rec.orig_w)))));
      out.at(y, x) = padded.at(sy, sx);
    }
  }
  return out;
}

}  // namespace attnreg::data
