#pragma once

// Aspect-preserving resize to the square network input: the long side lands
// exactly on the target, the short side scales by the same factor (floored),
// and the remainder is zero-padded as evenly as possible with the extra pixel
// on the bottom/right. A PadRecord carries the transform so masks follow the
// image exactly and predictions can be mapped back.

#include "attnreg/util/image.hpp"

#include <utility>

namespace attnreg::data {

struct PadRecord {
  int orig_h = 0, orig_w = 0;
  double scale = 1.0;  // target / max(orig_h, orig_w)
  int content_h = 0, content_w = 0;
  int pad_top = 0, pad_left = 0;
  int out_size = 0;

  bool operator==(const PadRecord&) const = default;
};

PadRecord plan_preprocess(int h, int w, int target);

// Bilinear resize of the content, zero fill elsewhere.
std::pair<util::Image, PadRecord> preprocess_image(const util::Image& img, int target = 299);

// Nearest-neighbor resize with the identical geometry (masks stay binary).
util::Mask preprocess_mask(const util::Mask& mask, const PadRecord& rec);

// Map a prediction on the padded grid back to the original resolution
// (nearest-neighbor over the content region).
util::Mask unpad_mask(const util::Mask& padded, const PadRecord& rec);

}  // namespace attnreg::data
