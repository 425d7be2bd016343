#include "attnreg/data/types.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace attnreg::data {

void validate_sample(const ImageSample& s) {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("sample '" + s.id + "': " + what);
  };
  if (s.image.h < 1 || s.image.w < 1) fail("empty image");
  for (float v : s.image.pix)
    if (!(v >= 0.f && v <= 1.f)) fail("image intensity outside [0,1]");
  if (s.fragment_mask) {
    if (!s.embryo_mask) fail("fragment mask without embryo mask");
    if (s.fragment_mask->h != s.image.h || s.fragment_mask->w != s.image.w)
      fail("fragment mask shape differs from image");
    if (s.embryo_mask->h != s.image.h || s.embryo_mask->w != s.image.w)
      fail("embryo mask shape differs from image");
    if (!util::contains(*s.embryo_mask, *s.fragment_mask))
      fail("fragment pixel outside the embryo");
    if (!s.ratio) fail("fragment mask without ratio");
    const double counted = grading::mask_to_ratio(*s.fragment_mask, *s.embryo_mask);
    if (std::abs(counted - *s.ratio) > 1e-9) fail("stored ratio disagrees with pixel count");
  } else if (s.embryo_mask) {
    if (s.embryo_mask->h != s.image.h || s.embryo_mask->w != s.image.w)
      fail("embryo mask shape differs from image");
  }
  if (s.grade && s.ratio && grading::ratio_to_grade(*s.ratio) != *s.grade)
    fail("ratio outside the stored grade's interval");
}

void validate_split(const DatasetSplit& split) {
  std::set<std::string> ids;
  auto check_unique = [&](const ImageSample& s) {
    if (s.id.empty()) throw std::invalid_argument("sample with empty id");
    if (!ids.insert(s.id).second)
      throw std::invalid_argument("duplicate sample id: " + s.id);
  };
  for (const auto& s : split.paired) {
    check_unique(s);
    validate_sample(s);
    if (!s.has_masks() || !s.grade || !s.ratio)
      throw std::invalid_argument("paired sample '" + s.id + "' is missing annotations");
  }
  for (const auto& s : split.weak) {
    check_unique(s);
    validate_sample(s);
    if (!s.grade) throw std::invalid_argument("weak sample '" + s.id + "' is missing its grade");
    if (s.fragment_mask)
      throw std::invalid_argument("weak sample '" + s.id + "' carries a fragment mask");
  }
  for (const auto& s : split.val) {
    check_unique(s);
    validate_sample(s);
    if (!s.has_masks() || !s.grade || !s.ratio)
      throw std::invalid_argument("val sample '" + s.id + "' is missing annotations");
  }
}

}  // namespace attnreg::data
