#pragma once

// Embryo-region estimation for images that carry no pixel annotation: global
// Otsu threshold on intensity, then the largest 4-connected foreground
// component. Used wherever a soft-area denominator or a mask-derived ratio is
// needed and no ground-truth embryo mask exists.

#include "attnreg/util/image.hpp"

namespace attnreg::data {

// Otsu's between-class-variance maximizer over a 256-bin histogram. Returns
// the lower boundary of the first foreground bin, so `pixel >= threshold`
// reproduces the histogram-space split exactly.
double otsu_threshold(const util::Image& img);

// Keep only the largest 4-connected nonzero component (empty in, empty out).
util::Mask largest_component(const util::Mask& m);

// otsu + largest component in one step
util::Mask estimate_embryo_mask(const util::Image& img);

}  // namespace attnreg::data
