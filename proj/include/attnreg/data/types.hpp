#pragma once

// Sample and split containers shared across generation, storage, and training.

#include "attnreg/grading/grading.hpp"
#include "attnreg/util/image.hpp"

#include <optional>
#include <string>
#include <vector>

namespace attnreg::data {

struct ImageSample {
  std::string id;
  util::Image image;
  std::optional<util::Mask> fragment_mask;
  std::optional<util::Mask> embryo_mask;
  std::optional<grading::Grade> grade;
  std::optional<double> ratio;

  bool has_masks() const { return fragment_mask.has_value() && embryo_mask.has_value(); }
};

struct DatasetSplit {
  std::vector<ImageSample> paired;  // image + masks + grade + ratio
  std::vector<ImageSample> weak;    // image + grade only
  std::vector<ImageSample> val;     // fully annotated, held out
};

// Throws std::invalid_argument describing the first violated sample invariant.
void validate_sample(const ImageSample& s);
void validate_split(const DatasetSplit& split);

}  // namespace attnreg::data
