#pragma once

// On-disk dataset layout: one directory per split, 8-bit grayscale PNGs, and
// a line-delimited manifest per split (id, relative paths, grade, ratio or
// null). Everything is inspectable with stock image tools.

#include "attnreg/data/types.hpp"

#include <filesystem>

namespace attnreg::data {

void save_split(const DatasetSplit& split, const std::filesystem::path& dir);

// Reads the three split directories and re-validates every invariant.
DatasetSplit load_split(const std::filesystem::path& dir);

}  // namespace attnreg::data
