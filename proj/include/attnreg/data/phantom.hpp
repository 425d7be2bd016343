#pragma once

// Synthetic embryo phantom generator. Each phantom is a bright, textured,
// wobbly-edged disc carrying smaller high-contrast fragment blobs; the masks
// are exact by construction, so every downstream metric has known ground
// truth.

#include "attnreg/data/types.hpp"
#include "attnreg/nn/rng.hpp"

#include <cstdint>
#include <functional>

namespace attnreg::data {

struct PhantomConfig {
  int image_size = 299;
  double embryo_radius_lo = 0.30;  // fraction of image size
  double embryo_radius_hi = 0.40;
  int fragment_count_lo = 3;
  int fragment_count_hi = 9;
  double fragment_radius_lo = 0.06;  // fraction of embryo radius
  double fragment_radius_hi = 0.22;
  double noise_std = 0.02;
  int texture_granularity = 16;  // pixels per texture cell
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const PhantomConfig&) const = default;
};

struct PhantomError : std::runtime_error {
  double best_ratio;
  PhantomError(const std::string& msg, double best) : std::runtime_error(msg), best_ratio(best) {}
};

// Deterministic in (config.seed, target_ratio). The emitted ratio is the
// exact pixel count quotient and lies within 0.02 of the target.
ImageSample generate_phantom(const PhantomConfig& config, double target_ratio);

// index-aware sampler so a split can stratify across grades
using RatioSampler = std::function<double(std::size_t index, nn::Rng& rng)>;

// Cycles through the four grade intervals by index, sampling uniformly inside
// each; any run of >= 4 consecutive samples touches every grade.
RatioSampler stratified_ratio_sampler();

// Uniform over [0, 1], independent of index.
RatioSampler uniform_ratio_sampler();

// Generates n_paired + n_weak + n_val samples, each from its own sub-seeded
// stream; weak samples keep their grade but have masks and ratio removed.
DatasetSplit build_split(int n_paired, int n_weak, int n_val, const PhantomConfig& config,
                         const RatioSampler& sampler = stratified_ratio_sampler());

}  // namespace attnreg::data
