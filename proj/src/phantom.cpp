#include "attnreg/data/phantom.hpp"

#include <bit>
#include <cmath>
#include <cstdio>

namespace attnreg::data {

using nn::Rng;
using util::Mask;

void PhantomConfig::validate() const {
  if (image_size < 64) throw std::invalid_argument("PhantomConfig: image_size must be >= 64");
  if (!(embryo_radius_lo > 0) || embryo_radius_lo > embryo_radius_hi || embryo_radius_hi > 0.5)
    throw std::invalid_argument("PhantomConfig: bad embryo_radius range");
  if (fragment_count_lo < 0 || fragment_count_lo > fragment_count_hi)
    throw std::invalid_argument("PhantomConfig: bad fragment_count range");
  if (!(fragment_radius_lo > 0) || fragment_radius_lo > fragment_radius_hi ||
      fragment_radius_hi > 1.0)
    throw std::invalid_argument("PhantomConfig: bad fragment_radius range");
  if (noise_std < 0) throw std::invalid_argument("PhantomConfig: noise_std must be >= 0");
  if (texture_granularity < 1)
    throw std::invalid_argument("PhantomConfig: texture_granularity must be >= 1");
}

namespace {

// Smooth value-noise field: random grid values, bilinearly interpolated.
struct Texture {
  int cells_y, cells_x, granularity;
  std::vector<double> grid;

  Texture(Rng& rng, int n, int granularity_) : granularity(granularity_) {
    cells_y = n / granularity + 2;
    cells_x = n / granularity + 2;
    grid.resize(std::size_t(cells_y) * cells_x);
    for (auto& v : grid) v = rng.uniform();
  }

  double operator()(int y, int x) const {
    const double fy = double(y) / granularity, fx = double(x) / granularity;
    const int y0 = int(fy), x0 = int(fx);
    const double ty = fy - y0, tx = fx - x0;
    auto g = [&](int yy, int xx) { return grid[std::size_t(yy) * cells_x + xx]; };
    return (1 - ty) * ((1 - tx) * g(y0, x0) + tx * g(y0, x0 + 1)) +
           ty * ((1 - tx) * g(y0 + 1, x0) + tx * g(y0 + 1, x0 + 1));
  }
};

}  // namespace

ImageSample generate_phantom(const PhantomConfig& config, double target_ratio) {
  config.validate();
  if (!(target_ratio >= 0.0 && target_ratio <= 1.0))
    throw std::invalid_argument("generate_phantom: target_ratio outside [0,1]");
  const int n = config.image_size;
  Rng rng(nn::mix_seed(config.seed, std::bit_cast<std::uint64_t>(target_ratio)));

  // Embryo: a wobbly disc near the image center.
  const double re = n * rng.uniform(config.embryo_radius_lo, config.embryo_radius_hi);
  const double cy = n / 2.0 + n * rng.uniform(-0.04, 0.04);
  const double cx = n / 2.0 + n * rng.uniform(-0.04, 0.04);
  const double a1 = rng.uniform(0.02, 0.09), p1 = rng.uniform(0.0, 2 * M_PI);
  const double a2 = rng.uniform(0.01, 0.05), p2 = rng.uniform(0.0, 2 * M_PI);

  Mask embryo(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      const double r = std::hypot(dy, dx);
      const double th = std::atan2(dy, dx);
      const double edge = re * (1.0 + a1 * std::sin(3 * th + p1) + a2 * std::sin(5 * th + p2));
      if (r <= edge) embryo.at(y, x) = 1;
    }
  const std::int64_t embryo_n = embryo.count();
  if (embryo_n <= 0) throw PhantomError("generate_phantom: empty embryo disc", 0.0);
  const std::int64_t want = std::llround(target_ratio * double(embryo_n));
  const std::int64_t margin = std::max<std::int64_t>(1, std::llround(0.015 * double(embryo_n)));

  Mask frag(n, n);
  std::int64_t cur = 0;

  auto stamp = [&](double fy, double fx, double r) {
    std::int64_t added = 0;
    const int y0 = std::max(0, int(fy - r) - 1), y1 = std::min(n - 1, int(fy + r) + 1);
    const int x0 = std::max(0, int(fx - r) - 1), x1 = std::min(n - 1, int(fx + r) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dy = y + 0.5 - fy, dx = x + 0.5 - fx;
        if (dy * dy + dx * dx <= r * r && embryo.at(y, x) && !frag.at(y, x)) {
          frag.at(y, x) = 1;
          ++added;
        }
      }
    return added;
  };
  auto unstamp = [&](double fy, double fx, double r) {
    std::int64_t removed = 0;
    const int y0 = std::max(0, int(fy - r) - 1), y1 = std::min(n - 1, int(fy + r) + 1);
    const int x0 = std::max(0, int(fx - r) - 1), x1 = std::min(n - 1, int(fx + r) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dy = y + 0.5 - fy, dx = x + 0.5 - fx;
        if (dy * dy + dx * dx <= r * r && frag.at(y, x)) {
          frag.at(y, x) = 0;
          ++removed;
        }
      }
    return removed;
  };
  auto random_point_in = [&](const Mask& m, double& fy, double& fx) {
    for (int t = 0; t < 64; ++t) {
      fy = rng.uniform(0.0, n);
      fx = rng.uniform(0.0, n);
      if (m.at(std::min(n - 1, int(fy)), std::min(n - 1, int(fx)))) return true;
    }
    return false;
  };

  if (want > 0) {
    // Seed with a plausible number of blobs sized to split the target area.
    const int blobs =
        int(rng.uniform_int(config.fragment_count_lo, std::max(config.fragment_count_lo,
                                                               config.fragment_count_hi)));
    const double r_lo = std::max(1.0, config.fragment_radius_lo * re);
    const double r_hi = std::max(r_lo, config.fragment_radius_hi * re);
    const double r_split = std::sqrt(double(want) / (M_PI * std::max(1, blobs)));
    for (int bi = 0; bi < blobs && cur < want; ++bi) {
      double fy, fx;
      if (!random_point_in(embryo, fy, fx)) break;
      const double r = std::clamp(r_split * rng.uniform(0.75, 1.25), r_lo, r_hi);
      cur += stamp(fy, fx, r);
    }
    // Corrective passes: grow or shrink with blobs sized to the residual.
    for (int attempt = 0; attempt < 512; ++attempt) {
      const std::int64_t diff = want - cur;
      if (std::llabs(diff) <= margin) break;
      if (diff > 0) {
        double fy, fx;
        if (!random_point_in(embryo, fy, fx)) break;
        const double r = std::max(1.0, std::sqrt(double(diff) / M_PI) * rng.uniform(0.6, 1.0));
        cur += stamp(fy, fx, std::min(r, r_hi));
      } else {
        double fy, fx;
        if (!random_point_in(frag, fy, fx)) break;
        const double r = std::max(1.0, std::sqrt(double(-diff) / M_PI) * rng.uniform(0.6, 1.0));
        cur -= unstamp(fy, fx, r);
      }
    }
  }
  // Exact pixel-level trim if blob placement stalled outside the margin.
  if (std::llabs(want - cur) > margin) {
    if (cur < want) {
      for (std::int64_t i = 0; i < embryo.size() && cur < want; ++i)
        if (embryo.pix[std::size_t(i)] && !frag.pix[std::size_t(i)]) {
          frag.pix[std::size_t(i)] = 1;
          ++cur;
        }
    } else {
      for (std::int64_t i = 0; i < frag.size() && cur > want; ++i)
        if (frag.pix[std::size_t(i)]) {
          frag.pix[std::size_t(i)] = 0;
          --cur;
        }
    }
  }

  const double ratio = double(cur) / double(embryo_n);
  if (std::abs(ratio - target_ratio) > 0.02)
    throw PhantomError("generate_phantom: could not reach target ratio", ratio);

  // Render: dark background, mid-bright textured embryo, bright fragments,
  // then Gaussian noise.
  Texture tex(rng, n, config.texture_granularity);
  util::Image img(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double v;
      if (frag.at(y, x)) {
        v = 0.88 + 0.04 * (tex(y, x) - 0.5);
      } else if (embryo.at(y, x)) {
        v = 0.52 + 0.16 * (tex(y, x) - 0.5);
      } else {
        v = 0.06 + 0.02 * (tex(y, x) - 0.5);
      }
      v += rng.normal(0.0, config.noise_std);
      img.at(y, x) = float(std::clamp(v, 0.0, 1.0));
    }

  ImageSample s;
  s.image = std::move(img);
  s.fragment_mask = std::move(frag);
  s.embryo_mask = std::move(embryo);
  s.ratio = ratio;
  s.grade = grading::ratio_to_grade(ratio);
  return s;
}

RatioSampler stratified_ratio_sampler() {
  return [](std::size_t index, Rng& rng) {
    const auto iv = grading::grade_to_interval(grading::kAllGrades[index % 4]);
    const double w = iv.y_max - iv.y_min;
    // The top stratum mixes in fully intact embryos (no fragments at all) as
    // a distinct mode: they are a commonplace case of the best grade, and a
    // continuous draw would hit an exactly empty mask with probability zero.
    if (iv.y_min == 0.0)
      return rng.uniform() < 0.25 ? 0.0 : rng.uniform(0.0, 0.8 * w);
    // Interior strata stay clear of both edges so the achieved ratio keeps
    // the intended grade despite the generator's placement tolerance.
    return rng.uniform(iv.y_min + 0.2 * w, iv.y_min + 0.8 * w);
  };
}

RatioSampler uniform_ratio_sampler() {
  return [](std::size_t, Rng& rng) { return rng.uniform(); };
}

DatasetSplit build_split(int n_paired, int n_weak, int n_val, const PhantomConfig& config,
                         const RatioSampler& sampler) {
  config.validate();
  if (n_paired < 0 || n_weak < 0 || n_val < 0)
    throw std::invalid_argument("build_split: negative count");
  Rng ratio_rng(nn::mix_seed(config.seed, 0x5a1d5a1dULL));
  std::size_t index = 0;

  auto make = [&](const char* prefix, int i, bool strip) {
    const double target = sampler(index, ratio_rng);
    PhantomConfig sub = config;
    sub.seed = nn::mix_seed(config.seed, 1 + index);
    ImageSample s = generate_phantom(sub, target);
    char id[32];
    std::snprintf(id, sizeof(id), "%s_%04d", prefix, i);
    s.id = id;
    if (strip) {
      s.fragment_mask.reset();
      s.embryo_mask.reset();
      s.ratio.reset();
    }
    ++index;
    return s;
  };

  DatasetSplit split;
  split.paired.reserve(std::size_t(n_paired));
  split.weak.reserve(std::size_t(n_weak));
  split.val.reserve(std::size_t(n_val));
  for (int i = 0; i < n_paired; ++i) split.paired.push_back(make("paired", i, false));
  for (int i = 0; i < n_weak; ++i) split.weak.push_back(make("weak", i, true));
  for (int i = 0; i < n_val; ++i) split.val.push_back(make("val", i, false));
  return split;
}

}  // namespace attnreg::data
