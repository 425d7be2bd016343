#include "attnreg/data/foreground.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>
#include <vector>

namespace attnreg::data {

double otsu_threshold(const util::Image& img) {
  if (img.size() == 0) throw std::invalid_argument("otsu: empty image");
  std::array<std::int64_t, 256> hist{};
  for (float v : img.pix) {
    const int b = std::clamp(int(v * 255.0f), 0, 255);
    ++hist[std::size_t(b)];
  }
  const double n = double(img.size());
  double sum_all = 0;
  for (int b = 0; b < 256; ++b) sum_all += b * double(hist[std::size_t(b)]);

  double best_sigma = -1.0;
  int best_bin = 0;
  double w0 = 0, sum0 = 0;
  for (int b = 0; b < 256; ++b) {
    w0 += double(hist[std::size_t(b)]);
    if (w0 == 0) continue;
    const double w1 = n - w0;
    if (w1 == 0) break;
    sum0 += b * double(hist[std::size_t(b)]);
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double sigma = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (sigma > best_sigma) {
      best_sigma = sigma;
      best_bin = b;
    }
  }
  return (best_bin + 1) / 255.0;
}

util::Mask largest_component(const util::Mask& m) {
  util::Mask out(m.h, m.w, 0);
  std::vector<std::int32_t> label(std::size_t(m.size()), -1);
  std::vector<std::int64_t> area;
  std::vector<std::int64_t> stack;
  for (std::int64_t start = 0; start < m.size(); ++start) {
    if (!m.pix[std::size_t(start)] || label[std::size_t(start)] >= 0) continue;
    const auto id = std::int32_t(area.size());
    area.push_back(0);
    stack.push_back(start);
    label[std::size_t(start)] = id;
    while (!stack.empty()) {
      const auto p = stack.back();
      stack.pop_back();
      ++area[std::size_t(id)];
      const int y = int(p / m.w), x = int(p % m.w);
      const int ny[4] = {y - 1, y + 1, y, y};
      const int nx[4] = {x, x, x - 1, x + 1};
      for (int k = 0; k < 4; ++k) {
        if (ny[k] < 0 || ny[k] >= m.h || nx[k] < 0 || nx[k] >= m.w) continue;
        const std::int64_t q = std::int64_t(ny[k]) * m.w + nx[k];
        if (m.pix[std::size_t(q)] && label[std::size_t(q)] < 0) {
          label[std::size_t(q)] = id;
          stack.push_back(q);
        }
      }
    }
  }
  if (area.empty()) return out;
  const auto best =
      std::int32_t(std::max_element(area.begin(), area.end()) - area.begin());
  for (std::int64_t i = 0; i < m.size(); ++i)
    if (label[std::size_t(i)] == best) out.pix[std::size_t(i)] = 1;
  return out;
}

util::Mask estimate_embryo_mask(const util::Image& img) {
  const double thr = otsu_threshold(img);
  util::Mask fg(img.h, img.w, 0);
  for (std::int64_t i = 0; i < img.size(); ++i)
    fg.pix[std::size_t(i)] = img.pix[std::size_t(i)] >= thr ? 1 : 0;
  return largest_component(fg);
}

}  // namespace attnreg::data
