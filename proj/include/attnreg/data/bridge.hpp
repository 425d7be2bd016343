#pragma once

// Conversions between the image/mask containers used for data handling and
// the graph tensors consumed by the network. All results are constants
// (no gradient tracking).

#include "attnreg/nn/tensor.hpp"
#include "attnreg/util/image.hpp"

namespace attnreg::data {

template <typename S>
nn::Tensor<S> image_tensor(const util::Image& img) {
  nn::ArrayX<S> v(std::int64_t(img.h) * img.w);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = S(img.pix[std::size_t(i)]);
  return nn::Tensor<S>::from({1, img.h, img.w}, std::move(v));
}

template <typename S>
nn::Tensor<S> mask_tensor(const util::Mask& m) {
  nn::ArrayX<S> v(std::int64_t(m.h) * m.w);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = m.pix[std::size_t(i)] ? S(1) : S(0);
  return nn::Tensor<S>::from({1, m.h, m.w}, std::move(v));
}

}  // namespace attnreg::data
