#pragma once

// Shared test utilities: finite-difference gradient oracle and random leaves.

#include <doctest.h>

#include "attnreg/nn/conv.hpp"
#include "attnreg/nn/rng.hpp"

#include <functional>
#include <vector>

namespace testutil {

using attnreg::nn::ArrayX;
using attnreg::nn::GradStore;
using attnreg::nn::Shape;
using attnreg::nn::Tensor;

// Compares analytic gradients of a scalar-valued graph against central
// differences, element by element, for every listed leaf. `fn` must rebuild
// the graph from the leaves' current values on each call.
inline void check_grads(std::vector<Tensor<double>> leaves,
                        const std::function<Tensor<double>()>& fn, double rel_tol = 1e-4,
                        double abs_tol = 1e-7) {
  GradStore<double> gs;
  Tensor<double> y = fn();
  REQUIRE(y.size() == 1);
  attnreg::nn::backward(y, gs);
  for (auto& leaf : leaves) {
    const ArrayX<double>* ga = gs.find(leaf.impl());
    REQUIRE(ga != nullptr);
    for (Eigen::Index i = 0; i < leaf.value().size(); ++i) {
      const double x0 = leaf.value()[i];
      const double h = 1e-5 * std::max(1.0, std::abs(x0));
      double fp, fm;
      {
        attnreg::nn::NoGradGuard ng;
        leaf.value()[i] = x0 + h;
        fp = fn().item();
        leaf.value()[i] = x0 - h;
        fm = fn().item();
        leaf.value()[i] = x0;
      }
      const double fd = (fp - fm) / (2 * h);
      const double an = (*ga)[i];
      if (std::abs(fd) < abs_tol && std::abs(an) < abs_tol) continue;
      const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0});
      INFO("leaf elem " << i << " analytic=" << an << " fd=" << fd);
      CHECK(err <= rel_tol);
    }
  }
}

inline Tensor<double> rand_leaf(attnreg::nn::Rng& rng, Shape shape, double lo = -1.0,
                                double hi = 1.0) {
  ArrayX<double> v(attnreg::nn::numel(shape));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
  return Tensor<double>::leaf(std::move(shape), std::move(v));
}

}  // namespace testutil
