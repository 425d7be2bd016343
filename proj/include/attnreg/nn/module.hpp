#pragma once

// Parameter registry and reusable layer blocks. Every trainable tensor is
// registered under a dotted name and a group tag; groups are the unit of
// freezing, optimizer selection, and state digests.

#include "attnreg/nn/conv.hpp"
#include "attnreg/nn/rng.hpp"

#include <map>
#include <string>
#include <vector>

namespace attnreg::nn {

template <typename S>
struct Param {
  std::string name;
  std::string group;
  Tensor<S> tensor;
};

template <typename S>
class ParamRegistry {
 public:
  Tensor<S>& add(std::string name, std::string group, Tensor<S> t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    t.set_requires_grad(true);
    index_[name] = items_.size();
    items_.push_back({std::move(name), std::move(group), std::move(t)});
    return items_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<S>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return items_[it->second].tensor;
  }

  const std::vector<Param<S>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  std::vector<std::string> groups() const {
    std::vector<std::string> out;
    for (const auto& p : items_)
      if (std::find(out.begin(), out.end(), p.group) == out.end()) out.push_back(p.group);
    return out;
  }

  std::vector<Param<S>*> group_params(const std::string& group) {
    std::vector<Param<S>*> out;
    for (auto& p : items_)
      if (p.group == group) out.push_back(&p);
    return out;
  }

  void set_group_trainable(const std::string& group, bool trainable) {
    bool found = false;
    for (auto& p : items_)
      if (p.group == group) {
        p.tensor.set_requires_grad(trainable);
        found = true;
      }
    if (!found) throw std::out_of_range("no parameter group named " + group);
  }

  std::int64_t total_numel() const {
    std::int64_t n = 0;
    for (const auto& p : items_) n += p.tensor.size();
    return n;
  }

 private:
  std::vector<Param<S>> items_;
  std::map<std::string, std::size_t> index_;
};

// --- initializers ------------------------------------------------------

template <typename S>
ArrayX<S> he_normal(Rng& rng, std::int64_t n, std::int64_t fan_in) {
  ArrayX<S> v(n);
  const double sd = std::sqrt(2.0 / double(fan_in));
  for (std::int64_t i = 0; i < n; ++i) v[i] = S(rng.normal(0.0, sd));
  return v;
}

// --- layer blocks -------------------------------------------------------

template <typename S>
struct Conv2d {
  Tensor<S> weight;
  Tensor<S> bias;  // size 0 when bias-free
  Conv2dSpec spec;

  Conv2d() = default;
  Conv2d(ParamRegistry<S>& reg, const std::string& name, const std::string& group, Rng& rng,
         int cin, int cout, Conv2dSpec sp, bool with_bias) : spec(sp) {
    const std::int64_t fan_in = std::int64_t(cin) * sp.kernel * sp.kernel;
    weight = reg.add(name + ".weight", group,
                     Tensor<S>::from({cout, cin, sp.kernel, sp.kernel},
                                     he_normal<S>(rng, cout * fan_in, fan_in)));
    bias = with_bias ? reg.add(name + ".bias", group, Tensor<S>::zeros({cout}))
                     : Tensor<S>::zeros({0});
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return conv2d(x, weight, bias, spec); }
};

template <typename S>
struct GroupNorm {
  Tensor<S> gamma;
  Tensor<S> beta;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(ParamRegistry<S>& reg, const std::string& name, const std::string& group, int channels,
            int n_groups) : groups(n_groups) {
    gamma = reg.add(name + ".gamma", group, Tensor<S>::full({channels}, S(1)));
    beta = reg.add(name + ".beta", group, Tensor<S>::zeros({channels}));
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return group_norm(x, gamma, beta, groups); }
};

template <typename S>
struct Linear {
  Tensor<S> weight;  // {out, in}
  Tensor<S> bias;    // {out}

  Linear() = default;
  Linear(ParamRegistry<S>& reg, const std::string& name, const std::string& group, Rng& rng,
         int in, int out) {
    weight = reg.add(name + ".weight", group,
                     Tensor<S>::from({out, in}, he_normal<S>(rng, std::int64_t(out) * in, in)));
    bias = reg.add(name + ".bias", group, Tensor<S>::zeros({out}));
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return linear(x, weight, bias); }
};

// Pick a group count that divides the channel count, aiming for 8.
inline int norm_groups_for(int channels) {
  for (int g = std::min(8, channels); g >= 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

}  // namespace attnreg::nn
