#pragma once

// Composite layers. Construction registers every parameter under a
// hierarchical dotted name in a ParamSet and initializes it from the passed
// RNG, so (config, seed) fully determines the parameter vector and the
// registration order doubles as the serialization order.

#include <cstdint>
#include <random>
#include <vector>

#include "canseg/ops.hpp"

namespace canseg {

template <typename T>
struct ParamSetT {
  struct Entry {
    std::string name;
    TensorPtrT<T> t;
    bool learnable;  // false = buffer (BN running stats)
  };
  std::vector<Entry> entries;

  TensorPtrT<T> add(const std::string& name, Shape s, bool learnable) {
    for (const auto& e : entries) {
      check(e.name != name, "param set: duplicate name " + name);
    }
    auto t = make_tensor<T>(s);
    t->name = name;
    t->requires_grad = learnable;
    entries.push_back({name, t, learnable});
    return t;
  }
  TensorPtrT<T> find(const std::string& name) const {
    for (const auto& e : entries) {
      if (e.name == name) return e.t;
    }
    fail("param set: no parameter named " + name);
  }
  std::size_t learnable_count() const {
    std::size_t s = 0;
    for (const auto& e : entries) {
      if (e.learnable) s += e.t->numel();
    }
    return s;
  }
  std::size_t total_count() const {
    std::size_t s = 0;
    for (const auto& e : entries) s += e.t->numel();
    return s;
  }
  void zero_grads() {
    for (const auto& e : entries) {
      if (e.learnable) e.t->zero_grad();
    }
  }
};

using ParamSet = ParamSetT<float>;

enum class Act { None, Relu, HardSwish };

namespace blocks {

// Kaiming fan-out init: N(0, sqrt(2 / (kh*kw*cout/groups))). Drawn in
// double so float and double models see the same values.
template <typename T>
void kaiming_fill(TensorT<T>& w, int groups, std::mt19937_64& rng);

// Plain conv layer; bias optional, weights Kaiming unless zero_init.
template <typename T>
struct Conv2dLayerT {
  TensorPtrT<T> w;
  TensorPtrT<T> b;  // null when bias=false
  ops::Conv2dOpts opts;

  Conv2dLayerT() = default;
  Conv2dLayerT(ParamSetT<T>& ps, const std::string& prefix,
               std::mt19937_64& rng, int in_c, int out_c, int kernel,
               int stride, int groups, bool bias, bool zero_init = false);
  TensorPtrT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
};

template <typename T>
struct BatchNormT {
  TensorPtrT<T> gamma, beta, rmean, rvar;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNormT() = default;
  BatchNormT(ParamSetT<T>& ps, const std::string& prefix, int c);
  TensorPtrT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
};

// conv (no bias) + BN + activation, the workhorse composite.
template <typename T>
struct ConvBnActT {
  Conv2dLayerT<T> conv;
  BatchNormT<T> bn;
  Act act = Act::Relu;

  ConvBnActT() = default;
  ConvBnActT(ParamSetT<T>& ps, const std::string& prefix, std::mt19937_64& rng,
             int in_c, int out_c, int kernel, int stride, int groups, Act act);
  TensorPtrT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
};

// depthwise k x k + BN + ReLU, then pointwise 1x1 + BN + ReLU.
template <typename T>
struct DsConvT {
  ConvBnActT<T> dw, pw;

  DsConvT() = default;
  DsConvT(ParamSetT<T>& ps, const std::string& prefix, std::mt19937_64& rng,
          int in_c, int out_c, int kernel, int stride);
  TensorPtrT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
};

// squeeze-excitation: GAP -> 1x1 down -> ReLU -> 1x1 up -> hard_sigmoid gate.
template <typename T>
struct SeBlockT {
  Conv2dLayerT<T> fc1, fc2;

  SeBlockT() = default;
  SeBlockT(ParamSetT<T>& ps, const std::string& prefix, std::mt19937_64& rng,
           int c, int reduction = 4);
  TensorPtrT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
};

// Ghost conv (cheap linear operations): primary conv makes ceil(out/s)
// channels, a depthwise conv over (cyclically gathered) primary outputs
// makes the remainder, concatenated to exactly out channels. No bias, no BN.
template <typename T>
struct GhostConvT {
  Conv2dLayerT<T> primary;
  Conv2dLayerT<T> cheap;  // unused when ratio divides evenly to remainder 0
  int out_channels = 0;
  int primary_channels = 0;
  std::vector<int> cheap_idx;

  GhostConvT() = default;
  GhostConvT(ParamSetT<T>& ps, const std::string& prefix, std::mt19937_64& rng,
             int in_c, int out_c, int ratio, int primary_kernel,
             int cheap_kernel);
  TensorPtrT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
};

// MobileNetV3 inverted residual: expand 1x1 -> depthwise -> optional SE ->
// linear 1x1 projection; skip iff stride 1 and in==out.
template <typename T>
struct InvertedResidualT {
  ConvBnActT<T> expand, dw;
  SeBlockT<T> se;
  ConvBnActT<T> project;
  bool use_se = false;
  bool skip = false;

  InvertedResidualT() = default;
  InvertedResidualT(ParamSetT<T>& ps, const std::string& prefix,
                    std::mt19937_64& rng, int in_c, int expand_c, int out_c,
                    int kernel, int stride, bool use_se, Act act);
  TensorPtrT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
};

// Pyramid flatten: adaptive max pool to n x n per scale, stacked along the
// position axis into [N, C, M, 1] with M = sum(n^2).
template <typename T>
TensorPtrT<T> spp_flatten(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                          const std::vector<int>& scales);

int spp_positions(const std::vector<int>& scales);

}  // namespace blocks
}  // namespace canseg
