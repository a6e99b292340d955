#include "canseg/blocks.hpp"

#include <cmath>

namespace canseg::blocks {

template <typename T>
void kaiming_fill(TensorT<T>& w, int groups, std::mt19937_64& rng) {
  const Shape s = w.shape;  // [cout, cin/g, kh, kw]
  const double fan_out =
      static_cast<double>(s.h) * s.w * s.n / static_cast<double>(groups);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_out));
  for (auto& v : w.data) v = static_cast<T>(dist(rng));
}

namespace {

template <typename T>
TensorPtrT<T> apply_act(RunCtxT<T>& ctx, const TensorPtrT<T>& x, Act act) {
  switch (act) {
    case Act::Relu:
      return ops::relu(ctx, x);
    case Act::HardSwish:
      return ops::hard_swish(ctx, x);
    case Act::None:
      return x;
  }
  fail("apply_act: bad enum");
}

}  // namespace

template <typename T>
Conv2dLayerT<T>::Conv2dLayerT(ParamSetT<T>& ps, const std::string& prefix,
                              std::mt19937_64& rng, int in_c, int out_c,
                              int kernel, int stride, int groups, bool bias,
                              bool zero_init) {
  check(kernel % 2 == 1, "conv layer " + prefix + ": kernel " +
                             std::to_string(kernel) + " must be odd");
  check(in_c % groups == 0 && out_c % groups == 0,
        "conv layer " + prefix + ": groups " + std::to_string(groups) +
            " vs channels " + std::to_string(in_c) + "->" +
            std::to_string(out_c));
  w = ps.add(prefix + ".w", {out_c, in_c / groups, kernel, kernel}, true);
  if (!zero_init) kaiming_fill(*w, groups, rng);
  if (bias) b = ps.add(prefix + ".b", {1, out_c, 1, 1}, true);  // zeros
  opts.stride = stride;
  opts.pad = kernel / 2;
  opts.groups = groups;
}

template <typename T>
TensorPtrT<T> Conv2dLayerT<T>::forward(RunCtxT<T>& ctx,
                                       const TensorPtrT<T>& x) const {
  return ops::conv2d(ctx, x, w, b, opts);
}

template <typename T>
BatchNormT<T>::BatchNormT(ParamSetT<T>& ps, const std::string& prefix, int c) {
  gamma = ps.add(prefix + ".gamma", {1, c, 1, 1}, true);
  beta = ps.add(prefix + ".beta", {1, c, 1, 1}, true);
  rmean = ps.add(prefix + ".running_mean", {1, c, 1, 1}, false);
  rvar = ps.add(prefix + ".running_var", {1, c, 1, 1}, false);
  for (auto& v : gamma->data) v = T(1);
  for (auto& v : rvar->data) v = T(1);
}

template <typename T>
TensorPtrT<T> BatchNormT<T>::forward(RunCtxT<T>& ctx,
                                     const TensorPtrT<T>& x) const {
  return ops::batch_norm(ctx, x, gamma, beta, rmean, rvar, momentum, eps);
}

template <typename T>
ConvBnActT<T>::ConvBnActT(ParamSetT<T>& ps, const std::string& prefix,
                          std::mt19937_64& rng, int in_c, int out_c, int kernel,
                          int stride, int groups, Act act_)
    : conv(ps, prefix + ".conv", rng, in_c, out_c, kernel, stride, groups,
           /*bias=*/false),
      bn(ps, prefix + ".bn", out_c),
      act(act_) {}

template <typename T>
TensorPtrT<T> ConvBnActT<T>::forward(RunCtxT<T>& ctx,
                                     const TensorPtrT<T>& x) const {
  return apply_act(ctx, bn.forward(ctx, conv.forward(ctx, x)), act);
}

template <typename T>
DsConvT<T>::DsConvT(ParamSetT<T>& ps, const std::string& prefix,
                    std::mt19937_64& rng, int in_c, int out_c, int kernel,
                    int stride)
    : dw(ps, prefix + ".dw", rng, in_c, in_c, kernel, stride, in_c, Act::Relu),
      pw(ps, prefix + ".pw", rng, in_c, out_c, 1, 1, 1, Act::Relu) {}

template <typename T>
TensorPtrT<T> DsConvT<T>::forward(RunCtxT<T>& ctx,
                                  const TensorPtrT<T>& x) const {
  return pw.forward(ctx, dw.forward(ctx, x));
}

template <typename T>
SeBlockT<T>::SeBlockT(ParamSetT<T>& ps, const std::string& prefix,
                      std::mt19937_64& rng, int c, int reduction) {
  const int mid = (c + reduction - 1) / reduction;  // round up
  fc1 = Conv2dLayerT<T>(ps, prefix + ".fc1", rng, c, mid, 1, 1, 1, true);
  fc2 = Conv2dLayerT<T>(ps, prefix + ".fc2", rng, mid, c, 1, 1, 1, true);
}

template <typename T>
TensorPtrT<T> SeBlockT<T>::forward(RunCtxT<T>& ctx,
                                   const TensorPtrT<T>& x) const {
  auto g = ops::global_avg_pool(ctx, x);
  g = ops::relu(ctx, fc1.forward(ctx, g));
  g = ops::hard_sigmoid(ctx, fc2.forward(ctx, g));
  return ops::channelwise_mul(ctx, x, g);
}

template <typename T>
GhostConvT<T>::GhostConvT(ParamSetT<T>& ps, const std::string& prefix,
                          std::mt19937_64& rng, int in_c, int out_c, int ratio,
                          int primary_kernel, int cheap_kernel) {
  check(ratio >= 1, "ghost_conv " + prefix + ": ratio must be >= 1");
  check(ratio <= out_c, "ghost_conv " + prefix + ": ratio " +
                            std::to_string(ratio) + " exceeds out channels " +
                            std::to_string(out_c));
  out_channels = out_c;
  primary_channels = (out_c + ratio - 1) / ratio;  // ceil(out/s)
  primary = Conv2dLayerT<T>(ps, prefix + ".primary", rng, in_c,
                            primary_channels, primary_kernel, 1, 1,
                            /*bias=*/false);
  const int rem = out_c - primary_channels;
  if (rem > 0) {
    // remainder channels come from per-channel transforms of primary
    // outputs, cycled when the remainder exceeds the primary width
    cheap_idx.resize(rem);
    for (int j = 0; j < rem; ++j) cheap_idx[j] = j % primary_channels;
    cheap = Conv2dLayerT<T>(ps, prefix + ".cheap", rng, rem, rem, cheap_kernel,
                            1, rem, /*bias=*/false);
  }
}

template <typename T>
TensorPtrT<T> GhostConvT<T>::forward(RunCtxT<T>& ctx,
                                     const TensorPtrT<T>& x) const {
  auto p = primary.forward(ctx, x);
  if (cheap_idx.empty()) return p;
  auto sel = ops::channel_select(ctx, p, cheap_idx);
  auto c = cheap.forward(ctx, sel);
  return ops::concat_channels<T>(ctx, {p, c});
}

template <typename T>
InvertedResidualT<T>::InvertedResidualT(ParamSetT<T>& ps,
                                        const std::string& prefix,
                                        std::mt19937_64& rng, int in_c,
                                        int expand_c, int out_c, int kernel,
                                        int stride, bool use_se_, Act act)
    : expand(ps, prefix + ".expand", rng, in_c, expand_c, 1, 1, 1, act),
      dw(ps, prefix + ".dw", rng, expand_c, expand_c, kernel, stride, expand_c,
         act),
      use_se(use_se_),
      skip(stride == 1 && in_c == out_c) {
  check(stride == 1 || stride == 2,
        "inverted_residual " + prefix + ": stride must be 1 or 2");
  check(kernel == 3 || kernel == 5,
        "inverted_residual " + prefix + ": kernel must be 3 or 5");
  if (use_se) se = SeBlockT<T>(ps, prefix + ".se", rng, expand_c);
  project = ConvBnActT<T>(ps, prefix + ".project", rng, expand_c, out_c, 1, 1,
                          1, Act::None);
}

template <typename T>
TensorPtrT<T> InvertedResidualT<T>::forward(RunCtxT<T>& ctx,
                                            const TensorPtrT<T>& x) const {
  auto h = expand.forward(ctx, x);
  h = dw.forward(ctx, h);
  if (use_se) h = se.forward(ctx, h);
  h = project.forward(ctx, h);
  if (skip) h = ops::add(ctx, x, h);
  return h;
}

int spp_positions(const std::vector<int>& scales) {
  int m = 0;
  for (int s : scales) m += s * s;
  return m;
}

template <typename T>
TensorPtrT<T> spp_flatten(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                          const std::vector<int>& scales) {
  check(!scales.empty(), "spp_flatten: empty scale list");
  const Shape s = x->shape;
  std::vector<TensorPtrT<T>> parts;
  parts.reserve(scales.size());
  for (int n : scales) {
    check(n >= 1, "spp_flatten: scale " + std::to_string(n) + " must be >= 1");
    check(n <= s.h && n <= s.w, "spp_flatten: scale " + std::to_string(n) +
                                    " exceeds input extent " +
                                    std::to_string(s.h) + "x" +
                                    std::to_string(s.w));
    auto p = ops::adaptive_max_pool2d(ctx, x, n, n);
    parts.push_back(ops::reshape(ctx, p, {s.n, s.c, n * n, 1}));
  }
  return ops::concat_h(ctx, parts);
}

#define CANSEG_INSTANTIATE_BLOCKS(T)                                        \
  template void kaiming_fill<T>(TensorT<T>&, int, std::mt19937_64&);        \
  template struct Conv2dLayerT<T>;                                          \
  template struct BatchNormT<T>;                                            \
  template struct ConvBnActT<T>;                                            \
  template struct DsConvT<T>;                                               \
  template struct SeBlockT<T>;                                              \
  template struct GhostConvT<T>;                                            \
  template struct InvertedResidualT<T>;                                     \
  template TensorPtrT<T> spp_flatten<T>(RunCtxT<T>&, const TensorPtrT<T>&,  \
                                        const std::vector<int>&);

CANSEG_INSTANTIATE_BLOCKS(float)
CANSEG_INSTANTIATE_BLOCKS(double)

#undef CANSEG_INSTANTIATE_BLOCKS

}  // namespace canseg::blocks
