#include "canseg/model.hpp"

namespace canseg {

std::vector<InvResSpec> default_toy_backbone() {
  // -> 1/16 with three stride-2 bottlenecks after the stride-2 stem
  return {
      {16, 16, 16, 3, 2, true, Act::Relu},
      {16, 64, 24, 3, 2, false, Act::Relu},
      {24, 72, 24, 3, 1, false, Act::Relu},
      {24, 96, 40, 5, 2, true, Act::HardSwish},
      {40, 120, 40, 5, 1, true, Act::HardSwish},
      {40, 144, 48, 5, 1, true, Act::HardSwish},
      {48, 144, 48, 5, 1, true, Act::HardSwish},
      {48, 288, 96, 5, 1, true, Act::HardSwish},
  };
}

std::vector<InvResSpec> mobilenetv3_small_backbone() {
  // MobileNetV3-Small bottleneck table, with the final stage kept at
  // stride 1 so the backbone ends at 1/16 instead of 1/32
  return {
      {16, 16, 16, 3, 2, true, Act::Relu},
      {16, 72, 24, 3, 2, false, Act::Relu},
      {24, 88, 24, 3, 1, false, Act::Relu},
      {24, 96, 40, 5, 2, true, Act::HardSwish},
      {40, 240, 40, 5, 1, true, Act::HardSwish},
      {40, 240, 40, 5, 1, true, Act::HardSwish},
      {40, 120, 48, 5, 1, true, Act::HardSwish},
      {48, 144, 48, 5, 1, true, Act::HardSwish},
      {48, 288, 96, 5, 1, true, Act::HardSwish},
      {96, 576, 96, 5, 1, true, Act::HardSwish},
      {96, 576, 96, 5, 1, true, Act::HardSwish},
  };
}

Act act_from_string(const std::string& s) {
  if (s == "relu") return Act::Relu;
  if (s == "hard_swish") return Act::HardSwish;
  fail("unknown activation '" + s + "' (want relu or hard_swish)");
}

std::string act_to_string(Act a) {
  switch (a) {
    case Act::Relu:
      return "relu";
    case Act::HardSwish:
      return "hard_swish";
    case Act::None:
      return "none";
  }
  fail("act_to_string: bad enum");
}

void ModelConfig::validate() const {
  check(num_classes >= 2, "model config: num_classes must be >= 2");
  check(input_channels >= 1, "model config: input_channels must be >= 1");
  for (int c : spatial_channels)
    check(c >= 1, "model config: spatial channel widths must be positive");
  check(ga_embed_channels >= 1 && ga_value_channels >= 1,
        "model config: attention widths must be positive");
  check(context_out_channels >= 1 && ffm_mid_channels >= 1 &&
            ffm_out_channels >= 1,
        "model config: fusion widths must be positive");
  check(!spp.scales.empty(), "model config: spp scales empty");
  for (int s : spp.scales)
    check(s >= 1, "model config: spp scale " + std::to_string(s));
  check(ghost.ratio >= 1, "model config: ghost ratio must be >= 1");
  check(ghost.primary_kernel % 2 == 1 && ghost.cheap_kernel % 2 == 1,
        "model config: ghost kernels must be odd");
  check(!backbone.empty(), "model config: backbone empty");
  int prev = backbone_stem_channels;
  int down = 2;  // stem stride
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    const auto& b = backbone[i];
    check(b.in == prev, "model config: backbone block " + std::to_string(i) +
                            " in=" + std::to_string(b.in) +
                            " does not chain from " + std::to_string(prev));
    check(b.stride == 1 || b.stride == 2,
          "model config: backbone block " + std::to_string(i) + " stride");
    down *= b.stride;
    prev = b.out;
  }
  check(down == 16, "model config: backbone must end at 1/16 of the input, "
                    "got 1/" +
                        std::to_string(down));
  check(backbone_tail_channels >= 0, "model config: backbone_tail_channels");
}

template <typename T>
SpatialBranchT<T>::SpatialBranchT(ParamSetT<T>& ps, const std::string& prefix,
                                  std::mt19937_64& rng, int in_c,
                                  const std::array<int, 4>& c)
    : l1(ps, prefix + ".l1", rng, in_c, c[0], 7, 2, 1, Act::Relu),
      l2(ps, prefix + ".l2", rng, c[0], c[1], 3, 2),
      l3(ps, prefix + ".l3", rng, c[1], c[2], 3, 2),
      l4(ps, prefix + ".l4", rng, c[2], c[3], 1, 1, 1, Act::Relu) {}

template <typename T>
TensorPtrT<T> SpatialBranchT<T>::forward(RunCtxT<T>& ctx,
                                         const TensorPtrT<T>& x) const {
  return l4.forward(ctx, l3.forward(ctx, l2.forward(ctx, l1.forward(ctx, x))));
}

template <typename T>
ReducedGlobalAttentionT<T>::ReducedGlobalAttentionT(
    ParamSetT<T>& ps, const std::string& prefix, std::mt19937_64& rng, int c,
    int embed, int value, const SppConfig& spp_, const GhostConfig& ghost)
    : q_embed(ps, prefix + ".q", rng, c, embed, ghost.ratio,
              ghost.primary_kernel, ghost.cheap_kernel),
      k_embed(ps, prefix + ".k", rng, c, embed, ghost.ratio,
              ghost.primary_kernel, ghost.cheap_kernel),
      v_embed(ps, prefix + ".v", rng, c, value, ghost.ratio,
              ghost.primary_kernel, ghost.cheap_kernel),
      proj(ps, prefix + ".proj", rng, value, c, 1, 1, 1, /*bias=*/true,
           /*zero_init=*/true),
      spp(spp_) {}

template <typename T>
TensorPtrT<T> ReducedGlobalAttentionT<T>::attend(RunCtxT<T>& ctx,
                                                 const TensorPtrT<T>& q_rows,
                                                 const TensorPtrT<T>& k_rows,
                                                 const TensorPtrT<T>& v_rows) {
  auto affinity =
      ops::softmax_rows(ctx, ops::matmul(ctx, q_rows, k_rows, true));
  return ops::matmul(ctx, affinity, v_rows, false);
}

template <typename T>
TensorPtrT<T> ReducedGlobalAttentionT<T>::forward(RunCtxT<T>& ctx,
                                                  const TensorPtrT<T>& x) const {
  const Shape s = x->shape;
  check(s.h >= 1 && s.w >= 1, "reduced_ga: empty input " + s.str());
  auto pooled = blocks::spp_flatten(ctx, x, spp.scales);  // [N,C,M,1]
  auto q = ops::map_to_rows(ctx, q_embed.forward(ctx, x));       // [N,1,A,e]
  auto k = ops::map_to_rows(ctx, k_embed.forward(ctx, pooled));  // [N,1,M,e]
  auto v = ops::map_to_rows(ctx, v_embed.forward(ctx, pooled));  // [N,1,M,v]
  auto agg = attend(ctx, q, k, v);                               // [N,1,A,v]
  auto vmap = ops::rows_to_map(ctx, agg, v_embed.out_channels, s.h, s.w);
  return ops::add(ctx, x, proj.forward(ctx, vmap));
}

template <typename T>
LocalAttentionT<T>::LocalAttentionT(ParamSetT<T>& ps, const std::string& prefix,
                                    std::mt19937_64& rng, int c)
    : dw1(ps, prefix + ".dw1", rng, c, c, 3, 1, c, Act::Relu),
      dw2(ps, prefix + ".dw2", rng, c, c, 3, 1, c, Act::Relu),
      dw3(ps, prefix + ".dw3", rng, c, c, 3, 1, c, /*bias=*/true) {}

template <typename T>
TensorPtrT<T> LocalAttentionT<T>::forward(RunCtxT<T>& ctx,
                                          const TensorPtrT<T>& x) const {
  auto gate =
      ops::sigmoid(ctx, dw3.forward(ctx, dw2.forward(ctx, dw1.forward(ctx, x))));
  return ops::add(ctx, x, ops::mul(ctx, x, gate));
}

template <typename T>
FfmT<T>::FfmT(ParamSetT<T>& ps, const std::string& prefix, std::mt19937_64& rng,
              int spatial_c, int context_c, int mid_c, int out_c)
    : reduce(ps, prefix + ".reduce", rng, spatial_c + context_c, mid_c, 1, 1, 1,
             Act::Relu),
      fc1(ps, prefix + ".fc1", rng, mid_c, (mid_c + 3) / 4, 1, 1, 1, true),
      fc2(ps, prefix + ".fc2", rng, (mid_c + 3) / 4, mid_c, 1, 1, 1, true),
      expand(ps, prefix + ".expand", rng, mid_c, out_c, 1, 1, 1, Act::Relu) {}

template <typename T>
TensorPtrT<T> FfmT<T>::forward(RunCtxT<T>& ctx, const TensorPtrT<T>& spatial,
                               const TensorPtrT<T>& context) const {
  check(spatial->shape.h == context->shape.h &&
            spatial->shape.w == context->shape.w &&
            spatial->shape.n == context->shape.n,
        "ffm: branch extents differ, " + spatial->shape.str() + " vs " +
            context->shape.str());
  auto f = reduce.forward(ctx, ops::concat_channels<T>(ctx, {spatial, context}));
  auto g = ops::global_avg_pool(ctx, f);
  g = ops::relu(ctx, fc1.forward(ctx, g));
  g = ops::sigmoid(ctx, fc2.forward(ctx, g));
  auto attended = ops::add(ctx, f, ops::channelwise_mul(ctx, f, g));
  return expand.forward(ctx, attended);
}

template <typename T>
CanModelT<T>::CanModelT(const ModelConfig& cfg_, std::uint64_t seed)
    : cfg(cfg_) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  spatial = SpatialBranchT<T>(params, "spatial", rng, cfg.input_channels,
                              cfg.spatial_channels);
  stem = blocks::ConvBnActT<T>(params, "context.stem", rng, cfg.input_channels,
                               cfg.backbone_stem_channels, 3, 2, 1,
                               Act::HardSwish);
  backbone.reserve(cfg.backbone.size());
  for (std::size_t i = 0; i < cfg.backbone.size(); ++i) {
    const auto& b = cfg.backbone[i];
    backbone.emplace_back(params, "context.b" + std::to_string(i + 1), rng,
                          b.in, b.expand, b.out, b.kernel, b.stride, b.use_se,
                          b.act);
  }
  if (cfg.backbone_tail_channels > 0) {
    tail = blocks::ConvBnActT<T>(params, "context.tail", rng,
                                 cfg.backbone.back().out,
                                 cfg.backbone_tail_channels, 1, 1, 1,
                                 Act::HardSwish);
  }
  const int bb_out = cfg.backbone_out_channels();
  ga = ReducedGlobalAttentionT<T>(params, "context.ga", rng, bb_out,
                                  cfg.ga_embed_channels, cfg.ga_value_channels,
                                  cfg.spp, cfg.ghost);
  la = LocalAttentionT<T>(params, "context.la", rng, bb_out);
  bottleneck = blocks::ConvBnActT<T>(params, "context.bottleneck", rng, bb_out,
                                     cfg.context_out_channels, 1, 1, 1,
                                     Act::Relu);
  ffm = FfmT<T>(params, "ffm", rng, cfg.spatial_channels[3],
                cfg.context_out_channels, cfg.ffm_mid_channels,
                cfg.ffm_out_channels);
  cls_ds = blocks::DsConvT<T>(params, "classifier.ds", rng,
                              cfg.ffm_out_channels, cfg.ffm_out_channels, 3, 1);
  cls_pw = blocks::Conv2dLayerT<T>(params, "classifier.pw", rng,
                                   cfg.ffm_out_channels, cfg.num_classes, 1, 1,
                                   1, /*bias=*/true);
  // zero-init keeps the early aux CE off the saturated tail; Kaiming here
  // starts the heads at +-20 logits and SGD with momentum runs away
  aux_ga_head = blocks::Conv2dLayerT<T>(params, "aux.ga", rng, bb_out,
                                        cfg.num_classes, 1, 1, 1, true,
                                        /*zero_init=*/true);
  aux_la_head = blocks::Conv2dLayerT<T>(params, "aux.la", rng, bb_out,
                                        cfg.num_classes, 1, 1, 1, true,
                                        /*zero_init=*/true);
}

template <typename T>
TensorPtrT<T> CanModelT<T>::spatial_forward(RunCtxT<T>& ctx,
                                            const TensorPtrT<T>& x) const {
  check(x->shape.h % 8 == 0 && x->shape.w % 8 == 0,
        "spatial branch: input extents " + x->shape.str() +
            " not divisible by 8");
  return spatial.forward(ctx, x);
}

template <typename T>
void CanModelT<T>::context_forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                                   TensorPtrT<T>& context_feat,
                                   TensorPtrT<T>& ga_feat,
                                   TensorPtrT<T>& la_feat) const {
  check(x->shape.h % 16 == 0 && x->shape.w % 16 == 0,
        "context branch: input extents " + x->shape.str() +
            " not divisible by 16");
  auto h = stem.forward(ctx, x);
  for (const auto& b : backbone) h = b.forward(ctx, h);
  if (cfg.backbone_tail_channels > 0) h = tail.forward(ctx, h);
  ga_feat = ga.forward(ctx, h);
  la_feat = la.forward(ctx, ga_feat);
  auto bottled = bottleneck.forward(ctx, la_feat);
  context_feat = ops::bilinear_resize(ctx, bottled, bottled->shape.h * 2,
                                      bottled->shape.w * 2, false);
}

template <typename T>
ForwardOutputT<T> CanModelT<T>::forward(RunCtxT<T>& ctx,
                                        const TensorPtrT<T>& x) const {
  const Shape s = x->shape;
  check(s.c == cfg.input_channels, "forward: input channels " + s.str() +
                                       " vs config " +
                                       std::to_string(cfg.input_channels));
  auto sp = spatial_forward(ctx, x);
  TensorPtrT<T> context_feat, ga_feat, la_feat;
  context_forward(ctx, x, context_feat, ga_feat, la_feat);
  check(sp->shape.h == context_feat->shape.h &&
            sp->shape.w == context_feat->shape.w,
        "forward: branch outputs disagree, " + sp->shape.str() + " vs " +
            context_feat->shape.str());
  auto fused = ffm.forward(ctx, sp, context_feat);
  auto logits = cls_pw.forward(ctx, cls_ds.forward(ctx, fused));
  ForwardOutputT<T> out;
  out.primary = ops::bilinear_resize(ctx, logits, s.h, s.w, false);
  if (cfg.train_mode) {
    out.aux_ga = aux_ga_head.forward(ctx, ga_feat);
    out.aux_la = aux_la_head.forward(ctx, la_feat);
  }
  return out;
}

template struct SpatialBranchT<float>;
template struct SpatialBranchT<double>;
template struct ReducedGlobalAttentionT<float>;
template struct ReducedGlobalAttentionT<double>;
template struct LocalAttentionT<float>;
template struct LocalAttentionT<double>;
template struct FfmT<float>;
template struct FfmT<double>;
template struct CanModelT<float>;
template struct CanModelT<double>;

}  // namespace canseg
