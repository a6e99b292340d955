#pragma once

// The dual-branch segmentation network: a shallow high-resolution spatial
// branch, a MobileNetV3-style context branch with reduced global attention
// and a local attention gate, feature fusion, and a light classifier plus
// two auxiliary heads used only during training.

#include <array>
#include <optional>

#include "canseg/blocks.hpp"

namespace canseg {

struct SppConfig {
  std::vector<int> scales{1, 3, 6, 8};  // M = 1+9+36+64 = 110
  int positions() const { return blocks::spp_positions(scales); }
};

struct GhostConfig {
  int ratio = 2;
  int primary_kernel = 1;
  int cheap_kernel = 3;
};

struct InvResSpec {
  int in = 0;
  int expand = 0;
  int out = 0;
  int kernel = 3;
  int stride = 1;
  bool use_se = false;
  Act act = Act::Relu;
};

// Stem + bottleneck schedule ending at 1/16 of the input, 96 channels.
std::vector<InvResSpec> default_toy_backbone();
// Full MobileNetV3-Small schedule (stride-1 final stage), for paper-scale.
std::vector<InvResSpec> mobilenetv3_small_backbone();

struct ModelConfig {
  int num_classes = 19;
  int input_channels = 3;
  std::array<int, 4> spatial_channels{32, 48, 64, 64};
  int backbone_stem_channels = 16;
  std::vector<InvResSpec> backbone = default_toy_backbone();
  int backbone_tail_channels = 0;  // >0: 1x1 conv-bn-hswish after the blocks
  int ga_embed_channels = 32;
  int ga_value_channels = 96;
  SppConfig spp;
  GhostConfig ghost;
  int context_out_channels = 64;
  int ffm_mid_channels = 64;
  int ffm_out_channels = 128;
  bool train_mode = false;

  int backbone_out_channels() const {
    if (backbone_tail_channels > 0) return backbone_tail_channels;
    return backbone.empty() ? backbone_stem_channels : backbone.back().out;
  }
  void validate() const;
};

template <typename T>
struct ForwardOutputT {
  TensorPtrT<T> primary;          // [N, K, H, W]
  TensorPtrT<T> aux_ga, aux_la;   // [N, K, H/16, W/16], train mode only
};

using ForwardOutput = ForwardOutputT<float>;

// conv7x7 s2 -> ds_conv s2 -> ds_conv s2 -> conv1x1 s1, lands at 1/8.
template <typename T>
struct SpatialBranchT {
  blocks::ConvBnActT<T> l1;
  blocks::DsConvT<T> l2, l3;
  blocks::ConvBnActT<T> l4;

  SpatialBranchT() = default;
  SpatialBranchT(ParamSetT<T>& ps, const std::string& prefix,
                 std::mt19937_64& rng, int in_c, const std::array<int, 4>& c);
  TensorPtrT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
};

// Attention over pyramid-pooled positions: Query from the full grid, Key and
// Value from the M pooled positions, so the affinity is A x M instead of
// A x A. Residual with a zero-initialized output projection.
template <typename T>
struct ReducedGlobalAttentionT {
  blocks::GhostConvT<T> q_embed, k_embed, v_embed;
  blocks::Conv2dLayerT<T> proj;
  SppConfig spp;

  ReducedGlobalAttentionT() = default;
  ReducedGlobalAttentionT(ParamSetT<T>& ps, const std::string& prefix,
                          std::mt19937_64& rng, int c, int embed, int value,
                          const SppConfig& spp, const GhostConfig& ghost);
  // softmax(q k^T) v on row matrices; exposed for the oracle/permutation tests
  static TensorPtrT<T> attend(RunCtxT<T>& ctx, const TensorPtrT<T>& q_rows,
                              const TensorPtrT<T>& k_rows,
                              const TensorPtrT<T>& v_rows);
  TensorPtrT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
};

// Three depthwise 3x3 layers predicting a sigmoid gate; out = x + x*gate.
template <typename T>
struct LocalAttentionT {
  blocks::ConvBnActT<T> dw1, dw2;
  blocks::Conv2dLayerT<T> dw3;

  LocalAttentionT() = default;
  LocalAttentionT(ParamSetT<T>& ps, const std::string& prefix,
                  std::mt19937_64& rng, int c);
  TensorPtrT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
};

// concat -> bottleneck 1x1 -> channel attention residual -> 1x1 out.
template <typename T>
struct FfmT {
  blocks::ConvBnActT<T> reduce;
  blocks::Conv2dLayerT<T> fc1, fc2;
  blocks::ConvBnActT<T> expand;

  FfmT() = default;
  FfmT(ParamSetT<T>& ps, const std::string& prefix, std::mt19937_64& rng,
       int spatial_c, int context_c, int mid_c, int out_c);
  TensorPtrT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& spatial,
                        const TensorPtrT<T>& context) const;
};

template <typename T>
struct CanModelT {
  ModelConfig cfg;
  ParamSetT<T> params;

  SpatialBranchT<T> spatial;
  blocks::ConvBnActT<T> stem;
  std::vector<blocks::InvertedResidualT<T>> backbone;
  blocks::ConvBnActT<T> tail;  // only used when cfg.backbone_tail_channels > 0
  ReducedGlobalAttentionT<T> ga;
  LocalAttentionT<T> la;
  blocks::ConvBnActT<T> bottleneck;
  FfmT<T> ffm;
  blocks::DsConvT<T> cls_ds;
  blocks::Conv2dLayerT<T> cls_pw;
  blocks::Conv2dLayerT<T> aux_ga_head, aux_la_head;

  CanModelT(const ModelConfig& cfg, std::uint64_t seed);

  TensorPtrT<T> spatial_forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
  // returns (context_feat at 1/8, ga_feat at 1/16, la_feat at 1/16)
  void context_forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                       TensorPtrT<T>& context_feat, TensorPtrT<T>& ga_feat,
                       TensorPtrT<T>& la_feat) const;
  ForwardOutputT<T> forward(RunCtxT<T>& ctx, const TensorPtrT<T>& x) const;
};

using CanModel = CanModelT<float>;

Act act_from_string(const std::string& s);
std::string act_to_string(Act a);

}  // namespace canseg
