#pragma once

// Analytical complexity accounting. profile() walks the model config with
// shapes only — no tensors, no weights — and must enumerate exactly the ops
// a real forward pass records, so its totals can be cross-checked bit for
// bit against the runtime CostRecorder route.
//
// Conventions (shared with costs.hpp): conv/matmul rows count MACs and get
// madd = 2*flops; everything else counts elements with madd = flops. Conv
// bias is folded into the conv term. Activation memory is 4 bytes/element,
// peak taken over the schedule with tensors freed after their last use.

#include <cstdint>

#include "canseg/model.hpp"

namespace canseg {

struct LayerRow {
  std::string name;
  std::string kind;  // same vocabulary as OpCost.kind
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::uint64_t madd = 0;
  Shape out_shape;
  std::uint64_t activation_bytes = 0;
};

struct ComplexityReport {
  std::vector<LayerRow> rows;
  std::uint64_t total_params = 0;
  std::uint64_t total_flops = 0;
  std::uint64_t total_madd = 0;
  std::uint64_t peak_activation_bytes = 0;

  std::uint64_t flops_of(const std::string& kind) const {
    std::uint64_t s = 0;
    for (const auto& r : rows) {
      if (r.kind == kind) s += r.flops;
    }
    return s;
  }
};

// Inference-graph profile of the full model (aux heads are not executed and
// therefore not counted).
ComplexityReport profile(const ModelConfig& cfg, int n, int h, int w);

// Standalone module profiles for targeted comparisons.
ComplexityReport profile_ffm(int spatial_c, int context_c, int mid_c,
                             int out_c, int n, int h, int w);
ComplexityReport profile_ghost_conv(int in_c, int out_c, const GhostConfig& g,
                                    int n, int h, int w);
ComplexityReport profile_plain_conv(int in_c, int out_c, int kernel, int n,
                                    int h, int w);

struct AttentionCost {
  int a = 0;          // h*w query positions
  int m = 0;          // pyramid-pooled key positions
  std::uint64_t dense_madds = 0;    // 2*A*A*embed
  std::uint64_t reduced_madds = 0;  // 2*A*M*embed
  double ratio = 0.0;               // dense/reduced == A/M
};

AttentionCost attention_cost_ratio(int h, int w, int embed,
                                   const SppConfig& spp);

}  // namespace canseg
