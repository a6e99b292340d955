#pragma once

// Differentiable tensor ops. Every op takes a RunCtx: if ctx.graph is set it
// appends a backward node to the tape, if ctx.costs is set it records its
// cost, and ctx.training switches batch-norm (and nothing else) between
// batch and running statistics.
//
// Shapes follow NCHW; "rows" ops treat [N, 1, R, C] as a batch of N row-major
// R x C matrices.

#include <vector>

#include "canseg/autograd.hpp"
#include "canseg/costs.hpp"
#include "canseg/tensor.hpp"

namespace canseg {

template <typename T>
struct RunCtxT {
  GraphT<T>* graph = nullptr;
  bool training = false;
  CostRecorder* costs = nullptr;
};

using RunCtx = RunCtxT<float>;

namespace ops {

struct Conv2dOpts {
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Window [start, end) that adaptive pooling uses for output index o.
inline std::pair<int, int> adaptive_window(int o, int out, int in) {
  const int start = (o * in) / out;
  const int end = ((o + 1) * in + out - 1) / out;
  return {start, end};
}

// Total input-element reads of an adaptive max pool; shared with the
// analytical profiler so both cost routes use identical arithmetic.
std::uint64_t adaptive_pool_cost(int n, int c, int ih, int iw, int oh, int ow);

// x [N,Cin,H,W], w [Cout,Cin/g,Kh,Kw], bias [1,Cout,1,1] or nullptr.
template <typename T>
TensorPtrT<T> conv2d(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                     const TensorPtrT<T>& w, const TensorPtrT<T>& bias,
                     const Conv2dOpts& o);

// a [N,1,P,K] x b [N,1,K,Q] -> [N,1,P,Q]; trans_b means b is [N,1,Q,K].
template <typename T>
TensorPtrT<T> matmul(RunCtxT<T>& ctx, const TensorPtrT<T>& a,
                     const TensorPtrT<T>& b, bool trans_b);

// Softmax over the last dim of each row of [N,1,R,C].
template <typename T>
TensorPtrT<T> softmax_rows(RunCtxT<T>& ctx, const TensorPtrT<T>& x);

template <typename T>
TensorPtrT<T> adaptive_max_pool2d(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                                  int oh, int ow);

template <typename T>
TensorPtrT<T> bilinear_resize(RunCtxT<T>& ctx, const TensorPtrT<T>& x, int oh,
                              int ow, bool align_corners);

// Training mode normalizes with biased batch stats and updates the running
// buffers in place: r = (1-momentum)*r + momentum*batch. Eval mode uses the
// running buffers. gamma/beta/rmean/rvar are [1,C,1,1].
template <typename T>
TensorPtrT<T> batch_norm(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                         const TensorPtrT<T>& gamma, const TensorPtrT<T>& beta,
                         const TensorPtrT<T>& rmean, const TensorPtrT<T>& rvar,
                         T momentum, T eps);

template <typename T>
TensorPtrT<T> relu(RunCtxT<T>& ctx, const TensorPtrT<T>& x);
template <typename T>
TensorPtrT<T> hard_sigmoid(RunCtxT<T>& ctx, const TensorPtrT<T>& x);
template <typename T>
TensorPtrT<T> hard_swish(RunCtxT<T>& ctx, const TensorPtrT<T>& x);
template <typename T>
TensorPtrT<T> sigmoid(RunCtxT<T>& ctx, const TensorPtrT<T>& x);

template <typename T>
TensorPtrT<T> add(RunCtxT<T>& ctx, const TensorPtrT<T>& a,
                  const TensorPtrT<T>& b);
template <typename T>
TensorPtrT<T> mul(RunCtxT<T>& ctx, const TensorPtrT<T>& a,
                  const TensorPtrT<T>& b);

// x [N,C,H,W] * s [N,C,1,1], broadcast over H,W.
template <typename T>
TensorPtrT<T> channelwise_mul(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                              const TensorPtrT<T>& s);

template <typename T>
TensorPtrT<T> global_avg_pool(RunCtxT<T>& ctx, const TensorPtrT<T>& x);

template <typename T>
TensorPtrT<T> concat_channels(RunCtxT<T>& ctx,
                              const std::vector<TensorPtrT<T>>& xs);

// Concat along H; used to stack pyramid levels of [N,C,m,1] into [N,C,M,1].
template <typename T>
TensorPtrT<T> concat_h(RunCtxT<T>& ctx, const std::vector<TensorPtrT<T>>& xs);

// out channel j = in channel idx[j] (pure gather, differentiable).
template <typename T>
TensorPtrT<T> channel_select(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                             const std::vector<int>& idx);

// Copy-reshape; same numel, arbitrary new shape.
template <typename T>
TensorPtrT<T> reshape(RunCtxT<T>& ctx, const TensorPtrT<T>& x, Shape s);

// [N,C,H,W] -> [N,1,H*W,C]: one row per spatial position.
template <typename T>
TensorPtrT<T> map_to_rows(RunCtxT<T>& ctx, const TensorPtrT<T>& x);

// [N,1,H*W,C] -> [N,C,H,W].
template <typename T>
TensorPtrT<T> rows_to_map(RunCtxT<T>& ctx, const TensorPtrT<T>& x, int c,
                          int h, int w);

// Softmax cross-entropy with online hard example mining, mean over kept
// pixels. Pixels whose true-class probability is below `thresh` are kept;
// if fewer than min_kept pass, the hardest min_kept valid pixels are kept
// anyway. min_kept <= 0 means max(1, valid/16). Returns scalar [1,1,1,1];
// kept_out (optional) receives the kept-pixel count.
template <typename T>
TensorPtrT<T> ohem_softmax_ce(RunCtxT<T>& ctx, const TensorPtrT<T>& logits,
                              const Labels& labels, T thresh, int min_kept,
                              int ignore_index, int* kept_out = nullptr);

// Scalar projection sum_i w[i]*x[i] -> [1,1,1,1]. Gradient-check harness
// uses this to turn any activation into a loss with a non-degenerate
// upstream gradient.
template <typename T>
TensorPtrT<T> weighted_sum(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                           const std::vector<T>& w);

// Plain per-pixel softmax probabilities (inference helper, not taped).
template <typename T>
void softmax_map_inplace(TensorT<T>& logits);

// Reflect-pad right/bottom only (inference alignment helper, not taped).
template <typename T>
TensorPtrT<T> reflect_pad_br(const TensorPtrT<T>& x, int pad_b, int pad_r);

}  // namespace ops
}  // namespace canseg
