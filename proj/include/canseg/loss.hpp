#pragma once

// Joint OHEM loss, poly learning-rate schedule, momentum SGD, and mIoU.

#include "canseg/model.hpp"

namespace canseg {

struct OhemConfig {
  double prob_threshold = 0.7;
  int min_kept = 0;  // <= 0: auto, max(1, valid/16)
  int ignore_index = 255;
};

struct TrainSchedule {
  double base_lr = 0.01;
  double power = 0.9;
  int max_iter = 1000;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

template <typename T>
struct LossReportT {
  TensorPtrT<T> total;  // scalar on the tape; backward target
  T l_p = T(0), l_c1 = T(0), l_c2 = T(0);
  int kept_p = 0, kept_c1 = 0, kept_c2 = 0;
};

using LossReport = LossReportT<float>;

template <typename T>
std::pair<TensorPtrT<T>, int> ohem_ce(RunCtxT<T>& ctx,
                                      const TensorPtrT<T>& logits,
                                      const Labels& labels,
                                      const OhemConfig& cfg);

// Eq-style sum of the principal and two auxiliary terms with unit weights;
// aux labels are nearest-downsampled to the aux logits' resolution.
template <typename T>
LossReportT<T> joint_loss(RunCtxT<T>& ctx, const ForwardOutputT<T>& out,
                          const Labels& labels, const OhemConfig& cfg);

double poly_lr(int iter, const TrainSchedule& sched);

Labels nearest_downsample(const Labels& in, int oh, int ow);

// Per-pixel argmax over the class dim of [N,K,H,W] logits.
template <typename T>
Labels argmax_map(const TensorT<T>& logits);

// Momentum SGD over a ParamSet's learnable entries; velocities live here so
// training can serialize them for exact resume.
template <typename T>
struct SgdT {
  std::vector<std::vector<T>> velocity;  // aligned with ps.entries

  explicit SgdT(const ParamSetT<T>& ps);
  void step(ParamSetT<T>& ps, T lr, T momentum, T weight_decay);
};

using Sgd = SgdT<float>;

// Scales every learnable gradient by max_norm/norm when the global L2 norm
// exceeds max_norm; returns the pre-clip norm.
template <typename T>
double clip_grad_norm(ParamSetT<T>& ps, double max_norm);

struct ConfusionMatrix {
  int k = 0;
  std::vector<std::uint64_t> m;  // m[gt*k + pred]

  explicit ConfusionMatrix(int k_) : k(k_), m(std::size_t(k_) * k_, 0) {}
  void add(const Labels& pred, const Labels& gt, int ignore_index);
  std::uint64_t& at(int gt, int pred) { return m[std::size_t(gt) * k + pred]; }
  std::uint64_t at(int gt, int pred) const { return m[std::size_t(gt) * k + pred]; }
};

struct MiouResult {
  std::vector<double> per_class;  // NaN for absent classes
  std::vector<bool> present;      // class appears in pred or gt
  double mean = 0.0;              // over present classes
};

MiouResult miou_from_confusion(const ConfusionMatrix& cm);
MiouResult miou(const Labels& pred, const Labels& gt, int num_classes,
                int ignore_index);

}  // namespace canseg
