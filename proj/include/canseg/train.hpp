#pragma once

// Toy-scale training on the procedural dataset. Fully deterministic for a
// given config: the synth stream, augmentations, init and optimizer state
// are all derived from train.seed, and resume restores weights, momentum
// buffers and the iteration counter bit for bit.

#include <functional>

#include "canseg/config.hpp"

namespace canseg {

using LogFn = std::function<void(const std::string&)>;

struct TrainResult {
  int iters_run = 0;
  double final_val_miou = 0.0;
  bool hit_target = false;  // stopped early at train.stop_at_miou
};

// Evaluate on the held-out slice (indices train_count .. +val_count, no
// augmentation), aggregating one confusion matrix over all samples.
double evaluate_val_miou(CanModelT<float>& model, const RunConfig& cfg);

// Run (or resume) training; saves weights + optimizer state to out_path
// unless it is empty. log may be null. stop_iter > 0 halts after that many
// total iterations while keeping the configured schedule, so a stopped run
// plus a resume reproduces an uninterrupted run bit for bit.
TrainResult train_run(const RunConfig& cfg, const std::string& out_path,
                      const std::string& resume_path, const LogFn& log,
                      int stop_iter = 0);

}  // namespace canseg
