#pragma once

// Finite-difference gradient checking, double precision only. Each case
// builds a tiny block, runs one taped backward for analytic gradients, then
// central differences over sampled parameter entries. The builder must be a
// pure function of the ParamSet contents so repeated calls see only the
// perturbation.

#include <functional>
#include <memory>

#include "canseg/loss.hpp"

namespace canseg {

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0.0;
  bool ok() const { return max_rel_err < 1e-4; }
};

using LossBuilderD = std::function<TensorPtrT<double>(RunCtxT<double>&)>;

// Worst relative error |a-n| / max(|a|+|n|, 1e-6) over sampled entries of
// every learnable tensor. corrupt_delta != 0 deliberately skews the first
// analytic gradient (negative-control hook for the CLI).
double gradcheck_max_rel_err(ParamSetT<double>& ps, const LossBuilderD& build,
                             int samples_per_tensor, double step,
                             std::mt19937_64& rng, double corrupt_delta = 0.0);

// The standard suite: one case per op/block plus an end-to-end model case
// (1x3x32x32, 4 classes, full joint loss in plain-CE mode). corrupt_name
// skews that case's gradients so the harness visibly fails it.
std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed,
                                           const std::string& corrupt_name = "");

}  // namespace canseg
