#pragma once

// Procedural shapes-on-noise dataset. Every sample is a pure function of
// (seed, index), so "the dataset" is just a seed and a count — no files.
// Classes 1..K-1 are saturated-color shapes (kind tied to class id),
// class 0 is gray noise background. Later shapes overdraw earlier ones.

#include <random>

#include "canseg/data_io.hpp"
#include "canseg/tensor.hpp"

namespace canseg {

struct SynthSample {
  TensorPtr image;  // [1,3,H,W] in [0,1]
  Labels label;     // [1,H,W]
};

// Reference colors the generator draws with; decode_by_color snaps to the
// same table, which is what makes the labels checkable.
std::vector<std::array<float, 3>> synth_class_colors(int num_classes);

SynthSample synth_sample(std::uint64_t seed, std::uint64_t index, int h, int w,
                         int num_classes);

// Training-time augmentation: horizontal flip p=0.5, scale jitter from
// {0.75, 1.0, 1.5, 1.75, 2.0} with random crop (or re-noised borders when
// shrinking), then per-channel color shift in [-0.1, 0.1].
void augment_sample(SynthSample& s, std::mt19937_64& rng);

// Nearest-reference-color classification of each pixel; used to verify
// that rendered images and labels agree.
Labels decode_by_color(const Tensor& img, int num_classes);

}  // namespace canseg
