#pragma once

// Byte-level artifact IO: the "CANW" weight container, binary PPM/PGM, and
// label-to-color rendering. Formats are deliberately tiny and fully
// specified so tests can pin exact bytes.

#include <array>
#include <cstdint>

#include "canseg/blocks.hpp"

namespace canseg {

std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len,
                         std::uint32_t seed = 0);

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

// Container layout: "CANW" | version u16 | count u32 | per tensor
// (name_len u16, name bytes, dtype u8 = 0 (F32), rank u8 = 4, dims 4 x u32,
// payload LE floats) | crc32 u32 over everything before it.
inline constexpr std::uint16_t kContainerVersion = 1;

std::vector<std::uint8_t> serialize_container(
    const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> parse_container(const std::vector<std::uint8_t>& bytes);

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

// Model-facing helpers: full entry list (params + BN buffers) in
// registration order; strict load that rejects unknown/missing/misshapen
// names, reporting the first offender.
std::vector<NamedTensor> collect_params(const ParamSetT<float>& ps);
void load_params(ParamSetT<float>& ps, const std::vector<NamedTensor>& ts);

struct ImageU8 {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> rgb;  // h*w*3, row-major

  std::uint8_t* px(int y, int x) { return rgb.data() + (std::size_t(y) * w + x) * 3; }
  const std::uint8_t* px(int y, int x) const {
    return rgb.data() + (std::size_t(y) * w + x) * 3;
  }
};

ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);
void write_label_pgm(const std::string& path, const Labels& labels);
Labels read_label_pgm(const std::string& path);

using Rgb = std::array<std::uint8_t, 3>;

// 19 classes: fixed Cityscapes-style palette; other K: generated from
// evenly spaced hues (class 0 stays dark).
std::vector<Rgb> make_palette(int num_classes);
void write_color_map(const std::string& path, const Labels& labels,
                     const std::vector<Rgb>& palette);

// [1,3,H,W] float in [0,1] <-> 8-bit RGB
TensorPtr image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image(const Tensor& t);

}  // namespace canseg
