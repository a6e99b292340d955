#include "canseg/synth.hpp"

#include <cmath>

namespace canseg {

namespace {

// splitmix64 finalizer; decorrelates (seed, index) pairs so neighbouring
// indices don't produce sibling streams.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::array<float, 3> hsv(float hue, float sat, float val) {
  float h6 = hue * 6.0f;
  int sector = int(h6) % 6;
  float f = h6 - std::floor(h6);
  float p = val * (1.0f - sat);
  float q = val * (1.0f - sat * f);
  float t = val * (1.0f - sat * (1.0f - f));
  switch (sector) {
    case 0: return {val, t, p};
    case 1: return {q, val, p};
    case 2: return {p, val, t};
    case 3: return {p, q, val};
    case 4: return {t, p, val};
    default: return {val, p, q};
  }
}

float clip01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

struct ShapeSpec {
  int cls = 0;
  int kind = 0;  // 0 rect, 1 disk, 2 triangle
  float cx = 0, cy = 0;
  float rx = 0, ry = 0;
  float bright = 1.0f;

  bool covers(float x, float y) const {
    float dx = x - cx, dy = y - cy;
    switch (kind) {
      case 0:
        return std::abs(dx) <= rx && std::abs(dy) <= ry;
      case 1:
        return (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0f;
      default: {
        // upward triangle inscribed in the (rx, ry) box: apex on top
        if (dy < -ry || dy > ry) return false;
        float frac = (dy + ry) / (2.0f * ry);  // 0 at apex, 1 at base
        return std::abs(dx) <= rx * frac;
      }
    }
  }
};

void fill_noise(Tensor& img, Labels& lab, int y0, int y1, int x0, int x1,
                std::mt19937_64& rng) {
  std::uniform_real_distribution<float> base(-0.12f, 0.12f);
  std::uniform_real_distribution<float> chan(-0.03f, 0.03f);
  const Shape& s = img.shape;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      float g = 0.5f + base(rng);
      for (int c = 0; c < 3; ++c)
        img.data[std::size_t(s.at(0, c, y, x))] = clip01(g + chan(rng));
      lab.v[std::size_t(y) * lab.w + x] = 0;
    }
}

// plain (non-taped) bilinear resize of a [1,3,h,w] image, half-pixel centers
void resize_image(const Tensor& in, Tensor& out) {
  const Shape& si = in.shape;
  const Shape& so = out.shape;
  for (int c = 0; c < 3; ++c)
    for (int oy = 0; oy < so.h; ++oy) {
      float fy = (float(oy) + 0.5f) * float(si.h) / float(so.h) - 0.5f;
      fy = std::max(0.0f, fy);
      int y0 = std::min(int(fy), si.h - 1);
      int y1 = std::min(y0 + 1, si.h - 1);
      float wy = fy - float(y0);
      for (int ox = 0; ox < so.w; ++ox) {
        float fx = (float(ox) + 0.5f) * float(si.w) / float(so.w) - 0.5f;
        fx = std::max(0.0f, fx);
        int x0 = std::min(int(fx), si.w - 1);
        int x1 = std::min(x0 + 1, si.w - 1);
        float wx = fx - float(x0);
        auto v = [&](int y, int x) {
          return in.data[std::size_t(si.at(0, c, y, x))];
        };
        float top = v(y0, x0) * (1 - wx) + v(y0, x1) * wx;
        float bot = v(y1, x0) * (1 - wx) + v(y1, x1) * wx;
        out.data[std::size_t(so.at(0, c, oy, ox))] =
            top * (1 - wy) + bot * wy;
      }
    }
}

void resize_labels(const Labels& in, Labels& out) {
  for (int oy = 0; oy < out.h; ++oy) {
    int sy = std::min(int(std::int64_t(oy) * in.h / out.h), in.h - 1);
    for (int ox = 0; ox < out.w; ++ox) {
      int sx = std::min(int(std::int64_t(ox) * in.w / out.w), in.w - 1);
      out.v[std::size_t(oy) * out.w + ox] = in.v[in.idx(0, sy, sx)];
    }
  }
}

}  // namespace

std::vector<std::array<float, 3>> synth_class_colors(int num_classes) {
  check(num_classes >= 2, "synth_class_colors: need at least 2 classes");
  std::vector<std::array<float, 3>> out(static_cast<std::size_t>(num_classes));
  out[0] = {0.5f, 0.5f, 0.5f};
  for (int c = 1; c < num_classes; ++c)
    out[std::size_t(c)] = hsv(float(c - 1) / float(num_classes - 1), 0.9f, 0.9f);
  return out;
}

SynthSample synth_sample(std::uint64_t seed, std::uint64_t index, int h, int w,
                         int num_classes) {
  check(h >= 8 && w >= 8, "synth_sample: image too small");
  std::mt19937_64 rng(mix64(seed ^ mix64(index + 1)));
  auto colors = synth_class_colors(num_classes);

  SynthSample s{make_tensor(Shape{1, 3, h, w}), Labels(1, h, w)};
  fill_noise(*s.image, s.label, 0, h, 0, w, rng);

  std::uniform_int_distribution<int> count_d(1, 4);
  std::uniform_int_distribution<int> cls_d(1, num_classes - 1);
  std::uniform_real_distribution<float> pos_d(0.25f, 0.75f);
  std::uniform_real_distribution<float> rad_d(0.18f, 0.36f);
  std::uniform_real_distribution<float> aspect_d(0.7f, 1.0f);
  std::uniform_real_distribution<float> bright_d(0.85f, 1.0f);

  int count = count_d(rng);
  float ext = float(std::min(h, w));
  for (int i = 0; i < count; ++i) {
    ShapeSpec sp;
    sp.cls = cls_d(rng);
    sp.kind = (sp.cls - 1) % 3;
    sp.cx = pos_d(rng) * float(w);
    sp.cy = pos_d(rng) * float(h);
    sp.rx = rad_d(rng) * ext;
    sp.ry = sp.rx * aspect_d(rng);
    sp.bright = bright_d(rng);
    const auto& col = colors[std::size_t(sp.cls)];
    const Shape& sh = s.image->shape;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!sp.covers(float(x) + 0.5f, float(y) + 0.5f)) continue;
        for (int c = 0; c < 3; ++c)
          s.image->data[std::size_t(sh.at(0, c, y, x))] =
              clip01(col[std::size_t(c)] * sp.bright);
        s.label.v[std::size_t(y) * s.label.w + x] = sp.cls;
      }
  }
  return s;
}

void augment_sample(SynthSample& s, std::mt19937_64& rng) {
  const int h = s.image->shape.h, w = s.image->shape.w;
  const Shape& sh = s.image->shape;

  if (std::uniform_real_distribution<float>(0.0f, 1.0f)(rng) < 0.5f) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w / 2; ++x)
          std::swap(s.image->data[std::size_t(sh.at(0, c, y, x))],
                    s.image->data[std::size_t(sh.at(0, c, y, w - 1 - x))]);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w / 2; ++x)
        std::swap(s.label.v[std::size_t(y) * w + x],
                  s.label.v[std::size_t(y) * w + (w - 1 - x)]);
  }

  static const float kScales[] = {0.75f, 1.0f, 1.5f, 1.75f, 2.0f};
  float scale = kScales[std::uniform_int_distribution<int>(0, 4)(rng)];
  if (scale != 1.0f) {
    int sh2 = std::max(1, int(std::lround(h * scale)));
    int sw2 = std::max(1, int(std::lround(w * scale)));
    auto scaled = make_tensor(Shape{1, 3, sh2, sw2});
    Labels scaled_lab(1, sh2, sw2);
    resize_image(*s.image, *scaled);
    resize_labels(s.label, scaled_lab);
    auto out = make_tensor(Shape{1, 3, h, w});
    Labels out_lab(1, h, w);
    if (scale > 1.0f) {
      int oy = std::uniform_int_distribution<int>(0, sh2 - h)(rng);
      int ox = std::uniform_int_distribution<int>(0, sw2 - w)(rng);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            out->data[std::size_t(out->shape.at(0, c, y, x))] =
                scaled->data[std::size_t(scaled->shape.at(0, c, y + oy, x + ox))];
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          out_lab.v[std::size_t(y) * w + x] =
              scaled_lab.v[scaled_lab.idx(0, y + oy, x + ox)];
    } else {
      // shrink: drop the smaller content onto a fresh noise canvas
      fill_noise(*out, out_lab, 0, h, 0, w, rng);
      int oy = std::uniform_int_distribution<int>(0, h - sh2)(rng);
      int ox = std::uniform_int_distribution<int>(0, w - sw2)(rng);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < sh2; ++y)
          for (int x = 0; x < sw2; ++x)
            out->data[std::size_t(out->shape.at(0, c, y + oy, x + ox))] =
                scaled->data[std::size_t(scaled->shape.at(0, c, y, x))];
      for (int y = 0; y < sh2; ++y)
        for (int x = 0; x < sw2; ++x)
          out_lab.v[std::size_t(y + oy) * w + (x + ox)] =
              scaled_lab.v[scaled_lab.idx(0, y, x)];
    }
    s.image = out;
    s.label = out_lab;
  }

  std::uniform_real_distribution<float> jitter(-0.1f, 0.1f);
  for (int c = 0; c < 3; ++c) {
    float d = jitter(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float& v = s.image->data[std::size_t(sh.at(0, c, y, x))];
        v = clip01(v + d);
      }
  }
}

Labels decode_by_color(const Tensor& img, int num_classes) {
  check(img.shape.n == 1 && img.shape.c == 3,
        "decode_by_color: expected [1,3,H,W], got " + img.shape.str());
  auto colors = synth_class_colors(num_classes);
  Labels out(1, img.shape.h, img.shape.w);
  for (int y = 0; y < img.shape.h; ++y)
    for (int x = 0; x < img.shape.w; ++x) {
      float px[3];
      for (int c = 0; c < 3; ++c)
        px[c] = img.data[std::size_t(img.shape.at(0, c, y, x))];
      int best = 0;
      float best_d = 1e30f;
      for (int k = 0; k < num_classes; ++k) {
        float d = 0;
        for (int c = 0; c < 3; ++c) {
          float diff = px[c] - colors[std::size_t(k)][std::size_t(c)];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      out.v[std::size_t(y) * out.w + x] = best;
    }
  return out;
}

}  // namespace canseg
