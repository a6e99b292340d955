#pragma once

// Naive reference implementations used as test oracles. Everything here is
// deliberate brute force -- plain nested loops, double accumulators, no
// im2col, no reordering -- so a bug in the real kernels cannot be mirrored
// here. Keep this file free of includes from src/.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ref {

// Cross-correlation with zero padding, NCHW in, [Cout, Cin/g, Kh, Kw] weight.
inline std::vector<double> conv2d(const std::vector<double>& x, int n, int cin,
                                  int h, int w, const std::vector<double>& wt,
                                  int cout, int kh, int kw,
                                  const std::vector<double>* bias, int stride,
                                  int pad, int groups) {
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  const int cig = cin / groups;
  const int cog = cout / groups;
  std::vector<double> out(std::size_t(n) * cout * oh * ow, 0.0);
  for (int in = 0; in < n; ++in)
    for (int oc = 0; oc < cout; ++oc) {
      const int g = oc / cog;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias ? (*bias)[std::size_t(oc)] : 0.0;
          for (int ic = 0; ic < cig; ++ic)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int sy = oy * stride + ky - pad;
                const int sx = ox * stride + kx - pad;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                const std::size_t xi =
                    ((std::size_t(in) * cin + (g * cig + ic)) * h + sy) * w + sx;
                const std::size_t wi =
                    ((std::size_t(oc) * cig + ic) * kh + ky) * kw + kx;
                acc += x[xi] * wt[wi];
              }
          out[((std::size_t(in) * cout + oc) * oh + oy) * ow + ox] = acc;
        }
    }
  return out;
}

inline std::vector<double> matmul(const std::vector<double>& a,
                                  const std::vector<double>& b, int p, int q,
                                  int r) {
  std::vector<double> c(std::size_t(p) * r, 0.0);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < r; ++j) {
      double acc = 0.0;
      for (int k = 0; k < q; ++k)
        acc += a[std::size_t(i) * q + k] * b[std::size_t(k) * r + j];
      c[std::size_t(i) * r + j] = acc;
    }
  return c;
}

// Bin o covers [floor(o*in/out), ceil((o+1)*in/out)).
inline std::vector<double> adaptive_max_pool(const std::vector<double>& x,
                                             int n, int c, int h, int w,
                                             int oh, int ow) {
  std::vector<double> out(std::size_t(n) * c * oh * ow);
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const int y0 = (oy * h) / oh;
          const int y1 = ((oy + 1) * h + oh - 1) / oh;
          const int x0 = (ox * w) / ow;
          const int x1 = ((ox + 1) * w + ow - 1) / ow;
          double best = -1e300;
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx)
              best = std::max(
                  best, x[((std::size_t(in) * c + ic) * h + y) * w + xx]);
          out[((std::size_t(in) * c + ic) * oh + oy) * ow + ox] = best;
        }
  return out;
}

inline std::vector<double> bilinear_resize(const std::vector<double>& x, int n,
                                           int c, int h, int w, int oh, int ow,
                                           bool align_corners) {
  std::vector<double> out(std::size_t(n) * c * oh * ow);
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double sy, sx;
          if (align_corners) {
            sy = oh > 1 ? double(oy) * (h - 1) / (oh - 1) : 0.0;
            sx = ow > 1 ? double(ox) * (w - 1) / (ow - 1) : 0.0;
          } else {
            sy = (oy + 0.5) * h / oh - 0.5;
            sx = (ox + 0.5) * w / ow - 0.5;
          }
          sy = std::clamp(sy, 0.0, double(h - 1));
          sx = std::clamp(sx, 0.0, double(w - 1));
          const int y0 = int(std::floor(sy));
          const int x0 = int(std::floor(sx));
          const int y1 = std::min(y0 + 1, h - 1);
          const int x1 = std::min(x0 + 1, w - 1);
          const double fy = sy - y0, fx = sx - x0;
          auto px = [&](int y, int xx) {
            return x[((std::size_t(in) * c + ic) * h + y) * w + xx];
          };
          const double top = px(y0, x0) * (1 - fx) + px(y0, x1) * fx;
          const double bot = px(y1, x0) * (1 - fx) + px(y1, x1) * fx;
          out[((std::size_t(in) * c + ic) * oh + oy) * ow + ox] =
              top * (1 - fy) + bot * fy;
        }
  return out;
}

inline std::vector<double> softmax_row(const std::vector<double>& x) {
  double mx = -1e300;
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> e(x.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i] - mx);
    denom += e[i];
  }
  for (double& v : e) v /= denom;
  return e;
}

// Mean softmax cross-entropy over every pixel whose label != ignore.
inline double mean_ce(const std::vector<double>& logits, int n, int k, int h,
                      int w, const std::vector<std::int32_t>& labels,
                      int ignore) {
  double total = 0.0;
  std::int64_t count = 0;
  for (int in = 0; in < n; ++in)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const std::int32_t lab = labels[(std::size_t(in) * h + y) * w + xx];
        if (lab == ignore) continue;
        std::vector<double> row(static_cast<std::size_t>(k));
        for (int c = 0; c < k; ++c)
          row[std::size_t(c)] =
              logits[((std::size_t(in) * k + c) * h + y) * w + xx];
        const auto p = softmax_row(row);
        total += -std::log(std::max(p[std::size_t(lab)], 1e-300));
        ++count;
      }
  return count ? total / double(count) : 0.0;
}

template <typename T, typename Rng>
void fill_uniform(std::vector<T>& v, Rng& rng, double lo = -1.0,
                  double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& x : v) x = T(d(rng));
}

template <typename A, typename B>
double max_abs_diff(const std::vector<A>& a, const std::vector<B>& b) {
  double worst = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i)
    worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  if (a.size() != b.size()) worst = 1e300;
  return worst;
}

}  // namespace ref
