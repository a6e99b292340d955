#include "canseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include "canseg/kern_shim.hpp"
#include "canseg/threading.hpp"

namespace canseg::ops {

namespace {

template <typename T>
void record(RunCtxT<T>& ctx, const char* kind, std::uint64_t flops, bool mac) {
  if (ctx.costs != nullptr) ctx.costs->add(kind, flops, mac);
}

// Column buffer layout: row r = ci*Kh*Kw + ky*Kw + kx, one column per output
// position. `x` points at the first channel of the group slice.
template <typename T>
void im2col(const T* x, int cin, int ih, int iw, int kh, int kw, int stride,
            int pad, int oh, int ow, T* col) {
  const int hw = oh * ow;
  for (int ci = 0; ci < cin; ++ci) {
    const T* plane = x + static_cast<std::size_t>(ci) * ih * iw;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* crow = col + (static_cast<std::size_t>(ci) * kh * kw + ky * kw + kx) * hw;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = crow + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= ih) {
            for (int ox = 0; ox < ow; ++ox) dst[ox] = T(0);
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * iw;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < iw) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Gather-style transpose of im2col: every input element sums its own
// contributions, so there are no write races.
template <typename T>
void col2im_accum(const T* col, int cin, int ih, int iw, int kh, int kw,
                  int stride, int pad, int oh, int ow, T* dx) {
  const int hw = oh * ow;
  for (int ci = 0; ci < cin; ++ci) {
    T* plane = dx + static_cast<std::size_t>(ci) * ih * iw;
    for (int iy = 0; iy < ih; ++iy) {
      for (int ix = 0; ix < iw; ++ix) {
        T acc = T(0);
        for (int ky = 0; ky < kh; ++ky) {
          const int ty = iy + pad - ky;
          if (ty < 0 || ty % stride != 0) continue;
          const int oy = ty / stride;
          if (oy >= oh) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int tx = ix + pad - kx;
            if (tx < 0 || tx % stride != 0) continue;
            const int ox = tx / stride;
            if (ox >= ow) continue;
            acc += col[(static_cast<std::size_t>(ci) * kh * kw + ky * kw + kx) * hw +
                       oy * ow + ox];
          }
        }
        plane[static_cast<std::size_t>(iy) * iw + ix] += acc;
      }
    }
  }
}

}  // namespace

std::uint64_t adaptive_pool_cost(int n, int c, int ih, int iw, int oh, int ow) {
  std::uint64_t per_map = 0;
  for (int oy = 0; oy < oh; ++oy) {
    const auto [y0, y1] = adaptive_window(oy, oh, ih);
    for (int ox = 0; ox < ow; ++ox) {
      const auto [x0, x1] = adaptive_window(ox, ow, iw);
      per_map += static_cast<std::uint64_t>(y1 - y0) * (x1 - x0);
    }
  }
  return static_cast<std::uint64_t>(n) * c * per_map;
}

template <typename T>
TensorPtrT<T> conv2d(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                     const TensorPtrT<T>& w, const TensorPtrT<T>& bias,
                     const Conv2dOpts& o) {
  const Shape xs = x->shape;
  const Shape ws = w->shape;
  check(o.groups >= 1 && xs.c % o.groups == 0 && ws.n % o.groups == 0,
        "conv2d: groups " + std::to_string(o.groups) + " do not divide " +
            xs.str() + " / " + ws.str());
  const int cig = xs.c / o.groups;
  check(ws.c == cig, "conv2d: weight " + ws.str() + " does not match input " +
                         xs.str() + " with groups " + std::to_string(o.groups));
  const int kh = ws.h, kw = ws.w;
  const int oh = conv_out_dim(xs.h, kh, o.stride, o.pad);
  const int ow = conv_out_dim(xs.w, kw, o.stride, o.pad);
  check(oh > 0 && ow > 0, "conv2d: input " + xs.str() + " too small for k=" +
                              std::to_string(kh) + " s=" +
                              std::to_string(o.stride) + " p=" +
                              std::to_string(o.pad));
  if (bias) {
    check(bias->shape.c == ws.n && bias->numel() == std::size_t(ws.n),
          "conv2d: bias shape " + bias->shape.str());
  }

  const int cog = ws.n / o.groups;
  const int hw = oh * ow;
  const std::size_t col_rows = static_cast<std::size_t>(cig) * kh * kw;
  auto out = make_tensor<T>({xs.n, ws.n, oh, ow});

  parallel_for(static_cast<std::size_t>(xs.n), 1, [&](std::size_t n0, std::size_t n1) {
    std::vector<T> col(col_rows * hw);
    for (std::size_t n = n0; n < n1; ++n) {
      for (int g = 0; g < o.groups; ++g) {
        const T* xg = x->data.data() + (n * xs.c + g * cig) *
                                           static_cast<std::size_t>(xs.h) * xs.w;
        im2col(xg, cig, xs.h, xs.w, kh, kw, o.stride, o.pad, oh, ow, col.data());
        const T* wg = w->data.data() + static_cast<std::size_t>(g) * cog * col_rows;
        T* og = out->data.data() +
                (n * ws.n + static_cast<std::size_t>(g) * cog) * hw;
        Kern<T>::gemm_nn(wg, col.data(), og, cog, col_rows, hw, false);
        if (bias) {
          Kern<T>::bias_add_rows(bias->data.data() + g * cog, og, cog, hw);
        }
      }
    }
  });

  record(ctx, "conv",
         static_cast<std::uint64_t>(xs.n) * ws.n * oh * ow * cig * kh * kw,
         true);

  if (ctx.graph != nullptr) {
    auto xc = x;
    auto wc = w;
    auto bc = bias;
    auto oc = out;
    const Conv2dOpts opts = o;
    ctx.graph->push("conv2d", [xc, wc, bc, oc, opts, cig, cog, kh, kw, oh, ow,
                               hw, col_rows]() {
      const Shape xs2 = xc->shape;
      xc->ensure_grad();
      wc->ensure_grad();
      if (bc) bc->ensure_grad();
      std::vector<T> col(col_rows * hw);
      std::vector<T> dcol(col_rows * hw);
      for (int n = 0; n < xs2.n; ++n) {
        for (int g = 0; g < opts.groups; ++g) {
          const std::size_t xoff =
              (static_cast<std::size_t>(n) * xs2.c + g * cig) *
              static_cast<std::size_t>(xs2.h) * xs2.w;
          im2col(xc->data.data() + xoff, cig, xs2.h, xs2.w, kh, kw, opts.stride,
                 opts.pad, oh, ow, col.data());
          const std::size_t ooff =
              (static_cast<std::size_t>(n) * wc->shape.n +
               static_cast<std::size_t>(g) * cog) *
              hw;
          const T* dog = oc->grad.data() + ooff;
          // dW += dOut * col^T
          Kern<T>::gemm_nt(dog, col.data(),
                           wc->grad.data() +
                               static_cast<std::size_t>(g) * cog * col_rows,
                           cog, hw, col_rows, true);
          // dcol = W^T * dOut, then scatter back to dx
          Kern<T>::gemm_tn(wc->data.data() +
                               static_cast<std::size_t>(g) * cog * col_rows,
                           dog, dcol.data(), col_rows, cog, hw, false);
          col2im_accum(dcol.data(), cig, xs2.h, xs2.w, kh, kw, opts.stride,
                       opts.pad, oh, ow, xc->grad.data() + xoff);
          if (bc) {
            for (int co = 0; co < cog; ++co) {
              T acc = T(0);
              const T* row = dog + static_cast<std::size_t>(co) * hw;
              for (int i = 0; i < hw; ++i) acc += row[i];
              bc->grad[static_cast<std::size_t>(g) * cog + co] += acc;
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> matmul(RunCtxT<T>& ctx, const TensorPtrT<T>& a,
                     const TensorPtrT<T>& b, bool trans_b) {
  const Shape as = a->shape;
  const Shape bs = b->shape;
  check(as.c == 1 && bs.c == 1 && as.n == bs.n,
        "matmul: want [N,1,R,C] operands, got " + as.str() + " x " + bs.str());
  const int p = as.h;
  const int k = as.w;
  const int q = trans_b ? bs.h : bs.w;
  const int bk = trans_b ? bs.w : bs.h;
  check(bk == k, "matmul: inner dims " + as.str() + " x " + bs.str() +
                     (trans_b ? " (trans_b)" : ""));
  auto out = make_tensor<T>({as.n, 1, p, q});
  const std::size_t astr = static_cast<std::size_t>(p) * k;
  const std::size_t bstr = static_cast<std::size_t>(bs.h) * bs.w;
  const std::size_t ostr = static_cast<std::size_t>(p) * q;
  for (int n = 0; n < as.n; ++n) {
    const T* an = a->data.data() + n * astr;
    const T* bn = b->data.data() + n * bstr;
    T* on = out->data.data() + n * ostr;
    if (trans_b)
      Kern<T>::gemm_nt(an, bn, on, p, k, q, false);
    else
      Kern<T>::gemm_nn(an, bn, on, p, k, q, false);
  }
  record(ctx, "matmul",
         static_cast<std::uint64_t>(as.n) * p * q * k, true);

  if (ctx.graph != nullptr) {
    auto ac = a;
    auto bc = b;
    auto oc = out;
    ctx.graph->push("matmul", [ac, bc, oc, trans_b, p, k, q, astr, bstr, ostr]() {
      ac->ensure_grad();
      bc->ensure_grad();
      for (int n = 0; n < ac->shape.n; ++n) {
        const T* an = ac->data.data() + n * astr;
        const T* bn = bc->data.data() + n * bstr;
        const T* don = oc->grad.data() + n * ostr;
        T* dan = ac->grad.data() + n * astr;
        T* dbn = bc->grad.data() + n * bstr;
        if (trans_b) {
          // out = a * b^T, b is [q,k]
          Kern<T>::gemm_nn(don, bn, dan, p, q, k, true);   // da += dout*b
          Kern<T>::gemm_tn(don, an, dbn, q, p, k, true);   // db += dout^T*a
        } else {
          // out = a * b, b is [k,q]
          Kern<T>::gemm_nt(don, bn, dan, p, q, k, true);   // da += dout*b^T
          Kern<T>::gemm_tn(an, don, dbn, k, p, q, true);   // db += a^T*dout
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> softmax_rows(RunCtxT<T>& ctx, const TensorPtrT<T>& x) {
  const Shape s = x->shape;
  check(s.c == 1, "softmax_rows: want [N,1,R,C], got " + s.str());
  auto out = make_tensor<T>(s);
  const int rows = s.n * s.h;
  const int cols = s.w;
  for (int r = 0; r < rows; ++r) {
    const T* xi = x->data.data() + static_cast<std::size_t>(r) * cols;
    T* yi = out->data.data() + static_cast<std::size_t>(r) * cols;
    T mx = xi[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
    T sum = T(0);
    for (int j = 0; j < cols; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < cols; ++j) yi[j] *= inv;
  }
  record(ctx, "act", out->numel(), false);

  if (ctx.graph != nullptr) {
    auto xc = x;
    auto oc = out;
    ctx.graph->push("softmax_rows", [xc, oc, rows, cols]() {
      xc->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const T* y = oc->data.data() + static_cast<std::size_t>(r) * cols;
        const T* dy = oc->grad.data() + static_cast<std::size_t>(r) * cols;
        T* dx = xc->grad.data() + static_cast<std::size_t>(r) * cols;
        T dot = T(0);
        for (int j = 0; j < cols; ++j) dot += dy[j] * y[j];
        for (int j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> adaptive_max_pool2d(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                                  int oh, int ow) {
  const Shape s = x->shape;
  check(oh >= 1 && ow >= 1 && oh <= s.h && ow <= s.w,
        "adaptive_max_pool2d: output " + std::to_string(oh) + "x" +
            std::to_string(ow) + " vs input " + s.str());
  auto out = make_tensor<T>({s.n, s.c, oh, ow});
  auto argmax = std::make_shared<std::vector<int>>(out->numel());
  const int maps = s.n * s.c;
  for (int m = 0; m < maps; ++m) {
    const T* plane = x->data.data() + static_cast<std::size_t>(m) * s.h * s.w;
    T* oplane = out->data.data() + static_cast<std::size_t>(m) * oh * ow;
    int* aplane = argmax->data() + static_cast<std::size_t>(m) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const auto [y0, y1] = adaptive_window(oy, oh, s.h);
      for (int ox = 0; ox < ow; ++ox) {
        const auto [x0, x1] = adaptive_window(ox, ow, s.w);
        T best = plane[y0 * s.w + x0];
        int besti = y0 * s.w + x0;
        for (int iy = y0; iy < y1; ++iy) {
          for (int ix = x0; ix < x1; ++ix) {
            const T v = plane[iy * s.w + ix];
            if (v > best) {
              best = v;
              besti = iy * s.w + ix;
            }
          }
        }
        oplane[oy * ow + ox] = best;
        aplane[oy * ow + ox] = besti;
      }
    }
  }
  record(ctx, "pool", adaptive_pool_cost(s.n, s.c, s.h, s.w, oh, ow), false);

  if (ctx.graph != nullptr) {
    auto xc = x;
    auto oc = out;
    ctx.graph->push("adaptive_max_pool2d", [xc, oc, argmax, oh, ow]() {
      xc->ensure_grad();
      const Shape s2 = xc->shape;
      const int maps2 = s2.n * s2.c;
      for (int m = 0; m < maps2; ++m) {
        T* dplane = xc->grad.data() + static_cast<std::size_t>(m) * s2.h * s2.w;
        const T* doplane = oc->grad.data() + static_cast<std::size_t>(m) * oh * ow;
        const int* aplane = argmax->data() + static_cast<std::size_t>(m) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) dplane[aplane[i]] += doplane[i];
      }
    });
  }
  return out;
}

namespace {

// Source taps for one output index, align_corners=false convention:
// src = (dst + 0.5) * in/out - 0.5, clamped at 0; linear blend of floor and
// floor+1 (edge-clamped).
struct Tap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1-w1
};

inline Tap resize_tap(int o, int out, int in, bool align_corners) {
  double src;
  if (align_corners) {
    src = out > 1 ? static_cast<double>(o) * (in - 1) / (out - 1) : 0.0;
  } else {
    src = (o + 0.5) * static_cast<double>(in) / out - 0.5;
    if (src < 0.0) src = 0.0;
  }
  int i0 = static_cast<int>(src);
  if (i0 > in - 1) i0 = in - 1;
  const int i1 = std::min(i0 + 1, in - 1);
  return {i0, i1, src - i0};
}

}  // namespace

template <typename T>
TensorPtrT<T> bilinear_resize(RunCtxT<T>& ctx, const TensorPtrT<T>& x, int oh,
                              int ow, bool align_corners) {
  const Shape s = x->shape;
  check(oh >= 1 && ow >= 1, "bilinear_resize: bad target " +
                                std::to_string(oh) + "x" + std::to_string(ow));
  auto out = make_tensor<T>({s.n, s.c, oh, ow});
  std::vector<Tap> ty(oh), tx(ow);
  for (int oy = 0; oy < oh; ++oy) ty[oy] = resize_tap(oy, oh, s.h, align_corners);
  for (int ox = 0; ox < ow; ++ox) tx[ox] = resize_tap(ox, ow, s.w, align_corners);

  const int maps = s.n * s.c;
  for (int m = 0; m < maps; ++m) {
    const T* plane = x->data.data() + static_cast<std::size_t>(m) * s.h * s.w;
    T* oplane = out->data.data() + static_cast<std::size_t>(m) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const Tap& y = ty[oy];
      for (int ox = 0; ox < ow; ++ox) {
        const Tap& xw = tx[ox];
        const double v00 = plane[y.i0 * s.w + xw.i0];
        const double v01 = plane[y.i0 * s.w + xw.i1];
        const double v10 = plane[y.i1 * s.w + xw.i0];
        const double v11 = plane[y.i1 * s.w + xw.i1];
        const double top = v00 + (v01 - v00) * xw.w1;
        const double bot = v10 + (v11 - v10) * xw.w1;
        oplane[oy * ow + ox] = static_cast<T>(top + (bot - top) * y.w1);
      }
    }
  }
  record(ctx, "resize", out->numel(), false);

  if (ctx.graph != nullptr) {
    auto xc = x;
    auto oc = out;
    auto tyc = std::make_shared<std::vector<Tap>>(std::move(ty));
    auto txc = std::make_shared<std::vector<Tap>>(std::move(tx));
    ctx.graph->push("bilinear_resize", [xc, oc, tyc, txc, oh, ow]() {
      xc->ensure_grad();
      const Shape s2 = xc->shape;
      const int maps2 = s2.n * s2.c;
      for (int m = 0; m < maps2; ++m) {
        T* dplane = xc->grad.data() + static_cast<std::size_t>(m) * s2.h * s2.w;
        const T* doplane = oc->grad.data() + static_cast<std::size_t>(m) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const Tap& y = (*tyc)[oy];
          for (int ox = 0; ox < ow; ++ox) {
            const Tap& xw = (*txc)[ox];
            const double g = doplane[oy * ow + ox];
            dplane[y.i0 * s2.w + xw.i0] += static_cast<T>(g * (1 - y.w1) * (1 - xw.w1));
            dplane[y.i0 * s2.w + xw.i1] += static_cast<T>(g * (1 - y.w1) * xw.w1);
            dplane[y.i1 * s2.w + xw.i0] += static_cast<T>(g * y.w1 * (1 - xw.w1));
            dplane[y.i1 * s2.w + xw.i1] += static_cast<T>(g * y.w1 * xw.w1);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> batch_norm(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                         const TensorPtrT<T>& gamma, const TensorPtrT<T>& beta,
                         const TensorPtrT<T>& rmean, const TensorPtrT<T>& rvar,
                         T momentum, T eps) {
  const Shape s = x->shape;
  check(gamma->numel() == std::size_t(s.c) && beta->numel() == std::size_t(s.c) &&
            rmean->numel() == std::size_t(s.c) && rvar->numel() == std::size_t(s.c),
        "batch_norm: param size vs input " + s.str());
  check(eps >= T(0), "batch_norm: negative eps");
  auto out = make_tensor<T>(s);
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t cnt = static_cast<std::size_t>(s.n) * hw;

  auto mean = std::make_shared<std::vector<T>>(s.c);
  auto invstd = std::make_shared<std::vector<T>>(s.c);
  const bool train = ctx.training;

  for (int c = 0; c < s.c; ++c) {
    T mu, var;
    if (train) {
      T sum = T(0);
      for (int n = 0; n < s.n; ++n) {
        const T* p = x->data.data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) sum += p[i];
      }
      mu = sum / static_cast<T>(cnt);
      T vs = T(0);
      for (int n = 0; n < s.n; ++n) {
        const T* p = x->data.data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const T d = p[i] - mu;
          vs += d * d;
        }
      }
      var = vs / static_cast<T>(cnt);  // biased, same as the running buffer
      rmean->data[c] = (T(1) - momentum) * rmean->data[c] + momentum * mu;
      rvar->data[c] = (T(1) - momentum) * rvar->data[c] + momentum * var;
    } else {
      mu = rmean->data[c];
      var = rvar->data[c];
    }
    const T is = T(1) / std::sqrt(var + eps);
    (*mean)[c] = mu;
    (*invstd)[c] = is;
    const T g = gamma->data[c];
    const T b = beta->data[c];
    for (int n = 0; n < s.n; ++n) {
      const T* p = x->data.data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
      T* q = out->data.data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) q[i] = (p[i] - mu) * is * g + b;
    }
  }
  record(ctx, "bn", out->numel(), false);

  if (ctx.graph != nullptr) {
    auto xc = x;
    auto gc = gamma;
    auto bc = beta;
    auto oc = out;
    ctx.graph->push("batch_norm", [xc, gc, bc, oc, mean, invstd, train, hw, cnt]() {
      xc->ensure_grad();
      gc->ensure_grad();
      bc->ensure_grad();
      const Shape s2 = xc->shape;
      for (int c = 0; c < s2.c; ++c) {
        const T mu = (*mean)[c];
        const T is = (*invstd)[c];
        const T g = gc->data[c];
        T dsum = T(0), dxhat = T(0);
        for (int n = 0; n < s2.n; ++n) {
          const std::size_t off = (static_cast<std::size_t>(n) * s2.c + c) * hw;
          const T* xp = xc->data.data() + off;
          const T* dy = oc->grad.data() + off;
          for (std::size_t i = 0; i < hw; ++i) {
            dsum += dy[i];
            dxhat += dy[i] * (xp[i] - mu) * is;
          }
        }
        gc->grad[c] += dxhat;
        bc->grad[c] += dsum;
        if (train) {
          const T inv_cnt = T(1) / static_cast<T>(cnt);
          for (int n = 0; n < s2.n; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * s2.c + c) * hw;
            const T* xp = xc->data.data() + off;
            const T* dy = oc->grad.data() + off;
            T* dx = xc->grad.data() + off;
            for (std::size_t i = 0; i < hw; ++i) {
              const T xh = (xp[i] - mu) * is;
              dx[i] += g * is * (dy[i] - dsum * inv_cnt - xh * dxhat * inv_cnt);
            }
          }
        } else {
          for (int n = 0; n < s2.n; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * s2.c + c) * hw;
            const T* dy = oc->grad.data() + off;
            T* dx = xc->grad.data() + off;
            for (std::size_t i = 0; i < hw; ++i) dx[i] += dy[i] * g * is;
          }
        }
      }
    });
  }
  return out;
}

namespace {

template <typename T, typename Fwd, typename Bwd>
TensorPtrT<T> unary_act(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                        const char* name, Fwd fwd, Bwd bwd) {
  auto out = make_tensor<T>(x->shape);
  fwd(x->data.data(), out->data.data(), x->numel());
  record(ctx, "act", out->numel(), false);
  if (ctx.graph != nullptr) {
    auto xc = x;
    auto oc = out;
    ctx.graph->push(name, [xc, oc, bwd]() {
      xc->ensure_grad();
      bwd(xc->data.data(), oc->data.data(), oc->grad.data(), xc->grad.data(),
          xc->numel());
    });
  }
  return out;
}

}  // namespace

template <typename T>
TensorPtrT<T> relu(RunCtxT<T>& ctx, const TensorPtrT<T>& x) {
  return unary_act(
      ctx, x, "relu",
      [](const T* in, T* out, std::size_t n) { Kern<T>::relu(in, out, n); },
      [](const T* in, const T*, const T* dy, T* dx, std::size_t n) {
        Kern<T>::relu_bwd(in, dy, dx, n);
      });
}

template <typename T>
TensorPtrT<T> hard_sigmoid(RunCtxT<T>& ctx, const TensorPtrT<T>& x) {
  return unary_act(
      ctx, x, "hard_sigmoid",
      [](const T* in, T* out, std::size_t n) {
        Kern<T>::hard_sigmoid(in, out, n);
      },
      [](const T* in, const T*, const T* dy, T* dx, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
          if (in[i] > T(-3) && in[i] < T(3)) dx[i] += dy[i] / T(6);
        }
      });
}

template <typename T>
TensorPtrT<T> hard_swish(RunCtxT<T>& ctx, const TensorPtrT<T>& x) {
  return unary_act(
      ctx, x, "hard_swish",
      [](const T* in, T* out, std::size_t n) {
        Kern<T>::hard_swish(in, out, n);
      },
      [](const T* in, const T*, const T* dy, T* dx, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
          const T v = in[i];
          T d;
          if (v <= T(-3))
            d = T(0);
          else if (v >= T(3))
            d = T(1);
          else
            d = (T(2) * v + T(3)) / T(6);
          dx[i] += dy[i] * d;
        }
      });
}

template <typename T>
TensorPtrT<T> sigmoid(RunCtxT<T>& ctx, const TensorPtrT<T>& x) {
  return unary_act(
      ctx, x, "sigmoid",
      [](const T* in, T* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
          if (in[i] >= T(0)) {
            out[i] = T(1) / (T(1) + std::exp(-in[i]));
          } else {
            const T e = std::exp(in[i]);
            out[i] = e / (T(1) + e);
          }
        }
      },
      [](const T*, const T* out, const T* dy, T* dx, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i)
          dx[i] += dy[i] * out[i] * (T(1) - out[i]);
      });
}

template <typename T>
TensorPtrT<T> add(RunCtxT<T>& ctx, const TensorPtrT<T>& a,
                  const TensorPtrT<T>& b) {
  check(a->shape == b->shape,
        "add: shape mismatch " + a->shape.str() + " vs " + b->shape.str());
  auto out = make_tensor<T>(a->shape);
  Kern<T>::add(a->data.data(), b->data.data(), out->data.data(), out->numel());
  record(ctx, "eltwise", out->numel(), false);
  if (ctx.graph != nullptr) {
    auto ac = a;
    auto bc = b;
    auto oc = out;
    ctx.graph->push("add", [ac, bc, oc]() {
      ac->ensure_grad();
      bc->ensure_grad();
      Kern<T>::axpy(T(1), oc->grad.data(), ac->grad.data(), oc->numel());
      Kern<T>::axpy(T(1), oc->grad.data(), bc->grad.data(), oc->numel());
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> mul(RunCtxT<T>& ctx, const TensorPtrT<T>& a,
                  const TensorPtrT<T>& b) {
  check(a->shape == b->shape,
        "mul: shape mismatch " + a->shape.str() + " vs " + b->shape.str());
  auto out = make_tensor<T>(a->shape);
  Kern<T>::mul(a->data.data(), b->data.data(), out->data.data(), out->numel());
  record(ctx, "eltwise", out->numel(), false);
  if (ctx.graph != nullptr) {
    auto ac = a;
    auto bc = b;
    auto oc = out;
    ctx.graph->push("mul", [ac, bc, oc]() {
      ac->ensure_grad();
      bc->ensure_grad();
      const std::size_t n = oc->numel();
      for (std::size_t i = 0; i < n; ++i) {
        ac->grad[i] += oc->grad[i] * bc->data[i];
        bc->grad[i] += oc->grad[i] * ac->data[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> channelwise_mul(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                              const TensorPtrT<T>& s) {
  const Shape xs = x->shape;
  check(s->shape.n == xs.n && s->shape.c == xs.c && s->shape.h == 1 &&
            s->shape.w == 1,
        "channelwise_mul: scale " + s->shape.str() + " vs input " + xs.str());
  auto out = make_tensor<T>(xs);
  const std::size_t hw = static_cast<std::size_t>(xs.h) * xs.w;
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const T sv = s->data[static_cast<std::size_t>(n) * xs.c + c];
      const std::size_t off = (static_cast<std::size_t>(n) * xs.c + c) * hw;
      const T* xp = x->data.data() + off;
      T* op = out->data.data() + off;
      for (std::size_t i = 0; i < hw; ++i) op[i] = xp[i] * sv;
    }
  }
  record(ctx, "eltwise", out->numel(), false);
  if (ctx.graph != nullptr) {
    auto xc = x;
    auto sc = s;
    auto oc = out;
    ctx.graph->push("channelwise_mul", [xc, sc, oc, hw]() {
      xc->ensure_grad();
      sc->ensure_grad();
      const Shape xs2 = xc->shape;
      for (int n = 0; n < xs2.n; ++n) {
        for (int c = 0; c < xs2.c; ++c) {
          const std::size_t si = static_cast<std::size_t>(n) * xs2.c + c;
          const std::size_t off = si * hw;
          const T sv = sc->data[si];
          const T* xp = xc->data.data() + off;
          const T* dy = oc->grad.data() + off;
          T* dx = xc->grad.data() + off;
          T acc = T(0);
          for (std::size_t i = 0; i < hw; ++i) {
            dx[i] += dy[i] * sv;
            acc += dy[i] * xp[i];
          }
          sc->grad[si] += acc;
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> global_avg_pool(RunCtxT<T>& ctx, const TensorPtrT<T>& x) {
  const Shape s = x->shape;
  auto out = make_tensor<T>({s.n, s.c, 1, 1});
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  const T inv = T(1) / static_cast<T>(hw);
  for (int m = 0; m < s.n * s.c; ++m) {
    const T* p = x->data.data() + static_cast<std::size_t>(m) * hw;
    T acc = T(0);
    for (std::size_t i = 0; i < hw; ++i) acc += p[i];
    out->data[m] = acc * inv;
  }
  record(ctx, "pool", x->numel(), false);
  if (ctx.graph != nullptr) {
    auto xc = x;
    auto oc = out;
    ctx.graph->push("global_avg_pool", [xc, oc, hw, inv]() {
      xc->ensure_grad();
      const int maps = xc->shape.n * xc->shape.c;
      for (int m = 0; m < maps; ++m) {
        const T g = oc->grad[m] * inv;
        T* dx = xc->grad.data() + static_cast<std::size_t>(m) * hw;
        for (std::size_t i = 0; i < hw; ++i) dx[i] += g;
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> concat_channels(RunCtxT<T>& ctx,
                              const std::vector<TensorPtrT<T>>& xs) {
  check(!xs.empty(), "concat_channels: no inputs");
  const Shape s0 = xs[0]->shape;
  int ctot = 0;
  for (const auto& t : xs) {
    check(t->shape.n == s0.n && t->shape.h == s0.h && t->shape.w == s0.w,
          "concat_channels: mismatched " + t->shape.str() + " vs " + s0.str());
    ctot += t->shape.c;
  }
  auto out = make_tensor<T>({s0.n, ctot, s0.h, s0.w});
  const std::size_t hw = static_cast<std::size_t>(s0.h) * s0.w;
  for (int n = 0; n < s0.n; ++n) {
    std::size_t coff = 0;
    for (const auto& t : xs) {
      const std::size_t sz = static_cast<std::size_t>(t->shape.c) * hw;
      std::memcpy(out->data.data() + (static_cast<std::size_t>(n) * ctot) * hw +
                      coff * hw,
                  t->data.data() + static_cast<std::size_t>(n) * sz,
                  sz * sizeof(T));
      coff += t->shape.c;
    }
  }
  if (ctx.graph != nullptr) {
    auto xsc = xs;
    auto oc = out;
    ctx.graph->push("concat_channels", [xsc, oc, hw, ctot]() {
      const int n0 = oc->shape.n;
      for (int n = 0; n < n0; ++n) {
        std::size_t coff = 0;
        for (const auto& t : xsc) {
          t->ensure_grad();
          const std::size_t sz = static_cast<std::size_t>(t->shape.c) * hw;
          const T* src = oc->grad.data() +
                         (static_cast<std::size_t>(n) * ctot + coff) * hw;
          T* dst = t->grad.data() + static_cast<std::size_t>(n) * sz;
          for (std::size_t i = 0; i < sz; ++i) dst[i] += src[i];
          coff += t->shape.c;
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> concat_h(RunCtxT<T>& ctx, const std::vector<TensorPtrT<T>>& xs) {
  check(!xs.empty(), "concat_h: no inputs");
  const Shape s0 = xs[0]->shape;
  int htot = 0;
  for (const auto& t : xs) {
    check(t->shape.n == s0.n && t->shape.c == s0.c && t->shape.w == s0.w,
          "concat_h: mismatched " + t->shape.str() + " vs " + s0.str());
    htot += t->shape.h;
  }
  auto out = make_tensor<T>({s0.n, s0.c, htot, s0.w});
  for (int n = 0; n < s0.n; ++n) {
    for (int c = 0; c < s0.c; ++c) {
      std::size_t hoff = 0;
      for (const auto& t : xs) {
        const std::size_t rows = static_cast<std::size_t>(t->shape.h) * s0.w;
        std::memcpy(
            out->data.data() +
                ((static_cast<std::size_t>(n) * s0.c + c) * htot + hoff) * s0.w,
            t->data.data() +
                (static_cast<std::size_t>(n) * s0.c + c) * t->shape.h * s0.w,
            rows * sizeof(T));
        hoff += t->shape.h;
      }
    }
  }
  if (ctx.graph != nullptr) {
    auto xsc = xs;
    auto oc = out;
    ctx.graph->push("concat_h", [xsc, oc, htot]() {
      const Shape os = oc->shape;
      for (int n = 0; n < os.n; ++n) {
        for (int c = 0; c < os.c; ++c) {
          std::size_t hoff = 0;
          for (const auto& t : xsc) {
            t->ensure_grad();
            const std::size_t rows = static_cast<std::size_t>(t->shape.h) * os.w;
            const T* src = oc->grad.data() +
                           ((static_cast<std::size_t>(n) * os.c + c) * htot + hoff) *
                               os.w;
            T* dst = t->grad.data() +
                     (static_cast<std::size_t>(n) * os.c + c) * t->shape.h * os.w;
            for (std::size_t i = 0; i < rows; ++i) dst[i] += src[i];
            hoff += t->shape.h;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> channel_select(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                             const std::vector<int>& idx) {
  const Shape s = x->shape;
  for (int i : idx) {
    check(i >= 0 && i < s.c, "channel_select: index " + std::to_string(i) +
                                 " out of range for " + s.str());
  }
  auto out = make_tensor<T>({s.n, static_cast<int>(idx.size()), s.h, s.w});
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      std::memcpy(out->data.data() +
                      (static_cast<std::size_t>(n) * idx.size() + j) * hw,
                  x->data.data() +
                      (static_cast<std::size_t>(n) * s.c + idx[j]) * hw,
                  hw * sizeof(T));
    }
  }
  if (ctx.graph != nullptr) {
    auto xc = x;
    auto oc = out;
    auto idxc = std::make_shared<std::vector<int>>(idx);
    ctx.graph->push("channel_select", [xc, oc, idxc, hw]() {
      xc->ensure_grad();
      const Shape s2 = xc->shape;
      for (int n = 0; n < s2.n; ++n) {
        for (std::size_t j = 0; j < idxc->size(); ++j) {
          const T* src = oc->grad.data() +
                         (static_cast<std::size_t>(n) * idxc->size() + j) * hw;
          T* dst = xc->grad.data() +
                   (static_cast<std::size_t>(n) * s2.c + (*idxc)[j]) * hw;
          for (std::size_t i = 0; i < hw; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> reshape(RunCtxT<T>& ctx, const TensorPtrT<T>& x, Shape s) {
  check(s.numel() == x->numel(),
        "reshape: " + x->shape.str() + " -> " + s.str());
  auto out = make_tensor<T>(s);
  out->data = x->data;
  if (ctx.graph != nullptr) {
    auto xc = x;
    auto oc = out;
    ctx.graph->push("reshape", [xc, oc]() {
      xc->ensure_grad();
      Kern<T>::axpy(T(1), oc->grad.data(), xc->grad.data(), oc->numel());
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> map_to_rows(RunCtxT<T>& ctx, const TensorPtrT<T>& x) {
  const Shape s = x->shape;
  const int a = s.h * s.w;
  auto out = make_tensor<T>({s.n, 1, a, s.c});
  for (int n = 0; n < s.n; ++n) {
    const T* xn = x->data.data() + static_cast<std::size_t>(n) * s.c * a;
    T* on = out->data.data() + static_cast<std::size_t>(n) * a * s.c;
    for (int c = 0; c < s.c; ++c) {
      for (int p = 0; p < a; ++p) on[static_cast<std::size_t>(p) * s.c + c] = xn[static_cast<std::size_t>(c) * a + p];
    }
  }
  if (ctx.graph != nullptr) {
    auto xc = x;
    auto oc = out;
    ctx.graph->push("map_to_rows", [xc, oc, a]() {
      xc->ensure_grad();
      const Shape s2 = xc->shape;
      for (int n = 0; n < s2.n; ++n) {
        const T* don = oc->grad.data() + static_cast<std::size_t>(n) * a * s2.c;
        T* dxn = xc->grad.data() + static_cast<std::size_t>(n) * s2.c * a;
        for (int c = 0; c < s2.c; ++c) {
          for (int p = 0; p < a; ++p)
            dxn[static_cast<std::size_t>(c) * a + p] += don[static_cast<std::size_t>(p) * s2.c + c];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> rows_to_map(RunCtxT<T>& ctx, const TensorPtrT<T>& x, int c,
                          int h, int w) {
  const Shape s = x->shape;
  check(s.c == 1 && s.h == h * w && s.w == c,
        "rows_to_map: " + s.str() + " -> c=" + std::to_string(c) + " h=" +
            std::to_string(h) + " w=" + std::to_string(w));
  const int a = h * w;
  auto out = make_tensor<T>({s.n, c, h, w});
  for (int n = 0; n < s.n; ++n) {
    const T* xn = x->data.data() + static_cast<std::size_t>(n) * a * c;
    T* on = out->data.data() + static_cast<std::size_t>(n) * c * a;
    for (int p = 0; p < a; ++p) {
      for (int ci = 0; ci < c; ++ci)
        on[static_cast<std::size_t>(ci) * a + p] = xn[static_cast<std::size_t>(p) * c + ci];
    }
  }
  if (ctx.graph != nullptr) {
    auto xc = x;
    auto oc = out;
    ctx.graph->push("rows_to_map", [xc, oc, a, c]() {
      xc->ensure_grad();
      for (int n = 0; n < xc->shape.n; ++n) {
        const T* don = oc->grad.data() + static_cast<std::size_t>(n) * c * a;
        T* dxn = xc->grad.data() + static_cast<std::size_t>(n) * a * c;
        for (int p = 0; p < a; ++p) {
          for (int ci = 0; ci < c; ++ci)
            dxn[static_cast<std::size_t>(p) * c + ci] += don[static_cast<std::size_t>(ci) * a + p];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> ohem_softmax_ce(RunCtxT<T>& ctx, const TensorPtrT<T>& logits,
                              const Labels& labels, T thresh, int min_kept,
                              int ignore_index, int* kept_out) {
  const Shape s = logits->shape;
  check(labels.n == s.n && labels.h == s.h && labels.w == s.w,
        "ohem: labels " + std::to_string(labels.n) + "x" +
            std::to_string(labels.h) + "x" + std::to_string(labels.w) +
            " vs logits " + s.str());
  const int k = s.c;
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t npix = static_cast<std::size_t>(s.n) * hw;

  // true-class probability and -log prob for every valid pixel
  struct Cand {
    T pt;
    std::size_t pix;  // n*hw + spatial
  };
  std::vector<Cand> valid;
  valid.reserve(npix);
  std::vector<T> nll(npix, T(0));
  for (std::size_t pix = 0; pix < npix; ++pix) {
    const int lab = labels.v[pix];
    if (lab == ignore_index) continue;
    check(lab >= 0 && lab < k, "ohem: label " + std::to_string(lab) +
                                   " out of range for " + std::to_string(k) +
                                   " classes");
    const std::size_t n = pix / hw;
    const std::size_t sp = pix % hw;
    const T* base = logits->data.data() + n * k * hw + sp;
    T mx = base[0];
    for (int c = 1; c < k; ++c) mx = std::max(mx, base[static_cast<std::size_t>(c) * hw]);
    T sum = T(0);
    for (int c = 0; c < k; ++c) sum += std::exp(base[static_cast<std::size_t>(c) * hw] - mx);
    const T lse = mx + std::log(sum);
    const T logit_t = base[static_cast<std::size_t>(lab) * hw];
    valid.push_back({std::exp(logit_t - lse), pix});
    nll[pix] = lse - logit_t;
  }

  auto out = make_tensor<T>({1, 1, 1, 1});
  auto kept = std::make_shared<std::vector<std::size_t>>();
  if (!valid.empty()) {
    const int n_valid = static_cast<int>(valid.size());
    int want = min_kept <= 0 ? std::max(1, n_valid / 16) : min_kept;
    want = std::min(want, n_valid);
    want = std::max(want, 1);
    // ascending hardness prefix; ties broken by pixel index for determinism
    std::sort(valid.begin(), valid.end(), [](const Cand& a, const Cand& b) {
      if (a.pt != b.pt) return a.pt < b.pt;
      return a.pix < b.pix;
    });
    int below = 0;
    while (below < n_valid && valid[below].pt < thresh) ++below;
    const int keep = std::max(below, want);
    kept->reserve(keep);
    T acc = T(0);
    for (int i = 0; i < keep; ++i) {
      kept->push_back(valid[i].pix);
      acc += nll[valid[i].pix];
    }
    out->data[0] = acc / static_cast<T>(keep);
  }
  if (kept_out != nullptr) *kept_out = static_cast<int>(kept->size());

  if (ctx.graph != nullptr) {
    auto lc = logits;
    auto oc = out;
    const Labels labs = labels;
    ctx.graph->push("ohem_softmax_ce", [lc, oc, kept, labs, k, hw]() {
      if (kept->empty()) return;
      lc->ensure_grad();
      const T scale = oc->grad[0] / static_cast<T>(kept->size());
      for (const std::size_t pix : *kept) {
        const std::size_t n = pix / hw;
        const std::size_t sp = pix % hw;
        const int lab = labs.v[pix];
        const T* base = lc->data.data() + n * k * hw + sp;
        T* gbase = lc->grad.data() + n * k * hw + sp;
        T mx = base[0];
        for (int c = 1; c < k; ++c) mx = std::max(mx, base[static_cast<std::size_t>(c) * hw]);
        T sum = T(0);
        for (int c = 0; c < k; ++c) sum += std::exp(base[static_cast<std::size_t>(c) * hw] - mx);
        for (int c = 0; c < k; ++c) {
          const T p = std::exp(base[static_cast<std::size_t>(c) * hw] - mx) / sum;
          gbase[static_cast<std::size_t>(c) * hw] += scale * (p - (c == lab ? T(1) : T(0)));
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtrT<T> weighted_sum(RunCtxT<T>& ctx, const TensorPtrT<T>& x,
                           const std::vector<T>& w) {
  check(w.size() == static_cast<std::size_t>(x->numel()),
        "weighted_sum: " + std::to_string(w.size()) + " weights for " +
            std::to_string(x->numel()) + " elements");
  auto out = make_tensor<T>(Shape{1, 1, 1, 1});
  T acc = T(0);
  for (std::int64_t i = 0; i < x->numel(); ++i)
    acc += w[static_cast<std::size_t>(i)] * x->data[static_cast<std::size_t>(i)];
  out->data[0] = acc;
  record(ctx, "eltwise", x->numel(), false);
  if (ctx.graph != nullptr) {
    auto xc = x;
    auto oc = out;
    auto wc = w;
    ctx.graph->push("weighted_sum", [xc, oc, wc]() {
      xc->ensure_grad();
      const T g = oc->grad[0];
      for (std::int64_t i = 0; i < xc->numel(); ++i)
        xc->grad[static_cast<std::size_t>(i)] +=
            g * wc[static_cast<std::size_t>(i)];
    });
  }
  return out;
}

template <typename T>
void softmax_map_inplace(TensorT<T>& logits) {
  const Shape s = logits.shape;
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t sp = 0; sp < hw; ++sp) {
      T* base = logits.data.data() + static_cast<std::size_t>(n) * s.c * hw + sp;
      T mx = base[0];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, base[static_cast<std::size_t>(c) * hw]);
      T sum = T(0);
      for (int c = 0; c < s.c; ++c) {
        T& v = base[static_cast<std::size_t>(c) * hw];
        v = std::exp(v - mx);
        sum += v;
      }
      for (int c = 0; c < s.c; ++c) base[static_cast<std::size_t>(c) * hw] /= sum;
    }
  }
}

template <typename T>
TensorPtrT<T> reflect_pad_br(const TensorPtrT<T>& x, int pad_b, int pad_r) {
  const Shape s = x->shape;
  check(pad_b >= 0 && pad_r >= 0 && pad_b < s.h && pad_r < s.w,
        "reflect_pad_br: pad " + std::to_string(pad_b) + "/" +
            std::to_string(pad_r) + " too large for " + s.str());
  auto out = make_tensor<T>({s.n, s.c, s.h + pad_b, s.w + pad_r});
  const int oh = s.h + pad_b, ow = s.w + pad_r;
  for (int m = 0; m < s.n * s.c; ++m) {
    const T* plane = x->data.data() + static_cast<std::size_t>(m) * s.h * s.w;
    T* oplane = out->data.data() + static_cast<std::size_t>(m) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const int iy = oy < s.h ? oy : 2 * s.h - 2 - oy;
      for (int ox = 0; ox < ow; ++ox) {
        const int ix = ox < s.w ? ox : 2 * s.w - 2 - ox;
        oplane[static_cast<std::size_t>(oy) * ow + ox] =
            plane[static_cast<std::size_t>(iy) * s.w + ix];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

#define CANSEG_INSTANTIATE_OPS(T)                                              \
  template TensorPtrT<T> conv2d<T>(RunCtxT<T>&, const TensorPtrT<T>&,          \
                                   const TensorPtrT<T>&, const TensorPtrT<T>&, \
                                   const Conv2dOpts&);                         \
  template TensorPtrT<T> matmul<T>(RunCtxT<T>&, const TensorPtrT<T>&,          \
                                   const TensorPtrT<T>&, bool);                \
  template TensorPtrT<T> softmax_rows<T>(RunCtxT<T>&, const TensorPtrT<T>&);   \
  template TensorPtrT<T> adaptive_max_pool2d<T>(RunCtxT<T>&,                   \
                                                const TensorPtrT<T>&, int,     \
                                                int);                          \
  template TensorPtrT<T> bilinear_resize<T>(RunCtxT<T>&, const TensorPtrT<T>&, \
                                            int, int, bool);                   \
  template TensorPtrT<T> batch_norm<T>(                                        \
      RunCtxT<T>&, const TensorPtrT<T>&, const TensorPtrT<T>&,                 \
      const TensorPtrT<T>&, const TensorPtrT<T>&, const TensorPtrT<T>&, T, T); \
  template TensorPtrT<T> relu<T>(RunCtxT<T>&, const TensorPtrT<T>&);           \
  template TensorPtrT<T> hard_sigmoid<T>(RunCtxT<T>&, const TensorPtrT<T>&);   \
  template TensorPtrT<T> hard_swish<T>(RunCtxT<T>&, const TensorPtrT<T>&);     \
  template TensorPtrT<T> sigmoid<T>(RunCtxT<T>&, const TensorPtrT<T>&);        \
  template TensorPtrT<T> add<T>(RunCtxT<T>&, const TensorPtrT<T>&,             \
                                const TensorPtrT<T>&);                         \
  template TensorPtrT<T> mul<T>(RunCtxT<T>&, const TensorPtrT<T>&,             \
                                const TensorPtrT<T>&);                         \
  template TensorPtrT<T> channelwise_mul<T>(RunCtxT<T>&, const TensorPtrT<T>&, \
                                            const TensorPtrT<T>&);             \
  template TensorPtrT<T> global_avg_pool<T>(RunCtxT<T>&,                       \
                                            const TensorPtrT<T>&);             \
  template TensorPtrT<T> concat_channels<T>(                                   \
      RunCtxT<T>&, const std::vector<TensorPtrT<T>>&);                         \
  template TensorPtrT<T> concat_h<T>(RunCtxT<T>&,                              \
                                     const std::vector<TensorPtrT<T>>&);       \
  template TensorPtrT<T> channel_select<T>(RunCtxT<T>&, const TensorPtrT<T>&,  \
                                           const std::vector<int>&);           \
  template TensorPtrT<T> reshape<T>(RunCtxT<T>&, const TensorPtrT<T>&, Shape); \
  template TensorPtrT<T> map_to_rows<T>(RunCtxT<T>&, const TensorPtrT<T>&);    \
  template TensorPtrT<T> rows_to_map<T>(RunCtxT<T>&, const TensorPtrT<T>&,     \
                                        int, int, int);                        \
  template TensorPtrT<T> ohem_softmax_ce<T>(RunCtxT<T>&, const TensorPtrT<T>&, \
                                            const Labels&, T, int, int, int*); \
  template TensorPtrT<T> weighted_sum<T>(RunCtxT<T>&, const TensorPtrT<T>&,    \
                                         const std::vector<T>&);               \
  template void softmax_map_inplace<T>(TensorT<T>&);                           \
  template TensorPtrT<T> reflect_pad_br<T>(const TensorPtrT<T>&, int, int);

CANSEG_INSTANTIATE_OPS(float)
CANSEG_INSTANTIATE_OPS(double)

#undef CANSEG_INSTANTIATE_OPS

}  // namespace canseg::ops
