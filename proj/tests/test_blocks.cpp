#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "canseg/blocks.hpp"
#include "ref_impls.hpp"

using namespace canseg;

namespace {

// Fresh batch norms are identity in eval mode (gamma 1, running stats 0/1),
// which would let a wiring oracle pass without checking the BN math at all.
// Scramble the buffers so every stage has to be computed for real.
void scramble_bn(blocks::BatchNormT<double>& bn, std::mt19937_64& rng) {
  ref::fill_uniform(bn.gamma->data, rng, 0.5, 1.5);
  ref::fill_uniform(bn.beta->data, rng, -0.5, 0.5);
  ref::fill_uniform(bn.rmean->data, rng, -0.3, 0.3);
  ref::fill_uniform(bn.rvar->data, rng, 0.5, 2.0);
}

// eval-mode BN with the block's buffers, applied in place per channel
void bn_eval(std::vector<double>& x, int c, int hw,
             const blocks::BatchNormT<double>& bn) {
  for (int ic = 0; ic < c; ++ic) {
    const double g = bn.gamma->data[std::size_t(ic)];
    const double b = bn.beta->data[std::size_t(ic)];
    const double m = bn.rmean->data[std::size_t(ic)];
    const double iv = 1.0 / std::sqrt(bn.rvar->data[std::size_t(ic)] + 1e-5);
    for (int i = 0; i < hw; ++i) {
      double& v = x[std::size_t(ic) * hw + i];
      v = (v - m) * iv * g + b;
    }
  }
}

double hswish_val(double t) {
  return t * std::clamp((t + 3.0) / 6.0, 0.0, 1.0);
}

void apply_act_ref(std::vector<double>& x, Act a) {
  for (double& v : x) {
    if (a == Act::Relu)
      v = std::max(v, 0.0);
    else if (a == Act::HardSwish)
      v = hswish_val(v);
  }
}

// [Cout, Cin/g, k, k] conv of the layer over x, stride/pad from the layer
std::vector<double> conv_ref(const blocks::Conv2dLayerT<double>& l,
                             const std::vector<double>& x, int cin, int h,
                             int w) {
  const Shape ws = l.w->shape;
  return ref::conv2d(x, 1, cin, h, w, l.w->data, ws.n, ws.h, ws.w,
                     l.b ? &l.b->data : nullptr, l.opts.stride, l.opts.pad,
                     l.opts.groups);
}

std::vector<double> ghost_ref(const blocks::GhostConvT<double>& g,
                              const std::vector<double>& x, int cin, int h,
                              int w) {
  auto primary = conv_ref(g.primary, x, cin, h, w);
  const int rem = g.out_channels - g.primary_channels;
  if (rem == 0) return primary;
  std::vector<double> gathered(std::size_t(rem) * h * w);
  for (int j = 0; j < rem; ++j)
    std::copy_n(primary.begin() + std::ptrdiff_t(g.cheap_idx[std::size_t(j)]) * h * w,
                std::size_t(h) * w, gathered.begin() + std::ptrdiff_t(j) * h * w);
  auto cheap = conv_ref(g.cheap, gathered, rem, h, w);
  primary.insert(primary.end(), cheap.begin(), cheap.end());
  return primary;
}

}  // namespace

TEST_CASE("ds_conv: stride geometry and parameter count") {
  std::mt19937_64 rng(2);
  ParamSetT<double> ps;
  blocks::DsConvT<double> s1(ps, "a", rng, 8, 12, 3, 1);
  blocks::DsConvT<double> s2(ps, "b", rng, 8, 12, 3, 2);
  RunCtxT<double> ctx;
  auto x = make_tensor<double>(Shape{1, 8, 12, 20});
  ref::fill_uniform(x->data, rng);
  CHECK(s1.forward(ctx, x)->shape == Shape{1, 12, 12, 20});
  CHECK(s2.forward(ctx, x)->shape == Shape{1, 12, 6, 10});

  // in 16 -> out 32, k3: dw 16*9 + pw 16*32 + two BNs 4*(16+32) = 848
  ParamSetT<double> ps2;
  blocks::DsConvT<double> d(ps2, "d", rng, 16, 32, 3, 1);
  CHECK(ps2.total_count() == 848);
}

TEST_CASE("ds_conv matches a stage-by-stage reference") {
  std::mt19937_64 rng(6);
  ParamSetT<double> ps;
  blocks::DsConvT<double> d(ps, "d", rng, 5, 9, 3, 2);
  scramble_bn(d.dw.bn, rng);
  scramble_bn(d.pw.bn, rng);
  const int h = 8, w = 6;
  auto x = make_tensor<double>(Shape{1, 5, h, w});
  ref::fill_uniform(x->data, rng);

  RunCtxT<double> ctx;
  auto got = d.forward(ctx, x);

  auto mid = conv_ref(d.dw.conv, x->data, 5, h, w);
  bn_eval(mid, 5, (h / 2) * (w / 2), d.dw.bn);
  apply_act_ref(mid, Act::Relu);
  auto out = conv_ref(d.pw.conv, mid, 5, h / 2, w / 2);
  bn_eval(out, 9, (h / 2) * (w / 2), d.pw.bn);
  apply_act_ref(out, Act::Relu);
  CHECK(ref::max_abs_diff(got->data, out) < 1e-6);
}

TEST_CASE("se_block: saturated gates and the bounded-output property") {
  std::mt19937_64 rng(3);
  ParamSetT<double> ps;
  blocks::SeBlockT<double> se(ps, "se", rng, 8);
  RunCtxT<double> ctx;
  auto x = make_tensor<double>(Shape{2, 8, 5, 5});
  ref::fill_uniform(x->data, rng, -2.0, 2.0);

  for (auto& v : se.fc2.w->data) v = 0.0;
  for (auto& v : se.fc2.b->data) v = 10.0;  // hard_sigmoid(10) == 1
  CHECK(se.forward(ctx, x)->data == x->data);

  for (auto& v : se.fc2.b->data) v = -10.0;  // gate 0
  auto zero = se.forward(ctx, x);
  for (double v : zero->data) CHECK(v == 0.0);

  ParamSetT<double> ps2;
  blocks::SeBlockT<double> se2(ps2, "se", rng, 8);
  auto y = se2.forward(ctx, x);
  for (std::size_t i = 0; i < y->data.size(); ++i)
    CHECK(std::abs(y->data[i]) <= std::abs(x->data[i]) + 1e-12);
}

TEST_CASE("se_block matches a scalar pipeline reference") {
  std::mt19937_64 rng(3);
  ParamSetT<double> ps;
  const int c = 10, mid = 3;  // ceil(10/4)
  blocks::SeBlockT<double> se(ps, "se", rng, c);
  REQUIRE(se.fc1.w->shape == Shape{mid, c, 1, 1});
  auto x = make_tensor<double>(Shape{1, c, 4, 6});
  ref::fill_uniform(x->data, rng);

  RunCtxT<double> ctx;
  auto got = se.forward(ctx, x);

  const int hw = 24;
  std::vector<double> pooled(c);
  for (int ic = 0; ic < c; ++ic) {
    double s = 0;
    for (int i = 0; i < hw; ++i) s += x->data[std::size_t(ic) * hw + i];
    pooled[std::size_t(ic)] = s / hw;
  }
  std::vector<double> h1(mid);
  for (int o = 0; o < mid; ++o) {
    double s = se.fc1.b->data[std::size_t(o)];
    for (int ic = 0; ic < c; ++ic)
      s += se.fc1.w->data[std::size_t(o) * c + ic] * pooled[std::size_t(ic)];
    h1[std::size_t(o)] = std::max(s, 0.0);
  }
  std::vector<double> gate(c);
  for (int o = 0; o < c; ++o) {
    double s = se.fc2.b->data[std::size_t(o)];
    for (int i = 0; i < mid; ++i)
      s += se.fc2.w->data[std::size_t(o) * mid + i] * h1[std::size_t(i)];
    gate[std::size_t(o)] = std::clamp((s + 3.0) / 6.0, 0.0, 1.0);
  }
  std::vector<double> want(x->data.size());
  for (int ic = 0; ic < c; ++ic)
    for (int i = 0; i < hw; ++i)
      want[std::size_t(ic) * hw + i] =
          x->data[std::size_t(ic) * hw + i] * gate[std::size_t(ic)];
  CHECK(ref::max_abs_diff(got->data, want) < 1e-6);
}

TEST_CASE("ghost conv: parameter economics") {
  std::mt19937_64 rng(4);
  ParamSetT<double> g1;
  blocks::GhostConvT<double> same(g1, "g", rng, 64, 64, 1, 1, 3);
  CHECK(g1.learnable_count() == 64u * 64u);  // ratio 1 is a plain conv

  ParamSetT<double> g2;
  blocks::GhostConvT<double> half(g2, "g", rng, 64, 64, 2, 1, 3);
  CHECK(g2.learnable_count() == 64u * 32u + 32u * 9u);  // 2336 vs 4096
  CHECK(g2.learnable_count() < g1.learnable_count());
}

TEST_CASE("ghost conv: output channel arithmetic and the ratio bound") {
  std::mt19937_64 rng(8);
  RunCtxT<double> ctx;
  auto x = make_tensor<double>(Shape{1, 6, 5, 5});
  ref::fill_uniform(x->data, rng);
  for (int out : {1, 7, 64})
    for (int s : {1, 2, 3}) {
      if (s > out) continue;
      ParamSetT<double> ps;
      blocks::GhostConvT<double> g(ps, "g", rng, 6, out, s, 1, 3);
      CHECK(g.forward(ctx, x)->shape.c == out);
    }
  ParamSetT<double> ps;
  CHECK_THROWS(blocks::GhostConvT<double>(ps, "bad", rng, 6, 1, 2, 1, 3));
}

TEST_CASE("ghost conv matches the gather-and-transform reference") {
  std::mt19937_64 rng(12);
  RunCtxT<double> ctx;
  for (int out : {7, 12}) {
    ParamSetT<double> ps;
    blocks::GhostConvT<double> g(ps, "g", rng, 4, out, 3, 1, 3);
    auto x = make_tensor<double>(Shape{1, 4, 6, 6});
    ref::fill_uniform(x->data, rng);
    auto got = g.forward(ctx, x);
    auto want = ghost_ref(g, x->data, 4, 6, 6);
    CHECK(ref::max_abs_diff(got->data, want) < 1e-6);
  }
}

TEST_CASE("spp_flatten: position counts and the hand fixture") {
  CHECK(blocks::spp_positions({1, 3, 6, 8}) == 110);
  CHECK(blocks::spp_positions({1}) == 1);
  CHECK(blocks::spp_positions({2, 2}) == 8);

  RunCtxT<double> ctx;
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[std::size_t(i)] = i;
  auto x = make_tensor<double>(Shape{1, 1, 4, 4}, v);

  auto one = blocks::spp_flatten(ctx, x, {1});
  CHECK(one->shape == Shape{1, 1, 1, 1});
  CHECK(one->data[0] == 15.0);

  auto two = blocks::spp_flatten(ctx, x, {1, 2});
  CHECK(two->shape == Shape{1, 1, 5, 1});
  CHECK(two->data == std::vector<double>{15, 5, 7, 13, 15});

}

TEST_CASE("spp_flatten rejects scales larger than the grid") {
  RunCtxT<double> ctx;
  auto x = make_tensor<double>(Shape{1, 2, 4, 4});
  CHECK_THROWS_WITH_AS(blocks::spp_flatten(ctx, x, {1, 5}),
                       doctest::Contains("scale 5"), std::runtime_error);
  auto big = make_tensor<double>(Shape{1, 2, 8, 8});
  CHECK(blocks::spp_flatten(ctx, big, {1, 3, 6, 8})->shape.h == 110);
}

TEST_CASE("inverted residual: skip rule and stride geometry") {
  std::mt19937_64 rng(5);
  RunCtxT<double> ctx;

  ParamSetT<double> ps;
  blocks::InvertedResidualT<double> b(ps, "b", rng, 6, 18, 6, 3, 1, false,
                                      Act::Relu);
  REQUIRE(b.skip);
  for (auto& v : b.project.conv.w->data) v = 0.0;  // zero the projection
  auto x = make_tensor<double>(Shape{1, 6, 7, 7});
  ref::fill_uniform(x->data, rng);
  auto y = b.forward(ctx, x);
  CHECK(ref::max_abs_diff(y->data, x->data) < 1e-12);  // pure skip

  ParamSetT<double> ps2;
  blocks::InvertedResidualT<double> s2(ps2, "s", rng, 6, 18, 10, 5, 2, true,
                                       Act::HardSwish);
  CHECK_FALSE(s2.skip);
  auto x2 = make_tensor<double>(Shape{1, 6, 8, 8});
  ref::fill_uniform(x2->data, rng);
  CHECK(s2.forward(ctx, x2)->shape == Shape{1, 10, 4, 4});
}

TEST_CASE("inverted residual matches a composed reference") {
  std::mt19937_64 rng(5);
  ParamSetT<double> ps;
  const int in = 4, ex = 10, out = 4, h = 6, w = 8;
  blocks::InvertedResidualT<double> b(ps, "b", rng, in, ex, out, 3, 1, true,
                                      Act::HardSwish);
  scramble_bn(b.expand.bn, rng);
  scramble_bn(b.dw.bn, rng);
  scramble_bn(b.project.bn, rng);
  auto x = make_tensor<double>(Shape{1, in, h, w});
  ref::fill_uniform(x->data, rng);

  RunCtxT<double> ctx;
  auto got = b.forward(ctx, x);

  auto t = conv_ref(b.expand.conv, x->data, in, h, w);
  bn_eval(t, ex, h * w, b.expand.bn);
  apply_act_ref(t, Act::HardSwish);
  t = conv_ref(b.dw.conv, t, ex, h, w);
  bn_eval(t, ex, h * w, b.dw.bn);
  apply_act_ref(t, Act::HardSwish);
  {  // squeeze-excitation stage
    const int mid = b.se.fc1.w->shape.n;
    std::vector<double> pooled(ex);
    for (int c = 0; c < ex; ++c) {
      double s = 0;
      for (int i = 0; i < h * w; ++i) s += t[std::size_t(c) * h * w + i];
      pooled[std::size_t(c)] = s / (h * w);
    }
    std::vector<double> h1(static_cast<std::size_t>(mid));
    for (int o = 0; o < mid; ++o) {
      double s = b.se.fc1.b->data[std::size_t(o)];
      for (int c = 0; c < ex; ++c)
        s += b.se.fc1.w->data[std::size_t(o) * ex + c] * pooled[std::size_t(c)];
      h1[std::size_t(o)] = std::max(s, 0.0);
    }
    for (int c = 0; c < ex; ++c) {
      double s = b.se.fc2.b->data[std::size_t(c)];
      for (int i = 0; i < mid; ++i)
        s += b.se.fc2.w->data[std::size_t(c) * mid + i] * h1[std::size_t(i)];
      const double gate = std::clamp((s + 3.0) / 6.0, 0.0, 1.0);
      for (int i = 0; i < h * w; ++i) t[std::size_t(c) * h * w + i] *= gate;
    }
  }
  t = conv_ref(b.project.conv, t, ex, h, w);
  bn_eval(t, out, h * w, b.project.bn);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += x->data[i];  // skip
  CHECK(ref::max_abs_diff(got->data, t) < 1e-6);
}
