#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "canseg/gradcheck.hpp"
#include "canseg/ops.hpp"
#include "canseg/threading.hpp"
#include "ref_impls.hpp"

using namespace canseg;

namespace {

template <typename T>
TensorPtrT<T> rand_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0,
                          double hi = 1.0) {
  auto t = make_tensor<T>(s);
  ref::fill_uniform(t->data, rng, lo, hi);
  return t;
}

std::vector<double> to_double(const std::vector<float>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("conv2d identity kernel passes the input through") {
  RunCtxT<double> ctx;
  std::vector<double> v(9);
  for (int i = 0; i < 9; ++i) v[std::size_t(i)] = i + 1;
  auto x = make_tensor<double>(Shape{1, 1, 3, 3}, v);
  auto w = make_tensor<double>(Shape{1, 1, 1, 1}, std::vector<double>{1.0});
  auto y = ops::conv2d<double>(ctx, x, w, nullptr, {1, 0, 1});
  CHECK(y->shape == Shape{1, 1, 3, 3});
  CHECK(y->data == v);
}

TEST_CASE("conv2d all-ones 3x3 kernel sums the window") {
  RunCtxT<double> ctx;
  auto x = make_tensor<double>(Shape{1, 1, 3, 3}, std::vector<double>(9, 1.0));
  auto w = make_tensor<double>(Shape{1, 1, 3, 3}, std::vector<double>(9, 1.0));
  auto y = ops::conv2d<double>(ctx, x, w, nullptr, {1, 0, 1});
  CHECK(y->shape == Shape{1, 1, 1, 1});
  CHECK(y->data[0] == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("conv2d rejects mismatched shapes and bad groups") {
  RunCtxT<double> ctx;
  auto x = make_tensor<double>(Shape{1, 3, 4, 4});
  auto w_bad = make_tensor<double>(Shape{2, 2, 3, 3});  // wants Cin 2, got 3
  CHECK_THROWS(ops::conv2d<double>(ctx, x, w_bad, nullptr, {1, 1, 1}));
  auto w = make_tensor<double>(Shape{2, 3, 3, 3});
  CHECK_THROWS(ops::conv2d<double>(ctx, x, w, nullptr, {1, 1, 2}));  // 3 % 2 != 0
}

TEST_CASE("conv2d matches the nested-loop reference on 120 random cases") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dn(1, 2), dc(1, 4), dhw(1, 8);
  int cases = 0;
  double worst = 0.0;
  while (cases < 120) {
    const int n = dn(rng), cin = dc(rng), h = dhw(rng), w = dhw(rng);
    const int k = std::vector<int>{1, 3, 5}[rng() % 3];
    const int stride = 1 + int(rng() % 2);
    const int pad = int(rng() % 3);
    const bool grouped = (rng() % 3 == 0);
    const int groups = grouped ? cin : 1;
    int cout = dc(rng);
    if (grouped) cout = cin * (1 + int(rng() % 2));  // depthwise-style
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    ++cases;

    RunCtxT<double> ctx;
    auto x = rand_tensor<double>({n, cin, h, w}, rng);
    auto wt = rand_tensor<double>({cout, cin / groups, k, k}, rng);
    const bool bias = rng() % 2 == 0;
    auto b = bias ? rand_tensor<double>({1, cout, 1, 1}, rng) : nullptr;
    auto y = ops::conv2d(ctx, x, wt, b, {stride, pad, groups});

    auto want = ref::conv2d(x->data, n, cin, h, w, wt->data, cout, k, k,
                            b ? &b->data : nullptr, stride, pad, groups);
    REQUIRE(y->data.size() == want.size());
    worst = std::max(worst, ref::max_abs_diff(y->data, want));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("float-lane conv2d tracks the double reference") {
  // the float path goes through the dispatched gemm kernels; compare to the
  // double oracle with a tolerance that allows single-precision accumulation
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (int cases = 0; cases < 40; ++cases) {
    const int cin = 1 + int(rng() % 4), cout = 1 + int(rng() % 4);
    const int h = 3 + int(rng() % 6), w = 3 + int(rng() % 6);
    const int k = (rng() % 2) ? 3 : 1;
    RunCtx ctx;
    auto x = rand_tensor<float>({1, cin, h, w}, rng);
    auto wt = rand_tensor<float>({cout, cin, k, k}, rng);
    auto y = ops::conv2d<float>(ctx, x, wt, nullptr, {1, k / 2, 1});
    auto want = ref::conv2d(to_double(x->data), 1, cin, h, w,
                            to_double(wt->data), cout, k, k, nullptr, 1, k / 2, 1);
    worst = std::max(worst, ref::max_abs_diff(y->data, want));
  }
  CHECK(worst < 2e-5);
}

TEST_CASE("matmul fixtures: identity and dot product") {
  RunCtxT<double> ctx;
  auto i2 = make_tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1});
  auto m = make_tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  auto y = ops::matmul(ctx, i2, m, false);
  CHECK(y->data == std::vector<double>{1, 2, 3, 4});

  auto a = make_tensor<double>(Shape{1, 1, 1, 2}, std::vector<double>{1, 2});
  auto b = make_tensor<double>(Shape{1, 1, 2, 1}, std::vector<double>{3, 4});
  auto dot = ops::matmul(ctx, a, b, false);
  CHECK(dot->data[0] == doctest::Approx(11.0).epsilon(1e-12));

  auto bad = make_tensor<double>(Shape{1, 1, 3, 1});
  CHECK_THROWS(ops::matmul(ctx, a, bad, false));
}

TEST_CASE("matmul matches the triple-loop reference on 100 random cases") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int cases = 0; cases < 100; ++cases) {
    const int p = 1 + int(rng() % 7), q = 1 + int(rng() % 7),
              r = 1 + int(rng() % 7);
    RunCtxT<double> ctx;
    auto a = rand_tensor<double>({1, 1, p, q}, rng);
    auto want_b = rand_tensor<double>({1, 1, q, r}, rng);
    auto y = ops::matmul(ctx, a, want_b, false);
    auto want = ref::matmul(a->data, want_b->data, p, q, r);
    worst = std::max(worst, ref::max_abs_diff(y->data, want));

    // trans_b lane: b stored as [r, q], logically b^T
    auto bt = make_tensor<double>(Shape{1, 1, r, q});
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < r; ++j)
        bt->data[std::size_t(j) * q + i] = want_b->data[std::size_t(i) * r + j];
    auto y2 = ops::matmul(ctx, a, bt, true);
    worst = std::max(worst, ref::max_abs_diff(y2->data, want));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("softmax fixtures") {
  RunCtxT<double> ctx;
  auto even = ops::softmax_rows(
      ctx, make_tensor<double>(Shape{1, 1, 1, 2}, std::vector<double>{0, 0}));
  CHECK(even->data[0] == doctest::Approx(0.5).epsilon(1e-12));

  auto big = ops::softmax_rows(
      ctx, make_tensor<double>(Shape{1, 1, 1, 2}, std::vector<double>{1000, 0}));
  CHECK(big->data[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(big->data[1] == doctest::Approx(0.0).epsilon(1e-6));

  auto y = ops::softmax_rows(
      ctx, make_tensor<double>(Shape{1, 1, 1, 3}, std::vector<double>{1, 2, 3}));
  const auto want = ref::softmax_row({1, 2, 3});
  CHECK(ref::max_abs_diff(y->data, want) < 1e-9);
  CHECK(y->data[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(y->data[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(y->data[2] == doctest::Approx(0.66524).epsilon(1e-4));
}

TEST_CASE("softmax rows sum to one and shrug off constant shifts") {
  std::mt19937_64 rng(3);
  for (int cases = 0; cases < 50; ++cases) {
    const int r = 1 + int(rng() % 4), c = 1 + int(rng() % 9);
    RunCtxT<double> ctx;
    auto x = rand_tensor<double>({1, 1, r, c}, rng, -5.0, 5.0);
    auto y = ops::softmax_rows(ctx, x);
    for (int i = 0; i < r; ++i) {
      double s = 0;
      for (int j = 0; j < c; ++j) s += y->data[std::size_t(i) * c + j];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
    auto shifted = make_tensor<double>(x->shape, x->data);
    const double offs = 7.25;
    for (auto& v : shifted->data) v += offs;
    auto y2 = ops::softmax_rows(ctx, shifted);
    CHECK(ref::max_abs_diff(y->data, y2->data) < 1e-6);
  }
}

TEST_CASE("adaptive max pool fixtures") {
  RunCtxT<double> ctx;
  std::vector<double> v16(16);
  for (int i = 0; i < 16; ++i) v16[std::size_t(i)] = i;
  auto x = make_tensor<double>(Shape{1, 1, 4, 4}, v16);
  auto y = ops::adaptive_max_pool2d(ctx, x, 2, 2);
  CHECK(y->data == std::vector<double>{5, 7, 13, 15});

  auto same = ops::adaptive_max_pool2d(ctx, x, 4, 4);
  CHECK(same->data == v16);  // identity binning must be exact

  std::vector<double> v25(25);
  for (int i = 0; i < 25; ++i) v25[std::size_t(i)] = i;
  auto g = ops::adaptive_max_pool2d(
      ctx, make_tensor<double>(Shape{1, 1, 5, 5}, v25), 1, 1);
  CHECK(g->data == std::vector<double>{24});

  CHECK_THROWS(ops::adaptive_max_pool2d(ctx, x, 0, 2));
  CHECK_THROWS(ops::adaptive_max_pool2d(ctx, x, 5, 2));  // output > input
}

TEST_CASE("adaptive max pool matches the window-max reference on 100 cases") {
  std::mt19937_64 rng(13);
  for (int cases = 0; cases < 100; ++cases) {
    const int c = 1 + int(rng() % 3), h = 1 + int(rng() % 10),
              w = 1 + int(rng() % 10);
    const int oh = 1 + int(rng() % h), ow = 1 + int(rng() % w);
    RunCtxT<double> ctx;
    auto x = rand_tensor<double>({1, c, h, w}, rng);
    auto y = ops::adaptive_max_pool2d(ctx, x, oh, ow);
    auto want = ref::adaptive_max_pool(x->data, 1, c, h, w, oh, ow);
    CHECK(y->data == want);  // pure max, no arithmetic: exact
  }
}

TEST_CASE("bilinear resize fixtures") {
  RunCtxT<double> ctx;
  auto flat = make_tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>(4, 3.5));
  auto up = ops::bilinear_resize(ctx, flat, 4, 4, false);
  for (double v : up->data) CHECK(v == doctest::Approx(3.5).epsilon(1e-12));

  auto x = make_tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>{0, 1, 2, 3});
  auto same = ops::bilinear_resize(ctx, x, 2, 2, false);
  CHECK(same->data == x->data);

  auto y = ops::bilinear_resize(ctx, x, 4, 4, false);
  auto want = ref::bilinear_resize(x->data, 1, 1, 2, 2, 4, 4, false);
  CHECK(ref::max_abs_diff(y->data, want) < 1e-6);
}

TEST_CASE("bilinear resize matches the per-pixel reference on 100 cases") {
  std::mt19937_64 rng(17);
  double worst = 0.0;
  for (int cases = 0; cases < 100; ++cases) {
    const int c = 1 + int(rng() % 3), h = 1 + int(rng() % 8),
              w = 1 + int(rng() % 8);
    const int oh = 1 + int(rng() % 12), ow = 1 + int(rng() % 12);
    const bool corners = rng() % 2 == 0;
    RunCtxT<double> ctx;
    auto x = rand_tensor<double>({1, c, h, w}, rng);
    auto y = ops::bilinear_resize(ctx, x, oh, ow, corners);
    auto want = ref::bilinear_resize(x->data, 1, c, h, w, oh, ow, corners);
    worst = std::max(worst, ref::max_abs_diff(y->data, want));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("batch norm: inference fixtures") {
  RunCtxT<double> ctx;  // training = false
  std::mt19937_64 rng(5);
  auto x = rand_tensor<double>({2, 3, 4, 4}, rng);
  auto ones = make_tensor<double>(Shape{1, 3, 1, 1}, std::vector<double>(3, 1.0));
  auto zeros = make_tensor<double>(Shape{1, 3, 1, 1}, std::vector<double>(3, 0.0));
  auto rv = make_tensor<double>(Shape{1, 3, 1, 1}, std::vector<double>(3, 1.0));
  auto y = ops::batch_norm(ctx, x, ones, zeros, zeros, rv, 0.1, 0.0);
  CHECK(ref::max_abs_diff(y->data, x->data) < 1e-6);

  // hand case: x=[2,4], gamma=3, beta=1, mean=3, var=1, eps=0 -> [-2, 4]
  auto hx = make_tensor<double>(Shape{1, 1, 1, 2}, std::vector<double>{2, 4});
  auto g3 = make_tensor<double>(Shape{1, 1, 1, 1}, std::vector<double>{3});
  auto b1 = make_tensor<double>(Shape{1, 1, 1, 1}, std::vector<double>{1});
  auto m3 = make_tensor<double>(Shape{1, 1, 1, 1}, std::vector<double>{3});
  auto v1 = make_tensor<double>(Shape{1, 1, 1, 1}, std::vector<double>{1});
  auto hy = ops::batch_norm(ctx, hx, g3, b1, m3, v1, 0.1, 0.0);
  CHECK(hy->data[0] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(hy->data[1] == doctest::Approx(4.0).epsilon(1e-12));

  CHECK_THROWS(ops::batch_norm(ctx, hx, g3, b1, m3, v1, 0.1, -1e-5));
}

TEST_CASE("batch norm: training mode lands on beta/gamma stats and updates buffers") {
  RunCtxT<double> ctx;
  ctx.training = true;
  std::mt19937_64 rng(9);
  auto x = rand_tensor<double>({4, 2, 8, 8}, rng, -2.0, 3.0);
  auto gamma = make_tensor<double>(Shape{1, 2, 1, 1}, std::vector<double>{1.5, 0.5});
  auto beta = make_tensor<double>(Shape{1, 2, 1, 1}, std::vector<double>{-1.0, 2.0});
  auto rmean = make_tensor<double>(Shape{1, 2, 1, 1}, std::vector<double>(2, 0.0));
  auto rvar = make_tensor<double>(Shape{1, 2, 1, 1}, std::vector<double>(2, 1.0));
  auto y = ops::batch_norm(ctx, x, gamma, beta, rmean, rvar, 0.1, 1e-5);

  const std::size_t hw = 64, cnt = 4 * hw;
  for (int c = 0; c < 2; ++c) {
    double mean = 0, var = 0;
    for (int n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < hw; ++i)
        mean += y->data[(std::size_t(n) * 2 + c) * hw + i];
    mean /= double(cnt);
    for (int n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = y->data[(std::size_t(n) * 2 + c) * hw + i] - mean;
        var += d * d;
      }
    var /= double(cnt);
    CHECK(mean == doctest::Approx(beta->data[std::size_t(c)]).epsilon(1e-4));
    CHECK(var == doctest::Approx(gamma->data[std::size_t(c)] *
                                 gamma->data[std::size_t(c)]).epsilon(1e-3));
    // running buffers moved toward the batch stats with momentum 0.1
    CHECK(rmean->data[std::size_t(c)] != 0.0);
    CHECK(rvar->data[std::size_t(c)] != 1.0);
  }
}

TEST_CASE("activation fixtures") {
  RunCtxT<double> ctx;
  auto x = make_tensor<double>(Shape{1, 1, 1, 6},
                               std::vector<double>{-1, 2, -3, 3, 0, 1.5});
  auto r = ops::relu(ctx, x);
  CHECK(r->data[0] == 0.0);
  CHECK(r->data[1] == 2.0);
  auto hs = ops::hard_sigmoid(ctx, x);
  CHECK(hs->data[2] == 0.0);
  CHECK(hs->data[3] == 1.0);
  CHECK(hs->data[4] == doctest::Approx(0.5).epsilon(1e-12));
  auto hw = ops::hard_swish(ctx, x);
  CHECK(hw->data[5] == doctest::Approx(1.125).epsilon(1e-12));
  auto sg = ops::sigmoid(ctx, x);
  CHECK(sg->data[1] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
}

TEST_CASE("backward: sum gives all-ones gradient") {
  GraphT<double> graph;
  RunCtxT<double> ctx{&graph, false, nullptr};
  auto x = make_tensor<double>(Shape{1, 1, 2, 3},
                               std::vector<double>{1, -2, 3, 4, -5, 6});
  x->requires_grad = true;
  auto loss = ops::weighted_sum(ctx, x, std::vector<double>(6, 1.0));
  graph.backward(loss);
  CHECK(x->grad == std::vector<double>(6, 1.0));
}

TEST_CASE("backward: relu masks the gradient") {
  GraphT<double> graph;
  RunCtxT<double> ctx{&graph, false, nullptr};
  auto x = make_tensor<double>(Shape{1, 1, 1, 2}, std::vector<double>{-1, 2});
  x->requires_grad = true;
  auto y = ops::relu(ctx, x);
  auto loss = ops::weighted_sum(ctx, y, std::vector<double>(2, 1.0));
  graph.backward(loss);
  CHECK(x->grad == std::vector<double>{0.0, 1.0});
}

TEST_CASE("backward: conv weight gradient agrees with central differences") {
  std::mt19937_64 rng(23);
  ParamSetT<double> ps;
  auto w = ps.add("w", Shape{2, 1, 3, 3}, true);
  ref::fill_uniform(w->data, rng);
  auto x = make_tensor<double>(Shape{1, 1, 3, 3});
  ref::fill_uniform(x->data, rng);
  std::vector<double> proj(2 * 3 * 3);
  ref::fill_uniform(proj, rng);

  auto build = [&](RunCtxT<double>& ctx) {
    auto y = ops::conv2d<double>(ctx, x, ps.find("w"), nullptr, {1, 1, 1});
    return ops::weighted_sum(ctx, y, proj);
  };
  std::mt19937_64 pick(1);
  const double err = gradcheck_max_rel_err(ps, build, 8, 1e-5, pick);
  CHECK(err < 1e-4);
}

TEST_CASE("grad_check harness: quadratic loss is exact") {
  std::mt19937_64 rng(31);
  ParamSetT<double> ps;
  auto x = ps.add("x", Shape{1, 1, 2, 4}, true);
  // O(1) magnitudes: the 1e-10 bound only makes sense away from zero, where
  // finite-difference roundoff would dominate the tiny true gradient
  std::uniform_real_distribution<double> d(0.5, 1.0);
  for (auto& v : x->data) v = d(rng) * (rng() % 2 ? 1.0 : -1.0);

  auto build = [&](RunCtxT<double>& ctx) {
    auto sq = ops::mul(ctx, ps.find("x"), ps.find("x"));
    return ops::weighted_sum(ctx, sq, std::vector<double>(8, 0.5));
  };
  std::mt19937_64 pick(2);
  CHECK(gradcheck_max_rel_err(ps, build, 8, 1e-5, pick) < 1e-10);
}

TEST_CASE("grad_check harness: sum of softmax is flat") {
  std::mt19937_64 rng(37);
  ParamSetT<double> ps;
  auto x = ps.add("x", Shape{1, 1, 3, 5}, true);
  ref::fill_uniform(x->data, rng);
  auto build = [&](RunCtxT<double>& ctx) {
    auto y = ops::softmax_rows(ctx, ps.find("x"));
    return ops::weighted_sum(ctx, y, std::vector<double>(15, 1.0));
  };
  std::mt19937_64 pick(3);
  CHECK(gradcheck_max_rel_err(ps, build, 15, 1e-5, pick) < 1e-6);
}

TEST_CASE("grad_check harness: two-conv net under the mining loss") {
  std::mt19937_64 rng(41);
  ParamSetT<double> ps;
  blocks::Conv2dLayerT<double> c1(ps, "c1", rng, 3, 6, 3, 1, 1, true);
  blocks::Conv2dLayerT<double> c2(ps, "c2", rng, 6, 4, 1, 1, 1, true);
  auto x = make_tensor<double>(Shape{1, 3, 16, 16});
  ref::fill_uniform(x->data, rng, 0.0, 1.0);
  Labels labels(1, 16, 16);
  for (auto& v : labels.v) v = std::int32_t(rng() % 5);  // 4 = ignore below
  for (auto& v : labels.v)
    if (v == 4) v = 255;

  auto build = [&](RunCtxT<double>& ctx) {
    auto h = ops::relu(ctx, c1.forward(ctx, x));
    auto logits = c2.forward(ctx, h);
    return ops::ohem_softmax_ce(ctx, logits, labels, 0.7, 32, 255);
  };
  std::mt19937_64 pick(4);
  CHECK(gradcheck_max_rel_err(ps, build, 6, 1e-5, pick) < 1e-4);
}

TEST_CASE("forward passes are bit-deterministic, including across thread counts") {
  std::mt19937_64 rng(43);
  auto x = rand_tensor<float>({2, 3, 16, 16}, rng);
  auto w = rand_tensor<float>({8, 3, 3, 3}, rng);
  RunCtx ctx;
  auto once = ops::conv2d<double>(ctx, x, w, nullptr, {1, 1, 1});
  auto twice = ops::conv2d<double>(ctx, x, w, nullptr, {1, 1, 1});
  CHECK(once->data == twice->data);

  const int before = thread_count();
  set_thread_count(4);
  auto threaded = ops::conv2d<double>(ctx, x, w, nullptr, {1, 1, 1});
  auto resized = ops::bilinear_resize(ctx, threaded, 31, 33, false);
  set_thread_count(1);
  auto serial = ops::conv2d<double>(ctx, x, w, nullptr, {1, 1, 1});
  auto serial_resized = ops::bilinear_resize(ctx, serial, 31, 33, false);
  set_thread_count(before);
  CHECK(threaded->data == serial->data);
  CHECK(resized->data == serial_resized->data);
}
