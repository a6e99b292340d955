#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "canseg/kernels.hpp"
#include "ref_impls.hpp"

using namespace canseg;

namespace {

// Sizes straddle the 8- and 16-lane vector bodies so the tail loops run too.
const std::vector<std::size_t> kLens{1, 3, 7, 8, 9, 15, 16, 17, 31, 64, 100};

std::vector<float> randvec(std::size_t n, std::mt19937_64& rng) {
  std::vector<float> v(n);
  ref::fill_uniform(v, rng);
  return v;
}

}  // namespace

#if defined(__x86_64__)

TEST_CASE("gemm variants: vector table matches scalar within rounding") {
  if (!kernels::avx2_supported()) return;
  const auto& s = kernels::scalar_table();
  const auto& v = kernels::avx2_table();
  std::mt19937_64 rng(19);
  for (int cases = 0; cases < 60; ++cases) {
    const std::size_t m = 1 + rng() % 7, k = 1 + rng() % 48, n = 1 + rng() % 33;
    auto a = randvec(m * k, rng);
    auto b = randvec(k * n, rng);
    const bool acc = rng() % 2 == 0;
    auto c0 = randvec(m * n, rng);
    auto c1 = c0;

    s.gemm_nn(a.data(), b.data(), c0.data(), m, k, n, acc);
    v.gemm_nn(a.data(), b.data(), c1.data(), m, k, n, acc);
    CHECK(ref::max_abs_diff(c0, c1) < 2e-5);

    auto bt = randvec(n * k, rng);
    c0 = c1 = randvec(m * n, rng);
    s.gemm_nt(a.data(), bt.data(), c0.data(), m, k, n, acc);
    v.gemm_nt(a.data(), bt.data(), c1.data(), m, k, n, acc);
    CHECK(ref::max_abs_diff(c0, c1) < 2e-5);

    auto at = randvec(k * m, rng);
    c0 = c1 = randvec(m * n, rng);
    s.gemm_tn(at.data(), b.data(), c0.data(), m, k, n, acc);
    v.gemm_tn(at.data(), b.data(), c1.data(), m, k, n, acc);
    CHECK(ref::max_abs_diff(c0, c1) < 2e-5);
  }
}

TEST_CASE("elementwise kernels are bitwise identical across backends") {
  if (!kernels::avx2_supported()) return;
  const auto& s = kernels::scalar_table();
  const auto& v = kernels::avx2_table();
  std::mt19937_64 rng(23);
  for (std::size_t n : kLens) {
    auto a = randvec(n, rng), b = randvec(n, rng);
    std::vector<float> o0(n), o1(n);

    s.add(a.data(), b.data(), o0.data(), n);
    v.add(a.data(), b.data(), o1.data(), n);
    CHECK(o0 == o1);
    s.mul(a.data(), b.data(), o0.data(), n);
    v.mul(a.data(), b.data(), o1.data(), n);
    CHECK(o0 == o1);
    s.relu(a.data(), o0.data(), n);
    v.relu(a.data(), o1.data(), n);
    CHECK(o0 == o1);
    s.hard_sigmoid(a.data(), o0.data(), n);
    v.hard_sigmoid(a.data(), o1.data(), n);
    CHECK(o0 == o1);
    s.hard_swish(a.data(), o0.data(), n);
    v.hard_swish(a.data(), o1.data(), n);
    CHECK(o0 == o1);

    auto y0 = b, y1 = b;
    s.axpy(0.37f, a.data(), y0.data(), n);
    v.axpy(0.37f, a.data(), y1.data(), n);
    CHECK(y0 == y1);
    y0 = y1 = a;
    s.scale(-1.21f, y0.data(), n);
    v.scale(-1.21f, y1.data(), n);
    CHECK(y0 == y1);

    auto dx0 = randvec(n, rng);
    auto dx1 = dx0;
    s.relu_bwd(a.data(), b.data(), dx0.data(), n);
    v.relu_bwd(a.data(), b.data(), dx1.data(), n);
    CHECK(dx0 == dx1);
  }

  // bias add over a rows x cols block with a ragged column count
  auto bias = randvec(5, rng);
  auto x0 = randvec(5 * 13, rng);
  auto x1 = x0;
  s.bias_add_rows(bias.data(), x0.data(), 5, 13);
  v.bias_add_rows(bias.data(), x1.data(), 5, 13);
  CHECK(x0 == x1);

  auto p0 = randvec(27, rng);
  auto p1 = p0;
  auto v0 = randvec(27, rng);
  auto v1 = v0;
  auto g = randvec(27, rng);
  s.sgd_update(p0.data(), v0.data(), g.data(), 0.05f, 0.9f, 1e-4f, 27);
  v.sgd_update(p1.data(), v1.data(), g.data(), 0.05f, 0.9f, 1e-4f, 27);
  CHECK(p0 == p1);
  CHECK(v0 == v1);
}

#endif  // __x86_64__

TEST_CASE("sgd kernel follows the hand-unrolled momentum recurrence") {
  float p = 1.0f, v = 0.0f;
  const float g = 0.5f;
  kernels::sgd_update_ref(&p, &v, &g, 0.1f, 0.9f, 0.0f, 1);
  CHECK(v == doctest::Approx(0.5f));
  CHECK(p == doctest::Approx(0.95f));
  kernels::sgd_update_ref(&p, &v, &g, 0.1f, 0.9f, 0.0f, 1);
  CHECK(v == doctest::Approx(0.95f));   // 0.9*0.5 + 0.5
  CHECK(p == doctest::Approx(0.855f));  // 0.95 - 0.1*0.95
}

TEST_CASE("backend forcing round-trips and names resolve") {
  const kernels::Backend before = kernels::active_backend();
  kernels::force_backend(kernels::Backend::Scalar);
  CHECK(kernels::active_backend() == kernels::Backend::Scalar);
  CHECK(kernels::backend_name(kernels::Backend::Scalar) == "scalar");
  if (kernels::avx2_supported()) {
    kernels::force_backend(kernels::Backend::Avx2);
    CHECK(kernels::active_backend() == kernels::Backend::Avx2);
    CHECK(kernels::backend_name(kernels::Backend::Avx2) == "avx2");
  }
  kernels::force_backend(before);
}
