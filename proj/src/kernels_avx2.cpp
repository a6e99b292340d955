// AVX2+FMA float kernels. This TU is compiled with -mavx2 -mfma on x86_64
// and must only be entered after a runtime CPU check (see dispatch.cpp).
//
// Equivalence contract, exercised in tests:
//  * elementwise kernels use the same mul/add/div sequence as the scalar
//    reference (no FMA contraction) and are bitwise identical to it;
//  * gemm kernels use FMA and a different summation order, so they match
//    the reference only to rounding tolerance.

#if defined(__x86_64__)

#include <immintrin.h>

#include "canseg/kernels.hpp"

namespace canseg::kernels {

namespace {

void v_gemm_nn(const float* a, const float* b, float* c, std::size_t m,
               std::size_t k, std::size_t n, bool acc) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    if (!acc) {
      std::size_t j = 0;
      const __m256 z = _mm256_setzero_ps();
      for (; j + 8 <= n; j += 8) _mm256_storeu_ps(crow + j, z);
      for (; j < n; ++j) crow[j] = 0.0f;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const float av = a[i * k + p];
      if (av == 0.0f) continue;
      const __m256 va = _mm256_set1_ps(av);
      const float* brow = b + p * n;
      std::size_t j = 0;
      for (; j + 16 <= n; j += 16) {
        __m256 c0 = _mm256_loadu_ps(crow + j);
        __m256 c1 = _mm256_loadu_ps(crow + j + 8);
        c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), c0);
        c1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j + 8), c1);
        _mm256_storeu_ps(crow + j, c0);
        _mm256_storeu_ps(crow + j + 8, c1);
      }
      for (; j + 8 <= n; j += 8) {
        __m256 c0 = _mm256_loadu_ps(crow + j);
        c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), c0);
        _mm256_storeu_ps(crow + j, c0);
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

float hsum8(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehl_ps(lo, lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_shuffle_ps(lo, lo, 0x1);
  lo = _mm_add_ss(lo, sh);
  return _mm_cvtss_f32(lo);
}

void v_gemm_nt(const float* a, const float* b, float* c, std::size_t m,
               std::size_t k, std::size_t n, bool acc) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      __m256 vacc = _mm256_setzero_ps();
      std::size_t p = 0;
      for (; p + 8 <= k; p += 8) {
        vacc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p),
                               _mm256_loadu_ps(brow + p), vacc);
      }
      float sum = hsum8(vacc);
      for (; p < k; ++p) sum += arow[p] * brow[p];
      if (acc)
        c[i * n + j] += sum;
      else
        c[i * n + j] = sum;
    }
  }
}

void v_gemm_tn(const float* a, const float* b, float* c, std::size_t m,
               std::size_t k, std::size_t n, bool acc) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    if (!acc) {
      std::size_t j = 0;
      const __m256 z = _mm256_setzero_ps();
      for (; j + 8 <= n; j += 8) _mm256_storeu_ps(crow + j, z);
      for (; j < n; ++j) crow[j] = 0.0f;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const float av = a[p * m + i];
      if (av == 0.0f) continue;
      const __m256 va = _mm256_set1_ps(av);
      const float* brow = b + p * n;
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8) {
        __m256 c0 = _mm256_loadu_ps(crow + j);
        c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), c0);
        _mm256_storeu_ps(crow + j, c0);
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void v_add(const float* a, const float* b, float* o, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(o + i,
                     _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) o[i] = a[i] + b[i];
}

void v_mul(const float* a, const float* b, float* o, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(o + i,
                     _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) o[i] = a[i] * b[i];
}

void v_axpy(float al, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(al);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    // mul+add (not FMA) to match the scalar reference bit for bit
    __m256 t = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), t));
  }
  for (; i < n; ++i) y[i] += al * x[i];
}

void v_scale(float al, float* x, std::size_t n) {
  const __m256 va = _mm256_set1_ps(al);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) x[i] *= al;
}

void v_relu(const float* x, float* y, std::size_t n) {
  const __m256 z = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void v_relu_bwd(const float* x, const float* dy, float* dx, std::size_t n) {
  const __m256 z = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
    const __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
    _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), g));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) dx[i] += dy[i];
  }
}

__m256 hsig8(__m256 v) {
  const __m256 three = _mm256_set1_ps(3.0f);
  const __m256 six = _mm256_set1_ps(6.0f);
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 z = _mm256_setzero_ps();
  // same add/div sequence as the scalar reference
  __m256 t = _mm256_div_ps(_mm256_add_ps(v, three), six);
  t = _mm256_max_ps(t, z);
  return _mm256_min_ps(t, one);
}

void v_hsig(const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, hsig8(_mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] = hard_sigmoid_val(x[i]);
}

void v_hswish(const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    _mm256_storeu_ps(y + i, _mm256_mul_ps(v, hsig8(v)));
  }
  for (; i < n; ++i) y[i] = x[i] * hard_sigmoid_val(x[i]);
}

void v_bias_rows(const float* bias, float* x, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const __m256 vb = _mm256_set1_ps(bias[r]);
    float* row = x + r * cols;
    std::size_t j = 0;
    for (; j + 8 <= cols; j += 8) {
      _mm256_storeu_ps(row + j, _mm256_add_ps(_mm256_loadu_ps(row + j), vb));
    }
    for (; j < cols; ++j) row[j] += bias[r];
  }
}

void v_sgd(float* p, float* v, const float* g, float lr, float mom, float wd,
           std::size_t n) {
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 vmom = _mm256_set1_ps(mom);
  const __m256 vwd = _mm256_set1_ps(wd);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vp = _mm256_loadu_ps(p + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    // g' = g + wd*p ; v = mom*v + g' ; p -= lr*v   (mul+add, no FMA)
    __m256 vg = _mm256_add_ps(_mm256_loadu_ps(g + i), _mm256_mul_ps(vwd, vp));
    vv = _mm256_add_ps(_mm256_mul_ps(vmom, vv), vg);
    vp = _mm256_sub_ps(vp, _mm256_mul_ps(vlr, vv));
    _mm256_storeu_ps(v + i, vv);
    _mm256_storeu_ps(p + i, vp);
  }
  for (; i < n; ++i) {
    const float gi = g[i] + wd * p[i];
    v[i] = mom * v[i] + gi;
    p[i] -= lr * v[i];
  }
}

}  // namespace

const Dispatch& avx2_table() {
  static const Dispatch t{v_gemm_nn, v_gemm_nt,  v_gemm_tn, v_add,
                          v_mul,     v_axpy,     v_scale,   v_relu,
                          v_relu_bwd, v_hsig,    v_hswish,  v_bias_rows,
                          v_sgd};
  return t;
}

}  // namespace canseg::kernels

#endif  // __x86_64__
