#pragma once

// Data-parallel inner loops behind the tensor ops. Every kernel exists as a
// portable scalar reference; hot float kernels additionally have AVX2+FMA
// variants selected at runtime (see dispatch.cpp). The double lane always
// runs scalar — it exists for gradient checking, not speed.

#include <cstddef>
#include <string>

namespace canseg::kernels {

// ---------------------------------------------------------------------------
// Scalar reference kernels (templated; the only lane for double)
// ---------------------------------------------------------------------------

// C[M x N] (+)= A[M x K] * B[K x N], all row-major contiguous.
template <typename T>
void gemm_nn_ref(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                 std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M x N] (+)= A[M x K] * B[N x K]^T  (dot-product form, shared inner dim K).
template <typename T>
void gemm_nt_ref(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                 std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      if (accumulate)
        c[i * n + j] += acc;
      else
        c[i * n + j] = acc;
    }
  }
}

// C[M x N] (+)= A[K x M]^T * B[K x N].
template <typename T>
void gemm_tn_ref(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                 std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[p * m + i];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void add_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

// y += alpha * x
template <typename T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_ref(T alpha, T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

template <typename T>
void relu_ref(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

// dx += dy where x > 0
template <typename T>
void relu_bwd_ref(const T* x, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) dx[i] += dy[i];
  }
}

template <typename T>
T hard_sigmoid_val(T t) {
  T v = (t + T(3)) / T(6);
  if (v < T(0)) v = T(0);
  if (v > T(1)) v = T(1);
  return v;
}

template <typename T>
void hard_sigmoid_ref(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = hard_sigmoid_val(x[i]);
}

template <typename T>
void hard_swish_ref(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * hard_sigmoid_val(x[i]);
}

// Adds bias[r] to each row r of a [rows x cols] block.
template <typename T>
void bias_add_rows_ref(const T* bias, T* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T bv = bias[r];
    T* row = x + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += bv;
  }
}

// Momentum SGD with L2 folded into the gradient:
//   g' = g + wd * p;  v = momentum * v + g';  p -= lr * v
template <typename T>
void sgd_update_ref(T* p, T* v, const T* g, T lr, T momentum, T wd,
                    std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T gi = g[i] + wd * p[i];
    v[i] = momentum * v[i] + gi;
    p[i] -= lr * v[i];
  }
}

// ---------------------------------------------------------------------------
// Runtime-dispatched float lane
// ---------------------------------------------------------------------------

enum class Backend { Scalar, Avx2 };

struct Dispatch {
  void (*gemm_nn)(const float*, const float*, float*, std::size_t, std::size_t,
                  std::size_t, bool);
  void (*gemm_nt)(const float*, const float*, float*, std::size_t, std::size_t,
                  std::size_t, bool);
  void (*gemm_tn)(const float*, const float*, float*, std::size_t, std::size_t,
                  std::size_t, bool);
  void (*add)(const float*, const float*, float*, std::size_t);
  void (*mul)(const float*, const float*, float*, std::size_t);
  void (*axpy)(float, const float*, float*, std::size_t);
  void (*scale)(float, float*, std::size_t);
  void (*relu)(const float*, float*, std::size_t);
  void (*relu_bwd)(const float*, const float*, float*, std::size_t);
  void (*hard_sigmoid)(const float*, float*, std::size_t);
  void (*hard_swish)(const float*, float*, std::size_t);
  void (*bias_add_rows)(const float*, float*, std::size_t, std::size_t);
  void (*sgd_update)(float*, float*, const float*, float, float, float,
                     std::size_t);
};

// Active table. Picked once from CANSEG_KERNEL (scalar|avx2|auto, default
// auto) and CPU support; force_backend overrides for tests.
const Dispatch& active();
Backend active_backend();
void force_backend(Backend b);
bool avx2_supported();
std::string backend_name(Backend b);

// The scalar table is always reachable, for equivalence tests.
const Dispatch& scalar_table();
#if defined(__x86_64__)
const Dispatch& avx2_table();
#endif

}  // namespace canseg::kernels
