#pragma once

// Maps the templated op code onto kernels: float goes through the runtime
// dispatch table (scalar or AVX2), double always uses the scalar references.

#include "canseg/kernels.hpp"

namespace canseg {

template <typename T>
struct Kern;

template <>
struct Kern<float> {
  static void gemm_nn(const float* a, const float* b, float* c, std::size_t m,
                      std::size_t k, std::size_t n, bool acc) {
    kernels::active().gemm_nn(a, b, c, m, k, n, acc);
  }
  static void gemm_nt(const float* a, const float* b, float* c, std::size_t m,
                      std::size_t k, std::size_t n, bool acc) {
    kernels::active().gemm_nt(a, b, c, m, k, n, acc);
  }
  static void gemm_tn(const float* a, const float* b, float* c, std::size_t m,
                      std::size_t k, std::size_t n, bool acc) {
    kernels::active().gemm_tn(a, b, c, m, k, n, acc);
  }
  static void add(const float* a, const float* b, float* o, std::size_t n) {
    kernels::active().add(a, b, o, n);
  }
  static void mul(const float* a, const float* b, float* o, std::size_t n) {
    kernels::active().mul(a, b, o, n);
  }
  static void axpy(float al, const float* x, float* y, std::size_t n) {
    kernels::active().axpy(al, x, y, n);
  }
  static void scale(float al, float* x, std::size_t n) {
    kernels::active().scale(al, x, n);
  }
  static void relu(const float* x, float* y, std::size_t n) {
    kernels::active().relu(x, y, n);
  }
  static void relu_bwd(const float* x, const float* dy, float* dx,
                       std::size_t n) {
    kernels::active().relu_bwd(x, dy, dx, n);
  }
  static void hard_sigmoid(const float* x, float* y, std::size_t n) {
    kernels::active().hard_sigmoid(x, y, n);
  }
  static void hard_swish(const float* x, float* y, std::size_t n) {
    kernels::active().hard_swish(x, y, n);
  }
  static void bias_add_rows(const float* b, float* x, std::size_t r,
                            std::size_t c) {
    kernels::active().bias_add_rows(b, x, r, c);
  }
  static void sgd_update(float* p, float* v, const float* g, float lr,
                         float mom, float wd, std::size_t n) {
    kernels::active().sgd_update(p, v, g, lr, mom, wd, n);
  }
};

template <>
struct Kern<double> {
  static void gemm_nn(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool acc) {
    kernels::gemm_nn_ref(a, b, c, m, k, n, acc);
  }
  static void gemm_nt(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool acc) {
    kernels::gemm_nt_ref(a, b, c, m, k, n, acc);
  }
  static void gemm_tn(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool acc) {
    kernels::gemm_tn_ref(a, b, c, m, k, n, acc);
  }
  static void add(const double* a, const double* b, double* o, std::size_t n) {
    kernels::add_ref(a, b, o, n);
  }
  static void mul(const double* a, const double* b, double* o, std::size_t n) {
    kernels::mul_ref(a, b, o, n);
  }
  static void axpy(double al, const double* x, double* y, std::size_t n) {
    kernels::axpy_ref(al, x, y, n);
  }
  static void scale(double al, double* x, std::size_t n) {
    kernels::scale_ref(al, x, n);
  }
  static void relu(const double* x, double* y, std::size_t n) {
    kernels::relu_ref(x, y, n);
  }
  static void relu_bwd(const double* x, const double* dy, double* dx,
                       std::size_t n) {
    kernels::relu_bwd_ref(x, dy, dx, n);
  }
  static void hard_sigmoid(const double* x, double* y, std::size_t n) {
    kernels::hard_sigmoid_ref(x, y, n);
  }
  static void hard_swish(const double* x, double* y, std::size_t n) {
    kernels::hard_swish_ref(x, y, n);
  }
  static void bias_add_rows(const double* b, double* x, std::size_t r,
                            std::size_t c) {
    kernels::bias_add_rows_ref(b, x, r, c);
  }
  static void sgd_update(double* p, double* v, const double* g, double lr,
                         double mom, double wd, std::size_t n) {
    kernels::sgd_update_ref(p, v, g, lr, mom, wd, n);
  }
};

}  // namespace canseg
