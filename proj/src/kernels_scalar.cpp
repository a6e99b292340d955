// Scalar float table: thin wrappers over the reference templates so the
// dispatch struct has concrete function pointers.

#include "canseg/kernels.hpp"

namespace canseg::kernels {

namespace {

void s_gemm_nn(const float* a, const float* b, float* c, std::size_t m,
               std::size_t k, std::size_t n, bool acc) {
  gemm_nn_ref(a, b, c, m, k, n, acc);
}
void s_gemm_nt(const float* a, const float* b, float* c, std::size_t m,
               std::size_t k, std::size_t n, bool acc) {
  gemm_nt_ref(a, b, c, m, k, n, acc);
}
void s_gemm_tn(const float* a, const float* b, float* c, std::size_t m,
               std::size_t k, std::size_t n, bool acc) {
  gemm_tn_ref(a, b, c, m, k, n, acc);
}
void s_add(const float* a, const float* b, float* o, std::size_t n) {
  add_ref(a, b, o, n);
}
void s_mul(const float* a, const float* b, float* o, std::size_t n) {
  mul_ref(a, b, o, n);
}
void s_axpy(float al, const float* x, float* y, std::size_t n) {
  axpy_ref(al, x, y, n);
}
void s_scale(float al, float* x, std::size_t n) { scale_ref(al, x, n); }
void s_relu(const float* x, float* y, std::size_t n) { relu_ref(x, y, n); }
void s_relu_bwd(const float* x, const float* dy, float* dx, std::size_t n) {
  relu_bwd_ref(x, dy, dx, n);
}
void s_hsig(const float* x, float* y, std::size_t n) {
  hard_sigmoid_ref(x, y, n);
}
void s_hswish(const float* x, float* y, std::size_t n) {
  hard_swish_ref(x, y, n);
}
void s_bias_rows(const float* b, float* x, std::size_t r, std::size_t c) {
  bias_add_rows_ref(b, x, r, c);
}
void s_sgd(float* p, float* v, const float* g, float lr, float mom, float wd,
           std::size_t n) {
  sgd_update_ref(p, v, g, lr, mom, wd, n);
}

}  // namespace

const Dispatch& scalar_table() {
  static const Dispatch t{s_gemm_nn, s_gemm_nt,  s_gemm_tn, s_add,
                          s_mul,     s_axpy,     s_scale,   s_relu,
                          s_relu_bwd, s_hsig,    s_hswish,  s_bias_rows,
                          s_sgd};
  return t;
}

}  // namespace canseg::kernels
