// Backend selection. Order of precedence:
//   1) force_backend() from code (tests),
//   2) CANSEG_KERNEL env var: "scalar" | "avx2" | "auto",
//   3) auto: AVX2+FMA if the CPU has both, else scalar.
// Requesting avx2 on a machine without it falls back to scalar with a
// warning on stderr rather than crashing on an illegal instruction.

#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "canseg/kernels.hpp"

namespace canseg::kernels {

namespace {

Backend g_backend = Backend::Scalar;
bool g_chosen = false;

Backend pick_from_env() {
  const char* env = std::getenv("CANSEG_KERNEL");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return Backend::Scalar;
  if (env != nullptr && std::strcmp(env, "avx2") == 0) {
    if (avx2_supported()) return Backend::Avx2;
    std::fprintf(stderr,
                 "canseg: CANSEG_KERNEL=avx2 but CPU lacks AVX2+FMA, "
                 "using scalar kernels\n");
    return Backend::Scalar;
  }
  // unset or "auto" (anything else treated as auto)
  return avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

void ensure_chosen() {
  if (!g_chosen) {
    g_backend = pick_from_env();
    g_chosen = true;
  }
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

void force_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_supported()) {
    std::fprintf(stderr, "canseg: AVX2 backend unavailable, keeping scalar\n");
    b = Backend::Scalar;
  }
  g_backend = b;
  g_chosen = true;
}

Backend active_backend() {
  ensure_chosen();
  return g_backend;
}

const Dispatch& active() {
#if defined(__x86_64__)
  return active_backend() == Backend::Avx2 ? avx2_table() : scalar_table();
#else
  ensure_chosen();
  return scalar_table();
#endif
}

std::string backend_name(Backend b) {
  return b == Backend::Avx2 ? "avx2" : "scalar";
}

}  // namespace canseg::kernels
