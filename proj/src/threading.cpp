#include "canseg/threading.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace canseg {

namespace {

int resolve_default() {
  if (const char* env = std::getenv("CANSEG_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return std::min(v, 64);
  }
  return 1;
}

int& thread_count_ref() {
  static int count = resolve_default();
  return count;
}

}  // namespace

int thread_count() { return thread_count_ref(); }

void set_thread_count(int n) { thread_count_ref() = std::max(1, n); }

void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const int threads = thread_count();
  if (threads <= 1 || n <= grain) {
    fn(0, n);
    return;
  }
  const std::size_t chunks = std::min<std::size_t>(threads, (n + grain - 1) / grain);
  const std::size_t per = (n + chunks - 1) / chunks;
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t b = c * per;
    const std::size_t e = std::min(n, b + per);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace canseg
