#pragma once

// NCHW tensors. Everything is rank-4 internally; matrices live as
// [N, 1, rows, cols] so batched matmul and reshapes stay trivial.
// float is the training/inference lane, double exists for gradient checks.

#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace canseg {

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t at(int in, int ic, int ih, int iw) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw;
  }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  std::string str() const {
    std::ostringstream os;
    os << "[" << n << "," << c << "," << h << "," << w << "]";
    return os.str();
  }
};

template <typename T>
struct TensorT {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until ensure_grad()
  bool requires_grad = false;
  std::string name;  // parameter path, empty for activations

  TensorT() = default;
  explicit TensorT(Shape s) : shape(s), data(s.numel(), T(0)) {}

  std::size_t numel() const { return shape.numel(); }

  T& at(int in, int ic, int ih, int iw) { return data[shape.at(in, ic, ih, iw)]; }
  const T& at(int in, int ic, int ih, int iw) const {
    return data[shape.at(in, ic, ih, iw)];
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() {
    if (!grad.empty()) grad.assign(grad.size(), T(0));
  }
};

template <typename T>
using TensorPtrT = std::shared_ptr<TensorT<T>>;

using Tensor = TensorT<float>;
using TensorPtr = TensorPtrT<float>;

template <typename T = float>
TensorPtrT<T> make_tensor(Shape s) {
  return std::make_shared<TensorT<T>>(s);
}

template <typename T>
TensorPtrT<T> make_tensor(Shape s, std::vector<T> values) {
  check(values.size() == s.numel(),
        "tensor init: " + std::to_string(values.size()) + " values for shape " +
            s.str());
  auto t = std::make_shared<TensorT<T>>(s);
  t->data = std::move(values);
  return t;
}

// Integer label maps for segmentation targets ([N, H, W], 255 = ignore).
struct Labels {
  int n = 1;
  int h = 0;
  int w = 0;
  std::vector<std::int32_t> v;

  Labels() = default;
  Labels(int n_, int h_, int w_) : n(n_), h(h_), w(w_), v(std::size_t(n_) * h_ * w_, 0) {}
  // linear index, not the value -- pair with v[...]
  std::size_t idx(int in, int ih, int iw) const {
    return (static_cast<std::size_t>(in) * h + ih) * w + iw;
  }
  std::size_t numel() const { return v.size(); }
};

}  // namespace canseg
