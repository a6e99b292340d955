#pragma once

// Define-by-run reverse-mode tape. Ops append a node with a backward
// closure; closures capture the shared_ptrs they need and accumulate (+=)
// into input grads, so diamond-shaped graphs come out right for free.

#include <functional>
#include <string>
#include <vector>

#include "canseg/tensor.hpp"

namespace canseg {

template <typename T>
class GraphT {
 public:
  struct Node {
    const char* op;
    std::function<void()> backward;
  };

  void push(const char* op, std::function<void()> backward) {
    nodes_.push_back({op, std::move(backward)});
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
  void backward(const TensorPtrT<T>& loss) {
    check(loss->numel() == 1, "backward: loss must be scalar, got " +
                                  loss->shape.str());
    loss->ensure_grad();
    loss->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      it->backward();
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

using Graph = GraphT<float>;

}  // namespace canseg
