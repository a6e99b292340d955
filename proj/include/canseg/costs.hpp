#pragma once

// Per-op cost tape filled during a real forward pass. This is the second,
// execution-driven route for operation counts; the analytical profiler walks
// the config without running anything, and the two must agree exactly.
//
// Conventions: `flops` counts multiply-accumulates for conv/matmul rows and
// plain elements for everything else; `mac` marks which rule applied, and a
// MAC row contributes 2*flops madds.

#include <cstdint>
#include <string>
#include <vector>

namespace canseg {

struct OpCost {
  std::string kind;     // "conv", "matmul", "bn", "act", "pool", "resize", "eltwise"
  std::uint64_t flops;  // MACs for mac rows, elements otherwise
  bool mac;
};

struct CostRecorder {
  std::vector<OpCost> items;

  void add(std::string kind, std::uint64_t flops, bool mac) {
    items.push_back({std::move(kind), flops, mac});
  }

  std::uint64_t total_flops() const {
    std::uint64_t s = 0;
    for (const auto& it : items) s += it.flops;
    return s;
  }
  std::uint64_t total_madds() const {
    std::uint64_t s = 0;
    for (const auto& it : items) s += it.mac ? 2 * it.flops : it.flops;
    return s;
  }
  std::uint64_t flops_of(const std::string& kind) const {
    std::uint64_t s = 0;
    for (const auto& it : items) {
      if (it.kind == kind) s += it.flops;
    }
    return s;
  }
  void clear() { items.clear(); }
};

}  // namespace canseg
