#pragma once

// JSON run configuration. Parsing is strict: unknown keys are an error that
// names the full field path, so typos can't silently fall back to defaults.
// Every key is optional and defaults to the values below.

#include <stdexcept>

#include "canseg/loss.hpp"

namespace canseg {

// Bad config file or bad CLI arguments; the binary maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  int height = 64;
  int width = 64;
  int train_count = 256;
  int val_count = 32;
  bool augment = true;
};

struct TrainConfig {
  TrainSchedule schedule;
  OhemConfig ohem;
  DatasetConfig dataset;
  int batch_size = 4;
  std::uint64_t seed = 1;
  int log_every = 50;
  int val_every = 500;
  double stop_at_miou = 0.0;  // > 0: stop once val mIoU reaches this
  double grad_clip = 0.0;     // > 0: clip global gradient norm before the step
};

struct IoConfig {
  std::string weights = "weights.canw";  // train output / infer input
  std::string out_prefix = "out";        // infer writes <prefix>.pgm/_color.ppm
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  IoConfig io;
};

RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig load_config(const std::string& path);

}  // namespace canseg
