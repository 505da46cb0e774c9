#pragma once

#include <cstdint>
#include <vector>

namespace t4d {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers for one parameter group. Buffers are sized
// lazily on the first step; step counts completed updates.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update over a flat parameter array. All math runs
// in double regardless of the storage type. Non-finite gradients or updates
// abort with Error("train.nan").
void adam_step(float* params, const double* grad, std::size_t n, AdamState& state,
               const AdamConfig& cfg);
void adam_step(double* params, const double* grad, std::size_t n, AdamState& state,
               const AdamConfig& cfg);

}  // namespace t4d
