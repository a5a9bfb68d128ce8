#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "enmdap/tensor.hpp"

namespace enmdap {

struct AdamConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SgdConfig {
  double lr = 1e-3;
};

/// First/second moment accumulators, one per parameter, plus the step count.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update. `state` is sized on first use.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               AdamState& state, const AdamConfig& cfg);

/// p <- p - lr * g.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr);

}  // namespace enmdap
