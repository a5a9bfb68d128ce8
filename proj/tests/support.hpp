#pragma once

// Hand-rolled generators shared by the property tests.

#include <cstdint>
#include <vector>

#include "enmdap/rng.hpp"
#include "enmdap/tensor.hpp"

namespace enmdap::testing {

inline Tensor random_tensor(SplitMix64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// Uniform values bounded away from zero, for ops that are non-smooth at 0.
inline Tensor random_nonzero(SplitMix64& rng, Shape shape, double margin = 0.05) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) {
    const double mag = rng.uniform(margin, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

inline std::vector<int> random_labels(SplitMix64& rng, std::size_t n, int n_classes) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes)));
  return y;
}

}  // namespace enmdap::testing
