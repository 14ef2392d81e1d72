#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace doob {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for a flat parameter vector.
struct AdamState {
  AdamOptions options;
  std::vector<double> m, v;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(std::size_t n, AdamOptions opts) : options(opts), m(n, 0.0), v(n, 0.0) {}
};

// Bias-corrected Adam update in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

}  // namespace doob
