#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "doob/bridge_model.hpp"
#include "doob/dynamics.hpp"

namespace doob {

/// Randomness consumed by one Monte Carlo term of the training objective.
struct SampleDraw {
  double t = 0.0;
  std::size_t component = 0;    // mixture component x is drawn from
  std::vector<double> eps;      // standard normal, state dim
  std::vector<double> gumbel;   // Gumbel noise per component (empty for K = 1)
};

/// Draws `batch` terms: t ~ U(margin, T - margin), component by Gumbel-max on
/// the logits, eps ~ N(0, I). Consumes `rng` serially so the result does not
/// depend on how the batch is later split across threads.
std::vector<SampleDraw> draw_batch(const BridgeModel& model, std::size_t batch, double t_margin,
                                   Rng& rng);

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(double t, std::vector<double> x, const std::string& what)
      : std::runtime_error(what), t_(t), x_(std::move(x)) {}
  double t() const { return t_; }
  const std::vector<double>& x() const { return x_; }

 private:
  double t_;
  std::vector<double> x_;
};

/// Single term <v, G v> at the draw's (t, x) and its reparameterized gradient
/// with respect to the flat model parameters.
struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
  std::vector<double> x;
  std::vector<double> v;
  bool fallback = false;
};

LossAndGrad loss_at(const BridgeModel& model, const ReferenceDynamics& dyn,
                    const SampleDraw& draw);

struct BatchLoss {
  double mean_loss = 0.0;
  std::vector<double> losses;
  std::vector<double> grad;  // gradient of mean_loss
  std::size_t fallbacks = 0;
};

/// Reference implementation: one sample at a time through the loop-based network code.
BatchLoss batch_loss_serial(const BridgeModel& model, const ReferenceDynamics& dyn,
                            std::span<const SampleDraw> draws);

/// OpenMP kernel: fixed-size chunks evaluated with batched network passes,
/// chunk gradients reduced in chunk order. The result is bit-identical for any
/// thread count.
BatchLoss batch_loss_parallel(const BridgeModel& model, const ReferenceDynamics& dyn,
                              std::span<const SampleDraw> draws, std::size_t chunk_size = 32);

}  // namespace doob
