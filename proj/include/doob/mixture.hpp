#pragma once

#include <span>
#include <vector>

#include "doob/gaussian_path.hpp"
#include "doob/rng.hpp"

namespace doob {

std::vector<double> softmax(std::span<const double> logits);

struct GumbelSoftmaxSample {
  std::vector<double> weights;
  std::vector<double> noise;
};

/// w = softmax((logits + Gumbel noise) / tau).
GumbelSoftmaxSample gumbel_softmax_weights(std::span<const double> logits, double tau, Rng& rng);
std::vector<double> gumbel_softmax_from_noise(std::span<const double> logits,
                                              std::span<const double> noise, double tau);
/// logits_bar += d<w, w_bar>/d logits for w = softmax((logits + noise) / tau).
void gumbel_softmax_backward(std::span<const double> weights, double tau,
                             std::span<const double> w_bar, std::span<double> logits_bar);

struct MixtureDrift {
  std::vector<double> u;
  std::vector<double> responsibilities;
  std::vector<std::vector<double>> component_drifts;
  // All responsibilities were non-finite; the Mahalanobis-nearest component was used.
  bool fallback = false;
};

/// Responsibility-weighted drift u(x) = sum_k r_k(x) u_k(x), r_k proportional to
/// w_k N(x | mu_k, Sigma_k), evaluated in log space.
MixtureDrift mixture_drift(std::span<const double> weights, std::span<const PathMarginal> marginals,
                           std::span<const std::vector<double>> component_drifts,
                           std::span<const double> x);
MixtureDrift mixture_drift(std::span<const double> weights, std::span<const PathMarginal> marginals,
                           std::span<const double> x, std::span<const double> g_diag);

/// Reverse pass of mixture_drift (with component drifts from drift_u). Accumulates
/// cotangents for every marginal, for x, and for log w_k.
void mixture_drift_backward(std::span<const double> weights,
                            std::span<const PathMarginal> marginals, std::span<const double> x,
                            std::span<const double> g_diag, const MixtureDrift& forward,
                            std::span<const double> u_bar,
                            std::span<MarginalCotangent> marginal_bar, std::span<double> x_bar,
                            std::span<double> log_weight_bar);

}  // namespace doob
