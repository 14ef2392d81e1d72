#include "doob/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace doob {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    w[k] = std::exp(logits[k] - mx);
    total += w[k];
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<double> gumbel_softmax_from_noise(std::span<const double> logits,
                                              std::span<const double> noise, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax: tau must be > 0");
  if (noise.size() != logits.size()) throw std::invalid_argument("gumbel_softmax: noise size");
  std::vector<double> z(logits.size());
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = (logits[k] + noise[k]) / tau;
  return softmax(z);
}

GumbelSoftmaxSample gumbel_softmax_weights(std::span<const double> logits, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax: tau must be > 0");
  GumbelSoftmaxSample out;
  out.noise.resize(logits.size());
  for (double& g : out.noise) g = standard_gumbel(rng);
  out.weights = gumbel_softmax_from_noise(logits, out.noise, tau);
  return out;
}

void gumbel_softmax_backward(std::span<const double> weights, double tau,
                             std::span<const double> w_bar, std::span<double> logits_bar) {
  double dot = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) dot += weights[k] * w_bar[k];
  for (std::size_t k = 0; k < weights.size(); ++k) {
    logits_bar[k] += weights[k] * (w_bar[k] - dot) / tau;
  }
}

namespace {

double log_component(double w, const PathMarginal& m, std::span<const double> x) {
  return std::log(w) + log_density(m, x);
}

double mahalanobis_sq(const PathMarginal& m, std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < m.dim(); ++i) {
    const double r = x[i] - m.mu[i];
    acc += r * r / m.sigma[i];
  }
  return acc;
}

}  // namespace

MixtureDrift mixture_drift(std::span<const double> weights, std::span<const PathMarginal> marginals,
                           std::span<const std::vector<double>> component_drifts,
                           std::span<const double> x) {
  const std::size_t K = weights.size();
  if (K == 0 || marginals.size() != K || component_drifts.size() != K) {
    throw std::invalid_argument("mixture_drift: component count mismatch");
  }
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("mixture_drift: negative weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw std::invalid_argument("mixture_drift: weights must sum to 1");

  const std::size_t d = x.size();
  MixtureDrift out;
  out.component_drifts.assign(component_drifts.begin(), component_drifts.end());
  out.responsibilities.assign(K, 0.0);
  std::vector<double> logp(K);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    logp[k] = weights[k] > 0.0 ? log_component(weights[k], marginals[k], x)
                               : -std::numeric_limits<double>::infinity();
    if (logp[k] > mx) mx = logp[k];
  }
  if (!std::isfinite(mx)) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      const double m2 = mahalanobis_sq(marginals[k], x);
      if (weights[k] > 0.0 && m2 < best_d) {
        best_d = m2;
        best = k;
      }
    }
    out.fallback = true;
    out.responsibilities[best] = 1.0;
  } else {
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      out.responsibilities[k] = std::exp(logp[k] - mx);
      total += out.responsibilities[k];
    }
    for (double& r : out.responsibilities) r /= total;
  }
  out.u.assign(d, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double r = out.responsibilities[k];
    if (r == 0.0) continue;
    for (std::size_t i = 0; i < d; ++i) out.u[i] += r * component_drifts[k][i];
  }
  return out;
}

MixtureDrift mixture_drift(std::span<const double> weights, std::span<const PathMarginal> marginals,
                           std::span<const double> x, std::span<const double> g_diag) {
  std::vector<std::vector<double>> drifts;
  drifts.reserve(marginals.size());
  for (const auto& m : marginals) drifts.push_back(drift_u(m, x, g_diag));
  return mixture_drift(weights, marginals, drifts, x);
}

void mixture_drift_backward(std::span<const double> weights,
                            std::span<const PathMarginal> marginals, std::span<const double> x,
                            std::span<const double> g_diag, const MixtureDrift& fwd,
                            std::span<const double> u_bar,
                            std::span<MarginalCotangent> marginal_bar, std::span<double> x_bar,
                            std::span<double> log_weight_bar) {
  const std::size_t K = weights.size();
  const std::size_t d = x.size();
  const auto& r = fwd.responsibilities;

  // Responsibilities depend on x, the marginals and log w through the softmax of log-densities.
  if (!fwd.fallback && K > 1) {
    std::vector<double> rbar(K, 0.0);
    double avg = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < d; ++i) rbar[k] += u_bar[i] * fwd.component_drifts[k][i];
      avg += r[k] * rbar[k];
    }
    for (std::size_t k = 0; k < K; ++k) {
      const double lbar = r[k] * (rbar[k] - avg);
      if (lbar == 0.0) continue;
      log_weight_bar[k] += lbar;
      const auto& m = marginals[k];
      auto& mb = marginal_bar[k];
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = x[i] - m.mu[i];
        const double z = diff / m.sigma[i];
        x_bar[i] -= lbar * z;
        mb.mu[i] += lbar * z;
        mb.sigma[i] += lbar * 0.5 * (z * z - 1.0 / m.sigma[i]);
      }
    }
  }

  for (std::size_t k = 0; k < K; ++k) {
    if (r[k] == 0.0) continue;
    const auto& m = marginals[k];
    auto& mb = marginal_bar[k];
    for (std::size_t i = 0; i < d; ++i) {
      const double uk_bar = r[k] * u_bar[i];
      const double diff = x[i] - m.mu[i];
      const double coef = (0.5 * m.dsigma_dt[i] - g_diag[i]) / m.sigma[i];
      const double coef_bar = uk_bar * diff;
      mb.dmu_dt[i] += uk_bar;
      x_bar[i] += coef * uk_bar;
      mb.mu[i] -= coef * uk_bar;
      mb.dsigma_dt[i] += 0.5 * coef_bar / m.sigma[i];
      mb.sigma[i] -= coef_bar * coef / m.sigma[i];
    }
  }
}

}  // namespace doob
