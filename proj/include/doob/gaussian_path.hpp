#pragma once

#include <span>
#include <vector>

#include "doob/path_backend.hpp"
#include "doob/rng.hpp"

namespace doob {

/// Endpoints of the conditioned process and the endpoint variance floor.
struct BoundaryPair {
  std::vector<double> A;
  std::vector<double> B;
  double T = 1.0;
  double sigma_min_sq = 1e-4;

  std::size_t dim() const { return A.size(); }
  void validate() const;
};

/// Diagonal Gaussian marginal at one time, with exact time derivatives.
struct PathMarginal {
  std::vector<double> mu;
  std::vector<double> sigma;  // variances
  std::vector<double> dmu_dt;
  std::vector<double> dsigma_dt;

  std::size_t dim() const { return mu.size(); }
};

/// Cotangent of a PathMarginal (same layout).
struct MarginalCotangent {
  std::vector<double> mu, sigma, dmu_dt, dsigma_dt;

  explicit MarginalCotangent(std::size_t d = 0)
      : mu(d, 0.0), sigma(d, 0.0), dmu_dt(d, 0.0), dsigma_dt(d, 0.0) {}
};

/// Boundary-pinning envelope applied to raw backend outputs at time t:
///   mu    = (1 - s) A + s B + s (1 - s) r_mu
///   Sigma = s (1 - s) softplus(r_sigma) + sigma_min^2
/// with s = t / T, and exact d/dt via the product rule (draw_ds = dr/ds).
PathMarginal apply_envelope(const BoundaryPair& bc, double t, std::span<const double> raw,
                            std::span<const double> draw_ds);

/// Pulls a marginal cotangent back to (raw, dr/ds) cotangents.
void envelope_backward(const BoundaryPair& bc, double t, std::span<const double> raw,
                       std::span<const double> draw_ds, const MarginalCotangent& bar,
                       std::span<double> raw_bar, std::span<double> draw_bar);

PathMarginal gaussian_path_eval(const PathBackend& backend, const BoundaryPair& bc, double t);

struct MarginalSample {
  std::vector<double> x;
  std::vector<double> eps;
};

/// x = mu + sqrt(Sigma) * eps.
MarginalSample sample_marginal(const PathMarginal& m, Rng& rng);
std::vector<double> sample_marginal(const PathMarginal& m, std::span<const double> eps);

/// Fokker-Planck drift of a diagonal Gaussian path under diffusion G = diag(g):
///   u = dmu/dt + (0.5 dSigma/dt / Sigma - g / Sigma) (x - mu).
std::vector<double> drift_u(const PathMarginal& m, std::span<const double> x,
                            std::span<const double> g_diag);

/// v = 0.5 G^-1 (u - b).
std::vector<double> control_v(std::span<const double> u, std::span<const double> b,
                              std::span<const double> g_inv_diag);

/// log N(x | mu, diag(Sigma)).
double log_density(const PathMarginal& m, std::span<const double> x);

}  // namespace doob
