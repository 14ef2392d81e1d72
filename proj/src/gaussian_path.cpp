#include "doob/gaussian_path.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace doob {

void BoundaryPair::validate() const {
  if (A.empty() || A.size() != B.size()) {
    throw std::invalid_argument("BoundaryPair: A and B must have the same positive dimension");
  }
  if (!(T > 0.0)) throw std::invalid_argument("BoundaryPair: T must be > 0");
  if (!(sigma_min_sq > 0.0)) throw std::invalid_argument("BoundaryPair: sigma_min_sq must be > 0");
}

namespace {

void check_time(const BoundaryPair& bc, double t) {
  if (!(t >= 0.0 && t <= bc.T)) {
    throw std::out_of_range("Gaussian path evaluated outside [0, T]");
  }
}

}  // namespace

PathMarginal apply_envelope(const BoundaryPair& bc, double t, std::span<const double> raw,
                            std::span<const double> draw_ds) {
  check_time(bc, t);
  const std::size_t d = bc.dim();
  if (raw.size() != 2 * d || draw_ds.size() != 2 * d) {
    throw std::invalid_argument("apply_envelope: raw output size mismatch");
  }
  const double s = t / bc.T;
  const double c = s * (1.0 - s);
  const double dc = 1.0 - 2.0 * s;
  const double inv_T = 1.0 / bc.T;
  PathMarginal m;
  m.mu.resize(d);
  m.sigma.resize(d);
  m.dmu_dt.resize(d);
  m.dsigma_dt.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double rm = raw[i], drm = draw_ds[i];
    const double rs = raw[d + i], drs = draw_ds[d + i];
    m.mu[i] = (1.0 - s) * bc.A[i] + s * bc.B[i] + c * rm;
    m.dmu_dt[i] = (bc.B[i] - bc.A[i]) * inv_T + (dc * rm + c * drm) * inv_T;
    const double sp = softplus(rs);
    const double sg = sigmoid(rs);
    m.sigma[i] = c * sp + bc.sigma_min_sq;
    m.dsigma_dt[i] = (dc * sp + c * sg * drs) * inv_T;
  }
  return m;
}

void envelope_backward(const BoundaryPair& bc, double t, std::span<const double> raw,
                       std::span<const double> draw_ds, const MarginalCotangent& bar,
                       std::span<double> raw_bar, std::span<double> draw_bar) {
  const std::size_t d = bc.dim();
  const double s = t / bc.T;
  const double c = s * (1.0 - s);
  const double dc = 1.0 - 2.0 * s;
  const double inv_T = 1.0 / bc.T;
  for (std::size_t i = 0; i < d; ++i) {
    raw_bar[i] = c * bar.mu[i] + dc * inv_T * bar.dmu_dt[i];
    draw_bar[i] = c * inv_T * bar.dmu_dt[i];
    const double rs = raw[d + i], drs = draw_ds[d + i];
    const double sg = sigmoid(rs);
    raw_bar[d + i] = c * sg * bar.sigma[i] + dc * inv_T * sg * bar.dsigma_dt[i] +
                     c * inv_T * sg * (1.0 - sg) * drs * bar.dsigma_dt[i];
    draw_bar[d + i] = c * inv_T * sg * bar.dsigma_dt[i];
  }
}

PathMarginal gaussian_path_eval(const PathBackend& backend, const BoundaryPair& bc, double t) {
  check_time(bc, t);
  if (backend.state_dim() != bc.dim()) {
    throw std::invalid_argument("gaussian_path_eval: backend/boundary dimension mismatch");
  }
  std::vector<double> raw(backend.raw_dim()), draw(backend.raw_dim());
  backend.eval(t / bc.T, raw, draw);
  return apply_envelope(bc, t, raw, draw);
}

MarginalSample sample_marginal(const PathMarginal& m, Rng& rng) {
  MarginalSample out;
  out.eps.resize(m.dim());
  fill_standard_normal(rng, out.eps);
  out.x = sample_marginal(m, out.eps);
  return out;
}

std::vector<double> sample_marginal(const PathMarginal& m, std::span<const double> eps) {
  if (eps.size() != m.dim()) throw std::invalid_argument("sample_marginal: eps size");
  std::vector<double> x(m.dim());
  for (std::size_t i = 0; i < m.dim(); ++i) x[i] = m.mu[i] + std::sqrt(m.sigma[i]) * eps[i];
  return x;
}

std::vector<double> drift_u(const PathMarginal& m, std::span<const double> x,
                            std::span<const double> g_diag) {
  const std::size_t d = m.dim();
  if (x.size() != d || g_diag.size() != d) throw std::invalid_argument("drift_u: size mismatch");
  std::vector<double> u(d);
  for (std::size_t i = 0; i < d; ++i) {
    if (!(m.sigma[i] > 0.0)) throw std::invalid_argument("drift_u: variance must be positive");
    const double coef = (0.5 * m.dsigma_dt[i] - g_diag[i]) / m.sigma[i];
    u[i] = m.dmu_dt[i] + coef * (x[i] - m.mu[i]);
  }
  return u;
}

std::vector<double> control_v(std::span<const double> u, std::span<const double> b,
                              std::span<const double> g_inv_diag) {
  if (u.size() != b.size() || u.size() != g_inv_diag.size()) {
    throw std::invalid_argument("control_v: size mismatch");
  }
  std::vector<double> v(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) v[i] = 0.5 * g_inv_diag[i] * (u[i] - b[i]);
  return v;
}

double log_density(const PathMarginal& m, std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < m.dim(); ++i) {
    const double r = x[i] - m.mu[i];
    acc -= 0.5 * (r * r / m.sigma[i] + std::log(2.0 * std::numbers::pi * m.sigma[i]));
  }
  return acc;
}

}  // namespace doob
