#include "doob/batch_loss.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

namespace doob {

std::vector<SampleDraw> draw_batch(const BridgeModel& model, std::size_t batch, double t_margin,
                                   Rng& rng) {
  const double T = model.boundary().T;
  if (!(t_margin >= 0.0) || 2.0 * t_margin >= T) {
    throw std::invalid_argument("draw_batch: time margin must lie in [0, T/2)");
  }
  const std::size_t K = model.K();
  std::vector<SampleDraw> draws(batch);
  for (auto& d : draws) {
    d.t = uniform(rng, t_margin, T - t_margin);
    if (K > 1) {
      d.gumbel.resize(K);
      std::size_t best = 0;
      for (std::size_t k = 0; k < K; ++k) {
        d.gumbel[k] = standard_gumbel(rng);
        if (model.logits()[k] + d.gumbel[k] > model.logits()[best] + d.gumbel[best]) best = k;
      }
      d.component = best;
    }
    d.eps.resize(model.dim());
    fill_standard_normal(rng, d.eps);
  }
  return draws;
}

namespace {

/// Forward and reverse pass of one term given the component marginals at t.
struct TermResult {
  double loss = 0.0;
  std::vector<double> x, v;
  std::vector<MarginalCotangent> marginal_bar;
  std::vector<double> logits_bar;
  bool fallback = false;
};

TermResult term_forward_backward(const BridgeModel& model, const ReferenceDynamics& dyn,
                                 const SampleDraw& draw, std::span<const PathMarginal> ms) {
  const std::size_t d = model.dim();
  const std::size_t K = model.K();
  const auto g = dyn.g_diag();
  const auto w = model.weights();
  const auto& mj = ms[draw.component];

  TermResult r;
  r.x = sample_marginal(mj, draw.eps);
  const MixtureDrift mix = mixture_drift(w, ms, r.x, g);
  r.fallback = mix.fallback;

  std::vector<double> b(d), jac(d * d);
  dyn.drift_and_jacobian(draw.t, r.x, b, jac);

  std::vector<double> u_bar(d), x_bar(d, 0.0);
  r.v.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double resid = mix.u[i] - b[i];
    r.v[i] = 0.5 * resid / g[i];
    r.loss += resid * resid / (4.0 * g[i]);
    u_bar[i] = resid / (2.0 * g[i]);
  }
  if (!std::isfinite(r.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss at t=" << draw.t << " x=(";
    for (std::size_t i = 0; i < d; ++i) msg << (i ? ", " : "") << r.x[i];
    msg << ")";
    throw NonFiniteLoss(draw.t, r.x, msg.str());
  }
  // b depends on x: x_bar += J^T b_bar with b_bar = -u_bar.
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) x_bar[j] -= jac[i * d + j] * u_bar[i];
  }
  r.marginal_bar.assign(K, MarginalCotangent(d));
  std::vector<double> logw_bar(K, 0.0);
  mixture_drift_backward(w, ms, r.x, g, mix, u_bar, r.marginal_bar, x_bar, logw_bar);

  // x = mu_j + sqrt(Sigma_j) eps
  auto& mb = r.marginal_bar[draw.component];
  for (std::size_t i = 0; i < d; ++i) {
    mb.mu[i] += x_bar[i];
    mb.sigma[i] += x_bar[i] * draw.eps[i] / (2.0 * std::sqrt(mj.sigma[i]));
  }

  r.logits_bar.assign(K, 0.0);
  if (!model.freeze_logits() && K > 1) {
    double total = 0.0;
    for (double v : logw_bar) total += v;
    for (std::size_t k = 0; k < K; ++k) r.logits_bar[k] = logw_bar[k] - w[k] * total;
  }
  return r;
}

void check_compatible(const BridgeModel& model, const ReferenceDynamics& dyn) {
  if (dyn.dim() != model.dim()) throw std::invalid_argument("batch loss: model/dynamics dimension");
  const auto gm = model.g_diag();
  const auto gd = dyn.g_diag();
  for (std::size_t i = 0; i < gm.size(); ++i) {
    if (std::abs(gm[i] - gd[i]) > 1e-12 * std::max(1.0, std::abs(gd[i]))) {
      throw std::invalid_argument("batch loss: model diffusion differs from reference dynamics");
    }
  }
}

// Score-function term for the component selection, with the batch-mean loss as baseline.
void add_selection_gradient(const BridgeModel& model, std::span<const SampleDraw> draws,
                            std::span<const double> losses, std::span<double> grad) {
  const std::size_t K = model.K();
  if (K == 1 || model.freeze_logits() || draws.empty()) return;
  double mean = 0.0;
  for (double l : losses) mean += l;
  mean /= static_cast<double>(losses.size());
  const std::size_t off = model.logits_offset();
  const double n = static_cast<double>(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const auto y = gumbel_softmax_from_noise(model.logits(), draws[i].gumbel, model.tau());
    const double scale = (losses[i] - mean) / n;
    for (std::size_t k = 0; k < K; ++k) {
      const double dlog = ((k == draws[i].component ? 1.0 : 0.0) - y[k]) / model.tau();
      grad[off + k] += scale * dlog;
    }
  }
}

}  // namespace

LossAndGrad loss_at(const BridgeModel& model, const ReferenceDynamics& dyn,
                    const SampleDraw& draw) {
  check_compatible(model, dyn);
  const auto& bc = model.boundary();
  if (!(draw.t > 0.0 && draw.t < bc.T)) throw std::out_of_range("loss_at: t must lie in (0, T)");
  const std::size_t K = model.K();
  const double s = draw.t / bc.T;

  std::vector<std::vector<double>> raw(K), draw_ds(K);
  std::vector<PathMarginal> ms;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& c = model.component(k);
    raw[k].resize(c.raw_dim());
    draw_ds[k].resize(c.raw_dim());
    c.eval(s, raw[k], draw_ds[k]);
    ms.push_back(apply_envelope(bc, draw.t, raw[k], draw_ds[k]));
  }
  auto term = term_forward_backward(model, dyn, draw, ms);

  LossAndGrad out;
  out.loss = term.loss;
  out.x = std::move(term.x);
  out.v = std::move(term.v);
  out.fallback = term.fallback;
  out.grad.assign(model.num_params(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& c = model.component(k);
    std::vector<double> raw_bar(c.raw_dim()), draw_bar(c.raw_dim());
    envelope_backward(bc, draw.t, raw[k], draw_ds[k], term.marginal_bar[k], raw_bar, draw_bar);
    c.backward(s, raw_bar, draw_bar,
               std::span<double>(out.grad).subspan(model.param_offset(k), c.num_params()));
  }
  for (std::size_t k = 0; k < K; ++k) out.grad[model.logits_offset() + k] = term.logits_bar[k];
  return out;
}

BatchLoss batch_loss_serial(const BridgeModel& model, const ReferenceDynamics& dyn,
                            std::span<const SampleDraw> draws) {
  if (draws.empty()) throw std::invalid_argument("batch loss: empty batch");
  BatchLoss out;
  out.grad.assign(model.num_params(), 0.0);
  out.losses.reserve(draws.size());
  for (const auto& d : draws) {
    const auto term = loss_at(model, dyn, d);
    out.losses.push_back(term.loss);
    out.fallbacks += term.fallback ? 1 : 0;
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += term.grad[i];
  }
  const double n = static_cast<double>(draws.size());
  for (double& g : out.grad) g /= n;
  for (double l : out.losses) out.mean_loss += l;
  out.mean_loss /= n;
  add_selection_gradient(model, draws, out.losses, out.grad);
  return out;
}

BatchLoss batch_loss_parallel(const BridgeModel& model, const ReferenceDynamics& dyn,
                              std::span<const SampleDraw> draws, std::size_t chunk_size) {
  if (draws.empty()) throw std::invalid_argument("batch loss: empty batch");
  if (chunk_size == 0) throw std::invalid_argument("batch loss: chunk size must be positive");
  check_compatible(model, dyn);
  const auto& bc = model.boundary();
  for (const auto& d : draws) {
    if (!(d.t > 0.0 && d.t < bc.T)) throw std::out_of_range("batch loss: t must lie in (0, T)");
  }
  const std::size_t n = draws.size();
  const std::size_t K = model.K();
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const std::size_t P = model.num_params();

  std::vector<std::vector<double>> chunk_grad(n_chunks);
  std::vector<double> losses(n, 0.0);
  std::vector<int> fallback(n, 0);
  std::vector<std::exception_ptr> errors(n_chunks);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t c = 0; c < n_chunks; ++c) {
    try {
      const std::size_t lo = c * chunk_size;
      const std::size_t hi = std::min(n, lo + chunk_size);
      const auto m = static_cast<Eigen::Index>(hi - lo);
      std::vector<double> s(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) s[i - lo] = draws[i].t / bc.T;

      std::vector<BackendTape> tapes(K);
      std::vector<Eigen::MatrixXd> raw(K), draw_ds(K), raw_bar(K), draw_bar(K);
      for (std::size_t k = 0; k < K; ++k) {
        const auto& comp = model.component(k);
        comp.eval_batch(s, raw[k], draw_ds[k], tapes[k]);
        raw_bar[k].setZero(raw[k].rows(), m);
        draw_bar[k].setZero(raw[k].rows(), m);
      }
      auto& grad = chunk_grad[c];
      grad.assign(P, 0.0);
      std::vector<PathMarginal> ms(K);
      for (Eigen::Index col = 0; col < m; ++col) {
        const auto& d = draws[lo + static_cast<std::size_t>(col)];
        for (std::size_t k = 0; k < K; ++k) {
          const std::size_t r = static_cast<std::size_t>(raw[k].rows());
          ms[k] = apply_envelope(bc, d.t, {raw[k].col(col).data(), r}, {draw_ds[k].col(col).data(), r});
        }
        auto term = term_forward_backward(model, dyn, d, ms);
        losses[lo + static_cast<std::size_t>(col)] = term.loss;
        fallback[lo + static_cast<std::size_t>(col)] = term.fallback ? 1 : 0;
        for (std::size_t k = 0; k < K; ++k) {
          const std::size_t r = static_cast<std::size_t>(raw[k].rows());
          envelope_backward(bc, d.t, {raw[k].col(col).data(), r}, {draw_ds[k].col(col).data(), r},
                            term.marginal_bar[k], {raw_bar[k].col(col).data(), r},
                            {draw_bar[k].col(col).data(), r});
          grad[model.logits_offset() + k] += term.logits_bar[k];
        }
      }
      for (std::size_t k = 0; k < K; ++k) {
        const auto& comp = model.component(k);
        comp.backward_batch(tapes[k], raw_bar[k], draw_bar[k],
                            std::span<double>(grad).subspan(model.param_offset(k), comp.num_params()));
      }
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BatchLoss out;
  out.grad.assign(P, 0.0);
  for (const auto& g : chunk_grad) {
    for (std::size_t i = 0; i < P; ++i) out.grad[i] += g[i];
  }
  const double nd = static_cast<double>(n);
  for (double& g : out.grad) g /= nd;
  out.losses = std::move(losses);
  for (double l : out.losses) out.mean_loss += l;
  out.mean_loss /= nd;
  for (int f : fallback) out.fallbacks += static_cast<std::size_t>(f);
  add_selection_gradient(model, draws, out.losses, out.grad);
  return out;
}

}  // namespace doob
