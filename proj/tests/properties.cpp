#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "doob/batch_loss.hpp"
#include "doob/metrics.hpp"
#include "doob/sampler.hpp"
#include "doob/trainer.hpp"

namespace doob::props {

namespace {

const std::vector<std::string> kBackends = {"mlp", "spline_linear", "spline_cubic"};

PropertyResult finish(std::string name, double worst, double tol, std::string detail = {}) {
  PropertyResult r;
  r.name = std::move(name);
  r.worst = worst;
  r.tolerance = tol;
  r.passed = std::isfinite(worst) && worst <= tol;
  r.detail = std::move(detail);
  return r;
}

double mixture_density(const BridgeModel& model, double t, std::span<const double> x) {
  const auto w = model.weights();
  double q = 0.0;
  for (std::size_t k = 0; k < model.K(); ++k) q += w[k] * std::exp(log_density(model.marginal(k, t), x));
  return q;
}

// q(t, x) u_i(t, x)
double flux(const BridgeModel& model, double t, std::span<const double> x, std::size_t i) {
  return mixture_density(model, t, x) * model.drift(t, x).u[i];
}

std::shared_ptr<const ReferenceDynamics> mb_dynamics(double xi) {
  return std::make_shared<ReferenceDynamics>(first_order_toy(mueller_brown(), xi));
}

// Random MB-region boundary so the reference drift has a nontrivial Jacobian.
BoundaryPair mb_boundary(Rng& rng) {
  BoundaryPair bc;
  bc.A = {uniform(rng, -1.0, 0.0), uniform(rng, 0.5, 1.5)};
  bc.B = {uniform(rng, 0.0, 1.0), uniform(rng, -0.2, 0.5)};
  bc.T = uniform(rng, 0.02, 0.2);
  bc.sigma_min_sq = 1e-3;
  return bc;
}

}  // namespace

BoundaryPair random_boundary(std::size_t dim, Rng& rng) {
  BoundaryPair bc;
  bc.A.resize(dim);
  bc.B.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    bc.A[i] = uniform(rng, -1.0, 1.0);
    bc.B[i] = uniform(rng, -1.0, 1.0);
  }
  bc.T = uniform(rng, 0.5, 2.0);
  bc.sigma_min_sq = 1e-3;
  return bc;
}

BridgeModel random_model(const std::string& backend, std::size_t K, const BoundaryPair& bc,
                         double xi, Rng& rng, bool freeze_logits) {
  BackendSpec spec;
  spec.tag = backend;
  spec.hidden = {16, 16};
  spec.output_scale = 1.0;
  spec.knots = 8;
  MixtureSpec mix;
  mix.K = K;
  mix.freeze_logits = freeze_logits;
  mix.initial_logits.resize(K);
  for (auto& l : mix.initial_logits) l = uniform(rng, -0.5, 0.5);
  const std::vector<double> xi_diag(bc.dim(), xi);
  BridgeModel model = BridgeModel::create(bc, xi_diag, spec, mix, rng);
  auto p = model.flat_params();
  for (std::size_t k = 0; k < K; ++k) {
    if (backend == "mlp") continue;
    const auto off = model.param_offset(k);
    const auto n = model.component(k).num_params();
    for (std::size_t j = 0; j < n; ++j) p[off + j] = 0.5 * standard_normal(rng);
  }
  model.set_flat_params(p);
  return model;
}

PropertyResult fpe_residual(std::size_t n_cases, std::uint64_t seed) {
  Rng rng = stream_rng(seed, 101);
  const double h = 1e-4;
  double worst = 0.0;
  std::ostringstream detail;
  for (std::size_t c = 0; c < n_cases; ++c) {
    const auto& tag = kBackends[c % kBackends.size()];
    const std::size_t dim = 1 + c % 2;
    const std::size_t K = 1 + (c / 3) % 2;
    const BoundaryPair bc = random_boundary(dim, rng);
    const BridgeModel model = random_model(tag, K, bc, uniform(rng, 0.5, 1.5), rng);
    const auto g = model.g_diag();

    const double t = uniform(rng, 0.2, 0.8) * bc.T;
    const std::size_t k = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(K))) % K;
    const auto m = model.marginal(k, t);
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < dim; ++i) x[i] = m.mu[i] + std::sqrt(m.sigma[i]) * uniform(rng, -1.5, 1.5);

    const double dq_dt = (mixture_density(model, t + h, x) - mixture_density(model, t - h, x)) / (2 * h);
    double div = 0.0, diff = 0.0, largest = std::abs(dq_dt);
    const double q0 = mixture_density(model, t, x);
    for (std::size_t i = 0; i < dim; ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double dflux = (flux(model, t, xp, i) - flux(model, t, xm, i)) / (2 * h);
      const double d2q =
          (mixture_density(model, t, xp) - 2 * q0 + mixture_density(model, t, xm)) / (h * h);
      div += dflux;
      diff += g[i] * d2q;
      largest = std::max({largest, std::abs(dflux), std::abs(g[i] * d2q)});
    }
    const double rel = std::abs(dq_dt + div - diff) / largest;
    if (rel > worst) {
      worst = rel;
      detail.str("");
      detail << "worst case " << tag << " K=" << K << " dim=" << dim;
    }
  }
  return finish("FPE residual", worst, 1e-3, detail.str());
}

PropertyResult boundary_exactness(std::uint64_t seed) {
  Rng rng = stream_rng(seed, 102);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    for (const auto& tag : kBackends) {
      const BoundaryPair bc = random_boundary(2, rng);
      const BridgeModel model = random_model(tag, 2, bc, 1.0, rng);
      for (std::size_t k = 0; k < model.K(); ++k) {
        const auto m0 = model.marginal(k, 0.0);
        const auto mT = model.marginal(k, bc.T);
        for (std::size_t i = 0; i < bc.dim(); ++i) {
          worst = std::max({worst, std::abs(m0.mu[i] - bc.A[i]), std::abs(mT.mu[i] - bc.B[i]),
                            std::abs(m0.sigma[i] - bc.sigma_min_sq),
                            std::abs(mT.sigma[i] - bc.sigma_min_sq)});
        }
      }
    }
  }
  return finish("boundary exactness", worst, 1e-15);
}

PropertyResult loss_gradient_fd(std::uint64_t seed) {
  Rng rng = stream_rng(seed, 103);
  double worst = 0.0;
  std::string where;
  for (const auto& tag : kBackends) {
    for (std::size_t K : {1, 2}) {
      const BoundaryPair bc = mb_boundary(rng);
      const double xi = 5.0;
      BridgeModel model = random_model(tag, K, bc, xi, rng);
      const auto dyn = mb_dynamics(xi);
      for (int rep = 0; rep < 3; ++rep) {
        auto draws = draw_batch(model, 1, 0.05 * bc.T, rng);
        const auto& draw = draws.front();
        const auto ad = loss_at(model, *dyn, draw);
        auto p = model.flat_params();
        // Check a spread of parameter indices, always including the logits.
        std::vector<std::size_t> idx;
        const std::size_t n = p.size();
        for (std::size_t j = 0; j < 24; ++j) idx.push_back((j * 7919 + rep * 13) % n);
        if (K > 1) {
          for (std::size_t k = 0; k < K; ++k) idx.push_back(model.logits_offset() + k);
        }
        double num = 0.0, den = 0.0;
        for (std::size_t j : idx) {
          const double step = 1e-6 * std::max(1.0, std::abs(p[j]));
          const double orig = p[j];
          p[j] = orig + step;
          model.set_flat_params(p);
          const double lp = loss_at(model, *dyn, draw).loss;
          p[j] = orig - step;
          model.set_flat_params(p);
          const double lm = loss_at(model, *dyn, draw).loss;
          p[j] = orig;
          model.set_flat_params(p);
          const double fd = (lp - lm) / (2 * step);
          num += (fd - ad.grad[j]) * (fd - ad.grad[j]);
          den += ad.grad[j] * ad.grad[j];
        }
        const double rel = std::sqrt(num / std::max(den, 1e-300));
        if (rel > worst) {
          worst = rel;
          where = tag + " K=" + std::to_string(K);
        }
      }
    }
  }
  return finish("autodiff vs finite differences", worst, 1e-4, "worst case " + where);
}

PropertyResult mixture_convex_hull(std::uint64_t seed) {
  Rng rng = stream_rng(seed, 104);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t dim = 1 + rep % 3;
    const BoundaryPair bc = random_boundary(dim, rng);
    const BridgeModel model = random_model(kBackends[rep % 3], 3, bc, 1.0, rng);
    const double t = uniform(rng, 0.0, 1.0) * bc.T;
    std::vector<double> x(dim);
    for (auto& v : x) v = uniform(rng, -2.0, 2.0);
    const auto mix = model.drift(t, x);
    double rsum = 0.0;
    for (double r : mix.responsibilities) {
      worst = std::max(worst, -r);
      rsum += r;
    }
    worst = std::max(worst, std::abs(rsum - 1.0));
    for (std::size_t i = 0; i < dim; ++i) {
      double lo = mix.component_drifts[0][i], hi = lo;
      for (const auto& uk : mix.component_drifts) {
        lo = std::min(lo, uk[i]);
        hi = std::max(hi, uk[i]);
      }
      const double scale = std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
      worst = std::max(worst, std::max(lo - mix.u[i], mix.u[i] - hi) / scale);
    }
  }
  return finish("mixture convex hull", worst, 1e-12);
}

PropertyResult drift_reconstruction(std::uint64_t seed) {
  Rng rng = stream_rng(seed, 105);
  double worst = 0.0;
  const double xi = 5.0;
  const auto dyn = mb_dynamics(xi);
  for (int rep = 0; rep < 60; ++rep) {
    const BoundaryPair bc = mb_boundary(rng);
    const BridgeModel model = random_model(kBackends[rep % 3], 1 + rep % 2, bc, xi, rng);
    const auto draws = draw_batch(model, 1, 0.0, rng);
    const auto r = loss_at(model, *dyn, draws.front());
    std::vector<double> b(2);
    dyn->drift(draws.front().t, r.x, b);
    const auto u = model.drift(draws.front().t, r.x).u;
    const auto g = dyn->g_diag();
    for (std::size_t i = 0; i < 2; ++i) {
      const double rec = b[i] + 2.0 * g[i] * r.v[i];
      worst = std::max(worst, std::abs(rec - u[i]) / std::max({1.0, std::abs(u[i]), std::abs(b[i])}));
    }
  }
  return finish("u = b + 2Gv reconstruction", worst, 1e-13);
}

PropertyResult sampler_counter_invariance(std::uint64_t seed) {
  auto potential = mueller_brown();
  TrainConfig tc;
  tc.iterations = 5;
  tc.batch_size = 16;
  tc.seed = seed;
  tc.backend.hidden = {16, 16};
  tc.boundary.A = {-0.558224, 1.441726};
  tc.boundary.B = {0.623499, 0.028038};
  tc.boundary.T = 0.0275;
  tc.dynamics = std::make_shared<ReferenceDynamics>(first_order_toy(potential, 5.0));
  tc.t_margin = 0.5e-4;
  const auto [model, rep] = train(tc);
  const auto before = potential->counters();
  const Ensemble e = generate_ensemble(model, 20, 275, seed);
  const auto after = potential->counters();
  const double calls = static_cast<double>((after.gradient - before.gradient) + (after.energy - before.energy));
  std::ostringstream detail;
  detail << "training used " << before.gradient << " gradient calls, sampling " << calls
         << " calls for " << e.paths.size() << " paths";
  return finish("sampler counter invariance", calls, 0.0, detail.str());
}

PropertyResult report_determinism(std::uint64_t seed) {
  auto once = [&]() {
    auto potential = mueller_brown();
    TrainConfig tc;
    tc.iterations = 10;
    tc.batch_size = 32;
    tc.seed = seed;
    tc.backend.hidden = {16, 16};
    tc.boundary.A = {-0.558224, 1.441726};
    tc.boundary.B = {0.623499, 0.028038};
    tc.boundary.T = 0.0275;
    tc.dynamics = std::make_shared<ReferenceDynamics>(first_order_toy(potential, 5.0));
    tc.t_margin = 0.5e-4;
    auto [model, rep] = train(tc);
    Ensemble e = generate_ensemble(model, 30, 275, seed + 1);
    e.gradient_evaluations = rep.gradient_evaluations;
    const auto probe = potential->fresh_copy();
    ReportTable table;
    table.potential = "mueller_brown";
    table.rows.push_back(ensemble_report(e, *probe, tc.dynamics->with_potential(probe),
                                         StartDensity{tc.boundary.A, 1e-4}, tc.boundary.B));
    return table.to_csv();
  };
  const std::string a = once();
  const std::string b = once();
  return finish("report seed determinism", a == b ? 0.0 : 1.0, 0.0,
                a == b ? "identical CSV bytes" : "CSV differs between runs");
}

std::vector<PropertyResult> property_suite(std::uint64_t seed) {
  return {fpe_residual(100, seed),          boundary_exactness(seed),
          loss_gradient_fd(seed),           mixture_convex_hull(seed),
          drift_reconstruction(seed),       sampler_counter_invariance(seed),
          report_determinism(seed)};
}

}  // namespace doob::props
