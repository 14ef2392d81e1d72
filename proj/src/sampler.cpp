#include "doob/sampler.hpp"

#include <omp.h>

#include <cmath>
#include <optional>

namespace doob {

MarginalTable::MarginalTable(const BridgeModel& model, std::size_t n_steps)
    : n_steps_(n_steps), dt_(0.0) {
  if (n_steps < 1) throw std::invalid_argument("MarginalTable: n_steps must be >= 1");
  const double T = model.boundary().T;
  dt_ = T / static_cast<double>(n_steps);
  rows_.reserve(n_steps + 1);
  for (std::size_t i = 0; i <= n_steps; ++i) {
    const double t = i == n_steps ? T : static_cast<double>(i) * dt_;
    rows_.push_back(model.marginals(t));
  }
}

Trajectory generate_path(const BridgeModel& model, const MarginalTable& table, Rng& rng) {
  const std::size_t d = model.dim();
  const auto& bc = model.boundary();
  const auto g = model.g_diag();
  const auto xi = model.xi_diag();
  const auto w = model.weights();
  const double dt = table.dt();
  const double sqdt = std::sqrt(dt);
  const double smin = std::sqrt(bc.sigma_min_sq);

  Trajectory traj;
  traj.dim = d;
  traj.method_tag = "ours";
  traj.times.reserve(table.n_steps() + 1);
  traj.states.reserve((table.n_steps() + 1) * d);

  std::vector<double> x(d), noise(d);
  fill_standard_normal(rng, noise);
  for (std::size_t i = 0; i < d; ++i) x[i] = bc.A[i] + smin * noise[i];
  traj.push(0.0, x);
  for (std::size_t step = 0; step < table.n_steps(); ++step) {
    const auto mix = mixture_drift(w, table.at(step), x, g);
    fill_standard_normal(rng, noise);
    for (std::size_t i = 0; i < d; ++i) {
      x[i] += dt * mix.u[i] + sqdt * xi[i] * noise[i];
      if (!std::isfinite(x[i])) {
        throw IntegrationBlowup(step, "sampler blew up at step " + std::to_string(step));
      }
    }
    const double t = step + 1 == table.n_steps() ? bc.T : static_cast<double>(step + 1) * dt;
    traj.push(t, x);
  }
  return traj;
}

Trajectory generate_path(const BridgeModel& model, std::size_t n_steps, Rng& rng) {
  return generate_path(model, MarginalTable(model, n_steps), rng);
}

namespace {

Ensemble make_ensemble(std::size_t n_paths, std::uint64_t seed) {
  if (n_paths < 1) throw std::invalid_argument("generate_ensemble: n_paths must be >= 1");
  Ensemble e;
  e.method = "ours";
  e.seed = seed;
  return e;
}

}  // namespace

Ensemble generate_ensemble(const BridgeModel& model, std::size_t n_paths, std::size_t n_steps,
                           std::uint64_t seed) {
  Ensemble e = make_ensemble(n_paths, seed);
  const MarginalTable table(model, n_steps);
  std::vector<std::optional<Trajectory>> slots(n_paths);
  std::vector<PathFailure> fails(n_paths);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n_paths; ++i) {
    Rng rng = stream_rng(seed, i);
    try {
      slots[i] = generate_path(model, table, rng);
      slots[i]->seed = seed;
    } catch (const IntegrationBlowup& err) {
      fails[i] = PathFailure{i, err.step(), err.what()};
    }
  }
  for (std::size_t i = 0; i < n_paths; ++i) {
    if (slots[i]) {
      e.paths.push_back(std::move(*slots[i]));
    } else {
      e.failures.push_back(fails[i]);
    }
  }
  return e;
}

Ensemble generate_ensemble_serial(const BridgeModel& model, std::size_t n_paths,
                                  std::size_t n_steps, std::uint64_t seed) {
  Ensemble e = make_ensemble(n_paths, seed);
  const MarginalTable table(model, n_steps);
  for (std::size_t i = 0; i < n_paths; ++i) {
    Rng rng = stream_rng(seed, i);
    try {
      e.paths.push_back(generate_path(model, table, rng));
      e.paths.back().seed = seed;
    } catch (const IntegrationBlowup& err) {
      e.failures.push_back(PathFailure{i, err.step(), err.what()});
    }
  }
  return e;
}

}  // namespace doob
