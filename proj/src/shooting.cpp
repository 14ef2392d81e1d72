#include "doob/shooting.hpp"

#include <algorithm>
#include <cmath>

#include "doob/metrics.hpp"

namespace doob {

bool StateSet::contains(std::span<const double> x) const {
  if (x.size() < center.size()) throw std::invalid_argument("StateSet::contains: state too short");
  double s = 0.0;
  for (std::size_t i = 0; i < center.size(); ++i) {
    const double d = x[i] - center[i];
    s += d * d;
  }
  return s <= radius * radius;
}

void TpsConfig::validate() const {
  if (!dynamics) throw std::invalid_argument("TpsConfig: dynamics missing");
  const std::size_t d = dynamics->config_dim();
  for (const auto* set : {&set_a, &set_b}) {
    if (set->center.size() != d) throw std::invalid_argument("TpsConfig: set center dimension");
    if (!(set->radius > 0.0)) throw std::invalid_argument("TpsConfig: set radius must be > 0");
  }
  if (mode == TpsMode::fixed_length && n_steps < 2) {
    throw std::invalid_argument("TpsConfig: fixed-length paths need n_steps >= 2");
  }
  if (max_steps < 1) throw std::invalid_argument("TpsConfig: max_steps must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("TpsConfig: dt must be > 0");
  if (n_paths < 1) throw std::invalid_argument("TpsConfig: n_paths must be >= 1");
  if (!(warmup_fraction >= 0.0)) throw std::invalid_argument("TpsConfig: warmup_fraction < 0");
  if (!(init_noise_multiplier > 0.0)) {
    throw std::invalid_argument("TpsConfig: init_noise_multiplier must be > 0");
  }
  if (init_attempts < 1) throw std::invalid_argument("TpsConfig: init_attempts must be >= 1");
}

namespace {

std::string tag_for(TpsMode mode) {
  return mode == TpsMode::fixed_length ? "mcmc_fixed" : "mcmc_variable";
}

std::vector<double> start_state(const TpsConfig& c) {
  std::vector<double> x(c.dynamics->dim(), 0.0);
  std::copy(c.set_a.center.begin(), c.set_a.center.end(), x.begin());
  return x;
}

// Negate the velocity half of a second-order state.
void flip_velocities(const ReferenceDynamics& dyn, std::span<double> x) {
  if (dyn.order() != DynamicsOrder::second) return;
  for (std::size_t i = dyn.config_dim(); i < dyn.dim(); ++i) x[i] = -x[i];
}

Trajectory resample(const Trajectory& src, std::size_t n_steps, double dt) {
  Trajectory out;
  out.dim = src.dim;
  const double last = static_cast<double>(src.size() - 1);
  std::vector<double> x(src.dim);
  for (std::size_t k = 0; k <= n_steps; ++k) {
    const double pos = last * static_cast<double>(k) / static_cast<double>(n_steps);
    const std::size_t lo = std::min(static_cast<std::size_t>(pos), src.size() - 1);
    const std::size_t hi = std::min(lo + 1, src.size() - 1);
    const double w = pos - static_cast<double>(lo);
    for (std::size_t i = 0; i < src.dim; ++i) {
      x[i] = (1.0 - w) * src.state(lo)[i] + w * src.state(hi)[i];
    }
    out.push(static_cast<double>(k) * dt, x);
  }
  return out;
}

struct Segment {
  std::vector<double> states;  // excludes the starting point
  std::size_t steps = 0;
  bool blew_up = false;
};

// Integrates up to `steps` steps, or until a set is entered when `stop_on_entry`.
Segment integrate(const ReferenceDynamics& dyn, std::span<const double> x0, std::size_t steps,
                  bool stop_on_entry, const StateSet& a, const StateSet& b, double dt, Rng& rng) {
  Segment seg;
  const std::size_t n = dyn.dim();
  std::vector<double> x(x0.begin(), x0.end()), next(n), noise(n);
  for (std::size_t k = 0; k < steps; ++k) {
    fill_standard_normal(rng, noise);
    try {
      euler_maruyama_step(dyn, static_cast<double>(k) * dt, x, dt, noise, next, k);
    } catch (const IntegrationBlowup&) {
      seg.blew_up = true;
      ++seg.steps;
      return seg;
    }
    ++seg.steps;
    x.swap(next);
    seg.states.insert(seg.states.end(), x.begin(), x.end());
    if (stop_on_entry && (a.contains(x) || b.contains(x))) break;
  }
  return seg;
}

std::span<const double> last_state(const Segment& seg, std::span<const double> origin,
                                   std::size_t n) {
  if (seg.states.empty()) return origin;
  return {seg.states.data() + seg.states.size() - n, n};
}

}  // namespace

Trajectory initial_path(const TpsConfig& config, Rng& rng) {
  config.validate();
  const auto hot = config.dynamics->with_scaled_noise(config.init_noise_multiplier);
  const std::size_t n = hot.dim();
  const std::size_t cap =
      config.mode == TpsMode::variable_length ? config.max_steps : std::max<std::size_t>(config.max_steps, config.n_steps);
  const auto x0 = start_state(config);
  for (std::size_t attempt = 0; attempt < config.init_attempts; ++attempt) {
    std::vector<double> states(x0);
    std::vector<double> x(x0), next(n), noise(n);
    std::size_t last_in_a = 0;
    bool reached = false;
    try {
      for (std::size_t k = 0; k < cap; ++k) {
        fill_standard_normal(rng, noise);
        euler_maruyama_step(hot, static_cast<double>(k) * config.dt, x, config.dt, noise, next, k);
        x.swap(next);
        states.insert(states.end(), x.begin(), x.end());
        if (config.set_b.contains(x)) {
          reached = true;
          break;
        }
        if (config.set_a.contains(x)) last_in_a = k + 1;
      }
    } catch (const IntegrationBlowup&) {
      continue;
    }
    if (!reached) continue;
    const std::size_t total = states.size() / n;
    Trajectory seg;
    seg.dim = n;
    for (std::size_t k = last_in_a; k < total; ++k) {
      seg.push(static_cast<double>(k - last_in_a) * config.dt,
               std::span<const double>(states.data() + k * n, n));
    }
    if (config.mode == TpsMode::fixed_length) seg = resample(seg, config.n_steps, config.dt);
    if (seg.size() < 3) continue;  // no interior point to shoot from
    seg.method_tag = tag_for(config.mode);
    seg.seed = config.seed;
    return seg;
  }
  throw InitialPathError("initial_path: no A->B path within " +
                         std::to_string(config.init_attempts) + " attempts");
}

std::size_t uniform_shooting_index(std::size_t n_states, Rng& rng) {
  if (n_states < 3) throw std::invalid_argument("uniform_shooting_index: path has no interior");
  std::uniform_int_distribution<std::size_t> pick(1, n_states - 2);
  return pick(rng);
}

ShootingProposal two_way_propose(const Trajectory& current, const TpsConfig& config, Rng& rng) {
  const auto& dyn = *config.dynamics;
  const std::size_t n = dyn.dim();
  if (current.dim != n || current.size() < 3) {
    throw std::invalid_argument("two_way_propose: invalid current path");
  }
  const bool variable = config.mode == TpsMode::variable_length;
  ShootingProposal prop;
  prop.shooting_index = uniform_shooting_index(current.size(), rng);
  const std::size_t i = prop.shooting_index;

  std::vector<double> origin(current.state(i).begin(), current.state(i).end());
  std::vector<double> reversed(origin);
  flip_velocities(dyn, reversed);

  const std::size_t back_budget = variable ? config.max_steps : i;
  Segment back = integrate(dyn, reversed, back_budget, variable, config.set_a, config.set_b,
                           config.dt, rng);
  prop.integration_steps = back.steps;
  if (back.blew_up) return prop;
  {
    std::vector<double> end(last_state(back, reversed, n).begin(),
                            last_state(back, reversed, n).end());
    flip_velocities(dyn, end);
    if (!config.set_a.contains(end)) {
      prop.failed = variable && back.steps >= config.max_steps && !config.set_b.contains(end);
      return prop;
    }
  }

  Segment fwd;
  if (variable) {
    if (back.steps >= config.max_steps) {
      prop.failed = true;
      return prop;
    }
    fwd = integrate(dyn, origin, config.max_steps - back.steps, true, config.set_a, config.set_b,
                    config.dt, rng);
  } else {
    fwd = integrate(dyn, origin, current.size() - 1 - i, false, config.set_a, config.set_b,
                    config.dt, rng);
  }
  prop.integration_steps += fwd.steps;
  if (fwd.blew_up) return prop;
  const auto end = last_state(fwd, origin, n);
  if (variable && !config.set_a.contains(end) && !config.set_b.contains(end)) {
    prop.failed = true;
    return prop;
  }
  if (!config.set_b.contains(end)) return prop;

  Trajectory& path = prop.path;
  path.dim = n;
  path.method_tag = tag_for(config.mode);
  path.seed = config.seed;
  std::size_t k = 0;
  std::vector<double> x(n);
  const std::size_t nb = back.states.size() / n;
  for (std::size_t j = nb; j-- > 0;) {
    std::copy_n(back.states.begin() + static_cast<std::ptrdiff_t>(j * n), n, x.begin());
    flip_velocities(dyn, x);
    path.push(static_cast<double>(k++) * config.dt, x);
  }
  path.push(static_cast<double>(k++) * config.dt, origin);
  const std::size_t nf = fwd.states.size() / n;
  for (std::size_t j = 0; j < nf; ++j) {
    path.push(static_cast<double>(k++) * config.dt,
              std::span<const double>(fwd.states.data() + j * n, n));
  }
  prop.connected = path.size() >= 3;
  return prop;
}

bool mh_accept(const Trajectory& current, const ShootingProposal& proposal, TpsMode mode,
               Rng& rng) {
  if (!proposal.connected || proposal.failed) return false;
  if (mode == TpsMode::fixed_length) return true;
  const double ratio =
      static_cast<double>(current.steps()) / static_cast<double>(proposal.path.steps());
  if (ratio >= 1.0) return true;
  return uniform(rng, 0.0, 1.0) < ratio;
}

std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag) {
  const std::size_t n = series.size();
  std::vector<double> out;
  if (n < 2) return out;
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  const std::size_t lags = std::min(max_lag, n - 1);
  for (std::size_t lag = 0; lag <= lags; ++lag) {
    double c = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) c += (series[t] - mean) * (series[t + lag] - mean);
    out.push_back(var > 0.0 ? c / var : 0.0);
  }
  return out;
}

TpsResult run_tps(const TpsConfig& config) {
  config.validate();
  const auto& potential = *config.dynamics->potential();
  const auto before = potential.counters();
  Rng rng = stream_rng(config.seed, 0);

  TpsResult res;
  res.ensemble.method = tag_for(config.mode);
  res.ensemble.seed = config.seed;
  const std::size_t warmup = static_cast<std::size_t>(
      std::llround(config.warmup_fraction * static_cast<double>(config.n_paths)));

  std::vector<Trajectory> chain;
  Trajectory current = initial_path(config, rng);
  while (res.ensemble.paths.size() < config.n_paths) {
    if (res.proposals >= config.max_proposals) {
      throw std::runtime_error("run_tps: proposal budget exhausted after " +
                               std::to_string(res.proposals) + " proposals");
    }
    ShootingProposal prop = two_way_propose(current, config, rng);
    ++res.proposals;
    if (mh_accept(current, prop, config.mode, rng)) {
      current = std::move(prop.path);
      ++res.accepted;
      chain.push_back(current);
      if (res.accepted > warmup) res.ensemble.paths.push_back(current);
    }
  }
  res.gradient_evaluations = potential.counters().gradient - before.gradient;
  res.acceptance_rate = static_cast<double>(res.accepted) / static_cast<double>(res.proposals);
  res.ensemble.gradient_evaluations = res.gradient_evaluations;
  res.ensemble.proposals = res.proposals;
  res.ensemble.acceptance_rate = res.acceptance_rate;

  // Diagnostics run on a separate copy so the run's counters stay exact.
  const auto probe = config.dynamics->with_potential(potential.fresh_copy());
  res.chain_log_likelihood.reserve(chain.size());
  for (const auto& path : chain) res.chain_log_likelihood.push_back(path_log_likelihood(path, probe));
  res.log_likelihood_autocorrelation = autocorrelation(res.chain_log_likelihood, 50);
  return res;
}

}  // namespace doob
