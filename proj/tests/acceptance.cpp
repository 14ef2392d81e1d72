// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are pinned below.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "doob/experiment.hpp"
#include "doob/metrics.hpp"
#include "doob/sampler.hpp"
#include "doob/shooting.hpp"
#include "doob/trainer.hpp"
#include "properties.hpp"

namespace fs = std::filesystem;
using namespace doob;

namespace tol {
// Brownian bridge
constexpr double kBridgeW1Fraction = 0.05;  // of sqrt(2 g T)
constexpr double kBridgeDriftRelErr = 0.05;
constexpr double kBridgeRuntimeS = 120.0;
// Mueller-Brown "Ours" row
constexpr std::uint64_t kOursEvaluations = 1'280'000;
constexpr double kMaxEnergyCenter = -14.81, kMaxEnergyHalfWidth = 10.0;
constexpr double kMinMaxCeiling = -35.0;
constexpr double kLogLikCenter = 858.5, kLogLikHalfWidth = 40.0;
// Shooting baselines
constexpr std::uint64_t kVariableEvalsLo = 1'000'000, kVariableEvalsHi = 20'000'000;
constexpr double kFixedOverVariable = 50.0;
// Dual channel
constexpr double kK1MinorityCeiling = 0.05;
constexpr double kK2ChannelFloor = 0.20;
constexpr std::size_t kDualIterations = 5000, kDualBatch = 256;
constexpr double kDualRuntimeS = 600.0;
// W1 study
constexpr double kMeanW1Ceiling = 0.30;
constexpr double kEndpointW1Ceiling = 0.10;
// Spline ablation: differences below this count as ties.
constexpr double kW1Tie = 0.01;
}  // namespace tol

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentConfig config(const std::string& name) {
  return load_config(fs::path(DOOB_SOURCE_DIR) / "configs" / (name + ".json"));
}

struct Setup {
  ExperimentConfig cfg;
  PotentialPtr potential;
  std::shared_ptr<const ReferenceDynamics> dynamics;
};

Setup setup(const std::string& name) {
  Setup s;
  s.cfg = config(name);
  s.potential = make_potential(s.cfg.potential);
  s.dynamics = make_dynamics(s.cfg.dynamics, s.potential);
  return s;
}

ReportRow report(const Setup& s, const Ensemble& e) {
  const auto probe_pot = s.potential->fresh_copy();
  const auto probe = s.dynamics->with_potential(probe_pot);
  return ensemble_report(e, *probe_pot, probe, StartDensity{s.cfg.boundary.A, s.cfg.boundary.sigma_min_sq},
                         s.cfg.boundary.B);
}

// Shared state: the trained MB model and the fixed-length reference are reused
// by the W1 and ablation criteria.
struct Shared {
  std::optional<BridgeModel> mb_model;
  std::uint64_t mb_evaluations = 0;
  std::optional<Ensemble> fixed_reference;
  std::uint64_t fixed_evaluations = 0;
};

BridgeModel& mb_model(Shared& sh) {
  if (!sh.mb_model) {
    const auto s = setup("mueller_brown");
    auto tc = make_train_config(s.cfg, s.dynamics);
    tc.seed = derive_seeds(s.cfg.seed).train;
    auto [model, rep] = train(tc);
    sh.mb_evaluations = rep.gradient_evaluations;
    std::printf("  trained MB model in %.1f s\n", rep.wall_time_s);
    sh.mb_model = std::move(model);
  }
  return *sh.mb_model;
}

const Ensemble& fixed_reference(Shared& sh) {
  if (!sh.fixed_reference) {
    const auto s = setup("mb_tps_fixed");
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_tps(make_tps_config(s.cfg, s.dynamics));
    sh.fixed_evaluations = r.gradient_evaluations;
    std::printf("  fixed-length shooting: %llu evaluations in %.1f s\n",
                static_cast<unsigned long long>(r.gradient_evaluations), seconds_since(t0));
    sh.fixed_reference = std::move(r.ensemble);
  }
  return *sh.fixed_reference;
}

// Brownian bridge: zero drift, G = g I. The exact marginal is
// N(A + (t/T)(B - A), 2 g t (T - t) / T + sigma_min^2) and v = (B - x) / (2 g (T - t)).
struct BridgeResult {
  double worst_w1 = 0.0, drift_err = 0.0, bound = 0.0, seconds = 0.0;
};

BridgeResult bridge_case(std::size_t D) {
  const double xi = 1.0, g = 0.5 * xi * xi, T = 1.0, smin = 1e-4;
  TrainConfig c;
  c.iterations = 10000;
  c.batch_size = 256;
  c.adam.learning_rate = 1e-3;
  c.lr_schedule = LrSchedule::cosine;
  c.backend.hidden = {64, 64, 64};
  c.boundary.A.assign(D, 0.0);
  c.boundary.B = {1.0, -0.5};
  c.boundary.B.resize(D);
  c.boundary.T = T;
  c.boundary.sigma_min_sq = smin;
  c.dynamics = std::make_shared<ReferenceDynamics>(first_order_toy(flat_potential(D), xi));
  c.t_margin = 1e-3;
  c.seed = 5;
  const auto t0 = std::chrono::steady_clock::now();
  const auto [model, rep] = train(c);
  BridgeResult r;
  r.bound = tol::kBridgeW1Fraction * std::sqrt(2 * g * T);
  const auto& A = c.boundary.A;
  const auto& B = c.boundary.B;
  for (double s : {0.25, 0.5, 0.75}) {
    // For diagonal Gaussians W2 has a closed form, and W1 <= W2.
    const double t = s * T;
    const auto m = model.marginal(0, t);
    const double var = 2 * g * t * (T - t) / T + smin;
    double w2 = 0.0;
    for (std::size_t k = 0; k < D; ++k) {
      const double dm = m.mu[k] - (A[k] + s * (B[k] - A[k]));
      const double ds = std::sqrt(m.sigma[k]) - std::sqrt(var);
      w2 += dm * dm + ds * ds;
    }
    r.worst_w1 = std::max(r.worst_w1, std::sqrt(w2));
  }
  Rng rng = stream_rng(9, D);
  double num = 0.0, den = 0.0;
  std::vector<double> x(D);
  for (int i = 0; i < 2000; ++i) {
    const double t = uniform(rng, 0.1 * T, 0.9 * T);
    const double var = 2 * g * t * (T - t) / T + smin;
    fill_standard_normal(rng, x);
    for (std::size_t k = 0; k < D; ++k) x[k] = A[k] + t / T * (B[k] - A[k]) + std::sqrt(var) * x[k];
    const auto mix = model.drift(t, x);
    for (std::size_t k = 0; k < D; ++k) {
      const double v = (B[k] - x[k]) / (2 * g * (T - t));
      const double vh = mix.u[k] / (2 * g);  // b = 0, so u = 2 g v
      num += (vh - v) * (vh - v);
      den += v * v;
    }
  }
  r.drift_err = std::sqrt(num / den);
  r.seconds = seconds_since(t0);
  return r;
}

Outcome crit_bridge(Shared&) {
  Outcome o;
  o.pass = true;
  std::ostringstream d;
  double total = 0.0;
  for (std::size_t D : {1, 2}) {
    const auto r = bridge_case(D);
    total += r.seconds;
    const bool ok = r.worst_w1 <= r.bound && r.drift_err <= tol::kBridgeDriftRelErr;
    o.pass = o.pass && ok;
    d << "D=" << D << ": max W1 bound " << fmt(r.worst_w1) << " (<= " << fmt(r.bound) << "), v rel err "
      << fmt(r.drift_err) << " (<= " << tol::kBridgeDriftRelErr << "); ";
  }
  o.pass = o.pass && total <= tol::kBridgeRuntimeS;
  d << "runtime " << fmt(total, 1) << " s (<= " << tol::kBridgeRuntimeS << ")";
  o.detail = d.str();
  return o;
}

Outcome crit_ours(Shared& sh) {
  const auto s = setup("mueller_brown");
  const auto& model = mb_model(sh);
  auto ens = generate_ensemble(model, s.cfg.sampling.n_paths, s.cfg.steps, derive_seeds(s.cfg.seed).sample);
  ens.gradient_evaluations = sh.mb_evaluations;
  const auto row = report(s, ens);
  const bool evals = row.evaluations == tol::kOursEvaluations;
  const bool emax = std::abs(row.max_energy_mean - tol::kMaxEnergyCenter) <= tol::kMaxEnergyHalfWidth;
  const bool minmax = row.minmax_energy <= tol::kMinMaxCeiling;
  const bool ll = std::abs(row.log_likelihood_mean - tol::kLogLikCenter) <= tol::kLogLikHalfWidth;
  Outcome o;
  o.pass = evals && emax && minmax && ll && row.n_paths == s.cfg.sampling.n_paths;
  o.detail = "evaluations " + std::to_string(row.evaluations) + " (== 1280000), max energy " +
             fmt(row.max_energy_mean, 2) + " +- " + fmt(row.max_energy_std, 2) + " (-14.81 +- 10), MinMax " +
             fmt(row.minmax_energy, 2) + " (<= -35), log-likelihood " + fmt(row.log_likelihood_mean, 2) +
             " +- " + fmt(row.log_likelihood_std, 2) + " (858.5 +- 40), paths " + std::to_string(row.n_paths) +
             ", failures " + std::to_string(row.failures);
  return o;
}

Outcome crit_shooting(Shared& sh) {
  const auto s = setup("mb_tps_variable");
  const auto t0 = std::chrono::steady_clock::now();
  auto r = run_tps(make_tps_config(s.cfg, s.dynamics));
  std::printf("  variable-length shooting: %llu evaluations in %.1f s\n",
              static_cast<unsigned long long>(r.gradient_evaluations), seconds_since(t0));
  const auto probe = s.potential->fresh_copy();
  const double minmax = ensemble_minmax(r.ensemble, *probe);
  const auto& fixed = fixed_reference(sh);
  const double ratio = static_cast<double>(sh.fixed_evaluations) / static_cast<double>(r.gradient_evaluations);
  Outcome o;
  o.pass = r.gradient_evaluations >= tol::kVariableEvalsLo && r.gradient_evaluations <= tol::kVariableEvalsHi &&
           minmax <= tol::kMinMaxCeiling && ratio >= tol::kFixedOverVariable &&
           r.ensemble.paths.size() == s.cfg.tps.n_paths && fixed.paths.size() == s.cfg.tps.n_paths;
  o.detail = "variable " + std::to_string(r.gradient_evaluations) + " evaluations (1M..20M), MinMax " +
             fmt(minmax, 2) + " (<= -35), acceptance " + fmt(r.acceptance_rate, 3) + "; fixed " +
             std::to_string(sh.fixed_evaluations) + " evaluations, ratio " + fmt(ratio, 1) + " (>= 50)";
  return o;
}

Outcome crit_dual(Shared&) {
  Outcome o;
  o.pass = true;
  std::ostringstream d;
  d << "training " << tol::kDualIterations << " x " << tol::kDualBatch;
  for (const char* name : {"dual_channel_k1", "dual_channel_k2"}) {
    const auto s = setup(name);
    auto tc = make_train_config(s.cfg, s.dynamics);
    tc.iterations = tol::kDualIterations;
    tc.batch_size = tol::kDualBatch;
    tc.seed = derive_seeds(s.cfg.seed).train;
    const auto t0 = std::chrono::steady_clock::now();
    const auto [model, rep] = train(tc);
    const auto e = generate_ensemble(model, s.cfg.sampling.n_paths, s.cfg.steps, derive_seeds(s.cfg.seed).sample);
    const double secs = seconds_since(t0);
    const auto labels = channel_labels(e, 1);
    std::size_t up = 0;
    for (int l : labels) up += l > 0 ? 1 : 0;
    const double fu = static_cast<double>(up) / static_cast<double>(labels.size());
    const double minority = std::min(fu, 1.0 - fu);
    const bool k2 = s.cfg.mixture.K == 2;
    const bool ok = (k2 ? minority >= tol::kK2ChannelFloor : minority < tol::kK1MinorityCeiling) &&
                    secs <= tol::kDualRuntimeS;
    o.pass = o.pass && ok;
    d << "; K=" << s.cfg.mixture.K << ": y>0 " << up << "/" << labels.size() << ", minority " << fmt(minority, 3)
      << (k2 ? " (>= 0.20)" : " (< 0.05)") << ", " << fmt(secs, 1) << " s";
  }
  o.detail = d.str();
  return o;
}

std::vector<W1Point> w1_for(const BridgeModel& model, const Ensemble& ref, const ExperimentConfig& cfg) {
  return w1_series(model, ref, cfg.steps, cfg.w1.stride, cfg.w1.n_samples, derive_seeds(cfg.seed).w1);
}

Outcome crit_w1(Shared& sh) {
  const auto cfg = config("w1_study");
  const auto series = w1_for(mb_model(sh), fixed_reference(sh), cfg);
  const double mean = mean_w1(series);
  const double first = series.front().w1, last = series.back().w1;
  Outcome o;
  o.pass = mean <= tol::kMeanW1Ceiling && first <= tol::kEndpointW1Ceiling && last <= tol::kEndpointW1Ceiling;
  o.detail = "mean W1 " + fmt(mean) + " (<= 0.30) over " + std::to_string(series.size()) + " times, W1 at t=0 " +
             fmt(first) + ", at t=T " + fmt(last) + " (<= 0.10)";
  return o;
}

bool same_mlp_protocol(const ExperimentConfig& ablation) {
  const auto mb = config("mueller_brown");
  const auto it = ablation.ablation.learning_rates.find("mlp");
  const double lr = it == ablation.ablation.learning_rates.end() ? ablation.training.learning_rate : it->second;
  return mb.backend.hidden == ablation.backend.hidden && mb.backend.activation == ablation.backend.activation &&
         mb.backend.output_scale == ablation.backend.output_scale && mb.training.iterations == ablation.training.iterations &&
         mb.training.batch_size == ablation.training.batch_size && mb.training.learning_rate == lr &&
         mb.seed == ablation.seed && mb.boundary.A == ablation.boundary.A && mb.boundary.B == ablation.boundary.B;
}

Outcome crit_ablation(Shared& sh) {
  const auto s = setup("spline_ablation");
  const auto& ref = fixed_reference(sh);
  std::map<std::string, double> w1;
  std::map<std::string, std::uint64_t> evals;
  for (const auto& tag : s.cfg.ablation.backends) {
    if (tag == "mlp" && same_mlp_protocol(s.cfg)) {
      // Same backend, budget, learning rate and seed as the MB protocol run: reuse it.
      w1[tag] = mean_w1(w1_for(mb_model(sh), ref, s.cfg));
      evals[tag] = sh.mb_evaluations;
      continue;
    }
    auto tc = make_train_config(s.cfg, s.dynamics);
    tc.backend.tag = tag;
    const auto it = s.cfg.ablation.learning_rates.find(tag);
    if (it != s.cfg.ablation.learning_rates.end()) tc.adam.learning_rate = it->second;
    tc.seed = derive_seeds(s.cfg.seed).train;
    const auto [model, rep] = train(tc);
    evals[tag] = rep.gradient_evaluations;
    w1[tag] = mean_w1(w1_for(model, ref, s.cfg));
  }
  const double m = w1.at("mlp"), c = w1.at("spline_cubic"), l = w1.at("spline_linear");
  const bool matched = evals.at("mlp") == evals.at("spline_cubic") && evals.at("mlp") == evals.at("spline_linear");
  const bool linear_worse = l >= m;
  const bool cubic_between = c >= std::min(l, m) - tol::kW1Tie && c <= std::max(l, m) + tol::kW1Tie;
  Outcome o;
  o.pass = matched && linear_worse && cubic_between;
  o.detail = "mean W1 mlp " + fmt(m) + ", cubic " + fmt(c) + ", linear " + fmt(l) +
             " (need linear >= mlp; cubic within [min, max] +- 0.01); evaluations per backend " +
             std::to_string(evals.at("mlp")) + (matched ? " (matched)" : " (NOT matched)");
  return o;
}

Outcome crit_properties(Shared&) {
  const auto results = props::property_suite(7);
  Outcome o;
  o.pass = true;
  std::ostringstream d;
  for (const auto& r : results) {
    o.pass = o.pass && r.passed;
    if (d.tellp() > 0) d << "; ";
    d << r.name << (r.passed ? " ok" : " FAILED") << " (worst " << r.worst << ", tolerance " << r.tolerance << ")";
  }
  o.detail = d.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::vector<int> only;
  int threads = 0;
  app.add_option("--only", only, "Criterion numbers to run (default: all)");
  app.add_option("--threads", threads, "OpenMP threads (default: runtime default)");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome(Shared&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "brownian_bridge_recovery", crit_bridge},
      {2, "mueller_brown_ours_row", crit_ours},
      {3, "shooting_baseline_ordering", crit_shooting},
      {4, "dual_channel_expressivity", crit_dual},
      {5, "w1_marginal_study", crit_w1},
      {6, "spline_ablation_direction", crit_ablation},
      {7, "property_suites", crit_properties},
  };
  const std::set<int> selected(only.begin(), only.end());
  Shared shared;
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::printf("[%d] %s\n", c.id, c.name);
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(shared);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
