#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>

#include "doob/metrics.hpp"
#include "doob/path_backend.hpp"
#include "doob/sampler.hpp"
#include "properties.hpp"

namespace doob {
namespace {

// Exact Brownian bridge under zero drift: zero mean perturbation and softplus(r) = 2 g T.
BridgeModel exact_bridge(const BoundaryPair& bc, double xi) {
  const std::size_t d = bc.dim();
  const double g = 0.5 * xi * xi;
  auto spline = SplineBackend::uniform(SplineKind::linear, d, 4);
  std::vector<double> p(spline.num_params(), 0.0);
  const double r = std::log(std::expm1(2 * g * bc.T));
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t i = 0; i < d; ++i) p[k * 2 * d + d + i] = r;
  }
  spline.set_params(p);
  std::vector<std::unique_ptr<PathBackend>> comps;
  comps.push_back(spline.clone());
  return BridgeModel(bc, std::vector<double>(d, xi), std::move(comps), {0.0}, 1.0, false);
}

BoundaryPair mb_boundary() {
  BoundaryPair bc;
  bc.A = {-0.558224, 1.441726};
  bc.B = {0.623499, 0.028038};
  bc.T = 0.0275;
  return bc;
}

TEST(Sampler, PathShapeAndPinnedStart) {
  Rng rng(1);
  const auto bc = mb_boundary();
  const auto model = props::random_model("mlp", 2, bc, 5.0, rng);
  const auto path = generate_path(model, 275, rng);
  EXPECT_EQ(path.size(), 276u);
  EXPECT_EQ(path.dim, 2u);
  EXPECT_DOUBLE_EQ(path.times.front(), 0.0);
  EXPECT_NEAR(path.times.back(), bc.T, 1e-15);
  // Start spread is sigma_min = 0.01.
  EXPECT_LT(std::hypot(path.front()[0] - bc.A[0], path.front()[1] - bc.A[1]), 0.06);
}

TEST(Sampler, DeterministicPerSeedAndSingletonMatchesGeneratePath) {
  Rng rng(2);
  const auto model = props::random_model("spline_cubic", 2, mb_boundary(), 5.0, rng);
  const auto a = generate_ensemble(model, 20, 100, 9);
  const auto b = generate_ensemble(model, 20, 100, 9);
  ASSERT_EQ(a.paths.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(a.paths[i].states, b.paths[i].states);
  const auto c = generate_ensemble(model, 20, 100, 10);
  EXPECT_NE(a.paths[0].states, c.paths[0].states);

  Rng r = stream_rng(9, 0);
  const auto single = generate_path(model, 100, r);
  EXPECT_EQ(single.states, a.paths[0].states);
  EXPECT_EQ(a.gradient_evaluations, 0u);
}

TEST(Sampler, SerialAndParallelEnsemblesIdentical) {
  Rng rng(3);
  const auto model = props::random_model("mlp", 2, mb_boundary(), 5.0, rng);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(3);
  const auto par = generate_ensemble(model, 30, 275, 4);
  omp_set_num_threads(saved);
  const auto ser = generate_ensemble_serial(model, 30, 275, 4);
  ASSERT_EQ(par.paths.size(), ser.paths.size());
  for (std::size_t i = 0; i < par.paths.size(); ++i) EXPECT_EQ(par.paths[i].states, ser.paths[i].states);
}

TEST(Sampler, TouchesNoPotential) {
  const auto p = mueller_brown();
  const auto dyn = first_order_toy(p, 5.0);
  Rng rng(4);
  const auto model = props::random_model("mlp", 1, mb_boundary(), 5.0, rng);
  generate_ensemble(model, 50, 275, 1);
  EXPECT_EQ(p->counters().gradient, 0u);
  EXPECT_EQ(p->counters().energy, 0u);
}

TEST(Sampler, ExactBridgeMidpointStatistics) {
  BoundaryPair bc{{0.0, 0.0}, {1.0, -0.5}, 1.0, 1e-6};
  const double xi = 0.8, g = 0.5 * xi * xi;
  const auto model = exact_bridge(bc, xi);
  const std::size_t n = 4000, steps = 200;
  const auto ens = generate_ensemble(model, n, steps, 11);
  const auto mid = states_at(ens, steps / 2);
  const double var = 2 * g * 0.25 + bc.sigma_min_sq;
  for (std::size_t i = 0; i < 2; ++i) {
    double m = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      m += mid.point(j)[i];
      m2 += mid.point(j)[i] * mid.point(j)[i];
    }
    m /= n;
    const double v = m2 / n - m * m;
    EXPECT_NEAR(m, 0.5 * (bc.A[i] + bc.B[i]), 4 * std::sqrt(var / n));
    EXPECT_NEAR(v / var, 1.0, 0.1);
  }
  // The last Euler step lands on B plus one increment of noise, so the mean
  // endpoint distance is xi sqrt(dt) sqrt(pi / 2) in two dimensions.
  double end_err = 0.0;
  for (const auto& p : ens.paths) end_err += std::hypot(p.back()[0] - 1.0, p.back()[1] + 0.5);
  end_err /= n;
  const double expect = xi * std::sqrt(bc.T / steps) * std::sqrt(M_PI / 2);
  EXPECT_NEAR(end_err / expect, 1.0, 0.05);
}

TEST(Sampler, SimulatedMarginalsMatchDirectSamples) {
  // Integrating the mixture drift must reproduce the model marginal up to
  // Euler error; compare against the W1 noise floor of two direct draws.
  Rng rng(5);
  const auto bc = mb_boundary();
  const auto model = props::random_model("mlp", 2, bc, 5.0, rng);
  const std::size_t n = 400, steps = 275;
  const auto ens = generate_ensemble(model, n, steps, 12);
  double worst = 0.0, floor = 0.0;
  for (std::size_t c = 1; c <= 10; ++c) {
    const std::size_t step = c * steps / 11;
    const double t = step * bc.T / steps;
    Rng r1 = stream_rng(13, c), r2 = stream_rng(14, c);
    const auto sim = states_at(ens, step);
    const auto direct = sample_model_marginal(model, t, n, r1);
    const auto direct2 = sample_model_marginal(model, t, n, r2);
    worst = std::max(worst, w1_marginal(sim, direct));
    floor = std::max(floor, w1_marginal(direct2, direct));
  }
  EXPECT_LE(worst, 1.5 * floor) << "floor " << floor;
}

}  // namespace
}  // namespace doob
