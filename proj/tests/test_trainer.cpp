#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <limits>

#include "doob/batch_loss.hpp"
#include "doob/trainer.hpp"
#include "properties.hpp"

namespace doob {
namespace {

TrainConfig mb_config(std::size_t iterations, std::size_t batch) {
  TrainConfig tc;
  tc.iterations = iterations;
  tc.batch_size = batch;
  tc.seed = 3;
  tc.backend.hidden = {32, 32};
  tc.boundary.A = {-0.558224, 1.441726};
  tc.boundary.B = {0.623499, 0.028038};
  tc.boundary.T = 0.0275;
  tc.dynamics = std::make_shared<ReferenceDynamics>(first_order_toy(mueller_brown(), 5.0));
  tc.t_margin = 0.5e-4;
  return tc;
}

TEST(Train, EvaluationCountEqualsIterationsTimesBatch) {
  const auto tc = mb_config(7, 64);
  const auto [model, rep] = train(tc);
  EXPECT_EQ(rep.gradient_evaluations, 7u * 64u);
  EXPECT_EQ(tc.dynamics->potential()->counters().gradient, 7u * 64u);
  EXPECT_EQ(tc.dynamics->potential()->counters().energy, 0u);
  EXPECT_EQ(rep.raw_loss.size(), 7u);
  EXPECT_EQ(rep.ema_loss.front(), rep.raw_loss.front());
}

TEST(Train, MuellerBrownProtocolStepCost) {
  // One step of the 512-sample protocol costs exactly 512 gradient calls.
  auto tc = mb_config(1, 512);
  tc.backend.hidden = {128, 128, 128};
  TrainState state = init_train_state(tc);
  const auto before = tc.dynamics->potential()->counters().gradient;
  train_step(state, tc);
  EXPECT_EQ(tc.dynamics->potential()->counters().gradient - before, 512u);
}

TEST(Train, EmaRecurrence) {
  auto tc = mb_config(5, 16);
  tc.ema_alpha = 0.25;
  const auto [model, rep] = train(tc);
  double ema = rep.raw_loss[0];
  for (std::size_t i = 1; i < 5; ++i) {
    ema = 0.75 * ema + 0.25 * rep.raw_loss[i];
    EXPECT_NEAR(rep.ema_loss[i], ema, 1e-12 * ema);
  }
}

TEST(Train, SameSeedSameParameters) {
  const auto [a, ra] = train(mb_config(5, 32));
  const auto [b, rb] = train(mb_config(5, 32));
  EXPECT_EQ(a.flat_params(), b.flat_params());
  EXPECT_EQ(ra.raw_loss, rb.raw_loss);
  auto other = mb_config(5, 32);
  other.seed = 4;
  EXPECT_NE(train(other).first.flat_params(), a.flat_params());
}

TEST(Train, ThreadCountDoesNotChangeResult) {
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = train(mb_config(4, 100)).first.flat_params();
  omp_set_num_threads(3);
  const auto three = train(mb_config(4, 100)).first.flat_params();
  omp_set_num_threads(saved);
  EXPECT_EQ(one, three);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  auto tc = mb_config(3, 16);
  tc.adam.learning_rate = 0.0;
  const auto init = init_train_state(tc).model.flat_params();
  EXPECT_EQ(train(tc).first.flat_params(), init);
}

TEST(Train, FrozenLogitsStayPut) {
  auto tc = mb_config(5, 32);
  tc.mixture.K = 2;
  tc.mixture.freeze_logits = true;
  tc.mixture.initial_logits = {0.0, 0.0};
  const auto [model, rep] = train(tc);
  EXPECT_EQ(model.logits(), (std::vector<double>{0.0, 0.0}));
  EXPECT_DOUBLE_EQ(model.weights()[0], 0.5);
}

TEST(Train, RejectsInvalidConfig) {
  auto tc = mb_config(0, 16);
  EXPECT_THROW(train(tc), std::invalid_argument);
  tc = mb_config(1, 0);
  EXPECT_THROW(train(tc), std::invalid_argument);
  tc = mb_config(1, 1);
  tc.t_margin = tc.boundary.T;
  EXPECT_THROW(train(tc), std::invalid_argument);
}

TEST(Train, NonFiniteLossReportsStepAndKeepsPartialModel) {
  auto bad = std::make_shared<Potential>(
      "bad", 2, [](std::span<const double>) { return 0.0; },
      [](std::span<const double>, std::span<double> g) {
        g[0] = std::numeric_limits<double>::quiet_NaN();
        g[1] = 0.0;
      },
      [](std::span<const double>, std::span<double> g, std::span<double> h) {
        g[0] = std::numeric_limits<double>::quiet_NaN();
        g[1] = 0.0;
        std::fill(h.begin(), h.end(), 0.0);
      });
  auto tc = mb_config(3, 8);
  tc.dynamics = std::make_shared<ReferenceDynamics>(first_order_toy(bad, 5.0));
  try {
    train(tc);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.step(), 0u);
    EXPECT_EQ(e.partial_model().num_params(), init_train_state(tc).model.num_params());
  }
}

TEST(Train, GradientClipBoundsUpdate) {
  auto tc = mb_config(1, 16);
  tc.grad_clip = 1e-9;
  tc.adam.learning_rate = 0.1;
  // Adam normalizes step size, so check the clipped gradient through a single step's moments.
  TrainState state = init_train_state(tc);
  train_step(state, tc);
  double n2 = 0.0;
  for (double m : state.adam.m) n2 += m * m;
  EXPECT_LE(std::sqrt(n2), 0.1 * 1e-9 * (1 + 1e-12));
}

TEST(LearningRate, CosineSchedule) {
  TrainConfig tc;
  tc.iterations = 100;
  tc.adam.learning_rate = 2e-3;
  EXPECT_DOUBLE_EQ(learning_rate_at(tc, 50), 2e-3);
  tc.lr_schedule = LrSchedule::cosine;
  EXPECT_DOUBLE_EQ(learning_rate_at(tc, 0), 2e-3);
  EXPECT_NEAR(learning_rate_at(tc, 50), 1e-3, 1e-15);
  EXPECT_NEAR(learning_rate_at(tc, 100), 0.0, 1e-18);
  EXPECT_EQ(lr_schedule_from_string("cosine"), LrSchedule::cosine);
  EXPECT_THROW(lr_schedule_from_string("step"), std::invalid_argument);
}

TEST(BatchLoss, SerialAndParallelKernelsAgree) {
  Rng rng(5);
  for (const char* tag : {"mlp", "spline_linear", "spline_cubic"}) {
    for (std::size_t K : {1, 2}) {
      BoundaryPair bc;
      bc.A = {-0.5, 1.4};
      bc.B = {0.6, 0.03};
      bc.T = 0.0275;
      const BridgeModel model = props::random_model(tag, K, bc, 5.0, rng);
      const auto dyn = first_order_toy(mueller_brown(), 5.0);
      const auto draws = draw_batch(model, 77, 0.5e-4, rng);
      const auto s = batch_loss_serial(model, dyn, draws);
      const auto p = batch_loss_parallel(model, dyn, draws, 16);
      EXPECT_NEAR(s.mean_loss, p.mean_loss, 1e-10 * s.mean_loss) << tag << K;
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < s.grad.size(); ++j) {
        num += (s.grad[j] - p.grad[j]) * (s.grad[j] - p.grad[j]);
        den += s.grad[j] * s.grad[j];
      }
      EXPECT_LE(std::sqrt(num / den), 1e-10) << tag << K;
    }
  }
}

TEST(BatchLoss, ParallelKernelBitIdenticalAcrossThreads) {
  Rng rng(6);
  BoundaryPair bc;
  bc.A = {-0.5, 1.4};
  bc.B = {0.6, 0.03};
  bc.T = 0.0275;
  const BridgeModel model = props::random_model("mlp", 2, bc, 5.0, rng);
  const auto dyn = first_order_toy(mueller_brown(), 5.0);
  const auto draws = draw_batch(model, 200, 0.5e-4, rng);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto a = batch_loss_parallel(model, dyn, draws, 32);
  omp_set_num_threads(4);
  const auto b = batch_loss_parallel(model, dyn, draws, 32);
  omp_set_num_threads(saved);
  EXPECT_EQ(a.grad, b.grad);
  EXPECT_EQ(a.mean_loss, b.mean_loss);
}

TEST(LossAt, NonNegativeAndRejectsEndpoints) {
  Rng rng(7);
  const auto dyn = first_order_toy(mueller_brown(), 5.0);
  BoundaryPair bc;
  bc.A = {-0.5, 1.4};
  bc.B = {0.6, 0.03};
  bc.T = 0.0275;
  const BridgeModel model = props::random_model("mlp", 2, bc, 5.0, rng);
  for (const auto& d : draw_batch(model, 200, 0.0, rng)) EXPECT_GE(loss_at(model, dyn, d).loss, 0.0);
  auto d = draw_batch(model, 1, 0.0, rng).front();
  d.t = 0.0;
  EXPECT_THROW(loss_at(model, dyn, d), std::out_of_range);
  d.t = bc.T;
  EXPECT_THROW(loss_at(model, dyn, d), std::out_of_range);
}

TEST(LossAt, AnalyticBridgeParametersRecoverDoobControl) {
  // Zero reference drift: the exact bridge is representable by a spline with
  // zero mean perturbation and constant softplus(r) = 2 g T.
  const double xi = 1.2, g = 0.5 * xi * xi, T = 1.5;
  BoundaryPair bc{{0.2, -0.3}, {1.0, 0.4}, T, 1e-12};
  auto spline = SplineBackend::uniform(SplineKind::linear, 2, 5);
  std::vector<double> p(spline.num_params(), 0.0);
  const double r = std::log(std::expm1(2 * g * T));
  for (std::size_t k = 0; k < 5; ++k) {
    p[k * 4 + 2] = r;
    p[k * 4 + 3] = r;
  }
  spline.set_params(p);
  std::vector<std::unique_ptr<PathBackend>> comps;
  comps.push_back(spline.clone());
  const BridgeModel model(bc, {xi, xi}, std::move(comps), {0.0}, 1.0, false);
  const auto dyn = first_order_toy(flat_potential(2), xi);
  Rng rng(8);
  for (const auto& d : draw_batch(model, 100, 0.01, rng)) {
    const auto res = loss_at(model, dyn, d);
    double expect_loss = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      const double v = (bc.B[i] - res.x[i]) / (2 * g * (T - d.t));
      EXPECT_NEAR(res.v[i], v, 1e-6 * std::max(1.0, std::abs(v)));
      expect_loss += g * v * v;
    }
    EXPECT_NEAR(res.loss, expect_loss, 1e-6 * std::max(1.0, expect_loss));
  }
}

TEST(DrawBatch, MarginAndComponentSelection) {
  Rng rng(9);
  const BoundaryPair bc = props::random_boundary(2, rng);
  const BridgeModel model = props::random_model("mlp", 3, bc, 1.0, rng);
  const double margin = 0.1 * bc.T;
  for (const auto& d : draw_batch(model, 500, margin, rng)) {
    EXPECT_GE(d.t, margin);
    EXPECT_LE(d.t, bc.T - margin);
    EXPECT_LT(d.component, 3u);
    EXPECT_EQ(d.gumbel.size(), 3u);
    EXPECT_EQ(d.eps.size(), 2u);
  }
}

}  // namespace
}  // namespace doob
