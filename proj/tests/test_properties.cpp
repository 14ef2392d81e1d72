#include <gtest/gtest.h>

#include "properties.hpp"

namespace doob::props {
namespace {

void expect_pass(const PropertyResult& r) {
  EXPECT_TRUE(r.passed) << r.name << ": worst " << r.worst << " > tolerance " << r.tolerance << " "
                        << r.detail;
}

TEST(Properties, FpeResidual) { expect_pass(fpe_residual(100, 7)); }
TEST(Properties, BoundaryExactness) { expect_pass(boundary_exactness(7)); }
TEST(Properties, LossGradientMatchesFiniteDifferences) { expect_pass(loss_gradient_fd(7)); }
TEST(Properties, MixtureConvexHull) { expect_pass(mixture_convex_hull(7)); }
TEST(Properties, DriftReconstruction) { expect_pass(drift_reconstruction(7)); }
TEST(Properties, SamplerCounterInvariance) { expect_pass(sampler_counter_invariance(7)); }
TEST(Properties, ReportDeterminism) { expect_pass(report_determinism(7)); }

}  // namespace
}  // namespace doob::props
