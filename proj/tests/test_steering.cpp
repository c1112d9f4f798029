#include "schrodctl/random.hpp"
#include "schrodctl/steering.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace schrodctl;

namespace {

struct Setup {
  EigenSystem system;
  CouplingMatrix coupling;
};

const Setup &setup12() {
  static const Setup s = [] {
    auto e = solve_sturm_liouville(Potential::linear(0.0, 10.0, 2048), 12, 2048);
    auto c = coupling_matrix(Profile::polynomial({0.0, 0.0, 1.0}, 2048), e);
    return Setup{std::move(e), std::move(c)};
  }();
  return s;
}

StateCoeffs random_state(const BasisPtr &basis, Rng &rng) {
  ComplexVector c(static_cast<Eigen::Index>(basis->size()));
  for (Eigen::Index j = 0; j < c.size(); ++j)
    c[j] = cplx(rng.normal(), rng.normal());
  return {c / c.norm(), basis};
}

/// Sphere point whose tangent offset from zt has H^3 size `size`.
StateCoeffs perturbed(const StateCoeffs &zt, const StateCoeffs &direction, double size) {
  StateCoeffs w = project_tangent(direction, zt);
  w = cplx(size / hs_norm(w, 3.0)) * w;
  return lift(w, zt);
}

} // namespace

TEST(Chart, ProjectionExamples) {
  const auto &s = setup12();
  Rng rng(1);
  const auto zt = random_state(s.coupling.basis, rng);
  EXPECT_LE(project_tangent(zt, zt).l2_norm(), 1e-15);
  const auto iz = cplx(0.0, 1.0) * zt;
  EXPECT_LE((project_tangent(iz, zt) - iz).l2_norm(), 1e-15);
  for (int i = 0; i < 10; ++i) {
    const auto z = random_state(s.coupling.basis, rng);
    EXPECT_LE(std::abs(inner(project_tangent(z, zt), zt).real()), 1e-14);
  }
}

TEST(Chart, LiftRoundTrip) {
  const auto &s = setup12();
  Rng rng(2);
  const auto zt = random_state(s.coupling.basis, rng);
  EXPECT_LE((lift(StateCoeffs::zero(zt.basis), zt) - zt).l2_norm(), 1e-15);
  for (int i = 0; i < 20; ++i) {
    StateCoeffs w = project_tangent(random_state(s.coupling.basis, rng), zt);
    w = cplx(0.45 * rng.uniform()) * w.normalized();
    const auto z = lift(w, zt);
    EXPECT_NEAR(z.l2_norm(), 1.0, 1e-12);
    EXPECT_LE((project_tangent(z, zt) - w).l2_norm(), 1e-12);
  }
  StateCoeffs big = project_tangent(random_state(s.coupling.basis, rng), zt).normalized();
  EXPECT_THROW(lift(cplx(0.6) * big, zt), ValidationError);
  EXPECT_THROW(lift(cplx(0.1) * zt, zt), ValidationError);
}

TEST(Newton, IdenticalEndpointsConvergeImmediately) {
  const auto &s = setup12();
  const auto e1 = StateCoeffs::mode(s.coupling.basis, 1);
  const auto run = newton_control(e1, e1, s.coupling);
  EXPECT_EQ(run.status, SteeringStatus::converged);
  ASSERT_EQ(run.iterates.size(), 1u);
  EXPECT_EQ(run.iterates[0].error_h3, 0.0);
  EXPECT_TRUE(run.control.empty());
}

TEST(Newton, SmallPerturbationContracts) {
  const auto &s = setup12();
  const auto e1 = StateCoeffs::mode(s.coupling.basis, 1);
  auto dir = StateCoeffs::zero(s.coupling.basis);
  dir[0] = cplx(0.0, 1.0);
  dir[1] = 1.0;
  const auto z1 = perturbed(e1, dir, 1e-3);
  SteeringConfig cfg;
  cfg.max_iter = 8;
  cfg.rel_tol = 1e-5;
  const auto run = newton_control(e1, z1, s.coupling, cfg);
  EXPECT_EQ(run.status, SteeringStatus::converged);
  ASSERT_GE(run.iterates.size(), 2u);
  EXPECT_NEAR(run.initial_error, 1e-3, 1e-4);
  EXPECT_LE(run.final_error, run.initial_error / 10.0);
  std::size_t steps_to_10x = 0;
  for (std::size_t j = 1; j < run.iterates.size(); ++j) {
    if (run.iterates[j - 1].error_h3 > 1e-7)
      EXPECT_LE(run.iterates[j].error_h3, 0.7 * run.iterates[j - 1].error_h3) << j;
    if (steps_to_10x == 0 && run.iterates[j].error_h3 <= run.initial_error / 10.0)
      steps_to_10x = j;
    EXPECT_LE(run.iterates[j].tangency, 1e-9);
  }
  EXPECT_GE(steps_to_10x, 1u);
  EXPECT_LE(steps_to_10x, 8u);
  EXPECT_LT(run.iterates.back().theta_norm, 1.0);
  EXPECT_TRUE(run.return_time.found);
  EXPECT_FALSE(run.outside_local_regime);
}

TEST(Newton, GlobalPhaseOfTargetKeepsConvergence) {
  const auto &s = setup12();
  const auto e1 = StateCoeffs::mode(s.coupling.basis, 1);
  auto dir = StateCoeffs::zero(s.coupling.basis);
  dir[0] = cplx(0.0, 1.0);
  dir[1] = cplx(1.0, 0.5);
  const auto z1 = perturbed(e1, dir, 1e-3);
  SteeringConfig cfg;
  cfg.max_iter = 4;
  cfg.rel_tol = 1e-5;
  const auto a = newton_control(e1, z1, s.coupling, cfg);
  const auto b = newton_control(e1, cplx(std::polar(1.0, 2e-4)) * z1, s.coupling, cfg);
  EXPECT_EQ(a.status, SteeringStatus::converged);
  EXPECT_EQ(b.status, SteeringStatus::converged);
  EXPECT_LE(a.final_error, 1e-5 * a.initial_error);
  EXPECT_LE(b.final_error, 1e-5 * b.initial_error);
}

// omega_31 lies next to a zero of the common atom transform (4 pi / h for
// h = 0.4), so the e3 component needs large weights and Newton slows down.
TEST(Newton, DirectionNearAtomSpectralZeroStillReduces) {
  const auto &s = setup12();
  const auto e1 = StateCoeffs::mode(s.coupling.basis, 1);
  auto dir = StateCoeffs::zero(s.coupling.basis);
  dir[1] = cplx(1.0, 0.5);
  dir[2] = 0.3;
  const auto z1 = perturbed(e1, dir, 1e-3);
  SteeringConfig cfg;
  cfg.max_iter = 6;
  const auto run = newton_control(e1, z1, s.coupling, cfg);
  EXPECT_NE(run.status, SteeringStatus::diverged);
  EXPECT_LE(run.iterates[1].error_h3, run.initial_error / 10.0);
  EXPECT_LE(run.final_error, run.initial_error / 50.0);
}

TEST(Newton, FarTargetIsFlagged) {
  const auto &s = setup12();
  const auto e1 = StateCoeffs::mode(s.coupling.basis, 1);
  auto dir = StateCoeffs::zero(s.coupling.basis);
  dir[1] = 1.0;
  dir[3] = cplx(0.0, 1.0);
  const StateCoeffs w = cplx(0.3) * project_tangent(dir, e1).normalized();
  const auto z1 = lift(w, e1);
  SteeringConfig cfg;
  cfg.max_iter = 4;
  const auto run = newton_control(e1, z1, s.coupling, cfg);
  EXPECT_TRUE(run.outside_local_regime);
  EXPECT_NE(run.status, SteeringStatus::converged);
}

TEST(Newton, ObstructedBaseStateIsRejected) {
  const auto &s = setup12();
  const double qpp = s.coupling.q(0, 0), qqq = s.coupling.q(1, 1);
  auto zt = StateCoeffs::zero(s.coupling.basis);
  zt[0] = std::sqrt(qqq / (qpp + qqq));
  zt[1] = std::sqrt(qpp / (qpp + qqq));
  EXPECT_THROW(newton_control(zt, zt, s.coupling), ObstructedState);
}
