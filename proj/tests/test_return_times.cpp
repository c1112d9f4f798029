#include "schrodctl/return_times.hpp"
#include "schrodctl/random.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace schrodctl;

namespace {

double direct_defect(const std::vector<double> &lambdas, long long k) {
  double d = 0.0;
  for (double l : lambdas)
    d += std::abs(std::polar(1.0, -l * static_cast<double>(k)) - 1.0);
  return d;
}

} // namespace

TEST(FindReturnTime, ExactPeriods) {
  const auto a = find_return_time({2.0 * pi, 4.0 * pi, 10.0 * pi}, 1e-9, 100);
  EXPECT_TRUE(a.found);
  EXPECT_EQ(a.k, 1);
  EXPECT_LE(a.defect, 1e-12);

  const auto b = find_return_time({2.0 * pi / 3.0}, 1e-9, 100);
  EXPECT_TRUE(b.found);
  EXPECT_EQ(b.k, 3);
  EXPECT_LE(b.defect, 1e-12);
}

TEST(FindReturnTime, FreeSpectrumMatchesBruteForceScan) {
  const std::vector<double> lambdas{pi * pi, 4.0 * pi * pi, 9.0 * pi * pi};
  const auto r = find_return_time(lambdas, 0.1, 1'000'000);
  ASSERT_TRUE(r.found);
  EXPECT_LT(r.defect, 0.1);

  long long oracle = 0;
  for (long long k = 1; k <= 1'000'000; ++k)
    if (direct_defect(lambdas, k) < 0.1) {
      oracle = k;
      break;
    }
  EXPECT_EQ(r.k, oracle);
  EXPECT_NEAR(r.defect, direct_defect(lambdas, r.k), 1e-9);
  ASSERT_EQ(r.phase_errors.size(), 3u);
}

TEST(FindReturnTime, NotFoundReportsArgmin) {
  const std::vector<double> lambdas{1.0, std::sqrt(2.0), std::sqrt(3.0), std::sqrt(5.0)};
  const auto r = find_return_time(lambdas, 1e-6, 50);
  EXPECT_FALSE(r.found);
  double best = 1e300;
  long long arg = 0;
  for (long long k = 1; k <= 50; ++k)
    if (direct_defect(lambdas, k) < best) {
      best = direct_defect(lambdas, k);
      arg = k;
    }
  EXPECT_EQ(r.k, arg);
  EXPECT_NEAR(r.defect, best, 1e-12);
}

TEST(FindReturnTime, InvariantUnderTwoPiShifts) {
  const std::vector<double> a{1.3, 2.9, 7.7};
  const std::vector<double> b{1.3 + 2.0 * pi * 3, 2.9 - 2.0 * pi * 5, 7.7 + 2.0 * pi * 11};
  for (long long k : {1LL, 7LL, 113LL, 4096LL})
    EXPECT_NEAR(direct_defect(a, k), direct_defect(b, k), 1e-9);
  const auto ra = find_return_time(a, 0.3, 100000);
  const auto rb = find_return_time(b, 0.3, 100000);
  EXPECT_EQ(ra.k, rb.k);
  EXPECT_NEAR(ra.defect, rb.defect, 1e-9);
}

TEST(FindReturnTime, GaugeShiftIsDividedOut) {
  const std::vector<double> physical{pi * pi - 9.0, 4.0 * pi * pi - 9.0};
  const double shift = 10.0 - pi * pi;
  std::vector<double> shifted;
  for (double l : physical)
    shifted.push_back(l + shift);
  const auto a = find_return_time(physical, 0.05, 100000);
  const auto b = find_return_time(shifted, 0.05, 100000, shift);
  EXPECT_EQ(a.k, b.k);
  EXPECT_NEAR(a.defect, b.defect, 1e-9);
}

TEST(VerifyReturn, SingleModeAndExactReturn) {
  const auto e = solve_sturm_liouville(Potential::zero(1024), 8, 1024);
  const auto e1 = StateCoeffs::mode(e.basis, 1);
  const auto chk = verify_return(e1, 226, 3.0);
  const double lam = e.lambdas()[0];
  EXPECT_NEAR(chk.value, std::abs(std::polar(1.0, -lam * 226.0) - 1.0) * std::pow(lam, 1.5), 1e-9);
  EXPECT_NEAR((free_evolution(e1, 226.0) - e1).coeffs.norm() * std::pow(lam, 1.5), chk.value, 1e-9);

  auto basis = std::make_shared<SpectralBasis>();
  basis->lambdas = RealVector{{2.0 * pi, 4.0 * pi, 6.0 * pi}};
  basis->multi_index = {{1}, {2}, {3}};
  const StateCoeffs z(ComplexVector{{0.6, 0.0, cplx(0.0, 0.8)}}, basis);
  EXPECT_LE(verify_return(z, 5, 3.0).value, 1e-12);
}

TEST(VerifyReturn, BoundDecompositionHolds) {
  const auto e = solve_sturm_liouville(Potential::linear(0.0, 10.0, 1024), 8, 1024);
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    ComplexVector c(8);
    for (Eigen::Index j = 0; j < 8; ++j)
      c[j] = cplx(rng.normal(), rng.normal()) / std::pow(double(j + 1), 3);
    const StateCoeffs z(c / c.norm(), e.basis);
    const auto r = find_return_time(*e.basis, 3, 0.3, 1'000'000);
    ASSERT_TRUE(r.found);
    const auto chk = verify_return(z, r.k, 3.0, 3);

    const auto moved = free_evolution(z, static_cast<double>(r.k));
    EXPECT_NEAR(hs_norm(moved - z, 3.0), chk.value, 1e-8 * (1.0 + chk.value));
    double head_err = 0.0, head = 0.0, tail = 0.0;
    for (Eigen::Index j = 0; j < 8; ++j) {
      const double w = std::pow(e.lambdas()[j], 3) * std::norm(z.coeffs[j]);
      if (j < 3) {
        head += w;
        head_err = std::max(head_err, std::abs(std::polar(1.0, -e.lambdas()[j] * double(r.k)) - 1.0));
      } else {
        tail += w;
      }
    }
    const double bound = head_err * std::sqrt(head) + 2.0 * std::sqrt(tail);
    EXPECT_NEAR(chk.bound, bound, 1e-8 * bound);
    EXPECT_LE(chk.value, chk.bound);
  }
}
