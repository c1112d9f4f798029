// Acceptance run: one PASS/FAIL line per criterion, with wall time against
// the allowed budget. Exit status is the number of failed criteria.

#include "schrodctl/entropy.hpp"
#include "schrodctl/steering.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

using namespace schrodctl;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char *f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

int failures = 0;

void criterion(int id, const char *name, double budget_s, const std::function<Outcome()> &body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception &e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool pass = out.ok && in_time;
  failures += pass ? 0 : 1;
  std::printf("%s  %2d %-28s %s [%.2f s / %.0f s%s]\n", pass ? "PASS" : "FAIL", id, name, out.detail.c_str(), secs,
              budget_s, in_time ? "" : ", over budget");
  std::fflush(stdout);
}

CouplingMatrix linear_x2(std::size_t n, std::size_t n_grid = 2048) {
  const auto e = solve_sturm_liouville(Potential::linear(0.0, 10.0, n_grid), n, n_grid);
  return coupling_matrix(Profile::polynomial({0.0, 0.0, 1.0}, n_grid), e);
}

ControlSignal random_bumps(double horizon, std::size_t n_atoms, double scale, Rng &rng) {
  std::vector<double> w(n_atoms);
  for (auto &x : w)
    x = scale * rng.uniform(-1.0, 1.0);
  return ControlSignal::uniform(horizon, w);
}

StateCoeffs random_state(const BasisPtr &basis, const std::vector<int> &modes, Rng &rng) {
  ComplexVector c = ComplexVector::Zero(static_cast<Eigen::Index>(basis->size()));
  for (int m : modes)
    c[m - 1] = cplx(rng.normal(), rng.normal());
  return {c / c.norm(), basis};
}

Outcome spectral_fidelity() {
  const std::size_t n_grid = 2048, n = 16;
  const auto e = solve_sturm_liouville(Potential::zero(n_grid), n, n_grid);
  double worst_l = 0.0, worst_f = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    worst_l = std::max(worst_l, std::abs(e.lambdas()[static_cast<Eigen::Index>(k - 1)] - kk * kk * pi * pi) / (kk * kk));
    for (Eigen::Index i = 0; i < e.modes.rows(); ++i)
      worst_f = std::max(worst_f, std::abs(e.modes(i, static_cast<Eigen::Index>(k - 1)) -
                                           std::sqrt(2.0) * std::sin(kk * pi * e.grid[i])));
  }
  return {worst_l <= 1e-4 && worst_f <= 1e-5,
          fmt("max |dl|/k^2 = %.2e (<= 1e-4)", worst_l) + fmt(", mode sup error = %.2e (<= 1e-5)", worst_f)};
}

Outcome asymptotics() {
  const auto v = Potential::linear(0.0, 10.0, 2048);
  const auto e = solve_sturm_liouville(v, 64, 2048);
  const auto rep = check_asymptotics(e, v);
  return {rep.plateau && !rep.growth_flag, fmt("last-quarter share = %.2e (< 0.05)", rep.last_quarter_fraction) +
                                               (rep.growth_flag ? ", growth trend detected" : ", no growth trend")};
}

Outcome coupling_formula() {
  const auto e = solve_sturm_liouville(Potential::zero(2048), 20, 2048);
  const auto c = coupling_matrix(Profile::polynomial({0.0, 0.0, 1.0}, 2048), e);
  double worst = 0.0;
  for (int p = 1; p <= 20; ++p)
    for (int j = 1; j <= 20; ++j) {
      if (p == j)
        continue;
      const double d = static_cast<double>(p * p - j * j);
      const double expected = ((p + j) % 2 == 0 ? 8.0 : -8.0) * p * j / (pi * pi * d * d);
      worst = std::max(worst, std::abs(c.q(p - 1, j - 1) - expected));
    }
  return {worst <= 1e-7, fmt("max off-diagonal error = %.2e (<= 1e-7)", worst)};
}

Outcome unitarity() {
  const auto c = linear_x2(32);
  Rng rng(4);
  const auto u = random_bumps(50.0, 100, 1.0, rng);
  ComplexVector z(32);
  for (Eigen::Index j = 0; j < 32; ++j)
    z[j] = cplx(rng.normal(), rng.normal()) / static_cast<double>(j + 1);
  const StateCoeffs z0(z / z.norm(), c.basis);
  const auto tr = propagate(z0, u, c, 50.0, 1e-3, {.stride = 50000});
  const double drift = tr.max_l2_drift / z0.l2_norm();
  return {drift <= 1e-10, fmt("relative l2 drift = %.2e (<= 1e-10)", drift)};
}

Outcome rabi() {
  const double delta = 3.0, amp = 2.0;
  auto basis = std::make_shared<SpectralBasis>();
  basis->lambdas = RealVector{{1.0, 1.0 + delta}};
  basis->multi_index = {{1}, {2}};
  CouplingMatrix c{RealMatrix{{0.0, 1.0}, {1.0, 0.0}}, frequency_table(basis->lambdas), basis};
  const auto tr = propagate(StateCoeffs::mode(basis, 1), ConstantControl{amp}, c, 4.0, 1e-4, {.stride = 10});
  const double rabi_freq = std::sqrt(amp * amp + delta * delta / 4.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    const double t = tr.times[i];
    const double p2 = amp * amp / (rabi_freq * rabi_freq) * std::pow(std::sin(rabi_freq * t), 2);
    worst = std::max(worst, std::abs(std::norm(tr.states[i][1]) - p2));
  }
  return {worst <= 1e-6, fmt("max population error = %.2e (<= 1e-6)", worst)};
}

Outcome linearization() {
  const auto c = linear_x2(6, 1024);
  Rng rng(31);
  const auto zt = random_state(c.basis, {1, 2}, rng);
  StateCoeffs w = project_tangent(random_state(c.basis, {1, 2, 3, 4, 5, 6}, rng), zt);
  const auto u = random_bumps(2.0, 8, 1.0, rng);
  const double t = 2.0, dt = 1e-4;
  const auto lin = linearized_propagate(zt, u, c, t, dt, w).final_state();
  const auto base = free_evolution(zt, t);
  std::vector<double> mismatch;
  for (double eps : {4e-2, 2e-2, 1e-2, 5e-3}) {
    const StateCoeffs start = (zt + cplx(eps) * w).normalized();
    const auto z = propagate(start, [&](double s) { return eps * u(s); }, c, t, dt).final_state();
    mismatch.push_back(((1.0 / eps) * (z - base) - lin).l2_norm());
  }
  bool ok = true;
  std::ostringstream d;
  d << "mismatch ratios";
  for (std::size_t i = 0; i + 1 < mismatch.size(); ++i) {
    const double r = mismatch[i] / mismatch[i + 1];
    ok = ok && r >= 1.5 && r <= 3.0;
    d << fmt(" %.3f", r);
  }
  d << " (in [1.5, 3])";
  return {ok, d.str()};
}

Outcome moment_construction() {
  const auto c = linear_x2(12);
  Rng rng(7);
  double worst = 0.0;
  int per_case[4] = {0, 0, 0, 0};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> support;
    const int kind = trial % 3;
    if (kind == 0) {
      support = {1 + static_cast<int>(rng.index(12))};
    } else {
      const std::size_t size = kind == 1 ? 2 : 3 + rng.index(10);
      std::vector<int> all(12);
      std::iota(all.begin(), all.end(), 1);
      for (std::size_t i = 0; i < size; ++i)
        std::swap(all[i], all[i + rng.index(12 - i)]);
      support.assign(all.begin(), all.begin() + static_cast<long>(size));
    }
    const auto zt = random_state(c.basis, support, rng);
    StateCoeffs y = project_tangent(random_state(c.basis, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, rng), zt);
    const auto table = target_to_moments(zt, y, c);
    ++per_case[static_cast<int>(table.which)];
    worst = std::max(worst, moment_identity_residual(table, zt, y, c));
  }
  // Balanced two-mode states lie in the obstruction set.
  int raised = 0;
  for (auto [p, q] : {std::pair{0, 1}, std::pair{2, 5}, std::pair{3, 10}}) {
    const double qp = c.q(p, p), qq = c.q(q, q);
    auto zt = StateCoeffs::zero(c.basis);
    zt[static_cast<std::size_t>(p)] = std::sqrt(qq / (qp + qq));
    zt[static_cast<std::size_t>(q)] = std::polar(std::sqrt(qp / (qp + qq)), 0.9);
    try {
      (void)target_to_moments(zt, StateCoeffs::zero(c.basis), c);
    } catch (const ObstructedState &) {
      ++raised;
    }
  }
  const bool ok = worst <= 1e-10 && raised == 3 && per_case[1] > 0 && per_case[2] > 0 && per_case[3] > 0;
  return {ok, fmt("max identity residual = %.2e (<= 1e-10)", worst) + ", cases " + std::to_string(per_case[1]) + "/" +
                  std::to_string(per_case[2]) + "/" + std::to_string(per_case[3]) + ", obstructed raised " +
                  std::to_string(raised) + "/3"};
}

StateCoeffs case1_target(const CouplingMatrix &c, double size) {
  const auto e1 = StateCoeffs::mode(c.basis, 1);
  auto dir = StateCoeffs::zero(c.basis);
  Rng rng(8);
  for (std::size_t j = 0; j < dir.size(); ++j)
    dir[j] = cplx(rng.normal(), rng.normal()) / std::pow(static_cast<double>(j + 1), 4.0);
  StateCoeffs y = project_tangent(dir, e1);
  return cplx(size / hs_norm(y, 3.0)) * y;
}

Outcome synthesis() {
  const auto c = linear_x2(12);
  const auto e1 = StateCoeffs::mode(c.basis, 1);
  const auto y = case1_target(c, 1e-3);
  const auto table = target_to_moments(e1, y, c);
  const auto syn = synthesize_control(table, 40.0, 200, 1e-10);
  const double err = hs_norm(linearized_endpoint(e1, syn.control, c) - y, 3.0);
  return {syn.max_residual <= 1e-6 && err <= 1e-4,
          fmt("moment residual = %.2e (<= 1e-6)", syn.max_residual) + fmt(", H3 endpoint error = %.2e (<= 1e-4)", err)};
}

Outcome steering() {
  const auto c = linear_x2(12);
  const auto e1 = StateCoeffs::mode(c.basis, 1);
  auto dir = StateCoeffs::zero(c.basis);
  dir[0] = cplx(0.0, 1.0);
  dir[1] = 1.0;
  StateCoeffs w = project_tangent(dir, e1);
  w = cplx(1e-3 / hs_norm(w, 3.0)) * w;
  const auto z1 = lift(w, e1);
  SteeringConfig cfg;
  cfg.max_iter = 8;
  cfg.rel_tol = 1e-5;
  const auto run = newton_control(e1, z1, c, cfg);
  const double reduction = run.initial_error / std::max(run.final_error, 1e-300);
  const double theta = run.iterates.back().theta_norm;
  return {reduction >= 10.0 && theta < 1.0 && run.iterates.size() <= 9,
          fmt("error %.2e", run.initial_error) + fmt(" -> %.2e", run.final_error) + " in " +
              std::to_string(run.iterates.size() - 1) + " iterations" + fmt(" (x%.1e >= 10)", reduction) +
              fmt(", Theta = %.3e (< 1)", theta)};
}

Outcome obstruction_invariant_drift() {
  const auto c = linear_x2(12);
  const double qp = c.q(0, 0), qq = c.q(1, 1);
  auto zt = StateCoeffs::zero(c.basis);
  zt[0] = std::sqrt(qq / (qp + qq));
  zt[1] = std::polar(std::sqrt(qp / (qp + qq)), 0.4);
  Rng rng(10);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto u = random_bumps(20.0, 40, 1.0, rng);
    const auto tr = linearized_propagate(zt, u, c, 20.0, 1e-3, std::nullopt, {.stride = 100});
    const auto series = obstruction_invariant(tr, zt, 1, 2);
    for (double v : series)
      worst = std::max(worst, std::abs(v - series.front()));
  }
  return {worst <= 1e-8, fmt("max drift over 5 controls = %.2e (<= 1e-8)", worst)};
}

Outcome return_times() {
  const std::vector<double> lambdas{pi * pi, 4.0 * pi * pi, 9.0 * pi * pi};
  const auto rt = find_return_time(lambdas, 0.1, 1'000'000);

  auto basis = std::make_shared<SpectralBasis>();
  basis->lambdas = RealVector(8);
  for (Eigen::Index j = 0; j < 8; ++j)
    basis->lambdas[j] = static_cast<double>((j + 1) * (j + 1)) * pi * pi;
  Rng rng(11);
  ComplexVector z(8);
  for (Eigen::Index j = 0; j < 8; ++j)
    z[j] = cplx(rng.normal(), rng.normal()) / std::pow(static_cast<double>(j + 1), 3.0);
  const StateCoeffs zt(z / z.norm(), basis);
  const auto check = verify_return(zt, rt.k, 1.0, 3);
  const double split = std::abs(check.head_norm * check.head_norm + check.tail_norm * check.tail_norm -
                                std::pow(hs_norm(zt, 1.0), 2));
  const bool ok = rt.found && rt.k <= 1'000'000 && rt.defect < 0.1 && check.value <= check.bound && split <= 1e-10;
  return {ok, "k = " + std::to_string(rt.k) + fmt(", defect = %.3e (< 0.1)", rt.defect) +
                  fmt(", return distance %.3e", check.value) + fmt(" <= bound %.3e", check.bound)};
}

Outcome entropy_gap() {
  const auto e = solve_sturm_liouville(Potential::zero(2048), 16, 2048);
  const auto c = coupling_matrix(Profile::polynomial({0.0, 0.0, 1.0}, 2048), e);
  const auto z0 = StateCoeffs::mode(c.basis, 1);
  EntropyConfig cfg;
  cfg.count = 400;
  const auto a = entropy_report(z0, c, cfg);
  const auto b = entropy_report(z0, c, cfg);
  const bool same = a.reachable.counts == b.reachable.counts && a.ball.counts == b.ball.counts && a.gap == b.gap &&
                    a.gap_ci_low == b.gap_ci_low && a.gap_ci_high == b.gap_ci_high;
  const bool ok = a.reachable.slope < a.ball.slope && a.gap_ci_low > 0.0 && same;
  return {ok, fmt("reachable slope %.3f", a.reachable.slope) + fmt(" < ball slope %.3f", a.ball.slope) +
                  fmt(", gap 95%% CI [%.3f", a.gap_ci_low) + fmt(", %.3f]", a.gap_ci_high) +
                  (same ? ", deterministic" : ", NOT deterministic")};
}

} // namespace

int main() {
  criterion(1, "spectral fidelity", 5, spectral_fidelity);
  criterion(2, "eigen asymptotics", 30, asymptotics);
  criterion(3, "coupling closed form", 5, coupling_formula);
  criterion(4, "unitarity", 60, unitarity);
  criterion(5, "two-level oracle", 10, rabi);
  criterion(6, "linearization consistency", 60, linearization);
  criterion(7, "moment construction", 10, moment_construction);
  criterion(8, "control synthesis", 30, synthesis);
  criterion(9, "local steering", 300, steering);
  criterion(10, "obstruction invariant", 60, obstruction_invariant_drift);
  criterion(11, "return times", 5, return_times);
  criterion(12, "entropy gap", 600, entropy_gap);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
