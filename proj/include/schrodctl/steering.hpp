#pragma once

// Local steering on the unit sphere: Newton iteration with the frozen
// right inverse of the linearized endpoint map at the base state.

#include "schrodctl/moments.hpp"
#include "schrodctl/return_times.hpp"

#include <cmath>
#include <vector>

namespace schrodctl {

/// P z = z - Re<z, ztilde> ztilde
inline StateCoeffs project_tangent(const StateCoeffs &z, const StateCoeffs &ztilde) {
  detail::require(std::abs(ztilde.l2_norm() - 1.0) <= 1e-10, "base state must lie on the unit sphere");
  return z - cplx(inner(z, ztilde).real()) * ztilde;
}

/// Sphere point with tangent projection w: w + sqrt(1 - ||w||^2) ztilde.
inline StateCoeffs lift(const StateCoeffs &w, const StateCoeffs &ztilde, double delta = 0.5) {
  detail::require(std::abs(ztilde.l2_norm() - 1.0) <= 1e-10, "base state must lie on the unit sphere");
  detail::require(delta > 0.0 && delta < 1.0, "chart radius must lie in (0, 1)");
  const double r = w.l2_norm();
  detail::require(r < delta, "tangent vector lies outside the chart ball");
  detail::require(std::abs(inner(w, ztilde).real()) <= 1e-10 * std::max(1.0, r), "lift needs a tangent vector");
  return w + cplx(std::sqrt(1.0 - r * r)) * ztilde;
}

struct SteeringConfig {
  double horizon = 40.0;
  std::size_t n_atoms = 200;
  double rho = 1e-10;
  double dt = 1e-3;
  double tol = 1e-10;
  double rel_tol = 0.0;     ///< also stop once error <= rel_tol * initial error
  std::size_t max_iter = 8;
  double delta = 0.5;       ///< local regime: ||z1 - z0||_{3,V} <= delta
  double return_eps = 0.05;
  long long k_max = 1'000'000;
  double s_order = 1.0;
  double gap = 1e-8;
};

enum class SteeringStatus { converged, max_iter, diverged };

inline const char *to_string(SteeringStatus s) {
  switch (s) {
  case SteeringStatus::converged:
    return "converged";
  case SteeringStatus::max_iter:
    return "max_iter";
  case SteeringStatus::diverged:
    return "diverged";
  }
  return "unknown";
}

struct SteeringIterate {
  double error_h3 = 0.0;   ///< ||z1 - endpoint||_{3,V}
  double theta_norm = 0.0; ///< Theta norm of the accumulated control
  double residual = 0.0;   ///< max moment residual of this step's synthesis (0 at iteration 0)
  double tangency = 0.0;   ///< |Re<P(endpoint), ztilde>|
};

struct SteeringRun {
  StateCoeffs z0, z1;
  ControlSignal control;
  StateCoeffs endpoint;
  std::vector<SteeringIterate> iterates;
  SteeringStatus status = SteeringStatus::max_iter;
  bool outside_local_regime = false;
  ReturnTime return_time;   ///< integer return time of the populated modes of z0
  double return_gap = 0.0;  ///< ||U_k(endpoint) - endpoint||_{3,V} at that k, phases of the shift removed
  double initial_error = 0.0;
  double final_error = 0.0;
};

/// Free-flow limit along return times: e^{i Lambda T} z(T) for the control
/// supported in [0, T].
inline StateCoeffs return_limit(const StateCoeffs &z0, const ControlSignal &u, const CouplingMatrix &c, double dt) {
  if (u.empty())
    return z0;
  const auto tr = propagate(z0, u, c, u.horizon(), dt, {.stride = std::numeric_limits<std::size_t>::max()});
  return free_evolution(tr.final_state(), -u.horizon());
}

inline SteeringRun newton_control(const StateCoeffs &z0, const StateCoeffs &z1, const CouplingMatrix &c,
                                  const SteeringConfig &cfg = {}) {
  detail::require(z0.size() == c.size() && z1.size() == c.size(), "state and coupling truncation differ");
  detail::require(std::abs(z0.l2_norm() - 1.0) <= 1e-8 && std::abs(z1.l2_norm() - 1.0) <= 1e-8,
                  "steering endpoints must lie on the unit sphere");
  detail::require(cfg.max_iter >= 1 && cfg.tol >= 0.0, "invalid steering tolerances");

  SteeringRun run;
  run.z0 = z0.normalized();
  run.z1 = z1.normalized();
  const StateCoeffs &zt = run.z0;
  run.outside_local_regime = hs_norm(run.z1 - zt, 3.0) > cfg.delta;

  // Fails early (ObstructedState) when the base state is in the obstruction set.
  (void)target_to_moments(zt, StateCoeffs::zero(zt.basis), c);

  std::size_t populated = 0;
  for (std::size_t j = 0; j < zt.size(); ++j)
    if (zt[j] != cplx(0.0))
      populated = j + 1;
  run.return_time = find_return_time(*zt.basis, populated, cfg.return_eps, cfg.k_max);

  run.control = ControlSignal(cfg.horizon, ControlSignal::uniform_layout(cfg.horizon, cfg.n_atoms));
  const StateCoeffs target = project_tangent(run.z1, zt);
  run.endpoint = zt;

  auto record = [&](double residual) {
    SteeringIterate it;
    it.error_h3 = hs_norm(run.z1 - run.endpoint, 3.0);
    it.theta_norm = theta_norm(run.control, c, cfg.s_order).total();
    it.residual = residual;
    it.tangency = std::abs(inner(project_tangent(run.endpoint, zt), zt).real());
    run.iterates.push_back(it);
    return it.error_h3;
  };

  run.initial_error = record(0.0);
  const double goal = std::max(cfg.tol, cfg.rel_tol * run.initial_error);
  double error = run.initial_error;
  std::size_t non_decreasing = 0;
  if (error <= goal) {
    run.status = SteeringStatus::converged;
  } else {
    for (std::size_t j = 1; j <= cfg.max_iter; ++j) {
      const StateCoeffs y = target - project_tangent(run.endpoint, zt);
      const auto table = target_to_moments(zt, y, c);
      const auto syn = synthesize_control(table, cfg.horizon, cfg.n_atoms, cfg.rho, cfg.gap);
      run.control += syn.control;
      run.endpoint = return_limit(zt, run.control, c, cfg.dt);
      const double next = record(syn.max_residual);
      non_decreasing = next >= error ? non_decreasing + 1 : 0;
      error = next;
      if (error <= goal) {
        run.status = SteeringStatus::converged;
        break;
      }
      if (non_decreasing >= 3) {
        run.status = SteeringStatus::diverged;
        break;
      }
    }
  }
  run.final_error = error;

  const auto k = static_cast<double>(run.return_time.k);
  const StateCoeffs at_k = cplx(std::polar(1.0, zt.basis->gauge_shift * k)) * free_evolution(run.endpoint, k);
  run.return_gap = hs_norm(at_k - run.endpoint, 3.0);
  return run;
}

} // namespace schrodctl
