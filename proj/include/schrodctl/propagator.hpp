#pragma once

// Truncated Galerkin dynamics i z' = (-d^2/dx^2 + V) z + u(t) Q z in the
// eigenbasis, and its linearization around the free trajectory.

#include "schrodctl/control_signal.hpp"

#include <cmath>
#include <concepts>
#include <optional>
#include <vector>

namespace schrodctl {

template <class F>
concept ControlFunction = requires(const F &u, double t) {
  { u(t) } -> std::convertible_to<double>;
};

/// The zero control.
struct NoControl {
  double operator()(double) const { return 0.0; }
};

struct ConstantControl {
  double value = 0.0;
  double operator()(double) const { return value; }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<StateCoeffs> states;
  std::vector<double> l2_norms; ///< at the recorded times
  std::vector<double> h3_norms;
  double max_l2_drift = 0.0;    ///< max over all steps of | ||z(t)|| - ||z(0)|| |
  double sup_h3 = 0.0;          ///< max over all steps of ||z(t)||_{3,V}
  double step = 0.0;            ///< time step actually used

  const StateCoeffs &final_state() const { return states.back(); }
};

struct PropagateOptions {
  std::size_t stride = 1; ///< record every stride-th step (the final step is always recorded)
};

/// c_j -> e^{-i lambda_j t} c_j
inline StateCoeffs free_evolution(const StateCoeffs &z, double t) {
  StateCoeffs out = z;
  for (std::size_t j = 0; j < z.size(); ++j)
    out[j] = z[j] * std::polar(1.0, -z.basis->lambdas[static_cast<Eigen::Index>(j)] * t);
  return out;
}

namespace detail {
inline std::size_t step_count(double t_final, double dt) {
  require(dt > 0.0 && std::isfinite(dt), "time step must be positive");
  require(t_final > 0.0 && std::isfinite(t_final), "final time must be positive");
  require(dt <= t_final * (1.0 + 1e-12), "time step exceeds the final time");
  return static_cast<std::size_t>(std::ceil(t_final / dt - 1e-9));
}

inline void record(Trajectory &tr, double t, const StateCoeffs &z) {
  tr.times.push_back(t);
  tr.states.push_back(z);
  tr.l2_norms.push_back(z.l2_norm());
  tr.h3_norms.push_back(hs_norm(z, 3.0));
}
} // namespace detail

/// Strang splitting: half-step phase e^{-i Lambda dt/2}, kernel
/// exp(-i u(t_mid) dt q) from the symmetric eigendecomposition of q,
/// half-step phase. Every factor is unitary. The step is t_final/ceil(t_final/dt).
template <ControlFunction Control>
Trajectory propagate(const StateCoeffs &z0, const Control &u, const CouplingMatrix &c, double t_final, double dt,
                     PropagateOptions opt = {}) {
  detail::require(z0.size() == c.size(), "state and coupling truncation differ");
  detail::require(z0.coeffs.allFinite(), "initial state has non-finite coefficients");
  detail::require(opt.stride >= 1, "stride must be positive");
  const std::size_t steps = detail::step_count(t_final, dt);
  const double h = t_final / static_cast<double>(steps);

  const Eigen::SelfAdjointEigenSolver<RealMatrix> eig(c.q);
  const ComplexMatrix w = eig.eigenvectors().cast<cplx>();
  const ComplexMatrix wt = w.transpose();
  const RealVector &mu = eig.eigenvalues();
  const auto n = static_cast<Eigen::Index>(c.size());
  ComplexVector half_phase(n);
  for (Eigen::Index j = 0; j < n; ++j)
    half_phase[j] = std::polar(1.0, -c.basis->lambdas[j] * h / 2.0);

  Trajectory tr;
  tr.step = h;
  StateCoeffs z = z0;
  const double norm0 = z0.l2_norm();
  detail::record(tr, 0.0, z);
  tr.sup_h3 = tr.h3_norms.back();

  ComplexVector tmp(n);
  ComplexVector kernel(n);
  for (std::size_t s = 0; s < steps; ++s) {
    const double t_mid = (static_cast<double>(s) + 0.5) * h;
    const double ubar = static_cast<double>(u(t_mid));
    detail::require(std::isfinite(ubar), "control has non-finite samples");

    z.coeffs.array() *= half_phase.array();
    if (ubar != 0.0) {
      for (Eigen::Index j = 0; j < n; ++j)
        kernel[j] = std::polar(1.0, -ubar * h * mu[j]);
      tmp.noalias() = wt * z.coeffs;
      tmp.array() *= kernel.array();
      z.coeffs.noalias() = w * tmp;
    }
    z.coeffs.array() *= half_phase.array();

    const double l2 = z.l2_norm();
    tr.max_l2_drift = std::max(tr.max_l2_drift, std::abs(l2 - norm0));
    tr.sup_h3 = std::max(tr.sup_h3, hs_norm(z, 3.0));
    if ((s + 1) % opt.stride == 0 || s + 1 == steps)
      detail::record(tr, static_cast<double>(s + 1) * h, z);
  }
  return tr;
}

/// Linearized flow around U_t(ztilde, 0) from the initial tangent w0
/// (zero when omitted):
///   <R_t, e_m> = e^{-i lambda_m t} <w0, e_m>
///              - i sum_k e^{-i lambda_m t} <ztilde, e_k> Q_mk int_0^t e^{i omega_mk s} u(s) ds,
/// with the time integrals accumulated by the trapezoid rule on the step grid.
template <ControlFunction Control>
Trajectory linearized_propagate(const StateCoeffs &ztilde, const Control &u, const CouplingMatrix &c, double t_final,
                                double dt, const std::optional<StateCoeffs> &w0 = std::nullopt,
                                PropagateOptions opt = {}) {
  detail::require(ztilde.size() == c.size(), "state and coupling truncation differ");
  detail::require(std::abs(ztilde.l2_norm() - 1.0) <= 1e-10, "base state must lie on the unit sphere");
  detail::require(!w0 || w0->size() == c.size(), "initial tangent has the wrong length");
  detail::require(opt.stride >= 1, "stride must be positive");
  const std::size_t steps = detail::step_count(t_final, dt);
  const double h = t_final / static_cast<double>(steps);
  const auto n = static_cast<Eigen::Index>(c.size());

  std::vector<Eigen::Index> support;
  for (Eigen::Index k = 0; k < n; ++k)
    if (ztilde.coeffs[k] != cplx(0.0))
      support.push_back(k);
  const auto ns = static_cast<Eigen::Index>(support.size());

  // Column j holds the integrand phases e^{i omega_{m,k_j} s} for all m.
  auto integrand = [&](double s, ComplexMatrix &out) {
    const double us = static_cast<double>(u(s));
    detail::require(std::isfinite(us), "control has non-finite samples");
    for (Eigen::Index j = 0; j < ns; ++j)
      for (Eigen::Index m = 0; m < n; ++m)
        out(m, j) = us * std::polar(1.0, c.omega(m, support[static_cast<std::size_t>(j)]) * s);
  };

  ComplexMatrix integral = ComplexMatrix::Zero(n, ns);
  ComplexMatrix left(n, ns), right(n, ns);
  integrand(0.0, left);

  auto state_at = [&](double t) {
    ComplexVector r = ComplexVector::Zero(n);
    for (Eigen::Index m = 0; m < n; ++m) {
      cplx acc = 0.0;
      for (Eigen::Index j = 0; j < ns; ++j) {
        const Eigen::Index k = support[static_cast<std::size_t>(j)];
        acc += ztilde.coeffs[k] * c.q(m, k) * integral(m, j);
      }
      r[m] = cplx(0.0, -1.0) * acc;
      if (w0)
        r[m] += (*w0)[static_cast<std::size_t>(m)];
      r[m] *= std::polar(1.0, -c.basis->lambdas[m] * t);
    }
    return StateCoeffs(std::move(r), c.basis);
  };

  Trajectory tr;
  tr.step = h;
  const StateCoeffs r0 = state_at(0.0);
  const double norm0 = r0.l2_norm();
  detail::record(tr, 0.0, r0);
  tr.sup_h3 = tr.h3_norms.back();
  for (std::size_t s = 0; s < steps; ++s) {
    const double t1 = static_cast<double>(s + 1) * h;
    integrand(t1, right);
    integral += (0.5 * h) * (left + right);
    std::swap(left, right);
    const bool keep = (s + 1) % opt.stride == 0 || s + 1 == steps;
    if (keep) {
      const StateCoeffs r = state_at(t1);
      tr.max_l2_drift = std::max(tr.max_l2_drift, std::abs(r.l2_norm() - norm0));
      detail::record(tr, t1, r);
      tr.sup_h3 = std::max(tr.sup_h3, tr.h3_norms.back());
    }
  }
  return tr;
}

/// Re <R, U_t(ztilde, 0)>; vanishes for the linearized flow from a tangent start.
inline double tangency_defect(const StateCoeffs &r, const StateCoeffs &ztilde, double t) {
  return inner(r, free_evolution(ztilde, t)).real();
}

} // namespace schrodctl
