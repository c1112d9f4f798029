#pragma once

// Tangent targets y at a base state ztilde become moment tables d_mk with
//   -i sum_k <ztilde, e_k> Q_mk d_mk = <y, e_m>   for every m,
// d Hermitian with a common real diagonal d0; a control u with
// u(omega_mk) = d_mk then reaches y through the linearized flow.

#include "schrodctl/control_signal.hpp"
#include "schrodctl/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace schrodctl {

enum class MomentCase { single_mode = 1, two_mode = 2, multi_mode = 3 };

struct MomentTable {
  ComplexMatrix d;   ///< d(m,k), Hermitian, diagonal = d0
  double d0 = 0.0;
  RealMatrix omega;  ///< omega(m,k) = lambda_m - lambda_k
  BasisPtr basis;
  MomentCase which = MomentCase::single_mode;
  std::vector<std::size_t> roles; ///< 1-based p (and q, r when the special Case-3 branch is used)
  double defect = 0.0;            ///< |c_p|^2 Q_pp - sum_{m != p} |c_m|^2 Q_mm

  std::size_t size() const { return static_cast<std::size_t>(d.rows()); }
};

/// Relative size of |c_p|^2 Q_pp - sum |c_m|^2 Q_mm below which the
/// two-mode linearization counts as obstructed.
inline constexpr double obstruction_tolerance = 1e-9;

namespace detail {
/// Support of a coefficient vector ordered by decreasing modulus, ties by index.
inline std::vector<Eigen::Index> ranked_support(const ComplexVector &c) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < c.size(); ++j)
    if (c[j] != cplx(0.0))
      idx.push_back(j);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return std::abs(c[a]) > std::abs(c[b]); });
  return idx;
}

inline double coupling_or_throw(const RealMatrix &q, Eigen::Index m, Eigen::Index k) {
  const double v = q(m, k);
  require(v != 0.0, "coupling Q_" + std::to_string(m + 1) + "," + std::to_string(k + 1) +
                        " vanishes; the coupling condition fails on a needed pair");
  return v;
}
} // namespace detail

/// Moment table realizing the tangent target y at ztilde (Cases 1-3).
inline MomentTable target_to_moments(const StateCoeffs &ztilde, const StateCoeffs &y, const CouplingMatrix &cm) {
  detail::require(ztilde.size() == cm.size() && y.size() == cm.size(), "state and coupling truncation differ");
  detail::require(std::abs(ztilde.l2_norm() - 1.0) <= 1e-10, "base state must lie on the unit sphere");
  detail::require(std::abs(inner(y, ztilde).real()) <= 1e-10 * std::max(1.0, y.l2_norm()),
                  "target is not tangent: Re<y, ztilde> must vanish");

  const auto n = static_cast<Eigen::Index>(cm.size());
  const ComplexVector &c = ztilde.coeffs;
  const ComplexVector &yc = y.coeffs;
  const RealMatrix &q = cm.q;
  const double a = inner(ztilde, y).imag();

  // Particular part B_mk = i (y_m conj(c_k) - conj(y_k) c_m) / Q_mk.
  ComplexMatrix b = ComplexMatrix::Zero(n, n);
  for (Eigen::Index m = 0; m < n; ++m)
    for (Eigen::Index k = 0; k < n; ++k) {
      const cplx num = cplx(0.0, 1.0) * (yc[m] * std::conj(c[k]) - std::conj(yc[k]) * c[m]);
      if (num != cplx(0.0))
        b(m, k) = num / detail::coupling_or_throw(q, m, k);
    }
  for (Eigen::Index m = 0; m < n; ++m)
    b(m, m) = b(m, m).real();

  const auto support = detail::ranked_support(c);
  detail::require(!support.empty(), "base state has no populated mode");
  const Eigen::Index p = support[0];

  MomentTable out;
  out.omega = cm.omega;
  out.basis = cm.basis;
  out.which = support.size() == 1 ? MomentCase::single_mode
              : support.size() == 2 ? MomentCase::two_mode
                                    : MomentCase::multi_mode;

  double scale = 0.0;
  double defect = 0.0;
  for (Eigen::Index m : support) {
    const double term = std::norm(c[m]) * q(m, m);
    scale += std::abs(term);
    defect += (m == p) ? term : -term;
  }
  out.defect = defect;
  const bool degenerate = std::abs(defect) <= obstruction_tolerance * scale;

  if (degenerate && out.which == MomentCase::two_mode)
    throw ObstructedState("two-mode base state lies in the obstruction set: |c_p|^2 Q_pp = |c_q|^2 Q_qq");
  if (degenerate && out.which == MomentCase::single_mode)
    throw ObstructedState("single-mode base state with vanishing diagonal coupling");

  ComplexMatrix cc = ComplexMatrix::Zero(n, n);
  double d0 = 0.0;
  auto set_pair = [&](Eigen::Index m, Eigen::Index k, cplx v) {
    cc(m, k) = v;
    cc(k, m) = std::conj(v);
  };

  if (!degenerate) {
    // Star pattern around the pivot p: only C_mm and C_mp (m != p) are nonzero.
    double rhs = -a * std::norm(c[p]) + std::norm(c[p]) * q(p, p) * b(p, p).real();
    for (Eigen::Index m : support)
      if (m != p)
        rhs += std::norm(c[m]) * (a - q(m, m) * b(m, m).real());
    d0 = rhs / defect;
    for (Eigen::Index m = 0; m < n; ++m)
      cc(m, m) = d0 - b(m, m).real();
    for (Eigen::Index m : support)
      if (m != p)
        set_pair(m, p, -c[m] * (a + q(m, m) * cc(m, m).real()) / (c[p] * detail::coupling_or_throw(q, m, p)));
    out.roles = {static_cast<std::size_t>(p + 1)};
  } else {
    // The pivot balances the other diagonal couplings; route mode r through
    // q and p instead, with the free entry C_qp fixed to 0.
    const Eigen::Index qi = support[1];
    const Eigen::Index r = support[2];
    const double coeff = std::norm(c[p]) * q(p, p) + std::norm(c[qi]) * q(qi, qi) - [&] {
      double s = 0.0;
      for (Eigen::Index m : support)
        if (m != p && m != qi)
          s += std::norm(c[m]) * q(m, m);
      return s;
    }();
    if (std::abs(coeff) <= obstruction_tolerance * scale)
      throw ObstructedState("degenerate multi-mode base state: |c_q|^2 Q_qq vanishes");

    const double nr0 = -std::norm(c[r]) * (a - q(r, r) * b(r, r).real()) +
                       std::norm(c[qi]) * (a - q(qi, qi) * b(qi, qi).real());
    double rhs = -a * std::norm(c[p]) + std::norm(c[p]) * q(p, p) * b(p, p).real() - nr0;
    for (Eigen::Index m : support)
      if (m != p && m != qi && m != r)
        rhs += std::norm(c[m]) * (a - q(m, m) * b(m, m).real());
    d0 = rhs / coeff;
    for (Eigen::Index m = 0; m < n; ++m)
      cc(m, m) = d0 - b(m, m).real();
    for (Eigen::Index m : support)
      if (m != p && m != qi && m != r)
        set_pair(m, p, -c[m] * (a + q(m, m) * cc(m, m).real()) / (c[p] * detail::coupling_or_throw(q, m, p)));
    set_pair(qi, r,
             -c[qi] * (a + q(qi, qi) * cc(qi, qi).real()) / (c[r] * detail::coupling_or_throw(q, qi, r)));
    const double nr = -std::norm(c[r]) * (a + q(r, r) * cc(r, r).real()) +
                      std::norm(c[qi]) * (a + q(qi, qi) * cc(qi, qi).real());
    set_pair(r, p, nr / (std::conj(c[r]) * c[p] * detail::coupling_or_throw(q, r, p)));
    out.roles = {static_cast<std::size_t>(p + 1), static_cast<std::size_t>(qi + 1), static_cast<std::size_t>(r + 1)};
  }

  out.d = b + cc;
  for (Eigen::Index m = 0; m < n; ++m) {
    out.d(m, m) = d0;
    for (Eigen::Index k = m + 1; k < n; ++k)
      out.d(k, m) = std::conj(out.d(m, k));
  }
  out.d0 = d0;
  return out;
}

/// -i sum_k <ztilde, e_k> Q_mk d_mk for every m.
inline StateCoeffs apply_moments(const StateCoeffs &ztilde, const ComplexMatrix &d, const CouplingMatrix &cm) {
  const ComplexMatrix qd = cm.q.cast<cplx>().cwiseProduct(d);
  return {cplx(0.0, -1.0) * (qd * ztilde.coeffs), cm.basis};
}

/// ||apply_moments(ztilde, M) - y||_{l^2}
inline double moment_identity_residual(const MomentTable &m, const StateCoeffs &ztilde, const StateCoeffs &y,
                                       const CouplingMatrix &cm) {
  return (apply_moments(ztilde, m.d, cm) - y).l2_norm();
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

struct Synthesis {
  ControlSignal control;
  double max_residual = 0.0; ///< max_l |u(omega_l) - d_l| over the unique frequencies
  double l2_residual = 0.0;
  double gram_condition = 0.0; ///< condition number of A A^T + rho I
  std::size_t n_frequencies = 0;
};

inline constexpr double max_gram_condition = 1e12;

/// Real atom weights w minimizing sum_l |u(omega_l) - d_l|^2 + rho |w|^2
/// over one representative per conjugate pair (omega_mk, m > k) plus the
/// zero frequency; the minimum-norm form w = A^T (A A^T + rho I)^{-1} d.
inline Synthesis synthesize_control(const MomentTable &m, double horizon, std::size_t n_atoms, double rho = 1e-10,
                                    double gap = 1e-8) {
  detail::require(rho >= 0.0, "regularization must be non-negative");
  const auto n = static_cast<Eigen::Index>(m.size());
  detail::require(find_resonances(m.basis->lambdas, m.size(), gap).empty(),
                  "moment frequencies are not distinct (the gap condition fails on the truncation)");

  struct Row {
    double omega;
    cplx target;
  };
  std::vector<Row> rows{{0.0, m.d0}};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < i; ++k) {
      double w = m.omega(i, k);
      cplx target = m.d(i, k);
      if (w < 0.0) {
        w = -w;
        target = std::conj(target);
      }
      rows.push_back({w, target});
    }

  const auto layout = ControlSignal::uniform_layout(horizon, n_atoms);
  const auto na = static_cast<Eigen::Index>(n_atoms);
  const auto nr = static_cast<Eigen::Index>(2 * rows.size() - 1);
  RealMatrix a(nr, na);
  RealVector rhs(nr);
  ComplexMatrix row_values(static_cast<Eigen::Index>(rows.size()), na);
  for (std::size_t l = 0; l < rows.size(); ++l) {
    const cplx ref = atom_moment(layout.front().width, rows[l].omega);
    for (Eigen::Index j = 0; j < na; ++j)
      row_values(static_cast<Eigen::Index>(l), j) =
          std::polar(1.0, rows[l].omega * layout[static_cast<std::size_t>(j)].start()) * ref;
  }
  a.row(0) = row_values.row(0).real();
  rhs[0] = rows[0].target.real();
  for (std::size_t l = 1; l < rows.size(); ++l) {
    const auto r = static_cast<Eigen::Index>(2 * l - 1);
    a.row(r) = row_values.row(static_cast<Eigen::Index>(l)).real();
    a.row(r + 1) = row_values.row(static_cast<Eigen::Index>(l)).imag();
    rhs[r] = rows[l].target.real();
    rhs[r + 1] = rows[l].target.imag();
  }

  RealMatrix gram = a * a.transpose();
  gram.diagonal().array() += rho;
  const Eigen::SelfAdjointEigenSolver<RealMatrix> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  Synthesis out;
  out.n_frequencies = rows.size();
  out.gram_condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(out.gram_condition <= max_gram_condition))
    throw IllConditioned("moment Gram matrix condition number " + std::to_string(out.gram_condition) +
                         " exceeds 1e12; increase the horizon, the atom count or rho");

  const RealVector weights = a.transpose() * gram.ldlt().solve(rhs);
  std::vector<Atom> atoms = layout;
  for (Eigen::Index j = 0; j < na; ++j)
    atoms[static_cast<std::size_t>(j)].weight = weights[j];
  out.control = ControlSignal(horizon, std::move(atoms));

  double sq = 0.0;
  for (const auto &row : rows) {
    const double r = std::abs(fourier_moment(out.control, row.omega) - row.target);
    out.max_residual = std::max(out.max_residual, r);
    sq += r * r;
  }
  out.l2_residual = std::sqrt(sq);
  return out;
}

/// <R_inf(0,u), e_m> = -i sum_k <ztilde, e_k> Q_mk u(omega_mk)
inline StateCoeffs linearized_endpoint(const StateCoeffs &ztilde, const ControlSignal &u, const CouplingMatrix &cm) {
  detail::require(ztilde.size() == cm.size(), "state and coupling truncation differ");
  return apply_moments(ztilde, moment_matrix(u, cm), cm);
}

/// Bound on ||linearized_endpoint(u) - y||_{l^2} from the moment residual:
/// ||ztilde|| ||Q||_F max_l |u(omega_l) - d_l|.
inline double endpoint_error_bound(const StateCoeffs &ztilde, const CouplingMatrix &cm, double max_residual) {
  return ztilde.l2_norm() * cm.q.norm() * max_residual;
}

/// Im <R_t, c_p e^{-i lambda_p t} e_p - c_q e^{-i lambda_q t} e_q> along a
/// linearized trajectory around the two-mode state ztilde (p, q 1-based).
inline std::vector<double> obstruction_invariant(const Trajectory &r, const StateCoeffs &ztilde, std::size_t p,
                                                 std::size_t q) {
  detail::require(p >= 1 && q >= 1 && p <= ztilde.size() && q <= ztilde.size() && p != q,
                  "mode indices out of range");
  for (std::size_t j = 0; j < ztilde.size(); ++j)
    detail::require((ztilde[j] != cplx(0.0)) == (j + 1 == p || j + 1 == q),
                    "base state must be supported exactly on modes p and q");
  const auto &lam = ztilde.basis->lambdas;
  std::vector<double> out;
  out.reserve(r.times.size());
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    const double t = r.times[i];
    const cplx fp = ztilde[p - 1] * std::polar(1.0, -lam[static_cast<Eigen::Index>(p - 1)] * t);
    const cplx fq = ztilde[q - 1] * std::polar(1.0, -lam[static_cast<Eigen::Index>(q - 1)] * t);
    out.push_back((r.states[i][p - 1] * std::conj(fp) - r.states[i][q - 1] * std::conj(fq)).imag());
  }
  return out;
}

} // namespace schrodctl
