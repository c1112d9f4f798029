#pragma once

// Coupling matrix Q_mk = <Q e_m, e_k>, Bohr frequencies, scans of the
// coupling and gap conditions, and the two-mode obstruction defect.

#include "schrodctl/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace schrodctl {

struct CouplingMatrix {
  RealMatrix q;     ///< symmetric, q(m,k) = <Q e_m, e_k>
  RealMatrix omega; ///< omega(m,k) = lambda_m - lambda_k
  BasisPtr basis;   ///< the first n modes of the source system

  std::size_t size() const { return static_cast<std::size_t>(q.rows()); }
};

/// The first n modes of a basis (the same object when nothing is dropped).
inline BasisPtr truncate(const BasisPtr &basis, std::size_t n) {
  detail::require(n >= 1 && n <= basis->size(), "truncation exceeds the number of modes");
  if (n == basis->size())
    return basis;
  auto out = std::make_shared<SpectralBasis>();
  out->lambdas = basis->lambdas.head(static_cast<Eigen::Index>(n));
  out->multi_index.assign(basis->multi_index.begin(), basis->multi_index.begin() + static_cast<std::ptrdiff_t>(n));
  out->gauge_shift = basis->gauge_shift;
  return out;
}

inline RealMatrix frequency_table(const RealVector &lambdas) {
  const Eigen::Index n = lambdas.size();
  RealMatrix omega(n, n);
  for (Eigen::Index m = 0; m < n; ++m)
    for (Eigen::Index k = 0; k < n; ++k)
      omega(m, k) = lambdas[m] - lambdas[k];
  return omega;
}

namespace detail {
inline RealMatrix profile_couplings(const Profile &profile, const EigenSystem &system, std::size_t n) {
  Profile sampled = profile;
  if (profile.size() != system.n_grid() || !profile.is_uniform()) {
    require(profile.has_closed_form(), "coupling profile is not sampled on the eigensystem grid");
    sampled = profile.resampled(system.n_grid());
  }
  const auto nn = static_cast<Eigen::Index>(n);
  const Eigen::Map<const RealVector> qv(sampled.values().data(), static_cast<Eigen::Index>(sampled.size()));
  const RealMatrix weighted = system.modes.leftCols(nn).array().colwise() * qv.array();
  RealMatrix q(nn, nn);
  for (Eigen::Index m = 0; m < nn; ++m)
    for (Eigen::Index k = 0; k < nn; ++k)
      q(m, k) = trapezoid_dot(weighted.col(m), system.modes.col(k), system.step());
  return 0.5 * (q + q.transpose());
}
} // namespace detail

/// Q_mk over the first n modes of a 1-D system (n = 0 means all modes).
inline CouplingMatrix coupling_matrix(const Profile &profile, const EigenSystem &system, std::size_t n = 0) {
  if (n == 0)
    n = system.n_modes();
  detail::require(n <= system.n_modes(), "truncation exceeds the number of modes");
  CouplingMatrix c;
  c.q = detail::profile_couplings(profile, system, n);
  c.basis = truncate(system.basis, n);
  c.omega = frequency_table(c.basis->lambdas);
  return c;
}

/// Separable profile Q(x_1..x_d) = Q_1(x_1) ... Q_d(x_d) on a tensor system.
inline CouplingMatrix coupling_matrix(const std::vector<Profile> &profiles, const EigenSystemND &system,
                                      std::size_t n = 0) {
  detail::require(profiles.size() == system.dimension(), "one profile per dimension is required");
  if (n == 0)
    n = system.size();
  detail::require(n <= system.size(), "truncation exceeds the number of modes");
  std::vector<RealMatrix> factor_q;
  for (std::size_t i = 0; i < profiles.size(); ++i)
    factor_q.push_back(detail::profile_couplings(profiles[i], system.factors[i], system.factors[i].n_modes()));

  CouplingMatrix c;
  c.basis = truncate(system.basis, n);
  const auto nn = static_cast<Eigen::Index>(n);
  c.q.resize(nn, nn);
  const auto &idx = c.basis->multi_index;
  for (Eigen::Index a = 0; a < nn; ++a)
    for (Eigen::Index b = 0; b < nn; ++b) {
      double prod = 1.0;
      for (std::size_t i = 0; i < factor_q.size(); ++i)
        prod *= factor_q[i](idx[static_cast<std::size_t>(a)][i] - 1, idx[static_cast<std::size_t>(b)][i] - 1);
      c.q(a, b) = prod;
    }
  c.omega = frequency_table(c.basis->lambdas);
  return c;
}

// ---------------------------------------------------------------------------
// Condition 1
// ---------------------------------------------------------------------------

/// Resonant quadruple (i, j, p, q), 1-based basis positions.
using Resonance = std::array<std::size_t, 4>;

struct ConditionReport {
  std::size_t truncation = 0;
  double threshold = 1e-4;
  double gap = 1e-8;

  double min_weighted_coupling = std::numeric_limits<double>::infinity();
  std::array<std::size_t, 2> worst_pair{0, 0}; ///< 1-based basis positions
  bool pass_i = false;

  std::vector<Resonance> resonances;
  bool pass_ii = false;
};

/// min over the truncation of |(p_1 j_1 ... p_d j_d)^3 Q_pj|, diagonal included.
inline ConditionReport check_condition_i(const CouplingMatrix &c, double threshold = 1e-4) {
  detail::require(threshold > 0.0, "coupling threshold must be positive");
  ConditionReport rep;
  rep.truncation = c.size();
  rep.threshold = threshold;
  const auto &idx = c.basis->multi_index;
  for (std::size_t p = 0; p < c.size(); ++p)
    for (std::size_t j = 0; j < c.size(); ++j) {
      double w = 1.0;
      for (std::size_t i = 0; i < idx[p].size(); ++i)
        w *= static_cast<double>(idx[p][i]) * idx[j][i];
      const double value = w * w * w * std::abs(c.q(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)));
      if (value < rep.min_weighted_coupling) {
        rep.min_weighted_coupling = value;
        rep.worst_pair = {p + 1, j + 1};
      }
    }
  rep.pass_i = rep.min_weighted_coupling >= threshold;
  return rep;
}

/// All gap-close pairs of Bohr frequencies among the first n modes.
/// Each coincidence is listed once as (i,j,p,q) with i>j, p>q and
/// (i,j) lexicographically before (p,q).
inline std::vector<Resonance> find_resonances(const RealVector &lambdas, std::size_t n, double gap) {
  detail::require(gap > 0.0, "frequency gap must be positive");
  detail::require(n <= static_cast<std::size_t>(lambdas.size()), "truncation exceeds the number of modes");
  struct Pair {
    double omega;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      pairs.push_back({lambdas[static_cast<Eigen::Index>(i)] - lambdas[static_cast<Eigen::Index>(j)], i + 1, j + 1});
  std::sort(pairs.begin(), pairs.end(), [](const Pair &a, const Pair &b) { return a.omega < b.omega; });

  std::vector<Resonance> out;
  for (std::size_t a = 0; a < pairs.size(); ++a)
    for (std::size_t b = a + 1; b < pairs.size() && pairs[b].omega - pairs[a].omega < gap; ++b) {
      auto first = std::make_pair(pairs[a].i, pairs[a].j);
      auto second = std::make_pair(pairs[b].i, pairs[b].j);
      if (second < first)
        std::swap(first, second);
      out.push_back({first.first, first.second, second.first, second.second});
    }
  std::sort(out.begin(), out.end());
  return out;
}

inline ConditionReport check_condition_ii(const SpectralBasis &basis, std::size_t n, double gap = 1e-8) {
  ConditionReport rep;
  rep.truncation = n;
  rep.gap = gap;
  rep.resonances = find_resonances(basis.lambdas, n, gap);
  rep.pass_ii = rep.resonances.empty();
  return rep;
}

inline ConditionReport check_condition_ii(const EigenSystem &system, std::size_t n, double gap = 1e-8) {
  return check_condition_ii(*system.basis, n, gap);
}

/// Both parts of Condition 1 over the truncation of c.
inline ConditionReport check_condition(const CouplingMatrix &c, double threshold = 1e-4, double gap = 1e-8) {
  auto rep = check_condition_i(c, threshold);
  const auto ii = check_condition_ii(*c.basis, c.size(), gap);
  rep.gap = gap;
  rep.resonances = ii.resonances;
  rep.pass_ii = ii.pass_ii;
  return rep;
}

/// |c_p|^2 Q_pp - sum_{m != p} |c_m|^2 Q_mm, with p 1-based. Zero on a
/// two-mode state marks membership in the obstruction set.
inline double e_set_defect(const StateCoeffs &z, const CouplingMatrix &c, std::size_t p) {
  detail::require(z.size() == c.size(), "state and coupling truncation differ");
  detail::require(p >= 1 && p <= z.size(), "mode index out of range");
  detail::require(std::abs(z.l2_norm() - 1.0) <= 1e-8, "state must lie on the unit sphere");
  double acc = 0.0;
  for (std::size_t m = 0; m < z.size(); ++m) {
    const double term = std::norm(z[m]) * c.q(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    acc += (m + 1 == p) ? term : -term;
  }
  return acc;
}

} // namespace schrodctl
