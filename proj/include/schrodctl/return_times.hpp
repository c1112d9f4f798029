#pragma once

// Integer times at which the free flow nearly revisits its starting point.
// Phases use the physical eigenvalues lambda_j - gauge_shift: the shift
// only multiplies the state by a global phase.

#include "schrodctl/propagator.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace schrodctl {

struct ReturnTime {
  long long k = 0;
  double defect = 0.0; ///< sum_j |e^{-i lambda_j k} - 1|
  bool found = false;  ///< defect < eps; otherwise k is the argmin of the scan
  std::vector<double> phase_errors;
};

namespace detail {
/// lambda reduced to [0, 2 pi); the defect only sees lambda mod 2 pi.
inline std::vector<double> reduced_phases(const std::vector<double> &lambdas, double shift) {
  std::vector<double> out;
  out.reserve(lambdas.size());
  for (double l : lambdas) {
    double a = std::fmod(l - shift, 2.0 * pi);
    if (a < 0.0)
      a += 2.0 * pi;
    out.push_back(a);
  }
  return out;
}

inline double phase_error(double alpha, long long k) {
  const double theta = std::fmod(alpha * static_cast<double>(k), 2.0 * pi);
  return 2.0 * std::abs(std::sin(0.5 * theta));
}
} // namespace detail

/// Smallest k in [1, k_max] with sum_j |e^{-i lambda_j k} - 1| < eps, by
/// exhaustive scan.
inline ReturnTime find_return_time(const std::vector<double> &lambdas, double eps, long long k_max,
                                   double gauge_shift = 0.0) {
  detail::require(eps > 0.0, "return-time tolerance must be positive");
  detail::require(k_max >= 1, "k_max must be at least 1");
  const auto alpha = detail::reduced_phases(lambdas, gauge_shift);

  ReturnTime best;
  best.defect = std::numeric_limits<double>::infinity();
  for (long long k = 1; k <= k_max; ++k) {
    double d = 0.0;
    for (double a : alpha) {
      d += detail::phase_error(a, k);
      if (d >= best.defect && d >= eps)
        break;
    }
    if (d < best.defect) {
      best.k = k;
      best.defect = d;
    }
    if (d < eps) {
      best.found = true;
      break;
    }
  }
  for (double a : alpha)
    best.phase_errors.push_back(detail::phase_error(a, best.k));
  return best;
}

/// Scan over the first n_modes eigenvalues of a basis.
inline ReturnTime find_return_time(const SpectralBasis &basis, std::size_t n_modes, double eps, long long k_max) {
  detail::require(n_modes >= 1 && n_modes <= basis.size(), "return-time mode count out of range");
  std::vector<double> l(basis.lambdas.data(), basis.lambdas.data() + n_modes);
  return find_return_time(l, eps, k_max, basis.gauge_shift);
}

struct ReturnCheck {
  double value = 0.0;          ///< || e^{i shift k} U_k(ztilde, 0) - ztilde ||_{s,V}
  double bound = 0.0;          ///< head_phase_error * head_norm + 2 * tail_norm
  double head_phase_error = 0.0;
  double head_norm = 0.0;
  double tail_norm = 0.0;
};

/// Distance of the free flow at integer time k from its start, with the
/// head (first `head` modes) / tail decomposition of the bound. head = 0
/// means every mode belongs to the head.
inline ReturnCheck verify_return(const StateCoeffs &ztilde, long long k, double s, std::size_t head = 0) {
  if (head == 0 || head > ztilde.size())
    head = ztilde.size();
  const auto &basis = *ztilde.basis;
  const double shift = basis.gauge_shift;

  ReturnCheck out;
  double value_sq = 0.0, head_sq = 0.0, tail_sq = 0.0;
  for (std::size_t j = 0; j < ztilde.size(); ++j) {
    const double lam = basis.lambdas[static_cast<Eigen::Index>(j)];
    const double alpha = std::fmod(lam - shift, 2.0 * pi);
    const double err = detail::phase_error(alpha < 0.0 ? alpha + 2.0 * pi : alpha, k);
    const double weight = std::pow(lam, s) * std::norm(ztilde[j]);
    value_sq += err * err * weight;
    if (j < head) {
      head_sq += weight;
      out.head_phase_error = std::max(out.head_phase_error, err);
    } else {
      tail_sq += weight;
    }
  }
  out.value = std::sqrt(value_sq);
  out.head_norm = std::sqrt(head_sq);
  out.tail_norm = std::sqrt(tail_sq);
  out.bound = out.head_phase_error * out.head_norm + 2.0 * out.tail_norm;
  return out;
}

} // namespace schrodctl
