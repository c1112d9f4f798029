#pragma once

// Real controls built from raised-cosine atoms, their generalized Fourier
// transform u(omega) = int e^{i omega s} u(s) ds and the admissible-control
// norm components.

#include "schrodctl/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <vector>

namespace schrodctl {

/// Raised cosine w (1 - cos(2 pi (t - t0)/h)) / 2 on [t0, t0 + h], t0 = center - h/2.
struct Atom {
  double center = 0.0;
  double width = 1.0;
  double weight = 0.0;

  double start() const { return center - 0.5 * width; }
  double end() const { return center + 0.5 * width; }
};

class ControlSignal {
public:
  ControlSignal() = default;
  ControlSignal(double horizon, std::vector<Atom> atoms) : horizon_(horizon), atoms_(std::move(atoms)) {
    detail::require(horizon_ > 0.0, "control horizon must be positive");
    for (const auto &a : atoms_) {
      detail::require(a.width > 0.0 && std::isfinite(a.weight), "atoms need positive width and finite weight");
      detail::require(a.start() >= -1e-12 && a.end() <= horizon_ + 1e-12, "atoms must lie inside [0, T]");
    }
  }

  /// n_atoms equispaced atoms of width 2T/n_atoms covering [0, T].
  static ControlSignal uniform(double horizon, const std::vector<double> &weights) {
    const auto layout = uniform_layout(horizon, weights.size());
    std::vector<Atom> atoms = layout;
    for (std::size_t a = 0; a < atoms.size(); ++a)
      atoms[a].weight = weights[a];
    return {horizon, std::move(atoms)};
  }

  static std::vector<Atom> uniform_layout(double horizon, std::size_t n_atoms) {
    detail::require(horizon > 0.0, "control horizon must be positive");
    detail::require(n_atoms >= 2, "at least two atoms are required");
    const double h = 2.0 * horizon / static_cast<double>(n_atoms);
    const double spacing = (horizon - h) / static_cast<double>(n_atoms - 1);
    std::vector<Atom> atoms(n_atoms);
    for (std::size_t a = 0; a < n_atoms; ++a)
      atoms[a] = {static_cast<double>(a) * spacing + 0.5 * h, h, 0.0};
    return atoms;
  }

  double horizon() const { return horizon_; }
  const std::vector<Atom> &atoms() const { return atoms_; }
  std::vector<double> weights() const {
    std::vector<double> w;
    for (const auto &a : atoms_)
      w.push_back(a.weight);
    return w;
  }
  bool empty() const {
    return std::all_of(atoms_.begin(), atoms_.end(), [](const Atom &a) { return a.weight == 0.0; });
  }

  /// d^order u / dt^order at t (order 0..2); zero outside [0, T].
  double derivative(double t, int order) const {
    double acc = 0.0;
    for (const auto &a : atoms_) {
      if (t <= a.start() || t >= a.end())
        continue;
      const double k = 2.0 * pi / a.width;
      const double phase = k * (t - a.start());
      switch (order) {
      case 0:
        acc += 0.5 * a.weight * (1.0 - std::cos(phase));
        break;
      case 1:
        acc += 0.5 * a.weight * k * std::sin(phase);
        break;
      case 2:
        acc += 0.5 * a.weight * k * k * std::cos(phase);
        break;
      default:
        throw ValidationError("control derivatives are available up to order 2");
      }
    }
    return acc;
  }

  double operator()(double t) const { return derivative(t, 0); }

  /// Samples on a uniform grid of step close to dt, endpoints included.
  std::vector<std::pair<double, double>> samples(double dt) const {
    detail::require(dt > 0.0, "sampling step must be positive");
    const auto n = static_cast<std::size_t>(std::ceil(horizon_ / dt));
    std::vector<std::pair<double, double>> out;
    out.reserve(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      const double t = horizon_ * static_cast<double>(i) / static_cast<double>(n);
      out.emplace_back(t, (*this)(t));
    }
    return out;
  }

  ControlSignal &operator+=(const ControlSignal &o) {
    detail::require(o.horizon_ <= horizon_ || atoms_.empty(), "cannot add a control with a longer horizon");
    horizon_ = std::max(horizon_, o.horizon_);
    for (const auto &b : o.atoms_) {
      auto it = std::find_if(atoms_.begin(), atoms_.end(),
                             [&](const Atom &a) { return a.center == b.center && a.width == b.width; });
      if (it != atoms_.end())
        it->weight += b.weight;
      else
        atoms_.push_back(b);
    }
    return *this;
  }

private:
  double horizon_ = 1.0;
  std::vector<Atom> atoms_;
};

/// int_0^h e^{i omega s} (1 - cos(2 pi s/h))/2 ds by the trapezoid rule with
/// at least 4096 panels and step at most 0.1/|omega|.
inline cplx atom_moment(double width, double omega) {
  if (omega < 0.0)
    return std::conj(atom_moment(width, -omega));
  const auto panels = static_cast<std::size_t>(std::max(4096.0, std::ceil(width * omega / 0.1)));
  const double ds = width / static_cast<double>(panels);
  cplx acc = 0.0;
  // End samples vanish, so only interior nodes contribute.
  for (std::size_t i = 1; i < panels; ++i) {
    const double s = static_cast<double>(i) * ds;
    acc += std::polar(0.5 * (1.0 - std::cos(2.0 * pi * s / width)), omega * s);
  }
  return acc * ds;
}

/// u(omega) = int_0^T e^{i omega s} u(s) ds; exact Hermitian symmetry in omega.
inline cplx fourier_moment(const ControlSignal &u, double omega) {
  if (omega < 0.0)
    return std::conj(fourier_moment(u, -omega));
  std::map<double, cplx> reference;
  cplx acc = 0.0;
  for (const auto &a : u.atoms()) {
    auto it = reference.find(a.width);
    if (it == reference.end())
      it = reference.emplace(a.width, atom_moment(a.width, omega)).first;
    acc += a.weight * std::polar(1.0, omega * a.start()) * it->second;
  }
  return acc;
}

/// Moments u(omega_mk) for all pairs of the truncation.
inline ComplexMatrix moment_matrix(const ControlSignal &u, const CouplingMatrix &c) {
  const auto n = static_cast<Eigen::Index>(c.size());
  ComplexMatrix out(n, n);
  for (Eigen::Index m = 0; m < n; ++m)
    for (Eigen::Index k = m; k < n; ++k) {
      out(m, k) = fourier_moment(u, c.omega(m, k));
      out(k, m) = std::conj(out(m, k));
    }
  for (Eigen::Index m = 0; m < n; ++m)
    out(m, m) = out(0, 0);
  return out;
}

namespace detail {
/// Three-point Gauss-Legendre rule on [a, b].
template <class F> double gauss3(const F &f, double a, double b) {
  const double m = 0.5 * (a + b), r = 0.5 * (b - a);
  const double x = r * std::sqrt(0.6);
  return r * (5.0 * f(m - x) + 8.0 * f(m) + 5.0 * f(m + x)) / 9.0;
}

/// int_a^b |u|, splitting at the sign change of u when there is one.
inline double abs_integral(const ControlSignal &u, double a, double b) {
  const double ua = u(a), ub = u(b);
  auto absu = [&](double t) { return std::abs(u(t)); };
  if ((ua > 0.0 && ub < 0.0) || (ua < 0.0 && ub > 0.0)) {
    double lo = a, hi = b;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if ((u(mid) > 0.0) == (ua > 0.0))
        lo = mid;
      else
        hi = mid;
    }
    return gauss3(absu, a, lo) + gauss3(absu, lo, b);
  }
  return gauss3(absu, a, b);
}
} // namespace detail

struct ThetaNorm {
  double b = 0.0;       ///< (sum_p p^2 ||u||^2_{L^2[p-1,p]})^{1/2}
  double l1 = 0.0;      ///< ||u||_{L^1}
  double moments = 0.0; ///< (|u(0)|^2 + sum_{m != k} |u(omega_mk)|^2)^{1/2} over the truncation
  double hs = 0.0;      ///< ||u||_{H^s}, s in {1, 2}
  double s_order = 1.0;

  double total() const { return b + l1 + moments + hs; }
};

/// Admissible-control norm of u; the moment part uses the truncation of c.
inline ThetaNorm theta_norm(const ControlSignal &u, const CouplingMatrix &c, double s_order = 1.0) {
  detail::require(s_order == 1.0 || s_order == 2.0, "Sobolev order of controls must be 1 or 2");
  ThetaNorm out;
  out.s_order = s_order;
  if (u.atoms().empty())
    return out;

  // Piecewise Simpson between atom edges and integer cell boundaries, so
  // every subinterval sees a smooth integrand.
  std::vector<double> breaks{0.0, u.horizon()};
  for (double p = 1.0; p < u.horizon(); p += 1.0)
    breaks.push_back(p);
  for (const auto &a : u.atoms()) {
    breaks.push_back(std::clamp(a.start(), 0.0, u.horizon()));
    breaks.push_back(std::clamp(a.end(), 0.0, u.horizon()));
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  double min_width = u.horizon();
  for (const auto &a : u.atoms())
    min_width = std::min(min_width, a.width);
  const double target_step = min_width / 64.0;

  double b_sq = 0.0, hs_sq = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = breaks[i], hi = breaks[i + 1];
    if (hi - lo <= 1e-14)
      continue;
    const std::size_t panels = 2 * std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil((hi - lo) / target_step / 2.0)));
    const double h = (hi - lo) / static_cast<double>(panels);
    const double mid = 0.5 * (lo + hi);
    double l1 = 0.0, l2 = 0.0, hs = 0.0;
    for (std::size_t k = 0; k <= panels; ++k) {
      // Nudge the end nodes inside so one-sided limits are used at the edges.
      double t = lo + static_cast<double>(k) * h;
      if (k == 0)
        t = lo + 1e-12 * h;
      else if (k == panels)
        t = hi - 1e-12 * h;
      const double w = ((k == 0 || k == panels) ? 1.0 : (k % 2 ? 4.0 : 2.0)) * h / 3.0;
      const double v = u(t);
      if (k > 0)
        l1 += detail::abs_integral(u, lo + static_cast<double>(k - 1) * h, lo + static_cast<double>(k) * h);
      l2 += w * v * v;
      double d_sq = v * v;
      for (int order = 1; order <= static_cast<int>(s_order); ++order) {
        const double d = u.derivative(t, order);
        d_sq += d * d;
      }
      hs += w * d_sq;
    }
    const double cell = std::floor(mid) + 1.0;
    out.l1 += l1;
    b_sq += cell * cell * l2;
    hs_sq += hs;
  }
  out.b = std::sqrt(b_sq);
  out.hs = std::sqrt(hs_sq);

  const auto moments = moment_matrix(u, c);
  double m_sq = std::norm(moments(0, 0));
  for (Eigen::Index m = 0; m < moments.rows(); ++m)
    for (Eigen::Index k = 0; k < moments.cols(); ++k)
      if (m != k)
        m_sq += std::norm(moments(m, k));
  out.moments = std::sqrt(m_sq);
  return out;
}

} // namespace schrodctl
