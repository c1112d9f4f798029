#pragma once

// Dirichlet spectra of -d^2/dx^2 + V on (0,1), tensor products on (0,1)^d,
// coefficient states in the eigenbasis and the Sobolev scale built on it.

#include "schrodctl/errors.hpp"

#include <Eigen/Dense>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace schrodctl {

using cplx = std::complex<double>;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;

inline constexpr double pi = std::numbers::pi;
inline constexpr std::size_t min_grid_points = 16;

/// Multi-index (j_1, ..., j_d), 1-based.
using MultiIndex = std::vector<int>;

// ---------------------------------------------------------------------------
// Potential / coupling profiles
// ---------------------------------------------------------------------------

/// Real samples of a function on [0,1], endpoints included. Closed-form
/// presets keep their generating function so they resample exactly.
class Potential {
public:
  using Function = std::function<double(double)>;

  static Potential from_function(Function f, std::size_t n_grid, std::string label = "function") {
    detail::require(n_grid >= min_grid_points, "potential grid needs at least 16 points");
    Potential p;
    p.label_ = std::move(label);
    p.fn_ = std::move(f);
    p.x_.resize(n_grid);
    p.v_.resize(n_grid);
    const double h = 1.0 / static_cast<double>(n_grid - 1);
    for (std::size_t i = 0; i < n_grid; ++i) {
      p.x_[i] = static_cast<double>(i) * h;
      p.v_[i] = p.fn_(p.x_[i]);
    }
    p.check_finite();
    return p;
  }

  static Potential zero(std::size_t n_grid) {
    return from_function([](double) { return 0.0; }, n_grid, "zero");
  }
  static Potential constant(double c, std::size_t n_grid) {
    return from_function([c](double) { return c; }, n_grid, "constant");
  }
  /// V(x) = a + b x
  static Potential linear(double a, double b, std::size_t n_grid) {
    return from_function([a, b](double x) { return a + b * x; }, n_grid, "linear");
  }
  /// V(x) = amplitude * sin(frequency * pi * x)
  static Potential sine(double amplitude, double frequency, std::size_t n_grid) {
    return from_function(
        [amplitude, frequency](double x) { return amplitude * std::sin(frequency * pi * x); },
        n_grid, "sine");
  }
  /// V(x) = sum_i coeffs[i] x^i
  static Potential polynomial(std::vector<double> coeffs, std::size_t n_grid) {
    return from_function(
        [c = std::move(coeffs)](double x) {
          double acc = 0.0;
          for (auto it = c.rbegin(); it != c.rend(); ++it)
            acc = acc * x + *it;
          return acc;
        },
        n_grid, "polynomial");
  }

  /// Tabulated samples (e.g. read from CSV). Abscissae must increase
  /// strictly from 0 to 1.
  static Potential from_samples(std::vector<double> x, std::vector<double> v) {
    detail::require(x.size() == v.size(), "potential samples: x and V differ in length");
    detail::require(x.size() >= min_grid_points, "potential grid needs at least 16 points");
    detail::require(std::abs(x.front()) < 1e-12 && std::abs(x.back() - 1.0) < 1e-12,
                    "potential samples must include both endpoints 0 and 1");
    for (std::size_t i = 1; i < x.size(); ++i)
      detail::require(x[i] > x[i - 1], "potential abscissae must be strictly increasing");
    Potential p;
    p.label_ = "samples";
    p.x_ = std::move(x);
    p.v_ = std::move(v);
    p.check_finite();
    return p;
  }

  std::size_t size() const { return x_.size(); }
  const std::vector<double> &x() const { return x_; }
  const std::vector<double> &values() const { return v_; }
  const std::string &label() const { return label_; }
  bool is_uniform() const {
    const double h = 1.0 / static_cast<double>(x_.size() - 1);
    for (std::size_t i = 0; i < x_.size(); ++i)
      if (std::abs(x_[i] - static_cast<double>(i) * h) > 1e-12)
        return false;
    return true;
  }
  bool has_closed_form() const { return static_cast<bool>(fn_); }

  /// Samples on a uniform grid of n_grid points.
  Potential resampled(std::size_t n_grid) const {
    if (fn_)
      return from_function(fn_, n_grid, label_);
    if (n_grid == x_.size() && is_uniform())
      return *this;
    detail::require(n_grid >= min_grid_points, "potential grid needs at least 16 points");
    Potential p;
    p.label_ = label_;
    p.x_.resize(n_grid);
    p.v_.resize(n_grid);
    const double h = 1.0 / static_cast<double>(n_grid - 1);
    std::size_t seg = 0;
    for (std::size_t i = 0; i < n_grid; ++i) {
      const double xi = static_cast<double>(i) * h;
      while (seg + 2 < x_.size() && x_[seg + 1] < xi)
        ++seg;
      const double w = (xi - x_[seg]) / (x_[seg + 1] - x_[seg]);
      p.x_[i] = xi;
      p.v_[i] = (1.0 - w) * v_[seg] + w * v_[seg + 1];
    }
    return p;
  }

  /// Trapezoidal integral over [0,1].
  double integral() const {
    double acc = 0.0;
    for (std::size_t i = 1; i < x_.size(); ++i)
      acc += 0.5 * (x_[i] - x_[i - 1]) * (v_[i] + v_[i - 1]);
    return acc;
  }

private:
  void check_finite() const {
    for (double v : v_)
      detail::require(std::isfinite(v), "potential has non-finite values");
  }

  std::vector<double> x_;
  std::vector<double> v_;
  Function fn_;
  std::string label_;
};

/// Coupling profiles Q(x) share the representation of potentials.
using Profile = Potential;

// ---------------------------------------------------------------------------
// Bases and states
// ---------------------------------------------------------------------------

/// Eigenvalues (gauge shifted, ascending) plus the multi-index of each mode.
struct SpectralBasis {
  RealVector lambdas;
  std::vector<MultiIndex> multi_index;
  double gauge_shift = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(lambdas.size()); }
  std::size_t dimension() const { return multi_index.empty() ? 1 : multi_index.front().size(); }
};

using BasisPtr = std::shared_ptr<const SpectralBasis>;

/// Coefficients c_j = <z, e_j> of a state in an eigenbasis.
struct StateCoeffs {
  ComplexVector coeffs;
  BasisPtr basis;

  StateCoeffs() = default;
  StateCoeffs(ComplexVector c, BasisPtr b) : coeffs(std::move(c)), basis(std::move(b)) {
    detail::require(basis != nullptr, "state needs a basis");
    detail::require(static_cast<std::size_t>(coeffs.size()) == basis->size(),
                    "state length must equal the number of basis modes");
  }

  static StateCoeffs zero(BasisPtr b) {
    const auto n = static_cast<Eigen::Index>(b->size());
    return {ComplexVector::Zero(n), std::move(b)};
  }
  /// Unit coefficient on mode j (1-based position in the basis order).
  static StateCoeffs mode(BasisPtr b, std::size_t j, cplx value = 1.0) {
    auto s = zero(std::move(b));
    detail::require(j >= 1 && j <= s.size(), "mode index out of range");
    s.coeffs[static_cast<Eigen::Index>(j - 1)] = value;
    return s;
  }

  std::size_t size() const { return static_cast<std::size_t>(coeffs.size()); }
  const cplx &operator[](std::size_t j) const { return coeffs[static_cast<Eigen::Index>(j)]; }
  cplx &operator[](std::size_t j) { return coeffs[static_cast<Eigen::Index>(j)]; }

  double l2_norm() const { return coeffs.norm(); }
  StateCoeffs normalized() const {
    const double n = l2_norm();
    detail::require(n > 0.0, "cannot normalize the zero state");
    return {coeffs / n, basis};
  }

  StateCoeffs &operator+=(const StateCoeffs &o) {
    coeffs += o.coeffs;
    return *this;
  }
  StateCoeffs &operator-=(const StateCoeffs &o) {
    coeffs -= o.coeffs;
    return *this;
  }
  friend StateCoeffs operator+(StateCoeffs a, const StateCoeffs &b) { return a += b; }
  friend StateCoeffs operator-(StateCoeffs a, const StateCoeffs &b) { return a -= b; }
  friend StateCoeffs operator*(cplx s, StateCoeffs a) {
    a.coeffs *= s;
    return a;
  }
};

/// L^2 scalar product, linear in the first argument: sum_j a_j conj(b_j).
inline cplx inner(const StateCoeffs &a, const StateCoeffs &b) {
  return b.coeffs.dot(a.coeffs); // Eigen's dot conjugates its left operand
}

/// ||z||_{s,V} = ( sum_j lambda_j^s |c_j|^2 )^{1/2}
inline double hs_norm(const StateCoeffs &z, double s) {
  detail::require(s >= 0.0, "Sobolev order must be non-negative");
  detail::require(z.basis->lambdas.size() == 0 || z.basis->lambdas.minCoeff() >= 1.0 - 1e-12,
                  "H^s norms need gauge-shifted eigenvalues >= 1");
  double acc = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j)
    acc += std::pow(z.basis->lambdas[static_cast<Eigen::Index>(j)], s) * std::norm(z[j]);
  return std::sqrt(acc);
}

/// Norm of the space V: weights (j_1 ... j_d)^3 on the multi-index.
/// For d = 1 it is equivalent to (not equal to) the H^3 norm, since
/// lambda_j ~ (j pi)^2 only asymptotically.
inline double v_norm(const StateCoeffs &z) {
  const auto &idx = z.basis->multi_index;
  detail::require(idx.size() == z.size(), "basis lacks a multi-index table");
  double acc = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    double w = 1.0;
    for (int ji : idx[j])
      w *= static_cast<double>(ji) * ji * ji;
    acc += w * w * std::norm(z[j]);
  }
  return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// 1-D Sturm-Liouville solve
// ---------------------------------------------------------------------------

struct EigenSystem {
  BasisPtr basis;
  RealVector grid;  ///< n_grid uniform points, endpoints included
  RealMatrix modes; ///< n_grid x n_modes, L^2-normalized under the trapezoid rule
  double gauge_shift = 0.0;

  std::size_t n_modes() const { return static_cast<std::size_t>(modes.cols()); }
  std::size_t n_grid() const { return static_cast<std::size_t>(grid.size()); }
  const RealVector &lambdas() const { return basis->lambdas; }
  double step() const { return 1.0 / static_cast<double>(n_grid() - 1); }

  /// Linear interpolation of mode j (1-based) at x in [0,1].
  double evaluate(std::size_t j, double x) const {
    const double h = step();
    const double pos = std::clamp(x, 0.0, 1.0) / h;
    auto i = static_cast<Eigen::Index>(std::floor(pos));
    i = std::min<Eigen::Index>(i, grid.size() - 2);
    const double w = pos - static_cast<double>(i);
    const auto c = static_cast<Eigen::Index>(j - 1);
    return (1.0 - w) * modes(i, c) + w * modes(i + 1, c);
  }
};

/// Trapezoidal inner product of two grid functions on a uniform grid.
inline double trapezoid_dot(const Eigen::Ref<const RealVector> &a, const Eigen::Ref<const RealVector> &b,
                            double h) {
  const Eigen::Index n = a.size();
  return h * (a.dot(b) - 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]));
}

/// Dirichlet eigenpairs of -d^2/dx^2 + V on (0,1).
///
/// Second-order central differences give a symmetric tridiagonal matrix
/// on the interior nodes; the lowest n_modes pairs come from LAPACK's
/// dstevr. Each eigenvalue then receives the exact free-operator
/// correction k^2 pi^2 - (4/h^2) sin^2(k pi h / 2), which removes the
/// O(k^4 h^2) discretization error of the Laplacian and leaves an O(h^2)
/// error governed by V alone.
inline EigenSystem solve_sturm_liouville(const Potential &potential, std::size_t n_modes,
                                         std::size_t n_grid) {
  detail::require(n_grid >= min_grid_points, "n_grid must be at least 16");
  detail::require(n_modes >= 1, "n_modes must be positive");
  detail::require(n_modes <= n_grid / 8, "resolution guard: n_modes must not exceed n_grid/8");

  const Potential v = potential.resampled(n_grid);
  const auto interior = static_cast<lapack_int>(n_grid - 2);
  const double h = 1.0 / static_cast<double>(n_grid - 1);
  const double inv_h2 = 1.0 / (h * h);

  std::vector<double> diag(static_cast<std::size_t>(interior));
  std::vector<double> off(static_cast<std::size_t>(interior), -inv_h2);
  for (lapack_int i = 0; i < interior; ++i)
    diag[static_cast<std::size_t>(i)] = 2.0 * inv_h2 + v.values()[static_cast<std::size_t>(i) + 1];

  const auto m_req = static_cast<lapack_int>(n_modes);
  lapack_int found = 0;
  std::vector<double> w(static_cast<std::size_t>(interior));
  std::vector<double> z(static_cast<std::size_t>(interior) * n_modes);
  std::vector<lapack_int> isuppz(2 * n_modes);
  const lapack_int info =
      LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'I', interior, diag.data(), off.data(), 0.0, 0.0, 1,
                     m_req, 0.0, &found, w.data(), z.data(), interior, isuppz.data());
  if (info != 0 || found != m_req)
    throw NumericalError("tridiagonal eigensolver failed (info=" + std::to_string(info) + ")");

  EigenSystem out;
  out.grid.resize(static_cast<Eigen::Index>(n_grid));
  for (std::size_t i = 0; i < n_grid; ++i)
    out.grid[static_cast<Eigen::Index>(i)] = static_cast<double>(i) * h;
  out.modes = RealMatrix::Zero(static_cast<Eigen::Index>(n_grid), static_cast<Eigen::Index>(n_modes));

  RealVector lambdas(static_cast<Eigen::Index>(n_modes));
  const double scale = 1.0 / std::sqrt(h);
  for (std::size_t k = 0; k < n_modes; ++k) {
    const double kk = static_cast<double>(k + 1);
    const double s = std::sin(kk * pi * h / 2.0);
    lambdas[static_cast<Eigen::Index>(k)] = w[k] + (kk * kk * pi * pi - 4.0 * inv_h2 * s * s);

    const double *col = z.data() + k * static_cast<std::size_t>(interior);
    const double sign = col[0] >= 0.0 ? scale : -scale; // e_k'(0) > 0
    for (lapack_int i = 0; i < interior; ++i)
      out.modes(i + 1, static_cast<Eigen::Index>(k)) = sign * col[i];
  }

  double shift = 0.0;
  if (lambdas[0] < 1.0)
    shift = 1.0 - lambdas[0];
  lambdas.array() += shift;
  out.gauge_shift = shift;

  auto basis = std::make_shared<SpectralBasis>();
  basis->lambdas = std::move(lambdas);
  basis->gauge_shift = shift;
  basis->multi_index.reserve(n_modes);
  for (std::size_t k = 0; k < n_modes; ++k)
    basis->multi_index.push_back({static_cast<int>(k + 1)});
  out.basis = std::move(basis);
  return out;
}

// ---------------------------------------------------------------------------
// Tensor products on (0,1)^d
// ---------------------------------------------------------------------------

struct EigenSystemND {
  std::vector<EigenSystem> factors;
  BasisPtr basis; ///< modes ordered by eigenvalue, ties broken lexicographically

  std::size_t dimension() const { return factors.size(); }
  std::size_t size() const { return basis->size(); }

  /// Position (0-based) of a multi-index in the basis order.
  std::size_t position(const MultiIndex &j) const {
    const auto &idx = basis->multi_index;
    const auto it = std::find(idx.begin(), idx.end(), j);
    detail::require(it != idx.end(), "multi-index not in the tensor table");
    return static_cast<std::size_t>(it - idx.begin());
  }

  double eigenvalue(const MultiIndex &j) const {
    detail::require(j.size() == factors.size(), "multi-index has the wrong dimension");
    double acc = 0.0;
    for (std::size_t i = 0; i < j.size(); ++i)
      acc += factors[i].lambdas()[j[i] - 1];
    return acc;
  }

  /// e_{j_1..j_d}(x_1..x_d) = prod_i e_{j_i}(x_i)
  double evaluate(const MultiIndex &j, std::span<const double> point) const {
    detail::require(j.size() == factors.size() && point.size() == factors.size(),
                    "multi-index and point must match the dimension");
    double acc = 1.0;
    for (std::size_t i = 0; i < j.size(); ++i)
      acc *= factors[i].evaluate(static_cast<std::size_t>(j[i]), point[i]);
    return acc;
  }
};

/// Full product table of the factor modes.
inline EigenSystemND tensor_eigensystem(std::vector<EigenSystem> systems) {
  detail::require(!systems.empty(), "tensor_eigensystem needs at least one factor");
  for (const auto &s : systems)
    detail::require(s.n_grid() == systems.front().n_grid(), "factor systems must share the grid resolution");

  std::vector<MultiIndex> table{{}};
  for (const auto &s : systems) {
    std::vector<MultiIndex> next;
    next.reserve(table.size() * s.n_modes());
    for (const auto &prefix : table)
      for (std::size_t k = 1; k <= s.n_modes(); ++k) {
        auto j = prefix;
        j.push_back(static_cast<int>(k));
        next.push_back(std::move(j));
      }
    table = std::move(next);
  }

  auto lambda_of = [&](const MultiIndex &j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < j.size(); ++i)
      acc += systems[i].lambdas()[j[i] - 1];
    return acc;
  };
  std::stable_sort(table.begin(), table.end(),
                   [&](const MultiIndex &a, const MultiIndex &b) { return lambda_of(a) < lambda_of(b); });

  auto basis = std::make_shared<SpectralBasis>();
  basis->lambdas.resize(static_cast<Eigen::Index>(table.size()));
  for (std::size_t i = 0; i < table.size(); ++i)
    basis->lambdas[static_cast<Eigen::Index>(i)] = lambda_of(table[i]);
  for (const auto &s : systems)
    basis->gauge_shift += s.gauge_shift;
  basis->multi_index = std::move(table);

  EigenSystemND out;
  out.factors = std::move(systems);
  out.basis = std::move(basis);
  return out;
}

// ---------------------------------------------------------------------------
// Asymptotic probe
// ---------------------------------------------------------------------------

struct AsymptoticsReport {
  std::vector<double> remainders;       ///< r_k = lambda_k - shift - k^2 pi^2 - int V
  std::vector<double> remainder_sq_sum; ///< partial sums of r_k^2
  std::vector<double> sup_distance;     ///< ||e_k - e_{k,0}||_inf on the grid
  std::vector<double> derivative_distance;
  std::vector<double> scaled_sup_distance; ///< k ||e_k - e_{k,0}||_inf
  double last_quarter_fraction = 0.0;      ///< (S_n - S_{3n/4}) / S_n, 0 when S_n = 0
  bool plateau = true;                     ///< last_quarter_fraction < 0.05
  bool growth_flag = false;                ///< monotone fit of k*dist keeps growing
};

namespace detail {
/// Pool-adjacent-violators fit of a non-decreasing sequence.
inline std::vector<double> isotonic_increasing(const std::vector<double> &y) {
  std::vector<double> level;
  std::vector<std::size_t> count;
  for (double v : y) {
    level.push_back(v);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const auto n1 = static_cast<double>(count[count.size() - 2]);
      const auto n2 = static_cast<double>(count.back());
      const double merged = (n1 * level[level.size() - 2] + n2 * level.back()) / (n1 + n2);
      const std::size_t c = count[count.size() - 2] + count.back();
      level.pop_back();
      count.pop_back();
      level.back() = merged;
      count.back() = c;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (std::size_t i = 0; i < level.size(); ++i)
    out.insert(out.end(), count[i], level[i]);
  return out;
}
} // namespace detail

/// Scaled distances below this are discretization noise, not a trend.
inline constexpr double growth_floor = 1e-8;

inline AsymptoticsReport check_asymptotics(const EigenSystem &system, const Potential &potential) {
  const std::size_t n = system.n_modes();
  detail::require(n >= 8, "asymptotics probe needs at least 8 modes");
  const double int_v = potential.resampled(system.n_grid()).integral();
  const double h = system.step();
  const auto ng = static_cast<Eigen::Index>(system.n_grid());

  AsymptoticsReport rep;
  double partial = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double kk = static_cast<double>(k + 1);
    const double r = system.lambdas()[static_cast<Eigen::Index>(k)] - system.gauge_shift -
                     kk * kk * pi * pi - int_v;
    rep.remainders.push_back(r);
    partial += r * r;
    rep.remainder_sq_sum.push_back(partial);

    double sup = 0.0;
    double dsup = 0.0;
    const auto col = system.modes.col(static_cast<Eigen::Index>(k));
    auto free_mode = [&](Eigen::Index i) { return std::sqrt(2.0) * std::sin(kk * pi * system.grid[i]); };
    for (Eigen::Index i = 0; i < ng; ++i)
      sup = std::max(sup, std::abs(col[i] - free_mode(i)));
    // Identical centered stencils on both functions, so the stencil error cancels.
    for (Eigen::Index i = 1; i + 1 < ng; ++i) {
      const double d = (col[i + 1] - col[i - 1]) / (2.0 * h);
      const double d0 = (free_mode(i + 1) - free_mode(i - 1)) / (2.0 * h);
      dsup = std::max(dsup, std::abs(d - d0));
    }
    rep.sup_distance.push_back(sup);
    rep.derivative_distance.push_back(dsup);
    rep.scaled_sup_distance.push_back(kk * sup);
  }

  const double total = rep.remainder_sq_sum.back();
  const double three_quarter = rep.remainder_sq_sum[(3 * n) / 4 - 1];
  rep.last_quarter_fraction = total > 0.0 ? (total - three_quarter) / total : 0.0;
  rep.plateau = rep.last_quarter_fraction < 0.05;

  const auto iso = detail::isotonic_increasing(rep.scaled_sup_distance);
  const double mid = iso[n / 2];
  rep.growth_flag = iso.back() > 1.25 * mid + growth_floor;
  return rep;
}

} // namespace schrodctl
