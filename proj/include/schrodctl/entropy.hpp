#pragma once

// Covering-number experiment: the reachable set of a W^{1,1} control ball
// against a slice of an H^k ball, compared through the growth of
// H_eps = ln N_eps as eps -> 0.

#include "schrodctl/propagator.hpp"
#include "schrodctl/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>
#include <vector>

namespace schrodctl {

/// Piecewise-linear control on [0, horizon] through equispaced knot values.
struct PiecewiseLinear {
  double horizon = 1.0;
  std::vector<double> values;

  double operator()(double t) const {
    if (t <= 0.0)
      return values.front();
    if (t >= horizon)
      return values.back();
    const double pos = t / horizon * static_cast<double>(values.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(pos), values.size() - 2);
    const double f = pos - static_cast<double>(i);
    return (1.0 - f) * values[i] + f * values[i + 1];
  }

  double step() const { return horizon / static_cast<double>(values.size() - 1); }
};

namespace detail {
/// Exact int over one panel of |linear from a to b|.
inline double abs_linear(double a, double b, double h) {
  if ((a >= 0.0 && b >= 0.0) || (a <= 0.0 && b <= 0.0))
    return 0.5 * h * std::abs(a + b);
  return 0.5 * h * (a * a + b * b) / (std::abs(a) + std::abs(b));
}
} // namespace detail

inline double l1_norm(const PiecewiseLinear &u) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < u.values.size(); ++i)
    acc += detail::abs_linear(u.values[i], u.values[i + 1], u.step());
  return acc;
}

/// ||u||_{L^1} + ||u'||_{L^1}, exact for piecewise-linear u.
inline double w11_norm(const PiecewiseLinear &u) {
  double var = 0.0;
  for (std::size_t i = 0; i + 1 < u.values.size(); ++i)
    var += std::abs(u.values[i + 1] - u.values[i]);
  return l1_norm(u) + var;
}

/// ||u - v||_{L^1} for controls on the same knot grid.
inline double l1_distance(const PiecewiseLinear &u, const PiecewiseLinear &v) {
  detail::require(u.values.size() == v.values.size() && u.horizon == v.horizon, "controls live on different grids");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < u.values.size(); ++i)
    acc += detail::abs_linear(u.values[i] - v.values[i], u.values[i + 1] - v.values[i + 1], u.step());
  return acc;
}

struct ControlBallSample {
  double m = 1.0;
  std::vector<PiecewiseLinear> controls;
  std::vector<double> times;
  std::uint64_t seed = 0;

  std::size_t size() const { return controls.size(); }
};

/// Random (t, u) in [0, m] x B_{W^{1,1}[0,m]}(0, m): Gaussian knot values
/// rescaled to W^{1,1} norm r m with r uniform in [0, 1], t uniform in [0, m].
inline ControlBallSample sample_control_ball(double m, std::size_t count, std::size_t knots, std::uint64_t seed) {
  detail::require(m > 0.0, "control-ball radius must be positive");
  detail::require(count >= 2, "at least two samples are required");
  detail::require(knots >= 2, "at least two knots are required");
  Rng rng(seed);
  ControlBallSample out;
  out.m = m;
  out.seed = seed;
  for (std::size_t i = 0; i < count; ++i) {
    PiecewiseLinear u{m, std::vector<double>(knots)};
    for (auto &v : u.values)
      v = rng.normal();
    const double norm = w11_norm(u);
    const double scale = norm > 0.0 ? rng.uniform() * m / norm : 0.0;
    for (auto &v : u.values)
      v *= scale;
    out.controls.push_back(std::move(u));
    out.times.push_back(rng.uniform(0.0, m));
  }
  return out;
}

namespace detail {
/// Runs body(i) for i in [0, n) on up to `threads` workers (0: hardware).
/// Each index writes only its own slot, so results do not depend on scheduling.
template <class F> void parallel_for(std::size_t n, std::size_t threads, const F &body) {
  if (threads == 0)
    threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads)
          body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto &t : pool)
    t.join();
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}
} // namespace detail

/// Endpoints U_{t_i}(z0, u_i). A zero time returns z0.
inline std::vector<StateCoeffs> reachable_cloud(const StateCoeffs &z0, const ControlBallSample &s,
                                                const CouplingMatrix &c, double dt, std::size_t threads = 0) {
  detail::require(std::abs(z0.l2_norm() - 1.0) <= 1e-10, "initial state must lie on the unit sphere");
  std::vector<StateCoeffs> out(s.size(), z0);
  detail::parallel_for(s.size(), threads, [&](std::size_t i) {
    const double t = s.times[i];
    if (t <= 0.0)
      return;
    const double step = std::min(dt, t);
    const auto tr = propagate(z0, s.controls[i], c, t, step, {.stride = std::numeric_limits<std::size_t>::max()});
    out[i] = tr.final_state();
  });
  return out;
}

/// Points z = (z0 + w)/||z0 + w|| with w uniform in {sum_j lambda_j^k |w_j|^2 <= r^2}.
inline std::vector<StateCoeffs> ball_slice(const StateCoeffs &z0, double k, double radius, std::size_t count,
                                           std::uint64_t seed) {
  detail::require(radius > 0.0, "ball radius must be positive");
  Rng rng(seed);
  const auto n = static_cast<Eigen::Index>(z0.size());
  const double dim = 2.0 * static_cast<double>(n);
  std::vector<StateCoeffs> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ComplexVector g(n);
    for (Eigen::Index j = 0; j < n; ++j)
      g[j] = cplx(rng.normal(), rng.normal());
    const double r = radius * std::pow(rng.uniform(), 1.0 / dim) / g.norm();
    ComplexVector w(n);
    for (Eigen::Index j = 0; j < n; ++j)
      w[j] = g[j] * r / std::pow(z0.basis->lambdas[j], 0.5 * k);
    StateCoeffs z(z0.coeffs + w, z0.basis);
    out.push_back(z.normalized());
  }
  return out;
}

/// Pairwise distances (sum_j lambda_j^order |a_j - b_j|^2)^{1/2}; any real order.
inline RealMatrix distance_matrix(const std::vector<StateCoeffs> &points, double order) {
  detail::require(!points.empty(), "point cloud is empty");
  const auto &basis = *points.front().basis;
  detail::require(basis.lambdas.minCoeff() > 0.0, "weighted distances need positive eigenvalues");
  const auto n = static_cast<Eigen::Index>(points.front().size());
  RealVector w(n);
  for (Eigen::Index j = 0; j < n; ++j)
    w[j] = std::pow(basis.lambdas[j], 0.5 * order);
  const auto count = static_cast<Eigen::Index>(points.size());
  ComplexMatrix scaled(n, count);
  for (Eigen::Index i = 0; i < count; ++i)
    scaled.col(i) = points[static_cast<std::size_t>(i)].coeffs.cwiseProduct(w.cast<cplx>());
  RealMatrix d = RealMatrix::Zero(count, count);
  for (Eigen::Index i = 0; i < count; ++i)
    for (Eigen::Index j = i + 1; j < count; ++j)
      d(i, j) = d(j, i) = (scaled.col(i) - scaled.col(j)).norm();
  return d;
}

/// Greedy cover over `subset` (indices into d, visited in the given order):
/// pick the first uncovered point, drop everything within 2 eps of it.
inline std::size_t covering_number(const RealMatrix &d, const std::vector<std::size_t> &subset, double eps) {
  detail::require(!subset.empty(), "covering needs at least one point");
  detail::require(eps > 0.0, "covering radius must be positive");
  std::vector<char> covered(subset.size(), 0);
  std::size_t picks = 0;
  for (std::size_t a = 0; a < subset.size(); ++a) {
    if (covered[a])
      continue;
    ++picks;
    const auto ia = static_cast<Eigen::Index>(subset[a]);
    for (std::size_t b = a; b < subset.size(); ++b)
      if (!covered[b] && d(ia, static_cast<Eigen::Index>(subset[b])) <= 2.0 * eps)
        covered[b] = 1;
  }
  return picks;
}

inline std::size_t covering_number(const std::vector<StateCoeffs> &points, double order, double eps) {
  detail::require(!points.empty(), "covering needs at least one point");
  std::vector<std::size_t> all(points.size());
  std::iota(all.begin(), all.end(), 0);
  return covering_number(distance_matrix(points, order), all, eps);
}

namespace detail {
/// Linear-interpolated quantile of the strictly upper pairwise distances.
inline double distance_quantile(const RealMatrix &d, double q) {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = i + 1; j < d.cols(); ++j)
      v.push_back(d(i, j));
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// eps grid, decreasing, log-spaced between half the lo and hi distance quantiles.
inline std::vector<double> epsilon_grid(const RealMatrix &d, std::size_t n, double lo_q, double hi_q) {
  const double a = 0.5 * distance_quantile(d, hi_q), b = 0.5 * distance_quantile(d, lo_q);
  require(b > 0.0 && a > b, "point cloud is too degenerate for an eps grid");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = a * std::pow(b / a, static_cast<double>(i) / static_cast<double>(n - 1));
  return out;
}

/// Least-squares slope of log(ln N) against log(1/eps) over 2 <= N < count;
/// NaN with fewer than three usable points.
inline double entropy_slope(const std::vector<double> &eps, const std::vector<std::size_t> &counts,
                            std::size_t count) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < eps.size(); ++i)
    if (counts[i] >= 2 && counts[i] < count) {
      xs.push_back(std::log(1.0 / eps[i]));
      ys.push_back(std::log(std::log(static_cast<double>(counts[i]))));
    }
  if (xs.size() < 3)
    return std::numeric_limits<double>::quiet_NaN();
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}
} // namespace detail

struct EntropyConfig {
  double m = 1.0;               ///< control-ball radius and time horizon
  std::size_t count = 400;      ///< points per channel
  std::size_t knots = 16;
  double k = 0.5;               ///< ball order; distances are measured in H^{k-1}
  double ball_radius = 0.5;
  double dt = 1e-3;
  std::size_t n_eps = 8;
  double lo_quantile = 0.10;
  double hi_quantile = 0.60;
  std::size_t bootstrap = 200;
  std::uint64_t seed = 7;
  std::size_t threads = 0;
};

struct ChannelFit {
  std::vector<double> epsilons; ///< decreasing
  std::vector<std::size_t> counts;
  double slope = 0.0;
  double ci_low = 0.0, ci_high = 0.0; ///< bootstrap 95% interval of the slope
};

struct EntropyReport {
  double metric_order = 0.0;
  std::size_t n_points = 0;
  std::size_t n_modes = 0;
  ChannelFit reachable, ball;
  double gap = 0.0;                   ///< ball slope - reachable slope
  double gap_ci_low = 0.0, gap_ci_high = 0.0;
  std::size_t bootstrap_valid = 0;    ///< resamples where both slopes were defined
  double holder_constant = 0.0;       ///< max ||z_i - z_j|| / (|t_i - t_j| + ||u_i - u_j||_{L^1})
  double max_l2_drift = 0.0;          ///< max | ||z_i|| - 1 | over the reachable cloud
};

namespace detail {
inline ChannelFit fit_channel(const RealMatrix &d, const EntropyConfig &cfg) {
  ChannelFit out;
  out.epsilons = epsilon_grid(d, cfg.n_eps, cfg.lo_quantile, cfg.hi_quantile);
  std::vector<std::size_t> all(static_cast<std::size_t>(d.rows()));
  std::iota(all.begin(), all.end(), 0);
  for (double e : out.epsilons)
    out.counts.push_back(covering_number(d, all, e));
  out.slope = entropy_slope(out.epsilons, out.counts, all.size());
  return out;
}

inline std::vector<std::size_t> counts_for(const RealMatrix &d, const std::vector<std::size_t> &idx,
                                           const std::vector<double> &eps) {
  std::vector<std::size_t> out;
  for (double e : eps)
    out.push_back(covering_number(d, idx, e));
  return out;
}
} // namespace detail

/// Slopes of both channels on their own eps grids, with a paired bootstrap
/// (index resampling, grids held fixed) for the slope gap.
inline EntropyReport compare_entropy(const std::vector<StateCoeffs> &reachable, const std::vector<StateCoeffs> &ball,
                                     const EntropyConfig &cfg) {
  detail::require(reachable.size() >= 50 && ball.size() >= 50, "entropy fits need at least 50 points per channel");
  detail::require(cfg.n_eps >= 3, "at least three eps values are required");
  detail::require(0.0 < cfg.lo_quantile && cfg.lo_quantile < cfg.hi_quantile && cfg.hi_quantile < 1.0,
                  "distance quantiles must satisfy 0 < lo < hi < 1");
  EntropyReport rep;
  rep.metric_order = cfg.k - 1.0;
  rep.n_points = reachable.size();
  rep.n_modes = reachable.front().size();
  const RealMatrix dr = distance_matrix(reachable, rep.metric_order);
  const RealMatrix db = distance_matrix(ball, rep.metric_order);
  rep.reachable = detail::fit_channel(dr, cfg);
  rep.ball = detail::fit_channel(db, cfg);
  rep.gap = rep.ball.slope - rep.reachable.slope;

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<double> gaps, sr, sb;
  std::vector<std::size_t> ir(reachable.size()), ib(ball.size());
  for (std::size_t b = 0; b < cfg.bootstrap; ++b) {
    for (auto &i : ir)
      i = rng.index(reachable.size());
    for (auto &i : ib)
      i = rng.index(ball.size());
    std::sort(ir.begin(), ir.end());
    std::sort(ib.begin(), ib.end());
    const double a = detail::entropy_slope(rep.reachable.epsilons, detail::counts_for(dr, ir, rep.reachable.epsilons),
                                           ir.size());
    const double c = detail::entropy_slope(rep.ball.epsilons, detail::counts_for(db, ib, rep.ball.epsilons), ib.size());
    if (std::isnan(a) || std::isnan(c))
      continue;
    sr.push_back(a);
    sb.push_back(c);
    gaps.push_back(c - a);
  }
  rep.bootstrap_valid = gaps.size();
  if (!gaps.empty()) {
    rep.gap_ci_low = detail::percentile(gaps, 0.025);
    rep.gap_ci_high = detail::percentile(gaps, 0.975);
    rep.reachable.ci_low = detail::percentile(sr, 0.025);
    rep.reachable.ci_high = detail::percentile(sr, 0.975);
    rep.ball.ci_low = detail::percentile(sb, 0.025);
    rep.ball.ci_high = detail::percentile(sb, 0.975);
  } else {
    rep.gap_ci_low = rep.gap_ci_high = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

/// L^2 Lipschitz constant of (t, u) -> U_t(z0, u) fitted over all sampled pairs.
inline double holder_constant(const std::vector<StateCoeffs> &cloud, const ControlBallSample &s) {
  double best = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (std::size_t j = i + 1; j < cloud.size(); ++j) {
      const double den = std::abs(s.times[i] - s.times[j]) + l1_distance(s.controls[i], s.controls[j]);
      if (den > 0.0)
        best = std::max(best, (cloud[i] - cloud[j]).l2_norm() / den);
    }
  return best;
}

inline EntropyReport entropy_report(const StateCoeffs &z0, const CouplingMatrix &c, const EntropyConfig &cfg) {
  detail::require(cfg.k > 0.0 && cfg.k < 1.0, "ball order k must lie in (0, d) with d = 1");
  const auto sample = sample_control_ball(cfg.m, cfg.count, cfg.knots, cfg.seed);
  const auto cloud = reachable_cloud(z0, sample, c, cfg.dt, cfg.threads);
  const auto ball = ball_slice(z0, cfg.k, cfg.ball_radius, cfg.count, cfg.seed + 1);
  auto rep = compare_entropy(cloud, ball, cfg);
  rep.holder_constant = holder_constant(cloud, sample);
  for (const auto &z : cloud)
    rep.max_l2_drift = std::max(rep.max_l2_drift, std::abs(z.l2_norm() - 1.0));
  return rep;
}

} // namespace schrodctl
