#pragma once

// Instruments for checking convergence claims: critical-point
// classification, projective distance, step-size stabilization, saddle
// avoidance by Monte Carlo, and end-of-run summaries.

#include <atomic>
#include <exception>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>

#include "btgd/core.hpp"
#include "btgd/functions.hpp"
#include "btgd/optimizers.hpp"

namespace btgd {

// ---------------------------------------------------------------------------
// Symmetric eigenvalues
// ---------------------------------------------------------------------------

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations, run
/// until the off-diagonal Frobenius norm drops below off_tol. Ascending.
inline Vector jacobi_eigenvalues(SymMatrix a, double off_tol = 1e-10, int max_sweeps = 100) {
  const std::size_t n = a.size();
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  for (int sweep = 0; sweep < max_sweeps && off_norm() >= off_tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
      }
    }
  }
  Vector ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

// ---------------------------------------------------------------------------
// Critical points
// ---------------------------------------------------------------------------

struct CriticalPointClass {
  CriticalKind kind = CriticalKind::NotCritical;
  Vector eigenvalues;  // empty when NotCritical
  double grad_norm = 0.0;
};

/// NotCritical when |grad f(x)| > grad_tol; otherwise classified by the
/// eigenvalues of the finite-difference Hessian, with the eigenvalue
/// tolerance scaled by max(1, largest |eigenvalue|).
inline CriticalPointClass classify_critical_point(const ScalarField& f, std::span<const double> x,
                                                  double grad_tol = 1e-6, double eig_tol = 1e-6) {
  if (!(grad_tol > 0.0) || !(eig_tol > 0.0))
    throw InvalidArgument("classify_critical_point: tolerances must be positive");
  CriticalPointClass out;
  out.grad_norm = vec::norm(f.gradient(x));
  if (out.grad_norm > grad_tol) return out;
  out.eigenvalues = jacobi_eigenvalues(fd_hessian(f, x));
  double scale = 1.0;
  for (double l : out.eigenvalues) scale = std::max(scale, std::abs(l));
  const double tol = eig_tol * scale;
  const bool any_negative = std::any_of(out.eigenvalues.begin(), out.eigenvalues.end(),
                                        [tol](double l) { return l < -tol; });
  const bool all_positive = std::all_of(out.eigenvalues.begin(), out.eigenvalues.end(),
                                        [tol](double l) { return l > tol; });
  out.kind = any_negative   ? CriticalKind::GeneralizedSaddle
             : all_positive ? CriticalKind::Minimum
                            : CriticalKind::Degenerate;
  return out;
}

// ---------------------------------------------------------------------------
// Projective distance
// ---------------------------------------------------------------------------

/// Angle between (1, x) and (1, y) as lines through the origin of R^(m+1),
/// in [0, pi/2]. With unit vectors u, w and w flipped to make <u, w> >= 0,
/// the angle is 2 atan2(|u - w|, |u + w|), which is exact at x = y.
inline double projective_dist(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("projective_dist: dimension mismatch");
  const double nx = std::sqrt(1.0 + vec::dot(x, x));
  const double ny = std::sqrt(1.0 + vec::dot(y, y));
  const double sign = 1.0 + vec::dot(x, y) < 0.0 ? -1.0 : 1.0;
  double diff = 0.0, sum = 0.0;
  auto add = [&](double a, double b) {
    const double u = a / nx, w = sign * b / ny;
    diff += (u - w) * (u - w);
    sum += (u + w) * (u + w);
  };
  add(1.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) add(x[i], y[i]);
  return std::min(2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)), std::numbers::pi / 2);
}

// ---------------------------------------------------------------------------
// Stabilization of step sizes
// ---------------------------------------------------------------------------

struct StabilizationReport {
  std::vector<double> distinct_sigmas;  // ascending
  std::size_t tail_constant_length = 0;
  std::size_t window = 0;
  bool stabilized = false;
  bool short_run = false;
};

/// Looks at the step sizes of records 1..n. A run is stabilized when its
/// last max(50, 10% of the steps) steps share one step size. Runs with
/// fewer steps than that window are flagged short_run and count as
/// stabilized when the final constant run covers at least half the steps.
inline StabilizationReport detect_stabilization(const Trajectory& traj) {
  StabilizationReport rep;
  if (traj.records.size() < 2) {
    rep.short_run = true;
    return rep;
  }
  std::vector<double> sigmas;
  sigmas.reserve(traj.records.size() - 1);
  for (std::size_t i = 1; i < traj.records.size(); ++i) sigmas.push_back(traj.records[i].step_size);

  std::set<double> distinct(sigmas.begin(), sigmas.end());
  rep.distinct_sigmas.assign(distinct.begin(), distinct.end());

  const double last = sigmas.back();
  for (auto it = sigmas.rbegin(); it != sigmas.rend() && *it == last; ++it) ++rep.tail_constant_length;

  const std::size_t steps = sigmas.size();
  rep.window = std::max<std::size_t>(50, (steps + 9) / 10);
  if (steps >= rep.window) {
    rep.stabilized = rep.tail_constant_length >= rep.window;
  } else {
    rep.short_run = true;
    rep.stabilized = 2 * rep.tail_constant_length >= steps;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Saddle avoidance Monte Carlo
// ---------------------------------------------------------------------------

struct SaddleSample {
  std::size_t index = 0;
  Point start = Point::zeros(1);
  bool escaped = false;
  double min_dist_after_burn_in = 0.0;  // infinity when the run ends within the burn-in
  Termination termination = Termination::MaxIters;
  std::size_t steps = 0;
};

struct SaddleMcResult {
  double fraction = 0.0;
  std::vector<SaddleSample> samples;  // ordered by sample index
};

struct SaddleMcOptions {
  double exclusion_factor = 0.01;  // exclusion radius = exclusion_factor * eps
  std::size_t burn_in = 10;
  unsigned workers = 0;  // 0: hardware concurrency
};

namespace detail {

inline Point uniform_in_ball(std::span<const double> center, double radius, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t m = center.size();
  Vector dir(m);
  double n2 = 0.0;
  do {
    for (double& d : dir) d = normal(rng);
    n2 = vec::dot(dir, dir);
  } while (n2 == 0.0);
  const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(m)) / std::sqrt(n2);
  Vector p(m);
  for (std::size_t i = 0; i < m; ++i) p[i] = center[i] + r * dir[i];
  return Point(std::move(p));
}

template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// Runs Backtracking GD from n_samples uniform points of B(saddle, eps) and
/// returns the fraction whose iterates, after the burn-in, never enter
/// B(saddle, exclusion_factor * eps). Sample i uses seed + i.
inline SaddleMcResult saddle_basin_fraction(const ScalarField& f, const Point& saddle, double eps,
                                            std::size_t n_samples, const LineSearchConfig& cfg,
                                            const StopRule& stop, std::uint64_t seed,
                                            const SaddleMcOptions& opts = {}) {
  if (!(eps > 0.0)) throw InvalidArgument("saddle_basin_fraction: eps must be positive");
  if (n_samples == 0) throw InvalidArgument("saddle_basin_fraction: need at least one sample");
  cfg.validate();
  stop.validate();
  const CriticalPointClass cls = classify_critical_point(f, saddle);
  if (cls.kind != CriticalKind::GeneralizedSaddle)
    throw NotASaddle(std::string("saddle_basin_fraction: point is ") + to_string(cls.kind));

  const double exclusion = opts.exclusion_factor * eps;
  SaddleMcResult result;
  result.samples.resize(n_samples);
  detail::parallel_for(n_samples, opts.workers, [&](std::size_t i) {
    std::mt19937_64 rng(seed + i);
    SaddleSample s;
    s.index = i;
    s.start = detail::uniform_in_ball(saddle.span(), eps, rng);
    const Trajectory t = run_backtracking_gd(f, s.start, cfg, stop);
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = opts.burn_in + 1; k < t.records.size(); ++k)
      min_dist = std::min(min_dist, vec::distance(t.records[k].point.span(), saddle.span()));
    s.min_dist_after_burn_in = min_dist;
    s.escaped = min_dist > exclusion;
    s.termination = t.termination;
    s.steps = t.steps();
    result.samples[i] = std::move(s);
  });
  const auto escaped = std::count_if(result.samples.begin(), result.samples.end(),
                                     [](const SaddleSample& s) { return s.escaped; });
  result.fraction = static_cast<double>(escaped) / static_cast<double>(n_samples);
  return result;
}

// ---------------------------------------------------------------------------
// Convergence summary
// ---------------------------------------------------------------------------

struct ConvergenceSummary {
  double last_step_norm = 0.0;
  double last_grad_norm = 0.0;
  Point final_point = Point::zeros(1);
  CriticalPointClass limit_class;
};

inline ConvergenceSummary convergence_report(const Trajectory& traj, const ScalarField& f) {
  if (traj.records.empty()) throw InvalidArgument("convergence_report: empty trajectory");
  ConvergenceSummary s;
  const IterateRecord& last = traj.records.back();
  s.final_point = last.point;
  s.last_grad_norm = last.grad_norm;
  if (traj.records.size() >= 2)
    s.last_step_norm =
        vec::distance(last.point.span(), traj.records[traj.records.size() - 2].point.span());
  s.limit_class = classify_critical_point(f, last.point.span());
  return s;
}

}  // namespace btgd
