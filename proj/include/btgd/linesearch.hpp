#pragma once

// Step-size selection on the discrete grid {delta0 * beta^n}: Armijo
// backtracking, two-way backtracking, direction-aware backtracking, and the
// Wolfe predicate.

#include <utility>

#include "btgd/core.hpp"

namespace btgd {

enum class SearchDirection { ShrunkOrKept, Grown };

struct LineSearchResult {
  double sigma = 0.0;
  std::size_t trials = 0;  // sufficient-decrease tests performed
  SearchDirection direction = SearchDirection::ShrunkOrKept;
  int exponent = 0;  // sigma = delta0 * beta^exponent
};

/// Value and gradient of the objective at the point where a search starts.
struct Anchor {
  std::span<const double> x;
  double value;
  std::span<const double> grad;
};

namespace detail {

/// delta0 multiplied by beta n times (n > 0) or divided |n| times (n < 0),
/// one factor at a time, so every grid value is bit-reproducible.
inline double grid_value(double delta0, double beta, int n) {
  double s = delta0;
  if (n >= 0) {
    for (int i = 0; i < n; ++i) s *= beta;
  } else {
    for (int i = 0; i < -n; ++i) s /= beta;
  }
  return s;
}

/// Index of the largest grid value not exceeding sigma (sigma <= delta0).
inline int grid_index_at_most(double delta0, double beta, double sigma, int cap) {
  int n = 0;
  double s = delta0;
  while (s > sigma && n < cap) {
    s *= beta;
    ++n;
  }
  return n;
}

/// Searches the grid starting at start_exponent. Shrinks while the test
/// fails (at most max_halvings times); otherwise grows while the next larger
/// value passes and its exponent stays >= min_exponent.
inline LineSearchResult grid_search(const ScalarField& f, const Anchor& a,
                                    std::span<const double> v, const LineSearchConfig& cfg,
                                    int start_exponent, int min_exponent) {
  Vector y(a.x.size());
  Vector d(a.x.size());
  auto passes = [&](int n) {
    const double sigma = grid_value(cfg.delta0, cfg.beta, n);
    for (std::size_t i = 0; i < y.size(); ++i) {
      d[i] = sigma * v[i];
      y[i] = a.x[i] - d[i];
    }
    return sufficient_decrease(a.value, f.value(y), a.grad, d, cfg.alpha);
  };

  LineSearchResult r;
  int n = start_exponent;
  r.trials = 1;
  if (!passes(n)) {
    int shrinks = 0;
    do {
      if (shrinks == cfg.max_halvings)
        throw StalledLineSearch("line search: no acceptable step after " +
                                std::to_string(cfg.max_halvings) + " reductions");
      ++n;
      ++shrinks;
      ++r.trials;
    } while (!passes(n));
  } else {
    int grows = 0;
    while (n - 1 >= min_exponent && grows < cfg.max_halvings) {
      ++r.trials;
      if (!passes(n - 1)) break;
      --n;
      ++grows;
    }
    if (grows > 0) r.direction = SearchDirection::Grown;
  }
  r.exponent = n;
  r.sigma = grid_value(cfg.delta0, cfg.beta, n);
  return r;
}

}  // namespace detail

// --- Armijo backtracking -----------------------------------------------------

/// Largest sigma in {delta0, delta0 beta, ...} satisfying Armijo along
/// v = grad f(x), testing n = 0, 1, 2, ... in order.
inline LineSearchResult backtrack(const ScalarField& f, const Anchor& a,
                                  const LineSearchConfig& cfg) {
  return detail::grid_search(f, a, a.grad, cfg, 0, 0);
}

inline LineSearchResult backtrack(const ScalarField& f, std::span<const double> x,
                                  const LineSearchConfig& cfg) {
  cfg.validate();
  const Vector g = f.gradient(x);
  return backtrack(f, Anchor{x, f.value(x), g}, cfg);
}

/// Backtracking along an arbitrary direction v with <grad f(x), v> >= 0.
inline LineSearchResult backtrack_direction(const ScalarField& f, const Anchor& a,
                                            std::span<const double> v,
                                            const LineSearchConfig& cfg) {
  if (v.size() != a.x.size()) throw InvalidArgument("backtrack_direction: dimension mismatch");
  if (vec::dot(a.grad, v) < 0.0)
    throw NonDescentDirection("backtrack_direction: <grad f(x), v> < 0");
  return detail::grid_search(f, a, v, cfg, 0, 0);
}

inline LineSearchResult backtrack_direction(const ScalarField& f, std::span<const double> x,
                                            std::span<const double> v,
                                            const LineSearchConfig& cfg) {
  cfg.validate();
  const Vector g = f.gradient(x);
  return backtrack_direction(f, Anchor{x, f.value(x), g}, v, cfg);
}

// --- Two-way backtracking ------------------------------------------------------

/// Starts from the grid value with index prev_exponent. Shrinks by beta while
/// Armijo fails; if it holds, grows by 1/beta while the larger value still
/// satisfies Armijo and does not exceed delta0.
inline LineSearchResult two_way_backtrack(const ScalarField& f, const Anchor& a,
                                          int prev_exponent, const LineSearchConfig& cfg) {
  if (prev_exponent < 0) throw InvalidArgument("two_way_backtrack: previous step exceeds delta0");
  return detail::grid_search(f, a, a.grad, cfg, prev_exponent, 0);
}

/// prev_sigma is snapped to the largest grid value not above it.
inline LineSearchResult two_way_backtrack(const ScalarField& f, std::span<const double> x,
                                          double prev_sigma, const LineSearchConfig& cfg) {
  cfg.validate();
  if (!(prev_sigma > 0.0) || prev_sigma > cfg.delta0)
    throw InvalidArgument("two_way_backtrack: need 0 < prev_sigma <= delta0");
  const int n = detail::grid_index_at_most(cfg.delta0, cfg.beta, prev_sigma, cfg.max_halvings);
  const Vector g = f.gradient(x);
  return two_way_backtrack(f, Anchor{x, f.value(x), g}, n, cfg);
}

/// Two-way search without the delta0 cap: growth by 1/beta continues while
/// Armijo holds (at most max_halvings times). Used to find learning rates
/// from an arbitrary starting guess.
inline LineSearchResult unbounded_two_way_search(const ScalarField& f, const Anchor& a,
                                                 const LineSearchConfig& cfg) {
  return detail::grid_search(f, a, a.grad, cfg, 0, -cfg.max_halvings);
}

// --- Wolfe conditions --------------------------------------------------------------

struct WolfeResult {
  bool sufficient_decrease = false;
  bool curvature = false;
};

/// Sufficient decrease f(x - sigma v) - f(x) <= -c1 sigma <grad f(x), v> and
/// curvature <grad f(x - sigma v), v> <= c2 <grad f(x), v>.
inline WolfeResult wolfe_holds(const ScalarField& f, std::span<const double> x,
                               std::span<const double> v, double sigma, double c1, double c2) {
  if (!(c1 > 0.0 && c2 > c1 && c2 < 1.0))
    throw InvalidArgument("wolfe_holds: need 0 < c1 < c2 < 1");
  if (!(sigma > 0.0)) throw InvalidArgument("wolfe_holds: sigma must be positive");
  if (v.size() != x.size()) throw InvalidArgument("wolfe_holds: dimension mismatch");
  const Vector g = f.gradient(x);
  const double slope = vec::dot(g, v);
  if (!(slope > 0.0)) throw NonDescentDirection("wolfe_holds: <grad f(x), v> must be positive");
  const Vector d = vec::scaled(sigma, v);
  const Vector y = vec::sub(x, d);
  WolfeResult r;
  r.sufficient_decrease = detail::sufficient_decrease(f.value(x), f.value(y), g, d, c1);
  r.curvature = vec::dot(f.gradient(y), v) <= c2 * slope;
  return r;
}

}  // namespace btgd
