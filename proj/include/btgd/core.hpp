#pragma once

// Shared domain types: points, objectives, finite-difference derivatives,
// trajectories and the Armijo sufficient-decrease predicate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace btgd {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NonFiniteEvaluation : public Error {
 public:
  using Error::Error;
};

class StalledLineSearch : public Error {
 public:
  using Error::Error;
};

class NonDescentDirection : public Error {
 public:
  using Error::Error;
};

class NotASaddle : public Error {
 public:
  using Error::Error;
};

class LrFinderFailed : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Small dense vector helpers
// ---------------------------------------------------------------------------

using Vector = std::vector<double>;

namespace vec {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// a - b
inline Vector sub(std::span<const double> a, std::span<const double> b) {
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// s * a
inline Vector scaled(double s, std::span<const double> a) {
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

// s * a + t * b, evaluated elementwise in that order
inline Vector combine(double s, std::span<const double> a, double t,
                      std::span<const double> b) {
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i] + t * b[i];
  return out;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace vec

// ---------------------------------------------------------------------------
// Point
// ---------------------------------------------------------------------------

/// A point of R^m. Coordinates are finite by construction.
class Point {
 public:
  explicit Point(Vector coords) : coords_(std::move(coords)) {
    if (coords_.empty()) throw InvalidArgument("Point: dimension must be >= 1");
    if (!vec::all_finite(coords_))
      throw NonFiniteEvaluation("Point: non-finite coordinate");
  }
  Point(std::initializer_list<double> coords) : Point(Vector(coords)) {}

  static Point zeros(std::size_t dim) { return Point(Vector(dim, 0.0)); }

  std::size_t size() const noexcept { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  const Vector& coords() const noexcept { return coords_; }
  std::span<const double> span() const noexcept { return coords_; }
  operator std::span<const double>() const noexcept { return coords_; }

  double norm() const { return vec::norm(coords_); }

  friend bool operator==(const Point&, const Point&) = default;

 private:
  Vector coords_;
};

// ---------------------------------------------------------------------------
// Symmetric matrix (small, dense, row-major)
// ---------------------------------------------------------------------------

class SymMatrix {
 public:
  explicit SymMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}
  SymMatrix(std::initializer_list<std::initializer_list<double>> rows)
      : SymMatrix(rows.size()) {
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != n_) throw InvalidArgument("SymMatrix: ragged rows");
      std::size_t j = 0;
      for (double v : row) data_[i * n_ + j++] = v;
      ++i;
    }
    if (!is_symmetric()) throw InvalidArgument("SymMatrix: not symmetric");
  }

  static SymMatrix diagonal(std::span<const double> d) {
    SymMatrix m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

  bool is_symmetric() const {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j)
        if ((*this)(i, j) != (*this)(j, i)) return false;
    return true;
  }

  Vector multiply(std::span<const double> x) const {
    Vector y(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) y[i] += (*this)(i, j) * x[j];
    return y;
  }

 private:
  std::size_t n_;
  Vector data_;
};

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Default central-difference step for gradients: max(1e-6, 1e-6 * |x|).
inline double default_gradient_step(std::span<const double> x) {
  return std::max(1e-6, 1e-6 * vec::norm(x));
}

/// Default step for second differences: max(1e-4, 1e-4 * |x|).
/// Second differences divide by h^2, so the gradient step would leave
/// rounding noise of order 1e-4 in the result.
inline double default_hessian_step(std::span<const double> x) {
  return std::max(1e-4, 1e-4 * vec::norm(x));
}

namespace detail {

inline double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteEvaluation(std::string(what) + ": non-finite value");
  return v;
}

template <class Fn>
Vector central_gradient(const Fn& value, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("fd_gradient: step must be positive");
  Vector probe(x.begin(), x.end());
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = probe[i];
    probe[i] = xi + h;
    const double fp = checked(value(std::span<const double>(probe)), "fd_gradient");
    probe[i] = xi - h;
    const double fm = checked(value(std::span<const double>(probe)), "fd_gradient");
    probe[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ScalarField
// ---------------------------------------------------------------------------

/// A real-valued objective on R^m with an optional analytic gradient.
/// Without one, gradients come from central differences.
class ScalarField {
 public:
  using ValueFn = std::function<double(std::span<const double>)>;
  using GradientFn = std::function<Vector(std::span<const double>)>;

  ScalarField(std::size_t dimension, ValueFn value, GradientFn gradient = {})
      : dim_(dimension), value_(std::move(value)), gradient_(std::move(gradient)) {
    if (dim_ == 0) throw InvalidArgument("ScalarField: dimension must be >= 1");
    if (!value_) throw InvalidArgument("ScalarField: value function required");
  }

  std::size_t dimension() const noexcept { return dim_; }
  bool has_analytic_gradient() const noexcept { return static_cast<bool>(gradient_); }

  double value(std::span<const double> x) const {
    check_dim(x);
    return detail::checked(value_(x), "ScalarField::value");
  }
  double operator()(std::span<const double> x) const { return value(x); }

  Vector gradient(std::span<const double> x) const {
    check_dim(x);
    if (!gradient_) return detail::central_gradient(value_, x, default_gradient_step(x));
    Vector g = gradient_(x);
    if (g.size() != dim_) throw InvalidArgument("ScalarField: gradient has wrong dimension");
    if (!vec::all_finite(g)) throw NonFiniteEvaluation("ScalarField::gradient: non-finite value");
    return g;
  }

  const ValueFn& value_fn() const noexcept { return value_; }
  const GradientFn& gradient_fn() const noexcept { return gradient_; }

 private:
  void check_dim(std::span<const double> x) const {
    if (x.size() != dim_)
      throw InvalidArgument("ScalarField: expected dimension " + std::to_string(dim_) +
                            ", got " + std::to_string(x.size()));
  }

  std::size_t dim_;
  ValueFn value_;
  GradientFn gradient_;
};

inline Vector fd_gradient(const ScalarField& f, std::span<const double> x, double h) {
  if (x.size() != f.dimension()) throw InvalidArgument("fd_gradient: dimension mismatch");
  return detail::central_gradient([&f](std::span<const double> p) { return f.value(p); }, x, h);
}

inline Vector fd_gradient(const ScalarField& f, std::span<const double> x) {
  return fd_gradient(f, x, default_gradient_step(x));
}

/// Central second differences, symmetrized as (H + H^T) / 2.
inline SymMatrix fd_hessian(const ScalarField& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("fd_hessian: step must be positive");
  if (x.size() != f.dimension()) throw InvalidArgument("fd_hessian: dimension mismatch");
  const std::size_t n = x.size();
  Vector p(x.begin(), x.end());
  auto at = [&](std::size_t i, double di, std::size_t j, double dj) {
    p[i] += di;
    p[j] += dj;
    const double v = f.value(p);
    p[i] = x[i];
    p[j] = x[j];
    return v;
  };
  const double f0 = f.value(x);
  SymMatrix raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double fp = at(i, h, i, 0.0);
    const double fm = at(i, -h, i, 0.0);
    raw(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double fpp = at(i, h, j, h);
      const double fpm = at(i, h, j, -h);
      const double fmp = at(i, -h, j, h);
      const double fmm = at(i, -h, j, -h);
      raw(i, j) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  }
  SymMatrix sym(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sym(i, j) = 0.5 * (raw(i, j) + raw(j, i));
  return sym;
}

inline SymMatrix fd_hessian(const ScalarField& f, std::span<const double> x) {
  return fd_hessian(f, x, default_hessian_step(x));
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct LineSearchConfig {
  double alpha = 0.5;
  double beta = 0.5;
  double delta0 = 1.0;
  int max_halvings = 100;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("LineSearchConfig: alpha must lie in (0,1)");
    if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("LineSearchConfig: beta must lie in (0,1)");
    if (!(delta0 > 0.0) || !std::isfinite(delta0)) throw InvalidArgument("LineSearchConfig: delta0 must be positive");
    if (max_halvings < 1) throw InvalidArgument("LineSearchConfig: max_halvings must be >= 1");
  }
};

struct StopRule {
  double eps = 1e-8;  // threshold on the step length delta_n * |grad f(z_n)|
  std::size_t max_iters = 10000;
  double divergence_radius = 1e12;

  void validate() const {
    if (!(eps > 0.0)) throw InvalidArgument("StopRule: eps must be positive");
    if (max_iters < 1) throw InvalidArgument("StopRule: max_iters must be >= 1");
    if (!(divergence_radius > 0.0)) throw InvalidArgument("StopRule: divergence_radius must be positive");
  }
};

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

enum class Termination { Converged, MaxIters, Diverged, Stalled };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "Converged";
    case Termination::MaxIters: return "MaxIters";
    case Termination::Diverged: return "Diverged";
    case Termination::Stalled: return "Stalled";
  }
  return "?";
}

/// Record n describes iterate z_n. step_size and backtrack_count describe
/// the search that produced z_n from z_{n-1} and are zero for n = 0.
/// backtrack_count is the number of sufficient-decrease tests performed.
struct IterateRecord {
  std::size_t index = 0;
  Point point = Point::zeros(1);
  double value = 0.0;
  double grad_norm = 0.0;
  double step_size = 0.0;
  std::size_t backtrack_count = 0;
  std::size_t func_evals = 0;
  double momentum = 0.0;  // effective gamma_n for momentum schemes
};

/// Inexact-direction conditions for a pair (v, grad f):
/// a1 |g| <= |v| <= a2 |g| and <g, v> >= mu |g| |v|.
struct DirectionCheck {
  std::size_t index = 0;
  double grad_norm = 0.0;
  double dir_norm = 0.0;
  double inner = 0.0;
  bool norm_ok = false;
  bool angle_ok = false;

  bool holds() const noexcept { return norm_ok && angle_ok; }
};

struct DirectionBounds {
  double a1 = 0.5;
  double a2 = 2.0;
  double mu = 0.1;

  void validate() const {
    if (!(a1 > 0.0) || !(a2 >= a1)) throw InvalidArgument("DirectionBounds: need 0 < a1 <= a2");
    if (!(mu > 0.0 && mu <= 1.0)) throw InvalidArgument("DirectionBounds: mu must lie in (0,1]");
  }

  // Comparisons carry a few ulps of slack so that directions built exactly on
  // the boundary of the cone or the norm sandwich are not rejected by rounding.
  DirectionCheck check(std::span<const double> grad, std::span<const double> v,
                       std::size_t index = 0) const {
    constexpr double tol = 8 * std::numeric_limits<double>::epsilon();
    DirectionCheck c;
    c.index = index;
    c.grad_norm = vec::norm(grad);
    c.dir_norm = vec::norm(v);
    c.inner = vec::dot(grad, v);
    c.norm_ok = a1 * c.grad_norm <= c.dir_norm * (1 + tol) &&
                c.dir_norm <= a2 * c.grad_norm * (1 + tol);
    c.angle_ok = c.inner >= mu * c.grad_norm * c.dir_norm * (1 - tol);
    return c;
  }
};

struct Trajectory {
  std::vector<IterateRecord> records;
  Termination termination = Termination::MaxIters;
  bool nonfinite = false;                        // run stopped on a NaN/Inf evaluation
  std::vector<std::size_t> armijo_violations;    // scheduled GD with verification
  std::vector<DirectionCheck> direction_checks;  // inexact and momentum schemes
  std::vector<std::string> events;               // diagnostics in order of occurrence

  const IterateRecord& last() const { return records.back(); }
  std::size_t steps() const { return records.empty() ? 0 : records.size() - 1; }
};

// ---------------------------------------------------------------------------
// Armijo predicate
// ---------------------------------------------------------------------------

namespace detail {

// Slack factor on |f(x)| + |f(y)| for the difference f(y) - f(x). The
// difference of two rounded values carries error of that order, so an
// inequality that holds with equality in exact arithmetic is accepted.
inline constexpr double kArmijoSlack = 4 * std::numeric_limits<double>::epsilon();

/// Sufficient decrease for a displacement d = sigma * v already formed:
/// f(x - d) - f(x) <= -alpha <grad, d>, never accepting an increase of f.
inline bool sufficient_decrease(double fx, double fy, std::span<const double> grad,
                                std::span<const double> displacement, double alpha) {
  const double lhs = fy - fx;
  const double rhs = -alpha * vec::dot(grad, displacement);
  if (lhs <= rhs) return true;
  return fy <= fx && lhs <= rhs + kArmijoSlack * (std::abs(fx) + std::abs(fy));
}

}  // namespace detail

/// True iff f(x - sigma v) - f(x) <= -alpha sigma <grad f(x), v>.
inline bool armijo_holds(const ScalarField& f, std::span<const double> x,
                         std::span<const double> v, double sigma, double alpha) {
  if (!(sigma > 0.0)) throw InvalidArgument("armijo_holds: sigma must be positive");
  if (v.size() != x.size()) throw InvalidArgument("armijo_holds: dimension mismatch");
  const double fx = f.value(x);
  const Vector g = f.gradient(x);
  const Vector d = vec::scaled(sigma, v);
  const Vector y = vec::sub(x, d);
  return detail::sufficient_decrease(fx, f.value(y), g, d, alpha);
}

}  // namespace btgd
