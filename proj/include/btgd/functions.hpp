#pragma once

// Test-problem corpus: the adversarial examples for backtracking gradient
// descent plus a few standard baselines.

#include <map>

#include "btgd/core.hpp"

namespace btgd {

enum class CriticalKind { Minimum, GeneralizedSaddle, Degenerate, NotCritical };

inline const char* to_string(CriticalKind k) {
  switch (k) {
    case CriticalKind::Minimum: return "Minimum";
    case CriticalKind::GeneralizedSaddle: return "GeneralizedSaddle";
    case CriticalKind::Degenerate: return "Degenerate";
    case CriticalKind::NotCritical: return "NotCritical";
  }
  return "?";
}

struct KnownCriticalPoint {
  Point point;
  CriticalKind kind;
};

struct NamedObjective {
  std::string name;
  ScalarField field;
  std::vector<KnownCriticalPoint> known_critical_points;
  std::string citation;
};

namespace functions {

/// Spiral "Mexican hat" on the unit disk; identically zero for r >= 1.
/// sin(theta - phi) is expanded through the Cartesian components, so the
/// value is single-valued and continuous across the negative x-axis.
/// Gradient by finite differences.
inline NamedObjective mexican_hat() {
  auto value = [](std::span<const double> p) {
    const double x = p[0], y = p[1];
    const double r2 = x * x + y * y;
    if (r2 >= 1.0) return 0.0;
    const double s = 1.0 - r2;
    const double decay = std::exp(-1.0 / s);
    if (r2 == 0.0) return decay;
    const double r = std::sqrt(r2);
    const double phi = 1.0 / s;
    const double sin_term = (y / r) * std::cos(phi) - (x / r) * std::sin(phi);
    const double r4 = r2 * r2;
    const double s4 = s * s * s * s;
    const double weight = 4.0 * r4 / (4.0 * r4 + s4);
    return (1.0 - weight * sin_term) * decay;
  };
  return NamedObjective{"mexican_hat", ScalarField(2, value), {},
                        "spiral Mexican hat of Absil, Mahony and Andrews"};
}

/// f(x) = |x|^(1 + gamma); gradient only gamma-Hoelder continuous at 0.
inline NamedObjective holder(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("holder: gamma must lie in (0,1)");
  const double p = 1.0 + gamma;
  auto value = [p](std::span<const double> x) { return std::pow(std::abs(x[0]), p); };
  auto grad = [p, gamma](std::span<const double> x) {
    if (x[0] == 0.0) return Vector{0.0};
    const double sign = x[0] > 0.0 ? 1.0 : -1.0;
    return Vector{p * sign * std::pow(std::abs(x[0]), gamma)};
  };
  return NamedObjective{"holder", ScalarField(1, value, grad),
                        {{Point{0.0}, CriticalKind::Minimum}},
                        "|x|^(1+gamma), Hoelder-continuous gradient"};
}

/// |x| for |x| >= eps0, x^2/(2 eps0) + eps0/2 inside: C^1 with a single
/// critical point at 0.
inline NamedObjective smoothed_abs(double eps0) {
  if (!(eps0 > 0.0)) throw InvalidArgument("smoothed_abs: eps0 must be positive");
  auto value = [eps0](std::span<const double> x) {
    const double a = std::abs(x[0]);
    return a >= eps0 ? a : x[0] * x[0] / (2.0 * eps0) + eps0 / 2.0;
  };
  auto grad = [eps0](std::span<const double> x) {
    if (x[0] >= eps0) return Vector{1.0};
    if (x[0] <= -eps0) return Vector{-1.0};
    return Vector{x[0] / eps0};
  };
  return NamedObjective{"smoothed_abs", ScalarField(1, value, grad),
                        {{Point{0.0}, CriticalKind::Minimum}},
                        "|x| smoothed near the origin"};
}

/// f(x) = x^3.
inline NamedObjective cubic() {
  auto value = [](std::span<const double> x) { return x[0] * x[0] * x[0]; };
  auto grad = [](std::span<const double> x) { return Vector{3.0 * x[0] * x[0]}; };
  return NamedObjective{"cubic", ScalarField(1, value, grad),
                        {{Point{0.0}, CriticalKind::Degenerate}}, "x^3"};
}

/// f(z) = z^T Q z / 2. The origin is listed as a critical point; its kind is
/// the sign pattern of Q's diagonal when Q is diagonal, otherwise Degenerate
/// unless classified by the caller.
inline NamedObjective quadratic_form(const SymMatrix& q) {
  if (!q.is_symmetric()) throw InvalidArgument("quadratic_form: Q must be symmetric");
  const std::size_t n = q.size();
  auto value = [q](std::span<const double> z) { return 0.5 * vec::dot(z, q.multiply(z)); };
  auto grad = [q](std::span<const double> z) { return q.multiply(z); };

  bool diagonal = true;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && q(i, j) != 0.0) diagonal = false;
  std::vector<KnownCriticalPoint> known;
  if (diagonal) {
    bool any_neg = false, any_zero = false;
    for (std::size_t i = 0; i < n; ++i) {
      any_neg = any_neg || q(i, i) < 0.0;
      any_zero = any_zero || q(i, i) == 0.0;
    }
    const CriticalKind kind = any_neg    ? CriticalKind::GeneralizedSaddle
                              : any_zero ? CriticalKind::Degenerate
                                         : CriticalKind::Minimum;
    known.push_back({Point::zeros(n), kind});
  }
  return NamedObjective{"quadratic_form", ScalarField(n, value, grad), std::move(known),
                        "z^T Q z / 2"};
}

/// (1 - x)^2 + 100 (y - x^2)^2.
inline NamedObjective rosenbrock() {
  auto value = [](std::span<const double> p) {
    const double a = 1.0 - p[0];
    const double b = p[1] - p[0] * p[0];
    return a * a + 100.0 * b * b;
  };
  auto grad = [](std::span<const double> p) {
    const double b = p[1] - p[0] * p[0];
    return Vector{-2.0 * (1.0 - p[0]) - 400.0 * p[0] * b, 200.0 * b};
  };
  return NamedObjective{"rosenbrock", ScalarField(2, value, grad),
                        {{Point{1.0, 1.0}, CriticalKind::Minimum}}, "Rosenbrock banana"};
}

/// g(x) = f(x) + lambda |x|^2.
inline NamedObjective l2_regularize(const NamedObjective& base, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("l2_regularize: lambda must be positive");
  const ScalarField& f = base.field;
  auto value = [f, lambda](std::span<const double> x) { return f.value(x) + lambda * vec::dot(x, x); };
  auto grad = [f, lambda](std::span<const double> x) {
    Vector g = f.gradient(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * lambda * x[i];
    return g;
  };
  return NamedObjective{base.name + "+l2", ScalarField(f.dimension(), value, grad), {},
                        base.citation + ", L2-regularized"};
}

/// f(x) = g(x) + <a, x>. Critical points of the result are not tracked.
inline NamedObjective linear_perturb(const NamedObjective& base, const Point& a) {
  const ScalarField& g = base.field;
  if (a.size() != g.dimension()) throw InvalidArgument("linear_perturb: a has wrong dimension");
  const Vector av = a.coords();
  auto value = [g, av](std::span<const double> x) { return g.value(x) + vec::dot(av, x); };
  auto grad = [g, av](std::span<const double> x) {
    Vector out = g.gradient(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += av[i];
    return out;
  };
  const bool zero = std::all_of(av.begin(), av.end(), [](double v) { return v == 0.0; });
  return NamedObjective{base.name + "+linear",
                        g.has_analytic_gradient() ? ScalarField(g.dimension(), value, grad)
                                                  : ScalarField(g.dimension(), value),
                        zero ? base.known_critical_points : std::vector<KnownCriticalPoint>{},
                        base.citation + ", linearly perturbed"};
}

/// Parameters for corpus lookup by name.
struct CorpusParams {
  double gamma = 0.5;          // holder
  double eps0 = 0.1;           // smoothed_abs
  std::vector<double> diag{1.0, -1.0};  // quadratic_form (diagonal Q)
  std::vector<double> linear;  // optional linear perturbation
  double lambda = 0.0;         // optional L2 penalty
};

inline std::vector<std::string> corpus_names() {
  return {"mexican_hat", "holder", "smoothed_abs", "cubic", "quadratic_form", "rosenbrock"};
}

/// Looks up a corpus member by name; nullopt for unknown names.
inline std::optional<NamedObjective> by_name(const std::string& name, const CorpusParams& p = {}) {
  std::optional<NamedObjective> obj;
  if (name == "mexican_hat") obj = mexican_hat();
  else if (name == "holder") obj = holder(p.gamma);
  else if (name == "smoothed_abs") obj = smoothed_abs(p.eps0);
  else if (name == "cubic") obj = cubic();
  else if (name == "quadratic_form") obj = quadratic_form(SymMatrix::diagonal(p.diag));
  else if (name == "rosenbrock") obj = rosenbrock();
  else return std::nullopt;
  if (!p.linear.empty()) obj = linear_perturb(*obj, Point(p.linear));
  if (p.lambda > 0.0) obj = l2_regularize(*obj, p.lambda);
  return obj;
}

}  // namespace functions
}  // namespace btgd
