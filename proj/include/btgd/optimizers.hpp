#pragma once

// Gradient-descent iteration schemes: fixed-rate and scheduled GD,
// Backtracking GD, Two-way Backtracking GD, Inexact Backtracking GD,
// standard MMT/NAG, Backtracking MMT/NAG and their simplified variants.

#include <random>
#include <variant>

#include "btgd/core.hpp"
#include "btgd/linesearch.hpp"

namespace btgd {

// ---------------------------------------------------------------------------
// Run driver
// ---------------------------------------------------------------------------

namespace detail {

struct IterState {
  std::size_t n = 0;
  Vector z;
  double value = 0.0;
  Vector grad;
  double grad_norm = 0.0;
};

enum class StepKind { Move, Critical, Exhausted };

struct Step {
  StepKind kind = StepKind::Move;
  Vector displacement;  // z_{n+1} = z_n - displacement
  double step_size = 0.0;
  std::size_t trials = 0;
  std::size_t evals = 0;  // objective evaluations spent choosing the step
  double momentum = 0.0;

  static Step of(StepKind k) {
    Step s;
    s.kind = k;
    return s;
  }
  static Step critical() { return of(StepKind::Critical); }
  static Step exhausted() { return of(StepKind::Exhausted); }
};

struct NoCommitHook {
  void operator()(const IterState&, const IterState&, const Step&, Trajectory&) const {}
};

/// Drives z_{n+1} = z_n - d_n until the stop rule fires.
///
/// A step of length < eps is committed and then ends the run as Converged;
/// a Critical step ends it without moving. Diverged is reported when the
/// new iterate leaves the ball of radius divergence_radius or an evaluation
/// is non-finite; Stalled when a line search gives up.
template <class StepFn, class CommitHook = NoCommitHook>
Trajectory drive(const ScalarField& f, const Point& z0, const StopRule& stop, StepFn&& next_step,
                 CommitHook&& on_commit = {}) {
  stop.validate();
  if (z0.size() != f.dimension()) throw InvalidArgument("optimizer: z0 has wrong dimension");

  Trajectory traj;
  std::size_t evals = 0;
  IterState s;
  s.z = z0.coords();
  try {
    s.value = f.value(s.z);
    s.grad = f.gradient(s.z);
  } catch (const NonFiniteEvaluation& e) {
    throw NonFiniteEvaluation(std::string("optimizer: initial point: ") + e.what());
  }
  ++evals;
  s.grad_norm = vec::norm(s.grad);
  traj.records.push_back(IterateRecord{0, z0, s.value, s.grad_norm, 0.0, 0, evals, 0.0});

  for (std::size_t it = 0; it < stop.max_iters; ++it) {
    Step step;
    try {
      step = next_step(std::as_const(s), traj);
    } catch (const StalledLineSearch& e) {
      traj.termination = Termination::Stalled;
      traj.events.push_back(std::string("stalled at iteration ") + std::to_string(s.n) + ": " +
                            e.what());
      return traj;
    } catch (const NonFiniteEvaluation& e) {
      traj.termination = Termination::Diverged;
      traj.nonfinite = true;
      traj.events.push_back(e.what());
      return traj;
    }
    if (step.kind == StepKind::Critical) {
      traj.termination = Termination::Converged;
      return traj;
    }
    if (step.kind == StepKind::Exhausted) {
      traj.termination = Termination::MaxIters;
      traj.events.push_back("schedule exhausted at iteration " + std::to_string(s.n));
      return traj;
    }
    evals += step.evals;

    IterState next;
    next.n = s.n + 1;
    next.z = vec::sub(s.z, step.displacement);
    try {
      if (!vec::all_finite(next.z)) throw NonFiniteEvaluation("iterate is non-finite");
      next.value = f.value(next.z);
      next.grad = f.gradient(next.z);
    } catch (const NonFiniteEvaluation& e) {
      traj.termination = Termination::Diverged;
      traj.nonfinite = true;
      traj.events.push_back(std::string("non-finite evaluation at iteration ") +
                            std::to_string(next.n) + ": " + e.what());
      return traj;
    }
    ++evals;
    next.grad_norm = vec::norm(next.grad);
    traj.records.push_back(IterateRecord{next.n, Point(next.z), next.value, next.grad_norm,
                                         step.step_size, step.trials, evals, step.momentum});
    on_commit(s, next, step, traj);

    const double step_len = vec::norm(step.displacement);
    s = std::move(next);
    if (vec::norm(s.z) > stop.divergence_radius) {
      traj.termination = Termination::Diverged;
      return traj;
    }
    if (step_len < stop.eps) {
      traj.termination = Termination::Converged;
      return traj;
    }
  }
  traj.termination = Termination::MaxIters;
  return traj;
}

inline Anchor anchor(const IterState& s) { return Anchor{s.z, s.value, s.grad}; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Fixed-rate and scheduled GD
// ---------------------------------------------------------------------------

/// z_n = z_{n-1} - delta grad f(z_{n-1}).
inline Trajectory run_standard_gd(const ScalarField& f, const Point& z0, double delta,
                                  const StopRule& stop) {
  if (!(delta > 0.0)) throw InvalidArgument("run_standard_gd: delta must be positive");
  return detail::drive(f, z0, stop, [delta](const detail::IterState& s, Trajectory&) {
    if (s.grad_norm == 0.0) return detail::Step::critical();
    detail::Step st;
    st.displacement = vec::scaled(delta, s.grad);
    st.step_size = delta;
    return st;
  });
}

struct Constant {
  double delta;
};
struct ExplicitSequence {
  std::vector<double> deltas;
};
/// delta_n = c / (n + 1).
struct RobbinsMonro {
  double c;
};

class Schedule {
 public:
  using Kind = std::variant<Constant, ExplicitSequence, RobbinsMonro>;

  Schedule(Kind kind) : kind_(std::move(kind)) { validate(); }  // NOLINT

  /// Learning rate for step n, or nullopt once an explicit list is used up.
  std::optional<double> rate(std::size_t n) const {
    return std::visit(
        [n](const auto& k) -> std::optional<double> {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, Constant>) {
            return k.delta;
          } else if constexpr (std::is_same_v<T, ExplicitSequence>) {
            if (n >= k.deltas.size()) return std::nullopt;
            return k.deltas[n];
          } else {
            return k.c / static_cast<double>(n + 1);
          }
        },
        kind_);
  }

  const Kind& kind() const noexcept { return kind_; }

 private:
  void validate() const {
    std::visit(
        [](const auto& k) {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, Constant>) {
            if (!(k.delta > 0.0)) throw InvalidArgument("Schedule: rate must be positive");
          } else if constexpr (std::is_same_v<T, ExplicitSequence>) {
            for (double d : k.deltas)
              if (!(d > 0.0)) throw InvalidArgument("Schedule: rates must be positive");
          } else {
            if (!(k.c > 0.0)) throw InvalidArgument("Schedule: c must be positive");
          }
        },
        kind_);
  }

  Kind kind_;
};

/// z_n = z_{n-1} - delta_{n-1} grad f(z_{n-1}). With verify_alpha set, every
/// step is checked against f(z_n) - f(z_{n-1}) <= -alpha delta_{n-1} |grad|^2
/// and the indices of violating records are kept in armijo_violations.
inline Trajectory run_scheduled_gd(const ScalarField& f, const Point& z0, const Schedule& schedule,
                                   const StopRule& stop,
                                   std::optional<double> verify_alpha = std::nullopt) {
  auto step_fn = [&schedule](const detail::IterState& s, Trajectory&) {
    const auto rate = schedule.rate(s.n);
    if (!rate) return detail::Step::exhausted();
    if (s.grad_norm == 0.0) return detail::Step::critical();
    detail::Step st;
    st.displacement = vec::scaled(*rate, s.grad);
    st.step_size = *rate;
    return st;
  };
  auto verify = [verify_alpha](const detail::IterState& prev, const detail::IterState& next,
                               const detail::Step& st, Trajectory& traj) {
    if (!verify_alpha) return;
    if (!detail::sufficient_decrease(prev.value, next.value, prev.grad, st.displacement,
                                     *verify_alpha))
      traj.armijo_violations.push_back(next.n);
  };
  return detail::drive(f, z0, stop, step_fn, verify);
}

// ---------------------------------------------------------------------------
// Backtracking GD and Two-way Backtracking GD
// ---------------------------------------------------------------------------

/// z_{n+1} = z_n - delta(f, delta0, z_n) grad f(z_n).
inline Trajectory run_backtracking_gd(const ScalarField& f, const Point& z0,
                                      const LineSearchConfig& cfg, const StopRule& stop) {
  cfg.validate();
  return detail::drive(f, z0, stop, [&f, &cfg](const detail::IterState& s, Trajectory&) {
    if (s.grad_norm == 0.0) return detail::Step::critical();
    const LineSearchResult r = backtrack(f, detail::anchor(s), cfg);
    detail::Step st;
    st.displacement = vec::scaled(r.sigma, s.grad);
    st.step_size = r.sigma;
    st.trials = r.trials;
    st.evals = r.trials;
    return st;
  });
}

/// As Backtracking GD, but step n starts its search from delta_{n-1}.
inline Trajectory run_two_way_gd(const ScalarField& f, const Point& z0,
                                 const LineSearchConfig& cfg, const StopRule& stop) {
  cfg.validate();
  int prev_exponent = 0;
  return detail::drive(
      f, z0, stop, [&f, &cfg, &prev_exponent](const detail::IterState& s, Trajectory&) {
        if (s.grad_norm == 0.0) return detail::Step::critical();
        const LineSearchResult r = two_way_backtrack(f, detail::anchor(s), prev_exponent, cfg);
        prev_exponent = r.exponent;
        detail::Step st;
        st.displacement = vec::scaled(r.sigma, s.grad);
        st.step_size = r.sigma;
        st.trials = r.trials;
        st.evals = r.trials;
        return st;
      });
}

// ---------------------------------------------------------------------------
// Inexact Backtracking GD
// ---------------------------------------------------------------------------

/// Random directions v with a1 |g| <= |v| <= a2 |g| and <g, v> >= mu |g| |v|.
struct DirectionOracle {
  DirectionBounds bounds;
  std::uint64_t seed = 0;
};

/// Draws directions for a DirectionOracle. The cosine with the gradient is
/// uniform in [mu, 1], the orthogonal part points along a random unit vector
/// and the length is uniform in [a1, a2] |g|.
class DirectionSampler {
 public:
  explicit DirectionSampler(const DirectionOracle& oracle)
      : bounds_(oracle.bounds), rng_(oracle.seed) {
    bounds_.validate();
  }

  Vector sample(std::span<const double> g) {
    const double gnorm = vec::norm(g);
    if (gnorm == 0.0) return Vector(g.size(), 0.0);
    for (int attempt = 0; attempt < 64; ++attempt) {
      Vector v = draw(g, gnorm);
      if (bounds_.check(g, v).holds()) return v;
    }
    return vec::scaled(bounds_.a1, g);
  }

 private:
  Vector draw(std::span<const double> g, double gnorm) {
    std::uniform_real_distribution<double> cos_dist(bounds_.mu, 1.0);
    std::uniform_real_distribution<double> len_dist(bounds_.a1, bounds_.a2);
    std::normal_distribution<double> normal(0.0, 1.0);

    double c = cos_dist(rng_);
    const double t = len_dist(rng_);
    Vector w(g.size());
    for (double& wi : w) wi = normal(rng_);
    const double proj = vec::dot(w, g) / (gnorm * gnorm);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= proj * g[i];
    const double wnorm = vec::norm(w);
    if (!(wnorm > 1e-12)) {
      c = 1.0;  // one-dimensional, or w collapsed onto g
      std::fill(w.begin(), w.end(), 0.0);
    } else {
      for (double& wi : w) wi /= wnorm;
    }
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    return vec::combine(t * c, g, t * s * gnorm, w);
  }

  DirectionBounds bounds_;
  std::mt19937_64 rng_;
};

/// z_{n+1} = z_n - delta_n v_n with v_n from the oracle and delta_n the
/// largest grid value satisfying Armijo along v_n. Every (v_n, grad) pair is
/// recorded in direction_checks.
inline Trajectory run_inexact_backtracking_gd(const ScalarField& f, const Point& z0,
                                              const DirectionOracle& oracle,
                                              const LineSearchConfig& cfg, const StopRule& stop) {
  cfg.validate();
  DirectionSampler sampler(oracle);
  const DirectionBounds bounds = oracle.bounds;
  return detail::drive(
      f, z0, stop, [&](const detail::IterState& s, Trajectory& traj) {
        if (s.grad_norm == 0.0) return detail::Step::critical();
        const Vector v = sampler.sample(s.grad);
        const DirectionCheck check = bounds.check(s.grad, v, s.n);
        traj.direction_checks.push_back(check);
        if (!check.holds())
          throw NonDescentDirection("inexact direction violates the norm/angle bounds at step " +
                                    std::to_string(s.n));
        const LineSearchResult r = backtrack_direction(f, detail::anchor(s), v, cfg);
        detail::Step st;
        st.displacement = vec::scaled(r.sigma, v);
        st.step_size = r.sigma;
        st.trials = r.trials;
        st.evals = r.trials;
        return st;
      });
}

// ---------------------------------------------------------------------------
// Momentum schemes
// ---------------------------------------------------------------------------

enum class MomentumKind { Classical, Nesterov };

namespace detail {

inline Trajectory run_momentum(const ScalarField& f, const Point& z0, const Point& v_init,
                               double gamma, double delta, const StopRule& stop,
                               MomentumKind kind) {
  if (!(gamma >= 0.0)) throw InvalidArgument("momentum: gamma must be nonnegative");
  if (!(delta > 0.0)) throw InvalidArgument("momentum: delta must be positive");
  if (v_init.size() != f.dimension()) throw InvalidArgument("momentum: v_init has wrong dimension");
  Vector v = v_init.coords();
  return drive(f, z0, stop, [&](const IterState& s, Trajectory&) {
    Vector next_v;
    if (kind == MomentumKind::Classical) {
      next_v = vec::combine(gamma, v, delta, s.grad);
    } else {
      const Vector look = vec::sub(s.z, vec::scaled(gamma, v));
      next_v = vec::combine(gamma, v, delta, f.gradient(look));
    }
    if (vec::norm(next_v) == 0.0) return Step::critical();
    v = next_v;
    Step st;
    st.displacement = std::move(next_v);
    st.step_size = delta;
    st.momentum = gamma;
    return st;
  });
}

}  // namespace detail

/// v_n = gamma v_{n-1} + delta grad f(z_n), z_{n+1} = z_n - v_n.
inline Trajectory run_mmt(const ScalarField& f, const Point& z0, const Point& v_init, double gamma,
                          double delta, const StopRule& stop) {
  return detail::run_momentum(f, z0, v_init, gamma, delta, stop, MomentumKind::Classical);
}

/// v_n = gamma v_{n-1} + delta grad f(z_n - gamma v_{n-1}), z_{n+1} = z_n - v_n.
inline Trajectory run_nag(const ScalarField& f, const Point& z0, const Point& v_init, double gamma,
                          double delta, const StopRule& stop) {
  return detail::run_momentum(f, z0, v_init, gamma, delta, stop, MomentumKind::Nesterov);
}

/// Initial momentum and gradient coefficients for Backtracking MMT/NAG.
struct MomentumState {
  double gamma0 = 0.9;
  double delta0 = 1.0;

  void validate() const {
    if (!(gamma0 >= 0.0)) throw InvalidArgument("MomentumState: gamma0 must be nonnegative");
    if (!(delta0 > 0.0)) throw InvalidArgument("MomentumState: delta0 must be positive");
  }
};

namespace detail {

// Backtracking MMT/NAG, two-phase choice of (gamma_n, delta_n) per step:
//  1. gamma' <- gamma' beta until v = gamma' v_{n-1} + delta' g' satisfies the
//     inexact-direction bounds against grad f(z_n);
//  2. sigma <- sigma beta (from 1) until Armijo holds for the step sigma v.
// The committed step is gamma_n v_{n-1} + delta_n g' with gamma_n = sigma gamma'
// and delta_n = sigma delta', both scaled by beta one factor at a time.
inline Trajectory run_backtracking_momentum(const ScalarField& f, const Point& z0,
                                            const Point& v_init, const MomentumState& state,
                                            const DirectionBounds& bounds,
                                            const LineSearchConfig& cfg, const StopRule& stop,
                                            MomentumKind kind) {
  state.validate();
  bounds.validate();
  cfg.validate();
  if (v_init.size() != f.dimension()) throw InvalidArgument("momentum: v_init has wrong dimension");
  Vector v_prev = v_init.coords();

  return drive(f, z0, stop, [&](const IterState& s, Trajectory& traj) {
    if (s.grad_norm == 0.0) return Step::critical();

    auto grad_term = [&](double gamma) {
      if (kind == MomentumKind::Classical) return s.grad;
      return f.gradient(vec::sub(s.z, vec::scaled(gamma, v_prev)));
    };

    double gamma = state.gamma0;
    const double delta = state.delta0;
    Vector g_term = grad_term(gamma);
    Vector v = vec::combine(gamma, v_prev, delta, g_term);
    DirectionCheck check = bounds.check(s.grad, v, s.n);
    for (int shrinks = 0; !check.holds(); ++shrinks) {
      if (shrinks == cfg.max_halvings)
        throw StalledLineSearch("momentum phase 1: direction bounds not met after " +
                                std::to_string(cfg.max_halvings) + " reductions of gamma");
      gamma *= cfg.beta;
      if (kind == MomentumKind::Nesterov) g_term = grad_term(gamma);
      v = vec::combine(gamma, v_prev, delta, g_term);
      check = bounds.check(s.grad, v, s.n);
    }
    traj.direction_checks.push_back(check);

    double gamma_n = gamma;
    double delta_n = delta;
    Vector d = v;
    std::size_t trials = 1;
    for (int shrinks = 0;; ++shrinks) {
      const Vector y = vec::sub(s.z, d);
      if (sufficient_decrease(s.value, f.value(y), s.grad, d, cfg.alpha)) break;
      if (shrinks == cfg.max_halvings)
        throw StalledLineSearch("momentum phase 2: no acceptable step after " +
                                std::to_string(cfg.max_halvings) + " reductions");
      gamma_n *= cfg.beta;
      delta_n *= cfg.beta;
      d = vec::combine(gamma_n, v_prev, delta_n, g_term);
      ++trials;
    }
    v_prev = d;
    Step st;
    st.displacement = std::move(d);
    st.step_size = delta_n;
    st.momentum = gamma_n;
    st.trials = trials;
    st.evals = trials;
    return st;
  });
}

// Standard MMT/NAG recurrences with delta_n = backtrack(f, z_n) each step and
// gamma held fixed.
inline Trajectory run_simplified_backtracking_momentum(const ScalarField& f, const Point& z0,
                                                       const Point& v_init, double gamma,
                                                       const LineSearchConfig& cfg,
                                                       const StopRule& stop, MomentumKind kind) {
  cfg.validate();
  if (!(gamma >= 0.0)) throw InvalidArgument("momentum: gamma must be nonnegative");
  if (v_init.size() != f.dimension()) throw InvalidArgument("momentum: v_init has wrong dimension");
  Vector v = v_init.coords();
  return drive(f, z0, stop, [&](const IterState& s, Trajectory&) {
    const LineSearchResult r = backtrack(f, anchor(s), cfg);
    Vector next_v;
    if (kind == MomentumKind::Classical) {
      next_v = vec::combine(gamma, v, r.sigma, s.grad);
    } else {
      const Vector look = vec::sub(s.z, vec::scaled(gamma, v));
      next_v = vec::combine(gamma, v, r.sigma, f.gradient(look));
    }
    if (vec::norm(next_v) == 0.0) return Step::critical();
    v = next_v;
    Step st;
    st.displacement = std::move(next_v);
    st.step_size = r.sigma;
    st.momentum = gamma;
    st.trials = r.trials;
    st.evals = r.trials;
    return st;
  });
}

}  // namespace detail

inline Trajectory run_backtracking_mmt(const ScalarField& f, const Point& z0, const Point& v_init,
                                       const MomentumState& state, const DirectionBounds& bounds,
                                       const LineSearchConfig& cfg, const StopRule& stop) {
  return detail::run_backtracking_momentum(f, z0, v_init, state, bounds, cfg, stop,
                                           MomentumKind::Classical);
}

inline Trajectory run_backtracking_nag(const ScalarField& f, const Point& z0, const Point& v_init,
                                       const MomentumState& state, const DirectionBounds& bounds,
                                       const LineSearchConfig& cfg, const StopRule& stop) {
  return detail::run_backtracking_momentum(f, z0, v_init, state, bounds, cfg, stop,
                                           MomentumKind::Nesterov);
}

inline Trajectory run_simplified_bmmt(const ScalarField& f, const Point& z0, const Point& v_init,
                                      double gamma, const LineSearchConfig& cfg,
                                      const StopRule& stop) {
  return detail::run_simplified_backtracking_momentum(f, z0, v_init, gamma, cfg, stop,
                                                      MomentumKind::Classical);
}

inline Trajectory run_simplified_bnag(const ScalarField& f, const Point& z0, const Point& v_init,
                                      double gamma, const LineSearchConfig& cfg,
                                      const StopRule& stop) {
  return detail::run_simplified_backtracking_momentum(f, z0, v_init, gamma, cfg, stop,
                                                      MomentumKind::Nesterov);
}

}  // namespace btgd
