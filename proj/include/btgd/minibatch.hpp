#pragma once

// Mini-batch machinery: finite-sum problems, seeded batch sampling, the
// backtracking learning-rate finder with batch-size rescaling, and the
// MBT-GD / MBT-MMT / MBT-NAG training loops with stuck detection.

#include <memory>
#include <random>

#include "btgd/core.hpp"
#include "btgd/linesearch.hpp"
#include "btgd/optimizers.hpp"

namespace btgd {

// ---------------------------------------------------------------------------
// Problems
// ---------------------------------------------------------------------------

struct LeastSquaresSpec {
  std::size_t n_samples = 100;
  std::size_t dimension = 2;
  double noise = 0.0;
  std::uint64_t seed = 7;

  friend bool operator==(const LeastSquaresSpec&, const LeastSquaresSpec&) = default;
};

/// F(k) = (1/N) sum_i f_i(k) over N component objectives of one dimension.
class MiniBatchProblem {
 public:
  explicit MiniBatchProblem(std::vector<ScalarField> components,
                            std::optional<Point> optimum = std::nullopt)
      : components_(std::make_shared<const std::vector<ScalarField>>(std::move(components))),
        optimum_(std::move(optimum)) {
    if (components_->empty()) throw InvalidArgument("MiniBatchProblem: need at least one component");
    const std::size_t d = components_->front().dimension();
    for (const auto& c : *components_)
      if (c.dimension() != d) throw InvalidArgument("MiniBatchProblem: components differ in dimension");
  }

  std::size_t size() const noexcept { return components_->size(); }
  std::size_t dimension() const noexcept { return components_->front().dimension(); }
  const ScalarField& component(std::size_t i) const { return components_->at(i); }

  /// Hidden minimizer of synthetic problems, when known.
  const std::optional<Point>& optimum() const noexcept { return optimum_; }

  /// Mean of the listed components, summed in the given order.
  ScalarField batch_objective(std::vector<std::size_t> indices) const {
    if (indices.empty()) throw InvalidArgument("batch_objective: empty batch");
    for (std::size_t i : indices)
      if (i >= size()) throw InvalidArgument("batch_objective: index out of range");
    auto comps = components_;
    auto idx = std::make_shared<const std::vector<std::size_t>>(std::move(indices));
    const double inv = 1.0 / static_cast<double>(idx->size());
    auto value = [comps, idx, inv](std::span<const double> x) {
      double s = 0.0;
      for (std::size_t i : *idx) s += (*comps)[i].value(x);
      return s * inv;
    };
    const bool analytic = std::all_of(comps->begin(), comps->end(),
                                      [](const ScalarField& c) { return c.has_analytic_gradient(); });
    if (!analytic) return ScalarField(dimension(), value);
    auto grad = [comps, idx, inv](std::span<const double> x) {
      Vector g(x.size(), 0.0);
      for (std::size_t i : *idx) {
        const Vector gi = (*comps)[i].gradient(x);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += gi[j];
      }
      for (double& gj : g) gj *= inv;
      return g;
    };
    return ScalarField(dimension(), value, grad);
  }

  ScalarField full_objective() const {
    std::vector<std::size_t> all(size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return batch_objective(std::move(all));
  }

 private:
  std::shared_ptr<const std::vector<ScalarField>> components_;
  std::optional<Point> optimum_;
};

/// Components f_i(k) = (<x_i, k> - y_i)^2 / 2 with standard normal x_i, a
/// standard normal hidden k*, and y_i = <x_i, k*> + noise * xi_i.
inline MiniBatchProblem make_least_squares_problem(const LeastSquaresSpec& spec) {
  if (spec.n_samples == 0 || spec.dimension == 0)
    throw InvalidArgument("make_least_squares_problem: sizes must be positive");
  if (!(spec.noise >= 0.0)) throw InvalidArgument("make_least_squares_problem: noise must be >= 0");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector kstar(spec.dimension);
  for (double& k : kstar) k = normal(rng);

  std::vector<ScalarField> comps;
  comps.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    auto x = std::make_shared<Vector>(spec.dimension);
    for (double& xi : *x) xi = normal(rng);
    const double target = vec::dot(*x, kstar) + spec.noise * normal(rng);
    auto value = [x, target](std::span<const double> k) {
      const double r = vec::dot(*x, k) - target;
      return 0.5 * r * r;
    };
    auto grad = [x, target](std::span<const double> k) {
      return vec::scaled(vec::dot(*x, k) - target, *x);
    };
    comps.emplace_back(spec.dimension, value, grad);
  }
  return MiniBatchProblem(std::move(comps), Point(kstar));
}

inline MiniBatchProblem make_least_squares_problem(std::size_t n_samples, std::size_t dimension,
                                                   double noise, std::uint64_t seed) {
  return make_least_squares_problem(LeastSquaresSpec{n_samples, dimension, noise, seed});
}

// ---------------------------------------------------------------------------
// Batch sampling
// ---------------------------------------------------------------------------

/// Shuffle-and-partition sampler. Epoch e uses a permutation seeded by
/// (seed, e); indices inside each batch are sorted, and the last batch of an
/// epoch may be smaller than k.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), k_(batch_size), seed_(seed) {
    if (n_ == 0) throw InvalidArgument("BatchSampler: empty problem");
    if (k_ == 0 || k_ > n_) throw InvalidArgument("BatchSampler: need 1 <= batch_size <= N");
  }

  std::size_t population() const noexcept { return n_; }
  std::size_t batch_size() const noexcept { return k_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t batches_per_epoch() const noexcept { return (n_ + k_ - 1) / k_; }

  std::vector<std::vector<std::size_t>> epoch(std::size_t e) const {
    std::vector<std::size_t> perm(n_);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(e >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n_; start += k_) {
      const std::size_t stop = std::min(n_, start + k_);
      std::vector<std::size_t> b(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                 perm.begin() + static_cast<std::ptrdiff_t>(stop));
      std::sort(b.begin(), b.end());
      out.push_back(std::move(b));
    }
    return out;
  }

  /// The first `count` batches from epoch first_epoch onward.
  std::vector<std::vector<std::size_t>> stream(std::size_t first_epoch, std::size_t count) const {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t e = first_epoch; out.size() < count; ++e)
      for (auto& b : epoch(e)) {
        if (out.size() == count) break;
        out.push_back(std::move(b));
      }
    return out;
  }

 private:
  std::size_t n_;
  std::size_t k_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Learning-rate finder
// ---------------------------------------------------------------------------

enum class RescaleMode { Linear, Sqrt, None };

inline const char* to_string(RescaleMode m) {
  switch (m) {
    case RescaleMode::Linear: return "Linear";
    case RescaleMode::Sqrt: return "Sqrt";
    case RescaleMode::None: return "None";
  }
  return "?";
}

/// How each batch searches the step grid.
///  - TwoWay: start at delta0, shrink while Armijo fails, otherwise grow by
///    1/beta while it holds, with no delta0 cap.
///  - Backtrack: plain Armijo backtracking capped at delta0.
enum class FinderSearch { TwoWay, Backtrack };

inline double rescale(double sigma, double rho, RescaleMode mode) {
  switch (mode) {
    case RescaleMode::Linear: return sigma * rho;
    case RescaleMode::Sqrt: return sigma * std::sqrt(rho);
    case RescaleMode::None: return sigma;
  }
  return sigma;
}

struct LRFinderReport {
  std::vector<double> per_batch_sigmas;      // batches that produced a step
  std::vector<std::size_t> excluded_batches;  // batches whose search stalled
  double mean_sigma = 0.0;
  double rho = 1.0;  // k / N
  double rescaled_sigma = 0.0;
  RescaleMode mode = RescaleMode::Sqrt;
  std::size_t trials = 0;
};

struct LRFinderOptions {
  std::size_t n_batches = 20;
  RescaleMode mode = RescaleMode::Sqrt;
  FinderSearch search = FinderSearch::TwoWay;
  std::size_t first_epoch = 0;
};

/// Runs a line search on each of the first n_batches batch objectives at the
/// same point and averages the accepted steps. A batch with zero gradient
/// accepts delta0.
inline LRFinderReport lr_finder(const MiniBatchProblem& problem, const BatchSampler& sampler,
                                const LineSearchConfig& cfg, const Point& at,
                                const LRFinderOptions& opts = {}) {
  cfg.validate();
  if (opts.n_batches == 0) throw InvalidArgument("lr_finder: n_batches must be >= 1");
  if (sampler.population() != problem.size())
    throw InvalidArgument("lr_finder: sampler and problem sizes differ");
  if (at.size() != problem.dimension()) throw InvalidArgument("lr_finder: point has wrong dimension");

  LRFinderReport rep;
  rep.mode = opts.mode;
  rep.rho = static_cast<double>(sampler.batch_size()) / static_cast<double>(problem.size());
  const auto batches = sampler.stream(opts.first_epoch, opts.n_batches);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const ScalarField fb = problem.batch_objective(batches[b]);
    const Vector g = fb.gradient(at);
    const Anchor a{at.span(), fb.value(at), g};
    try {
      LineSearchResult r;
      if (vec::norm(g) == 0.0) {
        r.sigma = cfg.delta0;
        r.trials = 1;
      } else if (opts.search == FinderSearch::TwoWay) {
        r = unbounded_two_way_search(fb, a, cfg);
      } else {
        r = backtrack(fb, a, cfg);
      }
      rep.per_batch_sigmas.push_back(r.sigma);
      rep.trials += r.trials;
    } catch (const StalledLineSearch&) {
      rep.excluded_batches.push_back(b);
    }
  }
  if (rep.per_batch_sigmas.empty())
    throw LrFinderFailed("lr_finder: line search stalled on every batch");
  double sum = 0.0;
  for (double s : rep.per_batch_sigmas) sum += s;
  rep.mean_sigma = sum / static_cast<double>(rep.per_batch_sigmas.size());
  rep.rescaled_sigma = rescale(rep.mean_sigma, rep.rho, rep.mode);
  return rep;
}

// ---------------------------------------------------------------------------
// Stuck detection
// ---------------------------------------------------------------------------

/// Fires when the epoch-end loss has not improved on the best loss seen for
/// `window` consecutive epochs, then starts counting afresh.
class StuckDetector {
 public:
  explicit StuckDetector(std::size_t window = 5) : window_(window) {
    if (window_ == 0) throw InvalidArgument("StuckDetector: window must be >= 1");
  }

  bool observe(double loss) {
    if (loss < best_) {
      best_ = loss;
      stale_ = 0;
      return false;
    }
    if (++stale_ >= window_) {
      stale_ = 0;
      return true;
    }
    return false;
  }

  std::size_t window() const noexcept { return window_; }
  double best_loss_seen() const noexcept { return best_; }

 private:
  std::size_t window_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
};

// ---------------------------------------------------------------------------
// MBT training loops
// ---------------------------------------------------------------------------

/// Learning-rate search defaults for the mini-batch schemes (alpha = 1e-4).
inline LineSearchConfig mbt_default_config() { return LineSearchConfig{1e-4, 0.5, 1.0, 100}; }

struct MbtOptions {
  std::size_t n_batches = 20;  // batches per learning-rate search
  RescaleMode mode = RescaleMode::Sqrt;
  FinderSearch search = FinderSearch::TwoWay;
  bool refresh_each_epoch = false;  // MBT-GD only; MMT/NAG always refresh
  std::size_t stuck_window = 5;
  double stuck_alpha = 0.5;
};

enum class MbtScheme { GD, MMT, NAG };

inline const char* to_string(MbtScheme s) {
  switch (s) {
    case MbtScheme::GD: return "mbt_gd";
    case MbtScheme::MMT: return "mbt_mmt";
    case MbtScheme::NAG: return "mbt_nag";
  }
  return "?";
}

namespace detail {

// One record per epoch end (record 0 is the start point): the full loss and
// gradient norm, the learning rate used during the epoch, the finder trials
// spent at its start, and cumulative objective evaluations (value or
// gradient, batch or full).
inline Trajectory run_mbt(const MiniBatchProblem& problem, const BatchSampler& sampler,
                          LineSearchConfig cfg, const StopRule& stop, std::size_t epochs,
                          const Point& z0, const MbtOptions& opts, double gamma, MbtScheme scheme) {
  cfg.validate();
  stop.validate();
  if (epochs == 0) throw InvalidArgument("mbt: epochs must be >= 1");
  if (!(gamma >= 0.0)) throw InvalidArgument("mbt: gamma must be nonnegative");
  if (z0.size() != problem.dimension()) throw InvalidArgument("mbt: z0 has wrong dimension");
  if (sampler.population() != problem.size())
    throw InvalidArgument("mbt: sampler and problem sizes differ");

  const ScalarField full = problem.full_objective();
  Trajectory traj;
  std::size_t evals = 0;
  Vector z = z0.coords();
  Vector v(z.size(), 0.0);
  StuckDetector stuck(opts.stuck_window);
  const bool per_epoch = scheme != MbtScheme::GD || opts.refresh_each_epoch;
  bool need_refresh = true;
  double lr = 0.0;

  auto push = [&](std::size_t index, double step, std::size_t trials) {
    const double value = full.value(z);
    const double gnorm = vec::norm(full.gradient(z));
    evals += 2;
    traj.records.push_back(IterateRecord{index, Point(z), value, gnorm, step, trials, evals,
                                         scheme == MbtScheme::GD ? 0.0 : gamma});
    return value;
  };
  push(0, 0.0, 0);

  const std::size_t n_epochs = std::min<std::size_t>(epochs, stop.max_iters);
  for (std::size_t e = 0; e < n_epochs; ++e) {
    std::size_t trials = 0;
    try {
      if (need_refresh || per_epoch) {
        LRFinderOptions fo{opts.n_batches, opts.mode, opts.search, e};
        const LRFinderReport rep = lr_finder(problem, sampler, cfg, Point(z), fo);
        lr = rep.rescaled_sigma;
        trials = rep.trials;
        evals += rep.trials + 2 * rep.per_batch_sigmas.size() + 2 * rep.excluded_batches.size();
        need_refresh = false;
        traj.events.push_back("epoch " + std::to_string(e + 1) + ": learning rate " +
                              std::to_string(lr) + " (alpha " + std::to_string(cfg.alpha) + ")");
      }
      const Vector start = z;
      for (const auto& batch : sampler.epoch(e)) {
        const ScalarField fb = problem.batch_objective(batch);
        Vector g;
        if (scheme == MbtScheme::NAG) g = fb.gradient(vec::sub(z, vec::scaled(gamma, v)));
        else g = fb.gradient(z);
        ++evals;
        if (scheme == MbtScheme::GD) v = vec::scaled(lr, g);
        else v = vec::combine(gamma, v, lr, g);
        z = vec::sub(z, v);
        if (!vec::all_finite(z)) throw NonFiniteEvaluation("mbt: iterate is non-finite");
      }
      const double loss = push(e + 1, lr, trials);
      if (vec::norm(z) > stop.divergence_radius) {
        traj.termination = Termination::Diverged;
        return traj;
      }
      if (vec::distance(z, start) < stop.eps) {
        traj.termination = Termination::Converged;
        return traj;
      }
      if (stuck.observe(loss)) {
        cfg.alpha = opts.stuck_alpha;
        need_refresh = true;
        if (scheme != MbtScheme::GD) gamma = 0.0;
        traj.events.push_back("epoch " + std::to_string(e + 1) + ": stuck, alpha set to " +
                              std::to_string(cfg.alpha) +
                              (scheme != MbtScheme::GD ? ", momentum off" : ""));
      }
    } catch (const NonFiniteEvaluation& ex) {
      traj.termination = Termination::Diverged;
      traj.nonfinite = true;
      traj.events.push_back(ex.what());
      return traj;
    }
  }
  traj.termination = Termination::MaxIters;
  return traj;
}

}  // namespace detail

/// MBT-GD: a rescaled learning rate from lr_finder at the start (and, with
/// refresh_each_epoch, at every epoch), fixed-rate batch steps in between.
/// When the stuck detector fires, alpha becomes stuck_alpha and the rate is
/// recomputed at the start of the next epoch.
inline Trajectory run_mbt_gd(const MiniBatchProblem& problem, const BatchSampler& sampler,
                             const LineSearchConfig& cfg, const StopRule& stop, std::size_t epochs,
                             const Point& z0, const MbtOptions& opts = {}) {
  return detail::run_mbt(problem, sampler, cfg, stop, epochs, z0, opts, 0.0, MbtScheme::GD);
}

/// MBT-MMT: the rate is recomputed at every epoch start and batch steps use
/// v = gamma v + lr g, z -= v. A stuck trigger sets alpha to stuck_alpha and
/// turns momentum off for the rest of the run.
inline Trajectory run_mbt_mmt(const MiniBatchProblem& problem, const BatchSampler& sampler,
                              const LineSearchConfig& cfg, const StopRule& stop, std::size_t epochs,
                              const Point& z0, double gamma = 0.9, const MbtOptions& opts = {}) {
  return detail::run_mbt(problem, sampler, cfg, stop, epochs, z0, opts, gamma, MbtScheme::MMT);
}

/// MBT-NAG: as MBT-MMT with the batch gradient taken at z - gamma v.
inline Trajectory run_mbt_nag(const MiniBatchProblem& problem, const BatchSampler& sampler,
                              const LineSearchConfig& cfg, const StopRule& stop, std::size_t epochs,
                              const Point& z0, double gamma = 0.9, const MbtOptions& opts = {}) {
  return detail::run_mbt(problem, sampler, cfg, stop, epochs, z0, opts, gamma, MbtScheme::NAG);
}

// ---------------------------------------------------------------------------
// Sequence of objectives
// ---------------------------------------------------------------------------

/// z_{n+1} = z_n - delta(f_n, delta0, z_n) grad f_n(z_n), with the last
/// objective repeated once the list runs out. Record n carries f_n(z_n).
inline Trajectory run_objective_sequence(const std::vector<ScalarField>& fields, const Point& z0,
                                         const LineSearchConfig& cfg, const StopRule& stop) {
  cfg.validate();
  stop.validate();
  if (fields.empty()) throw InvalidArgument("run_objective_sequence: empty list");
  for (const auto& f : fields)
    if (f.dimension() != z0.size())
      throw InvalidArgument("run_objective_sequence: dimension mismatch");
  auto field_at = [&](std::size_t n) -> const ScalarField& {
    return fields[std::min(n, fields.size() - 1)];
  };

  Trajectory traj;
  std::size_t evals = 0;
  Vector z = z0.coords();
  auto evaluate = [&](std::size_t n, Vector& g) {
    const ScalarField& f = field_at(n);
    const double v = f.value(z);
    g = f.gradient(z);
    ++evals;
    return v;
  };

  try {
    Vector g;
    double value = evaluate(0, g);
    traj.records.push_back(IterateRecord{0, z0, value, vec::norm(g), 0.0, 0, evals, 0.0});
    for (std::size_t n = 0; n < stop.max_iters; ++n) {
      if (vec::norm(g) == 0.0) {
        traj.termination = Termination::Converged;
        return traj;
      }
      const LineSearchResult r = backtrack(field_at(n), Anchor{z, value, g}, cfg);
      evals += r.trials;
      const Vector d = vec::scaled(r.sigma, g);
      z = vec::sub(z, d);
      if (!vec::all_finite(z)) throw NonFiniteEvaluation("iterate is non-finite");
      value = evaluate(n + 1, g);
      traj.records.push_back(
          IterateRecord{n + 1, Point(z), value, vec::norm(g), r.sigma, r.trials, evals, 0.0});
      if (vec::norm(z) > stop.divergence_radius) {
        traj.termination = Termination::Diverged;
        return traj;
      }
      if (vec::norm(d) < stop.eps) {
        traj.termination = Termination::Converged;
        return traj;
      }
    }
  } catch (const StalledLineSearch& e) {
    traj.termination = Termination::Stalled;
    traj.events.push_back(e.what());
    return traj;
  } catch (const NonFiniteEvaluation& e) {
    traj.termination = Termination::Diverged;
    traj.nonfinite = true;
    traj.events.push_back(e.what());
    return traj;
  }
  traj.termination = Termination::MaxIters;
  return traj;
}

}  // namespace btgd
