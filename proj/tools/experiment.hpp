#pragma once

// Experiment runner behind the btgd command-line tool. A JSON config names a
// function or least-squares problem, one or more optimizers, a start point
// and a stop rule; command-line flags override the matching config fields.
//
// Exit codes: 0 success, 2 bad usage or config (nothing written),
// 3 numerical failure (stalled search or non-finite values; what was
// computed is still written).

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "btgd/btgd.hpp"
#include "btgd/io.hpp"

namespace btgd::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// Malformed config, unknown names, or values out of range.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config model
// ---------------------------------------------------------------------------

struct FunctionSpec {
  std::string name;
  functions::CorpusParams params;
};

struct OptimizerSpec {
  std::string name;
  LineSearchConfig cfg;
  double delta = 0.1;  // standard_gd, mmt, nag
  double gamma = 0.9;  // momentum schemes
  DirectionBounds bounds;
  std::vector<double> schedule;         // scheduled_gd: explicit rates
  std::optional<double> robbins_monro;  // scheduled_gd: c / (n + 1)
  std::optional<double> verify_alpha;   // scheduled_gd
  std::vector<double> v_init;           // momentum schemes, zeros by default
};

struct StartSpec {
  std::vector<double> point;
  std::vector<double> ball_center;  // set for a seeded draw from a ball
  double ball_radius = 0.0;
};

struct ExperimentConfig {
  std::optional<FunctionSpec> function;
  std::vector<OptimizerSpec> optimizers;
  std::optional<StartSpec> z0;
  StopRule stop;
  std::uint64_t seed = 0;
  std::string out = "out";

  // mini-batch settings
  std::optional<LeastSquaresSpec> problem;
  std::size_t batch_size = 10;
  std::size_t n_batches = 20;
  RescaleMode mode = RescaleMode::Sqrt;
  FinderSearch search = FinderSearch::TwoWay;
  bool refresh_each_epoch = false;
  std::size_t epochs = 200;
  LineSearchConfig finder = mbt_default_config();
  std::vector<double> at;
  std::vector<double> delta0s{1e-6, 1e-3, 1.0, 1e3};
  std::vector<std::size_t> batch_sizes{5, 10, 25, 50};

  // saddle-mc settings
  std::vector<double> saddle{0.0, 0.0};
  double radius = 0.1;
  std::size_t n_samples = 1000;
  unsigned workers = 0;
};

inline const std::vector<std::string>& optimizer_names() {
  static const std::vector<std::string> names{
      "standard_gd",     "scheduled_gd",    "backtracking_gd", "two_way_gd",
      "inexact_backtracking_gd",            "mmt",             "nag",
      "backtracking_mmt", "backtracking_nag", "simplified_bmmt", "simplified_bnag",
      "mbt_gd",          "mbt_mmt",         "mbt_nag"};
  return names;
}

inline OptimizerSpec named_optimizer(std::string name) {
  OptimizerSpec o;
  o.name = std::move(name);
  return o;
}

inline bool is_minibatch(const std::string& optimizer) { return optimizer.rfind("mbt_", 0) == 0; }

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": bad value for '" + key + "'");
  }
}

inline LineSearchConfig parse_line_search(const json& j, LineSearchConfig c, const std::string& where) {
  c.alpha = get(j, "alpha", c.alpha, where);
  c.beta = get(j, "beta", c.beta, where);
  c.delta0 = get(j, "delta0", c.delta0, where);
  c.max_halvings = get(j, "max_halvings", c.max_halvings, where);
  return c;
}

inline FunctionSpec parse_function(const json& j) {
  FunctionSpec f;
  if (j.is_string()) {
    f.name = j.get<std::string>();
    return f;
  }
  if (!j.is_object()) throw ConfigError("function: expected a name or an object");
  check_keys(j, {"name", "gamma", "eps0", "diag", "linear", "lambda"}, "function");
  f.name = get(j, "name", std::string(), "function");
  f.params.gamma = get(j, "gamma", f.params.gamma, "function");
  f.params.eps0 = get(j, "eps0", f.params.eps0, "function");
  f.params.diag = get(j, "diag", f.params.diag, "function");
  f.params.linear = get(j, "linear", f.params.linear, "function");
  f.params.lambda = get(j, "lambda", f.params.lambda, "function");
  return f;
}

inline OptimizerSpec parse_optimizer(const json& j) {
  OptimizerSpec o;
  if (j.is_string()) {
    o.name = j.get<std::string>();
    return o;
  }
  if (!j.is_object()) throw ConfigError("optimizer: expected a name or an object");
  const std::string w = "optimizer";
  check_keys(j,
             {"name", "alpha", "beta", "delta0", "max_halvings", "delta", "gamma", "a1", "a2", "mu",
              "schedule", "robbins_monro_c", "verify_alpha", "v_init"},
             w);
  o.name = get(j, "name", std::string(), w);
  o.cfg = parse_line_search(j, o.cfg, w);
  o.delta = get(j, "delta", o.delta, w);
  o.gamma = get(j, "gamma", o.gamma, w);
  o.bounds.a1 = get(j, "a1", o.bounds.a1, w);
  o.bounds.a2 = get(j, "a2", o.bounds.a2, w);
  o.bounds.mu = get(j, "mu", o.bounds.mu, w);
  o.schedule = get(j, "schedule", o.schedule, w);
  if (j.contains("robbins_monro_c")) o.robbins_monro = get(j, "robbins_monro_c", 0.0, w);
  if (j.contains("verify_alpha")) o.verify_alpha = get(j, "verify_alpha", 0.0, w);
  o.v_init = get(j, "v_init", o.v_init, w);
  return o;
}

inline StartSpec parse_start(const json& j) {
  StartSpec s;
  if (j.is_array()) {
    s.point = get(json{{"z0", j}}, "z0", s.point, "z0");
    return s;
  }
  if (!j.is_object()) throw ConfigError("z0: expected a list or an object");
  check_keys(j, {"center", "radius"}, "z0");
  s.ball_center = get(j, "center", s.ball_center, "z0");
  s.ball_radius = get(j, "radius", 0.0, "z0");
  if (s.ball_center.empty()) throw ConfigError("z0: ball needs a center");
  if (!(s.ball_radius > 0.0)) throw ConfigError("z0: ball radius must be positive");
  return s;
}

inline RescaleMode parse_mode(const std::string& s) {
  if (s == "linear") return RescaleMode::Linear;
  if (s == "sqrt") return RescaleMode::Sqrt;
  if (s == "none") return RescaleMode::None;
  throw ConfigError("mode: expected linear, sqrt or none");
}

inline FinderSearch parse_search(const std::string& s) {
  if (s == "two_way") return FinderSearch::TwoWay;
  if (s == "backtrack") return FinderSearch::Backtrack;
  throw ConfigError("search: expected two_way or backtrack");
}

}  // namespace detail

/// Parses a config document. Throws ConfigError on anything malformed.
inline ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  detail::check_keys(j,
                     {"function", "optimizer", "optimizers", "z0", "stop", "seed", "out", "problem",
                      "batch_size", "n_batches", "mode", "search", "refresh_each_epoch", "epochs",
                      "finder", "at", "delta0s", "batch_sizes", "saddle", "radius", "n_samples",
                      "workers"},
                     "config");
  ExperimentConfig c;
  const std::string w = "config";
  if (j.contains("function")) c.function = detail::parse_function(j["function"]);
  if (j.contains("optimizer")) c.optimizers.push_back(detail::parse_optimizer(j["optimizer"]));
  if (j.contains("optimizers")) {
    if (!j["optimizers"].is_array()) throw ConfigError("optimizers: expected a list");
    for (const auto& o : j["optimizers"]) c.optimizers.push_back(detail::parse_optimizer(o));
  }
  if (j.contains("z0")) c.z0 = detail::parse_start(j["z0"]);
  if (j.contains("stop")) {
    const json& s = j["stop"];
    if (!s.is_object()) throw ConfigError("stop: expected an object");
    detail::check_keys(s, {"eps", "max_iters", "divergence_radius"}, "stop");
    c.stop.eps = detail::get(s, "eps", c.stop.eps, "stop");
    c.stop.max_iters = detail::get(s, "max_iters", c.stop.max_iters, "stop");
    c.stop.divergence_radius = detail::get(s, "divergence_radius", c.stop.divergence_radius, "stop");
  }
  c.seed = detail::get(j, "seed", c.seed, w);
  c.out = detail::get(j, "out", c.out, w);
  if (j.contains("problem")) {
    try {
      c.problem = io::least_squares_from_json(j["problem"]);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  c.batch_size = detail::get(j, "batch_size", c.batch_size, w);
  c.n_batches = detail::get(j, "n_batches", c.n_batches, w);
  if (j.contains("mode")) c.mode = detail::parse_mode(detail::get(j, "mode", std::string(), w));
  if (j.contains("search")) c.search = detail::parse_search(detail::get(j, "search", std::string(), w));
  c.refresh_each_epoch = detail::get(j, "refresh_each_epoch", c.refresh_each_epoch, w);
  c.epochs = detail::get(j, "epochs", c.epochs, w);
  if (j.contains("finder")) {
    if (!j["finder"].is_object()) throw ConfigError("finder: expected an object");
    detail::check_keys(j["finder"], {"alpha", "beta", "delta0", "max_halvings"}, "finder");
    c.finder = detail::parse_line_search(j["finder"], c.finder, "finder");
  }
  c.at = detail::get(j, "at", c.at, w);
  c.delta0s = detail::get(j, "delta0s", c.delta0s, w);
  c.batch_sizes = detail::get(j, "batch_sizes", c.batch_sizes, w);
  c.saddle = detail::get(j, "saddle", c.saddle, w);
  c.radius = detail::get(j, "radius", c.radius, w);
  c.n_samples = detail::get(j, "n_samples", c.n_samples, w);
  c.workers = detail::get(j, "workers", c.workers, w);
  return c;
}

// ---------------------------------------------------------------------------
// Validation helpers
// ---------------------------------------------------------------------------

namespace detail {

template <class Fn>
void validated(Fn&& fn) {
  try {
    fn();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

inline NamedObjective resolve_function(const ExperimentConfig& c) {
  if (!c.function) throw ConfigError("no function given");
  std::optional<NamedObjective> obj;
  validated([&] { obj = functions::by_name(c.function->name, c.function->params); });
  if (!obj) throw ConfigError("unknown function '" + c.function->name + "'");
  return *obj;
}

inline Schedule schedule_of(const OptimizerSpec& o) {
  if (o.robbins_monro) return Schedule(RobbinsMonro{*o.robbins_monro});
  return Schedule(ExplicitSequence{o.schedule});
}

inline void check_optimizer(const OptimizerSpec& o, std::size_t dim) {
  const auto& names = optimizer_names();
  if (std::find(names.begin(), names.end(), o.name) == names.end())
    throw ConfigError("unknown optimizer '" + o.name + "'");
  validated([&] {
    o.cfg.validate();
    o.bounds.validate();
  });
  if (!(o.delta > 0.0)) throw ConfigError("optimizer: delta must be positive");
  if (!(o.gamma >= 0.0)) throw ConfigError("optimizer: gamma must be nonnegative");
  if (!o.v_init.empty() && o.v_init.size() != dim)
    throw ConfigError("optimizer: v_init has wrong dimension");
  if (o.name == "scheduled_gd") {
    if (o.schedule.empty() == !o.robbins_monro)
      throw ConfigError("scheduled_gd: give exactly one of schedule or robbins_monro_c");
    validated([&] { schedule_of(o); });
  }
}

inline Point start_point(const ExperimentConfig& c, std::size_t dim) {
  if (!c.z0) throw ConfigError("no z0 given");
  if (!c.z0->point.empty()) {
    if (c.z0->point.size() != dim) throw ConfigError("z0 has wrong dimension");
    Point p = Point::zeros(1);
    validated([&] { p = Point(c.z0->point); });
    return p;
  }
  if (c.z0->ball_center.size() != dim) throw ConfigError("z0 center has wrong dimension");
  std::mt19937_64 rng(c.seed);
  return btgd::detail::uniform_in_ball(c.z0->ball_center, c.z0->ball_radius, rng);
}

inline Point v_init_of(const OptimizerSpec& o, std::size_t dim) {
  if (o.v_init.empty()) return Point::zeros(dim);
  return Point(o.v_init);
}

inline Trajectory run_one(const OptimizerSpec& o, const ScalarField& f, const Point& z0,
                          const StopRule& stop, std::uint64_t seed) {
  const std::size_t dim = f.dimension();
  if (o.name == "standard_gd") return run_standard_gd(f, z0, o.delta, stop);
  if (o.name == "scheduled_gd") return run_scheduled_gd(f, z0, schedule_of(o), stop, o.verify_alpha);
  if (o.name == "backtracking_gd") return run_backtracking_gd(f, z0, o.cfg, stop);
  if (o.name == "two_way_gd") return run_two_way_gd(f, z0, o.cfg, stop);
  if (o.name == "inexact_backtracking_gd")
    return run_inexact_backtracking_gd(f, z0, DirectionOracle{o.bounds, seed}, o.cfg, stop);
  if (o.name == "mmt") return run_mmt(f, z0, v_init_of(o, dim), o.gamma, o.delta, stop);
  if (o.name == "nag") return run_nag(f, z0, v_init_of(o, dim), o.gamma, o.delta, stop);
  const MomentumState ms{o.gamma, o.cfg.delta0};
  if (o.name == "backtracking_mmt")
    return run_backtracking_mmt(f, z0, v_init_of(o, dim), ms, o.bounds, o.cfg, stop);
  if (o.name == "backtracking_nag")
    return run_backtracking_nag(f, z0, v_init_of(o, dim), ms, o.bounds, o.cfg, stop);
  if (o.name == "simplified_bmmt")
    return run_simplified_bmmt(f, z0, v_init_of(o, dim), o.gamma, o.cfg, stop);
  if (o.name == "simplified_bnag")
    return run_simplified_bnag(f, z0, v_init_of(o, dim), o.gamma, o.cfg, stop);
  throw ConfigError("optimizer '" + o.name + "' needs a problem, not a function");
}

struct MiniBatchSetup {
  MiniBatchProblem problem;
  BatchSampler sampler;
};

inline MiniBatchSetup minibatch_setup(const ExperimentConfig& c, std::size_t batch_size) {
  if (!c.problem) throw ConfigError("no problem given");
  MiniBatchProblem p = make_least_squares_problem(*c.problem);
  std::optional<BatchSampler> s;
  validated([&] { s.emplace(p.size(), batch_size, c.seed); });
  return MiniBatchSetup{std::move(p), *s};
}

inline Trajectory run_minibatch(const OptimizerSpec& o, const ExperimentConfig& c,
                                const MiniBatchSetup& mb, const Point& z0) {
  MbtOptions opts;
  opts.n_batches = c.n_batches;
  opts.mode = c.mode;
  opts.search = c.search;
  opts.refresh_each_epoch = c.refresh_each_epoch;
  if (o.name == "mbt_gd") return run_mbt_gd(mb.problem, mb.sampler, c.finder, c.stop, c.epochs, z0, opts);
  if (o.name == "mbt_mmt")
    return run_mbt_mmt(mb.problem, mb.sampler, c.finder, c.stop, c.epochs, z0, o.gamma, opts);
  return run_mbt_nag(mb.problem, mb.sampler, c.finder, c.stop, c.epochs, z0, o.gamma, opts);
}

inline std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
  os.flush();
}

inline bool numerical_failure(const Trajectory& t) {
  return t.termination == Termination::Stalled || t.nonfinite;
}

inline json trajectory_summary(const Trajectory& t) {
  const auto violations = std::count_if(t.direction_checks.begin(), t.direction_checks.end(),
                                        [](const DirectionCheck& d) { return !d.holds(); });
  return json{{"termination", to_string(t.termination)},
              {"nonfinite", t.nonfinite},
              {"steps", t.steps()},
              {"final_value", t.records.empty() ? 0.0 : t.last().value},
              {"func_evals", t.records.empty() ? 0 : t.last().func_evals},
              {"armijo_violations", t.armijo_violations},
              {"direction_check_failures", violations},
              {"events", t.events},
              {"stabilization", io::to_json(detect_stabilization(t))}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// One optimizer run. Writes trajectory.csv and summary.json to c.out.
inline int cmd_run(const ExperimentConfig& c, std::ostream& log) {
  if (c.optimizers.size() != 1) throw ConfigError("run: expected exactly one optimizer");
  const OptimizerSpec& o = c.optimizers.front();
  detail::validated([&] { c.stop.validate(); });

  Trajectory traj;
  std::optional<NamedObjective> obj;
  std::optional<ScalarField> field;
  json head{{"command", "run"}, {"optimizer", o.name}, {"seed", c.seed}};
  if (is_minibatch(o.name)) {
    detail::check_optimizer(o, 1);
    auto mb = detail::minibatch_setup(c, c.batch_size);
    detail::validated([&] { c.finder.validate(); });
    if (c.epochs == 0) throw ConfigError("epochs must be >= 1");
    if (c.n_batches == 0) throw ConfigError("n_batches must be >= 1");
    const std::size_t dim = mb.problem.dimension();
    const Point z0 = c.z0 ? detail::start_point(c, dim) : Point::zeros(dim);
    head["problem"] = io::to_json(*c.problem);
    head["batch_size"] = c.batch_size;
    try {
      traj = detail::run_minibatch(o, c, mb, z0);
    } catch (const LrFinderFailed& e) {
      log << "error: " << e.what() << '\n';
      head["error"] = e.what();
      head["timestamp"] = detail::timestamp();
      detail::write_file(fs::path(c.out) / "summary.json", head.dump(2) + "\n");
      return kExitNumerical;
    }
    field = mb.problem.full_objective();
  } else {
    obj = detail::resolve_function(c);
    detail::check_optimizer(o, obj->field.dimension());
    const Point z0 = detail::start_point(c, obj->field.dimension());
    head["function"] = obj->name;
    traj = detail::run_one(o, obj->field, z0, c.stop, c.seed);
    field = obj->field;
  }

  json summary = head;
  summary.update(detail::trajectory_summary(traj));
  if (!traj.records.empty()) summary["convergence"] = io::to_json(convergence_report(traj, *field));
  summary["timestamp"] = detail::timestamp();
  detail::write_file(fs::path(c.out) / "trajectory.csv", io::trajectory_csv(traj));
  detail::write_file(fs::path(c.out) / "summary.json", summary.dump(2) + "\n");
  log << o.name << ": " << to_string(traj.termination) << " after " << traj.steps() << " steps\n";
  return detail::numerical_failure(traj) ? kExitNumerical : kExitOk;
}

/// Several optimizers from a shared start. Writes compare.csv (one row per
/// optimizer in config order) and compare.json.
inline int cmd_compare(const ExperimentConfig& c, std::ostream& log) {
  if (c.optimizers.size() < 2) throw ConfigError("compare: expected at least two optimizers");
  detail::validated([&] { c.stop.validate(); });
  const NamedObjective obj = detail::resolve_function(c);
  for (const auto& o : c.optimizers) {
    if (is_minibatch(o.name)) throw ConfigError("compare: mini-batch optimizers are not supported");
    detail::check_optimizer(o, obj.field.dimension());
  }
  const Point z0 = detail::start_point(c, obj.field.dimension());

  std::vector<Trajectory> runs(c.optimizers.size());
  btgd::detail::parallel_for(runs.size(), c.workers, [&](std::size_t i) {
    runs[i] = detail::run_one(c.optimizers[i], obj.field, z0, c.stop, c.seed);
  });

  std::ostringstream csv;
  csv << "optimizer,termination,final_value,grad_norm,iterations,func_evals\n";
  json rows = json::array();
  bool failed = false;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const Trajectory& t = runs[i];
    csv << c.optimizers[i].name << ',' << to_string(t.termination) << ','
        << io::format_double(t.last().value) << ',' << io::format_double(t.last().grad_norm) << ','
        << t.steps() << ',' << t.last().func_evals << '\n';
    json row = detail::trajectory_summary(t);
    row["optimizer"] = c.optimizers[i].name;
    row["grad_norm"] = t.last().grad_norm;
    rows.push_back(row);
    failed = failed || detail::numerical_failure(t);
    log << c.optimizers[i].name << ": " << to_string(t.termination) << '\n';
  }
  json summary{{"command", "compare"}, {"function", obj.name}, {"z0", z0.coords()},
               {"seed", c.seed},       {"runs", rows},        {"timestamp", detail::timestamp()}};
  detail::write_file(fs::path(c.out) / "compare.csv", csv.str());
  detail::write_file(fs::path(c.out) / "compare.json", summary.dump(2) + "\n");
  return failed ? kExitNumerical : kExitOk;
}

/// Averaged mini-batch learning rate at c.at (the origin by default).
inline int cmd_lr_finder(const ExperimentConfig& c, std::ostream& log) {
  auto mb = detail::minibatch_setup(c, c.batch_size);
  detail::validated([&] { c.finder.validate(); });
  if (c.n_batches == 0) throw ConfigError("n_batches must be >= 1");
  const std::size_t dim = mb.problem.dimension();
  if (!c.at.empty() && c.at.size() != dim) throw ConfigError("at: wrong dimension");
  const Point at = c.at.empty() ? Point::zeros(dim) : Point(c.at);

  json out{{"command", "lr-finder"}, {"problem", io::to_json(*c.problem)}, {"batch_size", c.batch_size},
           {"seed", c.seed}};
  int code = kExitOk;
  try {
    const LRFinderReport rep =
        lr_finder(mb.problem, mb.sampler, c.finder, at, LRFinderOptions{c.n_batches, c.mode, c.search, 0});
    out["report"] = io::to_json(rep);
    log << "mean sigma " << io::format_double(rep.mean_sigma) << ", rescaled "
        << io::format_double(rep.rescaled_sigma) << '\n';
  } catch (const LrFinderFailed& e) {
    out["error"] = e.what();
    log << "error: " << e.what() << '\n';
    code = kExitNumerical;
  }
  out["timestamp"] = detail::timestamp();
  detail::write_file(fs::path(c.out) / "lr_finder.json", out.dump(2) + "\n");
  return code;
}

/// Escape fraction around a saddle. Writes saddle_mc.csv (one row per
/// sample) and saddle_mc.json.
inline int cmd_saddle_mc(const ExperimentConfig& c, std::ostream& log) {
  const NamedObjective obj = detail::resolve_function(c);
  const std::size_t dim = obj.field.dimension();
  if (c.saddle.size() != dim) throw ConfigError("saddle: wrong dimension");
  if (!(c.radius > 0.0)) throw ConfigError("radius must be positive");
  if (c.n_samples == 0) throw ConfigError("n_samples must be >= 1");
  OptimizerSpec o = c.optimizers.empty() ? named_optimizer("backtracking_gd") : c.optimizers.front();
  if (o.name != "backtracking_gd") throw ConfigError("saddle-mc: only backtracking_gd is supported");
  detail::check_optimizer(o, dim);
  detail::validated([&] { c.stop.validate(); });
  const Point saddle(c.saddle);
  if (classify_critical_point(obj.field, saddle.span()).kind != CriticalKind::GeneralizedSaddle)
    throw ConfigError("saddle: point is not a generalized saddle of " + obj.name);

  SaddleMcOptions opts;
  opts.workers = c.workers;
  const SaddleMcResult r =
      saddle_basin_fraction(obj.field, saddle, c.radius, c.n_samples, o.cfg, c.stop, c.seed, opts);

  std::ostringstream csv;
  csv << "sample";
  for (std::size_t i = 0; i < dim; ++i) csv << ",x" << i;
  csv << ",escaped,min_dist_after_burn_in,termination,steps\n";
  for (const auto& s : r.samples) {
    csv << s.index;
    for (double x : s.start.coords()) csv << ',' << io::format_double(x);
    csv << ',' << (s.escaped ? 1 : 0) << ',' << io::format_double(s.min_dist_after_burn_in) << ','
        << to_string(s.termination) << ',' << s.steps << '\n';
  }
  json out{{"command", "saddle-mc"}, {"function", obj.name},   {"saddle", c.saddle},
           {"radius", c.radius},     {"n_samples", c.n_samples}, {"seed", c.seed},
           {"fraction", r.fraction}, {"timestamp", detail::timestamp()}};
  detail::write_file(fs::path(c.out) / "saddle_mc.csv", csv.str());
  detail::write_file(fs::path(c.out) / "saddle_mc.json", out.dump(2) + "\n");
  log << "escape fraction " << io::format_double(r.fraction) << '\n';
  return kExitOk;
}

/// Rescaled mean learning rate over a grid of batch sizes (rows) and starting
/// delta0 values (columns). Writes stability_sweep.csv and .json.
inline int cmd_stability_sweep(const ExperimentConfig& c, std::ostream& log) {
  if (c.delta0s.empty() || c.batch_sizes.empty()) throw ConfigError("sweep: empty grid");
  if (c.n_batches == 0) throw ConfigError("n_batches must be >= 1");
  std::vector<detail::MiniBatchSetup> rows;
  for (std::size_t k : c.batch_sizes) rows.push_back(detail::minibatch_setup(c, k));
  for (double d0 : c.delta0s) {
    LineSearchConfig cfg = c.finder;
    cfg.delta0 = d0;
    detail::validated([&] { cfg.validate(); });
  }
  const std::size_t dim = rows.front().problem.dimension();
  if (!c.at.empty() && c.at.size() != dim) throw ConfigError("at: wrong dimension");
  const Point at = c.at.empty() ? Point::zeros(dim) : Point(c.at);

  const std::size_t nc = c.delta0s.size();
  std::vector<std::optional<LRFinderReport>> cells(rows.size() * nc);
  btgd::detail::parallel_for(cells.size(), c.workers, [&](std::size_t i) {
    LineSearchConfig cfg = c.finder;
    cfg.delta0 = c.delta0s[i % nc];
    const auto& mb = rows[i / nc];
    try {
      cells[i] = lr_finder(mb.problem, mb.sampler, cfg, at, LRFinderOptions{c.n_batches, c.mode, c.search, 0});
    } catch (const LrFinderFailed&) {
    }
  });

  std::ostringstream csv;
  csv << "batch_size";
  for (double d0 : c.delta0s) csv << ",delta0=" << io::format_double(d0);
  csv << '\n';
  json table = json::array();
  bool failed = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    csv << c.batch_sizes[r];
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    json row{{"batch_size", c.batch_sizes[r]}, {"cells", json::array()}};
    for (std::size_t k = 0; k < nc; ++k) {
      const auto& cell = cells[r * nc + k];
      if (!cell) {
        csv << ",nan";
        row["cells"].push_back(nullptr);
        failed = true;
        continue;
      }
      csv << ',' << io::format_double(cell->rescaled_sigma);
      row["cells"].push_back(io::to_json(*cell));
      lo = std::min(lo, cell->mean_sigma);
      hi = std::max(hi, cell->mean_sigma);
    }
    csv << '\n';
    row["max_min_ratio"] = hi > 0.0 ? hi / lo : 0.0;
    log << "k=" << c.batch_sizes[r] << " max/min " << io::format_double(hi / lo) << '\n';
    table.push_back(row);
  }
  json out{{"command", "stability-sweep"}, {"problem", io::to_json(*c.problem)}, {"delta0s", c.delta0s},
           {"rows", table}, {"seed", c.seed}, {"timestamp", detail::timestamp()}};
  detail::write_file(fs::path(c.out) / "stability_sweep.csv", csv.str());
  detail::write_file(fs::path(c.out) / "stability_sweep.json", out.dump(2) + "\n");
  return failed ? kExitNumerical : kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> function;
  std::optional<std::string> optimizer;
};

inline ExperimentConfig load_config(const Overrides& ov) {
  json j = json::object();
  if (!ov.config.empty()) {
    std::ifstream is(ov.config);
    if (!is) throw ConfigError("cannot open config " + ov.config);
    try {
      j = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  ExperimentConfig c = parse_config(j);
  if (ov.seed) c.seed = *ov.seed;
  if (ov.out) c.out = *ov.out;
  if (ov.function) {
    if (c.function) c.function->name = *ov.function;
    else c.function = FunctionSpec{*ov.function, {}};
  }
  if (ov.optimizer) {
    if (c.optimizers.empty()) c.optimizers.push_back(named_optimizer(*ov.optimizer));
    else c.optimizers.front().name = *ov.optimizer;
  }
  return c;
}

/// Parses argv and runs one subcommand; returns the process exit code.
inline int main_entry(int argc, const char* const* argv, std::ostream& log = std::cout,
                      std::ostream& err = std::cerr) {
  CLI::App app{"Backtracking gradient descent experiments"};
  app.require_subcommand(1);
  Overrides ov;
  using Command = int (*)(const ExperimentConfig&, std::ostream&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands{
      {"run", "run one optimizer and write trajectory.csv and summary.json", cmd_run},
      {"compare", "run several optimizers from one start point", cmd_compare},
      {"lr-finder", "averaged mini-batch learning rate", cmd_lr_finder},
      {"saddle-mc", "escape fraction around a saddle point", cmd_saddle_mc},
      {"stability-sweep", "learning-rate finder over starting rates and batch sizes", cmd_stability_sweep}};
  std::map<CLI::App*, Command> handlers;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", ov.config, "JSON config file");
    sub->add_option("--seed", ov.seed, "random seed");
    sub->add_option("--out", ov.out, "output directory");
    sub->add_option("--function", ov.function, "function name");
    sub->add_option("--optimizer", ov.optimizer, "optimizer name");
    handlers[sub] = fn;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, log, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, log, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, log, err);
    return kExitUsage;
  }
  try {
    const ExperimentConfig c = load_config(ov);
    for (const auto& [sub, fn] : handlers)
      if (sub->parsed()) return fn(c, log);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}

}  // namespace btgd::cli
