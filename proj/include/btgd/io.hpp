#pragma once

// CSV and JSON serialization for trajectories, reports and problem
// descriptions. Requires nlohmann/json.

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "btgd/diagnostics.hpp"
#include "btgd/minibatch.hpp"

namespace btgd::io {

using json = nlohmann::json;

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// --- Trajectory CSV -------------------------------------------------------------

inline std::string trajectory_csv_header(std::size_t dim) {
  std::string h = "index";
  for (std::size_t i = 0; i < dim; ++i) h += ",x" + std::to_string(i);
  h += ",value,grad_norm,step_size,backtrack_count,func_evals";
  return h;
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const std::size_t dim = traj.records.empty() ? 1 : traj.records.front().point.size();
  os << trajectory_csv_header(dim) << '\n';
  for (const auto& r : traj.records) {
    os << r.index;
    for (double c : r.point.coords()) os << ',' << format_double(c);
    os << ',' << format_double(r.value) << ',' << format_double(r.grad_norm) << ','
       << format_double(r.step_size) << ',' << r.backtrack_count << ',' << r.func_evals << '\n';
  }
}

inline std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  return os.str();
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

// std::stod rejects subnormals; strtod parses them.
inline double parse_double(const std::string& cell) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size())
    throw InvalidArgument("trajectory csv: bad number '" + cell + "'");
  return v;
}

}  // namespace detail

/// Parses a trajectory CSV back into records (momentum is not stored).
inline std::vector<IterateRecord> read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("trajectory csv: missing header");
  const auto header = detail::split(line);
  if (header.size() < 7 || header.front() != "index")
    throw InvalidArgument("trajectory csv: malformed header");
  const std::size_t dim = header.size() - 6;
  if (line != trajectory_csv_header(dim)) throw InvalidArgument("trajectory csv: unexpected columns");
  std::vector<IterateRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split(line);
    if (cells.size() != header.size()) throw InvalidArgument("trajectory csv: ragged row");
    IterateRecord r;
    r.index = std::stoull(cells[0]);
    Vector p(dim);
    for (std::size_t i = 0; i < dim; ++i) p[i] = detail::parse_double(cells[1 + i]);
    r.point = Point(std::move(p));
    r.value = detail::parse_double(cells[dim + 1]);
    r.grad_norm = detail::parse_double(cells[dim + 2]);
    r.step_size = detail::parse_double(cells[dim + 3]);
    r.backtrack_count = std::stoull(cells[dim + 4]);
    r.func_evals = std::stoull(cells[dim + 5]);
    out.push_back(std::move(r));
  }
  return out;
}

// --- JSON ------------------------------------------------------------------------

inline json to_json(const LeastSquaresSpec& s) {
  return json{{"kind", "least_squares"},
              {"n_samples", s.n_samples},
              {"dimension", s.dimension},
              {"noise", s.noise},
              {"seed", s.seed}};
}

inline LeastSquaresSpec least_squares_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("problem: expected an object");
  if (j.value("kind", std::string("least_squares")) != "least_squares")
    throw InvalidArgument("problem: unknown kind '" + j.value("kind", std::string()) + "'");
  LeastSquaresSpec s;
  s.n_samples = j.value("n_samples", s.n_samples);
  s.dimension = j.value("dimension", s.dimension);
  s.noise = j.value("noise", s.noise);
  s.seed = j.value("seed", s.seed);
  if (s.n_samples == 0 || s.dimension == 0) throw InvalidArgument("problem: sizes must be positive");
  return s;
}

inline json to_json(const LRFinderReport& r) {
  return json{{"per_batch_sigmas", r.per_batch_sigmas},
              {"excluded_batches", r.excluded_batches},
              {"mean_sigma", r.mean_sigma},
              {"rho", r.rho},
              {"rescaled_sigma", r.rescaled_sigma},
              {"mode", to_string(r.mode)},
              {"trials", r.trials}};
}

inline json to_json(const CriticalPointClass& c) {
  return json{{"kind", to_string(c.kind)}, {"eigenvalues", c.eigenvalues}, {"grad_norm", c.grad_norm}};
}

inline json to_json(const ConvergenceSummary& s) {
  return json{{"last_step_norm", s.last_step_norm},
              {"last_grad_norm", s.last_grad_norm},
              {"final_point", s.final_point.coords()},
              {"limit_class", to_json(s.limit_class)}};
}

inline json to_json(const StabilizationReport& r) {
  return json{{"distinct_sigmas", r.distinct_sigmas},
              {"distinct_count", r.distinct_sigmas.size()},
              {"tail_constant_length", r.tail_constant_length},
              {"window", r.window},
              {"stabilized", r.stabilized},
              {"short_run", r.short_run}};
}

}  // namespace btgd::io
