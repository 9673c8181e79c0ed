#pragma once

// Batch studies driven by a JSON configuration: radius sweeps with mode
// tracking, stochastic-collocation moment estimation, KL fits, grid export,
// the analytic pillbox table and a linear-solve benchmark.

#include <Eigen/Dense>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cavitrack/collocation.hpp"
#include "cavitrack/eigensolver.hpp"
#include "cavitrack/errors.hpp"
#include "cavitrack/geometry.hpp"
#include "cavitrack/io.hpp"
#include "cavitrack/kl.hpp"
#include "cavitrack/oracle.hpp"
#include "cavitrack/pencil.hpp"
#include "cavitrack/tracking.hpp"

namespace cavitrack::study {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

enum class ProblemType { Pillbox, DeformedDisk };

enum class Distribution { Uniform, Normal };

struct PillboxProblem {
  double r_nominal = 0.05;  // m
  double length = 0.1;      // m
  int p_max = 3;
  Distribution distribution = Distribution::Uniform;
  double low = 0.04, high = 0.06;  // uniform support, m
  double sd = 0.0;                 // normal standard deviation, m
};

/// Default synthetic spectrum for the 18 station variables (dimensionless,
/// multiplied by scale^2): seven dominant modes and a small noise floor.
inline std::vector<double> default_synthetic_spectrum() {
  std::vector<double> s{8.0, 6.0, 4.5, 3.4, 2.6, 2.0, 1.7};
  s.resize(18, 0.08);
  return s;
}

struct SyntheticSource {
  std::vector<double> spectrum = default_synthetic_spectrum();
  double scale = 5e-4;  // m
  int samples = 2000;
};

struct DiskProblem {
  double radius = 0.05;  // m
  BoundaryCondition boundary = BoundaryCondition::Dirichlet;
  double criterion = 0.95;
  std::optional<std::filesystem::path> observations;
  std::optional<std::filesystem::path> kl_model;
  SyntheticSource synthetic;
};

struct Discretization {
  int degree = 2;
  int elements = 16;
};

struct GridSpec {
  GridKind kind = GridKind::Tensor;
  RuleFamily family = RuleFamily::ClenshawCurtis;
  int points = 5;
  int level = 2;
  int dimension = 1;  // only used by the grid command
};

struct SweepSpec {
  double r_start = 0.06, r_end = 0.04;  // m
  int samples = 21;
  bool physical = false;  // finite-difference radius path instead of algebraic segments
};

struct ObservationsSpec {
  std::filesystem::path path;
  double criterion = 0.95;
};

struct StudyConfig {
  ProblemType problem = ProblemType::Pillbox;
  PillboxProblem pillbox;
  DiskProblem disk;
  Discretization discretization;
  int modes = 6;
  GridSpec grid;
  TrackConfig tracking;
  SweepSpec sweep;
  std::optional<ObservationsSpec> observations;
  std::filesystem::path output = "out";
  int workers = 1;
  std::uint64_t seed = 1;
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": missing or wrong type");
  }
}

inline double number(const json& j, const std::string& key, double fallback, const std::string& where,
                     double lo, double hi) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(where + "." + key + ": expected a number");
  const double v = j.at(key).get<double>();
  if (!(v >= lo && v <= hi))
    throw ConfigError(where + "." + key + " = " + io::format_number(v) + " outside [" + io::format_number(lo) +
                      ", " + io::format_number(hi) + "]");
  return v;
}

inline int integer(const json& j, const std::string& key, int fallback, const std::string& where, int lo,
                   int hi) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  const auto v = j.at(key).get<long long>();
  if (v < lo || v > hi)
    throw ConfigError(where + "." + key + " = " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  return static_cast<int>(v);
}

inline std::string text(const json& j, const std::string& key, const std::string& fallback,
                        const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return j.at(key).get<std::string>();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace detail

/// Parses and range-checks a configuration; relative input paths are
/// resolved against `base_dir`.
inline StudyConfig parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  check_keys(j, {"problem", "discretization", "modes", "grid", "tracking", "sweep", "observations", "output",
                 "workers", "seed"},
             "config");
  StudyConfig c;

  if (j.contains("problem")) {
    const json& p = j.at("problem");
    const std::string type = text(p, "type", "pillbox", "problem");
    if (type == "pillbox") {
      check_keys(p, {"type", "r_nominal", "length", "p_max", "distribution"}, "problem");
      c.problem = ProblemType::Pillbox;
      auto& pb = c.pillbox;
      pb.r_nominal = number(p, "r_nominal", pb.r_nominal, "problem", 1e-6, 1e3);
      pb.length = number(p, "length", pb.length, "problem", 1e-6, 1e3);
      pb.p_max = integer(p, "p_max", pb.p_max, "problem", 1, 20);
      pb.low = pb.high = pb.r_nominal;
      if (p.contains("distribution")) {
        const json& d = p.at("distribution");
        const std::string dt = text(d, "type", "uniform", "problem.distribution");
        if (dt == "uniform") {
          check_keys(d, {"type", "low", "high"}, "problem.distribution");
          pb.distribution = Distribution::Uniform;
          pb.low = number(d, "low", pb.r_nominal, "problem.distribution", 1e-6, 1e3);
          pb.high = number(d, "high", pb.r_nominal, "problem.distribution", 1e-6, 1e3);
          if (pb.high < pb.low) throw ConfigError("problem.distribution: high < low");
        } else if (dt == "normal") {
          check_keys(d, {"type", "mean", "sd"}, "problem.distribution");
          pb.distribution = Distribution::Normal;
          pb.r_nominal = number(d, "mean", pb.r_nominal, "problem.distribution", 1e-6, 1e3);
          pb.sd = number(d, "sd", 0.0, "problem.distribution", 0.0, 1e3);
        } else {
          throw ConfigError("problem.distribution.type: expected 'uniform' or 'normal'");
        }
      }
    } else if (type == "deformed_disk") {
      check_keys(p, {"type", "radius", "boundary", "criterion", "observations", "kl_model", "synthetic"}, "problem");
      c.problem = ProblemType::DeformedDisk;
      auto& dk = c.disk;
      dk.radius = number(p, "radius", dk.radius, "problem", 1e-6, 1e3);
      const std::string bc = text(p, "boundary", "dirichlet", "problem");
      if (bc == "dirichlet") {
        dk.boundary = BoundaryCondition::Dirichlet;
      } else if (bc == "neumann") {
        dk.boundary = BoundaryCondition::Neumann;
      } else {
        throw ConfigError("problem.boundary: expected 'dirichlet' or 'neumann'");
      }
      dk.criterion = number(p, "criterion", dk.criterion, "problem", 1e-9, 1.0);
      if (p.contains("observations")) dk.observations = resolve(base_dir, text(p, "observations", "", "problem"));
      if (p.contains("kl_model")) dk.kl_model = resolve(base_dir, text(p, "kl_model", "", "problem"));
      if (p.contains("synthetic")) {
        const json& s = p.at("synthetic");
        check_keys(s, {"spectrum", "scale", "samples"}, "problem.synthetic");
        if (s.contains("spectrum")) {
          dk.synthetic.spectrum.clear();
          if (!s.at("spectrum").is_array()) throw ConfigError("problem.synthetic.spectrum: expected an array");
          for (const auto& v : s.at("spectrum")) {
            if (!v.is_number() || !(v.get<double>() > 0.0))
              throw ConfigError("problem.synthetic.spectrum: entries must be positive numbers");
            dk.synthetic.spectrum.push_back(v.get<double>());
          }
        }
        dk.synthetic.scale = number(s, "scale", dk.synthetic.scale, "problem.synthetic", 0.0, 1e3);
        dk.synthetic.samples = integer(s, "samples", dk.synthetic.samples, "problem.synthetic", 2, 10000000);
      }
      if (dk.observations && dk.kl_model)
        throw ConfigError("problem: give at most one of 'observations' and 'kl_model'");
    } else {
      throw ConfigError("problem.type: expected 'pillbox' or 'deformed_disk'");
    }
  }

  if (j.contains("discretization")) {
    const json& d = j.at("discretization");
    check_keys(d, {"degree", "elements"}, "discretization");
    c.discretization.degree = integer(d, "degree", 2, "discretization", 1, 6);
    c.discretization.elements = integer(d, "elements", 16, "discretization", 1, 256);
  }
  c.modes = integer(j, "modes", c.modes, "config", 1, 500);

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    check_keys(g, {"kind", "family", "points", "level", "dimension"}, "grid");
    const std::string kind = text(g, "kind", "tensor", "grid");
    if (kind == "tensor") {
      c.grid.kind = GridKind::Tensor;
    } else if (kind == "smolyak") {
      c.grid.kind = GridKind::Smolyak;
    } else {
      throw ConfigError("grid.kind: expected 'tensor' or 'smolyak'");
    }
    try {
      c.grid.family = rule_family_from_string(text(g, "family", "clenshaw_curtis", "grid"));
    } catch (const DomainError& e) {
      throw ConfigError(std::string("grid.family: ") + e.what());
    }
    c.grid.points = integer(g, "points", c.grid.points, "grid", 1, 64);
    c.grid.level = integer(g, "level", c.grid.level, "grid", 0, 8);
    c.grid.dimension = integer(g, "dimension", c.grid.dimension, "grid", 1, 64);
  }

  if (j.contains("tracking")) {
    const json& t = j.at("tracking");
    check_keys(t, {"n1", "eta1", "n2", "eta2", "newton_tol", "newton_max_iter", "min_step", "initial_step",
                   "continuity_threshold", "degeneracy_gap"},
               "tracking");
    auto& tc = c.tracking;
    tc.n1 = integer(t, "n1", tc.n1, "tracking", 0, 100);
    tc.eta1 = number(t, "eta1", tc.eta1, "tracking", 1.0, 100.0);
    tc.n2 = integer(t, "n2", tc.n2, "tracking", 1, 100);
    tc.eta2 = number(t, "eta2", tc.eta2, "tracking", 0.0, 1.0);
    tc.newton_tol = number(t, "newton_tol", tc.newton_tol, "tracking", 1e-16, 1e-2);
    tc.newton_max_iter = integer(t, "newton_max_iter", tc.newton_max_iter, "tracking", 1, 1000);
    tc.min_step = number(t, "min_step", tc.min_step, "tracking", 1e-15, 1.0);
    tc.initial_step = number(t, "initial_step", tc.initial_step, "tracking", 1e-15, 1.0);
    tc.continuity_threshold = number(t, "continuity_threshold", tc.continuity_threshold, "tracking", 0.0, 1.0);
    tc.degeneracy_gap = number(t, "degeneracy_gap", tc.degeneracy_gap, "tracking", 0.0, 1.0);
  }
  c.tracking.validate();

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, {"r_start", "r_end", "samples", "path"}, "sweep");
    c.sweep.r_start = number(s, "r_start", c.sweep.r_start, "sweep", 1e-6, 1e3);
    c.sweep.r_end = number(s, "r_end", c.sweep.r_end, "sweep", 1e-6, 1e3);
    c.sweep.samples = integer(s, "samples", c.sweep.samples, "sweep", 1, 100000);
    const std::string path = text(s, "path", "algebraic", "sweep");
    if (path != "algebraic" && path != "physical") throw ConfigError("sweep.path: expected 'algebraic' or 'physical'");
    c.sweep.physical = path == "physical";
  }

  if (j.contains("observations")) {
    const json& o = j.at("observations");
    check_keys(o, {"path", "criterion"}, "observations");
    ObservationsSpec obs_spec;
    obs_spec.path = resolve(base_dir, get<std::string>(o, "path", "observations"));
    obs_spec.criterion = number(o, "criterion", 0.95, "observations", 1e-9, 1.0);
    c.observations = obs_spec;
  }

  c.output = text(j, "output", c.output.string(), "config");
  c.workers = integer(j, "workers", c.workers, "config", 1, 1024);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
      throw ConfigError("config.seed: expected a non-negative integer");
    if (j.at("seed").is_number_integer() && j.at("seed").get<long long>() < 0)
      throw ConfigError("config.seed: expected a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  return c;
}

inline StudyConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Worker pool

/// Runs task(i) for i in [0, count) on `workers` threads. Results must go to
/// preallocated slots; the first failing index (lowest) is rethrown.
template <class Task>
void parallel_for(int count, int workers, Task&& task) {
  if (count <= 0) return;
  const int nthreads = std::max(1, std::min(workers, count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        task(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  auto out = io::open_output(path);
  out << j.dump(2) << '\n';
}

struct NewtonStats {
  double mean = 0.0;
  int max = 0;
  int steps = 0;
};

inline NewtonStats newton_stats(const std::vector<const TrackState*>& states) {
  NewtonStats s;
  long total = 0;
  for (const auto* st : states)
    for (int v : st->newton_log) {
      total += v;
      s.max = std::max(s.max, v);
      ++s.steps;
    }
  s.mean = s.steps ? static_cast<double>(total) / s.steps : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Problem setup

/// Pencil family, spurious-mode filter and parameter mapping of a study.
struct Setup {
  ParametricPencil family;
  SpuriousPredicate spurious;
  Eigen::VectorXd base;           ///< base point delta_0 in physical parameters
  int parameter_dimension = 1;
  std::optional<KLModel> kl;
  std::optional<PillboxPencil> pillbox;
};

inline KLModel kl_for_disk(const DiskProblem& d, const GeometryMap& base, std::uint64_t seed) {
  const int n = 2 * static_cast<int>(greville_stations(base).size());
  if (d.kl_model) {
    std::ifstream in(*d.kl_model);
    if (!in) throw ConfigError("cannot read KL model " + d.kl_model->string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("KL model is not valid JSON: ") + e.what());
    }
    return io::kl_from_json(j);
  }
  ObservationMatrix obs;
  if (d.observations) {
    obs = io::read_observations(*d.observations);
  } else {
    if (static_cast<int>(d.synthetic.spectrum.size()) != n)
      throw ConfigError("problem.synthetic.spectrum: need " + std::to_string(n) + " entries (two per station)");
    Eigen::VectorXd values(n);
    for (int i = 0; i < n; ++i) values(i) = d.synthetic.spectrum[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd cov = correlated_covariance(values, seed) * (d.synthetic.scale * d.synthetic.scale);
    obs = generate_synthetic_observations(cov, Eigen::VectorXd::Zero(n), d.synthetic.samples, seed + 1);
  }
  if (obs.variables() != n)
    throw ConfigError("observations: need " + std::to_string(n) + " columns (two per station)");
  return fit_kl(obs, d.criterion);
}

inline Setup make_setup(const StudyConfig& c) {
  Setup s;
  if (c.problem == ProblemType::Pillbox) {
    auto pb = build_pillbox_pencil(c.pillbox.r_nominal, c.pillbox.length, c.pillbox.p_max,
                                   c.discretization.degree, c.discretization.elements);
    s.family = pb.pencil;
    s.spurious = pb.spurious;
    const double mid = c.pillbox.distribution == Distribution::Uniform ? 0.5 * (c.pillbox.low + c.pillbox.high)
                                                                        : c.pillbox.r_nominal;
    s.base = Eigen::VectorXd::Constant(1, mid);
    s.parameter_dimension = 1;
    s.pillbox = std::move(pb);
  } else {
    const GeometryMap base = build_disk_patch(c.disk.radius);
    KLModel kl = kl_for_disk(c.disk, base, c.seed);
    const auto model = deformation_from_kl(kl, base, greville_stations(base));
    s.family = build_deformed_pencil(model, c.discretization.degree, c.discretization.elements, c.disk.boundary);
    s.parameter_dimension = kl.truncation();
    s.base = Eigen::VectorXd::Zero(s.parameter_dimension);
    s.kl = std::move(kl);
    if (c.disk.boundary == BoundaryCondition::Neumann) {
      // constant mode of the pure Neumann problem
      s.spurious = [](const Eigenpair& ep) { return ep.lambda < 1e-8 * (1.0 + std::abs(ep.lambda)); };
    }
  }
  return s;
}

/// Collocation grid in the standard variables of the study and the map to
/// physical parameters.
struct StudyGrid {
  CollocationGrid grid;
  Eigen::MatrixXd physical;  ///< N_k x dim
};

inline StudyGrid make_grid(const StudyConfig& c, const Setup& s) {
  StudyGrid g;
  const int dim = s.parameter_dimension;
  Support support;
  bool normal = true;
  if (c.problem == ProblemType::Pillbox && c.pillbox.distribution == Distribution::Uniform) {
    support = {c.pillbox.low, c.pillbox.high};
    normal = false;
    if (c.grid.family == RuleFamily::GaussHermite)
      throw ConfigError("grid.family: gauss_hermite needs a normal distribution");
  } else if (c.grid.family != RuleFamily::GaussHermite) {
    throw ConfigError("grid.family: normal parameters need gauss_hermite");
  }
  if (c.grid.kind == GridKind::Tensor) {
    std::vector<Rule1D> rules(static_cast<std::size_t>(dim), rule_1d(c.grid.family, c.grid.points, support));
    g.grid = build_tensor_grid(rules);
  } else {
    g.grid = build_smolyak_grid(dim, c.grid.level, c.grid.family, support);
  }
  g.physical = g.grid.nodes;
  if (normal && c.problem == ProblemType::Pillbox)
    g.physical = (g.grid.nodes.array() * c.pillbox.sd + c.pillbox.r_nominal).matrix();
  return g;
}

inline SolveOptions solve_options(const StudyConfig& c, const Setup& s) {
  SolveOptions o;
  o.seed = c.seed;
  o.spurious = s.spurious;
  return o;
}

// ---------------------------------------------------------------------------
// uq

struct UqResult {
  StudyGrid grid;
  std::vector<Eigenpair> base_pairs;  ///< 2n buffer at the base point, ascending
  std::vector<std::vector<TrackState>> tracks;  ///< [k][j]
  ModeTable table;
  Moments moments;  ///< of the frequencies in Hz
  NewtonStats newton;
  long tracking_solves = 0;
  int base_solves = 0;
  int truncation = 0;
};

inline UqResult run_uq(const StudyConfig& c, const Setup& s) {
  UqResult r;
  r.grid = make_grid(c, s);
  r.truncation = s.parameter_dimension;
  const int n = c.modes;
  const auto p0 = s.family.at(s.base);
  const int buffer = static_cast<int>(std::min<Eigen::Index>(2 * n, p0->dimension()));
  auto base = solve_smallest(*p0, buffer, 0.0, solve_options(c, s));
  r.base_pairs = base.pairs;
  r.base_solves = base.stats.linear_solves;

  const int nk = r.grid.grid.size();
  std::vector<std::unique_ptr<HomotopyPencil>> homotopies(static_cast<std::size_t>(nk));
  parallel_for(nk, c.workers, [&](int k) {
    const Eigen::VectorXd target = r.grid.physical.row(k).transpose();
    homotopies[static_cast<std::size_t>(k)] = std::make_unique<HomotopyPencil>(s.family, s.base, target);
  });

  r.tracks.assign(static_cast<std::size_t>(nk), std::vector<TrackState>(static_cast<std::size_t>(n)));
  parallel_for(nk * n, c.workers, [&](int task) {
    const int k = task / n, j = task % n;
    const auto& h = *homotopies[static_cast<std::size_t>(k)];
    r.tracks[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] =
        track(h, prepare_start(h, r.base_pairs, j, c.tracking), c.tracking);
  });

  std::vector<Eigenpair> tracked_base(r.base_pairs.begin(), r.base_pairs.begin() + n);
  r.table = match_modes(tracked_base, r.tracks);
  std::vector<const TrackState*> all;
  for (const auto& row : r.tracks)
    for (const auto& t : row) {
      all.push_back(&t);
      r.tracking_solves += t.linear_solves;
    }
  r.newton = newton_stats(all);
  if (r.table.complete) r.moments = estimate_moments(r.table.frequencies(), r.grid.grid);
  return r;
}

inline void write_uq(const StudyConfig& c, const UqResult& r, const std::filesystem::path& dir) {
  if (r.table.complete) {
    auto out = io::open_output(dir / "moments.csv");
    io::CsvWriter w(out, {"mode", "base_f_Hz", "mean_f_Hz", "sd_f_Hz", "variance_f_Hz2"});
    for (std::size_t j = 0; j < r.moments.mean.size(); ++j)
      w.row({io::format_number(static_cast<double>(j + 1)),
             io::format_number(frequency_from_lambda(r.base_pairs[j].lambda)), io::format_number(r.moments.mean[j]),
             io::format_number(std::sqrt(std::max(r.moments.variance[j], 0.0))),
             io::format_number(r.moments.variance[j])});
  }
  {
    auto out = io::open_output(dir / "collocation_values.csv");
    std::vector<std::string> header{"node"};
    const bool pillbox = c.problem == ProblemType::Pillbox;
    for (int d = 0; d < r.grid.grid.dimension(); ++d)
      header.push_back(pillbox ? "r_m" : "delta_" + std::to_string(d + 1));
    header.emplace_back("weight");
    for (Eigen::Index j = 0; j < r.table.lambda.rows(); ++j) header.push_back("f" + std::to_string(j + 1) + "_Hz");
    io::CsvWriter w(out, header);
    const Eigen::MatrixXd f = r.table.frequencies();
    for (int k = 0; k < r.grid.grid.size(); ++k) {
      std::vector<double> row{static_cast<double>(k)};
      for (int d = 0; d < r.grid.grid.dimension(); ++d) row.push_back(r.grid.physical(k, d));
      row.push_back(r.grid.grid.weights[static_cast<std::size_t>(k)]);
      for (Eigen::Index j = 0; j < f.rows(); ++j) row.push_back(f(j, k));
      w.row(row);
    }
  }
  json modes = json::array();
  for (Eigen::Index j = 0; j < r.table.lambda.rows(); ++j) {
    std::vector<const TrackState*> states;
    for (const auto& row : r.tracks) states.push_back(&row[static_cast<std::size_t>(j)]);
    const auto ns = newton_stats(states);
    json m = {{"mode", j + 1},
              {"base_f_Hz", frequency_from_lambda(r.base_pairs[static_cast<std::size_t>(j)].lambda)},
              {"newton_mean", ns.mean},
              {"newton_max", ns.max}};
    if (r.table.complete) {
      m["mean_f_Hz"] = r.moments.mean[static_cast<std::size_t>(j)];
      m["sd_f_Hz"] = std::sqrt(std::max(r.moments.variance[static_cast<std::size_t>(j)], 0.0));
    }
    modes.push_back(m);
  }
  json summary = {{"command", "uq"},
                  {"timestamp", utc_timestamp()},
                  {"complete", r.table.complete},
                  {"parameters", r.truncation},
                  {"collocation_points", r.grid.grid.size()},
                  {"grid_kind", r.grid.grid.kind == GridKind::Tensor ? "tensor" : "smolyak"},
                  {"grid_family", to_string(r.grid.grid.family)},
                  {"newton_mean", r.newton.mean},
                  {"newton_max", r.newton.max},
                  {"accepted_steps", r.newton.steps},
                  {"base_linear_solves", r.base_solves},
                  {"tracking_linear_solves", r.tracking_solves},
                  {"modes", modes}};
  write_json(dir / "summary.json", summary);
}

// ---------------------------------------------------------------------------
// track (radius sweep)

struct TrajectoryRow {
  double s = 0.0;  ///< global sweep parameter in [0, 1]
  double r = 0.0;  ///< m
  double lambda = 0.0;
  double step = 0.0;
  int newton = 0;
};

struct SweepResult {
  std::vector<double> radii;
  std::vector<std::vector<TrajectoryRow>> trajectories;  ///< per mode
  std::vector<std::vector<double>> tracked;  ///< [sample][mode] lambda
  std::vector<std::vector<double>> discrete; ///< [sample][rank] lambda from direct solves
  std::vector<NewtonStats> newton;           ///< per mode
  bool success = true;
  std::string message;
  std::optional<double> crossing;  ///< first radius where tracked modes 1 and 2 exchange order
};

inline SweepResult run_sweep(const StudyConfig& c, const Setup& s) {
  if (!s.pillbox) throw ConfigError("track: the radius sweep needs a pillbox problem");
  SweepResult out;
  const auto& sw = c.sweep;
  const int samples = sw.r_start == sw.r_end ? 1 : std::max(2, sw.samples);
  for (int i = 0; i < samples; ++i)
    out.radii.push_back(samples == 1 ? sw.r_start
                                     : (i == samples - 1 ? sw.r_end
                                                         : sw.r_start + i * (sw.r_end - sw.r_start) / (samples - 1)));
  const int n = c.modes;
  const auto opt = solve_options(c, s);

  // independent solves at every sample radius
  out.discrete.assign(static_cast<std::size_t>(samples), {});
  parallel_for(samples, c.workers, [&](int i) {
    const auto res = solve_smallest(*s.family.at(out.radii[static_cast<std::size_t>(i)]), n, 0.0, opt);
    for (const auto& ep : res.pairs) out.discrete[static_cast<std::size_t>(i)].push_back(ep.lambda);
  });

  auto start = solve_smallest(*s.family.at(out.radii.front()), std::min<int>(2 * n, static_cast<int>(s.family.at(out.radii.front())->dimension())), 0.0, opt);
  std::vector<Eigenpair> current(start.pairs.begin(), start.pairs.begin() + n);
  out.trajectories.assign(static_cast<std::size_t>(n), {});
  std::vector<std::vector<int>> newton_logs(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    out.trajectories[static_cast<std::size_t>(j)].push_back({0.0, out.radii.front(), current[static_cast<std::size_t>(j)].lambda, 0.0, 0});
  out.tracked.push_back({});
  for (const auto& ep : current) out.tracked.back().push_back(ep.lambda);

  for (int seg = 0; seg + 1 < samples && out.success; ++seg) {
    const double ra = out.radii[static_cast<std::size_t>(seg)], rb = out.radii[static_cast<std::size_t>(seg + 1)];
    std::vector<TrackState> states(static_cast<std::size_t>(n));
    if (sw.physical) {
      const PhysicalPath path{s.family, ra, rb, 1e-6};
      parallel_for(n, c.workers, [&](int j) {
        states[static_cast<std::size_t>(j)] = track(path, prepare_start(path, current, j, c.tracking), c.tracking);
      });
    } else {
      const HomotopyPencil h(s.family, Eigen::VectorXd::Constant(1, ra), Eigen::VectorXd::Constant(1, rb));
      parallel_for(n, c.workers, [&](int j) {
        states[static_cast<std::size_t>(j)] = track(h, prepare_start(h, current, j, c.tracking), c.tracking);
      });
    }
    out.tracked.push_back({});
    for (int j = 0; j < n; ++j) {
      const auto& st = states[static_cast<std::size_t>(j)];
      for (std::size_t q = 1; q < st.trajectory.size(); ++q) {
        const auto& smp = st.trajectory[q];
        const double r = ra + smp.t * (rb - ra);
        out.trajectories[static_cast<std::size_t>(j)].push_back(
            {(seg + smp.t) / (samples - 1), r, smp.lambda, smp.step, smp.newton_iterations});
      }
      for (int v : st.newton_log) newton_logs[static_cast<std::size_t>(j)].push_back(v);
      if (!st.success) {
        out.success = false;
        out.message = "mode " + std::to_string(j + 1) + ": " + st.message;
      }
      current[static_cast<std::size_t>(j)] = st.pair;
      out.tracked.back().push_back(st.pair.lambda);
    }
  }

  for (int j = 0; j < n; ++j) {
    TrackState tmp;
    tmp.newton_log = newton_logs[static_cast<std::size_t>(j)];
    out.newton.push_back(newton_stats({&tmp}));
  }
  if (n >= 2) {
    for (std::size_t i = 0; i + 1 < out.tracked.size(); ++i) {
      const double d0 = out.tracked[i][0] - out.tracked[i][1];
      const double d1 = out.tracked[i + 1][0] - out.tracked[i + 1][1];
      if ((d0 < 0.0) != (d1 < 0.0)) {
        // zero of the interpolated frequency difference
        const double f0 = frequency_from_lambda(out.tracked[i][0]) - frequency_from_lambda(out.tracked[i][1]);
        const double f1 = frequency_from_lambda(out.tracked[i + 1][0]) - frequency_from_lambda(out.tracked[i + 1][1]);
        const double a = f0 / (f0 - f1);
        out.crossing = out.radii[i] + a * (out.radii[i + 1] - out.radii[i]);
        break;
      }
    }
  }
  return out;
}

inline void write_sweep(const StudyConfig& c, const SweepResult& r, const std::filesystem::path& dir) {
  const int n = static_cast<int>(r.trajectories.size());
  for (int j = 0; j < n; ++j) {
    std::ostringstream name;
    name << "tracked_mode_" << std::setw(2) << std::setfill('0') << j + 1 << ".csv";
    auto out = io::open_output(dir / name.str());
    io::CsvWriter w(out, {"t", "r_m", "lambda_1_per_m2", "f_Hz", "step", "newton_iters"});
    for (const auto& row : r.trajectories[static_cast<std::size_t>(j)])
      w.row({row.s, row.r, row.lambda, frequency_from_lambda(row.lambda), row.step, static_cast<double>(row.newton)});
  }
  {
    auto out = io::open_output(dir / "tracked.csv");
    std::vector<std::string> header{"r_m"};
    for (int j = 0; j < n; ++j) header.push_back("mode" + std::to_string(j + 1) + "_f_Hz");
    io::CsvWriter w(out, header);
    for (std::size_t i = 0; i < r.tracked.size(); ++i) {
      std::vector<double> row{r.radii[i]};
      for (double l : r.tracked[i]) row.push_back(frequency_from_lambda(l));
      row.resize(header.size(), std::nan(""));
      w.row(row);
    }
  }
  {
    auto out = io::open_output(dir / "discrete.csv");
    std::vector<std::string> header{"r_m"};
    for (int j = 0; j < n; ++j) header.push_back("rank" + std::to_string(j + 1) + "_f_Hz");
    io::CsvWriter w(out, header);
    for (std::size_t i = 0; i < r.discrete.size(); ++i) {
      std::vector<double> row{r.radii[i]};
      for (double l : r.discrete[i]) row.push_back(frequency_from_lambda(l));
      w.row(row);
    }
  }
  json modes = json::array();
  for (int j = 0; j < n; ++j)
    modes.push_back({{"mode", j + 1},
                     {"start_f_Hz", frequency_from_lambda(r.tracked.front()[static_cast<std::size_t>(j)])},
                     {"end_f_Hz", frequency_from_lambda(r.tracked.back()[static_cast<std::size_t>(j)])},
                     {"newton_mean", r.newton[static_cast<std::size_t>(j)].mean},
                     {"newton_max", r.newton[static_cast<std::size_t>(j)].max},
                     {"accepted_steps", r.newton[static_cast<std::size_t>(j)].steps}});
  json summary = {{"command", "track"},
                  {"timestamp", utc_timestamp()},
                  {"success", r.success},
                  {"samples", r.radii.size()},
                  {"path", c.sweep.physical ? "physical" : "algebraic"},
                  {"modes", modes}};
  if (!r.success) summary["message"] = r.message;
  if (r.crossing) summary["crossing_radius_m"] = *r.crossing;
  if (c.problem == ProblemType::Pillbox) summary["analytic_crossing_radius_m"] = crossing_radius(c.pillbox.length);
  write_json(dir / "summary.json", summary);
}

// ---------------------------------------------------------------------------
// bench

struct BenchResult {
  int modes = 0;
  int points = 0;
  long tracked_solves = 0;  ///< derivative and Newton solves over all tracks
  int base_solves = 0;      ///< start-point eigensolve of the tracked pipeline
  long direct_solves = 0;   ///< restarted eigensolves computing 2n modes at every point
  double tracked_seconds = 0.0;
  double direct_seconds = 0.0;

  [[nodiscard]] double tracked_per_pair() const {
    return static_cast<double>(tracked_solves) / (static_cast<double>(modes) * points);
  }
  [[nodiscard]] double tracked_per_pair_with_base() const {
    return static_cast<double>(tracked_solves + base_solves) / (static_cast<double>(modes) * points);
  }
  [[nodiscard]] double direct_per_pair() const {
    return static_cast<double>(direct_solves) / (static_cast<double>(modes) * points);
  }
};

inline BenchResult run_bench(const StudyConfig& c, const Setup& s) {
  BenchResult b;
  b.modes = c.modes;
  const auto t0 = std::chrono::steady_clock::now();
  const UqResult uq = run_uq(c, s);
  const auto t1 = std::chrono::steady_clock::now();
  b.points = uq.grid.grid.size();
  b.tracked_solves = uq.tracking_solves;
  b.base_solves = uq.base_solves;

  std::vector<int> counts(static_cast<std::size_t>(b.points), 0);
  auto opt = solve_options(c, s);
  opt.force_sparse = true;
  parallel_for(b.points, c.workers, [&](int k) {
    const auto p = s.family.at(Eigen::VectorXd(uq.grid.physical.row(k).transpose()));
    const int want = static_cast<int>(std::min<Eigen::Index>(2 * c.modes, p->dimension()));
    counts[static_cast<std::size_t>(k)] = solve_smallest(*p, want, 0.0, opt).stats.linear_solves;
  });
  const auto t2 = std::chrono::steady_clock::now();
  for (int v : counts) b.direct_solves += v;
  b.tracked_seconds = std::chrono::duration<double>(t1 - t0).count();
  b.direct_seconds = std::chrono::duration<double>(t2 - t1).count();
  return b;
}

inline void write_bench(const BenchResult& b, const std::filesystem::path& dir) {
  {
    auto out = io::open_output(dir / "bench.csv");
    io::CsvWriter w(out, {"approach", "linear_solves", "solves_per_mode_point", "wall_s"});
    w.row({"tracking", std::to_string(b.tracked_solves + b.base_solves),
           io::format_number(b.tracked_per_pair_with_base()), io::format_number(b.tracked_seconds)});
    w.row({"direct_2n", std::to_string(b.direct_solves), io::format_number(b.direct_per_pair()),
           io::format_number(b.direct_seconds)});
  }
  json j = {{"command", "bench"},
            {"timestamp", utc_timestamp()},
            {"modes", b.modes},
            {"collocation_points", b.points},
            {"tracking_solves", b.tracked_solves},
            {"tracking_base_solves", b.base_solves},
            {"tracking_solves_per_mode_point", b.tracked_per_pair()},
            {"tracking_solves_per_mode_point_with_base", b.tracked_per_pair_with_base()},
            {"direct_solves", b.direct_solves},
            {"direct_solves_per_mode_point", b.direct_per_pair()},
            {"solve_ratio_direct_over_tracking",
             b.tracked_solves + b.base_solves > 0
                 ? static_cast<double>(b.direct_solves) / static_cast<double>(b.tracked_solves + b.base_solves)
                 : 0.0},
            {"tracking_wall_s", b.tracked_seconds},
            {"direct_wall_s", b.direct_seconds}};
  write_json(dir / "summary.json", j);
}

// ---------------------------------------------------------------------------
// kl-fit, grid, pillbox-reference

inline KLModel run_kl_fit(const StudyConfig& c, const std::filesystem::path& dir) {
  if (!c.observations) throw ConfigError("kl-fit: config needs an 'observations' section");
  const ObservationMatrix obs = io::read_observations(c.observations->path);
  const KLModel kl = fit_kl(obs, c.observations->criterion);
  write_json(dir / "kl_model.json", io::kl_to_json(kl));
  auto out = io::open_output(dir / "spectrum.csv");
  io::CsvWriter w(out, {"index", "eigenvalue_m2", "fraction", "cumulative_fraction", "retained"});
  double cum = 0.0;
  for (Eigen::Index i = 0; i < kl.full_spectrum.size(); ++i) {
    cum += kl.full_spectrum(i);
    w.row({static_cast<double>(i + 1), kl.full_spectrum(i), kl.full_spectrum(i) / kl.total_variance,
           cum / kl.total_variance, i < kl.truncation() ? 1.0 : 0.0});
  }
  return kl;
}

inline CollocationGrid run_grid(const StudyConfig& c, const std::filesystem::path& dir) {
  Support support;
  if (c.problem == ProblemType::Pillbox && c.grid.family != RuleFamily::GaussHermite)
    support = {c.pillbox.low, c.pillbox.high};
  CollocationGrid g;
  if (c.grid.kind == GridKind::Tensor) {
    g = build_tensor_grid(std::vector<Rule1D>(static_cast<std::size_t>(c.grid.dimension),
                                              rule_1d(c.grid.family, c.grid.points, support)));
  } else {
    g = build_smolyak_grid(c.grid.dimension, c.grid.level, c.grid.family, support);
  }
  auto out = io::open_output(dir / "grid.csv");
  io::write_grid(out, g);
  return g;
}

inline std::vector<LabeledFrequency> run_pillbox_reference(const StudyConfig& c, const std::filesystem::path& dir) {
  const auto table = pillbox_frequencies(c.pillbox.r_nominal, c.pillbox.length, c.modes);
  auto out = io::open_output(dir / "reference.csv");
  io::CsvWriter w(out, {"label", "family", "m", "n", "p", "degeneracy", "f_Hz"});
  for (const auto& lf : table)
    w.row({lf.label.name(), to_string(lf.label.family), std::to_string(lf.label.m), std::to_string(lf.label.n),
           std::to_string(lf.label.p), std::to_string(lf.label.degeneracy), io::format_number(lf.frequency)});
  return table;
}

}  // namespace cavitrack::study
