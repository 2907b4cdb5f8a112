#pragma once

// Scenario configuration (JSON) and orchestration for the command-line runner.
//
// A config is one JSON object. Every object level rejects unknown keys, and every value is
// type- and range-checked before any computation starts. Results go to CSV files in the output
// directory; each CSV gets a sibling <name>.meta.json carrying the config hash.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rotor_engine/autonomous_engine.hpp"
#include "rotor_engine/classical_models.hpp"
#include "rotor_engine/driven_engine.hpp"
#include "rotor_engine/io.hpp"

#ifndef ROTOR_ENGINE_VERSION
#define ROTOR_ENGINE_VERSION "unknown"
#endif

namespace rotor::runner {

using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalError = 3, kIoError = 4 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Scenario { DrivenSweep, DrivenPhaseDiagram, AutonomousTransient, LoadSweep, ClassicalCompare };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::DrivenSweep: return "driven-sweep";
    case Scenario::DrivenPhaseDiagram: return "driven-phase-diagram";
    case Scenario::AutonomousTransient: return "autonomous-transient";
    case Scenario::LoadSweep: return "load-sweep";
    case Scenario::ClassicalCompare: return "classical-compare";
  }
  return "?";
}

// ---------------------------------------------------------------------------------------------
// Schema helpers

namespace detail_cfg {

/// Reads keys from one JSON object and remembers which ones were used.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  double number(const std::string& key, std::optional<double> def = std::nullopt) {
    used_.insert(key);
    if (!j_.contains(key)) return require_default(key, def);
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(where(key) + ": must be finite");
    return x;
  }

  double positive(const std::string& key, std::optional<double> def = std::nullopt) {
    const double x = number(key, def);
    if (!(x > 0.0)) throw ConfigError(where(key) + ": must be > 0");
    return x;
  }

  double non_negative(const std::string& key, std::optional<double> def = std::nullopt) {
    const double x = number(key, def);
    if (!(x >= 0.0)) throw ConfigError(where(key) + ": must be >= 0");
    return x;
  }

  long long integer(const std::string& key, std::optional<long long> def = std::nullopt) {
    used_.insert(key);
    if (!j_.contains(key)) {
      if (!def) throw ConfigError(where(key) + ": missing required key");
      return *def;
    }
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
    return v.get<long long>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::optional<std::uint64_t> def = std::nullopt) {
    used_.insert(key);
    if (!j_.contains(key)) {
      if (!def) throw ConfigError(where(key) + ": missing required key");
      return *def;
    }
    const json& v = j_.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
      throw ConfigError(where(key) + ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    used_.insert(key);
    if (!j_.contains(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> def = std::nullopt) {
    used_.insert(key);
    if (!j_.contains(key)) {
      if (!def) throw ConfigError(where(key) + ": missing required key");
      return *def;
    }
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    used_.insert(key);
    const json& v = j_.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(where(key) + ": expected a non-empty array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(where(key) + ": expected a non-empty array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  /// Sub-object; an absent key yields an empty object so defaults apply.
  Section child(const std::string& key) {
    used_.insert(key);
    static const json kEmpty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : kEmpty, where(key));
  }

  /// Throws for the first key that was never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown key");
    }
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  double require_default(const std::string& key, std::optional<double> def) const {
    if (!def) throw ConfigError(where(key) + ": missing required key");
    return *def;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> out;
  if (n == 1) return {lo};
  for (int k = 0; k < n; ++k) out.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / (n - 1)));
  return out;
}

/// Reads either an explicit list `<name>` or a log-spaced `<name>_min`, `<name>_max`, `points`.
inline std::vector<double> read_grid(Section& s, const std::string& name, double def_min, double def_max,
                                     int def_points) {
  std::vector<double> grid;
  if (s.has(name)) {
    grid = s.numbers(name);
  } else {
    const double lo = s.positive(name + "_min", def_min);
    const double hi = s.positive(name + "_max", def_max);
    const long long n = s.integer("points", def_points);
    if (n < 1 || n > 100000) throw ConfigError(s.where("points") + ": must be in [1, 100000]");
    if (hi < lo) throw ConfigError(s.where(name + "_max") + ": must be >= " + name + "_min");
    grid = log_grid(lo, hi, static_cast<int>(n));
  }
  for (double x : grid) {
    if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(s.where(name) + ": grid values must be > 0");
  }
  return grid;
}

}  // namespace detail_cfg

// ---------------------------------------------------------------------------------------------
// Parsed configuration

struct EngineConfig {
  double g = 10.0, kappa = 1.0, n_h = 1.0, n_c = 0.1;
};

struct RotorInit {
  bool excited = true;
  std::string kind = "momentum";  // "momentum" or "von-mises"
  int l = 0;
  double mu = kPi / 2.0;
  double sigma2 = 0.1;
};

struct QuantumConfig {
  double inertia = 10.0;
  int l_min = -40, l_max = 120;
  double t_end = 40.0, output_dt = 0.5;
  double rtol = 1e-8, atol = 1e-11;
  RotorInit init;
};

struct RunConfig {
  Scenario scenario = Scenario::DrivenSweep;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string output_dir = "results";
  EngineConfig engine;
  // driven
  std::vector<double> omegas;
  double phase_omega = 0.0;  // 0: quasi-static loop
  driven::LimitCycleOptions cycle;
  // autonomous / load
  QuantumConfig quantum;
  double kT_r = 1.0;
  std::vector<double> gammas;
  // classical
  std::size_t n_traj = 100000;
  double classical_t_end = 30.0, classical_output_dt = 0.5, classical_dt = 0.0;
  bool run_coin = true, run_magnet = true, run_quantum = false;
  classical::ClassicalInit classical_init;
  json effective;  // config after command-line overrides, used for the hash
};

namespace detail_cfg {

inline EngineConfig read_engine(Section s) {
  EngineConfig e;
  e.g = s.non_negative("g", e.g);
  e.kappa = s.positive("kappa", e.kappa);
  e.n_h = s.non_negative("n_h", e.n_h);
  e.n_c = s.non_negative("n_c", e.n_c);
  s.finish();
  return e;
}

inline QuantumConfig read_quantum(Section s) {
  QuantumConfig q;
  q.inertia = s.positive("inertia", q.inertia);
  q.l_min = static_cast<int>(s.integer("l_min", q.l_min));
  q.l_max = static_cast<int>(s.integer("l_max", q.l_max));
  if (!(q.l_min < 0 && q.l_max > 0)) throw ConfigError(s.where("l_min") + ": window must satisfy l_min < 0 < l_max");
  if (q.l_max - q.l_min > 2000) throw ConfigError(s.where("l_max") + ": window larger than 2001 states");
  q.t_end = s.positive("t_end", q.t_end);
  q.output_dt = s.positive("output_dt", q.output_dt);
  if (q.output_dt > q.t_end) throw ConfigError(s.where("output_dt") + ": must not exceed t_end");
  q.rtol = s.positive("rtol", q.rtol);
  q.atol = s.positive("atol", q.atol);
  Section init = s.child("initial");
  const std::string qubit = init.string("qubit", "excited");
  if (qubit != "excited" && qubit != "ground") throw ConfigError(init.where("qubit") + ": expected excited or ground");
  q.init.excited = qubit == "excited";
  q.init.kind = init.string("rotor", "momentum");
  if (q.init.kind == "momentum") {
    q.init.l = static_cast<int>(init.integer("l", 0));
    if (q.init.l < q.l_min || q.init.l > q.l_max) throw ConfigError(init.where("l") + ": outside the window");
  } else if (q.init.kind == "von-mises") {
    q.init.mu = init.number("mu", q.init.mu);
    q.init.sigma2 = init.positive("sigma2", q.init.sigma2);
  } else {
    throw ConfigError(init.where("rotor") + ": expected momentum or von-mises");
  }
  init.finish();
  s.finish();
  return q;
}

}  // namespace detail_cfg

/// Parses and validates a config. Command-line overrides are applied before validation.
inline RunConfig parse_config(json j, std::optional<std::uint64_t> seed_override = std::nullopt,
                              std::optional<unsigned> threads_override = std::nullopt,
                              std::optional<std::string> output_override = std::nullopt) {
  using detail_cfg::Section;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  if (seed_override) j["seed"] = *seed_override;
  if (threads_override) j["threads"] = *threads_override;
  if (output_override) j["output_dir"] = *output_override;

  RunConfig c;
  Section top(j, "");
  const std::string name = top.string("scenario");
  if (name == "driven-sweep") c.scenario = Scenario::DrivenSweep;
  else if (name == "driven-phase-diagram") c.scenario = Scenario::DrivenPhaseDiagram;
  else if (name == "autonomous-transient") c.scenario = Scenario::AutonomousTransient;
  else if (name == "load-sweep") c.scenario = Scenario::LoadSweep;
  else if (name == "classical-compare") c.scenario = Scenario::ClassicalCompare;
  else throw ConfigError("scenario: unknown scenario '" + name + "'");

  c.seed = top.unsigned_integer("seed", 1);
  const long long threads = top.integer("threads", 1);
  if (threads < 1 || threads > 1024) throw ConfigError("threads: must be in [1, 1024]");
  c.threads = static_cast<unsigned>(threads);
  c.output_dir = top.string("output_dir", "results");
  if (c.output_dir.empty()) throw ConfigError("output_dir: must not be empty");
  c.engine = detail_cfg::read_engine(top.child("engine"));

  auto read_cycle = [&](Section& s) {
    c.cycle.samples_per_cycle = static_cast<int>(s.integer("samples_per_cycle", 512));
    c.cycle.max_cycles = static_cast<int>(s.integer("max_cycles", 200));
    c.cycle.tolerance = s.positive("tolerance", 1e-8);
    if (c.cycle.samples_per_cycle < 16) throw ConfigError(s.where("samples_per_cycle") + ": must be >= 16");
    if (c.cycle.max_cycles < 2) throw ConfigError(s.where("max_cycles") + ": must be >= 2");
  };

  switch (c.scenario) {
    case Scenario::DrivenSweep: {
      Section s = top.child("driven");
      c.omegas = detail_cfg::read_grid(s, "omega", 0.01, 30.0, 31);
      read_cycle(s);
      s.finish();
      break;
    }
    case Scenario::DrivenPhaseDiagram: {
      Section s = top.child("driven");
      c.phase_omega = s.non_negative("omega", 0.0);
      read_cycle(s);
      s.finish();
      break;
    }
    case Scenario::AutonomousTransient:
      c.quantum = detail_cfg::read_quantum(top.child("rotor"));
      break;
    case Scenario::LoadSweep: {
      c.quantum = detail_cfg::read_quantum(top.child("rotor"));
      Section s = top.child("load");
      c.kT_r = s.positive("kT_r", 1.0);
      c.gammas = detail_cfg::read_grid(s, "gamma", 0.01, 100.0, 9);
      s.finish();
      break;
    }
    case Scenario::ClassicalCompare: {
      Section s = top.child("classical");
      const long long n = s.integer("n_traj", 100000);
      if (n < 1000) throw ConfigError(s.where("n_traj") + ": must be >= 1000");
      c.n_traj = static_cast<std::size_t>(n);
      c.classical_t_end = s.positive("t_end", 30.0);
      c.classical_output_dt = s.positive("output_dt", 0.5);
      c.classical_dt = s.non_negative("dt", 0.0);
      c.run_coin = s.boolean("coin", true);
      c.run_magnet = s.boolean("magnet", true);
      c.run_quantum = s.boolean("quantum", false);
      if (!c.run_coin && !c.run_magnet) throw ConfigError(s.where("coin") + ": enable at least one model");
      Section init = s.child("initial");
      c.classical_init.mu_phi = init.number("mu_phi", c.classical_init.mu_phi);
      c.classical_init.sigma2_phi = init.positive("sigma2_phi", c.classical_init.sigma2_phi);
      c.classical_init.mu_L = init.number("mu_L", c.classical_init.mu_L);
      c.classical_init.sigma2_L = init.positive("sigma2_L", c.classical_init.sigma2_L);
      const long long coin = init.integer("coin", 1);
      if (coin != 0 && coin != 1) throw ConfigError(init.where("coin") + ": must be 0 or 1");
      c.classical_init.coin = static_cast<int>(coin);
      c.classical_init.m_z = init.number("m_z", 0.5);
      if (std::abs(c.classical_init.m_z) > 0.5) throw ConfigError(init.where("m_z") + ": must lie in [-0.5, 0.5]");
      init.finish();
      s.finish();
      // The rotor section supplies the inertia for all models and the window for the quantum run.
      c.quantum = detail_cfg::read_quantum(top.child("rotor"));
      break;
    }
  }
  top.finish();

  // Cross-checks that need the library's own validation.
  try {
    if (c.scenario == Scenario::DrivenSweep || c.scenario == Scenario::DrivenPhaseDiagram) {
      driven::DrivenParams p{c.engine.g, c.engine.kappa, c.engine.n_h, c.engine.n_c, 1.0};
      p.validate();
    }
    if (c.scenario == Scenario::ClassicalCompare) {
      classical::ClassicalParams p;
      p.g = c.engine.g;
      p.kappa = c.engine.kappa;
      p.n_h = c.engine.n_h;
      p.n_c = c.engine.n_c;
      p.validate();
      const double bound = std::min(c.run_coin ? p.coin_dt_bound() : 1e300, c.run_magnet ? p.magnet_dt_bound() : 1e300);
      if (c.classical_dt > bound) {
        throw ConfigError(fmt::format("classical.dt: exceeds the step bound {:.6g}", bound));
      }
      if (c.classical_output_dt > c.classical_t_end) throw ConfigError("classical.output_dt: must not exceed t_end");
    }
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
  c.effective = j;
  return c;
}

inline json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io::IoError("cannot read config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config: JSON parse error: {}", e.what()));
  }
}

inline std::string config_hash(const json& effective) {
  return fmt::format("{:016x}", io::fnv1a(effective.dump()));
}

// ---------------------------------------------------------------------------------------------
// Scenario execution

struct RunOutcome {
  std::vector<std::filesystem::path> files;
  bool numerically_valid = true;
  std::string message;
};

namespace detail_run {

inline autonomous::AutonomousParams quantum_params(const RunConfig& c) {
  autonomous::AutonomousParams p;
  p.g = c.engine.g;
  p.kappa = c.engine.kappa;
  p.n_h = c.engine.n_h;
  p.n_c = c.engine.n_c;
  p.inertia = c.quantum.inertia;
  p.basis = RotorBasis(c.quantum.l_min, c.quantum.l_max);
  return p;
}

inline QubitDiagonalState initial_state(const RunConfig& c, const RotorBasis& basis) {
  const RotorInit& init = c.quantum.init;
  if (init.kind == "momentum") return autonomous::momentum_eigenstate(basis, init.l, init.excited);
  const VonMisesState vm = von_mises_state(init.mu, init.sigma2, basis);
  return autonomous::product_state(init.excited ? 1.0 : 0.0, vm.coefficients);
}

class Writer {
 public:
  Writer(const RunConfig& c, RunOutcome& out) : c_(c), out_(out), dir_(c.output_dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw io::IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  /// Writes <name>.meta.json next to the CSV.
  void metadata(const std::string& csv_name, json extra, double wall_seconds) {
    json m;
    m["config_hash"] = config_hash(c_.effective);
    m["code_version"] = ROTOR_ENGINE_VERSION;
    m["scenario"] = to_string(c_.scenario);
    m["seed"] = c_.seed;
    m["result_file"] = csv_name;
    m["wall_time_s"] = wall_seconds;
    m["config"] = c_.effective;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    const std::string stem = std::filesystem::path(csv_name).stem().string();
    const auto p = dir_ / (stem + ".meta.json");
    io::write_text(p, m.dump(2) + "\n");
    out_.files.push_back(dir_ / csv_name);
    out_.files.push_back(p);
  }

 private:
  const RunConfig& c_;
  RunOutcome& out_;
  std::filesystem::path dir_;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline json quantum_meta(const RunConfig& c) {
  return {{"truncation_window", {c.quantum.l_min, c.quantum.l_max}},
          {"inertia", c.quantum.inertia},
          {"solver", {{"method", "Dormand-Prince 5(4), interaction picture"},
                      {"rtol", c.quantum.rtol},
                      {"atol", c.quantum.atol},
                      {"output_dt", c.quantum.output_dt}}}};
}

}  // namespace detail_run

inline RunOutcome execute(const RunConfig& c) {
  using namespace detail_run;
  RunOutcome out;
  Writer w(c, out);
  const auto t0 = std::chrono::steady_clock::now();

  switch (c.scenario) {
    case Scenario::DrivenSweep: {
      driven::DrivenParams p{c.engine.g, c.engine.kappa, c.engine.n_h, c.engine.n_c, 1.0};
      const auto reports = driven::efficiency_sweep(p, c.omegas, c.cycle);
      const std::string name = "driven_sweep.csv";
      io::CsvWriter csv(w.path(name), {"omega_over_kappa", "W_cyc_over_hg", "Qh_cyc_over_hw0", "eta_normalized"});
      for (const auto& r : reports) csv.row({r.omega / c.engine.kappa, r.W_cyc, r.Q_h_cyc, r.eta_normalized});
      csv.close();
      json cycles = json::array();
      for (const auto& r : reports) cycles.push_back(r.cycles);
      w.metadata(name,
                 {{"limit_cycle", {{"samples_per_cycle", c.cycle.samples_per_cycle},
                                   {"max_cycles", c.cycle.max_cycles},
                                   {"tolerance", c.cycle.tolerance},
                                   {"cycles_used", cycles}}},
                  {"dt_max", p.max_step()}},
                 seconds_since(t0));
      break;
    }
    case Scenario::DrivenPhaseDiagram: {
      const std::string name = "phase_diagram.csv";
      io::CsvWriter csv(w.path(name), {"phi", "x_over_x0", "F_x0_over_hg"});
      json extra;
      if (c.phase_omega > 0.0) {
        driven::DrivenParams p{c.engine.g, c.engine.kappa, c.engine.n_h, c.engine.n_c, c.phase_omega};
        const auto cyc = driven::limit_cycle(p, c.cycle);
        for (std::size_t k = 0; k < cyc.p_e.size(); ++k) csv.row({cyc.phase[k], std::cos(cyc.phase[k]), cyc.p_e[k]});
        extra = {{"omega", c.phase_omega}, {"cycles_used", cyc.cycles}, {"tolerance", c.cycle.tolerance},
                 {"W_cyc_over_hg", cyc.W_cyc}, {"dt_max", p.max_step()}};
      } else {
        const int n = c.cycle.samples_per_cycle;
        for (int k = 0; k < n; ++k) {
          const double phi = kTwoPi * k / n;
          csv.row({phi, std::cos(phi), driven::pe_quasistatic(phi, c.engine.n_h, c.engine.n_c)});
        }
        extra = {{"omega", 0.0}, {"quasi_static", true}};
      }
      csv.close();
      w.metadata(name, extra, seconds_since(t0));
      break;
    }
    case Scenario::AutonomousTransient: {
      const autonomous::AutonomousModel model(quantum_params(c));
      autonomous::EvolveOptions opt;
      opt.t_end = c.quantum.t_end;
      opt.output_dt = c.quantum.output_dt;
      opt.rtol = c.quantum.rtol;
      opt.atol = c.quantum.atol;
      const auto res = autonomous::evolve(model, initial_state(c, model.basis()).to_density(), opt);
      const std::string name = "timeline.csv";
      io::emit_timeline(res.timeline, w.path(name));
      json extra = quantum_meta(c);
      extra["finite_difference_dt"] = res.timeline.fd_dt;
      extra["truncation_valid"] = res.timeline.truncation_valid;
      extra["max_edge_population"] = res.timeline.max_edge_pop;
      extra["max_trace_error"] = res.timeline.max_trace_err;
      extra["steps_accepted"] = res.timeline.stats.accepted;
      extra["steps_rejected"] = res.timeline.stats.rejected;
      w.metadata(name, extra, seconds_since(t0));
      if (!res.timeline.truncation_valid) {
        out.numerically_valid = false;
        out.message = fmt::format("edge population {:.3g} exceeded 1e-6: truncation window too small",
                                  res.timeline.max_edge_pop);
      }
      break;
    }
    case Scenario::LoadSweep: {
      autonomous::AutonomousParams p = quantum_params(c);
      p.kT_r = c.kT_r;
      const std::string name = "load_sweep.csv";
      io::CsvWriter csv(w.path(name), {"gamma_over_kappa", "W_int", "W_load", "Q_BA", "W_erg", "mean_L_hbar",
                                       "std_L_hbar", "residual", "edge_pop"});
      json residuals = json::array();
      double worst_edge = 0.0;
      for (double gamma : c.gammas) {
        p.gamma = gamma;
        const autonomous::AutonomousModel model(p);
        const auto ss = autonomous::steady_state(model);
        const auto& r = ss.report;
        csv.row({gamma / c.engine.kappa, r.W_int, r.W_load, r.Q_BA, r.W_erg, r.mean_L, r.std_L, ss.residual, r.edge_pop});
        residuals.push_back(ss.residual);
        worst_edge = std::max(worst_edge, r.edge_pop);
      }
      csv.close();
      json extra = quantum_meta(c);
      extra["kT_r"] = c.kT_r;
      extra["steady_state"] = {{"method", "sparse LU (COLAMD) on the vectorized block generator"},
                               {"residual_max_norm", residuals}};
      extra["max_edge_population"] = worst_edge;
      w.metadata(name, extra, seconds_since(t0));
      if (worst_edge >= 1e-6) {
        out.numerically_valid = false;
        out.message = fmt::format("steady-state edge population {:.3g} exceeded 1e-6", worst_edge);
      }
      break;
    }
    case Scenario::ClassicalCompare: {
      classical::ClassicalParams p;
      p.g = c.engine.g;
      p.kappa = c.engine.kappa;
      p.n_h = c.engine.n_h;
      p.n_c = c.engine.n_c;
      p.inertia = c.quantum.inertia;
      // Common step for both models so the grids coincide.
      double dt = c.classical_dt;
      if (dt == 0.0) {
        dt = std::min(c.run_coin ? p.coin_dt_bound() : 1e300, c.run_magnet ? p.magnet_dt_bound() : 1e300);
      }
      const auto grid = classical::make_grid(c.classical_t_end, c.classical_output_dt, dt);
      classical::EnsembleOptions eo;
      eo.n_traj = c.n_traj;
      eo.t_grid = grid;
      eo.dt = dt;
      eo.seed = c.seed;
      eo.threads = c.threads;
      std::vector<std::string> header = {"t_kappa"};
      std::vector<std::vector<double>> cols = {grid};
      json extra = {{"n_traj", c.n_traj}, {"dt", dt}, {"rng", "Philox4x32-10, stream = trajectory index"}};
      auto add = [&](const std::string& prefix, const classical::EnsembleStats& s, const std::string& spin) {
        for (const auto& [suffix, v] : std::vector<std::pair<std::string, const std::vector<double>*>>{
                 {"mean_L", &s.mean_L}, {"se_mean_L", &s.se_mean_L}, {"var_L", &s.var_L},
                 {"se_var_L", &s.se_var_L}, {spin, &s.mean_spin}}) {
          header.push_back(prefix + "_" + suffix);
          cols.push_back(*v);
        }
      };
      if (c.run_coin) add("coin", classical::run_ensemble(classical::ClassicalModel::Coin, p, c.classical_init, eo), "mean_C");
      if (c.run_magnet) {
        const auto s = classical::run_ensemble(classical::ClassicalModel::Magnet, p, c.classical_init, eo);
        add("magnet", s, "mean_mz");
        extra["magnet_clamp_fraction"] = s.clamp_fraction;
      }
      if (c.run_quantum) {
        const autonomous::AutonomousModel model(quantum_params(c));
        autonomous::EvolveOptions opt;
        opt.t_end = c.classical_t_end;
        opt.output_dt = c.classical_output_dt;
        opt.rtol = c.quantum.rtol;
        opt.atol = c.quantum.atol;
        opt.diagnostics = false;
        const auto res = autonomous::evolve(model, initial_state(c, model.basis()).to_density(), opt);
        std::vector<double> mean, var;
        // The quantum grid is uniform in output_dt; sample it at the classical grid times.
        for (double t : grid) {
          const std::size_t k = static_cast<std::size_t>(std::llround(t / c.classical_output_dt));
          const auto& r = res.timeline.rows.at(std::min(k, res.timeline.rows.size() - 1));
          mean.push_back(r.mean_L);
          var.push_back(r.std_L * r.std_L);
        }
        header.push_back("quantum_mean_L");
        cols.push_back(mean);
        header.push_back("quantum_var_L");
        cols.push_back(var);
        extra.update(quantum_meta(c));
        extra["quantum_truncation_valid"] = res.timeline.truncation_valid;
        if (!res.timeline.truncation_valid) {
          out.numerically_valid = false;
          out.message = "quantum reference run: edge population exceeded 1e-6";
        }
      }
      const std::string name = "classical_compare.csv";
      io::CsvWriter csv(w.path(name), header);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        std::vector<double> row;
        for (const auto& col : cols) row.push_back(col[k]);
        csv.row(row);
      }
      csv.close();
      w.metadata(name, extra, seconds_since(t0));
      break;
    }
  }
  return out;
}

}  // namespace rotor::runner
