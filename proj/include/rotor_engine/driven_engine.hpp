#pragma once

// Externally clocked single-qubit piston engine.
//
// The qubit populations obey
//   dp_e/dt = kappa * sum_j f_j^2(omega t) [ n_j (1 - p_e) - (n_j + 1) p_e ],
// and the coherence <g|rho|e> rotates at the modulation g cos(omega t) in the frame
// rotating at omega_0 while decaying at half the total jump rate. omega_0 never enters
// the populations, so energies are reported in units of hbar*g (work) and hbar*omega_0
// (heat), and efficiency as eta * omega_0 / g.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "rotor_engine/common.hpp"
#include "rotor_engine/ode.hpp"
#include "rotor_engine/operator_algebra.hpp"

namespace rotor::driven {

struct DrivenParams {
  double g = 10.0;
  double kappa = 1.0;
  double n_h = 1.0;
  double n_c = 0.1;
  double omega = 1.0;
  CouplingFunctions coupling = CouplingFunctions::piston();

  void validate() const {
    // g = 0 and n_h = n_c are admitted as degenerate reference cases (no work output).
    detail::require(g >= 0.0, "DrivenParams: g must be >= 0");
    detail::require(kappa > 0.0, "DrivenParams: kappa must be > 0");
    detail::require(omega > 0.0, "DrivenParams: omega must be > 0");
    detail::require(n_c >= 0.0 && n_h >= n_c, "DrivenParams: need n_h >= n_c >= 0");
  }

  /// Largest admissible integrator step.
  double max_step() const { return 0.01 / std::max(kappa * (2.0 * n_h + 2.0), omega); }
};

struct QubitState {
  double p_e = 0.0;
  cplx coherence{0.0, 0.0};  // <g|rho|e>

  void validate() const {
    detail::require(p_e >= 0.0 && p_e <= 1.0, "QubitState: p_e outside [0, 1]");
    detail::require(std::norm(coherence) <= p_e * (1.0 - p_e) + 1e-12,
                    "QubitState: coherence violates positivity");
  }
};

inline double thermal_excitation(double n) { return n / (2.0 * n + 1.0); }

/// Quasi-static excitation probability of the qubit at clock angle phi.
inline double pe_quasistatic(double phi, double n_h, double n_c,
                             const CouplingFunctions& f = CouplingFunctions::piston()) {
  detail::require(n_h >= 0.0 && n_c >= 0.0, "pe_quasistatic: occupations must be >= 0");
  const double fh2 = std::pow(f.hot.value(phi), 2);
  const double fc2 = std::pow(f.cold.value(phi), 2);
  return (n_h * fh2 + n_c * fc2) / ((2.0 * n_h + 1.0) * fh2 + (2.0 * n_c + 1.0) * fc2);
}

namespace detail_quad {
template <typename F>
double integrate_period(F&& f) {
  constexpr double kTol = 1e-6;
  double err = 0.0;
  // Relative tolerance chosen so that the absolute error stays below kTol for O(1) integrals.
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, 0.0, kTwoPi, 15, kTol * 1e-3, &err);
  if (err > kTol) throw ConvergenceError("quadrature: error estimate above 1e-6");
  return value;
}
}  // namespace detail_quad

/// Quasi-static work per cycle in units of hbar*g: integral of p_e(phi) sin(phi).
inline double work_per_cycle_qst(double n_h, double n_c,
                                 const CouplingFunctions& f = CouplingFunctions::piston()) {
  return detail_quad::integrate_period(
      [&](double phi) { return pe_quasistatic(phi, n_h, n_c, f) * std::sin(phi); });
}

/// Dimensionless heat integral of f_h^2 (p_h - p_e); the caller applies
/// hbar*omega_0 (2 n_h + 1) kappa / omega.
inline double heat_per_cycle_qst(double n_h, double n_c,
                                 const CouplingFunctions& f = CouplingFunctions::piston()) {
  const double p_h = thermal_excitation(n_h);
  return detail_quad::integrate_period([&](double phi) {
    return std::pow(f.hot.value(phi), 2) * (p_h - pe_quasistatic(phi, n_h, n_c, f));
  });
}

/// Instantaneous population flux into |e> from bath j at angle phi.
inline double bath_flux(double kappa, double n, double f, double p_e) {
  return kappa * f * f * (n * (1.0 - p_e) - (n + 1.0) * p_e);
}

struct DrivenTimeline {
  std::vector<double> t;
  std::vector<double> p_e;
  std::vector<cplx> coherence;
};

namespace detail_me {
using State = Eigen::Vector2cd;  // (p_e, coherence)

inline auto make_rhs(const DrivenParams& p) {
  return [p](double t, const State& y, State& dy) {
    const double phi = p.omega * t;
    const double fh = p.coupling.hot.value(phi);
    const double fc = p.coupling.cold.value(phi);
    const double pe = y[0].real();
    dy[0] = bath_flux(p.kappa, p.n_h, fh, pe) + bath_flux(p.kappa, p.n_c, fc, pe);
    const double decay =
        0.5 * p.kappa * (fh * fh * (2.0 * p.n_h + 1.0) + fc * fc * (2.0 * p.n_c + 1.0));
    dy[1] = (kI * p.g * std::cos(phi) - decay) * y[1];
  };
}

inline ode::Options options(double dt_max) {
  ode::Options o;
  o.rtol = 1e-9;
  o.atol = 1e-13;
  o.h_max = dt_max;
  return o;
}
}  // namespace detail_me

/// Integrates the clocked master equation over [t0, t1] and samples at n_out + 1
/// equally spaced times (including both ends).
inline DrivenTimeline integrate_driven_me(const DrivenParams& params, const QubitState& rho0,
                                          double t0, double t1, double dt_max, int n_out = 100) {
  params.validate();
  rho0.validate();
  detail::require(t1 > t0, "integrate_driven_me: empty time span");
  detail::require(n_out >= 1, "integrate_driven_me: need at least one output interval");
  detail::require(dt_max > 0.0 && dt_max <= params.max_step() * (1.0 + 1e-12),
                  "integrate_driven_me: dt_max exceeds 0.01/max(kappa(2n_h+2), omega)");
  ode::DormandPrince<detail_me::State> solver(detail_me::make_rhs(params),
                                              detail_me::options(dt_max));
  detail_me::State y(cplx(rho0.p_e, 0.0), rho0.coherence);
  DrivenTimeline out;
  double t = t0;
  for (int k = 0; k <= n_out; ++k) {
    const double target = t0 + (t1 - t0) * k / n_out;
    solver.advance(t, y, target);
    out.t.push_back(t);
    out.p_e.push_back(y[0].real());
    out.coherence.push_back(y[1]);
  }
  return out;
}

struct CycleReport {
  double omega = 0.0;
  double W_cyc = 0.0;           // hbar g
  double Q_h_cyc = 0.0;         // hbar omega_0
  double Q_c_cyc = 0.0;         // hbar omega_0
  double Q_h_int_cyc = 0.0;     // hbar g, H_int part of the exact heat definition
  double Q_c_int_cyc = 0.0;     // hbar g
  double eta_normalized = 0.0;  // eta * omega_0 / g
  double delta_E_bare = 0.0;    // hbar omega_0: Q_h + Q_c over one cycle
  double delta_E_int = 0.0;     // hbar g: Q_h_int + Q_c_int - W
  int cycles = 0;
  double max_coherence = 0.0;
  std::vector<double> phase;    // phi_k = 2 pi k / N over one cycle
  std::vector<double> p_e;      // p_e at phi_k on the limit cycle
};

struct LimitCycleOptions {
  int samples_per_cycle = 512;
  int max_cycles = 200;
  double tolerance = 1e-8;
};

/// Propagates cycle by cycle until the phase-resolved p_e of two successive cycles agree
/// in sup-norm, then evaluates the per-cycle work/heat integrals with the periodic
/// trapezoid rule on the final cycle.
inline CycleReport limit_cycle(const DrivenParams& params, LimitCycleOptions opt = {},
                               QubitState start = {-1.0, {}}) {
  params.validate();
  detail::require(opt.samples_per_cycle >= 16, "limit_cycle: need >= 16 samples per cycle");
  detail::require(opt.max_cycles >= 2, "limit_cycle: need at least two cycles");
  const int n = opt.samples_per_cycle;
  const double period = kTwoPi / params.omega;
  if (start.p_e < 0.0) start.p_e = pe_quasistatic(0.0, params.n_h, params.n_c, params.coupling);
  start.validate();

  ode::DormandPrince<detail_me::State> solver(detail_me::make_rhs(params),
                                              detail_me::options(params.max_step()));
  detail_me::State y(cplx(start.p_e, 0.0), start.coherence);
  std::vector<double> prev(static_cast<std::size_t>(n), -1.0), curr(static_cast<std::size_t>(n));
  double t = 0.0;
  double max_coh = std::abs(start.coherence);
  int cycle = 0;
  bool converged = false;
  while (cycle < opt.max_cycles) {
    const double base = cycle * period;
    for (int k = 0; k < n; ++k) {
      solver.advance(t, y, base + period * k / n);
      curr[static_cast<std::size_t>(k)] = y[0].real();
      max_coh = std::max(max_coh, std::abs(y[1]));
    }
    solver.advance(t, y, base + period);
    ++cycle;
    double diff = 0.0;
    for (int k = 0; k < n; ++k) {
      diff = std::max(diff, std::abs(curr[static_cast<std::size_t>(k)] - prev[static_cast<std::size_t>(k)]));
    }
    prev.swap(curr);
    if (diff < opt.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw ConvergenceError("limit_cycle: no convergence after " + std::to_string(opt.max_cycles) +
                           " cycles at omega=" + std::to_string(params.omega));
  }

  CycleReport r;
  r.omega = params.omega;
  r.cycles = cycle;
  r.max_coherence = max_coh;
  r.phase.resize(static_cast<std::size_t>(n));
  r.p_e = prev;
  const double dphi = kTwoPi / n;
  const double dt = period / n;
  for (int k = 0; k < n; ++k) {
    const double phi = dphi * k;
    const double pe = prev[static_cast<std::size_t>(k)];
    r.phase[static_cast<std::size_t>(k)] = phi;
    const double jh = bath_flux(params.kappa, params.n_h, params.coupling.hot.value(phi), pe);
    const double jc = bath_flux(params.kappa, params.n_c, params.coupling.cold.value(phi), pe);
    // dW/dt = -tr{rho dH_int/dt} = hbar g omega sin(omega t) p_e.
    r.W_cyc += params.omega * std::sin(phi) * pe * dt;
    r.Q_h_cyc += jh * dt;
    r.Q_c_cyc += jc * dt;
    r.Q_h_int_cyc += std::cos(phi) * jh * dt;
    r.Q_c_int_cyc += std::cos(phi) * jc * dt;
  }
  r.eta_normalized = r.W_cyc / r.Q_h_cyc;
  r.delta_E_bare = r.Q_h_cyc + r.Q_c_cyc;
  r.delta_E_int = r.Q_h_int_cyc + r.Q_c_int_cyc - r.W_cyc;
  return r;
}

/// Efficiency/work/heat over a list of clock frequencies. Each point is independent.
inline std::vector<CycleReport> efficiency_sweep(DrivenParams params,
                                                 const std::vector<double>& omegas,
                                                 LimitCycleOptions opt = {}) {
  std::vector<CycleReport> out;
  out.reserve(omegas.size());
  for (double w : omegas) {
    params.omega = w;
    CycleReport r = limit_cycle(params, opt);
    r.phase.clear();
    r.p_e.clear();
    out.push_back(std::move(r));
  }
  return out;
}

struct PhasePoint {
  double x;  // x / x_0 = cos(phi)
  double F;  // F x_0 / (hbar g) = p_e(phi)
};

inline std::vector<PhasePoint> phase_diagram(const CycleReport& cycle) {
  detail::require(!cycle.p_e.empty(), "phase_diagram: cycle report carries no phase samples");
  std::vector<PhasePoint> out;
  out.reserve(cycle.p_e.size());
  for (std::size_t k = 0; k < cycle.p_e.size(); ++k) {
    out.push_back({std::cos(cycle.phase[k]), cycle.p_e[k]});
  }
  return out;
}

inline std::vector<PhasePoint> phase_diagram(const DrivenParams& params,
                                             LimitCycleOptions opt = {}) {
  return phase_diagram(limit_cycle(params, opt));
}

/// Signed shoelace area of the closed curve (counter-clockwise positive). For the piston
/// cycle this equals the work per cycle in units of hbar*g.
inline double enclosed_area(const std::vector<PhasePoint>& curve) {
  double a = 0.0;
  const std::size_t n = curve.size();
  for (std::size_t k = 0; k < n; ++k) {
    const PhasePoint& p = curve[k];
    const PhasePoint& q = curve[(k + 1) % n];
    a += p.x * q.F - q.x * p.F;
  }
  return 0.5 * a;
}

}  // namespace rotor::driven
