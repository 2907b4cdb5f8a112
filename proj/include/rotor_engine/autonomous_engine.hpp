#pragma once

// Autonomous qubit-rotor piston engine.
//
// The composite master equation (rotating frame, hbar = 1)
//   d rho/dt = -i [g cos(phi) Pi_e + L^2 / 2I, rho]
//              + sum_j kappa (n_j + 1) D[f_j(phi) sigma_-] rho + kappa n_j D[f_j(phi) sigma_+] rho
//              + L_r rho                                      (optional dissipative load)
// never couples the <g|.|e> blocks of a qubit-diagonal state, so the default layout stores
// rho as the two rotor blocks (rho_gg, rho_ee). The kinetic term L^2 / 2I is diagonal and is
// integrated exactly in the interaction picture; everything else is applied matrix-free with
// banded sparse operators.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "rotor_engine/block_lindbladian.hpp"
#include "rotor_engine/common.hpp"
#include "rotor_engine/density_matrix.hpp"
#include "rotor_engine/ode.hpp"
#include "rotor_engine/operator_algebra.hpp"

namespace rotor::autonomous {

struct AutonomousParams {
  double g = 10.0;
  double kappa = 1.0;
  double n_h = 1.0;
  double n_c = 0.1;
  double inertia = 10.0;  // units hbar / kappa
  double gamma = 0.0;     // load damping rate
  double kT_r = 1.0;      // load temperature, units hbar kappa (= 10 hbar^2 / I at I kappa = 10 hbar)
  RotorBasis basis{-40, 120};
  CouplingFunctions coupling = CouplingFunctions::piston();

  void validate() const {
    detail::require(inertia > 0.0, "AutonomousParams: inertia must be > 0");
    detail::require(gamma >= 0.0, "AutonomousParams: gamma must be >= 0");
    detail::require(gamma == 0.0 || kT_r > 0.0, "AutonomousParams: kT_r must be > 0 when gamma > 0");
    detail::require(kappa >= 0.0, "AutonomousParams: kappa must be >= 0");
    detail::require(n_h >= 0.0 && n_c >= 0.0, "AutonomousParams: occupations must be >= 0");
    detail::require(g >= 0.0, "AutonomousParams: g must be >= 0");
  }
};

/// Which terms of the generator to include.
struct GeneratorParts {
  bool kinetic = true;      // L^2 / 2I
  bool interaction = true;  // g cos(phi) Pi_e
  bool hot = true;
  bool cold = true;
  bool load = true;

  static GeneratorParts all() { return {}; }
  static GeneratorParts none() { return {false, false, false, false, false}; }
  static GeneratorParts hot_only() { return {false, false, true, false, false}; }
  static GeneratorParts cold_only() { return {false, false, false, true, false}; }
  static GeneratorParts load_only() { return {false, false, false, false, true}; }
  static GeneratorParts baths() { return {false, false, true, true, false}; }
  static GeneratorParts engine() { return {true, true, true, true, false}; }
};

enum class Layout {
  Blocks,  // two D x D rotor blocks (rho_gg, rho_ee)
  Full,    // one 2D x 2D block
};

enum class Bath { Hot, Cold };

/// Parameters plus every rotor operator the observables need, built once.
class AutonomousModel {
 public:
  explicit AutonomousModel(AutonomousParams p) : p_(std::move(p)), ops_((p_.validate(), p_.basis)) {
    const RotorOperators& o = ops_;
    kinetic_ = o.l.array().square() / (2.0 * p_.inertia);
    f_h_ = p_.coupling.hot.op(o);
    f_c_ = p_.coupling.cold.op(o);
    df_h_sq_ = p_.coupling.hot.derivative_op(o) * p_.coupling.hot.derivative_op(o);
    df_c_sq_ = p_.coupling.cold.derivative_op(o) * p_.coupling.cold.derivative_op(o);
    f_h_sq_ = f_h_ * f_h_;
    f_c_sq_ = f_c_ * f_c_;
    l_sin_ = o.L * o.sin_phi;
    sin_l_ = o.sin_phi * o.L;
    if (p_.gamma > 0.0) {
      const double beta = 1.0 / (4.0 * p_.kT_r * p_.inertia);
      load_rate_ = 2.0 * p_.kT_r * p_.inertia * p_.gamma;
      // Operator products exactly as written: sin(phi) L and cos(phi) L.
      load_a_ = o.cos_phi - cplx(0.0, beta) * SparseMatrixXc(o.sin_phi * o.L);
      load_b_ = o.sin_phi + cplx(0.0, beta) * SparseMatrixXc(o.cos_phi * o.L);
      load_a_.prune(cplx(0.0, 0.0));
      load_b_.prune(cplx(0.0, 0.0));
    }
  }

  const AutonomousParams& params() const { return p_; }
  const RotorBasis& basis() const { return p_.basis; }
  const RotorOperators& ops() const { return ops_; }
  Index rotor_dim() const { return ops_.dim(); }

  /// Kinetic energies l^2 / 2I in basis order.
  const Eigen::VectorXd& kinetic_energies() const { return kinetic_; }
  const SparseMatrixXc& f_op(Bath b) const { return b == Bath::Hot ? f_h_ : f_c_; }
  const SparseMatrixXc& f_sq_op(Bath b) const { return b == Bath::Hot ? f_h_sq_ : f_c_sq_; }
  const SparseMatrixXc& df_sq_op(Bath b) const { return b == Bath::Hot ? df_h_sq_ : df_c_sq_; }
  double occupation(Bath b) const { return b == Bath::Hot ? p_.n_h : p_.n_c; }
  const SparseMatrixXc& l_sin() const { return l_sin_; }
  const SparseMatrixXc& sin_l() const { return sin_l_; }
  const SparseMatrixXc& load_op_a() const { return load_a_; }
  const SparseMatrixXc& load_op_b() const { return load_b_; }
  double load_rate() const { return load_rate_; }

  BlockLindbladian generator(GeneratorParts parts = GeneratorParts::all(),
                             Layout layout = Layout::Blocks) const {
    return layout == Layout::Blocks ? block_generator(parts) : full_generator(parts);
  }

 private:
  BlockLindbladian block_generator(GeneratorParts parts) const {
    const Index d = rotor_dim();
    BlockLindbladian gen({d, d});
    constexpr int g = 0, e = 1;
    if (parts.kinetic) {
      gen.set_free_energy(g, kinetic_);
      gen.set_free_energy(e, kinetic_);
    }
    if (parts.interaction && p_.g != 0.0) gen.add_hamiltonian(e, p_.g * ops_.cos_phi);
    for (Bath b : {Bath::Hot, Bath::Cold}) {
      if ((b == Bath::Hot && !parts.hot) || (b == Bath::Cold && !parts.cold)) continue;
      const double n = occupation(b);
      gen.add_jump(e, g, p_.kappa * (n + 1.0), f_op(b));  // f sigma_-
      gen.add_jump(g, e, p_.kappa * n, f_op(b));          // f sigma_+
    }
    if (parts.load && p_.gamma > 0.0) {
      for (int blk : {g, e}) {
        gen.add_jump(blk, blk, load_rate_, load_a_);
        gen.add_jump(blk, blk, load_rate_, load_b_);
      }
    }
    return gen;
  }

  BlockLindbladian full_generator(GeneratorParts parts) const {
    const Index d = rotor_dim();
    BlockLindbladian gen({2 * d});
    const QubitOperators q;
    auto sp = [](const MatrixXc& m) { return SparseMatrixXc(m.sparseView()); };
    if (parts.kinetic) {
      Eigen::VectorXd e(2 * d);
      e << kinetic_, kinetic_;
      gen.set_free_energy(0, e);
    }
    if (parts.interaction && p_.g != 0.0) {
      gen.add_hamiltonian(0, kron(sp(q.proj_e), SparseMatrixXc(p_.g * ops_.cos_phi)));
    }
    for (Bath b : {Bath::Hot, Bath::Cold}) {
      if ((b == Bath::Hot && !parts.hot) || (b == Bath::Cold && !parts.cold)) continue;
      const double n = occupation(b);
      gen.add_jump(0, 0, p_.kappa * (n + 1.0), kron(sp(q.sigma_minus), f_op(b)));
      gen.add_jump(0, 0, p_.kappa * n, kron(sp(q.sigma_plus), f_op(b)));
    }
    if (parts.load && p_.gamma > 0.0) {
      gen.add_jump(0, 0, load_rate_, kron(sp(q.identity), load_a_));
      gen.add_jump(0, 0, load_rate_, kron(sp(q.identity), load_b_));
    }
    return gen;
  }

  AutonomousParams p_;
  RotorOperators ops_;
  Eigen::VectorXd kinetic_;
  SparseMatrixXc f_h_, f_c_, f_h_sq_, f_c_sq_, df_h_sq_, df_c_sq_, l_sin_, sin_l_;
  SparseMatrixXc load_a_, load_b_;
  double load_rate_ = 0.0;
};

/// Block-layout generator of the engine, with or without the dissipative load.
inline BlockLindbladian build_generator(const AutonomousModel& model, bool include_load) {
  GeneratorParts parts = GeneratorParts::all();
  parts.load = include_load;
  return model.generator(parts, Layout::Blocks);
}

// ---------------------------------------------------------------------------------------------
// State conversions

inline VectorXc pack(const QubitDiagonalState& s) {
  const Index n = s.gg.size();
  VectorXc v(2 * n);
  v.head(n) = Eigen::Map<const VectorXc>(s.gg.data(), n);
  v.tail(n) = Eigen::Map<const VectorXc>(s.ee.data(), n);
  return v;
}

inline QubitDiagonalState unpack(const VectorXc& v, Index d) {
  const Index n = d * d;
  return {Eigen::Map<const MatrixXc>(v.data(), d, d), Eigen::Map<const MatrixXc>(v.data() + n, d, d)};
}

/// rho_0 = |q><q| (x) |l><l|.
inline QubitDiagonalState momentum_eigenstate(const RotorBasis& basis, int l, bool excited) {
  const Index d = basis.dim();
  QubitDiagonalState s{MatrixXc::Zero(d, d), MatrixXc::Zero(d, d)};
  const Index i = basis.index_of(l);
  (excited ? s.ee : s.gg)(i, i) = 1.0;
  return s;
}

/// rho_0 = (qubit populations) (x) |psi><psi|.
inline QubitDiagonalState product_state(double p_excited, const VectorXc& rotor_wavefunction) {
  const MatrixXc r = rotor_wavefunction * rotor_wavefunction.adjoint();
  return {(1.0 - p_excited) * r, p_excited * r};
}

// ---------------------------------------------------------------------------------------------
// Observables

/// tr(A X) for sparse A and dense X.
inline cplx trace_product(const SparseMatrixXc& a, const MatrixXc& x) {
  cplx acc = 0.0;
  for (Index k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrixXc::InnerIterator it(a, k); it; ++it) acc += it.value() * x(it.col(), it.row());
  }
  return acc;
}

inline double weighted_diagonal(const Eigen::VectorXd& w, const MatrixXc& x) {
  return (w.array() * x.diagonal().real().array()).sum();
}

inline double mean_L(const AutonomousModel& m, const QubitDiagonalState& s) {
  return weighted_diagonal(m.ops().l, s.gg) + weighted_diagonal(m.ops().l, s.ee);
}

inline double mean_L2(const AutonomousModel& m, const QubitDiagonalState& s) {
  const Eigen::VectorXd l2 = m.ops().l.array().square();
  return weighted_diagonal(l2, s.gg) + weighted_diagonal(l2, s.ee);
}

/// Population in the `width` outermost momentum states at each end of the window.
inline double edge_population(const QubitDiagonalState& s, int width = 5) {
  const Index d = s.rotor_dim();
  const Index w = std::min<Index>(width, d / 2);
  const Eigen::VectorXd p = (s.gg.diagonal() + s.ee.diagonal()).real();
  return p.head(w).sum() + p.tail(w).sum();
}

/// Backaction heating (hbar^2 kappa / 2I) sum_j tr{(n_j + Pi_e) f_j'(phi)^2 rho} >= 0.
///
/// The prefactor follows from the double commutator -[f, [f, L^2]] / 2 = hbar^2 f'^2 and
/// matches tr{(L^2/2I)(L_h + L_c) rho} evaluated directly.
inline double backaction_heating(const AutonomousModel& m, const QubitDiagonalState& s) {
  const AutonomousParams& p = m.params();
  double acc = 0.0;
  for (Bath b : {Bath::Hot, Bath::Cold}) {
    const SparseMatrixXc& df2 = m.df_sq_op(b);
    if (df2.nonZeros() == 0) continue;
    acc += m.occupation(b) * trace_product(df2, s.gg).real() +
           (m.occupation(b) + 1.0) * trace_product(df2, s.ee).real();
  }
  return p.kappa / (2.0 * p.inertia) * acc;
}

/// tr{(L^2/2I) L_parts rho} by direct generator application.
inline double kinetic_energy_rate(const AutonomousModel& m, const QubitDiagonalState& s,
                                  GeneratorParts parts) {
  parts.kinetic = false;  // commutes with L^2
  const BlockLindbladian gen = m.generator(parts, Layout::Blocks);
  VectorXc out;
  gen.apply(pack(s), out, false, true);
  const QubitDiagonalState d = unpack(out, m.rotor_dim());
  return weighted_diagonal(m.kinetic_energies(), d.gg) + weighted_diagonal(m.kinetic_energies(), d.ee);
}

inline double backaction_heating_direct(const AutonomousModel& m, const QubitDiagonalState& s) {
  return kinetic_energy_rate(m, s, GeneratorParts::baths());
}

/// W_int = -tr{rho {L, d_phi H_int}} / 2I with d_phi H_int = -g sin(phi) Pi_e.
inline double intrinsic_power(const AutonomousModel& m, const QubitDiagonalState& s) {
  const AutonomousParams& p = m.params();
  const cplx anti = trace_product(m.l_sin(), s.ee) + trace_product(m.sin_l(), s.ee);
  return p.g * anti.real() / (2.0 * p.inertia);
}

/// Rate of change of <L^2>/2I from the unloaded engine generator (torque plus baths).
inline double kinetic_power(const AutonomousModel& m, const QubitDiagonalState& s) {
  GeneratorParts parts = GeneratorParts::engine();
  return kinetic_energy_rate(m, s, parts);
}

/// Mean torque g <sin(phi) Pi_e>; equals d<L>/dt without load (the bath terms drop out).
inline double torque(const AutonomousModel& m, const QubitDiagonalState& s) {
  return m.params().g * trace_product(m.ops().sin_phi, s.ee).real();
}

/// W_net = <L/I> <g sin(phi) Pi_e>.
inline double net_power(const AutonomousModel& m, const QubitDiagonalState& s) {
  const AutonomousParams& p = m.params();
  const double torque = p.g * trace_product(m.ops().sin_phi, s.ee).real();
  return mean_L(m, s) / p.inertia * torque;
}

/// Ergotropy of a rotor state with respect to the diagonal Hamiltonian `energies`.
///
/// Eigenvalues sorted descending are paired with energies sorted ascending; ties between
/// degenerate levels are broken by basis order, which does not change the value.
inline double ergotropy(const MatrixXc& rho_r, const Eigen::VectorXd& energies) {
  detail::require(rho_r.rows() == energies.size(), "ergotropy: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<MatrixXc> es(rho_r, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceError("ergotropy: eigensolver failed");
  std::vector<double> pops(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(pops.begin(), pops.end(), std::greater<>());
  std::vector<Index> order(static_cast<std::size_t>(energies.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return energies[a] < energies[b]; });
  double passive = 0.0;
  for (std::size_t k = 0; k < pops.size(); ++k) passive += pops[k] * energies[order[k]];
  const double mean = (energies.array() * rho_r.diagonal().real().array()).sum();
  return std::max(0.0, mean - passive);
}

inline double ergotropy(const AutonomousModel& m, const QubitDiagonalState& s) {
  return ergotropy(s.rotor_state(), m.kinetic_energies());
}

/// Population flux tr{Pi_e L_j rho}; the heat current is hbar omega_0 times this.
inline double bath_excitation_flux(const AutonomousModel& m, const QubitDiagonalState& s, Bath b) {
  const double n = m.occupation(b);
  const SparseMatrixXc& f2 = m.f_sq_op(b);
  return m.params().kappa *
         (n * trace_product(f2, s.gg).real() - (n + 1.0) * trace_product(f2, s.ee).real());
}

/// Von Neumann entropy -tr rho ln rho; eigenvalues below 1e-14 are dropped.
inline double von_neumann_entropy(const QubitDiagonalState& s) {
  double acc = 0.0;
  for (const MatrixXc* blk : {&s.gg, &s.ee}) {
    Eigen::SelfAdjointEigenSolver<MatrixXc> es(*blk, Eigen::EigenvaluesOnly);
    for (Index i = 0; i < es.eigenvalues().size(); ++i) {
      const double lam = es.eigenvalues()[i];
      if (lam > 1e-14) acc -= lam * std::log(lam);
    }
  }
  return acc;
}

struct BathEntropyRates {
  double hot = 0.0;
  double cold = 0.0;
  bool valid = true;  // false if heat flows into a zero-temperature bath's system side
};

/// Entropy flow Q_j / k_B T_j = ln(1 + 1/n_j) tr{Pi_e L_j rho}; omega_0 cancels.
inline BathEntropyRates bath_entropy_rates(const AutonomousModel& m, const QubitDiagonalState& s) {
  BathEntropyRates r;
  for (Bath b : {Bath::Hot, Bath::Cold}) {
    const double n = m.occupation(b);
    const double q = bath_excitation_flux(m, s, b);
    double rate = 0.0;
    if (n > 0.0) {
      rate = std::log1p(1.0 / n) * q;
    } else if (q > 0.0) {
      rate = std::numeric_limits<double>::quiet_NaN();
      r.valid = false;
    }
    (b == Bath::Hot ? r.hot : r.cold) = rate;
  }
  return r;
}

/// W_load = -tr{[L^2/2I + H_int] L_r rho}.
inline double load_power(const AutonomousModel& m, const QubitDiagonalState& s) {
  if (m.params().gamma == 0.0) return 0.0;
  const BlockLindbladian gen = m.generator(GeneratorParts::load_only(), Layout::Blocks);
  VectorXc out;
  gen.apply(pack(s), out, false, true);
  const QubitDiagonalState d = unpack(out, m.rotor_dim());
  const double kin = weighted_diagonal(m.kinetic_energies(), d.gg) +
                     weighted_diagonal(m.kinetic_energies(), d.ee);
  const double hint = m.params().g * trace_product(m.ops().cos_phi, d.ee).real();
  return -(kin + hint);
}

/// One row of the observable timeline (all powers in hbar kappa^2, entropy rates in k_B kappa).
struct PowerReport {
  double t = 0.0;
  double mean_L = 0.0;
  double std_L = 0.0;
  double W_int = 0.0;
  double W_kin = 0.0;
  double W_net = 0.0;
  double Q_BA = 0.0;
  double W_erg = 0.0;
  double W_erg_rate = 0.0;
  double W_load = 0.0;
  double S_sys = 0.0;
  double S_sys_rate = 0.0;
  double S_h_rate = 0.0;
  double S_c_rate = 0.0;
  double S_net_rate = 0.0;
  double trace_err = 0.0;
  double edge_pop = 0.0;
  double torque = 0.0;
};

/// Instantaneous observables; the finite-difference rates are left at zero.
inline PowerReport instantaneous_report(const AutonomousModel& m, const QubitDiagonalState& s,
                                        bool with_entropy = true, bool with_ergotropy = true) {
  PowerReport r;
  r.mean_L = mean_L(m, s);
  r.std_L = std::sqrt(std::max(0.0, mean_L2(m, s) - r.mean_L * r.mean_L));
  r.W_int = intrinsic_power(m, s);
  r.W_kin = kinetic_power(m, s);
  r.W_net = net_power(m, s);
  r.Q_BA = backaction_heating(m, s);
  r.W_load = load_power(m, s);
  if (with_ergotropy) r.W_erg = ergotropy(m, s);
  if (with_entropy) r.S_sys = von_neumann_entropy(s);
  const BathEntropyRates bath = bath_entropy_rates(m, s);
  r.S_h_rate = bath.hot;
  r.S_c_rate = bath.cold;
  r.S_net_rate = r.S_sys_rate - r.S_h_rate - r.S_c_rate;
  r.trace_err = std::abs(s.trace() - 1.0);
  r.edge_pop = edge_population(s);
  r.torque = torque(m, s);
  return r;
}

// ---------------------------------------------------------------------------------------------
// Time evolution

struct EvolveOptions {
  double t_end = 40.0;
  double output_dt = 0.5;
  double rtol = 1e-8;
  double atol = 1e-11;
  bool diagnostics = true;   // entropy and ergotropy (with finite-difference rates)
  double fd_dt = 1e-3;       // centered-difference half width is min(fd_dt, output_dt)
  double edge_limit = 1e-6;
  int edge_width = 5;
  int positivity_samples = 10;
  Layout layout = Layout::Blocks;
  bool stop_on_truncation = false;
};

struct ObservableTimeline {
  std::vector<PowerReport> rows;
  bool truncation_valid = true;
  double max_trace_err = 0.0;
  double max_edge_pop = 0.0;
  double min_sampled_eigenvalue = 0.0;
  double max_hermiticity_err = 0.0;
  double max_coherence = 0.0;  // <g|.|e> block norm (full layout only)
  double fd_dt = 0.0;
  ode::Stats stats;
};

struct EvolveResult {
  ObservableTimeline timeline;
  QubitDiagonalState final_state;
};

/// Propagates the engine state in the interaction picture of L^2/2I.
class Propagator {
 public:
  Propagator(const AutonomousModel& model, GeneratorParts parts, Layout layout, double rtol,
             double atol)
      : model_(model), layout_(layout), gen_(model.generator(parts, layout)), rtol_(rtol), atol_(atol) {}

  const BlockLindbladian& generator() const { return gen_; }

  VectorXc to_vector(const QubitDiagonalState& s) const {
    if (layout_ == Layout::Blocks) return pack(s);
    const DensityMatrix full = s.to_density();
    return Eigen::Map<const VectorXc>(full.matrix().data(), full.matrix().size());
  }

  VectorXc to_vector(const DensityMatrix& rho) const {
    if (layout_ == Layout::Blocks) return pack(QubitDiagonalState::from_density(rho));
    return Eigen::Map<const VectorXc>(rho.matrix().data(), rho.matrix().size());
  }

  /// Schroedinger-picture density matrix from the interaction-picture vector at time t.
  DensityMatrix to_density(VectorXc v, double t) const {
    gen_.rotate(v, t, +1);
    const Index d = model_.rotor_dim();
    if (layout_ == Layout::Blocks) return unpack(v, d).to_density();
    return {Eigen::Map<const MatrixXc>(v.data(), 2 * d, 2 * d), d};
  }

  QubitDiagonalState to_blocks(VectorXc v, double t) const {
    gen_.rotate(v, t, +1);
    const Index d = model_.rotor_dim();
    if (layout_ == Layout::Blocks) return unpack(v, d);
    const Eigen::Map<const MatrixXc> full(v.data(), 2 * d, 2 * d);
    return {full.topLeftCorner(d, d), full.bottomRightCorner(d, d)};
  }

  double coherence_norm(const VectorXc& v) const {
    if (layout_ == Layout::Blocks) return 0.0;
    const Index d = model_.rotor_dim();
    const Eigen::Map<const MatrixXc> full(v.data(), 2 * d, 2 * d);
    return full.topRightCorner(d, d).norm();
  }

  /// Interaction-picture vector for a Schroedinger state given at time t.
  VectorXc from_schroedinger(VectorXc v, double t) const {
    gen_.rotate(v, t, -1);
    return v;
  }

  ode::DormandPrince<VectorXc> make_solver() const {
    ode::Options o;
    o.rtol = rtol_;
    o.atol = atol_;
    return ode::DormandPrince<VectorXc>(
        [this](double t, const VectorXc& y, VectorXc& dy) { gen_.apply_interaction(t, y, dy); }, o);
  }

 private:
  const AutonomousModel& model_;
  Layout layout_;
  BlockLindbladian gen_;
  double rtol_, atol_;
};

inline EvolveResult evolve(const AutonomousModel& model, const DensityMatrix& rho0,
                           const EvolveOptions& opt = {}) {
  detail::require(rho0.rotor_dim() == model.rotor_dim(), "evolve: state dimension does not match basis");
  detail::require(rho0.trace_error() <= 1e-9, "evolve: initial state trace differs from 1");
  detail::require(rho0.hermiticity_error() <= 1e-10, "evolve: initial state is not Hermitian");
  detail::require(opt.t_end > 0.0 && opt.output_dt > 0.0, "evolve: t_end and output_dt must be > 0");

  const Propagator prop(model, GeneratorParts::all(), opt.layout, opt.rtol, opt.atol);
  auto solver = prop.make_solver();
  VectorXc y = prop.to_vector(rho0);  // interaction picture coincides with Schroedinger at t = 0

  const int n_out = static_cast<int>(std::llround(opt.t_end / opt.output_dt));
  const double fd = std::min(opt.fd_dt, opt.output_dt);
  const int sample_every = std::max(1, n_out / std::max(1, opt.positivity_samples - 1));

  EvolveResult res;
  ObservableTimeline& tl = res.timeline;
  tl.fd_dt = fd;
  tl.min_sampled_eigenvalue = std::numeric_limits<double>::infinity();

  auto shifted = [&](const VectorXc& base, double t, double dt) {
    auto aux = prop.make_solver();
    VectorXc v = base;
    double tt = t;
    aux.advance(tt, v, t + dt);
    return prop.to_blocks(std::move(v), t + dt);
  };

  double t = 0.0;
  for (int k = 0; k <= n_out; ++k) {
    const double target = std::min(opt.t_end, k * opt.output_dt);
    solver.advance(t, y, target);
    const QubitDiagonalState s = prop.to_blocks(y, t);
    PowerReport r = instantaneous_report(model, s, opt.diagnostics, opt.diagnostics);
    r.t = t;
    r.edge_pop = edge_population(s, opt.edge_width);
    if (opt.diagnostics) {
      const QubitDiagonalState plus = shifted(y, t, fd);
      if (k == 0) {
        r.S_sys_rate = (von_neumann_entropy(plus) - r.S_sys) / fd;
        r.W_erg_rate = (ergotropy(model, plus) - r.W_erg) / fd;
      } else {
        const QubitDiagonalState minus = shifted(y, t, -fd);
        r.S_sys_rate = (von_neumann_entropy(plus) - von_neumann_entropy(minus)) / (2.0 * fd);
        r.W_erg_rate = (ergotropy(model, plus) - ergotropy(model, minus)) / (2.0 * fd);
      }
      r.S_net_rate = r.S_sys_rate - r.S_h_rate - r.S_c_rate;
    }
    tl.max_trace_err = std::max(tl.max_trace_err, r.trace_err);
    tl.max_edge_pop = std::max(tl.max_edge_pop, r.edge_pop);
    tl.max_hermiticity_err = std::max(tl.max_hermiticity_err, s.hermiticity_error());
    tl.max_coherence = std::max(tl.max_coherence, prop.coherence_norm(y));
    if (k % sample_every == 0 || k == n_out) {
      const double lam = opt.layout == Layout::Full ? prop.to_density(y, t).min_eigenvalue()
                                                    : s.min_eigenvalue();
      tl.min_sampled_eigenvalue = std::min(tl.min_sampled_eigenvalue, lam);
    }
    tl.rows.push_back(r);
    if (r.edge_pop >= opt.edge_limit) {
      tl.truncation_valid = false;
      if (opt.stop_on_truncation) {
        throw TruncationError("evolve: edge population " + std::to_string(r.edge_pop) +
                              " exceeds limit at t=" + std::to_string(t));
      }
    }
    if (k == n_out) res.final_state = s;
  }
  tl.stats = solver.stats();
  return res;
}

// ---------------------------------------------------------------------------------------------
// Steady state with a dissipative load

enum class SteadyStateMethod { Auto, Direct, Propagate };

struct SteadyStateOptions {
  SteadyStateMethod method = SteadyStateMethod::Auto;
  double drift_tol = 1e-4;     // relative drift of every report scalar over one window
  double window = 10.0;        // units 1/kappa
  double max_time = 5000.0;
  double rtol = 1e-8;
  double atol = 1e-11;
  double edge_limit = 1e-6;
};

struct SteadyStateResult {
  QubitDiagonalState state;
  PowerReport report;
  SteadyStateMethod method_used = SteadyStateMethod::Direct;
  double residual = 0.0;  // max-norm of the generator applied to the state
  double elapsed_time = 0.0;  // propagation time (Propagate only)
  bool truncation_valid = true;
};

namespace detail_ss {

inline QubitDiagonalState direct_solve(const AutonomousModel& m) {
  const BlockLindbladian gen = m.generator(GeneratorParts::all(), Layout::Blocks);
  const SparseMatrixXc a = gen.assemble(true);
  const Index n = gen.size();
  const Index d = m.rotor_dim();
  // Replace the equation for rho_gg(0,0) by the trace condition.
  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(static_cast<std::size_t>(a.nonZeros()) + static_cast<std::size_t>(2 * d));
  for (Index k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrixXc::InnerIterator it(a, k); it; ++it) {
      if (it.row() != 0) trip.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (int b = 0; b < 2; ++b) {
    for (Index i = 0; i < d; ++i) trip.emplace_back(0, gen.block_offset(b) + i + i * d, 1.0);
  }
  SparseMatrixXc sys(n, n);
  sys.setFromTriplets(trip.begin(), trip.end());
  sys.makeCompressed();
  Eigen::SparseLU<SparseMatrixXc, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(sys);
  lu.factorize(sys);
  if (lu.info() != Eigen::Success) throw ConvergenceError("steady_state: sparse LU factorization failed");
  VectorXc rhs = VectorXc::Zero(n);
  rhs[0] = 1.0;
  const VectorXc x = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw ConvergenceError("steady_state: sparse LU solve failed");
  QubitDiagonalState s = unpack(x, d);
  s.gg = 0.5 * (s.gg + s.gg.adjoint()).eval();
  s.ee = 0.5 * (s.ee + s.ee.adjoint()).eval();
  return s;
}

inline bool drift_converged(const PowerReport& a, const PowerReport& b, double tol) {
  const double pairs[][2] = {{a.mean_L, b.mean_L}, {a.std_L, b.std_L}, {a.W_int, b.W_int},
                             {a.W_kin, b.W_kin},   {a.W_net, b.W_net}, {a.Q_BA, b.Q_BA},
                             {a.W_load, b.W_load}, {a.S_h_rate, b.S_h_rate}, {a.S_c_rate, b.S_c_rate}};
  for (const auto& p : pairs) {
    const double scale = std::max({std::abs(p[0]), std::abs(p[1]), 1e-6});
    if (std::abs(p[0] - p[1]) > tol * scale) return false;
  }
  return true;
}

}  // namespace detail_ss

/// Steady state of the loaded engine. Auto uses a sparse direct solve of the vectorized
/// block generator (the loaded generator is stiff for large gamma); Propagate integrates from
/// a cold-thermal qubit (x) |l=0> until every report scalar drifts less than drift_tol over a
/// window.
inline SteadyStateResult steady_state(const AutonomousModel& model, SteadyStateOptions opt = {}) {
  detail::require(model.params().gamma > 0.0, "steady_state: requires gamma > 0");
  SteadyStateResult res;
  const BlockLindbladian gen = model.generator(GeneratorParts::all(), Layout::Blocks);
  if (opt.method == SteadyStateMethod::Propagate) {
    res.method_used = SteadyStateMethod::Propagate;
    const double pc = model.params().n_c / (2.0 * model.params().n_c + 1.0);
    QubitDiagonalState s0 = momentum_eigenstate(model.basis(), 0, false);
    s0.ee = pc * s0.gg;
    s0.gg *= (1.0 - pc);
    const Propagator prop(model, GeneratorParts::all(), Layout::Blocks, opt.rtol, opt.atol);
    auto solver = prop.make_solver();
    VectorXc y = pack(s0);
    double t = 0.0;
    PowerReport prev = instantaneous_report(model, s0, false, false);
    bool done = false;
    while (t < opt.max_time) {
      solver.advance(t, y, t + opt.window);
      const QubitDiagonalState s = prop.to_blocks(y, t);
      const PowerReport cur = instantaneous_report(model, s, false, false);
      if (detail_ss::drift_converged(prev, cur, opt.drift_tol)) {
        res.state = s;
        done = true;
        break;
      }
      prev = cur;
    }
    if (!done) throw ConvergenceError("steady_state: drift criterion not met before max_time");
    res.elapsed_time = t;
  } else {
    res.method_used = SteadyStateMethod::Direct;
    res.state = detail_ss::direct_solve(model);
  }
  VectorXc out;
  gen.apply(pack(res.state), out, true, true);
  res.residual = out.cwiseAbs().maxCoeff();
  res.report = instantaneous_report(model, res.state, true, true);
  res.report.t = res.elapsed_time;
  res.truncation_valid = res.report.edge_pop < opt.edge_limit;
  return res;
}

}  // namespace rotor::autonomous
