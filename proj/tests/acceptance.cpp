// Acceptance run: prints one PASS/FAIL line per criterion (plus measured values and wall time)
// and exits non-zero if any criterion fails.
//
//   rotor_engine_acceptance            all criteria
//   rotor_engine_acceptance 1 8 10     a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "rotor_engine/autonomous_engine.hpp"
#include "rotor_engine/classical_models.hpp"
#include "rotor_engine/driven_engine.hpp"

using namespace rotor;
namespace au = rotor::autonomous;
namespace cl = rotor::classical;

namespace {

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back((ok ? "" : "[x] ") + what);
  }
};

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared desk-window transient: |e> x |l = 0>, l in [-40, 120], g = 10, I = 10.
constexpr double kTransientEnd = 150.0;
constexpr double kTransientDt = 0.5;

struct Transient {
  au::AutonomousModel model;
  au::EvolveResult run;
  double seconds = 0.0;
};

std::optional<Transient> g_transient;

au::AutonomousParams desk_params(int l_min = -40, int l_max = 120) {
  au::AutonomousParams p;
  p.basis = RotorBasis(l_min, l_max);
  return p;
}

const Transient& transient() {
  if (!g_transient) {
    const auto t0 = std::chrono::steady_clock::now();
    au::AutonomousModel m(desk_params());
    au::EvolveOptions o;
    o.t_end = kTransientEnd;
    o.output_dt = kTransientDt;
    auto run = au::evolve(m, au::momentum_eigenstate(m.basis(), 0, true).to_density(), o);
    g_transient.emplace(Transient{std::move(m), std::move(run), elapsed(t0)});
    fmt::print("  (desk transient to t = {} took {:.1f} s)\n", kTransientEnd, g_transient->seconds);
  }
  return *g_transient;
}

// margin > 0 leaves the outermost momentum states empty.
MatrixXc random_density(Index d, std::mt19937_64& gen, Index margin = 0) {
  std::normal_distribution<double> n;
  MatrixXc a = MatrixXc::Zero(d, d);
  for (Index i = margin; i < d - margin; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = cplx(n(gen), n(gen));
  MatrixXc r = a * a.adjoint();
  return r / r.trace().real();
}

// Long-run average of a stationary sequence with a batch-means standard error.
struct BatchMeans {
  std::vector<double> batches;
  double sum = 0.0;
  long long count = 0, per_batch;
  explicit BatchMeans(long long n) : per_batch(n) {}
  void add(double x) {
    sum += x;
    if (++count == per_batch) {
      batches.push_back(sum / static_cast<double>(count));
      sum = 0.0;
      count = 0;
    }
  }
  double mean() const { return std::accumulate(batches.begin(), batches.end(), 0.0) / batches.size(); }
  double se() const {
    const double m = mean();
    double v = 0.0;
    for (double b : batches) v += (b - m) * (b - m);
    const double n = static_cast<double>(batches.size());
    return std::sqrt(v / (n - 1.0) / n);
  }
};

// ---------------------------------------------------------------------------------------------

Verdict criterion1() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const double w = driven::work_per_cycle_qst(1.0, 0.1);
  const double q = driven::heat_per_cycle_qst(1.0, 0.1);
  const double s = elapsed(t0);
  v.check(std::abs(w - 0.31) <= 0.01, fmt::format("W_qst = {:.5f} (0.31 +- 0.01)", w));
  v.check(std::abs(q - 0.23) <= 0.01, fmt::format("Q_h,qst = {:.5f} (0.23 +- 0.01)", q));
  v.check(s < 1.0, fmt::format("runtime {:.3f} s < 1 s", s));
  return v;
}

Verdict criterion2() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> omegas;
  const int n = 31;
  for (int k = 0; k < n; ++k) omegas.push_back(0.03 * std::pow(1000.0, static_cast<double>(k) / (n - 1)));
  const auto sweep = driven::efficiency_sweep(driven::DrivenParams{}, omegas);
  const double s = elapsed(t0);
  const auto best = std::max_element(sweep.begin(), sweep.end(),
                                     [](const auto& a, const auto& b) { return a.eta_normalized < b.eta_normalized; });
  v.check(std::abs(best->eta_normalized - 0.40) <= 0.05,
          fmt::format("max eta*w0/g = {:.4f} (0.40 +- 0.05)", best->eta_normalized));
  v.check(best->omega >= 0.3 && best->omega <= 3.0, fmt::format("at omega = {:.4g} kappa (in [0.3, 3])", best->omega));
  v.check(s < 60.0, fmt::format("{} points, runtime {:.1f} s < 60 s", n, s));
  return v;
}

Verdict criterion3() {
  Verdict v;
  const Transient& tr = transient();
  const auto& rows = tr.run.timeline.rows;

  // Early linear gain: least-squares line through <L>(t) on t in [5, 15].
  std::vector<double> ts, ls;
  double torque_early = 0.0;
  int n_early = 0;
  for (const auto& r : rows) {
    if (r.t >= 5.0 - 1e-9 && r.t <= 15.0 + 1e-9) {
      ts.push_back(r.t);
      ls.push_back(r.mean_L);
      torque_early += r.torque;
      ++n_early;
    }
  }
  torque_early /= n_early;
  const double tm = std::accumulate(ts.begin(), ts.end(), 0.0) / ts.size();
  const double lm = std::accumulate(ls.begin(), ls.end(), 0.0) / ls.size();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sxy += (ts[i] - tm) * (ls[i] - lm);
    sxx += (ts[i] - tm) * (ts[i] - tm);
    syy += (ls[i] - lm) * (ls[i] - lm);
  }
  const double slope = sxy / sxx;
  const double r2 = sxy * sxy / (sxx * syy);
  v.check(slope > 0.0 && r2 > 0.99,
          fmt::format("early gain on t in [5, 15]: slope {:.4f}, R^2 = {:.5f} (> 0.99)", slope, r2));

  double max_L = 0.0;
  for (const auto& r : rows) max_L = std::max(max_L, r.mean_L);
  v.check(max_L >= 20.0, fmt::format("max <L> = {:.3f} hbar (>= 20)", max_L));

  // Acceleration at the first crossing of <L> = 25, linearly interpolated.
  std::optional<double> acc25, t25;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (rows[k - 1].mean_L < 25.0 && rows[k].mean_L >= 25.0) {
      const double w = (25.0 - rows[k - 1].mean_L) / (rows[k].mean_L - rows[k - 1].mean_L);
      acc25 = rows[k - 1].torque + w * (rows[k].torque - rows[k - 1].torque);
      t25 = rows[k - 1].t + w * (rows[k].t - rows[k - 1].t);
      break;
    }
  }
  if (acc25) {
    v.check(*acc25 <= 0.5 * torque_early,
            fmt::format("d<L>/dt at <L> = 25 (t = {:.1f}): {:.4f} <= half of early {:.4f}", *t25, *acc25, torque_early));
  } else {
    v.check(false, fmt::format("<L> never reached 25 by t = {}", kTransientEnd));
  }
  v.check(tr.run.timeline.max_edge_pop < 1e-6,
          fmt::format("max edge population {:.3g} (< 1e-6)", tr.run.timeline.max_edge_pop));
  v.check(tr.seconds < 600.0, fmt::format("runtime {:.1f} s < 600 s", tr.seconds));
  return v;
}

Verdict criterion4() {
  Verdict v;
  const Transient& tr = transient();
  double worst = 0.0, min_qba = std::numeric_limits<double>::infinity();
  auto ratio = [](double kin, double sum) { return std::abs(kin - sum) / (1e-8 * std::max(std::abs(kin), 1e-6)); };
  double worst_valid = 0.0;
  int n_valid = 0;
  for (const auto& r : tr.run.timeline.rows) {
    worst = std::max(worst, ratio(r.W_kin, r.W_int + r.Q_BA));
    min_qba = std::min(min_qba, r.Q_BA);
    if (r.edge_pop < 1e-6) {
      worst_valid = std::max(worst_valid, ratio(r.W_kin, r.W_int + r.Q_BA));
      ++n_valid;
    }
  }
  v.check(worst <= 1.0, fmt::format("run: worst |W_kin - W_int - Q_BA| / tol = {:.3g} over {} rows "
                                    "({:.3g} over the {} rows with edge population < 1e-6)",
                                    worst, tr.run.timeline.rows.size(), worst_valid, n_valid));
  std::mt19937_64 rng(2024);
  const au::AutonomousModel& m = tr.model;
  double worst_r = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double pe = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    // The identity rests on [L^2, cos phi] and [L^2, sin phi], which the truncated basis only
    // reproduces away from its outermost states.
    const QubitDiagonalState s{(1.0 - pe) * random_density(m.rotor_dim(), rng, 1),
                               pe * random_density(m.rotor_dim(), rng, 1)};
    worst_r = std::max(worst_r, ratio(au::kinetic_power(m, s), au::intrinsic_power(m, s) + au::backaction_heating(m, s)));
    min_qba = std::min(min_qba, au::backaction_heating(m, s));
  }
  v.check(worst_r <= 1.0, fmt::format("100 random states (outermost levels empty): worst ratio {:.3g}", worst_r));
  v.check(min_qba >= -1e-12, fmt::format("min Q_BA = {:.3g} (>= -1e-12)", min_qba));
  return v;
}

Verdict criterion5() {
  Verdict v;
  const Transient& tr = transient();
  const auto& rows = tr.run.timeline.rows;
  double max_erg_rate = -1e300, max_net = -1e300, t_erg = 0.0, t_net = 0.0;
  for (const auto& r : rows) {
    if (r.W_erg_rate > max_erg_rate) {
      max_erg_rate = r.W_erg_rate;
      t_erg = r.t;
    }
    if (r.W_net > max_net) {
      max_net = r.W_net;
      t_net = r.t;
    }
  }
  double late_erg = -1e300, late_net = -1e300;
  for (const auto& r : rows) {
    if (r.t < 10.0) continue;
    late_erg = std::max(late_erg, r.W_erg_rate);
    late_net = std::max(late_net, r.W_net);
  }
  fmt::print("  (t >= 10 only: max dW_erg/dt = {:.4f}, max W_net = {:.4f})\n", late_erg, late_net);
  const double rel = std::abs(max_erg_rate - max_net) / std::max(std::abs(max_erg_rate), std::abs(max_net));
  v.check(rel <= 0.15, fmt::format("max dW_erg/dt = {:.4f} (t = {}), max W_net = {:.4f} (t = {}): rel diff {:.3f} (<= 0.15)",
                                   max_erg_rate, t_erg, max_net, t_net, rel));
  const double I = tr.model.params().inertia;
  int n_int = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    if (std::abs(r.mean_L - std::round(r.mean_L)) <= 0.01) {
      ++n_int;
      worst = std::min(worst, r.W_erg - (r.mean_L * r.mean_L / (2.0 * I) - 1e-8));
    }
  }
  v.check(n_int > 0 && worst >= 0.0,
          fmt::format("{} near-integer samples, min W_erg - <L>^2/2I = {:.3g}", n_int, n_int ? worst : 0.0));
  return v;
}

Verdict criterion6() {
  Verdict v;
  auto assess = [&](const au::EvolveResult& run, const std::string& label, double seconds) {
    const auto& rows = run.timeline.rows;
    double min_rate = std::numeric_limits<double>::infinity(), avg = 0.0;
    int n = 0;
    const double t_from = 0.8 * rows.back().t;
    for (const auto& r : rows) {
      min_rate = std::min(min_rate, r.S_net_rate);
      if (r.t >= t_from - 1e-9) {
        avg += r.S_net_rate;
        ++n;
      }
    }
    avg /= n;
    fmt::print("  ({} window: min S_net_rate {:.4g}, final-20% average {:.4f}, {:.1f} s)\n", label, min_rate, avg, seconds);
    return std::pair{min_rate, avg};
  };
  const Transient& tr = transient();
  auto [min_rate, avg] = assess(tr.run, "desk", tr.seconds);
  std::string window = "desk [-40, 120]";
  if (std::abs(avg - 0.21) > 0.05) {
    // Desk truncation out of tolerance: repeat on the full window.
    const auto t0 = std::chrono::steady_clock::now();
    const au::AutonomousModel m(desk_params(-60, 200));
    au::EvolveOptions o;
    o.t_end = kTransientEnd;
    o.output_dt = kTransientDt;
    const auto full = au::evolve(m, au::momentum_eigenstate(m.basis(), 0, true).to_density(), o);
    const double s = elapsed(t0);
    std::tie(min_rate, avg) = assess(full, "full", s);
    window = "full [-60, 200]";
    v.check(s < 3600.0, fmt::format("full-window runtime {:.1f} s < 3600 s", s));
  }
  v.check(min_rate >= -1e-6, fmt::format("{}: min S_net_rate = {:.4g} (>= -1e-6)", window, min_rate));
  v.check(std::abs(avg - 0.21) <= 0.05, fmt::format("{}: final-20% average S_net_rate = {:.4f} (0.21 +- 0.05)", window, avg));
  return v;
}

Verdict criterion7() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  au::AutonomousParams p = desk_params();
  p.kT_r = 10.0 / p.inertia;  // 10 hbar^2 / I

  p.gamma = 1.0;
  const auto ss = au::steady_state(au::AutonomousModel(p));
  const auto& r = ss.report;
  const double mismatch = r.W_load - (r.W_int + r.Q_BA);
  v.check(std::abs(mismatch) <= 1e-3 * std::abs(r.W_load),
          fmt::format("gamma = 1: W_load = {:.5f}, W_int + Q_BA = {:.5f}, mismatch {:.3g} ({:+.2f}%; tol 0.1%)", r.W_load,
                      r.W_int + r.Q_BA, mismatch, 100.0 * mismatch / r.W_load));

  std::vector<double> gammas, w_load, w_int;
  const int n = 9;
  for (int k = 0; k < n; ++k) gammas.push_back(0.01 * std::pow(1e4, static_cast<double>(k) / (n - 1)));
  double worst_edge = 0.0;
  for (double g : gammas) {
    p.gamma = g;
    const auto s = au::steady_state(au::AutonomousModel(p));
    w_load.push_back(s.report.W_load);
    w_int.push_back(s.report.W_int);
    worst_edge = std::max(worst_edge, s.report.edge_pop);
    fmt::print("  gamma = {:9.4g}: W_load = {:.5f}, W_int = {:.5f}, Q_BA = {:.5f}, <L> = {:.3f}\n", g,
               s.report.W_load, s.report.W_int, s.report.Q_BA, s.report.mean_L);
  }
  const Transient& tr = transient();
  double max_erg_rate = -1e300;
  for (const auto& row : tr.run.timeline.rows) max_erg_rate = std::max(max_erg_rate, row.W_erg_rate);
  double late_erg = -1e300;
  for (const auto& row : tr.run.timeline.rows) {
    if (row.t >= 10.0) late_erg = std::max(late_erg, row.W_erg_rate);
  }
  const double max_load = *std::max_element(w_load.begin(), w_load.end());
  fmt::print("  (max dW_erg/dt for t >= 10 only: {:.4f})\n", late_erg);
  v.check(max_load > max_erg_rate,
          fmt::format("max W_load = {:.4f} > max transient dW_erg/dt = {:.4f}", max_load, max_erg_rate));
  const double peak_int = *std::max_element(w_int.begin(), w_int.end());
  v.check(w_int.back() < 0.1 * peak_int, fmt::format("W_int(gamma = 100) = {:.4g} < 10% of peak {:.4g}", w_int.back(), peak_int));
  fmt::print("  (sweep edge population max {:.3g}; {:.1f} s)\n", worst_edge, elapsed(t0));
  return v;
}

Verdict criterion8() {
  Verdict v;
  // (a) coin at fixed angles against the quasi-static excitation probability.
  for (double phi : {0.0, 1.0, kPi / 2, kPi, 3 * kPi / 2}) {
    cl::ClassicalParams p;
    p.inertia = std::numeric_limits<double>::infinity();
    const double dt = p.coin_dt_bound();
    Philox4x32 rng(81, static_cast<std::uint64_t>(phi * 1000));
    cl::CoinState s{phi, 0.0, 0};
    for (int i = 0; i < 20000; ++i) s = cl::step_coin_unchecked(s, p, dt, rng);  // burn-in, t ~ 5
    BatchMeans bm(10000);
    for (long long i = 0; i < 1000000; ++i) {
      s = cl::step_coin_unchecked(s, p, dt, rng);
      bm.add(s.C);
    }
    const double want = driven::pe_quasistatic(phi, p.n_h, p.n_c);
    v.check(std::abs(bm.mean() - want) <= 3.0 * bm.se(),
            fmt::format("(a) phi = {:.4f}: P(C=1) = {:.5f} +- {:.5f} vs {:.5f}", phi, bm.mean(), bm.se(), want));
  }
  // (b) magnet coupled to one bath at three temperatures.
  for (double eps : {0.5, 1.0, 2.0}) {
    cl::ClassicalParams p;
    p.inertia = std::numeric_limits<double>::infinity();
    p.coupling.hot = {0.0, 0.0, 0.0};
    p.eps_h = 0.0;
    p.eps_c = eps;
    const double dt = p.magnet_dt_bound();
    Philox4x32 rng(82, static_cast<std::uint64_t>(eps * 1000));
    cl::MagnetState s{0.0, 0.0, 0.0};
    for (int i = 0; i < 50000; ++i) s = cl::step_magnet_unchecked(s, p, dt, rng).state;
    BatchMeans bm(40000);
    for (long long i = 0; i < 4000000; ++i) {
      s = cl::step_magnet_unchecked(s, p, dt, rng).state;
      bm.add(s.m_z);
    }
    const double want = cl::thermal_spin_means_eps(eps).classical;
    v.check(std::abs(bm.mean() - want) <= 3.0 * bm.se(),
            fmt::format("(b) eps = {}: <m_z> = {:.5f} +- {:.5f} vs {:.5f}", eps, bm.mean(), bm.se(), want));
  }
  const double m1 = cl::thermal_spin_means_eps(1.0).classical;
  v.check(std::abs(m1 + 0.0820) <= 0.0005, fmt::format("(c) <m_z>(eps = 1) = {:.6f} (-0.0820 +- 0.0005)", m1));
  return v;
}

Verdict criterion9() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const cl::ClassicalInit init;  // phi ~ N(pi/2, 0.1), L ~ N(0, 10), coin up, m_z = m

  // Quantum reference: |e> x von Mises(pi/2, 0.1) on the desk window.
  const au::AutonomousModel m(desk_params());
  au::EvolveOptions o;
  o.t_end = 30.0;
  o.output_dt = 0.5;
  o.diagnostics = false;
  const VonMisesState vm = von_mises_state(kPi / 2, 0.1, m.basis());
  const auto q = au::evolve(m, au::product_state(1.0, vm.coefficients).to_density(), o);
  fmt::print("  (quantum reference {:.1f} s)\n", elapsed(t0));

  cl::ClassicalParams p;
  cl::EnsembleOptions eo;
  eo.n_traj = 100000;
  eo.seed = 9;
  eo.t_grid = cl::make_grid(30.0, 0.5, p.coin_dt_bound());
  const auto coin = cl::run_ensemble(cl::ClassicalModel::Coin, p, init, eo);
  fmt::print("  (coin g = 10 ensemble done at {:.1f} s)\n", elapsed(t0));
  double worst = 0.0, t_worst = 0.0;
  for (std::size_t k = 1; k < coin.t.size(); ++k) {
    const double ql = q.timeline.rows.at(k).mean_L;
    const double rel = std::abs(coin.mean_L[k] - ql) / std::abs(ql);
    if (rel > worst) {
      worst = rel;
      t_worst = coin.t[k];
    }
  }
  const std::size_t last = coin.t.size() - 1;
  v.check(worst <= 0.10, fmt::format("g = 10: worst |coin - quantum| / quantum <L> = {:.4f} at t = {} (<= 0.10); "
                                     "t = 30: coin {:.3f}, quantum {:.3f}",
                                     worst, t_worst, coin.mean_L[last], q.timeline.rows.at(last).mean_L));

  // Momentum noise at g = kappa.
  cl::ClassicalParams p1;
  p1.g = 1.0;
  const double t_final = 20.0;
  cl::EnsembleOptions e1 = eo;
  e1.dt = p1.magnet_dt_bound();
  e1.t_grid = cl::make_grid(t_final, t_final, e1.dt);  // last point is the nearest step to t_final
  const auto mag1 = cl::run_ensemble(cl::ClassicalModel::Magnet, p1, init, e1);
  e1.dt = p1.coin_dt_bound();
  e1.t_grid = cl::make_grid(t_final, t_final, e1.dt);
  const auto coin1 = cl::run_ensemble(cl::ClassicalModel::Coin, p1, init, e1);
  v.check(mag1.var_L.back() > coin1.var_L.back(),
          fmt::format("g = 1, t = {}: magnet var_L = {:.3f} +- {:.3f} > coin var_L = {:.3f} +- {:.3f}", t_final,
                      mag1.var_L.back(), mag1.se_var_L.back(), coin1.var_L.back(), coin1.se_var_L.back()));
  const double s = elapsed(t0);
  v.check(s < 900.0, fmt::format("runtime {:.1f} s < 900 s (magnet clamp fraction {:.2g})", s, mag1.clamp_fraction));
  return v;
}

Verdict criterion10() {
  Verdict v;
  const Transient& tr = transient();
  v.check(tr.run.timeline.max_trace_err <= 1e-9, fmt::format("trace drift {:.3g} (<= 1e-9)", tr.run.timeline.max_trace_err));
  v.check(tr.run.timeline.min_sampled_eigenvalue >= -1e-10,
          fmt::format("min sampled eigenvalue {:.3g} (>= -1e-10)", tr.run.timeline.min_sampled_eigenvalue));

  std::mt19937_64 rng(10);
  double worst_tr = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::normal_distribution<double> n;
    MatrixXc a(12, 12);
    for (Index i = 0; i < 12; ++i)
      for (Index j = 0; j < 12; ++j) a(i, j) = cplx(n(rng), n(rng));
    worst_tr = std::max(worst_tr, std::abs(dissipator_apply(a, random_density(12, rng)).trace()));
  }
  v.check(worst_tr <= 1e-12, fmt::format("dissipator trace over 100 random instances {:.3g} (<= 1e-12)", worst_tr));

  // Ergotropy dominates every permutation of the populations onto the energy levels.
  const au::AutonomousModel small([] {
    au::AutonomousParams p;
    p.basis = RotorBasis(-5, 5);
    return p;
  }());
  const Eigen::VectorXd e = small.kinetic_energies();
  const MatrixXc rho = random_density(e.size(), rng);
  const double erg = au::ergotropy(rho, e);
  const Eigen::VectorXd lam = Eigen::SelfAdjointEigenSolver<MatrixXc>(rho).eigenvalues();
  const double mean = (e.array() * rho.diagonal().real().array()).sum();
  std::vector<int> perm(static_cast<std::size_t>(e.size()));
  std::iota(perm.begin(), perm.end(), 0);
  double worst_perm = -1e300;
  for (int k = 0; k < 10000; ++k) {
    std::shuffle(perm.begin(), perm.end(), rng);
    double passive = 0.0;
    for (Index i = 0; i < e.size(); ++i) passive += lam[i] * e[perm[static_cast<std::size_t>(i)]];
    worst_perm = std::max(worst_perm, (mean - passive) - erg);
  }
  v.check(worst_perm <= 1e-12, fmt::format("ergotropy permutation oracle: max excess {:.3g} (<= 1e-12)", worst_perm));

  // Block fast path against the full 2D x 2D propagation.
  const au::AutonomousModel mid([] {
    au::AutonomousParams p;
    p.basis = RotorBasis(-10, 30);
    return p;
  }());
  au::EvolveOptions o;
  o.t_end = 2.0;
  o.output_dt = 0.5;
  o.rtol = 1e-10;
  o.atol = 1e-13;
  const DensityMatrix rho0 = au::momentum_eigenstate(mid.basis(), 0, true).to_density();
  const auto blk = au::evolve(mid, rho0, o);
  o.layout = au::Layout::Full;
  const auto full = au::evolve(mid, rho0, o);
  double worst_blk = 0.0;
  for (std::size_t k = 0; k < blk.timeline.rows.size(); ++k) {
    const auto& a = blk.timeline.rows[k];
    const auto& b = full.timeline.rows[k];
    for (auto f : {&au::PowerReport::mean_L, &au::PowerReport::std_L, &au::PowerReport::W_int, &au::PowerReport::W_kin,
                   &au::PowerReport::W_net, &au::PowerReport::Q_BA, &au::PowerReport::W_erg,
                   &au::PowerReport::W_erg_rate, &au::PowerReport::S_net_rate}) {
      worst_blk = std::max(worst_blk, std::abs(a.*f - b.*f));
    }
  }
  v.check(worst_blk <= 1e-8, fmt::format("block vs full layout: max deviation {:.3g} (<= 1e-8)", worst_blk));

  // Ensemble statistics do not depend on the worker count.
  bool identical = true;
  for (auto model : {cl::ClassicalModel::Coin, cl::ClassicalModel::Magnet}) {
    const cl::ClassicalParams p;
    cl::EnsembleOptions eo;
    eo.n_traj = 4000;
    eo.seed = 77;
    eo.t_grid = cl::make_grid(0.5, 0.25, model == cl::ClassicalModel::Coin ? p.coin_dt_bound() : p.magnet_dt_bound());
    eo.threads = 1;
    const auto a = cl::run_ensemble(model, p, cl::ClassicalInit{}, eo);
    eo.threads = 4;
    const auto b = cl::run_ensemble(model, p, cl::ClassicalInit{}, eo);
    identical = identical && a.mean_L == b.mean_L && a.var_L == b.var_L && a.mean_spin == b.mean_spin;
  }
  v.check(identical, "ensembles bit-identical for 1 and 4 threads");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Verdict()>> criteria = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                                          criterion6, criterion7, criterion8, criterion9, criterion10};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  const auto t_all = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i]();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    failed += v.pass ? 0 : 1;
    fmt::print("{} criterion {} ({:.1f} s)\n", v.pass ? "PASS" : "FAIL", id, elapsed(t0));
    for (const auto& n : v.notes) fmt::print("    {}\n", n);
    std::fflush(stdout);
  }
  fmt::print("{} criteria failed; total {:.1f} s\n", failed, elapsed(t_all));
  return failed == 0 ? 0 : 1;
}
