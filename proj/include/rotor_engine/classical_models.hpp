#pragma once

// Classical counterparts of the qubit-rotor engine.
//
//  * Coin model: a bit C flipped by angle-biased telegraph noise, exerting the torque
//    g C sin(phi) on the rotor. Jumps use time-driven Bernoulli thinning.
//  * Magnet model: a classical spin component m_z in [-m, m] with Langevin dynamics,
//    including backaction noise on L, integrated by Euler-Maruyama with clamping at the
//    boundary.
//
// Trajectory k draws from Philox stream (seed, k); ensembles are reduced chunk-wise in a fixed
// order, so statistics are bit-identical for any number of worker threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "rotor_engine/common.hpp"
#include "rotor_engine/operator_algebra.hpp"
#include "rotor_engine/philox.hpp"

namespace rotor::classical {

struct ClassicalParams {
  double g = 10.0;
  double kappa = 1.0;
  double n_h = 1.0;
  double n_c = 0.1;
  double inertia = 10.0;  // +inf freezes the rotor angle
  double spin_length = 0.5;
  // Classical occupations k_B T_j / hbar omega_0; NaN derives them from n_j at equal temperature.
  double eps_h = std::numeric_limits<double>::quiet_NaN();
  double eps_c = std::numeric_limits<double>::quiet_NaN();
  CouplingFunctions coupling = CouplingFunctions::piston();

  void validate() const {
    detail::require(kappa >= 0.0 && g >= 0.0, "ClassicalParams: kappa and g must be >= 0");
    detail::require(n_h >= 0.0 && n_c >= 0.0, "ClassicalParams: occupations must be >= 0");
    detail::require(inertia > 0.0, "ClassicalParams: inertia must be > 0");
    detail::require(spin_length > 0.0, "ClassicalParams: spin length must be > 0");
    detail::require(std::isnan(eps_h) || eps_h >= 0.0, "ClassicalParams: eps_h must be >= 0");
    detail::require(std::isnan(eps_c) || eps_c >= 0.0, "ClassicalParams: eps_c must be >= 0");
  }

  double epsilon_hot() const { return std::isnan(eps_h) ? occupation_to_epsilon(n_h) : eps_h; }
  double epsilon_cold() const { return std::isnan(eps_c) ? occupation_to_epsilon(n_c) : eps_c; }

  /// k_B T / hbar omega_0 of a bosonic bath with occupation n (n = 0 maps to 0).
  static double occupation_to_epsilon(double n) { return n > 0.0 ? 1.0 / std::log1p(1.0 / n) : 0.0; }

  double coin_dt_bound() const { return 1e-3 / (kappa * (2.0 * n_h + 2.0 * n_c + 2.0)); }
  double magnet_dt_bound() const {
    return 1e-3 / (kappa * (1.0 + 2.0 * std::max(epsilon_hot(), epsilon_cold())));
  }
};

struct ClassicalInit {
  double mu_phi = kPi / 2.0;
  double sigma2_phi = 0.1;
  double mu_L = 0.0;
  double sigma2_L = 10.0;  // units hbar^2
  int coin = 1;            // initial bit
  double m_z = 0.5;        // initial spin component (clamped into the open interval)

  void validate() const {
    detail::require(sigma2_phi > 0.0 && sigma2_L > 0.0, "ClassicalInit: variances must be > 0");
    detail::require(coin == 0 || coin == 1, "ClassicalInit: coin must be 0 or 1");
  }
};

struct CoinState {
  double phi = 0.0;  // unwrapped
  double L = 0.0;
  int C = 0;
};

struct MagnetState {
  double phi = 0.0;
  double L = 0.0;
  double m_z = 0.0;
};

/// Independent Gaussian draws phi ~ N(mu_phi, sigma_phi^2), L ~ N(mu_L, sigma_L^2).
template <typename Rng>
std::pair<double, double> sample_initial(const ClassicalInit& init, Rng& rng) {
  const double phi = init.mu_phi + std::sqrt(init.sigma2_phi) * rng.normal();
  const double L = init.mu_L + std::sqrt(init.sigma2_L) * rng.normal();
  return {phi, L};
}

struct FlipProbabilities {
  double up;    // E[dN_0]: 0 -> 1
  double down;  // E[dN_1]: 1 -> 0
};

inline FlipProbabilities coin_flip_probabilities(double phi, const ClassicalParams& p, double dt) {
  const double fh2 = std::pow(p.coupling.hot.value(phi), 2);
  const double fc2 = std::pow(p.coupling.cold.value(phi), 2);
  return {p.kappa * (p.n_h * fh2 + p.n_c * fc2) * dt,
          p.kappa * ((p.n_h + 1.0) * fh2 + (p.n_c + 1.0) * fc2) * dt};
}

namespace detail_step {
inline void check_coin_dt(const ClassicalParams& p, double dt) {
  detail::require(dt > 0.0 && dt <= p.coin_dt_bound() * (1.0 + 1e-12),
                  "step_coin: dt exceeds 1e-3 / [kappa (2 n_h + 2 n_c + 2)]");
}
inline void check_magnet_dt(const ClassicalParams& p, double dt) {
  detail::require(dt > 0.0 && dt <= p.magnet_dt_bound() * (1.0 + 1e-12),
                  "step_magnet: dt exceeds 1e-3 / [kappa (1 + 2 max eps)]");
}
}  // namespace detail_step

/// sin and cos of the clock angle at the start of a step.
struct AngleTrig {
  double sin = 0.0;
  double cos = 1.0;
  static AngleTrig of(double phi) { return {std::sin(phi), std::cos(phi)}; }
};

namespace detail_step {
// Rotates (sin phi, cos phi) by a small angle increment. The series are exact to rounding for
// |delta| <= 0.02; larger increments fall back to the library functions.
inline AngleTrig rotate(const AngleTrig& t, double delta) {
  double sd, cd;
  if (std::abs(delta) <= 0.02) {
    const double d2 = delta * delta;
    sd = delta * (1.0 - d2 / 6.0 * (1.0 - d2 / 20.0 * (1.0 - d2 / 42.0)));
    cd = 1.0 - d2 / 2.0 * (1.0 - d2 / 12.0 * (1.0 - d2 / 30.0 * (1.0 - d2 / 56.0)));
  } else {
    sd = std::sin(delta);
    cd = std::cos(delta);
  }
  return {t.sin * cd + t.cos * sd, t.cos * cd - t.sin * sd};
}
}  // namespace detail_step

/// Coin step kernel with the trigonometric values of the pre-step angle supplied by the caller.
/// A single uniform decides both increments with the exact joint law of two independent
/// Bernoulli variables; dN_0 is applied before dN_1. The rotor update is explicit Euler with
/// pre-step (phi, L, C).
template <typename Rng>
CoinState coin_kernel(const CoinState& s, const AngleTrig& trig, const ClassicalParams& p, double dt, Rng& rng) {
  const TrigCoupling& h = p.coupling.hot;
  const TrigCoupling& c = p.coupling.cold;
  const double fh = h.offset + h.sin_coeff * trig.sin + h.cos_coeff * trig.cos;
  const double fc = c.offset + c.sin_coeff * trig.sin + c.cos_coeff * trig.cos;
  const double fh2 = fh * fh, fc2 = fc * fc;
  const double p0 = p.kappa * (p.n_h * fh2 + p.n_c * fc2) * dt;
  const double p1 = p.kappa * ((p.n_h + 1.0) * fh2 + (p.n_c + 1.0) * fc2) * dt;
  CoinState out = s;
  if (p0 > 0.0 || p1 > 0.0) {
    const double u = rng.uniform();
    const bool dn0 = u < p0;
    const bool dn1 = dn0 ? (u < p0 * p1) : (u < p0 + (1.0 - p0) * p1);
    int coin = s.C;
    if (dn0) coin = 1;
    if (dn1) coin = 0;
    out.C = coin;
  }
  if (std::isfinite(p.inertia)) out.phi = s.phi + s.L / p.inertia * dt;
  out.L = s.L + p.g * s.C * trig.sin * dt;
  return out;
}

/// One coin step without argument checks.
template <typename Rng>
CoinState step_coin_unchecked(const CoinState& s, const ClassicalParams& p, double dt, Rng& rng) {
  return coin_kernel(s, AngleTrig::of(s.phi), p, dt, rng);
}

template <typename Rng>
CoinState step_coin(const CoinState& s, const ClassicalParams& p, double dt, Rng& rng) {
  detail_step::check_coin_dt(p, dt);
  detail::require(s.C == 0 || s.C == 1, "step_coin: coin must be 0 or 1");
  return step_coin_unchecked(s, p, dt, rng);
}

struct MagnetStep {
  MagnetState state;
  bool clamped = false;
};

/// One Euler-Maruyama step of the magnet Langevin pair, all coefficients at pre-step values.
/// Expects eps_h / eps_c to be resolved by the caller when speed matters (see run_ensemble).
template <typename Rng>
MagnetStep magnet_kernel(const MagnetState& s, const AngleTrig& trig, const ClassicalParams& p, double dt,
                         Rng& rng) {
  const double m = p.spin_length;
  const double sin_phi = trig.sin;
  const double cos_phi = trig.cos;
  const TrigCoupling& h = p.coupling.hot;
  const TrigCoupling& c = p.coupling.cold;
  const double fh = h.offset + h.sin_coeff * sin_phi + h.cos_coeff * cos_phi;
  const double fc = c.offset + c.sin_coeff * sin_phi + c.cos_coeff * cos_phi;
  const double dfh = h.sin_coeff * cos_phi - h.cos_coeff * sin_phi;
  const double dfc = c.sin_coeff * cos_phi - c.cos_coeff * sin_phi;
  const double eh = p.epsilon_hot(), ec = p.epsilon_cold();
  const double coupling = fh * fh + fc * fc;
  const double thermal = eh * fh * fh + ec * fc * fc;
  const double thermal_d = eh * dfh * dfh + ec * dfc * dfc;
  const double span = std::max(0.0, (m * m - s.m_z * s.m_z) / m);
  const double sqdt = std::sqrt(dt);

  MagnetStep out{s, false};
  double mz = s.m_z - p.kappa * coupling * span * dt - 2.0 * p.kappa * thermal * s.m_z / m * dt;
  if (thermal > 0.0) mz += std::sqrt(2.0 * p.kappa * thermal * span) * sqdt * rng.normal();
  double L = s.L + p.g * (m + s.m_z) * sin_phi * dt;
  if (thermal_d > 0.0) L += std::sqrt(2.0 * p.kappa * thermal_d * span) * sqdt * rng.normal();
  const double lo = -m + 1e-12, hi = m - 1e-12;
  if (mz < lo || mz > hi) {
    mz = std::clamp(mz, lo, hi);
    out.clamped = true;
  }
  out.state.m_z = mz;
  out.state.L = L;
  if (std::isfinite(p.inertia)) out.state.phi = s.phi + s.L / p.inertia * dt;
  return out;
}

template <typename Rng>
MagnetStep step_magnet_unchecked(const MagnetState& s, const ClassicalParams& p, double dt, Rng& rng) {
  return magnet_kernel(s, AngleTrig::of(s.phi), p, dt, rng);
}

template <typename Rng>
MagnetState step_magnet(const MagnetState& s, const ClassicalParams& p, double dt, Rng& rng) {
  detail_step::check_magnet_dt(p, dt);
  detail::require(std::abs(s.m_z) <= p.spin_length, "step_magnet: |m_z| exceeds spin length");
  return step_magnet_unchecked(s, p, dt, rng).state;
}

/// Mean of m_z for a classical spin in a bath at eps = k_B T / hbar omega_0, and the quantum
/// <sigma_z> at the same temperature (spin length 1/2).
struct ThermalSpinMeans {
  double classical;
  double quantum;
};

inline ThermalSpinMeans thermal_spin_means_eps(double eps) {
  detail::require(eps >= 0.0, "thermal_spin_means: temperature must be >= 0");
  if (eps == 0.0) return {-0.5, -0.5};
  if (std::isinf(eps)) return {0.0, 0.0};
  const double x = 1.0 / (2.0 * eps);  // hbar omega_0 / 2 k_B T
  double classical;
  if (x < 1e-3) {
    // eps - coth(x)/2 = -x/6 + x^3/90 - ...; avoids cancellation at high temperature.
    classical = -x / 6.0 + x * x * x / 90.0;
  } else {
    classical = eps - 0.5 / std::tanh(x);
  }
  return {classical, -0.5 * std::tanh(x)};
}

inline ThermalSpinMeans thermal_spin_means_occupation(double n) {
  detail::require(n >= 0.0, "thermal_spin_means: occupation must be >= 0");
  return thermal_spin_means_eps(ClassicalParams::occupation_to_epsilon(n));
}

// ---------------------------------------------------------------------------------------------
// Ensembles

/// Streaming central moments up to fourth order with an exact pairwise merge.
struct Moments {
  double n = 0.0, mean = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;

  void add(double x) {
    Moments one;
    one.n = 1.0;
    one.mean = x;
    merge(one);
  }

  void merge(const Moments& b) {
    if (b.n == 0.0) return;
    if (n == 0.0) {
      *this = b;
      return;
    }
    const double na = n, nb = b.n, nn = na + nb;
    const double d = b.mean - mean;
    const double d2 = d * d;
    const double nm4 = m4 + b.m4 + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (nn * nn * nn) +
                       6.0 * d2 * (na * na * b.m2 + nb * nb * m2) / (nn * nn) +
                       4.0 * d * (na * b.m3 - nb * m3) / nn;
    const double nm3 = m3 + b.m3 + d2 * d * na * nb * (na - nb) / (nn * nn) +
                       3.0 * d * (na * b.m2 - nb * m2) / nn;
    const double nm2 = m2 + b.m2 + d2 * na * nb / nn;
    mean += d * nb / nn;
    m2 = nm2;
    m3 = nm3;
    m4 = nm4;
    n = nn;
  }

  double variance() const { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
  double se_mean() const { return n > 0.0 ? std::sqrt(variance() / n) : 0.0; }
  /// Large-sample standard error of the sample variance.
  double se_variance() const {
    if (n < 2.0) return 0.0;
    const double c2 = m2 / n, c4 = m4 / n;
    return std::sqrt(std::max(0.0, c4 - c2 * c2) / n);
  }
};

enum class ClassicalModel { Coin, Magnet };

struct EnsembleStats {
  ClassicalModel model = ClassicalModel::Coin;
  std::vector<double> t;
  std::vector<double> mean_L, se_mean_L, var_L, se_var_L;
  std::vector<double> mean_spin, se_mean_spin;  // C for the coin, m_z for the magnet
  std::size_t n_traj = 0;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double clamp_fraction = 0.0;  // magnet only
};

struct EnsembleOptions {
  std::size_t n_traj = 100'000;
  std::vector<double> t_grid;
  double dt = 0.0;  // 0 selects the model's step bound
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::size_t chunk = 256;
};

namespace detail_ens {

struct ChunkResult {
  std::vector<Moments> L, spin;
  std::uint64_t clamped = 0;
  std::uint64_t steps = 0;
};

inline std::vector<long long> step_counts(const std::vector<double>& grid, double dt) {
  std::vector<long long> out;
  double prev = 0.0;
  for (double t : grid) {
    detail::require(t >= prev, "run_ensemble: t_grid must be non-decreasing and >= 0");
    const long long k = std::llround(t / dt);
    detail::require(std::abs(static_cast<double>(k) * dt - t) <= 1e-9 * std::max(1.0, t),
                    "run_ensemble: t_grid entries must be integer multiples of dt");
    out.push_back(k);
    prev = t;
  }
  return out;
}

}  // namespace detail_ens

inline EnsembleStats run_ensemble(ClassicalModel model, const ClassicalParams& params_in,
                                  const ClassicalInit& init, const EnsembleOptions& opt) {
  params_in.validate();
  // Resolve the bath temperatures once instead of on every step.
  ClassicalParams params = params_in;
  params.eps_h = params_in.epsilon_hot();
  params.eps_c = params_in.epsilon_cold();
  init.validate();
  detail::require(opt.n_traj >= 1000, "run_ensemble: n_traj must be >= 1000");
  detail::require(!opt.t_grid.empty(), "run_ensemble: empty time grid");
  detail::require(opt.chunk > 0, "run_ensemble: chunk size must be > 0");
  const double dt = opt.dt > 0.0 ? opt.dt
                                  : (model == ClassicalModel::Coin ? params.coin_dt_bound()
                                                                   : params.magnet_dt_bound());
  if (model == ClassicalModel::Coin) detail_step::check_coin_dt(params, dt);
  else detail_step::check_magnet_dt(params, dt);
  const std::vector<long long> steps = detail_ens::step_counts(opt.t_grid, dt);
  const std::size_t n_grid = steps.size();
  const std::size_t n_chunks = (opt.n_traj + opt.chunk - 1) / opt.chunk;
  std::vector<detail_ens::ChunkResult> chunks(n_chunks);
  const double m = params.spin_length;

  // Trajectories are stepped in small interleaved groups so independent dependency chains
  // overlap. Between output times (sin phi, cos phi) are carried along by small-angle rotations
  // and resynchronized from phi at every output time; the accumulated rounding is ~1e-13.
  constexpr std::size_t kLanes = 8;
  auto run_chunk = [&](std::size_t ci) {
    detail_ens::ChunkResult& cr = chunks[ci];
    cr.L.assign(n_grid, {});
    cr.spin.assign(n_grid, {});
    const std::size_t begin = ci * opt.chunk;
    const std::size_t end = std::min(opt.n_traj, begin + opt.chunk);
    for (std::size_t k0 = begin; k0 < end; k0 += kLanes) {
      const std::size_t lanes = std::min(kLanes, end - k0);
      std::vector<Philox4x32> rng;
      rng.reserve(lanes);
      std::vector<CoinState> coin(lanes);
      std::vector<MagnetState> mag(lanes);
      std::vector<AngleTrig> trig(lanes);
      for (std::size_t j = 0; j < lanes; ++j) {
        rng.emplace_back(opt.seed, k0 + j);
        const auto [phi0, L0] = sample_initial(init, rng[j]);
        coin[j] = {phi0, L0, init.coin};
        mag[j] = {phi0, L0, std::clamp(init.m_z, -m + 1e-12, m - 1e-12)};
      }
      long long done = 0;
      for (std::size_t gi = 0; gi < n_grid; ++gi) {
        if (model == ClassicalModel::Coin) {
          for (std::size_t j = 0; j < lanes; ++j) trig[j] = AngleTrig::of(coin[j].phi);
          for (; done < steps[gi]; ++done) {
            for (std::size_t j = 0; j < lanes; ++j) {
              const CoinState next = coin_kernel(coin[j], trig[j], params, dt, rng[j]);
              trig[j] = detail_step::rotate(trig[j], next.phi - coin[j].phi);
              coin[j] = next;
            }
          }
          for (std::size_t j = 0; j < lanes; ++j) {
            cr.L[gi].add(coin[j].L);
            cr.spin[gi].add(static_cast<double>(coin[j].C));
          }
        } else {
          for (std::size_t j = 0; j < lanes; ++j) trig[j] = AngleTrig::of(mag[j].phi);
          for (; done < steps[gi]; ++done) {
            for (std::size_t j = 0; j < lanes; ++j) {
              const MagnetStep st = magnet_kernel(mag[j], trig[j], params, dt, rng[j]);
              trig[j] = detail_step::rotate(trig[j], st.state.phi - mag[j].phi);
              mag[j] = st.state;
              cr.clamped += st.clamped ? 1u : 0u;
            }
          }
          for (std::size_t j = 0; j < lanes; ++j) {
            cr.L[gi].add(mag[j].L);
            cr.spin[gi].add(mag[j].m_z);
          }
        }
      }
      cr.steps += static_cast<std::uint64_t>(done) * lanes;
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(n_chunks)));
  if (workers == 1) {
    for (std::size_t ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t ci = next++; ci < n_chunks; ci = next++) run_chunk(ci);
      });
    }
  }

  std::vector<Moments> L(n_grid), spin(n_grid);
  std::uint64_t clamped = 0, total_steps = 0;
  for (const auto& cr : chunks) {
    for (std::size_t gi = 0; gi < n_grid; ++gi) {
      L[gi].merge(cr.L[gi]);
      spin[gi].merge(cr.spin[gi]);
    }
    clamped += cr.clamped;
    total_steps += cr.steps;
  }

  EnsembleStats out;
  out.model = model;
  out.t = opt.t_grid;
  out.n_traj = opt.n_traj;
  out.seed = opt.seed;
  out.dt = dt;
  out.clamp_fraction = total_steps > 0 ? static_cast<double>(clamped) / static_cast<double>(total_steps) : 0.0;
  for (std::size_t gi = 0; gi < n_grid; ++gi) {
    out.mean_L.push_back(L[gi].mean);
    out.se_mean_L.push_back(L[gi].se_mean());
    out.var_L.push_back(L[gi].variance());
    out.se_var_L.push_back(L[gi].se_variance());
    out.mean_spin.push_back(spin[gi].mean);
    out.se_mean_spin.push_back(spin[gi].se_mean());
  }
  return out;
}

/// Uniform grid 0, dt_out, ..., t_end snapped to multiples of the integration step dt.
inline std::vector<double> make_grid(double t_end, double dt_out, double dt) {
  detail::require(t_end > 0.0 && dt_out > 0.0 && dt > 0.0, "make_grid: arguments must be > 0");
  const long long every = std::max(1LL, std::llround(dt_out / dt));
  const long long total = std::llround(t_end / dt);
  std::vector<double> grid;
  for (long long k = 0; k <= total; k += every) grid.push_back(static_cast<double>(k) * dt);
  return grid;
}

}  // namespace rotor::classical
