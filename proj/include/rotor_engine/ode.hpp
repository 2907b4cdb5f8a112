#pragma once

// Adaptive Dormand-Prince 5(4) integrator for Eigen vectors (real or complex).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "rotor_engine/common.hpp"

namespace rotor::ode {

struct Options {
  double rtol = 1e-8;
  double atol = 1e-12;
  double h_init = 0.0;  // 0 selects an automatic first step
  double h_max = std::numeric_limits<double>::infinity();
  double h_min = 1e-14;
  std::size_t max_steps = 50'000'000;
};

struct Stats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
};

/// Explicit embedded RK5(4) with FSAL and a PI step-size controller.
/// The error norm is the max over components of
/// |err_i| / (atol + rtol * max(|y_i|, |y_new_i|)).
template <typename Vector>
class DormandPrince {
 public:
  using Rhs = std::function<void(double, const Vector&, Vector&)>;

  DormandPrince(Rhs rhs, Options options) : rhs_(std::move(rhs)), opt_(options) {
    detail::require(opt_.rtol > 0.0 && opt_.atol >= 0.0, "ode: tolerances must be positive");
  }

  /// Advances (t, y) to exactly t_end; t_end may lie before t.
  void advance(double& t, Vector& y, double t_end) {
    if (t == t_end) return;
    const double dir = t_end > t ? 1.0 : -1.0;
    const Index n = y.size();
    resize(n);

    rhs_(t, y, k1_);
    ++stats_.rhs_evals;
    double h = std::abs(h_) > 0.0 ? std::abs(h_) : initial_step(t, y, dir);
    h = std::min(h, opt_.h_max);

    bool last_rejected = false;
    while (dir * (t_end - t) > 0.0) {
      if (stats_.accepted + stats_.rejected > opt_.max_steps) {
        throw ConvergenceError("ode: step limit exceeded at t=" + std::to_string(t));
      }
      bool hit_end = false;
      if (h >= dir * (t_end - t)) {
        h = dir * (t_end - t);
        hit_end = true;
      }
      const double hs = dir * h;
      stage(t, y, hs);
      const double err = error_norm(y);
      if (!std::isfinite(err)) {
        throw ConvergenceError("ode: non-finite error estimate at t=" + std::to_string(t));
      }
      if (err <= 1.0) {
        t = hit_end ? t_end : t + hs;
        y.swap(y_new_);
        k1_.swap(k7_);  // FSAL
        ++stats_.accepted;
        double factor = err == 0.0 ? kMaxFactor
                                   : kSafety * std::pow(err, -kAlpha) * std::pow(err_prev_, kBeta);
        factor = std::clamp(factor, kMinFactor, kMaxFactor);
        if (last_rejected) factor = std::min(factor, 1.0);
        err_prev_ = std::max(err, 1e-4);
        if (!hit_end) h_ = std::min(h * factor, opt_.h_max);
        else h_ = std::max(h_, h);
        h = std::abs(h_);
        last_rejected = false;
      } else {
        ++stats_.rejected;
        const double factor = std::max(kMinFactor, kSafety * std::pow(err, -kAlpha));
        h *= factor;
        h_ = h;
        last_rejected = true;
        if (h < opt_.h_min) {
          throw ConvergenceError("ode: step size underflow at t=" + std::to_string(t));
        }
      }
    }
  }

  const Stats& stats() const { return stats_; }
  double last_step_size() const { return std::abs(h_); }
  void reset_step_size() { h_ = 0.0; err_prev_ = 1e-4; }

 private:
  static constexpr double kSafety = 0.9;
  static constexpr double kAlpha = 0.7 / 5.0;
  static constexpr double kBeta = 0.4 / 5.0;
  static constexpr double kMinFactor = 0.2;
  static constexpr double kMaxFactor = 5.0;

  // Butcher tableau.
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  void resize(Index n) {
    if (k1_.size() == n) return;
    for (Vector* v : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &tmp_, &y_new_, &err_}) {
      v->resize(n);
    }
  }

  void stage(double t, const Vector& y, double h) {
    tmp_ = y + h * a21 * k1_;
    rhs_(t + c2 * h, tmp_, k2_);
    tmp_ = y + h * (a31 * k1_ + a32 * k2_);
    rhs_(t + c3 * h, tmp_, k3_);
    tmp_ = y + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
    rhs_(t + c4 * h, tmp_, k4_);
    tmp_ = y + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
    rhs_(t + c5 * h, tmp_, k5_);
    tmp_ = y + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
    rhs_(t + h, tmp_, k6_);
    y_new_ = y + h * (b1 * k1_ + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
    rhs_(t + h, y_new_, k7_);
    stats_.rhs_evals += 6;
    err_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
  }

  double error_norm(const Vector& y) const {
    const auto scale =
        (opt_.atol + opt_.rtol * y.cwiseAbs().cwiseMax(y_new_.cwiseAbs()).array()).eval();
    return (err_.cwiseAbs().array() / scale).maxCoeff();
  }

  double initial_step(double t, const Vector& y, double dir) {
    // Hairer-Norsett-Wanner starting step heuristic.
    if (opt_.h_init > 0.0) return opt_.h_init;
    const auto scale = (opt_.atol + opt_.rtol * y.cwiseAbs().array()).eval();
    const double d0 = (y.cwiseAbs().array() / scale).maxCoeff();
    const double d1 = (k1_.cwiseAbs().array() / scale).maxCoeff();
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    tmp_ = y + dir * h0 * k1_;
    rhs_(t + dir * h0, tmp_, k2_);
    ++stats_.rhs_evals;
    const double d2 = ((k2_ - k1_).cwiseAbs().array() / scale).maxCoeff() / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                 : std::pow(0.01 / std::max(d1, d2), 0.2);
    return std::min(100.0 * h0, h1);
  }

  Rhs rhs_;
  Options opt_;
  Stats stats_;
  double h_ = 0.0;
  double err_prev_ = 1e-4;
  Vector k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, y_new_, err_;
};

}  // namespace rotor::ode
