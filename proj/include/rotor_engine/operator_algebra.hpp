#pragma once

// Composite qubit (x) rotor operator algebra.
//
// Composite index convention: |q> (x) |l>  ->  q * D + (l - l_min), with the qubit
// ordered |g> = 0, |e> = 1. All rotor operators live on the hard-truncated window
// [l_min, l_max]; e^{i phi} annihilates |l_max> (no wrap-around).

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>

#include "rotor_engine/bessel.hpp"
#include "rotor_engine/common.hpp"

namespace rotor {

class RotorBasis {
 public:
  RotorBasis(int l_min, int l_max) : l_min_(l_min), l_max_(l_max) {
    detail::require(l_min < 0 && l_max > 0,
                    "RotorBasis: window [" + std::to_string(l_min) + ", " + std::to_string(l_max) +
                        "] must contain l = 0 in its interior");
  }

  int l_min() const { return l_min_; }
  int l_max() const { return l_max_; }
  Index dim() const { return l_max_ - l_min_ + 1; }
  Index index_of(int l) const {
    detail::require(contains(l), "RotorBasis: l=" + std::to_string(l) + " outside window");
    return l - l_min_;
  }
  int l_at(Index i) const { return l_min_ + static_cast<int>(i); }
  bool contains(int l) const { return l >= l_min_ && l <= l_max_; }

  /// Angular momentum quantum numbers of the basis states, in index order.
  Eigen::VectorXd momenta() const {
    return Eigen::VectorXd::LinSpaced(dim(), l_min_, l_max_);
  }

  bool operator==(const RotorBasis&) const = default;

 private:
  int l_min_;
  int l_max_;
};

struct RotorOperators {
  Eigen::VectorXd l;       // diagonal of L (units hbar)
  SparseMatrixXc L;        // diag(l)
  SparseMatrixXc raise;    // e^{i phi}: |l> -> |l+1>
  SparseMatrixXc cos_phi;  // (raise + raise^dag) / 2
  SparseMatrixXc sin_phi;  // (raise - raise^dag) / 2i
  SparseMatrixXc identity;

  explicit RotorOperators(const RotorBasis& basis) {
    const Index d = basis.dim();
    l = basis.momenta();
    L = SparseMatrixXc(d, d);
    raise = SparseMatrixXc(d, d);
    identity = SparseMatrixXc(d, d);
    std::vector<Eigen::Triplet<cplx>> diag, up;
    for (Index i = 0; i < d; ++i) {
      diag.emplace_back(i, i, cplx(l[i], 0.0));
      if (i + 1 < d) up.emplace_back(i + 1, i, cplx(1.0, 0.0));
    }
    L.setFromTriplets(diag.begin(), diag.end());
    raise.setFromTriplets(up.begin(), up.end());
    identity.setIdentity();
    const SparseMatrixXc lower = raise.adjoint();
    cos_phi = 0.5 * (raise + lower);
    sin_phi = cplx(0.0, -0.5) * (raise - lower);
  }

  Index dim() const { return l.size(); }
};

struct QubitOperators {
  MatrixXc sigma_plus = MatrixXc::Zero(2, 2);   // |e><g|
  MatrixXc sigma_minus = MatrixXc::Zero(2, 2);  // |g><e|
  MatrixXc proj_e = MatrixXc::Zero(2, 2);
  MatrixXc proj_g = MatrixXc::Zero(2, 2);
  MatrixXc identity = MatrixXc::Identity(2, 2);

  QubitOperators() {
    sigma_plus(1, 0) = 1.0;
    sigma_minus(0, 1) = 1.0;
    proj_e(1, 1) = 1.0;
    proj_g(0, 0) = 1.0;
  }

  static constexpr Index kGround = 0;
  static constexpr Index kExcited = 1;
};

/// (A (x) B)[i*rows(B)+k, j*cols(B)+l] = A[i,j] B[k,l].
inline MatrixXc kron(const MatrixXc& a, const MatrixXc& b) {
  MatrixXc out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

inline SparseMatrixXc kron(const SparseMatrixXc& a, const SparseMatrixXc& b) {
  SparseMatrixXc out = Eigen::kroneckerProduct(a, b);
  out.makeCompressed();
  return out;
}

/// D[A] rho = A rho A^dag - (A^dag A rho + rho A^dag A) / 2.
inline MatrixXc dissipator_apply(const MatrixXc& a, const MatrixXc& rho) {
  detail::require(a.rows() == a.cols(), "dissipator_apply: jump operator must be square");
  detail::require(rho.rows() == rho.cols() && rho.rows() == a.rows(),
                  "dissipator_apply: dimension mismatch between jump operator and state");
  const MatrixXc ada = a.adjoint() * a;
  return a * rho * a.adjoint() - 0.5 * (ada * rho + rho * ada);
}

/// f(phi) = offset + sin_coeff * sin(phi) + cos_coeff * cos(phi).
/// Every coupling function used by the engine models is of this form, so the
/// operator version stays tridiagonal in the momentum basis.
struct TrigCoupling {
  double offset = 1.0;
  double sin_coeff = 0.0;
  double cos_coeff = 0.0;

  double value(double phi) const {
    return offset + sin_coeff * std::sin(phi) + cos_coeff * std::cos(phi);
  }
  double derivative(double phi) const {
    return sin_coeff * std::cos(phi) - cos_coeff * std::sin(phi);
  }
  bool is_constant() const { return sin_coeff == 0.0 && cos_coeff == 0.0; }

  SparseMatrixXc op(const RotorOperators& ops) const {
    SparseMatrixXc out = offset * ops.identity + sin_coeff * ops.sin_phi + cos_coeff * ops.cos_phi;
    out.prune(cplx(0.0, 0.0));
    return out;
  }
  SparseMatrixXc derivative_op(const RotorOperators& ops) const {
    SparseMatrixXc out = sin_coeff * ops.cos_phi - cos_coeff * ops.sin_phi;
    out.prune(cplx(0.0, 0.0));
    return out;
  }

  bool operator==(const TrigCoupling&) const = default;
};

/// Hot and cold bath modulation functions.
struct CouplingFunctions {
  TrigCoupling hot{0.5, 0.5, 0.0};  // (1 + sin phi) / 2
  TrigCoupling cold{1.0, 0.0, 0.0};

  static CouplingFunctions piston() { return {}; }
  bool operator==(const CouplingFunctions&) const = default;
};

struct CouplingValues {
  double f_h, f_c, df_h, df_c;
};

inline CouplingValues coupling_functions(double phi,
                                         const CouplingFunctions& f = CouplingFunctions::piston()) {
  return {f.hot.value(phi), f.cold.value(phi), f.hot.derivative(phi), f.cold.derivative(phi)};
}

struct VonMisesState {
  VectorXc coefficients;  // rotor amplitudes c_l in basis index order
  double norm_deficit;    // 1 - (weight inside window) / (total weight)
};

/// Periodic von Mises packet <phi|psi> ~ exp(cos(phi - mu) / (2 sigma2)), expanded
/// as c_l = e^{-i l mu} I_l(1/(2 sigma2)) and renormalized inside the window.
/// sigma2 = +inf gives the uniform angle state |l = 0>.
inline VonMisesState von_mises_state(double mu, double sigma2, const RotorBasis& basis,
                                     double max_deficit = 1e-6) {
  detail::require(sigma2 > 0.0, "von_mises_state: sigma_phi^2 must be > 0");
  const Index d = basis.dim();
  VectorXc c = VectorXc::Zero(d);
  if (std::isinf(sigma2)) {
    c[basis.index_of(0)] = 1.0;
    return {c, 0.0};
  }
  const double x = 1.0 / (2.0 * sigma2);
  const int reach = std::max(-basis.l_min(), basis.l_max());
  const double extent = std::max(static_cast<double>(reach), x);
  const int l_all = static_cast<int>(extent + 30.0 + std::ceil(std::sqrt(60.0 * extent)));
  const std::vector<double> in = scaled_bessel_i_sequence(x, l_all);

  double total = in[0] * in[0];
  for (int l = 1; l <= l_all; ++l) total += 2.0 * in[static_cast<std::size_t>(l)] * in[static_cast<std::size_t>(l)];
  double inside = 0.0;
  for (Index i = 0; i < d; ++i) {
    const int l = basis.l_at(i);
    const double amp = in[static_cast<std::size_t>(std::abs(l))];
    c[i] = std::polar(amp, -static_cast<double>(l) * mu);
    inside += amp * amp;
  }
  const double deficit = std::max(0.0, 1.0 - inside / total);
  if (deficit > max_deficit) {
    throw TruncationError("von_mises_state: momentum spread exceeds window (norm deficit " +
                          std::to_string(deficit) + ")");
  }
  c /= c.norm();
  return {c, deficit};
}

}  // namespace rotor
