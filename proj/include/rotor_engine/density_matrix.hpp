#pragma once

#include <algorithm>
#include <cmath>

#include "rotor_engine/common.hpp"

namespace rotor {

/// State on qubit (x) rotor, ordered |q> (x) |l>.
class DensityMatrix {
 public:
  DensityMatrix(MatrixXc data, Index rotor_dim) : data_(std::move(data)), rotor_dim_(rotor_dim) {
    detail::require(data_.rows() == data_.cols() && data_.rows() == 2 * rotor_dim_,
                    "DensityMatrix: expected a square (2 D) x (2 D) matrix");
  }

  static DensityMatrix product(const MatrixXc& qubit, const MatrixXc& rotor) {
    detail::require(qubit.rows() == 2 && qubit.cols() == 2, "DensityMatrix: qubit factor must be 2x2");
    MatrixXc out(2 * rotor.rows(), 2 * rotor.cols());
    for (Index i = 0; i < 2; ++i)
      for (Index j = 0; j < 2; ++j)
        out.block(i * rotor.rows(), j * rotor.cols(), rotor.rows(), rotor.cols()) = qubit(i, j) * rotor;
    return {std::move(out), rotor.rows()};
  }

  const MatrixXc& matrix() const { return data_; }
  MatrixXc& matrix() { return data_; }
  Index rotor_dim() const { return rotor_dim_; }
  Index dim() const { return data_.rows(); }

  auto block(Index qi, Index qj) const {
    return data_.block(qi * rotor_dim_, qj * rotor_dim_, rotor_dim_, rotor_dim_);
  }

  double trace_error() const { return std::abs(data_.trace() - cplx(1.0, 0.0)); }
  double hermiticity_error() const { return (data_ - data_.adjoint()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<MatrixXc> es(data_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }
  /// Frobenius norm of the <g|.|e> block.
  double coherence_norm() const { return block(0, 1).norm(); }

  /// Partial trace over the qubit.
  MatrixXc rotor_state() const { return block(0, 0) + block(1, 1); }

 private:
  MatrixXc data_;
  Index rotor_dim_;
};

/// Qubit-diagonal composite state stored as its two rotor blocks.
struct QubitDiagonalState {
  MatrixXc gg;  // <g| rho |g>
  MatrixXc ee;  // <e| rho |e>

  static QubitDiagonalState from_density(const DensityMatrix& rho, double tolerance = 1e-12) {
    detail::require(rho.coherence_norm() <= tolerance,
                    "QubitDiagonalState: state carries qubit coherence");
    return {rho.block(0, 0), rho.block(1, 1)};
  }

  DensityMatrix to_density() const {
    const Index d = gg.rows();
    MatrixXc m = MatrixXc::Zero(2 * d, 2 * d);
    m.topLeftCorner(d, d) = gg;
    m.bottomRightCorner(d, d) = ee;
    return {std::move(m), d};
  }

  Index rotor_dim() const { return gg.rows(); }
  MatrixXc rotor_state() const { return gg + ee; }
  double trace() const { return (gg.trace() + ee.trace()).real(); }
  double excited_population() const { return ee.trace().real(); }
  double hermiticity_error() const {
    return std::max((gg - gg.adjoint()).cwiseAbs().maxCoeff(), (ee - ee.adjoint()).cwiseAbs().maxCoeff());
  }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<MatrixXc> a(gg, Eigen::EigenvaluesOnly), b(ee, Eigen::EigenvaluesOnly);
    return std::min(a.eigenvalues().minCoeff(), b.eigenvalues().minCoeff());
  }
};

}  // namespace rotor
