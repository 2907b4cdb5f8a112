#pragma once

// Lindblad generator acting on a density matrix stored as a list of square blocks.
//
// Each block b evolves as
//   d rho_b / dt = -i [diag(E_b), rho_b] + M_b rho_b + rho_b M_b^dag
//                  + sum_{jumps k: dst = b} r_k J_k rho_{src_k} J_k^dag,
// with M_b = -i H_b - 1/2 sum_{k: src = b} r_k J_k^dag J_k (sparse). The diagonal
// Hamiltonian E_b is kept separate so it can be integrated exactly in the
// interaction picture.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "rotor_engine/common.hpp"

namespace rotor {

/// A sparse square matrix stored by diagonals; A(i, i + k) = diag[k][i]. Products with dense
/// column-major matrices run as contiguous vector updates, which is much faster than a generic
/// sparse-dense product for the narrow bands used here.
class BandedOp {
 public:
  BandedOp() = default;
  explicit BandedOp(const SparseMatrixXc& a) : n_(a.rows()) {
    detail::require(a.rows() == a.cols(), "BandedOp: matrix must be square");
    std::map<Index, VectorXc> diags;
    for (Index k = 0; k < a.outerSize(); ++k) {
      for (SparseMatrixXc::InnerIterator it(a, k); it; ++it) {
        if (it.value() == cplx(0.0, 0.0)) continue;
        const Index off = it.col() - it.row();
        auto [pos, fresh] = diags.try_emplace(off, VectorXc::Zero(n_));
        pos->second[it.row()] = it.value();
      }
    }
    for (auto& [off, v] : diags) {
      offsets_.push_back(off);
      values_.push_back(std::move(v));
    }
  }

  Index num_diagonals() const { return static_cast<Index>(offsets_.size()); }
  bool is_diagonal() const { return offsets_.size() == 1 && offsets_[0] == 0; }
  const VectorXc& main_diagonal() const { return values_.front(); }

  /// y = A x (overwrite) or y += A x (accumulate).
  template <typename Dst, typename Src>
  void multiply(const Src& x, Dst& y, bool accumulate) const {
    if (!accumulate) y.setZero();
    const Index cols = x.cols();
    for (Index c = 0; c < cols; ++c) {
      for (std::size_t d = 0; d < offsets_.size(); ++d) {
        const Index k = offsets_[d];
        const Index i0 = std::max<Index>(0, -k);
        const Index len = n_ - std::abs(k);
        if (len <= 0) continue;
        y.col(c).segment(i0, len).array() +=
            values_[d].segment(i0, len).array() * x.col(c).segment(i0 + k, len).array();
      }
    }
  }

 private:
  Index n_ = 0;
  std::vector<Index> offsets_;
  std::vector<VectorXc> values_;
};

struct JumpTerm {
  int src = 0;
  int dst = 0;
  double rate = 0.0;
  SparseMatrixXc op;
  SparseMatrixXc op_adj;
  BandedOp banded;
};

class BlockLindbladian {
 public:
  explicit BlockLindbladian(std::vector<Index> dims) : dims_(std::move(dims)) {
    offsets_.reserve(dims_.size());
    Index off = 0;
    for (Index d : dims_) {
      offsets_.push_back(off);
      off += d * d;
      free_energy_.push_back(Eigen::VectorXd::Zero(d));
      SparseMatrixXc z(d, d);
      drift_.push_back(z);
      drift_banded_.emplace_back(z);
    }
    size_ = off;
  }

  int num_blocks() const { return static_cast<int>(dims_.size()); }
  Index block_dim(int b) const { return dims_[static_cast<std::size_t>(b)]; }
  Index block_offset(int b) const { return offsets_[static_cast<std::size_t>(b)]; }
  /// Length of the vectorized state (sum of squared block dimensions).
  Index size() const { return size_; }

  const Eigen::VectorXd& free_energy(int b) const { return free_energy_[static_cast<std::size_t>(b)]; }
  const SparseMatrixXc& drift(int b) const { return drift_[static_cast<std::size_t>(b)]; }
  const std::vector<JumpTerm>& jumps() const { return jumps_; }

  void set_free_energy(int b, Eigen::VectorXd e) {
    detail::require(e.size() == block_dim(b), "BlockLindbladian: free energy dimension mismatch");
    free_energy_[static_cast<std::size_t>(b)] = std::move(e);
  }

  /// Adds -i H to block b's drift.
  void add_hamiltonian(int b, const SparseMatrixXc& h) { add_drift(b, cplx(0.0, -1.0) * h); }

  void add_drift(int b, const SparseMatrixXc& m) {
    detail::require(m.rows() == block_dim(b) && m.cols() == block_dim(b),
                    "BlockLindbladian: drift dimension mismatch");
    SparseMatrixXc& d = drift_[static_cast<std::size_t>(b)];
    d = d + m;
    d.prune(cplx(0.0, 0.0));
    d.makeCompressed();
    drift_banded_[static_cast<std::size_t>(b)] = BandedOp(d);
  }

  /// Adds rate * D[op] mapping block src into block dst.
  void add_jump(int src, int dst, double rate, const SparseMatrixXc& op) {
    detail::require(rate >= 0.0, "BlockLindbladian: negative jump rate");
    detail::require(op.rows() == block_dim(dst) && op.cols() == block_dim(src),
                    "BlockLindbladian: jump operator dimension mismatch");
    if (rate == 0.0 || op.nonZeros() == 0) return;
    JumpTerm j{src, dst, rate, op, op.adjoint(), BandedOp(op)};
    j.op.makeCompressed();
    j.op_adj.makeCompressed();
    SparseMatrixXc loss = (-0.5 * rate) * (j.op_adj * j.op);
    add_drift(src, loss);
    jumps_.push_back(std::move(j));
  }

  using BlockMap = Eigen::Map<MatrixXc>;
  using ConstBlockMap = Eigen::Map<const MatrixXc>;

  BlockMap block(VectorXc& v, int b) const {
    return BlockMap(v.data() + block_offset(b), block_dim(b), block_dim(b));
  }
  ConstBlockMap block(const VectorXc& v, int b) const {
    return ConstBlockMap(v.data() + block_offset(b), block_dim(b), block_dim(b));
  }

  /// out = L(in) in the Schroedinger picture. With assume_hermitian, out = L(herm(in)):
  /// the anti-Hermitian part of each block is discarded (it would otherwise be propagated by
  /// a non-dissipative map and amplify round-off), and right-multiplied halves come from adjoints.
  void apply(const VectorXc& in, VectorXc& out, bool include_free = true,
             bool assume_hermitian = false) const {
    out.resize(size_);
    const VectorXc* src = &in;
    if (assume_hermitian) {
      herm_.resize(size_);
      for (int b = 0; b < num_blocks(); ++b) {
        block(herm_, b) = 0.5 * (block(in, b) + block(in, b).adjoint());
      }
      src = &herm_;
    }
    for (int b = 0; b < num_blocks(); ++b) {
      auto x = block(*src, b);
      auto y = block(out, b);
      const SparseMatrixXc& m = drift_[static_cast<std::size_t>(b)];
      if (assume_hermitian) {
        tmp_.resize(x.rows(), x.cols());
        drift_banded_[static_cast<std::size_t>(b)].multiply(x, tmp_, false);
        y = tmp_ + tmp_.adjoint();
      } else {
        y.noalias() = m * x;
        y.noalias() += x * SparseMatrixXc(m.adjoint());
      }
      if (include_free) {
        const Eigen::VectorXd& e = free_energy_[static_cast<std::size_t>(b)];
        const Index d = block_dim(b);
        for (Index c = 0; c < d; ++c) {
          for (Index a = 0; a < d; ++a) y(a, c) += cplx(0.0, -(e[a] - e[c])) * x(a, c);
        }
      }
    }
    for (const JumpTerm& j : jumps_) {
      auto x = block(*src, j.src);
      auto y = block(out, j.dst);
      if (assume_hermitian && j.banded.is_diagonal()) {
        const VectorXc& dj = j.banded.main_diagonal();
        const Index n = dj.size();
        for (Index c = 0; c < n; ++c) {
          y.col(c).array() += (j.rate * std::conj(dj[c])) * dj.array() * x.col(c).array();
        }
      } else if (assume_hermitian) {
        // J (J X)^dag = J X J^dag for Hermitian X.
        tmp_.resize(j.op.rows(), x.cols());
        j.banded.multiply(x, tmp_, false);
        tmp3_ = j.rate * tmp_.adjoint();
        tmp2_.resize(j.op.rows(), tmp3_.cols());
        j.banded.multiply(tmp3_, tmp2_, false);
        y += tmp2_;
      } else {
        tmp_.noalias() = j.op * x;
        y.noalias() += j.rate * (tmp_ * j.op_adj);
      }
    }
  }

  /// Right-hand side in the interaction picture of the free diagonal energies:
  /// rho~ = U^dag rho U with U = exp(-i E t), so only M and the jumps act.
  void apply_interaction(double t, const VectorXc& in, VectorXc& out) const {
    work_ = in;
    rotate(work_, t, +1);
    apply(work_, out, false, true);
    rotate(out, t, -1);
  }

  /// rho -> U rho U^dag (sign = +1) or U^dag rho U (sign = -1), U = exp(-i E t).
  void rotate(VectorXc& v, double t, int sign) const {
    for (int b = 0; b < num_blocks(); ++b) {
      const Eigen::VectorXd& e = free_energy_[static_cast<std::size_t>(b)];
      if (e.isZero(0.0)) continue;
      const Index d = block_dim(b);
      VectorXc u(d);
      for (Index a = 0; a < d; ++a) u[a] = std::polar(1.0, -sign * e[a] * t);
      auto x = block(v, b);
      x.array().colwise() *= u.array();
      x.array().rowwise() *= u.conjugate().transpose().array();
    }
  }

  /// Full sparse superoperator on the column-major vectorized blocks.
  SparseMatrixXc assemble(bool include_free = true) const {
    std::vector<Eigen::Triplet<cplx>> trip;
    for (int b = 0; b < num_blocks(); ++b) {
      const Index d = block_dim(b);
      const Index off = block_offset(b);
      const SparseMatrixXc& m = drift_[static_cast<std::size_t>(b)];
      SparseMatrixXc eye(d, d);
      eye.setIdentity();
      append_kron(trip, eye, m, off, off, 1.0);                        // M X
      append_kron(trip, SparseMatrixXc(m.conjugate()), eye, off, off, 1.0);  // X M^dag
      if (include_free) {
        const Eigen::VectorXd& e = free_energy_[static_cast<std::size_t>(b)];
        for (Index c = 0; c < d; ++c) {
          for (Index a = 0; a < d; ++a) {
            const double w = e[a] - e[c];
            if (w != 0.0) trip.emplace_back(off + a + c * d, off + a + c * d, cplx(0.0, -w));
          }
        }
      }
    }
    for (const JumpTerm& j : jumps_) {
      append_kron(trip, SparseMatrixXc(j.op.conjugate()), j.op, block_offset(j.dst),
                  block_offset(j.src), j.rate);
    }
    SparseMatrixXc out(size_, size_);
    out.setFromTriplets(trip.begin(), trip.end());
    out.makeCompressed();
    return out;
  }

 private:
  // Adds coef * kron(A, B) placed at (row_off, col_off).
  static void append_kron(std::vector<Eigen::Triplet<cplx>>& trip, const SparseMatrixXc& a,
                          const SparseMatrixXc& b, Index row_off, Index col_off, double coef) {
    for (Index ka = 0; ka < a.outerSize(); ++ka) {
      for (SparseMatrixXc::InnerIterator ia(a, ka); ia; ++ia) {
        for (Index kb = 0; kb < b.outerSize(); ++kb) {
          for (SparseMatrixXc::InnerIterator ib(b, kb); ib; ++ib) {
            trip.emplace_back(row_off + ia.row() * b.rows() + ib.row(),
                              col_off + ia.col() * b.cols() + ib.col(),
                              coef * ia.value() * ib.value());
          }
        }
      }
    }
  }

  std::vector<Index> dims_;
  std::vector<Index> offsets_;
  Index size_ = 0;
  std::vector<Eigen::VectorXd> free_energy_;
  std::vector<SparseMatrixXc> drift_;
  std::vector<JumpTerm> jumps_;
  std::vector<BandedOp> drift_banded_;
  mutable MatrixXc tmp_, tmp2_, tmp3_;
  mutable VectorXc work_, herm_;
};

}  // namespace rotor
