#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace simtrack {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr Complex kI{0.0, 1.0};

/// Spectral factorization H = i V diag(w) V^* of a skew-Hermitian matrix, used
/// to evaluate exp(tH) = V diag(e^{i t w}) V^* exactly unitary for any t.
class SkewExponential {
 public:
  explicit SkewExponential(const CMatrix& h) {
    CMatrix k = -kI * h;
    k = 0.5 * (k + k.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<CMatrix> es(k);
    vectors_ = es.eigenvectors();
    freqs_ = es.eigenvalues();
  }

  CMatrix operator()(double t) const {
    CVector d(freqs_.size());
    for (Eigen::Index r = 0; r < freqs_.size(); ++r) d(r) = std::polar(1.0, t * freqs_(r));
    return vectors_ * d.asDiagonal() * vectors_.adjoint();
  }

  const RVector& frequencies() const { return freqs_; }

 private:
  CMatrix vectors_;
  RVector freqs_;
};

inline CMatrix expm_skew(const CMatrix& h, double t = 1.0) {
  if (h.rows() == 0) return h;
  return SkewExponential(h)(t);
}

/// Principal logarithm of a unitary matrix (eigenphases in (-pi, pi]).
inline CMatrix logm_unitary(const CMatrix& u) {
  const Eigen::Index n = u.rows();
  if (n == 0) return u;
  Eigen::ComplexSchur<CMatrix> schur(u);
  const CMatrix& q = schur.matrixU();
  const CMatrix& t = schur.matrixT();
  CVector d(n);
  for (Eigen::Index r = 0; r < n; ++r) d(r) = kI * std::arg(t(r, r));
  return q * d.asDiagonal() * q.adjoint();
}

/// Bi-invariant distance ||log(a^* b)||_F on the unitary group.
inline double group_distance(const CMatrix& a, const CMatrix& b) {
  return logm_unitary(a.adjoint() * b).norm();
}

/// Real trace form <x, y> = Re tr(x^* y).
inline double trace_inner(const CMatrix& x, const CMatrix& y) {
  return (x.adjoint() * y).trace().real();
}

inline CMatrix skew_part(const CMatrix& x) { return 0.5 * (x - x.adjoint()); }

inline CMatrix traceless(const CMatrix& x) {
  if (x.rows() == 0) return x;
  CMatrix out = x;
  const Complex shift = x.trace() / static_cast<double>(x.rows());
  out.diagonal().array() -= shift;
  return out;
}

inline double operator_norm(const CMatrix& x) {
  if (x.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(x);
  return svd.singularValues()(0);
}

inline double unitarity_defect(const CMatrix& u) {
  return (u.adjoint() * u - CMatrix::Identity(u.cols(), u.cols())).norm();
}

/// Lawson-Hanson active set solver for min ||A x - b|| subject to x >= 0.
inline RVector nnls(const RMatrix& a, const RVector& b, int max_iter = 0) {
  const Eigen::Index n = a.cols();
  RVector x = RVector::Zero(n);
  if (n == 0) return x;
  if (max_iter <= 0) max_iter = static_cast<int>(3 * n + 30);
  std::vector<bool> passive(n, false);
  const double tol = 10.0 * std::numeric_limits<double>::epsilon() *
                     std::max(1.0, a.cwiseAbs().maxCoeff()) * static_cast<double>(std::max(a.rows(), n));

  auto solve_passive = [&](RVector& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[j]) idx.push_back(j);
    RMatrix sub(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = a.col(idx[c]);
    RVector s = sub.colPivHouseholderQr().solve(b);
    z.setZero();
    for (std::size_t c = 0; c < idx.size(); ++c) z(idx[c]) = s(static_cast<Eigen::Index>(c));
  };

  RVector w = a.transpose() * (b - a * x);
  RVector z(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[j] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) break;
    passive[best] = true;

    for (int inner = 0; inner < max_iter; ++inner) {
      solve_passive(z);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j] && z(j) <= 0.0) feasible = false;
      if (feasible) {
        x = z;
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && z(j) <= 0.0) {
          const double den = x(j) - z(j);
          alpha = std::min(alpha, den > 0.0 ? x(j) / den : 0.0);
        }
      }
      x += alpha * (z - x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && x(j) <= tol) {
          passive[j] = false;
          x(j) = 0.0;
        }
      }
    }
    w = a.transpose() * (b - a * x);
  }
  return x;
}

/// Least squares over the probability simplex: min ||C w - d||, w >= 0, sum w = 1.
/// The affine constraint enters as a heavily weighted extra row; the result is
/// renormalized so the weights sum to one up to rounding.
inline RVector simplex_least_squares(const RMatrix& c, const RVector& d) {
  const Eigen::Index n = c.cols();
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  const double rho = 1e4 * scale;
  RMatrix aug(c.rows() + 1, n);
  RVector rhs(c.rows() + 1);
  aug.topRows(c.rows()) = c;
  aug.row(c.rows()).setConstant(rho);
  rhs.head(c.rows()) = d;
  rhs(c.rows()) = rho;
  RVector w = nnls(aug, rhs);
  const double total = w.sum();
  if (total > 0.0) w /= total;
  return w;
}

/// Solves the Vandermonde system sum_j c_j x_j^k = r_k, k = 0..n-1, and reports
/// the 2-norm condition number of the system matrix.
inline RVector solve_vandermonde(const RVector& nodes, const RVector& rhs, double* condition = nullptr) {
  const Eigen::Index n = nodes.size();
  RMatrix v(n, n);
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index j = 0; j < n; ++j) v(k, j) = std::pow(nodes(j), static_cast<double>(k));
  if (condition) {
    Eigen::JacobiSVD<RMatrix> svd(v);
    const RVector& s = svd.singularValues();
    *condition = s(n - 1) > 0.0 ? s(0) / s(n - 1) : std::numeric_limits<double>::infinity();
  }
  return v.fullPivLu().solve(rhs);
}

}  // namespace simtrack
