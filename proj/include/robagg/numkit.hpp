#pragma once

// Dense symmetric linear algebra and the few special functions the rest of
// the library needs. Matrix kernels are templated on the scalar type and
// accept any Eigen expression.

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string>

#include "robagg/error.hpp"

namespace robagg {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Spectral decomposition A = Q diag(values) Q^T, eigenvalues descending.
template <typename Scalar>
struct EigDecomp {
  Vec<Scalar> values;
  Mat<Scalar> vectors;  // columns are eigenvectors
};

/// Relative tolerance used to accept a matrix as symmetric.
inline constexpr double kSymmetryTol = 1e-12;

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, double rel_tol = kSymmetryTol) {
  if (a.rows() != a.cols()) return false;
  using std::abs;
  const double scale = std::max(1.0, static_cast<double>(a.cwiseAbs().maxCoeff()));
  return static_cast<double>((a - a.transpose()).cwiseAbs().maxCoeff()) <= rel_tol * scale;
}

/// (A + A^T) / 2
template <typename Derived>
Mat<typename Derived::Scalar> symmetrize(const Eigen::MatrixBase<Derived>& a) {
  if (a.rows() != a.cols()) throw DomainError("symmetrize: matrix is not square");
  return (a + a.transpose()) / typename Derived::Scalar(2);
}

namespace detail {

template <typename Derived>
void require_symmetric(const Eigen::MatrixBase<Derived>& a, const char* who) {
  if (a.rows() == 0 || a.rows() != a.cols()) {
    std::ostringstream os;
    os << who << ": expected a non-empty square matrix, got " << a.rows() << "x" << a.cols();
    throw DomainError(os.str());
  }
  if (!is_symmetric(a)) throw DomainError(std::string(who) + ": matrix is not symmetric");
}

}  // namespace detail

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
/// The input is symmetrized before solving so round-off asymmetry below the
/// acceptance tolerance does not leak into the result.
template <typename Derived>
EigDecomp<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  detail::require_symmetric(a, "sym_eig");
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> solver(symmetrize(a));
  if (solver.info() != Eigen::Success) {
    const auto& ev = solver.eigenvalues();
    const double cond = std::abs(static_cast<double>(ev.cwiseAbs().maxCoeff())) /
                        std::max(static_cast<double>(ev.cwiseAbs().minCoeff()), 1e-300);
    std::ostringstream os;
    os << "sym_eig: eigen-solver did not converge (condition estimate " << cond << ")";
    throw NumericalError(os.str());
  }
  // Eigen returns ascending order.
  EigDecomp<Scalar> out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

/// B = A^{-1/2} computed as Q diag(lambda^{-1/2}) Q^T.
template <typename Derived>
Mat<typename Derived::Scalar> inv_sqrt_pd(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  const auto eig = sym_eig(a);
  const Scalar smallest = eig.values(eig.values.size() - 1);
  if (!(smallest > Scalar(0))) {
    std::ostringstream os;
    os << "inv_sqrt_pd: matrix is not positive definite (eigenvalue " << smallest << ")";
    throw NotPositiveDefinite(os.str(), static_cast<double>(smallest));
  }
  const Vec<Scalar> d = eig.values.array().rsqrt();
  Mat<Scalar> b = eig.vectors * d.asDiagonal() * eig.vectors.transpose();
  return symmetrize(b);
}

/// Half-vectorization: lower triangle stacked column by column.
template <typename Derived>
Vec<typename Derived::Scalar> vech(const Eigen::MatrixBase<Derived>& a) {
  if (a.rows() != a.cols()) throw DomainError("vech: matrix is not square");
  const Eigen::Index p = a.rows();
  Vec<typename Derived::Scalar> v(p * (p + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = j; i < p; ++i) v(k++) = a(i, j);
  return v;
}

/// Dimension p with p(p+1)/2 == len, or -1 when len is not triangular.
inline Eigen::Index vech_dim(Eigen::Index len) {
  Eigen::Index p = static_cast<Eigen::Index>(std::floor((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0));
  while (p * (p + 1) / 2 < len) ++p;
  return p * (p + 1) / 2 == len ? p : -1;
}

template <typename Derived>
Mat<typename Derived::Scalar> vech_inv(const Eigen::MatrixBase<Derived>& v, Eigen::Index p) {
  if (p < 1 || v.size() != p * (p + 1) / 2) {
    std::ostringstream os;
    os << "vech_inv: length " << v.size() << " does not match p=" << p;
    throw DomainError(os.str());
  }
  Mat<typename Derived::Scalar> a(p, p);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = j; i < p; ++i) a(i, j) = a(j, i) = v(k++);
  return a;
}

/// Nearest matrix (Frobenius) with every eigenvalue >= eps. Near-symmetric
/// input is symmetrized first; an input whose eigenvalues already clear eps
/// is returned unchanged.
template <typename Derived>
Mat<typename Derived::Scalar> pd_project(const Eigen::MatrixBase<Derived>& a,
                                         typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  if (!(eps > Scalar(0))) throw DomainError("pd_project: eps must be positive");
  Mat<Scalar> s = symmetrize(a);
  const auto eig = sym_eig(s);
  if (eig.values.minCoeff() >= eps) return s;
  const Vec<Scalar> clipped = eig.values.cwiseMax(eps);
  Mat<Scalar> out = eig.vectors * clipped.asDiagonal() * eig.vectors.transpose();
  return symmetrize(out);
}

template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& a) {
  const auto eig = sym_eig(a);
  return eig.values(eig.values.size() - 1);
}

struct NormalEval {
  double pdf;
  double cdf;
};

/// Standard normal density and distribution function at u.
NormalEval std_normal(double u);

/// Upper-alpha quantile of the chi-squared law: t with P(X > t) = alpha.
double chi2_quantile(int dof, double alpha);

/// P(X > t) for X ~ chi-squared(dof).
double chi2_upper_tail(int dof, double t);

}  // namespace robagg
