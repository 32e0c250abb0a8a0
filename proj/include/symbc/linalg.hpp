#pragma once

#include <Eigen/Dense>
#include <algorithm>

namespace symbc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative singular-value threshold used for every rank decision.
inline constexpr double rank_tol = 1e-10;

/// Threshold on projector distance for span equality and containment.
inline constexpr double span_tol = 1e-10;

namespace linalg {

// BDCSVD switches to one-sided Jacobi below 16 columns and stays fast on the
// graph matrices (2n x n) used for defect computations.
using Svd = Eigen::BDCSVD<Matrix>;

inline Svd svd_full(const Matrix& a) { return Svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV); }

/// Number of singular values above `rel_tol * sigma_max`.
inline int rank_of(const Svd& svd, double rel_tol = rank_tol) {
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double cut = rel_tol * s(0);
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cut) ++r;
    return r;
}

inline int numerical_rank(const Matrix& a, double rel_tol = rank_tol) {
    if (a.rows() == 0 || a.cols() == 0) return 0;
    return rank_of(svd_full(a), rel_tol);
}

/// Orthonormal basis of the column span.
inline Matrix orth(const Matrix& a, double rel_tol = rank_tol) {
    if (a.rows() == 0 || a.cols() == 0) return Matrix(a.rows(), 0);
    const auto svd = svd_full(a);
    const int r = rank_of(svd, rel_tol);
    return svd.matrixU().leftCols(r);
}

/// Orthonormal basis of ker(a). A matrix with no rows has the whole space as kernel.
inline Matrix null_space(const Matrix& a, double rel_tol = rank_tol) {
    const Eigen::Index n = a.cols();
    if (a.rows() == 0) return Matrix::Identity(n, n);
    const auto svd = svd_full(a);
    const int r = rank_of(svd, rel_tol);
    return svd.matrixV().rightCols(n - r);
}

/// Orthogonal projector onto the span of an orthonormal basis.
inline Matrix projector_from_orthonormal(const Matrix& q) {
    return q * q.transpose();
}

inline double spectral_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Svd svd(a);
    return svd.singularValues()(0);
}

/// Smallest over largest singular value (0 for singular, 1 for orthogonal).
inline double inverse_condition(const Matrix& a) {
    if (a.size() == 0) return 1.0;
    Svd svd(a);
    const auto& s = svd.singularValues();
    if (s(0) == 0.0) return 0.0;
    return s(s.size() - 1) / s(0);
}

}  // namespace linalg
}  // namespace symbc
