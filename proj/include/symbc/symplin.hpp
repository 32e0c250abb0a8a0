#pragma once

// Finite-dimensional symplectic linear algebra.
//
// Pairing convention throughout the library: omega(u, v) = (Omega u, v) = v^T Omega u.

#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include "symbc/errors.hpp"
#include "symbc/linalg.hpp"

namespace symbc {

/// A nondegenerate skew form on R^{2m}. Immutable after construction.
class SymplecticForm {
public:
    /// Validates skewness (exact, as stored) and invertibility (SVD, rank_tol).
    explicit SymplecticForm(Matrix omega) : omega_(std::move(omega)) {
        if (omega_.rows() != omega_.cols() || omega_.rows() == 0 || omega_.rows() % 2 != 0)
            throw invalid_argument("SymplecticForm: omega must be a nonempty square matrix of even size");
        if (!omega_.allFinite()) throw invalid_argument("SymplecticForm: omega has non-finite entries");
        if ((omega_ + omega_.transpose()).cwiseAbs().maxCoeff() != 0.0)
            throw invalid_argument("SymplecticForm: omega is not skew");
        if (linalg::numerical_rank(omega_) < omega_.rows())
            throw degenerate_form("SymplecticForm: omega is singular");
        inverse_ = omega_.fullPivLu().inverse();
        norm_ = linalg::spectral_norm(omega_);
        inverse_norm_ = linalg::spectral_norm(inverse_);
    }

    int dim() const noexcept { return static_cast<int>(omega_.rows()); }
    int half_dim() const noexcept { return dim() / 2; }
    const Matrix& omega() const noexcept { return omega_; }
    const Matrix& inverse() const noexcept { return inverse_; }
    double norm() const noexcept { return norm_; }
    double inverse_norm() const noexcept { return inverse_norm_; }
    double condition() const noexcept { return norm_ * inverse_norm_; }

    double pair(const Vector& u, const Vector& v) const { return v.dot(omega_ * u); }

    /// Gram matrix G(i, j) = omega(a_i, b_j) over columns.
    Matrix pairing(const Matrix& a, const Matrix& b) const { return (omega_ * a).transpose() * b; }

private:
    Matrix omega_;
    Matrix inverse_;
    double norm_ = 0.0;
    double inverse_norm_ = 0.0;
};

/// Omega_can = [[0, I], [-I, 0]] on R^{2m}.
inline SymplecticForm standard_form(int m) {
    if (m < 1) throw invalid_argument("standard_form: m must be positive");
    Matrix omega = Matrix::Zero(2 * m, 2 * m);
    omega.topRightCorner(m, m).setIdentity();
    omega.bottomLeftCorner(m, m) = -Matrix::Identity(m, m);
    return SymplecticForm(std::move(omega));
}

/// Linear subspace of R^n given by a full-column-rank basis (possibly n x 0).
class Subspace {
public:
    /// Takes the basis as given; rejects rank-deficient input.
    explicit Subspace(Matrix basis) : basis_(std::move(basis)) {
        if (!basis_.allFinite()) throw invalid_argument("Subspace: basis has non-finite entries");
        if (basis_.cols() > basis_.rows()) throw invalid_argument("Subspace: more columns than ambient dimension");
        if (linalg::numerical_rank(basis_) != basis_.cols())
            throw invalid_argument("Subspace: basis is not of full column rank");
        orthonormal_ = basis_.cols() == 0 ? Matrix(basis_.rows(), 0) : linalg::orth(basis_);
    }

    /// Span of arbitrary columns; dependent columns are dropped.
    static Subspace span_of(const Matrix& columns) { return Subspace(linalg::orth(columns)); }
    static Subspace zero(int ambient) { return Subspace(Matrix(ambient, 0)); }
    static Subspace full(int ambient) { return Subspace(Matrix::Identity(ambient, ambient)); }

    int dim() const noexcept { return static_cast<int>(basis_.cols()); }
    int ambient_dim() const noexcept { return static_cast<int>(basis_.rows()); }
    const Matrix& basis() const noexcept { return basis_; }
    const Matrix& orthonormal_basis() const noexcept { return orthonormal_; }
    Matrix projector() const { return linalg::projector_from_orthonormal(orthonormal_); }

    /// Largest distance of a unit vector of `other` from this span.
    double excess(const Subspace& other) const {
        if (other.dim() == 0) return 0.0;
        const Matrix out = other.orthonormal_ - orthonormal_ * (orthonormal_.transpose() * other.orthonormal_);
        return linalg::spectral_norm(out);
    }
    bool contains(const Subspace& other, double tol = span_tol) const { return excess(other) <= tol; }

private:
    Matrix basis_;
    Matrix orthonormal_;
};

/// Spectral-norm distance between the orthogonal projectors of two subspaces.
inline double projector_distance(const Subspace& a, const Subspace& b) {
    if (a.ambient_dim() != b.ambient_dim()) throw invalid_argument("projector_distance: ambient dimension mismatch");
    return linalg::spectral_norm(a.projector() - b.projector());
}

inline bool same_span(const Subspace& a, const Subspace& b, double tol = span_tol) {
    return a.dim() == b.dim() && projector_distance(a, b) <= tol;
}

/// Matrix Theta presenting L = ker(Theta).
struct KernelPresentation {
    Matrix theta;

    explicit KernelPresentation(Matrix t) : theta(std::move(t)) {
        if (theta.rows() > theta.cols()) throw invalid_argument("KernelPresentation: more rows than ambient dimension");
        if (!theta.allFinite()) throw invalid_argument("KernelPresentation: non-finite entries");
    }

    Subspace kernel() const { return Subspace(linalg::null_space(theta)); }
};

enum class SubspaceKind { isotropic_only, coisotropic_only, lagrangian, neither };

inline std::string_view to_string(SubspaceKind k) {
    switch (k) {
        case SubspaceKind::isotropic_only: return "isotropic_only";
        case SubspaceKind::coisotropic_only: return "coisotropic_only";
        case SubspaceKind::lagrangian: return "lagrangian";
        case SubspaceKind::neither: return "neither";
    }
    return "neither";
}

/// Verdict plus the evidence it was based on.
///
/// For classify_subspace the residuals are containment excesses between
/// orthonormal bases of L and its omega-complement. For lagrangian_kernel_test
/// the coisotropy residual is ||Theta Omega^-1 Theta^T|| relative to
/// ||Theta||^2 ||Omega^-1||, and the isotropy residual is the same value when
/// the kernel has dimension m and +inf otherwise (a kernel larger than m
/// cannot be isotropic).
struct SubspaceClass {
    SubspaceKind kind = SubspaceKind::neither;
    int dim = 0;
    double isotropy_residual = 0.0;
    double coisotropy_residual = 0.0;

    bool isotropic() const { return kind == SubspaceKind::isotropic_only || kind == SubspaceKind::lagrangian; }
    bool coisotropic() const { return kind == SubspaceKind::coisotropic_only || kind == SubspaceKind::lagrangian; }
    bool lagrangian() const { return kind == SubspaceKind::lagrangian; }
};

inline SubspaceKind kind_from(bool isotropic, bool coisotropic) {
    if (isotropic && coisotropic) return SubspaceKind::lagrangian;
    if (isotropic) return SubspaceKind::isotropic_only;
    if (coisotropic) return SubspaceKind::coisotropic_only;
    return SubspaceKind::neither;
}

namespace detail {
inline void require_ambient(const SymplecticForm& form, const Subspace& l, const char* who) {
    if (l.ambient_dim() != form.dim())
        throw invalid_argument(std::string(who) + ": subspace lives in R^" + std::to_string(l.ambient_dim()) +
                               " but the form acts on R^" + std::to_string(form.dim()));
}
}  // namespace detail

/// L^{perp omega} = {v : omega(u, v) = 0 for all u in L}, computed as the
/// orthogonal complement of Omega(L).
inline Subspace omega_complement(const SymplecticForm& form, const Subspace& l) {
    detail::require_ambient(form, l, "omega_complement");
    const Matrix image = form.omega() * l.orthonormal_basis();
    return Subspace(linalg::null_space(image.transpose()));
}

/// Isotropic iff L is inside its omega-complement, coisotropic iff the
/// complement is inside L. `tol` is scaled by the condition number of the form.
inline SubspaceClass classify_subspace(const SymplecticForm& form, const Subspace& l, double tol = span_tol) {
    detail::require_ambient(form, l, "classify_subspace");
    const Subspace comp = omega_complement(form, l);
    SubspaceClass out;
    out.dim = l.dim();
    out.isotropy_residual = comp.excess(l);
    out.coisotropy_residual = l.excess(comp);
    const double cut = tol * form.condition();
    out.kind = kind_from(out.isotropy_residual <= cut, out.coisotropy_residual <= cut);
    return out;
}

/// Kernel criterion: ker(Theta) is Lagrangian iff Theta is onto R^m and
/// Theta Omega^-1 Theta^T = 0. Theta must have at most m rows.
inline SubspaceClass lagrangian_kernel_test(const SymplecticForm& form, const KernelPresentation& k,
                                            double tol = rank_tol) {
    const Matrix& theta = k.theta;
    const int m = form.half_dim();
    if (theta.cols() != form.dim())
        throw invalid_argument("lagrangian_kernel_test: Theta has " + std::to_string(theta.cols()) +
                               " columns, expected " + std::to_string(form.dim()));
    if (theta.rows() > m)
        throw invalid_argument("lagrangian_kernel_test: a Lagrangian kernel needs exactly m = " + std::to_string(m) +
                               " conditions, got " + std::to_string(theta.rows()));
    const int rank = linalg::numerical_rank(theta);
    const Matrix product = theta * form.inverse() * theta.transpose();
    const double theta_norm = linalg::spectral_norm(theta);
    const double natural = theta_norm * theta_norm * form.inverse_norm();
    const double residual = linalg::spectral_norm(product);

    SubspaceClass out;
    out.dim = form.dim() - rank;
    out.coisotropy_residual = natural > 0.0 ? residual / natural : 0.0;
    out.isotropy_residual = rank == m ? out.coisotropy_residual : std::numeric_limits<double>::infinity();
    const bool coisotropic = residual <= tol * natural;
    out.kind = kind_from(coisotropic && rank == m, coisotropic);
    return out;
}

/// Given a basis e of a Lagrangian subspace and a basis f0 of a transversal
/// Lagrangian subspace, returns f~_i = sum_k a_ik f0_k with omega(f~_i, e_s) = delta_is.
inline Matrix symplectic_dual_basis(const SymplecticForm& form, const Matrix& e, const Matrix& f0,
                                    double tol = span_tol) {
    const int m = form.half_dim();
    if (e.rows() != form.dim() || f0.rows() != form.dim() || e.cols() != m || f0.cols() != m)
        throw invalid_argument("symplectic_dual_basis: expected two 2m x m bases with 2m = " +
                               std::to_string(form.dim()));
    const Subspace se(e), sf(f0);
    if (!classify_subspace(form, se, tol).lagrangian())
        throw invalid_argument("symplectic_dual_basis: span(e) is not Lagrangian");
    if (!classify_subspace(form, sf, tol).lagrangian())
        throw invalid_argument("symplectic_dual_basis: span(f0) is not Lagrangian");
    // gram(k, s) = omega(f0_k, e_s); the coefficient matrix solves a * gram = I.
    const Matrix gram = form.pairing(f0, e);
    const double scale = linalg::spectral_norm(f0) * linalg::spectral_norm(e) * form.norm();
    if (scale == 0.0 || linalg::inverse_condition(gram) <= rank_tol)
        throw transversality_failure("symplectic_dual_basis: Gram matrix omega(f0_k, e_s) is singular; "
                                     "the two Lagrangian subspaces are not transversal");
    const Matrix a = gram.transpose().fullPivLu().solve(Matrix::Identity(m, m)).transpose();
    return f0 * a.transpose();
}

/// Defect m of a closed symmetric operator from its minimal and maximal graphs:
/// half the dimension gap.
inline int graph_defect(const Subspace& min_graph, const Subspace& max_graph, double tol = span_tol) {
    if (min_graph.ambient_dim() != max_graph.ambient_dim())
        throw invalid_argument("graph_defect: graphs live in different ambient spaces");
    const double excess = max_graph.excess(min_graph);
    if (excess > tol)
        throw not_nested("graph_defect: minimal graph is not contained in the maximal graph (excess " +
                         std::to_string(excess) + ")");
    const int gap = max_graph.dim() - min_graph.dim();
    if (gap % 2 != 0)
        throw odd_gap("graph_defect: dimension gap " + std::to_string(gap) + " is odd");
    return gap / 2;
}

}  // namespace symbc
