#pragma once

// Randomized property checks for symplectic linear algebra, shared by the
// unit tests and the acceptance runner. Each returns the number of failing
// instances; `first_failure` receives a description of the first one.

#include <string>

#include "random.hpp"
#include "symbc/symplin.hpp"

namespace testgen {

/// A random form Omega = S^T Omega_can S together with S, so that Lagrangian
/// subspaces can be built independently as S^-1 (Lagrangian of Omega_can).
struct FormWithChart {
    symbc::SymplecticForm form;
    Matrix chart;  ///< S
};

inline FormWithChart random_form(Gen& g, int m) {
    Matrix s = Matrix::Identity(2 * m, 2 * m) + 0.3 * g.gaussian(2 * m, 2 * m);
    while (std::abs(s.determinant()) < 0.1) s = Matrix::Identity(2 * m, 2 * m) + 0.3 * g.gaussian(2 * m, 2 * m);
    const Matrix w = s.transpose() * symbc::standard_form(m).omega() * s;
    return {symbc::SymplecticForm(Matrix(0.5 * (w - w.transpose()))), s};
}

enum class Built { isotropic, coisotropic, lagrangian, generic };

struct LabelledSubspace {
    Matrix basis;
    symbc::SubspaceKind expected;
};

/// Random subspace of a known kind, built without the code under test.
inline LabelledSubspace random_labelled_subspace(Gen& g, const FormWithChart& f) {
    const int m = f.form.half_dim();
    const Matrix lag = f.chart.fullPivLu().solve(g.lagrangian_can(m));
    using K = symbc::SubspaceKind;
    switch (g.integer(0, 3)) {
        case 0: {  // isotropic: proper subset of a Lagrangian basis (or the zero space)
            const int k = g.integer(0, m - 1);
            const Matrix mix = g.gaussian(m, k);
            return {lag * mix, k == m ? K::lagrangian : K::isotropic_only};
        }
        case 1: {  // coisotropic: a Lagrangian plus extra random directions
            const int extra = g.integer(1, m);
            Matrix b(2 * m, m + extra);
            b << lag, g.gaussian(2 * m, extra);
            return {b, K::coisotropic_only};
        }
        case 2: return {lag * g.gaussian(m, m), K::lagrangian};
        default: {  // generic: neither, except for dimensions where the kind is forced
            const int k = g.integer(0, 2 * m);
            K kind = K::neither;
            if (k <= 1) kind = K::isotropic_only;
            if (k >= 2 * m - 1) kind = K::coisotropic_only;
            if (m == 1 && k == 1) kind = K::lagrangian;
            return {g.gaussian(2 * m, k), kind};
        }
    }
}

inline void note(std::string* sink, const std::string& what) {
    if (sink && sink->empty()) *sink = what;
}

/// (L^perp)^perp = L and dim L + dim L^perp = 2m.
inline int check_involution_and_dimension(int instances, std::uint64_t seed, std::string* first_failure = nullptr) {
    Gen g(seed);
    int failures = 0;
    for (int i = 0; i < instances; ++i) {
        const int m = g.integer(1, 5);
        const auto f = random_form(g, m);
        const symbc::Subspace l(random_labelled_subspace(g, f).basis);
        const symbc::Subspace c = symbc::omega_complement(f.form, l);
        const symbc::Subspace cc = symbc::omega_complement(f.form, c);
        // Brute-force: every complement vector pairs to zero with every L vector.
        const double pair = max_pairing(f.form.omega(), l.orthonormal_basis(), c.orthonormal_basis());
        const bool ok = l.dim() + c.dim() == 2 * m && symbc::same_span(l, cc) && pair <= 1e-10 * f.form.condition();
        if (!ok) {
            ++failures;
            note(first_failure, "instance " + std::to_string(i) + " (m=" + std::to_string(m) + ")");
        }
    }
    return failures;
}

/// lagrangian_kernel_test on Theta agrees with classify_subspace on ker Theta.
/// Half the instances present a Lagrangian kernel, so both verdicts occur.
inline int check_criterion_equivalence(int instances, std::uint64_t seed, std::string* first_failure = nullptr) {
    Gen g(seed);
    int failures = 0;
    for (int i = 0; i < instances; ++i) {
        const int m = g.integer(1, 5);
        const auto f = random_form(g, m);
        Matrix theta;
        bool expect_lagrangian = false;
        if (i % 2 == 0) {
            // Rows spanning the Euclidean complement of a Lagrangian, mixed by a random invertible matrix.
            const Matrix lag = f.chart.fullPivLu().solve(g.lagrangian_can(m));
            const Matrix perp = symbc::linalg::null_space(lag.transpose());
            theta = (Matrix::Identity(m, m) + 0.3 * g.gaussian(m, m)) * perp.transpose();
            expect_lagrangian = true;
        } else {
            theta = g.gaussian(m, 2 * m);
            expect_lagrangian = m == 1;  // every line in R^2 is Lagrangian
        }
        const symbc::KernelPresentation pres(theta);
        const auto by_kernel = symbc::lagrangian_kernel_test(f.form, pres);
        const auto by_subspace = symbc::classify_subspace(f.form, pres.kernel());
        const bool ok = by_kernel.lagrangian() == by_subspace.lagrangian() && by_kernel.lagrangian() == expect_lagrangian;
        if (!ok) {
            ++failures;
            note(first_failure, "instance " + std::to_string(i) + " (m=" + std::to_string(m) + ")");
        }
    }
    return failures;
}

/// A symplectic basis [e f] from a random Lagrangian pair and the dual-basis
/// operation; B^T Omega B = Omega_can.
inline Matrix random_symplectic_basis(Gen& g, const FormWithChart& f) {
    const int m = f.form.half_dim();
    const Matrix sinv = f.chart.inverse();
    const Matrix e = sinv * g.lagrangian_can(m);
    Matrix f0 = sinv * g.lagrangian_can(m);
    const Matrix f_dual = symbc::symplectic_dual_basis(f.form, e, f0);
    Matrix b(2 * m, 2 * m);
    b << e, f_dual;
    return b;
}

/// classify_subspace(Omega, S L) == classify_subspace(Omega, L) for S^T Omega S = Omega.
inline int check_symplectic_invariance(int instances, std::uint64_t seed, std::string* first_failure = nullptr) {
    Gen g(seed);
    int failures = 0;
    for (int i = 0; i < instances; ++i) {
        const int m = g.integer(1, 5);
        const auto f = random_form(g, m);
        const Matrix b1 = random_symplectic_basis(g, f);
        const Matrix b2 = random_symplectic_basis(g, f);
        const Matrix s = b2 * b1.inverse();
        const double preserve = (s.transpose() * f.form.omega() * s - f.form.omega()).cwiseAbs().maxCoeff();
        const auto lab = random_labelled_subspace(g, f);
        const auto before = symbc::classify_subspace(f.form, symbc::Subspace(lab.basis));
        const auto after = symbc::classify_subspace(f.form, symbc::Subspace(Matrix(s * lab.basis)));
        const bool ok = preserve <= 1e-8 * (1.0 + s.norm() * s.norm() * f.form.norm()) && before.kind == after.kind &&
                        before.kind == lab.expected;
        if (!ok) {
            ++failures;
            note(first_failure, "instance " + std::to_string(i) + " (m=" + std::to_string(m) + ")");
        }
    }
    return failures;
}

/// Lagrangian iff (isotropic and k = m) iff (coisotropic and k = m), with
/// isotropy judged by the brute-force pairing oracle.
inline int check_lagrangian_equivalence(int instances, std::uint64_t seed, std::string* first_failure = nullptr) {
    Gen g(seed);
    int failures = 0;
    for (int i = 0; i < instances; ++i) {
        const int m = g.integer(1, 5);
        const auto f = random_form(g, m);
        const auto lab = random_labelled_subspace(g, f);
        const symbc::Subspace l(lab.basis);
        const auto c = symbc::classify_subspace(f.form, l);
        const double pair = max_pairing(f.form.omega(), l.orthonormal_basis(), l.orthonormal_basis());
        const bool oracle_isotropic = pair <= 1e-9 * f.form.condition();
        const bool half = l.dim() == m;
        const bool ok = c.kind == lab.expected && c.isotropic() == oracle_isotropic &&
                        c.lagrangian() == (c.isotropic() && half) && c.lagrangian() == (c.coisotropic() && half);
        if (!ok) {
            ++failures;
            note(first_failure, "instance " + std::to_string(i) + " (m=" + std::to_string(m) + ")");
        }
    }
    return failures;
}

}  // namespace testgen
