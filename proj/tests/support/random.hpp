#pragma once

// Seeded generators for property tests. Everything is deterministic so a
// failing instance can be reproduced from its index.

#include <Eigen/Dense>
#include <cstdint>
#include <random>

#include "symbc/linalg.hpp"
#include "symbc/symplin.hpp"

namespace testgen {

using symbc::Matrix;
using symbc::Vector;

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double normal() { return normal_(rng_); }
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    Matrix gaussian(int rows, int cols) {
        Matrix m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = normal();
        return m;
    }
    Vector gaussian(int n) { return gaussian(n, 1).col(0); }

    /// Random symmetric matrix with entries of unit size.
    Matrix symmetric(int n) {
        const Matrix a = gaussian(n, n);
        return 0.5 * (a + a.transpose());
    }

    /// Well-conditioned random symplectic matrix for Omega_can: product of a
    /// shear [[I, S], [0, I]], a block [[A, 0], [0, A^-T]] and a lower shear.
    Matrix symplectic_matrix(int m) {
        Matrix a = Matrix::Identity(m, m) + 0.3 * gaussian(m, m);
        while (std::abs(a.determinant()) < 0.2) a = Matrix::Identity(m, m) + 0.3 * gaussian(m, m);
        Matrix block = Matrix::Zero(2 * m, 2 * m);
        block.topLeftCorner(m, m) = a;
        block.bottomRightCorner(m, m) = a.inverse().transpose();
        Matrix upper = Matrix::Identity(2 * m, 2 * m);
        upper.topRightCorner(m, m) = 0.5 * symmetric(m);
        Matrix lower = Matrix::Identity(2 * m, 2 * m);
        lower.bottomLeftCorner(m, m) = 0.5 * symmetric(m);
        return upper * block * lower;
    }

    /// A random nondegenerate skew form Omega = S^T Omega_can S.
    symbc::SymplecticForm form(int m) {
        const Matrix s = Matrix::Identity(2 * m, 2 * m) + 0.3 * gaussian(2 * m, 2 * m);
        const Matrix w = s.transpose() * symbc::standard_form(m).omega() * s;
        return symbc::SymplecticForm(Matrix(0.5 * (w - w.transpose())));
    }

    /// Basis of a random Lagrangian subspace of the form: the graph {(q, Sq)}
    /// of a symmetric S is Lagrangian for Omega_can, pulled back through the
    /// symplectic map that carries the form to Omega_can.
    Matrix lagrangian_can(int m) {
        Matrix b(2 * m, m);
        b << Matrix::Identity(m, m), symmetric(m);
        return symplectic_matrix(m) * b;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_;
};

/// Brute-force pairing oracle: omega(u, v) = v^T Omega u entry by entry.
inline double brute_pairing(const Matrix& omega, const Vector& u, const Vector& v) {
    double s = 0.0;
    for (int i = 0; i < omega.rows(); ++i)
        for (int j = 0; j < omega.cols(); ++j) s += v(i) * omega(i, j) * u(j);
    return s;
}

/// max |omega(a_i, b_j)| by the brute-force oracle.
inline double max_pairing(const Matrix& omega, const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (int i = 0; i < a.cols(); ++i)
        for (int j = 0; j < b.cols(); ++j) worst = std::max(worst, std::abs(brute_pairing(omega, a.col(i), b.col(j))));
    return worst;
}

}  // namespace testgen
