#pragma once

// Boundary calculus for l = -d^2/dt^2 on [0, 1].
//
// Sign convention: integration by parts gives
//   (lu, v) - (u, lv) = (u v' - u' v)(1) - (u v' - u' v)(0),
// and boundary_form(eta_u, eta_v) returns exactly that value.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "symbc/errors.hpp"
#include "symbc/linalg.hpp"
#include "symbc/quadrature.hpp"
#include "symbc/symplin.hpp"

namespace symbc::boundary {

/// Verdict tolerance on all boundary-module residuals.
inline constexpr double verdict_tol = 1e-9;
inline constexpr int default_quad_nodes = 64;

/// Boundary quadruple (u(0), u'(0), u(1), u'(1)).
struct TraceVector {
    double u0 = 0.0, du0 = 0.0, u1 = 0.0, du1 = 0.0;

    Eigen::Vector4d vec() const { return {u0, du0, u1, du1}; }
    static TraceVector from(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
    bool finite() const { return std::isfinite(u0) && std::isfinite(du0) && std::isfinite(u1) && std::isfinite(du1); }
};

/// A smooth function on [0, 1] with explicit first and second derivatives.
struct TestFunction {
    std::function<double(double)> u, du, ddu;

    /// Largest mismatch between central differences of u (resp. du) and du (resp. ddu).
    double derivative_mismatch(int samples = 17) const {
        constexpr double step = 1e-5;
        double worst = 0.0;
        for (int i = 0; i < samples; ++i) {
            const double t = 0.05 + 0.9 * i / (samples - 1);
            const double d1 = (u(t + step) - u(t - step)) / (2 * step);
            const double d2 = (du(t + step) - du(t - step)) / (2 * step);
            worst = std::max(worst, std::abs(d1 - du(t)) / (1.0 + std::abs(du(t))));
            worst = std::max(worst, std::abs(d2 - ddu(t)) / (1.0 + std::abs(ddu(t))));
        }
        return worst;
    }

    /// Throws invalid_test_function when the supplied derivatives are inconsistent.
    void check_derivatives(double tol = 1e-6) const {
        if (!u || !du || !ddu) throw invalid_test_function("TestFunction: missing callable");
        const double mismatch = derivative_mismatch();
        if (!(mismatch <= tol))
            throw invalid_test_function("TestFunction: derivative callables disagree with finite differences (" +
                                        std::to_string(mismatch) + ")");
    }
};

/// Polynomial sum_k c_k t^k as a TestFunction.
inline TestFunction polynomial(std::vector<double> c) {
    auto eval = [](const std::vector<double>& coeffs, double t) {
        double acc = 0.0;
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * t + *it;
        return acc;
    };
    std::vector<double> d1, d2;
    for (std::size_t k = 1; k < c.size(); ++k) d1.push_back(static_cast<double>(k) * c[k]);
    for (std::size_t k = 1; k < d1.size(); ++k) d2.push_back(static_cast<double>(k) * d1[k]);
    return {[c, eval](double t) { return eval(c, t); }, [d1, eval](double t) { return eval(d1, t); },
            [d2, eval](double t) { return eval(d2, t); }};
}

inline TraceVector trace(const TestFunction& f) {
    TraceVector eta{f.u(0.0), f.du(0.0), f.u(1.0), f.du(1.0)};
    if (!eta.finite()) throw trace_failure("trace: non-finite endpoint value or derivative");
    return eta;
}

/// The 4x4 matrix with boundary_form(eta, xi) = eta^T Omega_hat xi.
inline Eigen::Matrix4d omega_hat() {
    Eigen::Matrix4d w;
    w << 0, -1, 0, 0,
         1, 0, 0, 0,
         0, 0, 0, 1,
         0, 0, -1, 0;
    return w;
}

inline double boundary_form(const TraceVector& eta, const TraceVector& xi) {
    return eta.vec().dot(omega_hat() * xi.vec());
}

/// The trace-space symplectic structure.
struct BoundaryForm {
    Eigen::Matrix4d omega_hat = boundary::omega_hat();

    double operator()(const TraceVector& a, const TraceVector& b) const { return a.vec().dot(omega_hat * b.vec()); }

    /// Same pairing in the library-wide convention omega(u, v) = v^T Omega u,
    /// which needs the transpose of omega_hat.
    SymplecticForm symplectic() const { return SymplecticForm(Matrix(omega_hat.transpose())); }
};

struct GreenResult {
    double bulk = 0.0;      ///< (lu, v) - (u, lv) by quadrature
    double boundary = 0.0;  ///< boundary_form(trace u, trace v)
    double residual = 0.0;  ///< |bulk - boundary|
};

/// (lu, v) - (u, lv) for l = -d^2/dt^2, by n-point Gauss–Legendre on [0, 1].
inline double bulk_pairing(const TestFunction& u, const TestFunction& v, const GaussRule& rule) {
    return integrate([&](double t) { return -u.ddu(t) * v.u(t) + u.u(t) * v.ddu(t); }, 0.0, 1.0, rule);
}

inline GreenResult green_residual(const TestFunction& u, const TestFunction& v, int quad_nodes = default_quad_nodes) {
    if (quad_nodes < 2) throw invalid_argument("green_residual: need at least 2 quadrature nodes");
    const GaussRule rule = gauss_legendre(quad_nodes);
    GreenResult r;
    r.bulk = bulk_pairing(u, v, rule);
    r.boundary = boundary_form(trace(u), trace(v));
    r.residual = std::abs(r.bulk - r.boundary);
    return r;
}

struct CalkinVerdict {
    bool independent = false;    ///< condition (a)
    bool isotropic = false;      ///< condition (b)
    bool both_routes_agree = false;
    int trace_rank = 0;
    double max_pairing_quadrature = 0.0;  ///< max |<v_i, v_j>| by quadrature
    double max_pairing_trace = 0.0;       ///< max |<v_i, v_j>| via boundary_form
    double max_route_gap = 0.0;
    Matrix induced_condition;  ///< rows r_i with r_i . eta_f = <f, v_i>
    std::string failed_clause;  ///< "", "a", "b" or "routes"

    bool passes() const { return failed_clause.empty(); }
};

/// Checks Calkin conditions (a) and (b) for a system v_1..v_m of the model
/// operator and emits the boundary condition of (c). Condition (a) is decided
/// on trace vectors: the closure of the minimal operator consists exactly of
/// the functions with vanishing traces.
inline CalkinVerdict calkin_check(const std::vector<TestFunction>& vs, const BoundaryForm& form = {},
                                  int quad_nodes = default_quad_nodes, double tol = verdict_tol) {
    constexpr int defect = 2;
    if (vs.empty()) throw invalid_argument("calkin_check: empty system");
    if (static_cast<int>(vs.size()) > defect)
        throw too_many_vectors("calkin_check: " + std::to_string(vs.size()) +
                               " vectors exceed the defect 2 of -d^2/dt^2");
    if (quad_nodes < 2) throw invalid_argument("calkin_check: need at least 2 quadrature nodes");
    const int m = static_cast<int>(vs.size());
    const GaussRule rule = gauss_legendre(quad_nodes);

    std::vector<TraceVector> traces;
    Matrix trace_rows(m, 4);
    for (int i = 0; i < m; ++i) {
        traces.push_back(trace(vs[i]));
        trace_rows.row(i) = traces.back().vec().transpose();
    }

    CalkinVerdict out;
    out.trace_rank = linalg::numerical_rank(trace_rows);
    out.independent = out.trace_rank == m;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            const double quad = bulk_pairing(vs[i], vs[j], rule);
            const double bnd = form(traces[i], traces[j]);
            out.max_pairing_quadrature = std::max(out.max_pairing_quadrature, std::abs(quad));
            out.max_pairing_trace = std::max(out.max_pairing_trace, std::abs(bnd));
            out.max_route_gap = std::max(out.max_route_gap, std::abs(quad - bnd));
        }
    }
    out.both_routes_agree = out.max_route_gap <= tol;
    out.isotropic = out.max_pairing_quadrature <= tol && out.max_pairing_trace <= tol;

    // <f, v_i> = eta_f^T Omega_hat eta_{v_i}, so the row is (Omega_hat eta_{v_i})^T.
    out.induced_condition.resize(m, 4);
    for (int i = 0; i < m; ++i) out.induced_condition.row(i) = (form.omega_hat * traces[i].vec()).transpose();

    if (!out.independent)
        out.failed_clause = "a";
    else if (!out.both_routes_agree)
        out.failed_clause = "routes";
    else if (!out.isotropic)
        out.failed_clause = "b";
    return out;
}

enum class BcKind { self_adjoint, symmetric_only, not_symmetric };

inline std::string_view to_string(BcKind k) {
    switch (k) {
        case BcKind::self_adjoint: return "self_adjoint";
        case BcKind::symmetric_only: return "symmetric_only";
        case BcKind::not_symmetric: return "not_symmetric";
    }
    return "not_symmetric";
}

struct BcVerdict {
    BcKind kind = BcKind::not_symmetric;
    int rank = 0;
    int kernel_dim = 0;
    SubspaceClass kernel_class;                   ///< classify_subspace on ker(Theta)
    std::optional<SubspaceClass> kernel_test;     ///< lagrangian_kernel_test, when Theta has 2 rows
};

/// Classifies the linear boundary condition Theta eta = 0 (Theta is p x 4).
/// Self-adjoint iff ker(Theta) is Lagrangian for the boundary form; symmetric
/// only iff ker(Theta) is isotropic but smaller.
inline BcVerdict classify_bc(const Matrix& theta) {
    if (theta.cols() != 4) throw invalid_argument("classify_bc: Theta must have 4 columns");
    if (theta.rows() > 4) throw invalid_argument("classify_bc: Theta has more than 4 rows");
    if (!theta.allFinite()) throw invalid_argument("classify_bc: non-finite entries");
    const SymplecticForm form = BoundaryForm{}.symplectic();
    const KernelPresentation pres(theta);
    BcVerdict out;
    out.rank = linalg::numerical_rank(theta);
    const Subspace kernel = pres.kernel();
    out.kernel_dim = kernel.dim();
    out.kernel_class = classify_subspace(form, kernel);
    if (theta.rows() == 2) {
        out.kernel_test = lagrangian_kernel_test(form, pres);
        if (out.kernel_test->lagrangian() != out.kernel_class.lagrangian())
            throw error("classify_bc: kernel criterion and subspace classification disagree");
    }
    if (out.kernel_class.lagrangian())
        out.kind = BcKind::self_adjoint;
    else if (out.kernel_class.isotropic())
        out.kind = BcKind::symmetric_only;
    else
        out.kind = BcKind::not_symmetric;
    return out;
}

namespace presets {

inline Matrix rows(std::initializer_list<std::array<double, 4>> r) {
    Matrix m(static_cast<Eigen::Index>(r.size()), 4);
    Eigen::Index i = 0;
    for (const auto& row : r) {
        for (int j = 0; j < 4; ++j) m(i, j) = row[j];
        ++i;
    }
    return m;
}

inline Matrix dirichlet() { return rows({{1, 0, 0, 0}, {0, 0, 1, 0}}); }
inline Matrix neumann() { return rows({{0, 1, 0, 0}, {0, 0, 0, 1}}); }
inline Matrix periodic() { return rows({{1, 0, -1, 0}, {0, 1, 0, -1}}); }
inline Matrix antiperiodic() { return rows({{1, 0, 1, 0}, {0, 1, 0, 1}}); }
/// alpha u(0) - u'(0) = 0, beta u(1) - u'(1) = 0.
inline Matrix robin(double alpha, double beta) { return rows({{alpha, -1, 0, 0}, {0, 0, beta, -1}}); }
inline Matrix initial() { return rows({{1, 0, 0, 0}, {0, 1, 0, 0}}); }

}  // namespace presets

}  // namespace symbc::boundary
