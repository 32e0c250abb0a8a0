#pragma once

// Symplectic connection for a variable form omega(x)(u, v) = v^T Omega(x) u on
// a chart domain in R^{2m}: Christoffel map, parallel transport with a
// conservation certificate, Kato transport of projector families, and
// Lagrangian frame fields along rays.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "symbc/errors.hpp"
#include "symbc/linalg.hpp"
#include "symbc/symplin.hpp"

namespace symbc::connection {

inline constexpr double closed_tol = 1e-6;
inline constexpr double kato_tol = 1e-6;
inline constexpr double ray_tol = 1e-6;
inline constexpr double proj_tol = 1e-8;

/// Central-difference step: cube root of machine epsilon, scaled by (1 + |x|).
inline double fd_step(double scale) {
    static const double base = std::cbrt(std::numeric_limits<double>::epsilon());
    return base * (1.0 + scale);
}

/// A variable skew form Omega(x) on an open ball of R^{2m}.
///
/// `d_omega_at(x)` returns the 2m partial derivatives dOmega/dx_k; when it is
/// empty, central differences are used instead.
struct FormField {
    int dim = 0;
    std::function<Matrix(const Vector&)> omega_at;
    std::function<std::vector<Matrix>(const Vector&)> d_omega_at;
    double domain_radius = std::numeric_limits<double>::infinity();

    bool in_domain(const Vector& x) const { return x.norm() < domain_radius; }

    /// Omega(x), checked for shape, skewness and invertibility.
    Matrix omega(const Vector& x, double t = 0.0) const {
        if (x.size() != dim) throw invalid_argument("FormField: point has wrong dimension");
        Matrix w = omega_at(x);
        if (w.rows() != dim || w.cols() != dim) throw invalid_argument("FormField: Omega(x) has wrong shape");
        if (!w.allFinite()) throw degenerate_form("FormField: non-finite Omega(x)", t);
        const double skew = (w + w.transpose()).cwiseAbs().maxCoeff();
        if (skew > 1e-12 * (1.0 + w.cwiseAbs().maxCoeff())) throw degenerate_form("FormField: Omega(x) is not skew", t);
        if (linalg::inverse_condition(w) <= rank_tol)
            throw degenerate_form("FormField: Omega(x) is singular at t = " + std::to_string(t), t);
        return w;
    }

    /// The form at x as a SymplecticForm; the stored matrix is skew-symmetrized
    /// so products such as D^T W D that are skew only up to rounding qualify.
    SymplecticForm form_at(const Vector& x) const {
        const Matrix w = omega(x);
        return SymplecticForm(Matrix(0.5 * (w - w.transpose())));
    }

    /// Omega~(x) with (Omega~ u, v) = omega(x)(v, u); equals Omega(x)^T.
    Matrix omega_tilde(const Vector& x) const { return omega(x).transpose(); }

    std::vector<Matrix> d_omega(const Vector& x) const {
        if (d_omega_at) return d_omega_at(x);
        return d_omega_fd(x);
    }

    std::vector<Matrix> d_omega_fd(const Vector& x) const {
        const double h = fd_step(x.norm());
        std::vector<Matrix> out;
        out.reserve(dim);
        for (int k = 0; k < dim; ++k) {
            Vector xp = x, xm = x;
            xp(k) += h;
            xm(k) -= h;
            out.push_back((omega_at(xp) - omega_at(xm)) / (2.0 * h));
        }
        return out;
    }

    double pair(const Vector& x, const Vector& u, const Vector& v) const { return v.dot(omega_at(x) * u); }

    /// Largest component of the finite-difference exterior derivative
    /// dOmega_{kab} = d_k Omega_ab + d_a Omega_bk + d_b Omega_ka over `samples`
    /// deterministic random points, relative to (1 + max |d Omega|).
    double closedness_defect(int samples = 20, std::uint64_t seed = 20240611) const {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        const double radius = std::min(domain_radius, 1.0) * 0.9;
        double worst = 0.0;
        for (int s = 0; s < samples; ++s) {
            Vector x(dim);
            do {
                for (int i = 0; i < dim; ++i) x(i) = unit(rng);
            } while (x.norm() > 1.0);
            x *= radius;
            const auto d = d_omega_fd(x);
            double mag = 0.0;
            for (const auto& dk : d) mag = std::max(mag, dk.cwiseAbs().maxCoeff());
            for (int k = 0; k < dim; ++k)
                for (int a = k + 1; a < dim; ++a)
                    for (int b = a + 1; b < dim; ++b) {
                        const double c = d[k](a, b) + d[a](b, k) + d[b](k, a);
                        worst = std::max(worst, std::abs(c) / (1.0 + mag));
                    }
        }
        return worst;
    }

    /// Throws invalid_argument unless the form is closed within closed_tol.
    void require_closed(double tol = closed_tol) const {
        const double defect = closedness_defect();
        if (!(defect <= tol))
            throw invalid_argument("FormField: omega is not closed (d omega defect " + std::to_string(defect) + ")");
    }
};

/// Omega(x) = Omega_const everywhere.
inline FormField constant_field(const SymplecticForm& form) {
    FormField f;
    f.dim = form.dim();
    const Matrix w = form.omega();
    f.omega_at = [w](const Vector&) { return w; };
    f.d_omega_at = [w](const Vector&) { return std::vector<Matrix>(w.rows(), Matrix::Zero(w.rows(), w.cols())); };
    return f;
}

/// alpha(x) = c0 + sum_i lin_i x_i + sum_i quad_i x_i^2.
struct DiagonalQuadratic {
    double c0 = 1.0;
    Vector lin;
    Vector quad;

    double operator()(const Vector& x) const { return c0 + lin.dot(x) + quad.dot(x.cwiseProduct(x)); }
    Vector gradient(const Vector& x) const { return lin + 2.0 * quad.cwiseProduct(x); }
};

/// alpha(x) Omega_can with analytic derivative. Closed only when m = 1 or
/// alpha is constant; require_closed() rejects the other cases.
inline FormField scalar_scaled_field(int m, DiagonalQuadratic alpha, double radius = std::numeric_limits<double>::infinity()) {
    const SymplecticForm base = standard_form(m);
    if (alpha.lin.size() == 0) alpha.lin = Vector::Zero(2 * m);
    if (alpha.quad.size() == 0) alpha.quad = Vector::Zero(2 * m);
    if (alpha.lin.size() != 2 * m || alpha.quad.size() != 2 * m)
        throw invalid_argument("scalar_scaled_field: coefficient vectors must have length 2m");
    FormField f;
    f.dim = 2 * m;
    f.domain_radius = radius;
    const Matrix w = base.omega();
    f.omega_at = [w, alpha](const Vector& x) { return Matrix(alpha(x) * w); };
    f.d_omega_at = [w, alpha](const Vector& x) {
        const Vector g = alpha.gradient(x);
        std::vector<Matrix> out;
        for (Eigen::Index k = 0; k < g.size(); ++k) out.push_back(g(k) * w);
        return out;
    };
    return f;
}

/// Gamma(x)(h, xi): the vector y with omega(x)(y, w) = (d_w omega)(x)(h, xi)
/// for every w, i.e. y = Omega(x)^-1 c with c_k = xi^T (d_k Omega) h.
/// This is the sign for which transport conserves omega on a closed form.
inline Vector christoffel(const FormField& field, const Vector& x, const Vector& h, const Vector& xi, double t = 0.0) {
    const Matrix w = field.omega(x, t);
    const auto d = field.d_omega(x);
    Vector c(field.dim);
    for (int k = 0; k < field.dim; ++k) c(k) = xi.dot(d[k] * h);
    return w.fullPivLu().solve(c);
}

/// Same map applied to every column of `xis`.
inline Matrix christoffel_columns(const FormField& field, const Vector& x, const Vector& h, const Matrix& xis,
                                  double t = 0.0) {
    const Matrix w = field.omega(x, t);
    const auto d = field.d_omega(x);
    Matrix c(field.dim, xis.cols());
    for (int k = 0; k < field.dim; ++k) c.row(k) = (d[k] * h).transpose() * xis;
    return w.fullPivLu().solve(c);
}

struct Curve {
    std::function<Vector(double)> x_at;
    std::function<Vector(double)> dx_at;
    double a = 0.0;
    double b = 1.0;
};

inline Curve segment(const Vector& from, const Vector& to) {
    const Vector dir = to - from;
    return {[from, dir](double t) { return Vector(from + t * dir); }, [dir](double) { return dir; }, 0.0, 1.0};
}

/// k tangent vectors (columns) based at a point.
struct Frame {
    Vector base;
    Matrix vectors;
};

struct ConservationReport {
    double max_drift = 0.0;  ///< max_ij |omega(b)(xi_i, xi_j) - omega(a)(xi_i, xi_j)|
    double scale = 0.0;      ///< max_ij |omega(a)(xi_i, xi_j)| + 1-norm magnitude of the frame pairing
    int steps = 0;
};

struct TransportResult {
    Frame frame;
    ConservationReport report;
};

/// Classical RK4 on d xi / dt = Gamma(x(t))(dx/dt, xi) with uniform steps.
inline TransportResult parallel_transport(const FormField& field, const Curve& curve, const Frame& frame, int steps) {
    if (steps < 1) throw invalid_argument("parallel_transport: steps must be positive");
    if (frame.vectors.rows() != field.dim || frame.base.size() != field.dim)
        throw invalid_argument("parallel_transport: frame dimension does not match the field");
    const Vector start = curve.x_at(curve.a);
    if ((start - frame.base).norm() > 1e-12 * (1.0 + start.norm()))
        throw invalid_argument("parallel_transport: frame is not based at the curve start");

    auto rhs = [&](double t, const Matrix& xi) {
        const Vector x = curve.x_at(t);
        if (!field.in_domain(x)) throw out_of_domain("parallel_transport: curve leaves the chart domain at t = " + std::to_string(t));
        return christoffel_columns(field, x, curve.dx_at(t), xi, t);
    };

    const double dt = (curve.b - curve.a) / steps;
    Matrix xi = frame.vectors;
    // Kahan-compensated accumulation of the increments: without it the
    // rounding random walk (~sqrt(steps) eps) hides the O(steps^-4) drift
    // already at a few hundred steps.
    Matrix carry = Matrix::Zero(xi.rows(), xi.cols());
    for (int s = 0; s < steps; ++s) {
        const double t = curve.a + s * dt;
        const Matrix k1 = rhs(t, xi);
        const Matrix k2 = rhs(t + 0.5 * dt, xi + 0.5 * dt * k1);
        const Matrix k3 = rhs(t + 0.5 * dt, xi + 0.5 * dt * k2);
        const Matrix k4 = rhs(t + dt, xi + dt * k3);
        const Matrix inc = (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4) - carry;
        const Matrix next = xi + inc;
        carry = (next - xi) - inc;
        xi = next;
    }

    TransportResult out;
    out.frame.base = curve.x_at(curve.b);
    out.frame.vectors = xi;
    const Matrix w0 = field.omega(frame.base, curve.a);
    const Matrix w1 = field.omega(out.frame.base, curve.b);
    const Matrix before = (w0 * frame.vectors).transpose() * frame.vectors;
    const Matrix after = (w1 * xi).transpose() * xi;
    out.report.max_drift = (after - before).cwiseAbs().maxCoeff();
    out.report.scale = before.cwiseAbs().maxCoeff();
    out.report.steps = steps;
    return out;
}

/// Transport along consecutive straight segments through `points`.
inline TransportResult transport_polyline(const FormField& field, const std::vector<Vector>& points, const Matrix& vectors,
                                          int steps_per_segment) {
    if (points.size() < 2) throw invalid_argument("transport_polyline: need at least two points");
    Frame frame{points.front(), vectors};
    const Matrix w0 = field.omega(points.front());
    const Matrix before = (w0 * vectors).transpose() * vectors;
    for (std::size_t i = 0; i + 1 < points.size(); ++i)
        frame = parallel_transport(field, segment(points[i], points[i + 1]), frame, steps_per_segment).frame;
    TransportResult out;
    out.frame = frame;
    const Matrix w1 = field.omega(frame.base);
    const Matrix after = (w1 * frame.vectors).transpose() * frame.vectors;
    out.report.max_drift = (after - before).cwiseAbs().maxCoeff();
    out.report.scale = before.cwiseAbs().maxCoeff();
    out.report.steps = steps_per_segment * static_cast<int>(points.size() - 1);
    return out;
}

/// A smooth family of orthogonal projectors P(t), t in [0, 1].
struct ProjectorPath {
    std::function<Matrix(double)> p_at;
    std::function<Matrix(double)> dp_at;  ///< optional; central differences otherwise

    Matrix derivative(double t) const {
        if (dp_at) return dp_at(t);
        const double h = fd_step(std::abs(t));
        return (p_at(t + h) - p_at(t - h)) / (2.0 * h);
    }
};

struct KatoResult {
    Matrix u;
    double orthogonality_residual = 0.0;  ///< ||U^T U - I||
    double intertwining_residual = 0.0;   ///< ||P(1) U - U P(0)||
    int rank = 0;
};

namespace detail {
inline int projector_rank(const Matrix& p, double t) {
    const double sym = (p - p.transpose()).cwiseAbs().maxCoeff();
    const double idem = (p * p - p).cwiseAbs().maxCoeff();
    if (sym > proj_tol || idem > proj_tol)
        throw invalid_argument("kato_transport: P(" + std::to_string(t) + ") is not an orthogonal projector");
    return static_cast<int>(std::lround(p.trace()));
}
}  // namespace detail

/// RK4 on dU/dt = [P'(t) P(t) - P(t) P'(t)] U, U(0) = I. The generator is
/// skew, so U stays orthogonal, and it carries range P(0) onto range P(1).
inline KatoResult kato_transport(const ProjectorPath& path, int steps) {
    if (steps < 1) throw invalid_argument("kato_transport: steps must be positive");
    const Matrix p0 = path.p_at(0.0);
    if (p0.rows() != p0.cols()) throw invalid_argument("kato_transport: projector must be square");
    const Eigen::Index n = p0.rows();
    const int rank0 = detail::projector_rank(p0, 0.0);

    auto generator = [&](double t) {
        const Matrix p = path.p_at(t);
        const Matrix dp = path.derivative(t);
        return Matrix(dp * p - p * dp);
    };

    const double dt = 1.0 / steps;
    Matrix u = Matrix::Identity(n, n);
    for (int s = 0; s < steps; ++s) {
        const double t = s * dt;
        const int r = detail::projector_rank(path.p_at(t + dt), t + dt);
        if (r != rank0)
            throw rank_jump("kato_transport: rank changes from " + std::to_string(rank0) + " to " + std::to_string(r) +
                            " at t = " + std::to_string(t + dt));
        const Matrix g1 = generator(t);
        const Matrix gm = generator(t + 0.5 * dt);
        const Matrix g2 = generator(t + dt);
        const Matrix k1 = g1 * u;
        const Matrix k2 = gm * (u + 0.5 * dt * k1);
        const Matrix k3 = gm * (u + 0.5 * dt * k2);
        const Matrix k4 = g2 * (u + dt * k3);
        u += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    KatoResult out;
    out.u = u;
    out.rank = rank0;
    out.orthogonality_residual = linalg::spectral_norm(u.transpose() * u - Matrix::Identity(n, n));
    out.intertwining_residual = linalg::spectral_norm(path.p_at(1.0) * u - u * p0);
    return out;
}

struct RayFrame {
    Vector point;
    Matrix e;  ///< transported basis of L_hat, tangent to L_hat
    Matrix f;  ///< dual completion: omega(l)(f_i, e_s) = delta_is
    double tangency_residual = 0.0;
    double symplectic_residual = 0.0;  ///< deviation of [e f] from a symplectic basis of omega(l)
    double conservation_drift = 0.0;
};

namespace detail {
/// max |omega(e_i, e_j)|, |omega(f_i, f_j)|, |omega(f_i, e_j) - delta_ij|.
inline double symplectic_basis_defect(const Matrix& w, const Matrix& e, const Matrix& f) {
    const auto pair = [&](const Matrix& a, const Matrix& b) { return Matrix((w * a).transpose() * b); };
    const Eigen::Index m = e.cols();
    double d = pair(e, e).cwiseAbs().maxCoeff();
    d = std::max(d, pair(f, f).cwiseAbs().maxCoeff());
    d = std::max(d, (pair(f, e) - Matrix::Identity(m, m)).cwiseAbs().maxCoeff());
    return d;
}
}  // namespace detail

/// Transports the bases of L_hat and of a complementary Lagrangian f0 along
/// the rays t -> t l (t in [0, 1]) for every l in `points`, certifies that
/// the L_hat vectors stay tangent to L_hat, and completes each transported
/// L_hat basis to a symplectic basis of omega(l) by the dual-basis system.
inline std::vector<RayFrame> lagrangian_frame_field(const FormField& field, const Subspace& l_hat, const Matrix& f0,
                                                    const std::vector<Vector>& points, int steps,
                                                    double tol = ray_tol) {
    const int m = field.dim / 2;
    if (l_hat.ambient_dim() != field.dim || l_hat.dim() != m)
        throw invalid_argument("lagrangian_frame_field: L_hat must be an m-dimensional subspace of R^{2m}");
    if (f0.rows() != field.dim || f0.cols() != m) throw invalid_argument("lagrangian_frame_field: f0 must be 2m x m");
    const Vector origin = Vector::Zero(field.dim);
    const SymplecticForm form0 = field.form_at(origin);
    if (!classify_subspace(form0, l_hat).lagrangian())
        throw invalid_argument("lagrangian_frame_field: L_hat is not Lagrangian for omega(0)");
    const Matrix e0 = l_hat.basis();
    const Matrix f_start = symplectic_dual_basis(form0, e0, f0);
    const Matrix proj = l_hat.projector();
    const Matrix& q = l_hat.orthonormal_basis();

    std::vector<RayFrame> frames;
    frames.reserve(points.size());
    for (const Vector& l : points) {
        if (l.size() != field.dim) throw invalid_argument("lagrangian_frame_field: point has wrong dimension");
        if ((l - proj * l).norm() > span_tol * (1.0 + l.norm()))
            throw invalid_argument("lagrangian_frame_field: point does not lie in L_hat");
        if (!field.in_domain(l)) throw out_of_domain("lagrangian_frame_field: point lies outside the chart domain");
        for (int s = 0; s <= 4; ++s) {
            const Matrix w = field.omega(Vector(0.25 * s * l));
            const double iso = ((w * q).transpose() * q).cwiseAbs().maxCoeff();
            if (iso > tol * (1.0 + w.cwiseAbs().maxCoeff()))
                throw invariance_violation("lagrangian_frame_field: omega does not vanish on L_hat along the ray");
        }

        RayFrame out;
        out.point = l;
        Matrix start(field.dim, 2 * m);
        start << e0, f_start;
        TransportResult moved{Frame{l, start}, {}};
        if (l.norm() > 0.0) moved = parallel_transport(field, segment(origin, l), Frame{origin, start}, steps);
        out.conservation_drift = moved.report.max_drift;
        out.e = moved.frame.vectors.leftCols(m);
        const Matrix f_moved = moved.frame.vectors.rightCols(m);

        double tangency = 0.0;
        for (int k = 0; k < m; ++k) {
            const Vector ek = out.e.col(k);
            tangency = std::max(tangency, (ek - proj * ek).norm() / ek.norm());
        }
        out.tangency_residual = tangency;
        if (tangency > tol)
            throw invariance_violation("lagrangian_frame_field: transported L_hat vectors leave L_hat (residual " +
                                       std::to_string(tangency) + ")");

        const SymplecticForm form_l = field.form_at(l);
        out.f = symplectic_dual_basis(form_l, out.e, f_moved, tol);
        out.symplectic_residual = detail::symplectic_basis_defect(form_l.omega(), out.e, out.f);
        frames.push_back(std::move(out));
    }
    return frames;
}

}  // namespace symbc::connection
