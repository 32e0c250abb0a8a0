#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support/poly.hpp"
#include "support/random.hpp"
#include "symbc/boundary.hpp"

using namespace symbc;
using namespace symbc::boundary;
using std::numbers::pi;

namespace {

TestFunction sine_pi() {
    return {[](double t) { return std::sin(pi * t); }, [](double t) { return pi * std::cos(pi * t); },
            [](double t) { return -pi * pi * std::sin(pi * t); }};
}
TestFunction cosine_pi() {
    return {[](double t) { return std::cos(pi * t); }, [](double t) { return -pi * std::sin(pi * t); },
            [](double t) { return -pi * pi * std::cos(pi * t); }};
}

/// a sin(k t + p), with derivatives.
TestFunction wave(double a, double k, double p) {
    return {[=](double t) { return a * std::sin(k * t + p); }, [=](double t) { return a * k * std::cos(k * t + p); },
            [=](double t) { return -a * k * k * std::sin(k * t + p); }};
}

/// c ((t - l)(r - t))^8 on [l, r], zero elsewhere; C^7.
TestFunction bump(double l, double r, double c) {
    auto inside = [=](double t) { return t > l && t < r; };
    return {[=](double t) { return inside(t) ? c * std::pow((t - l) * (r - t), 8) : 0.0; },
            [=](double t) {
                if (!inside(t)) return 0.0;
                const double q = (t - l) * (r - t), dq = r + l - 2 * t;
                return c * 8 * std::pow(q, 7) * dq;
            },
            [=](double t) {
                if (!inside(t)) return 0.0;
                const double q = (t - l) * (r - t), dq = r + l - 2 * t;
                return c * (56 * std::pow(q, 6) * dq * dq - 16 * std::pow(q, 7));
            }};
}

testgen::Poly random_poly(testgen::Gen& g, int max_degree) {
    testgen::Poly p(static_cast<std::size_t>(g.integer(0, max_degree) + 1));
    for (double& c : p) c = g.normal();
    return p;
}

}  // namespace

TEST(Trace, Examples) {
    const auto t2 = trace(polynomial({0, 0, 1}));
    EXPECT_EQ(t2.vec(), Eigen::Vector4d(0, 0, 1, 2));
    const auto s = trace(sine_pi()).vec();
    EXPECT_NEAR(s(0), 0.0, 1e-15);
    EXPECT_NEAR(s(1), pi, 1e-15);
    EXPECT_NEAR(s(2), 0.0, 1e-15);
    EXPECT_NEAR(s(3), -pi, 1e-14);
    EXPECT_EQ(trace(bump(0.25, 0.75, 1.0)).vec(), Eigen::Vector4d::Zero());
}

TEST(Trace, NonFiniteEndpointThrows) {
    TestFunction f{[](double t) { return 1.0 / t; }, [](double t) { return -1.0 / (t * t); },
                   [](double t) { return 2.0 / (t * t * t); }};
    EXPECT_THROW(trace(f), trace_failure);
}

TEST(TestFunctionCheck, CatchesWrongDerivative) {
    TestFunction good = polynomial({1, 2, 3, 4});
    EXPECT_NO_THROW(good.check_derivatives());
    TestFunction bad = good;
    bad.du = [](double t) { return 2 + 6 * t; };  // missing the cubic term's derivative
    EXPECT_THROW(bad.check_derivatives(), invalid_test_function);
}

TEST(OmegaHat, SkewInvertibleSquaresToMinusIdentity) {
    const Eigen::Matrix4d w = omega_hat();
    EXPECT_EQ(w + w.transpose(), Eigen::Matrix4d::Zero());
    EXPECT_EQ(w * w, -Eigen::Matrix4d::Identity());
    EXPECT_NO_THROW(BoundaryForm{}.symplectic());
}

TEST(BoundaryFormValue, Examples) {
    testgen::Gen g(5);
    const Eigen::Vector4d eta = g.gaussian(4);
    EXPECT_EQ(boundary_form(TraceVector::from(eta), TraceVector::from(eta)), 0.0);
    EXPECT_DOUBLE_EQ(boundary_form(trace(polynomial({0, 0, 1})), trace(polynomial({0, 0, 0, 1}))), 1.0);
    EXPECT_NEAR(boundary_form(trace(sine_pi()), trace(cosine_pi())), 0.0, 1e-14);
}

TEST(BoundaryFormValue, MatchesEndpointBracketAndSymplinPairing) {
    testgen::Gen g(6);
    const SymplecticForm sf = BoundaryForm{}.symplectic();
    for (int i = 0; i < 100; ++i) {
        const auto u = random_poly(g, 6), v = random_poly(g, 6);
        const auto eu = trace(polynomial(u)), ev = trace(polynomial(v));
        const double j = boundary_form(eu, ev);
        EXPECT_NEAR(j, testgen::endpoint_bracket(u, v), 1e-12 * (1 + std::abs(j)));
        EXPECT_NEAR(j, -boundary_form(ev, eu), 1e-12 * (1 + std::abs(j)));
        // The symplin pairing on the handed-off matrix evaluates the same number.
        EXPECT_NEAR(sf.pair(eu.vec(), ev.vec()), j, 1e-12 * (1 + std::abs(j)));
    }
}

TEST(Green, SignDefiningExample) {
    const auto r = green_residual(polynomial({0, 0, 1}), polynomial({0, 0, 0, 1}));
    EXPECT_NEAR(r.bulk, 1.0, 1e-13);
    EXPECT_NEAR(r.boundary, 1.0, 1e-15);
    EXPECT_LE(r.residual, 1e-12);
    EXPECT_NEAR(testgen::exact_bulk({0, 0, 1}, {0, 0, 0, 1}), 1.0, 1e-15);
}

TEST(Green, BumpsAndTrig) {
    // Same support so the integrand has no kink inside [0, 1] beyond high-order contact.
    const TestFunction b = bump(0.25, 0.75, 1e9);
    const TestFunction tb{[b](double t) { return t * b.u(t); }, [b](double t) { return b.u(t) + t * b.du(t); },
                          [b](double t) { return 2 * b.du(t) + t * b.ddu(t); }};
    const auto bumps = green_residual(b, tb);
    EXPECT_EQ(bumps.boundary, 0.0);
    EXPECT_LE(bumps.residual, 1e-12);
    const auto trig = green_residual(sine_pi(), cosine_pi());
    EXPECT_NEAR(trig.bulk, 0.0, 1e-12);
    EXPECT_LE(trig.residual, 1e-12);
}

TEST(Green, RandomPolynomialsAgainstExactIntegration) {
    testgen::Gen g(2024);
    for (int i = 0; i < 50; ++i) {
        const auto u = random_poly(g, 6), v = random_poly(g, 6);
        const auto r = green_residual(polynomial(u), polynomial(v), 64);
        EXPECT_LE(r.residual, 1e-10) << "pair " << i;
        EXPECT_NEAR(r.bulk, testgen::exact_bulk(u, v), 1e-11 * (1 + std::abs(r.bulk))) << "pair " << i;
    }
}

TEST(Green, RandomTrigPairs) {
    testgen::Gen g(77);
    for (int i = 0; i < 10; ++i) {
        const auto u = wave(g.normal(), g.uniform(0.5, 8.0), g.uniform(0, 2 * pi));
        const auto v = wave(g.normal(), g.uniform(0.5, 8.0), g.uniform(0, 2 * pi));
        EXPECT_LE(green_residual(u, v, 64).residual, 1e-10) << "pair " << i;
    }
}

TEST(Green, TooFewNodes) { EXPECT_THROW(green_residual(sine_pi(), sine_pi(), 1), invalid_argument); }

TEST(Calkin, DirichletSystem) {
    const auto v1 = polynomial({0, -1, 2, -1});  // -t (1 - t)^2
    const auto v2 = polynomial({0, 0, -1, 1});   // t^2 (t - 1)
    EXPECT_EQ(trace(v1).vec(), Eigen::Vector4d(0, -1, 0, 0));
    EXPECT_EQ(trace(v2).vec(), Eigen::Vector4d(0, 0, 0, 1));
    const auto v = calkin_check({v1, v2});
    EXPECT_TRUE(v.passes());
    EXPECT_TRUE(v.independent);
    EXPECT_TRUE(v.isotropic);
    EXPECT_LE(v.max_route_gap, 1e-10);
    // <f, v1> = -f(0) ... the rows are +-e1 and +-e3: f(0) = f(1) = 0.
    const auto kernel = KernelPresentation(v.induced_condition).kernel();
    EXPECT_TRUE(same_span(kernel, KernelPresentation(presets::dirichlet()).kernel()));
    EXPECT_EQ(classify_bc(v.induced_condition).kind, BcKind::self_adjoint);
}

TEST(Calkin, InducedRowsReproduceThePairing) {
    // For any f, row_i . trace(f) = <f, v_i> computed by quadrature.
    const auto v1 = polynomial({0, -1, 2, -1});
    const auto v2 = polynomial({0, 0, -1, 1});
    const auto v = calkin_check({v1, v2});
    testgen::Gen g(9);
    const GaussRule rule = gauss_legendre(64);
    for (int i = 0; i < 20; ++i) {
        const auto p = random_poly(g, 5);
        const auto f = polynomial(p);
        const Eigen::Vector4d eta = trace(f).vec();
        EXPECT_NEAR(v.induced_condition.row(0).dot(eta), bulk_pairing(f, v1, rule), 1e-12);
        EXPECT_NEAR(v.induced_condition.row(1).dot(eta), bulk_pairing(f, v2, rule), 1e-12);
    }
}

TEST(Calkin, FailedClauses) {
    const auto v1 = polynomial({0, -1, 2, -1});
    EXPECT_EQ(calkin_check({v1, v1}).failed_clause, "a");
    EXPECT_EQ(calkin_check({v1, polynomial({0, -2, 4, -2})}).failed_clause, "a");
    const auto w = polynomial({1, 0, -3, 2});  // traces (1, 0, 0, 0)
    EXPECT_EQ(trace(w).vec(), Eigen::Vector4d(1, 0, 0, 0));
    const auto v = calkin_check({v1, w});
    EXPECT_EQ(v.failed_clause, "b");
    EXPECT_NEAR(boundary_form(trace(v1), trace(w)), -1.0, 1e-15);
    EXPECT_NEAR(v.max_pairing_quadrature, 1.0, 1e-12);
    EXPECT_THROW(calkin_check({v1, v1, v1}), too_many_vectors);
    EXPECT_THROW(calkin_check({}), invalid_argument);
}

TEST(Calkin, RoutesAgreeOnRandomPolynomials) {
    testgen::Gen g(31);
    for (int i = 0; i < 50; ++i) {
        const auto v = calkin_check({polynomial(random_poly(g, 6)), polynomial(random_poly(g, 6))});
        EXPECT_LE(v.max_route_gap, 1e-10);
    }
}

TEST(ClassifyBc, ClassicalTable) {
    EXPECT_EQ(classify_bc(presets::dirichlet()).kind, BcKind::self_adjoint);
    EXPECT_EQ(classify_bc(presets::neumann()).kind, BcKind::self_adjoint);
    EXPECT_EQ(classify_bc(presets::periodic()).kind, BcKind::self_adjoint);
    EXPECT_EQ(classify_bc(presets::antiperiodic()).kind, BcKind::self_adjoint);
    EXPECT_EQ(classify_bc(presets::initial()).kind, BcKind::not_symmetric);
    const auto dir = classify_bc(presets::dirichlet());
    ASSERT_TRUE(dir.kernel_test.has_value());
    EXPECT_EQ(dir.kernel_test->coisotropy_residual, 0.0);
}

TEST(ClassifyBc, HandComputedProducts) {
    // Theta Omega_hat^-1 Theta^T with Omega_hat^-1 = -Omega_hat, evaluated entry by entry.
    const Eigen::Matrix4d inv = -omega_hat();
    for (const Matrix& theta : {presets::dirichlet(), presets::periodic()}) {
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                double s = 0.0;
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 4; ++j) s += theta(a, i) * inv(i, j) * theta(b, j);
                EXPECT_EQ(s, 0.0);
            }
    }
}

TEST(ClassifyBc, RobinFamily) {
    testgen::Gen g(12);
    for (int i = 0; i < 100; ++i) {
        const double a = 10 * g.normal(), b = 10 * g.normal();
        EXPECT_EQ(classify_bc(presets::robin(a, b)).kind, BcKind::self_adjoint) << a << " " << b;
    }
}

TEST(ClassifyBc, InvariantUnderRowMixing) {
    testgen::Gen g(13);
    const std::vector<Matrix> thetas{presets::dirichlet(), presets::periodic(), presets::initial(),
                                     presets::robin(1.5, -2), g.gaussian(2, 4)};
    for (const auto& theta : thetas) {
        const auto base = classify_bc(theta).kind;
        for (int i = 0; i < 20; ++i) {
            Matrix mix = g.gaussian(2, 2);
            while (std::abs(mix.determinant()) < 0.1) mix = g.gaussian(2, 2);
            EXPECT_EQ(classify_bc(mix * theta).kind, base);
        }
    }
}

TEST(ClassifyBc, OverDeterminedPresentationIsSymmetricOnly) {
    const Matrix theta = presets::rows({{1, 0, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {0, 0, 0, 0}});
    const auto v = classify_bc(theta);
    EXPECT_EQ(v.kind, BcKind::symmetric_only);
    EXPECT_EQ(v.kernel_dim, 1);
    EXPECT_EQ(v.rank, 3);
    EXPECT_FALSE(v.kernel_test.has_value());
}

TEST(ClassifyBc, InputValidation) {
    EXPECT_THROW(classify_bc(Matrix::Zero(2, 3)), invalid_argument);
    EXPECT_THROW(classify_bc(Matrix::Zero(5, 4)), invalid_argument);
    Matrix nan = presets::dirichlet();
    nan(0, 0) = std::nan("");
    EXPECT_THROW(classify_bc(nan), invalid_argument);
}
