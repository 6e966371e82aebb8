#include "pcegp/poly.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace pcegp;
namespace t = pcegp::testing;

namespace {

const std::vector<BasisKind> &families() {
    static const std::vector<BasisKind> kinds = {BasisKind::hermite(), BasisKind::legendre(),
                                                 BasisKind::legendre_shifted_01(), BasisKind::laguerre(),
                                                 BasisKind::jacobi(0.0, 0.0), BasisKind::jacobi(0.5, -0.3),
                                                 BasisKind::jacobi(2.0, 1.5)};
    return kinds;
}

double at(const BasisKind &kind, int degree, double x) {
    const double pts[] = {x};
    return eval_basis(kind, degree, pts).values(degree, 0);
}

}  // namespace

TEST(EvalBasis, DegreeZeroIsOne) {
    for (const auto &kind : families()) EXPECT_EQ(at(kind, 0, 0.7), 1.0) << to_string(kind);
}

TEST(EvalBasis, HandComputedValues) {
    EXPECT_NEAR(at(BasisKind::hermite(), 2, 2.0), 3.0, 1e-14);
    EXPECT_NEAR(at(BasisKind::legendre_shifted_01(), 2, 0.5), -0.5, 1e-14);
    EXPECT_NEAR(at(BasisKind::laguerre(), 1, 3.0), -2.0, 1e-14);
}

TEST(EvalBasis, RowZeroIsIdenticallyOne) {
    const std::vector<double> pts = {-3.0, -0.2, 0.0, 0.4, 1.0, 7.5};
    for (const auto &kind : families()) {
        const auto ev = eval_basis(kind, 6, pts);
        EXPECT_EQ(ev.values.rows(), 7);
        EXPECT_TRUE((ev.values.row(0).array() == 1.0).all());
        EXPECT_TRUE(ev.values.allFinite());
    }
}

TEST(EvalBasis, RecurrenceMatchesClosedForms) {
    for (double x : {-1.7, -0.9, -0.25, 0.0, 0.3, 0.85, 1.0, 2.4}) {
        for (int n = 0; n <= 3; ++n) {
            EXPECT_NEAR(at(BasisKind::hermite(), n, x), t::hermite_closed(n, x), 1e-12);
            EXPECT_NEAR(at(BasisKind::legendre(), n, x), t::legendre_closed(n, x), 1e-12);
            EXPECT_NEAR(at(BasisKind::legendre_shifted_01(), n, x), t::legendre_closed(n, 2.0 * x - 1.0), 1e-12);
            EXPECT_NEAR(at(BasisKind::laguerre(), n, x), t::laguerre_closed(n, x), 1e-12);
            for (auto [a, b] : {std::pair{0.0, 0.0}, {0.5, -0.3}, {2.0, 1.5}, {-0.5, -0.5}}) {
                EXPECT_NEAR(at(BasisKind::jacobi(a, b), n, x), t::jacobi_explicit(n, a, b, x), 1e-12)
                    << "a=" << a << " b=" << b << " n=" << n;
            }
        }
    }
}

TEST(EvalBasis, JacobiHigherDegreesMatchExplicitSum) {
    for (double x : {-0.8, 0.1, 0.9}) {
        for (int n = 4; n <= 8; ++n) {
            EXPECT_NEAR(at(BasisKind::jacobi(1.5, 0.5), n, x), t::jacobi_explicit(n, 1.5, 0.5, x), 1e-11);
        }
    }
}

TEST(EvalBasis, JacobiZeroZeroIsLegendre) {
    for (double x : {-0.6, 0.2, 0.95}) {
        for (int n = 0; n <= 8; ++n) EXPECT_NEAR(at(BasisKind::jacobi(0, 0), n, x), at(BasisKind::legendre(), n, x), 1e-13);
    }
}

TEST(EvalBasis, InvalidJacobiParameters) {
    EXPECT_THROW(BasisKind::jacobi(-1.0, 0.0), std::invalid_argument);
    EXPECT_THROW(BasisKind::jacobi(0.0, -2.0), std::invalid_argument);
    const BasisKind bad{BasisFamily::jacobi, -1.5, 0.0};
    const double pts[] = {0.0};
    EXPECT_THROW(eval_basis(bad, 2, pts), std::invalid_argument);
}

TEST(EvalCombination, ConstantPolynomial) {
    Vector c = Vector::Zero(6);
    c[0] = 1.75;
    const std::vector<BasisTerm> terms = {{BasisKind::legendre_shifted_01(), c}};
    for (double x : {0.0, 0.3, 1.0, 4.0}) EXPECT_DOUBLE_EQ(eval_combination(terms, x), 1.75);
}

TEST(EvalCombination, TwoBasesSumTheirConstants) {
    const std::vector<BasisTerm> terms = {{BasisKind::hermite(), Vector::Constant(1, 0.5)},
                                          {BasisKind::laguerre(), (Vector(3) << 1.25, 0, 0).finished()}};
    EXPECT_DOUBLE_EQ(eval_combination(terms, 0.37), 1.75);
}

TEST(EvalCombination, ShiftedLegendreLinearTerm) {
    const std::vector<BasisTerm> terms = {{BasisKind::legendre_shifted_01(), (Vector(2) << 0, 1).finished()}};
    EXPECT_NEAR(eval_combination(terms, 0.25), -0.5, 1e-15);
}

TEST(EvalCombination, EmptyTermsRejected) {
    EXPECT_THROW(eval_combination({}, 0.5), std::invalid_argument);
}

TEST(EvalCombination, LinearInCoefficients) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto kind = families()[static_cast<std::size_t>(trial) % families().size()];
        const Vector c1 = t::random_vector(rng, 7);
        const Vector c2 = t::random_vector(rng, 7);
        const double a = rng.uniform(-3, 3);
        const double b = rng.uniform(-3, 3);
        const double x = rng.uniform(-1, 1);
        const std::vector<BasisTerm> t1 = {{kind, c1}};
        const std::vector<BasisTerm> t2 = {{kind, c2}};
        const std::vector<BasisTerm> mix = {{kind, a * c1 + b * c2}};
        EXPECT_NEAR(eval_combination(mix, x), a * eval_combination(t1, x) + b * eval_combination(t2, x), 1e-12);
    }
}

TEST(Orthogonality, NormalizationValues) {
    EXPECT_NEAR(orthogonality_defect(BasisKind::legendre_shifted_01(), 0, 0), 1.0, 1e-14);
    EXPECT_NEAR(orthogonality_defect(BasisKind::hermite(), 1, 1), 1.0, 1e-10);
    // E[He_n^2] = n!, E[P_n^2] = 1/(2n+1), E[L_n^2] = 1.
    EXPECT_NEAR(orthogonality_defect(BasisKind::hermite(), 4, 4, 10), 24.0, 1e-9);
    EXPECT_NEAR(orthogonality_defect(BasisKind::legendre(), 3, 3, 10), 1.0 / 7.0, 1e-13);
    EXPECT_NEAR(orthogonality_defect(BasisKind::legendre_shifted_01(), 5, 5, 10), 1.0 / 11.0, 1e-13);
    EXPECT_NEAR(orthogonality_defect(BasisKind::laguerre(), 6, 6, 10), 1.0, 1e-10);
}

TEST(Orthogonality, OffDiagonalVanishes) {
    for (const auto &kind : families()) {
        EXPECT_NEAR(orthogonality_defect(kind, 1, 2), 0.0, 1e-10) << to_string(kind);
        for (int i = 0; i <= 8; ++i)
            for (int j = 0; j <= 8; ++j)
                if (i != j) {
                    const double scale = std::sqrt(orthogonality_defect(kind, i, i, 12) * orthogonality_defect(kind, j, j, 12));
                    EXPECT_LE(std::abs(orthogonality_defect(kind, i, j, 12)) / scale, 1e-10) << to_string(kind);
                }
    }
}

TEST(Orthogonality, RejectsInexactRule) {
    EXPECT_THROW(orthogonality_defect(BasisKind::hermite(), 6, 6, 3), std::invalid_argument);
}

TEST(BasisKindText, RoundTrip) {
    for (const auto &kind : families()) EXPECT_EQ(parse_basis_kind(to_string(kind)), kind);
    EXPECT_EQ(parse_basis_kind("jacobi"), BasisKind::jacobi(0, 0));
    EXPECT_THROW(parse_basis_kind("chebyshev"), std::invalid_argument);
    EXPECT_THROW(parse_basis_kind("jacobi(-3,0)"), std::invalid_argument);
}
