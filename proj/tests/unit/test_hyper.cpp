#include "pcegp/hyper.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace pcegp;
namespace t = pcegp::testing;

TEST(Lengthscale, ConstantField) {
    Vector c = Vector::Zero(6);
    c[0] = 0.8;
    const LengthscaleField field({{BasisKind::legendre_shifted_01(), c}}, 3);
    const Vector l = eval_lengthscale(field, (Vector(3) << 0.1, 0.5, 0.9).finished());
    EXPECT_TRUE(l.isApprox(Vector::Constant(3, 0.8), 1e-15));
}

TEST(Lengthscale, LinearShiftedLegendrePerCoordinate) {
    const LengthscaleField field({{BasisKind::legendre_shifted_01(), (Vector(2) << 0, 1).finished()}}, 2);
    const Vector l = eval_lengthscale(field, (Vector(2) << 0.25, 0.75).finished());
    EXPECT_NEAR(l[0], -0.5, 1e-15);
    EXPECT_NEAR(l[1], 0.5, 1e-15);
}

TEST(Lengthscale, CoefficientCountIsSumOfDegrees) {
    const LengthscaleField field({{BasisKind::legendre_shifted_01(), Vector::Zero(6)}, {BasisKind::hermite(), Vector::Zero(6)}}, 4);
    EXPECT_EQ(field.coefficient_count(), 2 * (5 + 1));
}

TEST(Lengthscale, DimensionMismatch) {
    const auto field = LengthscaleField::constant(1.0, 3);
    EXPECT_THROW(field.eval(Vector::Zero(2)), std::invalid_argument);
    EXPECT_THROW(field.eval_batch(Matrix::Zero(4, 2)), std::invalid_argument);
}

TEST(Lengthscale, ZeroCoefficientsGiveZeroVector) {
    const LengthscaleField field({{BasisKind::legendre_shifted_01(), Vector::Zero(4)}}, 3);
    EXPECT_TRUE(field.eval((Vector(3) << 0.2, 0.4, 0.6).finished()).isZero(0.0));
}

TEST(Lengthscale, BatchMatchesLoop) {
    Rng rng(5);
    const auto field = t::random_field(rng, 3, 7);
    const Matrix X = t::random_matrix(rng, 25, 3);
    const Matrix L = eval_lengthscale_batch(field, X);
    ASSERT_EQ(L.rows(), 3);
    ASSERT_EQ(L.cols(), 25);
    for (Index i = 0; i < X.rows(); ++i) {
        EXPECT_LE((L.col(i) - field.eval(X.row(i).transpose())).cwiseAbs().maxCoeff(), 1e-14);
    }
    const Matrix single = eval_lengthscale_batch(field, X.topRows(1));
    EXPECT_LE((single.col(0) - field.eval(X.row(0).transpose())).cwiseAbs().maxCoeff(), 1e-14);
    const auto constant = LengthscaleField::constant(2.5, 3);
    EXPECT_TRUE(eval_lengthscale_batch(constant, X).isApprox(Matrix::Constant(3, 25, 2.5)));
}

TEST(Lengthscale, LinearInCoefficients) {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        auto f1 = t::random_field(rng, 2, 5);
        auto f2 = t::random_field(rng, 2, 5);
        const double a = rng.uniform(-2, 2);
        const double b = rng.uniform(-2, 2);
        auto mix = f1;
        mix.set_coefficients(a * f1.coefficients() + b * f2.coefficients());
        const Vector x = t::random_vector(rng, 2, 0, 1);
        EXPECT_LE((mix.eval(x) - (a * f1.eval(x) + b * f2.eval(x))).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Lengthscale, FiniteDifferenceSensitivity) {
    Rng rng(23);
    auto field = t::random_field(rng, 3, 6);
    const Vector x = t::random_vector(rng, 3, 0, 1);
    const Vector base = field.coefficients();
    const double h = 1e-6;
    for (Index p = 0; p < base.size(); ++p) {
        Vector up = base;
        Vector dn = base;
        up[p] += h;
        dn[p] -= h;
        field.set_coefficients(up);
        const Vector lu = field.eval(x);
        field.set_coefficients(dn);
        const Vector ld = field.eval(x);
        field.set_coefficients(base);
        for (Index j = 0; j < 3; ++j) {
            EXPECT_NEAR((lu[j] - ld[j]) / (2 * h), field.coefficient_sensitivity(x[j])[p], 1e-8);
        }
    }
}

TEST(Noise, FixedValue) {
    const auto noise = NoiseField::fixed(1e-4);
    EXPECT_EQ(eval_noise(noise, (Vector(2) << 0.3, 0.9).finished()), 1e-4);
    EXPECT_THROW(NoiseField::fixed(0.0), std::invalid_argument);
}

TEST(Noise, PceConstantRecovery) {
    Vector c = Vector::Zero(3);
    c[0] = 0.05;
    const auto noise = NoiseField::pce({{BasisKind::legendre_shifted_01(), c}});
    for (Index nx : {1, 2, 5}) EXPECT_NEAR(eval_noise(noise, Vector::Constant(nx, 0.4)), 0.05, 1e-16);
}

TEST(Noise, AveragesOverInputs) {
    const auto noise = NoiseField::pce({{BasisKind::legendre_shifted_01(), (Vector(2) << 1.0, 0.5).finished()}});
    // (1/2) [(1 + 0.5 (2*0.25-1)) + (1 + 0.5 (2*1-1))] = (0.75 + 1.5) / 2
    EXPECT_NEAR(noise.eval((Vector(2) << 0.25, 1.0).finished()), 1.125, 1e-15);
}

TEST(Noise, NegativeClampedToFloor) {
    const auto noise = NoiseField::pce({{BasisKind::legendre_shifted_01(), Vector::Constant(1, -0.3)}}, 1e-8);
    EXPECT_EQ(noise.eval(Vector::Constant(3, 0.5)), 1e-8);
    EXPECT_NEAR(noise.raw(Vector::Constant(3, 0.5)), -0.3, 1e-16);
}

TEST(Noise, AlwaysAboveFloor) {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const auto noise = NoiseField::pce({{BasisKind::legendre_shifted_01(), t::random_vector(rng, 4, -1, 1)}}, 1e-6);
        EXPECT_GE(noise.eval(t::random_vector(rng, 3, 0, 1)), 1e-6);
    }
}

TEST(Noise, FiniteDifferenceSensitivity) {
    Rng rng(37);
    auto noise = NoiseField::pce({{BasisKind::legendre_shifted_01(), t::random_vector(rng, 4, 0.5, 1.0)}});
    const Vector x = t::random_vector(rng, 3, 0, 1);
    const Vector base = noise.coefficients();
    const Vector sens = noise.coefficient_sensitivity(x);
    const double h = 1e-6;
    for (Index p = 0; p < base.size(); ++p) {
        Vector up = base;
        Vector dn = base;
        up[p] += h;
        dn[p] -= h;
        noise.set_coefficients(up);
        const double vu = noise.raw(x);
        noise.set_coefficients(dn);
        const double vd = noise.raw(x);
        noise.set_coefficients(base);
        EXPECT_NEAR((vu - vd) / (2 * h), sens[p], 1e-8);
    }
}
