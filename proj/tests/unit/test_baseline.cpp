#include "pcegp/baseline.hpp"

#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"

using namespace pcegp;
namespace t = pcegp::testing;

namespace {

BaselineParams params_from(const Vector &p, Index d) {
    BaselineParams bp;
    bp.lengthscales = p.head(d).array().exp();
    bp.variance = std::exp(p[d]);
    bp.noise = std::exp(p[d + 1]);
    return bp;
}

}  // namespace

TEST(BaselineMll, GradientMatchesFiniteDifference) {
    Rng rng(71);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix X = t::random_matrix(rng, 9, 3);
        const Vector y = t::random_vector(rng, 9);
        const Vector p = t::random_vector(rng, 5, -1.0, 0.5);
        const auto ev = detail::baseline_mll(X, y, params_from(p, 3));
        const Vector fd = t::central_difference(
            [&](const Vector &q) { return detail::baseline_mll(X, y, params_from(q, 3)).mll; }, p, 1e-6);
        for (Index i = 0; i < p.size(); ++i)
            EXPECT_NEAR(ev.gradient[i], fd[i], 1e-5 * std::max(1.0, std::abs(fd[i]))) << "param " << i;
    }
}

TEST(BaselineMll, MatchesGenericGpMll) {
    Rng rng(73);
    const Matrix X = t::random_matrix(rng, 7, 1);
    const Vector y = t::random_vector(rng, 7);
    BaselineParams bp{Vector::Constant(1, 0.4), 1.3, 0.02};
    const KernelStack stack({{KernelForm::squared_exponential(), 1.3, LengthscaleField::constant(1.0 / 0.4, 1)}});
    EXPECT_NEAR(detail::baseline_mll(X, y, bp).mll, mll(stack, NoiseField::fixed(0.02), X, y), 1e-10);
}

TEST(Baseline, LinearDataFitsWell) {
    Rng rng(79);
    Dataset d;
    d.inputs = t::random_matrix(rng, 50, 2, 0.0, 3.0);
    d.outputs = 2.0 * d.inputs.col(0) - 0.5 * d.inputs.col(1);
    d.outputs.array() += 1.0;
    d.column_names = {"a", "b"};
    d.target_name = "y";
    std::vector<Index> train(40), test(10);
    std::iota(train.begin(), train.end(), Index{0});
    std::iota(test.begin(), test.end(), Index{40});
    const BaselineModel model = fit_baseline(d, train, BaselineSettings{});
    const Dataset held = d.subset(test);
    std::vector<double> means, truth;
    for (const auto &p : model.predict_batch(held.inputs)) means.push_back(p.mean);
    for (Index i = 0; i < held.outputs.size(); ++i) truth.push_back(held.outputs[i]);
    const double sd = std::sqrt((d.outputs.array() - d.outputs.mean()).square().mean());
    EXPECT_LT(rmse(means, truth), 0.05 * sd);
}

TEST(Baseline, PredictionVarianceNonNegative) {
    Rng rng(83);
    Dataset d;
    d.inputs = t::random_matrix(rng, 20, 2);
    d.outputs = t::random_vector(rng, 20);
    d.column_names = {"a", "b"};
    std::vector<Index> rows(20);
    std::iota(rows.begin(), rows.end(), Index{0});
    const BaselineModel model = fit_baseline(d, rows, BaselineSettings{});
    for (const auto &p : model.predict_batch(t::random_matrix(rng, 30, 2, -1.0, 2.0))) EXPECT_GE(p.variance, 0.0);
}
