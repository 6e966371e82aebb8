#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "pcegp/data.hpp"
#include "pcegp/gp.hpp"
#include "pcegp/kernel.hpp"
#include "pcegp/optim.hpp"

namespace pcegp {

/// Stationary ARD squared-exponential GP trained by Adam on the log of every
/// hyperparameter.
struct BaselineSettings {
    int n_iterations = 300;
    AdamConfig adam{0.05, 0.9, 0.999, 1e-8};
    double initial_lengthscale = 0.5;
    double initial_variance = 1.0;
    double initial_noise = 0.1;
    double noise_floor = 1e-6;
    ScalerKind input_scaler = ScalerKind::min_max;
    ScalerKind output_scaler = ScalerKind::z_normalize;

    void validate() const {
        if (n_iterations < 0) throw std::invalid_argument("baseline iterations must be >= 0");
        adam.validate();
        if (!(initial_lengthscale > 0.0) || !(initial_variance > 0.0) || !(initial_noise > 0.0) || !(noise_floor > 0.0))
            throw std::invalid_argument("baseline initial values must be positive");
    }
};

struct BaselineParams {
    Vector lengthscales;
    double variance = 1.0;
    double noise = 0.1;
};

namespace detail {

inline Matrix ard_se_gram(const Matrix &X_s, const BaselineParams &p) {
    const Matrix Z = X_s.array().rowwise() / p.lengthscales.transpose().array();
    const Vector sq = Z.rowwise().squaredNorm();
    Matrix D = (-2.0 * Z * Z.transpose()).colwise() + sq;
    D.rowwise() += sq.transpose();
    return (p.variance * (-0.5 * D.array().max(0.0)).exp()).matrix();
}

struct BaselineEval {
    double mll = 0.0;
    Vector gradient;  // d mll / d [log l_1..log l_d, log var, log noise]
};

inline BaselineEval baseline_mll(const Matrix &X_s, const Vector &y_s, const BaselineParams &p) {
    const Index n = X_s.rows();
    const Index d = X_s.cols();
    const Matrix Kf = ard_se_gram(X_s, p);
    Matrix K = Kf;
    K.diagonal().array() += p.noise;
    GramResult g = factorize_with_jitter(std::move(K), "baseline ARD squared exponential");
    const Vector a = g.cholesky.solve(y_s);
    BaselineEval out;
    const Matrix L = g.cholesky.matrixL();
    out.mll = -0.5 * y_s.dot(a) - L.diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    Matrix W = a * a.transpose() - g.cholesky.solve(Matrix::Identity(n, n));
    const Matrix WK = W.cwiseProduct(Kf);
    out.gradient.resize(d + 2);
    for (Index k = 0; k < d; ++k) {
        const Vector z = X_s.col(k) / p.lengthscales[k];
        const Vector z2 = z.array().square();
        // sum_ij WK_ij (z_i - z_j)^2
        const double s = 2.0 * (WK * Vector::Ones(n)).dot(z2) - 2.0 * z.dot(WK * z);
        out.gradient[k] = 0.5 * s;
    }
    out.gradient[d] = 0.5 * WK.sum();
    out.gradient[d + 1] = 0.5 * p.noise * W.trace();
    return out;
}

}  // namespace detail

class BaselineModel {
public:
    BaselineModel(BaselineParams params, ScalerState in, ScalerState out, Matrix X_s, Vector y_s)
        : params_(std::move(params)), in_(std::move(in)), out_(std::move(out)), X_s_(std::move(X_s)), y_s_(std::move(y_s)) {
        Matrix K = detail::ard_se_gram(X_s_, params_);
        K.diagonal().array() += params_.noise;
        GramResult g = factorize_with_jitter(std::move(K), "baseline ARD squared exponential");
        chol_ = g.cholesky.matrixL();
        alpha_ = g.cholesky.solve(y_s_);
    }

    const BaselineParams &params() const { return params_; }

    std::vector<Prediction> predict_batch(const Matrix &X_raw) const {
        const Matrix Q = in_.apply_rows(X_raw);
        Matrix k(X_s_.rows(), Q.rows());
        for (Index j = 0; j < Q.rows(); ++j) {
            const Matrix z = (X_s_.rowwise() - Q.row(j)).array().rowwise() / params_.lengthscales.transpose().array();
            k.col(j) = params_.variance * (-0.5 * z.rowwise().squaredNorm().array()).exp();
        }
        const Matrix v = chol_.triangularView<Eigen::Lower>().solve(k);
        const Vector mean = k.transpose() * alpha_;
        std::vector<Prediction> preds(static_cast<std::size_t>(Q.rows()));
        for (Index j = 0; j < Q.rows(); ++j) {
            const double latent = std::max(0.0, params_.variance - v.col(j).squaredNorm());
            const auto raw = inverse_scale_prediction(out_, mean[j], latent + params_.noise);
            preds[static_cast<std::size_t>(j)] = {raw.mean, raw.variance};
        }
        return preds;
    }

private:
    BaselineParams params_;
    ScalerState in_;
    ScalerState out_;
    Matrix X_s_;
    Vector y_s_;
    Matrix chol_;
    Vector alpha_;
};

/// Fits scalers on the given rows, trains the hyperparameters and returns the
/// conditioned model.
inline BaselineModel fit_baseline(const Dataset &data, const std::vector<Index> &rows, const BaselineSettings &settings) {
    settings.validate();
    const Dataset sub = data.subset(rows);
    ScalerState in = fit_scaler(settings.input_scaler, sub.inputs, sub.column_names);
    ScalerState out = fit_scaler(settings.output_scaler, sub.outputs);
    const Matrix X_s = in.apply_rows(sub.inputs);
    const Vector y_s = (sub.outputs.array() - out.offset[0]) / out.scale[0];
    const Index d = X_s.cols();

    Vector p(d + 2);
    p.head(d).setConstant(std::log(settings.initial_lengthscale));
    p[d] = std::log(settings.initial_variance);
    p[d + 1] = std::log(settings.initial_noise);
    const double log_floor = std::log(settings.noise_floor);
    auto unpack = [&](const Vector &q) {
        BaselineParams bp;
        bp.lengthscales = q.head(d).array().exp();
        bp.variance = std::exp(q[d]);
        bp.noise = std::exp(std::max(q[d + 1], log_floor));
        return bp;
    };
    AdamState state(settings.adam, p.size());
    for (int it = 0; it < settings.n_iterations; ++it) {
        const auto ev = detail::baseline_mll(X_s, y_s, unpack(p));
        Vector grad = -ev.gradient;
        if (p[d + 1] <= log_floor && grad[d + 1] > 0.0) grad[d + 1] = 0.0;
        if (!grad.allFinite()) throw FactorizationError("baseline: non-finite MLL gradient");
        adam_step(state, p, grad);
        p[d + 1] = std::max(p[d + 1], log_floor);
    }
    return BaselineModel(unpack(p), std::move(in), std::move(out), X_s, y_s);
}

}  // namespace pcegp
