#pragma once

// Exact GP inference with the summed non-stationary kernel: marginal log
// likelihood, its gradient in PCE-coefficient space, and prediction.

#include "pcegp/data.hpp"
#include "pcegp/kernel.hpp"

#include <numbers>

namespace pcegp {

/// Flat layout shared by mll_gradient and the optimizers:
/// [lengthscale coefficients of kernel 0 .. n_k-1 | noise coefficients (pce
/// mode only) | signal variance of kernel 0 .. n_k-1].
inline Index parameter_count(const KernelStack &stack, const NoiseField &noise) {
    Index n = noise.coefficient_count() + static_cast<Index>(stack.size());
    for (const auto &e : stack.entries()) n += e.lengthscale.coefficient_count();
    return n;
}

inline Vector pack_parameters(const KernelStack &stack, const NoiseField &noise) {
    Vector out(parameter_count(stack, noise));
    Index offset = 0;
    for (const auto &e : stack.entries()) {
        const Index n = e.lengthscale.coefficient_count();
        out.segment(offset, n) = e.lengthscale.coefficients();
        offset += n;
    }
    out.segment(offset, noise.coefficient_count()) = noise.coefficients();
    offset += noise.coefficient_count();
    for (const auto &e : stack.entries()) out[offset++] = e.variance;
    return out;
}

inline void unpack_parameters(const Eigen::Ref<const Vector> &params, KernelStack &stack, NoiseField &noise) {
    if (params.size() != parameter_count(stack, noise)) throw std::invalid_argument("parameter vector size mismatch");
    Index offset = 0;
    for (auto &e : stack.entries()) {
        const Index n = e.lengthscale.coefficient_count();
        e.lengthscale.set_coefficients(params.segment(offset, n));
        offset += n;
    }
    noise.set_coefficients(params.segment(offset, noise.coefficient_count()));
    offset += noise.coefficient_count();
    for (auto &e : stack.entries()) e.variance = params[offset++];
}

struct MllResult {
    double value = 0.0;
    Vector gradient;  // empty unless requested
    double jitter_used = 0.0;
};

namespace detail {

inline void check_training(const Matrix &X_s, const Vector &y_s) {
    if (X_s.rows() < 1) throw std::invalid_argument("need at least one training point");
    if (X_s.rows() != y_s.size()) throw std::invalid_argument("training inputs and outputs differ in length");
}

/// K^{-1} from its Cholesky factor, lower triangle only (upper left zero).
/// L^{-1} is built block column by block column so the zero part of the
/// identity is never solved against.
inline Matrix inverse_lower(const Matrix &L) {
    const Index n = L.rows();
    constexpr Index block = 64;
    Matrix Linv = Matrix::Zero(n, n);
    for (Index j = 0; j < n; j += block) {
        const Index w = std::min(block, n - j);
        auto panel = Linv.block(j, j, n - j, w);
        panel.topRows(w).setIdentity();
        L.block(j, j, n - j, n - j).triangularView<Eigen::Lower>().solveInPlace(panel);
    }
    Matrix inv = Matrix::Zero(n, n);
    inv.selfadjointView<Eigen::Lower>().rankUpdate(Linv.transpose());
    return inv;
}

}  // namespace detail

/// log p(y | X) and optionally d/d(parameters) in the pack_parameters layout.
///
/// The gradient uses dL/dK = W/2 with W = a a^T - K^{-1}, a = K^{-1} y, pushed
/// through the warps w_i = l(x_i) x_i:
///   dL/dw_i = 2 sum_j W_ij var f'(r_ij^2) (w_i - w_j)
///   dL/dc_p = sum_i sum_m dL/dw_im phi_p(x_im) x_im
/// Jitter is treated as a constant.
inline MllResult mll_evaluate(const KernelStack &stack, const NoiseField &noise, const Matrix &X_s, const Vector &y_s,
                              bool with_gradient) {
    detail::check_training(X_s, y_s);
    const Index n = X_s.rows();
    const auto warps = warp_points(stack, X_s);
    std::vector<PairProfiles> profiles;
    Matrix K = Matrix::Zero(n, n);
    for (std::size_t k = 0; k < stack.size(); ++k) {
        const auto &e = stack.entries()[k];
        profiles.push_back(pair_profiles(e.form, warps[k]));
        K.noalias() += e.variance * profiles.back().value;
        K.diagonal().array() += e.variance;
    }
    K.diagonal() += noise_diagonal(noise, X_s);
    K.triangularView<Eigen::StrictlyUpper>() = K.transpose();
    const GramResult gram = factorize_with_jitter(std::move(K), "kernel stack [" + stack.describe() + "]");

    MllResult result;
    result.jitter_used = gram.jitter_used;
    const Vector a = gram.cholesky.solve(y_s);
    const double log_det = 2.0 * gram.cholesky.matrixLLT().diagonal().array().log().sum();
    result.value = -0.5 * y_s.dot(a) - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    if (!with_gradient) return result;

    // only the lower triangle of W is read below
    Matrix W = a * a.transpose();
    W -= detail::inverse_lower(gram.cholesky.matrixLLT());

    result.gradient = Vector::Zero(parameter_count(stack, noise));
    const Index n_x = X_s.cols();
    const Index variance_offset = result.gradient.size() - static_cast<Index>(stack.size());
    Index coeff_offset = 0;
    std::vector<double> phi;
    for (std::size_t k = 0; k < stack.size(); ++k) {
        const auto &entry = stack.entries()[k];
        const Matrix &Wk = warps[k];
        const PairProfiles &pp = profiles[k];
        // profiles hold the strict lower triangle only; W is symmetric
        result.gradient[variance_offset + static_cast<Index>(k)] =
            0.5 * W.diagonal().sum() + (W.array() * pp.value.array()).sum();
        // C_ij = 2 W_ij var f'(r_ij^2); G.col(i) = sum_j C_ij (w_i - w_j)
        const Matrix C = (2.0 * entry.variance) * (W.array() * pp.derivative.array()).matrix();
        const Vector sums = C.rowwise().sum() + C.colwise().sum().transpose();
        Matrix G = Wk * sums.asDiagonal();
        G.noalias() -= Wk * C;
        G.noalias() -= Wk * C.transpose();

        for (const auto &term : entry.lengthscale.terms()) {
            const int degree = term.degree();
            phi.resize(static_cast<std::size_t>(degree) + 1);
            for (Index i = 0; i < n; ++i) {
                for (Index m = 0; m < n_x; ++m) {
                    const double g = G(m, i) * X_s(i, m);
                    if (g == 0.0) continue;
                    detail::eval_basis_point(term.kind, degree, X_s(i, m), phi.data());
                    for (int p = 0; p <= degree; ++p) result.gradient[coeff_offset + p] += g * phi[static_cast<std::size_t>(p)];
                }
            }
            coeff_offset += degree + 1;
        }
    }

    if (!noise.is_fixed()) {
        const Index n_noise = noise.coefficient_count();
        for (Index i = 0; i < n; ++i) {
            const Vector x = X_s.row(i).transpose();
            if (noise.raw(x) <= noise.floor()) continue;  // clamped: locally constant
            result.gradient.segment(coeff_offset, n_noise) += 0.5 * W(i, i) * noise.coefficient_sensitivity(x);
        }
    }
    return result;
}

inline double mll(const KernelStack &stack, const NoiseField &noise, const Matrix &X_s, const Vector &y_s) {
    return mll_evaluate(stack, noise, X_s, y_s, false).value;
}

inline Vector mll_gradient(const KernelStack &stack, const NoiseField &noise, const Matrix &X_s, const Vector &y_s) {
    return mll_evaluate(stack, noise, X_s, y_s, true).gradient;
}

struct Prediction {
    double mean = 0.0;      // raw output units
    double variance = 0.0;  // raw units squared, includes the noise term
};

/// Scaled-space pieces of one prediction.
struct ScaledPosterior {
    double mean = 0.0;
    double latent_variance = 0.0;  // k(x*,x*) - k^T K^{-1} k, clamped at 0
    double noise_variance = 0.0;
};

/// Trained PCEGP: hyperparameters, scalers, scaled training data and the
/// factorized Gram. Immutable after fit_precompute.
class PcegpModel {
public:
    PcegpModel(KernelStack stack, NoiseField noise, ScalerState input_scaler, ScalerState output_scaler,
               Matrix X_s, Vector y_s)
        : stack_(std::move(stack)),
          noise_(std::move(noise)),
          input_scaler_(std::move(input_scaler)),
          output_scaler_(std::move(output_scaler)),
          X_s_(std::move(X_s)),
          y_s_(std::move(y_s)) {
        detail::check_training(X_s_, y_s_);
        warps_ = warp_points(stack_, X_s_);
        Matrix K = kernel_gram(stack_, warps_);
        K.diagonal() += noise_diagonal(noise_, X_s_);
        GramResult gram = factorize_with_jitter(std::move(K), "kernel stack [" + stack_.describe() + "]");
        jitter_used_ = gram.jitter_used;
        gram_ = std::move(gram.matrix);
        chol_ = gram.cholesky.matrixL();
        alpha_ = gram.cholesky.solve(y_s_);
    }

    const KernelStack &stack() const { return stack_; }
    const NoiseField &noise() const { return noise_; }
    const ScalerState &input_scaler() const { return input_scaler_; }
    const ScalerState &output_scaler() const { return output_scaler_; }
    const Matrix &scaled_inputs() const { return X_s_; }
    const Vector &scaled_outputs() const { return y_s_; }
    const Matrix &gram() const { return gram_; }
    const Matrix &cholesky() const { return chol_; }
    const Vector &alpha_solve() const { return alpha_; }
    double jitter_used() const { return jitter_used_; }
    Index n_inputs() const { return X_s_.cols(); }

    ScaledPosterior posterior_scaled(const Eigen::Ref<const Vector> &x_s) const {
        if (x_s.size() != X_s_.cols()) {
            throw std::invalid_argument("query has " + std::to_string(x_s.size()) + " inputs, model expects " +
                                        std::to_string(X_s_.cols()));
        }
        const Vector k = cross_vector(stack_, warps_, x_s);
        const Vector v = chol_.triangularView<Eigen::Lower>().solve(k);
        ScaledPosterior out;
        out.mean = k.dot(alpha_);
        out.latent_variance = std::max(0.0, stack_.total_variance() - v.squaredNorm());
        out.noise_variance = noise_.eval(x_s);
        return out;
    }

    Prediction predict(const Eigen::Ref<const Vector> &x_raw) const {
        const ScaledPosterior post = posterior_scaled(input_scaler_.apply(x_raw));
        const auto raw = inverse_scale_prediction(output_scaler_, post.mean, post.latent_variance + post.noise_variance);
        return {raw.mean, raw.variance};
    }

    /// Predictions for every row of X_raw.
    std::vector<Prediction> predict_batch(const Matrix &X_raw) const {
        if (X_raw.cols() != X_s_.cols()) {
            throw std::invalid_argument("query has " + std::to_string(X_raw.cols()) + " inputs, model expects " +
                                        std::to_string(X_s_.cols()));
        }
        const Matrix Q = input_scaler_.apply_rows(X_raw);
        const Matrix k = cross_matrix(stack_, warps_, Q);
        const Matrix v = chol_.triangularView<Eigen::Lower>().solve(k);
        const Vector mean = k.transpose() * alpha_;
        const double prior = stack_.total_variance();
        std::vector<Prediction> out(static_cast<std::size_t>(X_raw.rows()));
        for (Index q = 0; q < X_raw.rows(); ++q) {
            const double latent = std::max(0.0, prior - v.col(q).squaredNorm());
            const auto raw = inverse_scale_prediction(output_scaler_, mean[q], latent + noise_.eval(Q.row(q).transpose()));
            out[static_cast<std::size_t>(q)] = {raw.mean, raw.variance};
        }
        return out;
    }

private:
    KernelStack stack_;
    NoiseField noise_;
    ScalerState input_scaler_;
    ScalerState output_scaler_;
    Matrix X_s_;
    Vector y_s_;
    std::vector<Matrix> warps_;
    Matrix gram_;
    Matrix chol_;
    Vector alpha_;
    double jitter_used_ = 0.0;
};

inline PcegpModel fit_precompute(KernelStack stack, NoiseField noise, ScalerState input_scaler,
                                 ScalerState output_scaler, const Matrix &X_raw, const Vector &y_raw) {
    if (X_raw.rows() != y_raw.size()) throw DataError("training inputs and outputs differ in length");
    if (input_scaler.dim() != X_raw.cols()) {
        throw DataError("input scaler fitted on " + std::to_string(input_scaler.dim()) + " columns, data has " +
                        std::to_string(X_raw.cols()));
    }
    if (output_scaler.dim() != 1) throw DataError("output scaler must be one-dimensional");
    if (stack.n_inputs() != X_raw.cols()) {
        throw DataError("kernel stack expects " + std::to_string(stack.n_inputs()) + " inputs, data has " +
                        std::to_string(X_raw.cols()));
    }
    Matrix X_s = input_scaler.apply_rows(X_raw);
    Vector y_s = (y_raw.array() - output_scaler.offset[0]) / output_scaler.scale[0];
    return PcegpModel(std::move(stack), std::move(noise), std::move(input_scaler), std::move(output_scaler),
                      std::move(X_s), std::move(y_s));
}

inline Prediction predict(const PcegpModel &model, const Eigen::Ref<const Vector> &x_raw) {
    return model.predict(x_raw);
}

}  // namespace pcegp
