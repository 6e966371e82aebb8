#pragma once

// Stationary kernels, their warped non-stationary forms, the summed kernel
// and Gram assembly.

#include "pcegp/hyper.hpp"

#include <array>
#include <sstream>

namespace pcegp {

enum class KernelFamily { squared_exponential, absolute_exponential, matern_3_2, rational_quadratic };

struct KernelForm {
    KernelFamily family = KernelFamily::squared_exponential;
    double shape = 1.0;  // rational quadratic only

    static KernelForm squared_exponential() { return {KernelFamily::squared_exponential}; }
    static KernelForm absolute_exponential() { return {KernelFamily::absolute_exponential}; }
    static KernelForm matern_3_2() { return {KernelFamily::matern_3_2}; }
    static KernelForm rational_quadratic(double shape = 1.0) {
        if (!(shape > 0.0)) throw std::invalid_argument("rational quadratic shape must be positive");
        return {KernelFamily::rational_quadratic, shape};
    }

    friend bool operator==(const KernelForm &, const KernelForm &) = default;
};

inline constexpr std::array<KernelFamily, 4> all_kernel_families = {
    KernelFamily::squared_exponential, KernelFamily::absolute_exponential, KernelFamily::matern_3_2,
    KernelFamily::rational_quadratic};

inline std::string to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::squared_exponential: return "squared_exponential";
        case KernelFamily::absolute_exponential: return "absolute_exponential";
        case KernelFamily::matern_3_2: return "matern_3_2";
        case KernelFamily::rational_quadratic: return "rational_quadratic";
    }
    return "unknown";
}

inline KernelFamily parse_kernel_family(std::string_view text) {
    for (auto f : all_kernel_families) {
        if (to_string(f) == text) return f;
    }
    throw std::invalid_argument("unknown kernel '" + std::string(text) + "'");
}

/// Unit-variance profile f(r^2) of a form as a function of the squared
/// (already lengthscale-normalized) distance; f(0) = 1.
inline double kernel_profile(const KernelForm &form, double sq_dist) {
    switch (form.family) {
        case KernelFamily::squared_exponential: return std::exp(-0.5 * sq_dist);
        case KernelFamily::absolute_exponential: return std::exp(-std::sqrt(sq_dist));
        case KernelFamily::matern_3_2: {
            const double s = std::sqrt(3.0 * sq_dist);
            return (1.0 + s) * std::exp(-s);
        }
        case KernelFamily::rational_quadratic:
            return std::pow(1.0 + sq_dist / (2.0 * form.shape), -form.shape);
    }
    return 0.0;
}

/// df / d(r^2). The absolute exponential is not differentiable at r = 0;
/// zero is returned there (its pairwise gradient vanishes anyway since the
/// displacement is zero).
inline double kernel_profile_derivative(const KernelForm &form, double sq_dist) {
    switch (form.family) {
        case KernelFamily::squared_exponential: return -0.5 * std::exp(-0.5 * sq_dist);
        case KernelFamily::absolute_exponential: {
            if (sq_dist <= 0.0) return 0.0;
            const double r = std::sqrt(sq_dist);
            return -std::exp(-r) / (2.0 * r);
        }
        case KernelFamily::matern_3_2: return -1.5 * std::exp(-std::sqrt(3.0 * sq_dist));
        case KernelFamily::rational_quadratic:
            return -0.5 * std::pow(1.0 + sq_dist / (2.0 * form.shape), -form.shape - 1.0);
    }
    return 0.0;
}

inline double kernel_stationary(const KernelForm &form, double variance, double lengthscale,
                                const Eigen::Ref<const Vector> &x, const Eigen::Ref<const Vector> &x2) {
    if (x.size() != x2.size()) throw std::invalid_argument("kernel arguments differ in dimension");
    if (!(lengthscale > 0.0)) throw std::invalid_argument("stationary lengthscale must be positive");
    const double d2 = (x - x2).squaredNorm() / (lengthscale * lengthscale);
    return variance * kernel_profile(form, d2);
}

inline double kernel_nonstationary(const KernelForm &form, double variance, const LengthscaleField &field,
                                   const Eigen::Ref<const Vector> &x, const Eigen::Ref<const Vector> &x2) {
    if (x.size() != x2.size()) throw std::invalid_argument("kernel arguments differ in dimension");
    const double d2 = (field.warp(x) - field.warp(x2)).squaredNorm();
    return variance * kernel_profile(form, d2);
}

struct KernelEntry {
    KernelForm form;
    double variance = 1.0;  // sigma_f^2
    LengthscaleField lengthscale;
};

/// k_sum(x, x') = sum of the entries' non-stationary kernels.
class KernelStack {
public:
    KernelStack() = default;
    explicit KernelStack(std::vector<KernelEntry> entries) : entries_(std::move(entries)) { validate(); }

    const std::vector<KernelEntry> &entries() const { return entries_; }
    std::vector<KernelEntry> &entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }
    Index n_inputs() const { return entries_.empty() ? 0 : entries_.front().lengthscale.n_inputs(); }

    void validate() const {
        if (entries_.empty()) throw std::invalid_argument("kernel stack needs at least one kernel");
        for (const auto &e : entries_) {
            if (!(e.variance > 0.0)) throw std::invalid_argument("kernel signal variance must be positive");
            if (e.form.family == KernelFamily::rational_quadratic && !(e.form.shape > 0.0))
                throw std::invalid_argument("rational quadratic shape must be positive");
            if (e.lengthscale.n_inputs() != entries_.front().lengthscale.n_inputs())
                throw std::invalid_argument("kernel stack entries disagree on input dimension");
        }
    }

    double total_variance() const {
        double v = 0.0;
        for (const auto &e : entries_) v += e.variance;
        return v;
    }

    std::string describe() const {
        std::ostringstream os;
        os.precision(6);
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            const auto &e = entries_[k];
            os << (k ? "; " : "") << to_string(e.form.family) << "(variance=" << e.variance;
            for (const auto &t : e.lengthscale.terms()) os << ", " << to_string(t.kind) << " degree " << t.degree();
            os << ")";
        }
        return os.str();
    }

private:
    std::vector<KernelEntry> entries_;
};

inline double kernel_sum(const KernelStack &stack, const Eigen::Ref<const Vector> &x,
                         const Eigen::Ref<const Vector> &x2) {
    double total = 0.0;
    for (const auto &e : stack.entries()) total += kernel_nonstationary(e.form, e.variance, e.lengthscale, x, x2);
    return total;
}

/// Warped copies of the points, one n_x by N matrix per stack entry.
inline std::vector<Matrix> warp_points(const KernelStack &stack, const Matrix &X_s) {
    if (X_s.cols() != stack.n_inputs()) {
        throw std::invalid_argument("inputs have " + std::to_string(X_s.cols()) + " columns, kernel stack expects " +
                                    std::to_string(stack.n_inputs()));
    }
    std::vector<Matrix> warps;
    warps.reserve(stack.size());
    for (const auto &e : stack.entries()) warps.push_back(e.lengthscale.warp_batch(X_s));
    return warps;
}

/// Writes p = f(r2) and dp = df/d(r2) element-wise, one exponential or
/// power per entry.
inline void profile_with_derivative(const KernelForm &form, const Eigen::Ref<const Vector> &r2, Eigen::Ref<Vector> p,
                                    Eigen::Ref<Vector> dp) {
    auto P = p.array();
    auto DP = dp.array();
    switch (form.family) {
        case KernelFamily::squared_exponential:
            P = (-0.5 * r2.array()).exp();
            DP = -0.5 * P;
            return;
        case KernelFamily::absolute_exponential:
            DP = r2.array().sqrt();
            P = (-DP).exp();
            DP = (DP > 0.0).select(-P / (2.0 * DP), 0.0);
            return;
        case KernelFamily::matern_3_2:
            DP = (3.0 * r2.array()).sqrt();
            P = (-DP).exp();
            P = (1.0 + DP) * P;
            DP = -1.5 * P / (1.0 + DP);
            return;
        case KernelFamily::rational_quadratic:
            DP = 1.0 + r2.array() / (2.0 * form.shape);
            if (form.shape == 1.0) {
                P = DP.inverse();
            } else {
                P = DP.pow(-form.shape);
            }
            DP = -0.5 * P / DP;
            return;
    }
}

/// Unit-variance profile matrices of one kernel over the strictly lower
/// triangle of the pairs of warped points W (n_x by N). Entries on and
/// above the diagonal are left zero. Distances come from explicit
/// differences so coincident points give exactly zero.
struct PairProfiles {
    Matrix value;       // f(r_ij^2)
    Matrix derivative;  // f'(r_ij^2)
};

inline PairProfiles pair_profiles(const KernelForm &form, const Matrix &W) {
    const Index n = W.cols();
    const Matrix Wt = W.transpose();
    PairProfiles out{Matrix::Zero(n, n), Matrix::Zero(n, n)};
    Vector r2(n);
    for (Index j = 0; j + 1 < n; ++j) {
        const Index len = n - j - 1;
        auto seg = r2.head(len).array();
        seg.setZero();
        for (Index m = 0; m < W.rows(); ++m) seg += (Wt.col(m).segment(j + 1, len).array() - W(m, j)).square();
        profile_with_derivative(form, r2.head(len), out.value.col(j).segment(j + 1, len),
                                out.derivative.col(j).segment(j + 1, len));
    }
    return out;
}

/// Noise-free k_sum Gram from precomputed warps.
inline Matrix kernel_gram(const KernelStack &stack, const std::vector<Matrix> &warps) {
    const Index n = warps.empty() ? 0 : warps.front().cols();
    Matrix K = Matrix::Zero(n, n);
    for (std::size_t k = 0; k < stack.size(); ++k) {
        const auto &e = stack.entries()[k];
        K.noalias() += e.variance * pair_profiles(e.form, warps[k]).value;
        K.diagonal().array() += e.variance;
    }
    K.triangularView<Eigen::StrictlyUpper>() = K.transpose();
    return K;
}

inline Vector noise_diagonal(const NoiseField &noise, const Matrix &X_s) {
    Vector d(X_s.rows());
    for (Index i = 0; i < X_s.rows(); ++i) d[i] = noise.eval(X_s.row(i).transpose());
    return d;
}

inline constexpr std::array<double, 5> jitter_ladder = {0.0, 1e-10, 1e-8, 1e-6, 1e-4};

struct GramResult {
    Matrix matrix;  // k_sum Gram + noise + jitter
    double jitter_used = 0.0;
    Eigen::LLT<Matrix> cholesky;
};

/// Adds jitter from the ladder until the Cholesky factorization succeeds.
inline GramResult factorize_with_jitter(Matrix K, const std::string &context) {
    GramResult result;
    for (double jitter : jitter_ladder) {
        if (jitter > 0.0) K.diagonal().array() += jitter - result.jitter_used;
        result.jitter_used = jitter;
        result.cholesky.compute(K);
        if (result.cholesky.info() == Eigen::Success && result.cholesky.matrixLLT().diagonal().allFinite()) {
            result.matrix = std::move(K);
            return result;
        }
    }
    throw FactorizationError("Cholesky failed after jitter " + std::to_string(jitter_ladder.back()) + " for " +
                             context);
}

inline GramResult gram_matrix(const KernelStack &stack, const NoiseField &noise, const Matrix &X_s) {
    if (X_s.rows() < 1) throw std::invalid_argument("gram_matrix needs at least one point");
    Matrix K = kernel_gram(stack, warp_points(stack, X_s));
    K.diagonal() += noise_diagonal(noise, X_s);
    return factorize_with_jitter(std::move(K), "kernel stack [" + stack.describe() + "]");
}

/// Cross covariances between warped training points and one query.
inline Vector cross_vector(const KernelStack &stack, const std::vector<Matrix> &train_warps,
                           const Eigen::Ref<const Vector> &x_star) {
    const Index n = train_warps.empty() ? 0 : train_warps.front().cols();
    Vector k = Vector::Zero(n);
    for (std::size_t e = 0; e < stack.size(); ++e) {
        const auto &entry = stack.entries()[e];
        const Vector w_star = entry.lengthscale.warp(x_star);
        for (Index i = 0; i < n; ++i) {
            k[i] += entry.variance * kernel_profile(entry.form, (train_warps[e].col(i) - w_star).squaredNorm());
        }
    }
    return k;
}

/// Cross covariances for many queries: N_train by N_query.
inline Matrix cross_matrix(const KernelStack &stack, const std::vector<Matrix> &train_warps, const Matrix &X_star_s) {
    const Index n = train_warps.empty() ? 0 : train_warps.front().cols();
    Matrix k = Matrix::Zero(n, X_star_s.rows());
    for (std::size_t e = 0; e < stack.size(); ++e) {
        const auto &entry = stack.entries()[e];
        const Matrix w_star = entry.lengthscale.warp_batch(X_star_s);
        for (Index q = 0; q < w_star.cols(); ++q) {
            for (Index i = 0; i < n; ++i) {
                k(i, q) += entry.variance *
                           kernel_profile(entry.form, (train_warps[e].col(i) - w_star.col(q)).squaredNorm());
            }
        }
    }
    return k;
}

inline Vector cross_vector(const KernelStack &stack, const Matrix &X_s, const Eigen::Ref<const Vector> &x_star) {
    if (x_star.size() != X_s.cols()) throw std::invalid_argument("query dimension does not match training inputs");
    return cross_vector(stack, warp_points(stack, X_s), x_star);
}

}  // namespace pcegp
