#pragma once

// Two-stage hyperparameter search: random warmup, then TPE suggestions, each
// trial refined by Adam on the MLL inside k-fold cross-validation.

#include "pcegp/gp.hpp"

#include <atomic>
#include <chrono>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>

namespace pcegp {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// EI for maximization: (mu - f_best - xi) Phi(z) + sigma phi(z).
inline double expected_improvement(double mu, double sigma, double f_best, double xi = 0.0) {
    if (sigma < 0.0) throw std::invalid_argument("expected_improvement: sigma must be non-negative");
    const double gain = mu - f_best - xi;
    if (sigma == 0.0) return std::max(0.0, gain);
    const double z = gain / sigma;
    return std::max(0.0, gain * normal_cdf(z) + sigma * normal_pdf(z));
}

// ---------------------------------------------------------------- Adam

struct AdamConfig {
    double step_size = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (!(step_size > 0.0)) throw std::invalid_argument("adam step_size must be positive");
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
            throw std::invalid_argument("adam betas must lie in (0, 1)");
        if (!(epsilon > 0.0)) throw std::invalid_argument("adam epsilon must be positive");
    }
};

struct AdamState {
    AdamConfig config;
    Vector first_moment;
    Vector second_moment;
    long t = 0;

    AdamState() = default;
    AdamState(AdamConfig cfg, Index dim)
        : config(cfg), first_moment(Vector::Zero(dim)), second_moment(Vector::Zero(dim)) {
        config.validate();
    }
};

/// One bias-corrected Adam descent step on params, in place.
inline void adam_step(AdamState &state, Vector &params, const Vector &gradient) {
    if (params.size() != gradient.size() || params.size() != state.first_moment.size())
        throw std::invalid_argument("adam_step: dimension mismatch");
    const auto &c = state.config;
    ++state.t;
    state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * gradient;
    state.second_moment = c.beta2 * state.second_moment + (1.0 - c.beta2) * gradient.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
    params.array() -= c.step_size * (state.first_moment.array() / bc1) /
                      ((state.second_moment.array() / bc2).sqrt() + c.epsilon);
}

// ---------------------------------------------------------------- search space

enum class NoiseMode { fixed, pce };

inline std::string to_string(NoiseMode m) { return m == NoiseMode::fixed ? "fixed" : "pce"; }

inline NoiseMode parse_noise_mode(std::string_view text) {
    if (text == "fixed") return NoiseMode::fixed;
    if (text == "pce") return NoiseMode::pce;
    throw std::invalid_argument("unknown noise mode '" + std::string(text) + "' (expected fixed or pce)");
}

/// Model structure plus the bounds the search draws from. Degrees are shared:
/// one q for every lengthscale PCE, one r for the noise PCE.
struct SearchSpace {
    std::vector<KernelForm> kernels = {KernelForm::squared_exponential(), KernelForm::absolute_exponential(),
                                       KernelForm::matern_3_2(), KernelForm::rational_quadratic()};
    std::vector<BasisKind> lengthscale_bases = {BasisKind::legendre_shifted_01()};
    int q_min = 5;
    int q_max = 10;

    NoiseMode noise_mode = NoiseMode::fixed;
    double noise_value = 1e-4;
    std::vector<BasisKind> noise_bases = {BasisKind::legendre_shifted_01()};
    int r_min = 0;
    int r_max = 2;
    double noise_floor = 1e-8;

    double coeff_lo = -2.0;
    double coeff_hi = 2.0;
    double scale_lo = 1e-3;
    double scale_hi = 10.0;

    static constexpr int max_degree = 16;

    Index n_kernels() const { return static_cast<Index>(kernels.size()); }
    Index n_lengthscale_bases() const { return static_cast<Index>(lengthscale_bases.size()); }
    Index n_noise_bases() const { return noise_mode == NoiseMode::pce ? static_cast<Index>(noise_bases.size()) : 0; }

    void validate() const {
        if (kernels.empty()) throw std::invalid_argument("search space needs at least one kernel");
        if (lengthscale_bases.empty()) throw std::invalid_argument("search space needs at least one lengthscale basis");
        for (const auto &k : kernels)
            if (k.family == KernelFamily::rational_quadratic && !(k.shape > 0.0))
                throw std::invalid_argument("rational quadratic shape must be positive");
        for (const auto &b : lengthscale_bases) b.validate();
        if (q_min < 0 || q_max > max_degree || q_min > q_max)
            throw std::invalid_argument("lengthscale degree range must satisfy 0 <= min <= max <= 16");
        if (!(coeff_lo < coeff_hi)) throw std::invalid_argument("coefficient range needs lo < hi");
        if (!(scale_lo > 0.0 && scale_lo < scale_hi)) throw std::invalid_argument("variance range needs 0 < lo < hi");
        if (noise_mode == NoiseMode::fixed) {
            if (!(noise_value > 0.0)) throw std::invalid_argument("fixed noise value must be positive");
        } else {
            if (noise_bases.empty()) throw std::invalid_argument("pce noise needs at least one basis");
            for (const auto &b : noise_bases) b.validate();
            if (r_min < 0 || r_max > max_degree || r_min > r_max)
                throw std::invalid_argument("noise degree range must satisfy 0 <= min <= max <= 16");
        }
        if (!(noise_floor > 0.0)) throw std::invalid_argument("noise floor must be positive");
    }

    // Flat theta layout: [q, r, lengthscale slots (kernel-major, basis, q_max+1),
    // noise slots (basis, r_max+1), signal variances]. Slots above the active
    // degree are carried but unused.
    Index lengthscale_slots() const { return q_max + 1; }
    Index noise_slots() const { return n_noise_bases() > 0 ? r_max + 1 : 0; }
    Index lengthscale_offset(Index kernel, Index basis) const {
        return 2 + (kernel * n_lengthscale_bases() + basis) * lengthscale_slots();
    }
    Index noise_offset(Index basis) const {
        return 2 + n_kernels() * n_lengthscale_bases() * lengthscale_slots() + basis * noise_slots();
    }
    Index variance_offset(Index kernel) const { return noise_offset(n_noise_bases()) + kernel; }
    Index theta_size() const { return variance_offset(n_kernels()); }
};

inline int theta_q(const Vector &theta) { return static_cast<int>(std::lround(theta[0])); }
inline int theta_r(const Vector &theta) { return static_cast<int>(std::lround(theta[1])); }

struct ModelParts {
    KernelStack stack;
    NoiseField noise;
};

/// Kernel stack and noise field described by theta, for n_inputs inputs.
inline ModelParts build_model(const SearchSpace &space, const Vector &theta, Index n_inputs) {
    if (theta.size() != space.theta_size()) throw std::invalid_argument("theta size does not match search space");
    const int q = theta_q(theta);
    std::vector<KernelEntry> entries;
    for (Index k = 0; k < space.n_kernels(); ++k) {
        std::vector<BasisTerm> terms;
        for (Index b = 0; b < space.n_lengthscale_bases(); ++b) {
            terms.push_back({space.lengthscale_bases[b], theta.segment(space.lengthscale_offset(k, b), q + 1)});
        }
        entries.push_back({space.kernels[k], theta[space.variance_offset(k)], LengthscaleField(std::move(terms), n_inputs)});
    }
    if (space.noise_mode == NoiseMode::fixed) {
        return {KernelStack(std::move(entries)), NoiseField::fixed(space.noise_value, space.noise_floor)};
    }
    const int r = theta_r(theta);
    std::vector<BasisTerm> nterms;
    for (Index b = 0; b < space.n_noise_bases(); ++b) {
        nterms.push_back({space.noise_bases[b], theta.segment(space.noise_offset(b), r + 1)});
    }
    return {KernelStack(std::move(entries)), NoiseField::pce(std::move(nterms), space.noise_floor)};
}

/// Writes the model's coefficients and variances back into the active slots of theta.
inline void store_model(const SearchSpace &space, const ModelParts &model, Vector &theta) {
    const int q = theta_q(theta);
    for (Index k = 0; k < space.n_kernels(); ++k) {
        const auto &entry = model.stack.entries()[static_cast<std::size_t>(k)];
        for (Index b = 0; b < space.n_lengthscale_bases(); ++b)
            theta.segment(space.lengthscale_offset(k, b), q + 1) = entry.lengthscale.terms()[b].coefficients;
        theta[space.variance_offset(k)] = entry.variance;
    }
    if (!model.noise.is_fixed()) {
        const int r = theta_r(theta);
        for (Index b = 0; b < space.n_noise_bases(); ++b)
            theta.segment(space.noise_offset(b), r + 1) = model.noise.terms()[b].coefficients;
    }
}

/// True when every entry of theta lies inside the space's bounds.
inline bool theta_in_bounds(const SearchSpace &space, const Vector &theta) {
    if (theta.size() != space.theta_size() || !theta.allFinite()) return false;
    const int q = theta_q(theta);
    if (q < space.q_min || q > space.q_max || theta[0] != q) return false;
    if (space.noise_mode == NoiseMode::pce) {
        const int r = theta_r(theta);
        if (r < space.r_min || r > space.r_max || theta[1] != r) return false;
    }
    const Index coeff_begin = 2;
    const Index coeff_end = space.variance_offset(0);
    for (Index i = coeff_begin; i < coeff_end; ++i)
        if (theta[i] < space.coeff_lo || theta[i] > space.coeff_hi) return false;
    for (Index k = 0; k < space.n_kernels(); ++k) {
        const double v = theta[space.variance_offset(k)];
        if (v < space.scale_lo || v > space.scale_hi) return false;
    }
    return true;
}

inline Vector random_suggest(const SearchSpace &space, Rng &rng) {
    Vector theta(space.theta_size());
    theta[0] = static_cast<double>(rng.uniform_int(space.q_min, space.q_max));
    theta[1] = space.noise_mode == NoiseMode::pce ? static_cast<double>(rng.uniform_int(space.r_min, space.r_max)) : 0.0;
    for (Index i = 2; i < space.variance_offset(0); ++i) theta[i] = rng.uniform(space.coeff_lo, space.coeff_hi);
    const double log_lo = std::log(space.scale_lo);
    const double log_hi = std::log(space.scale_hi);
    for (Index k = 0; k < space.n_kernels(); ++k) theta[space.variance_offset(k)] = std::exp(rng.uniform(log_lo, log_hi));
    return theta;
}

// ---------------------------------------------------------------- TPE

enum class TrialStage { random, tpe };

inline std::string to_string(TrialStage s) { return s == TrialStage::random ? "random" : "tpe"; }

struct TrialRecord {
    Vector theta;  // as suggested
    double loss = std::numeric_limits<double>::infinity();
    int trial_index = 0;
    TrialStage stage = TrialStage::random;
    bool failed = false;
    std::string failure;
    std::vector<double> fold_losses;
    std::vector<double> fold_rmse;
    double wall_seconds = 0.0;
};

struct TpeConfig {
    double gamma = 0.25;
    int n_candidates = 24;

    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("tpe gamma must lie in (0, 1)");
        if (n_candidates < 1) throw std::invalid_argument("tpe candidates must be >= 1");
    }
};

namespace detail {

/// One-dimensional Parzen estimator on [lo, hi]: uniform prior component plus
/// a truncated Gaussian per observation, equal weights.
class Parzen {
public:
    Parzen(std::vector<double> obs, double lo, double hi) : obs_(std::move(obs)), lo_(lo), hi_(hi) {
        const double range = hi - lo;
        if (obs_.size() < 2) {
            sigma_ = range / 10.0;
        } else {
            double mean = 0.0;
            for (double v : obs_) mean += v;
            mean /= static_cast<double>(obs_.size());
            double var = 0.0;
            for (double v : obs_) var += (v - mean) * (v - mean);
            var /= static_cast<double>(obs_.size() - 1);
            sigma_ = std::sqrt(var) * std::pow(static_cast<double>(obs_.size()), -0.2);
        }
        sigma_ = std::clamp(sigma_, range / 100.0, range);
        for (double mu : obs_) mass_.push_back(normal_cdf((hi_ - mu) / sigma_) - normal_cdf((lo_ - mu) / sigma_));
    }

    double sample(Rng &rng) const {
        const auto n = obs_.size();
        const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n)));
        if (pick == n) return rng.uniform(lo_, hi_);
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const double v = obs_[pick] + sigma_ * rng.normal();
            if (v >= lo_ && v <= hi_) return v;
        }
        return std::clamp(obs_[pick], lo_, hi_);
    }

    double log_density(double x) const {
        double d = 1.0 / (hi_ - lo_);
        for (std::size_t i = 0; i < obs_.size(); ++i) {
            d += normal_pdf((x - obs_[i]) / sigma_) / (sigma_ * std::max(mass_[i], 1e-300));
        }
        return std::log(d / static_cast<double>(obs_.size() + 1));
    }

private:
    std::vector<double> obs_;
    std::vector<double> mass_;
    double lo_;
    double hi_;
    double sigma_ = 1.0;
};

/// Categorical estimator over [lo, hi] with add-one smoothing.
class IntegerParzen {
public:
    IntegerParzen(const std::vector<int> &obs, int lo, int hi) : lo_(lo), weights_(static_cast<std::size_t>(hi - lo + 1), 1.0) {
        for (int v : obs) weights_[static_cast<std::size_t>(v - lo)] += 1.0;
        total_ = static_cast<double>(obs.size() + weights_.size());
    }

    int sample(Rng &rng) const {
        double u = rng.uniform() * total_;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            if (u < weights_[i]) return lo_ + static_cast<int>(i);
            u -= weights_[i];
        }
        return lo_ + static_cast<int>(weights_.size()) - 1;
    }

    double log_density(int v) const { return std::log(weights_[static_cast<std::size_t>(v - lo_)] / total_); }

private:
    int lo_;
    std::vector<double> weights_;
    double total_ = 1.0;
};

struct TpeModel {
    std::optional<IntegerParzen> q;
    std::optional<IntegerParzen> r;
    std::vector<Parzen> dims;  // one per theta index from 2 on, variances in log space
};

inline TpeModel fit_tpe_model(const SearchSpace &space, const std::vector<const TrialRecord *> &trials) {
    TpeModel model;
    std::vector<int> qs;
    std::vector<int> rs;
    for (const auto *t : trials) {
        qs.push_back(theta_q(t->theta));
        rs.push_back(theta_r(t->theta));
    }
    model.q.emplace(qs, space.q_min, space.q_max);
    if (space.noise_mode == NoiseMode::pce) model.r.emplace(rs, space.r_min, space.r_max);
    const Index first_variance = space.variance_offset(0);
    const Index noise_begin = space.noise_offset(0);
    for (Index i = 2; i < space.theta_size(); ++i) {
        std::vector<double> obs;
        if (i >= first_variance) {
            for (const auto *t : trials) obs.push_back(std::log(t->theta[i]));
            model.dims.emplace_back(std::move(obs), std::log(space.scale_lo), std::log(space.scale_hi));
            continue;
        }
        const bool noise_slot = i >= noise_begin;
        const Index slot = noise_slot ? (i - noise_begin) % space.noise_slots() : (i - 2) % space.lengthscale_slots();
        for (const auto *t : trials) {
            const int degree = noise_slot ? theta_r(t->theta) : theta_q(t->theta);
            if (slot <= degree) obs.push_back(t->theta[i]);
        }
        model.dims.emplace_back(std::move(obs), space.coeff_lo, space.coeff_hi);
    }
    return model;
}

inline bool slot_active(const SearchSpace &space, Index i, int q, int r) {
    if (i >= space.variance_offset(0)) return true;
    const Index noise_begin = space.noise_offset(0);
    if (i >= noise_begin) return (i - noise_begin) % space.noise_slots() <= r;
    return (i - 2) % space.lengthscale_slots() <= q;
}

}  // namespace detail

/// TPE suggestion from completed trials: good/bad split at the gamma quantile,
/// candidates drawn from l, best log l - log g returned.
inline Vector tpe_suggest(const std::vector<TrialRecord> &history, const SearchSpace &space, const TpeConfig &config,
                          Rng &rng) {
    config.validate();
    std::vector<const TrialRecord *> done;
    for (const auto &t : history)
        if (!t.failed && std::isfinite(t.loss)) done.push_back(&t);
    if (done.size() < 2) throw std::invalid_argument("tpe_suggest needs at least two completed trials");
    std::stable_sort(done.begin(), done.end(), [](const TrialRecord *a, const TrialRecord *b) { return a->loss < b->loss; });
    auto n_good = static_cast<std::size_t>(std::ceil(config.gamma * static_cast<double>(done.size())));
    n_good = std::clamp<std::size_t>(n_good, 1, done.size() - 1);
    const std::vector<const TrialRecord *> good(done.begin(), done.begin() + static_cast<std::ptrdiff_t>(n_good));
    const std::vector<const TrialRecord *> bad(done.begin() + static_cast<std::ptrdiff_t>(n_good), done.end());
    const auto l = detail::fit_tpe_model(space, good);
    const auto g = detail::fit_tpe_model(space, bad);
    const Index first_variance = space.variance_offset(0);

    Vector best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < config.n_candidates; ++c) {
        Vector theta(space.theta_size());
        const int q = l.q->sample(rng);
        const int r = l.r ? l.r->sample(rng) : 0;
        theta[0] = q;
        theta[1] = r;
        double score = l.q->log_density(q) - g.q->log_density(q);
        if (l.r) score += l.r->log_density(r) - g.r->log_density(r);
        for (Index i = 2; i < space.theta_size(); ++i) {
            const auto &dim_l = l.dims[static_cast<std::size_t>(i - 2)];
            const auto &dim_g = g.dims[static_cast<std::size_t>(i - 2)];
            const bool is_variance = i >= first_variance;
            if (!detail::slot_active(space, i, q, r)) {
                theta[i] = rng.uniform(space.coeff_lo, space.coeff_hi);
                continue;
            }
            const double v = dim_l.sample(rng);
            score += dim_l.log_density(v) - dim_g.log_density(v);
            theta[i] = is_variance ? std::clamp(std::exp(v), space.scale_lo, space.scale_hi) : v;
        }
        if (score > best_score) {
            best_score = score;
            best = std::move(theta);
        }
    }
    return best;
}

// ---------------------------------------------------------------- fine-tuning

struct FineTuneResult {
    Vector theta;
    double final_loss = std::numeric_limits<double>::infinity();  // negative MLL
    bool failed = false;
    std::string failure;
};

/// Adam on -MLL over the active coefficients and log signal variances; the
/// degrees stay fixed. Any factorization failure fails the result.
inline FineTuneResult fine_tune(const SearchSpace &space, const Vector &theta, const Matrix &X_s, const Vector &y_s,
                                int n_iterations, const AdamConfig &adam) {
    FineTuneResult out;
    out.theta = theta;
    if (n_iterations < 0) throw std::invalid_argument("fine_tune: iterations must be >= 0");
    if (X_s.rows() < 1) throw std::invalid_argument("fine_tune: empty training split");
    ModelParts model = build_model(space, theta, X_s.cols());
    const auto n_var = static_cast<Index>(model.stack.size());
    auto to_internal = [&](const ModelParts &m) {
        Vector p = pack_parameters(m.stack, m.noise);
        p.tail(n_var) = p.tail(n_var).array().log();
        return p;
    };
    auto from_internal = [&](Vector p, ModelParts &m) {
        p.tail(n_var) = p.tail(n_var).array().exp();
        unpack_parameters(p, m.stack, m.noise);
    };
    try {
        Vector p = to_internal(model);
        AdamState state(adam, p.size());
        for (int it = 0; it < n_iterations; ++it) {
            MllResult r = mll_evaluate(model.stack, model.noise, X_s, y_s, true);
            Vector grad = -r.gradient;
            grad.tail(n_var).array() *= p.tail(n_var).array().exp();
            if (!grad.allFinite()) throw FactorizationError("non-finite MLL gradient");
            adam_step(state, p, grad);
            from_internal(p, model);
        }
        out.final_loss = -mll(model.stack, model.noise, X_s, y_s);
        if (!std::isfinite(out.final_loss)) throw FactorizationError("non-finite MLL");
        store_model(space, model, out.theta);
    } catch (const FactorizationError &e) {
        out.failed = true;
        out.failure = e.what();
        out.final_loss = std::numeric_limits<double>::infinity();
    }
    return out;
}

// ---------------------------------------------------------------- search loop

struct SearchSettings {
    int n_trials = 100;
    int n_initial = 20;
    int n_iterations = 100;
    int n_folds = 10;
    std::uint64_t seed = 0;
    int threads = 1;
    bool global_scaling = false;  // scale once on the whole dataset instead of per fold
    bool refine_best = true;      // fine-tune the winning theta on all rows after the search
    ScalerKind input_scaler = ScalerKind::min_max;
    ScalerKind output_scaler = ScalerKind::z_normalize;
    AdamConfig adam;
    TpeConfig tpe;

    void validate() const {
        if (n_trials < 1) throw std::invalid_argument("trials must be >= 1");
        if (n_initial < 1 || n_initial > n_trials) throw std::invalid_argument("initial_trials must be in [1, trials]");
        if (n_iterations < 0) throw std::invalid_argument("iterations must be >= 0");
        if (n_folds < 2) throw std::invalid_argument("folds must be >= 2");
        if (threads < 1) throw std::invalid_argument("threads must be >= 1");
        adam.validate();
        tpe.validate();
    }
};

/// Rows touched by one fold evaluation, reported to the search observer.
struct FoldAudit {
    int trial = 0;
    int fold = 0;
    const std::vector<Index> &fit_rows;       // used by fine_tune and the final GP
    const std::vector<Index> &scaler_rows;    // used to fit the scalers
    const std::vector<Index> &validation_rows;
};

using SearchObserver = std::function<void(const FoldAudit &)>;

struct FoldOutcome {
    double loss = std::numeric_limits<double>::infinity();  // mean NLPD, raw units
    double rmse = std::numeric_limits<double>::infinity();
    bool failed = false;
    std::string failure;
};

struct FittedModel {
    PcegpModel model;
    Vector theta;  // refined
};

inline double rmse(const std::vector<double> &predictions, const std::vector<double> &truths) {
    if (predictions.size() != truths.size()) throw std::invalid_argument("rmse: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("rmse: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) s += (predictions[i] - truths[i]) * (predictions[i] - truths[i]);
    return std::sqrt(s / static_cast<double>(predictions.size()));
}

/// Scales the rows, fine-tunes theta and builds the predictive model. Throws
/// FactorizationError when any step fails.
inline FittedModel fit_theta(const SearchSpace &space, const Vector &theta, const Dataset &data,
                             const std::vector<Index> &fit_rows, const ScalerState &in, const ScalerState &out,
                             int n_iterations, const AdamConfig &adam) {
    Matrix X(static_cast<Index>(fit_rows.size()), data.n_inputs());
    Vector y(static_cast<Index>(fit_rows.size()));
    for (std::size_t i = 0; i < fit_rows.size(); ++i) {
        X.row(static_cast<Index>(i)) = data.inputs.row(fit_rows[i]);
        y[static_cast<Index>(i)] = data.outputs[fit_rows[i]];
    }
    const Matrix X_s = in.apply_rows(X);
    const Vector y_s = (y.array() - out.offset[0]) / out.scale[0];
    FineTuneResult tuned = fine_tune(space, theta, X_s, y_s, n_iterations, adam);
    if (tuned.failed) throw FactorizationError(tuned.failure);
    ModelParts parts = build_model(space, tuned.theta, data.n_inputs());
    return {PcegpModel(std::move(parts.stack), std::move(parts.noise), in, out, X_s, y_s), tuned.theta};
}

inline std::pair<ScalerState, ScalerState> fit_scalers(const Dataset &data, const std::vector<Index> &rows,
                                                       ScalerKind input_kind, ScalerKind output_kind) {
    const Dataset sub = data.subset(rows);
    return {fit_scaler(input_kind, sub.inputs, sub.column_names), fit_scaler(output_kind, sub.outputs)};
}

inline FoldOutcome evaluate_fold(const SearchSpace &space, const Vector &theta, const Dataset &data,
                                 const std::vector<Index> &train, const std::vector<Index> &validation,
                                 const std::pair<ScalerState, ScalerState> &scalers, int n_iterations,
                                 const AdamConfig &adam) {
    FoldOutcome out;
    try {
        const FittedModel fitted = fit_theta(space, theta, data, train, scalers.first, scalers.second, n_iterations, adam);
        Matrix Xv(static_cast<Index>(validation.size()), data.n_inputs());
        std::vector<double> truth;
        for (std::size_t i = 0; i < validation.size(); ++i) {
            Xv.row(static_cast<Index>(i)) = data.inputs.row(validation[i]);
            truth.push_back(data.outputs[validation[i]]);
        }
        const auto preds = fitted.model.predict_batch(Xv);
        double nlpd = 0.0;
        std::vector<double> means;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const double var = std::max(preds[i].variance, 1e-300);
            const double d = truth[i] - preds[i].mean;
            nlpd += 0.5 * std::log(2.0 * std::numbers::pi * var) + 0.5 * d * d / var;
            means.push_back(preds[i].mean);
        }
        out.loss = nlpd / static_cast<double>(preds.size());
        out.rmse = rmse(means, truth);
        if (!std::isfinite(out.loss)) throw FactorizationError("non-finite validation loss");
    } catch (const FactorizationError &e) {
        out = FoldOutcome{};
        out.failed = true;
        out.failure = e.what();
    }
    return out;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
inline void parallel_for(int n, int threads, const std::function<void(int)> &fn) {
    const int workers = std::min(threads, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto &t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

class SearchFailed : public std::runtime_error {
public:
    SearchFailed(const std::string &what, std::vector<TrialRecord> history)
        : std::runtime_error(what), history_(std::move(history)) {}
    const std::vector<TrialRecord> &history() const { return history_; }

private:
    std::vector<TrialRecord> history_;
};

struct SearchResult {
    Vector best_theta;  // refined on all rows when refine_best is set, else as suggested
    Vector best_suggested;
    double best_loss = std::numeric_limits<double>::infinity();
    int best_trial = -1;
    std::vector<TrialRecord> history;
    FoldPlan folds;
};

/// Called after each trial with the history so far.
using TrialCallback = std::function<void(const std::vector<TrialRecord> &)>;

inline SearchResult run_search(const Dataset &data, const SearchSpace &space, const SearchSettings &settings,
                               const SearchObserver &observer = {}, const TrialCallback &on_trial = {},
                               std::vector<TrialRecord> resume = {}) {
    space.validate();
    settings.validate();
    data.validate();
    if (settings.n_folds > data.size()) throw std::invalid_argument("more folds than data rows");

    SearchResult result;
    Rng master(settings.seed);
    result.folds = make_folds(data.size(), settings.n_folds, master.split(1).next());
    Rng suggest_rng = master.split(2);

    std::vector<Index> all_rows(static_cast<std::size_t>(data.size()));
    std::iota(all_rows.begin(), all_rows.end(), Index{0});
    std::vector<std::vector<Index>> train(settings.n_folds);
    std::vector<std::vector<Index>> validation(settings.n_folds);
    std::vector<std::pair<ScalerState, ScalerState>> scalers;
    for (int f = 0; f < settings.n_folds; ++f) {
        train[f] = result.folds.train_indices(f);
        validation[f] = result.folds.validation_indices(f);
        scalers.push_back(fit_scalers(data, settings.global_scaling ? all_rows : train[f], settings.input_scaler,
                                      settings.output_scaler));
    }

    auto &history = result.history;
    for (int trial = 0; trial < settings.n_trials; ++trial) {
        const auto started = std::chrono::steady_clock::now();
        TrialRecord rec;
        rec.trial_index = trial;
        const int completed = static_cast<int>(std::count_if(history.begin(), history.end(), [](const TrialRecord &t) {
            return !t.failed;
        }));
        if (trial < settings.n_initial || completed < 2) {
            rec.stage = TrialStage::random;
            rec.theta = random_suggest(space, suggest_rng);
        } else {
            rec.stage = TrialStage::tpe;
            rec.theta = tpe_suggest(history, space, settings.tpe, suggest_rng);
        }

        if (trial < static_cast<int>(resume.size())) {
            const auto &old = resume[static_cast<std::size_t>(trial)];
            if (old.theta.size() != rec.theta.size() || old.theta != rec.theta)
                throw std::runtime_error("resume history diverges from this configuration at trial " + std::to_string(trial));
            history.push_back(old);
        } else {
            std::vector<FoldOutcome> outcomes(static_cast<std::size_t>(settings.n_folds));
            if (observer) {
                for (int f = 0; f < settings.n_folds; ++f)
                    observer(FoldAudit{trial, f, train[f], settings.global_scaling ? all_rows : train[f], validation[f]});
            }
            parallel_for(settings.n_folds, settings.threads, [&](int f) {
                outcomes[static_cast<std::size_t>(f)] = evaluate_fold(space, rec.theta, data, train[f], validation[f],
                                                                      scalers[f], settings.n_iterations, settings.adam);
            });
            double sum = 0.0;
            for (int f = 0; f < settings.n_folds; ++f) {
                const auto &o = outcomes[static_cast<std::size_t>(f)];
                rec.fold_losses.push_back(o.loss);
                rec.fold_rmse.push_back(o.rmse);
                if (o.failed && !rec.failed) {
                    rec.failed = true;
                    rec.failure = "fold " + std::to_string(f) + ": " + o.failure;
                }
                sum += o.loss;
            }
            rec.loss = rec.failed ? std::numeric_limits<double>::infinity() : sum / settings.n_folds;
            rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            history.push_back(std::move(rec));
        }
        const auto &last = history.back();
        if (!last.failed && last.loss < result.best_loss) {
            result.best_loss = last.loss;
            result.best_trial = trial;
            result.best_suggested = last.theta;
        }
        if (on_trial) on_trial(history);
    }

    if (result.best_trial < 0) {
        std::string log = "all " + std::to_string(settings.n_trials) + " trials failed";
        for (const auto &t : history) log += "\n  trial " + std::to_string(t.trial_index) + ": " + t.failure;
        throw SearchFailed(log, history);
    }
    result.best_theta = result.best_suggested;
    if (settings.refine_best) {
        const auto sc = fit_scalers(data, all_rows, settings.input_scaler, settings.output_scaler);
        try {
            result.best_theta = fit_theta(space, result.best_suggested, data, all_rows, sc.first, sc.second,
                                          settings.n_iterations, settings.adam)
                                    .theta;
        } catch (const FactorizationError &) {
            // keep the suggested theta; the caller's refit reports the failure
        }
    }
    return result;
}

}  // namespace pcegp
