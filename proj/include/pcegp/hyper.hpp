#pragma once

// Input-dependent hyperparameter fields computed by truncated PCEs of the
// scaled inputs.

#include "pcegp/poly.hpp"

#include <variant>

namespace pcegp {

/// Lengthscale vector l(x): one shared coefficient set per basis, applied to
/// every input coordinate, l(x)_j = sum_b sum_i c_{b,i} phi_{b,i}(x_j).
class LengthscaleField {
public:
    LengthscaleField() = default;
    LengthscaleField(std::vector<BasisTerm> terms, Index n_inputs) : terms_(std::move(terms)), n_inputs_(n_inputs) {
        if (terms_.empty()) throw std::invalid_argument("lengthscale field needs at least one basis term");
        if (n_inputs_ < 1) throw std::invalid_argument("lengthscale field needs n_inputs >= 1");
        for (const auto &t : terms_) {
            t.kind.validate();
            if (t.coefficients.size() == 0) throw std::invalid_argument("basis term has no coefficients");
        }
    }

    /// Constant field c (single degree-0 term).
    static LengthscaleField constant(double c, Index n_inputs,
                                     BasisKind kind = BasisKind::legendre_shifted_01()) {
        return LengthscaleField({BasisTerm{kind, Vector::Constant(1, c)}}, n_inputs);
    }

    const std::vector<BasisTerm> &terms() const { return terms_; }
    std::vector<BasisTerm> &terms() { return terms_; }
    Index n_inputs() const { return n_inputs_; }

    Index coefficient_count() const {
        Index n = 0;
        for (const auto &t : terms_) n += t.coefficients.size();
        return n;
    }

    int max_degree() const {
        int d = 0;
        for (const auto &t : terms_) d = std::max(d, t.degree());
        return d;
    }

    Vector eval(const Eigen::Ref<const Vector> &point) const {
        check_dim(point.size());
        Vector out(n_inputs_);
        for (Index j = 0; j < n_inputs_; ++j) out[j] = eval_combination(terms_, point[j]);
        return out;
    }

    /// Column i is eval(points.row(i)); result is n_x by N.
    Matrix eval_batch(const Matrix &points) const {
        check_dim(points.cols());
        Matrix out(n_inputs_, points.rows());
        std::vector<double> phi(static_cast<std::size_t>(max_degree()) + 1);
        for (Index i = 0; i < points.rows(); ++i) {
            for (Index j = 0; j < n_inputs_; ++j) {
                double v = 0.0;
                for (const auto &t : terms_) {
                    detail::eval_basis_point(t.kind, t.degree(), points(i, j), phi.data());
                    for (Index p = 0; p < t.coefficients.size(); ++p) v += t.coefficients[p] * phi[p];
                }
                out(j, i) = v;
            }
        }
        return out;
    }

    /// Warped point l(x) (element-wise) x, the argument of the non-stationary kernels.
    Vector warp(const Eigen::Ref<const Vector> &point) const { return eval(point).cwiseProduct(point); }

    /// Column i is the warp of points.row(i); n_x by N like eval_batch.
    Matrix warp_batch(const Matrix &points) const {
        return eval_batch(points).cwiseProduct(points.transpose());
    }

    /// d l(x)_j / d coefficient, stacked in term order: sensitivity[k] = phi_k(x_j).
    Vector coefficient_sensitivity(double coordinate) const {
        Vector out(coefficient_count());
        Index offset = 0;
        for (const auto &t : terms_) {
            detail::eval_basis_point(t.kind, t.degree(), coordinate, out.data() + offset);
            offset += t.coefficients.size();
        }
        return out;
    }

    Vector coefficients() const {
        Vector out(coefficient_count());
        Index offset = 0;
        for (const auto &t : terms_) {
            out.segment(offset, t.coefficients.size()) = t.coefficients;
            offset += t.coefficients.size();
        }
        return out;
    }

    void set_coefficients(const Eigen::Ref<const Vector> &values) {
        if (values.size() != coefficient_count()) throw std::invalid_argument("coefficient count mismatch");
        Index offset = 0;
        for (auto &t : terms_) {
            t.coefficients = values.segment(offset, t.coefficients.size());
            offset += t.coefficients.size();
        }
    }

private:
    void check_dim(Index n) const {
        if (n != n_inputs_) {
            throw std::invalid_argument("lengthscale field expects " + std::to_string(n_inputs_) +
                                        " inputs, got " + std::to_string(n));
        }
    }

    std::vector<BasisTerm> terms_;
    Index n_inputs_ = 0;
};

inline Vector eval_lengthscale(const LengthscaleField &field, const Eigen::Ref<const Vector> &point) {
    return field.eval(point);
}

inline Matrix eval_lengthscale_batch(const LengthscaleField &field, const Matrix &points) {
    return field.eval_batch(points);
}

/// Observation noise variance: either a constant or
/// max(floor, (1/n_x) sum_i sum_j c_i phi_i(x_j)).
class NoiseField {
public:
    static constexpr double default_floor = 1e-8;

    struct Fixed {
        double value;
    };
    struct Pce {
        std::vector<BasisTerm> terms;
    };

    static NoiseField fixed(double value, double floor = default_floor) {
        if (!(value > 0.0)) throw std::invalid_argument("fixed noise variance must be positive");
        return NoiseField(Fixed{value}, floor);
    }

    static NoiseField pce(std::vector<BasisTerm> terms, double floor = default_floor) {
        if (terms.empty()) throw std::invalid_argument("noise PCE needs at least one basis term");
        for (const auto &t : terms) {
            t.kind.validate();
            if (t.coefficients.size() == 0) throw std::invalid_argument("basis term has no coefficients");
        }
        return NoiseField(Pce{std::move(terms)}, floor);
    }

    bool is_fixed() const { return std::holds_alternative<Fixed>(mode_); }
    double fixed_value() const { return std::get<Fixed>(mode_).value; }
    const std::vector<BasisTerm> &terms() const { return std::get<Pce>(mode_).terms; }
    std::vector<BasisTerm> &terms() { return std::get<Pce>(mode_).terms; }
    double floor() const { return floor_; }

    Index coefficient_count() const {
        if (is_fixed()) return 0;
        Index n = 0;
        for (const auto &t : terms()) n += t.coefficients.size();
        return n;
    }

    /// The unclamped PCE average; equals the fixed value in fixed mode.
    double raw(const Eigen::Ref<const Vector> &point) const {
        if (is_fixed()) return fixed_value();
        if (point.size() < 1) throw std::invalid_argument("noise field needs at least one input");
        double total = 0.0;
        for (Index j = 0; j < point.size(); ++j) total += eval_combination(terms(), point[j]);
        return total / static_cast<double>(point.size());
    }

    double eval(const Eigen::Ref<const Vector> &point) const {
        if (is_fixed()) return fixed_value();
        return std::max(floor_, raw(point));
    }

    /// d raw / d coefficient (zero-length in fixed mode).
    Vector coefficient_sensitivity(const Eigen::Ref<const Vector> &point) const {
        Vector out = Vector::Zero(coefficient_count());
        if (is_fixed()) return out;
        std::vector<double> phi;
        for (Index j = 0; j < point.size(); ++j) {
            Index offset = 0;
            for (const auto &t : terms()) {
                phi.resize(static_cast<std::size_t>(t.coefficients.size()));
                detail::eval_basis_point(t.kind, t.degree(), point[j], phi.data());
                for (Index p = 0; p < t.coefficients.size(); ++p) out[offset + p] += phi[p];
                offset += t.coefficients.size();
            }
        }
        return out / static_cast<double>(point.size());
    }

    Vector coefficients() const {
        Vector out(coefficient_count());
        if (is_fixed()) return out;
        Index offset = 0;
        for (const auto &t : terms()) {
            out.segment(offset, t.coefficients.size()) = t.coefficients;
            offset += t.coefficients.size();
        }
        return out;
    }

    void set_coefficients(const Eigen::Ref<const Vector> &values) {
        if (values.size() != coefficient_count()) throw std::invalid_argument("coefficient count mismatch");
        if (is_fixed()) return;
        Index offset = 0;
        for (auto &t : terms()) {
            t.coefficients = values.segment(offset, t.coefficients.size());
            offset += t.coefficients.size();
        }
    }

private:
    NoiseField(std::variant<Fixed, Pce> mode, double floor) : mode_(std::move(mode)), floor_(floor) {
        if (!(floor_ > 0.0)) throw std::invalid_argument("noise floor must be positive");
    }

    std::variant<Fixed, Pce> mode_;
    double floor_;
};

inline double eval_noise(const NoiseField &field, const Eigen::Ref<const Vector> &point) { return field.eval(point); }

}  // namespace pcegp
