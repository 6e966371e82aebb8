#pragma once

// Orthogonal polynomial families used as PCE bases.
//
// All families are kept unnormalized with phi_0 == 1 and are evaluated
// through their three-term recurrences:
//
//   hermite              He_{n+1} = x He_n - n He_{n-1}            N(0,1)
//   legendre             (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}  U(-1,1)
//   legendre_shifted_01  P_n(2x - 1)                               U(0,1)
//   jacobi(a, b)         standard P_n^(a,b)                        Beta on [-1,1]
//   laguerre             (n+1) L_{n+1} = (2n+1-x) L_n - n L_{n-1}  Exp(1)

#include "pcegp/common.hpp"

#include <charconv>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pcegp {

enum class BasisFamily { hermite, legendre, legendre_shifted_01, jacobi, laguerre };

struct BasisKind {
    BasisFamily family = BasisFamily::legendre_shifted_01;
    double alpha = 0.0;  // jacobi only
    double beta = 0.0;   // jacobi only

    static BasisKind hermite() { return {BasisFamily::hermite}; }
    static BasisKind legendre() { return {BasisFamily::legendre}; }
    static BasisKind legendre_shifted_01() { return {BasisFamily::legendre_shifted_01}; }
    static BasisKind laguerre() { return {BasisFamily::laguerre}; }
    static BasisKind jacobi(double alpha, double beta) {
        BasisKind kind{BasisFamily::jacobi, alpha, beta};
        kind.validate();
        return kind;
    }

    void validate() const {
        if (family == BasisFamily::jacobi && !(alpha > -1.0 && beta > -1.0)) {
            throw std::invalid_argument("jacobi basis requires alpha > -1 and beta > -1, got alpha=" +
                                        std::to_string(alpha) + " beta=" + std::to_string(beta));
        }
    }

    friend bool operator==(const BasisKind &, const BasisKind &) = default;
};

inline std::string to_string(const BasisKind &kind) {
    switch (kind.family) {
        case BasisFamily::hermite: return "hermite";
        case BasisFamily::legendre: return "legendre";
        case BasisFamily::legendre_shifted_01: return "legendre_shifted_01";
        case BasisFamily::laguerre: return "laguerre";
        case BasisFamily::jacobi: {
            char buf[96];
            std::snprintf(buf, sizeof buf, "jacobi(%.17g,%.17g)", kind.alpha, kind.beta);
            return buf;
        }
    }
    return "unknown";
}

/// Parses the names produced by to_string(BasisKind). "jacobi" alone means
/// alpha = beta = 0.
inline BasisKind parse_basis_kind(std::string_view text) {
    if (text == "hermite") return BasisKind::hermite();
    if (text == "legendre") return BasisKind::legendre();
    if (text == "legendre_shifted_01") return BasisKind::legendre_shifted_01();
    if (text == "laguerre") return BasisKind::laguerre();
    if (text == "jacobi") return BasisKind::jacobi(0.0, 0.0);
    if (text.starts_with("jacobi(") && text.ends_with(")")) {
        const auto body = text.substr(7, text.size() - 8);
        const auto comma = body.find(',');
        if (comma != std::string_view::npos) {
            const auto parse = [](std::string_view s, double &out) {
                while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
                const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
                return ec == std::errc() && ptr == s.data() + s.size();
            };
            double a = 0.0;
            double b = 0.0;
            if (parse(body.substr(0, comma), a) && parse(body.substr(comma + 1), b)) {
                return BasisKind::jacobi(a, b);
            }
        }
    }
    throw std::invalid_argument("unknown basis '" + std::string(text) + "'");
}

namespace detail {

/// Fills out[0..max_degree] with phi_i(x).
inline void eval_basis_point(const BasisKind &kind, int max_degree, double x, double *out) {
    out[0] = 1.0;
    if (max_degree == 0) return;
    switch (kind.family) {
        case BasisFamily::hermite:
            out[1] = x;
            for (int n = 1; n < max_degree; ++n) out[n + 1] = x * out[n] - n * out[n - 1];
            return;
        case BasisFamily::legendre_shifted_01:
            x = 2.0 * x - 1.0;
            [[fallthrough]];
        case BasisFamily::legendre:
            out[1] = x;
            for (int n = 1; n < max_degree; ++n)
                out[n + 1] = ((2.0 * n + 1.0) * x * out[n] - n * out[n - 1]) / (n + 1.0);
            return;
        case BasisFamily::laguerre:
            out[1] = 1.0 - x;
            for (int n = 1; n < max_degree; ++n)
                out[n + 1] = ((2.0 * n + 1.0 - x) * out[n] - n * out[n - 1]) / (n + 1.0);
            return;
        case BasisFamily::jacobi: {
            const double a = kind.alpha;
            const double b = kind.beta;
            out[1] = (a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0;
            for (int n = 2; n <= max_degree; ++n) {
                const double s = 2.0 * n + a + b;
                const double c1 = 2.0 * n * (n + a + b) * (s - 2.0);
                const double c2 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b);
                const double c3 = 2.0 * (n + a - 1.0) * (n + b - 1.0) * s;
                out[n] = (c2 * out[n - 1] - c3 * out[n - 2]) / c1;
            }
            return;
        }
    }
}

}  // namespace detail

/// Basis values, (max_degree + 1) rows by one column per point.
struct BasisEval {
    BasisKind kind;
    int max_degree = 0;
    Matrix values;
};

inline BasisEval eval_basis(const BasisKind &kind, int max_degree, std::span<const double> points) {
    kind.validate();
    if (max_degree < 0) throw std::invalid_argument("max_degree must be non-negative");
    BasisEval result{kind, max_degree, Matrix(max_degree + 1, static_cast<Index>(points.size()))};
    for (std::size_t j = 0; j < points.size(); ++j) {
        detail::eval_basis_point(kind, max_degree, points[j], result.values.col(static_cast<Index>(j)).data());
    }
    return result;
}

/// One basis family with its coefficient vector; degree is coefficients.size() - 1.
struct BasisTerm {
    BasisKind kind;
    Vector coefficients;

    int degree() const { return static_cast<int>(coefficients.size()) - 1; }
};

/// Sum over terms of sum_i c_i phi_i(x).
inline double eval_combination(std::span<const BasisTerm> terms, double point) {
    if (terms.empty()) throw std::invalid_argument("eval_combination needs at least one basis term");
    double total = 0.0;
    std::vector<double> phi;
    for (const auto &term : terms) {
        if (term.coefficients.size() == 0) throw std::invalid_argument("basis term has no coefficients");
        phi.resize(static_cast<std::size_t>(term.coefficients.size()));
        detail::eval_basis_point(term.kind, term.degree(), point, phi.data());
        for (Index i = 0; i < term.coefficients.size(); ++i) total += term.coefficients[i] * phi[i];
    }
    return total;
}

/// Gauss rule for a family's probability density (weights sum to one).
struct QuadratureRule {
    Vector nodes;
    Vector weights;
};

/// Golub-Welsch from the monic recurrence coefficients of each density.
inline QuadratureRule gauss_rule(const BasisKind &kind, int n_points) {
    kind.validate();
    if (n_points < 1) throw std::invalid_argument("quadrature needs at least one point");
    Vector diag(n_points);
    Vector sub(std::max(n_points - 1, 1));
    const double a = kind.alpha;
    const double b = kind.beta;
    for (int n = 0; n < n_points; ++n) {
        double an = 0.0;
        double bn = 0.0;  // beta_{n}, paired with the off-diagonal above row n
        switch (kind.family) {
            case BasisFamily::hermite:
                bn = n;
                break;
            case BasisFamily::legendre:
            case BasisFamily::legendre_shifted_01:
                bn = n == 0 ? 0.0 : (double(n) * n) / (4.0 * n * n - 1.0);
                break;
            case BasisFamily::laguerre:
                an = 2.0 * n + 1.0;
                bn = double(n) * n;
                break;
            case BasisFamily::jacobi: {
                const double s = 2.0 * n + a + b;
                an = n == 0 ? (b - a) / (a + b + 2.0) : (b * b - a * a) / (s * (s + 2.0));
                if (n == 1) {
                    bn = 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b) * (2.0 + a + b) * (3.0 + a + b));
                } else if (n > 1) {
                    bn = 4.0 * n * (n + a) * (n + b) * (n + a + b) / (s * s * (s + 1.0) * (s - 1.0));
                }
                break;
            }
        }
        diag[n] = an;
        if (n > 0) sub[n - 1] = std::sqrt(bn);
    }
    QuadratureRule rule;
    if (n_points == 1) {
        rule.nodes = diag;
        rule.weights = Vector::Ones(1);
    } else {
        Eigen::SelfAdjointEigenSolver<Matrix> solver;
        solver.computeFromTridiagonal(diag, sub.head(n_points - 1), Eigen::ComputeEigenvectors);
        rule.nodes = solver.eigenvalues();
        rule.weights = solver.eigenvectors().row(0).transpose().array().square();
    }
    if (kind.family == BasisFamily::legendre_shifted_01) rule.nodes = (rule.nodes.array() + 1.0) / 2.0;
    return rule;
}

/// Integral of phi_i phi_j against the family's density by Gauss quadrature.
/// Zero (to rounding) for i != j; quad_points <= 0 picks the smallest exact rule.
inline double orthogonality_defect(const BasisKind &kind, int i, int j, int quad_points = 0) {
    if (i < 0 || j < 0) throw std::invalid_argument("degrees must be non-negative");
    const int needed = (i + j) / 2 + 1;
    if (quad_points <= 0) quad_points = needed;
    if (quad_points < needed) {
        throw std::invalid_argument("quadrature with " + std::to_string(quad_points) +
                                    " points is not exact for degree " + std::to_string(i + j));
    }
    const auto rule = gauss_rule(kind, quad_points);
    const int top = std::max(i, j);
    std::vector<double> phi(static_cast<std::size_t>(top) + 1);
    double total = 0.0;
    for (Index k = 0; k < rule.nodes.size(); ++k) {
        detail::eval_basis_point(kind, top, rule.nodes[k], phi.data());
        total += rule.weights[k] * phi[i] * phi[j];
    }
    return total;
}

}  // namespace pcegp
