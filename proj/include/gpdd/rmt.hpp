#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "gpdd/errors.hpp"
#include "gpdd/quadrature.hpp"

namespace gpdd::rmt {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Coefficients of the spectral linearization K ~ alpha * XX^T/d + beta * I,
// together with the limit ratio c = d/n and the effective resolvent argument
// mu_arg = (beta + ridge) / alpha used by the Gram limits.
//
// When scaled_offset is set, `beta` holds beta0 and the additive offset is
// beta0 * lambda (the convention under which the optimal lambda has a closed
// form).
struct RmtContext {
    double alpha = 1.0;
    double beta = 0.0;
    double c = 1.0;
    double mu_arg = 1.0;
    bool scaled_offset = false;

    double offset(double lambda) const {
        return scaled_offset ? beta * lambda : beta;
    }

    void validate() const {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) {
            throw std::domain_error("RmtContext: alpha must be positive");
        }
        if (!(c > 0.0) || !std::isfinite(c)) {
            throw std::domain_error("RmtContext: c must be positive");
        }
        if (!(mu_arg > 0.0) || !std::isfinite(mu_arg)) {
            throw std::domain_error("RmtContext: mu_arg must be positive");
        }
        if (!std::isfinite(beta) || beta < 0.0) {
            throw std::domain_error("RmtContext: beta must be >= 0");
        }
        if (scaled_offset && beta >= 1.0) {
            throw std::domain_error("RmtContext: beta0 must lie in [0, 1)");
        }
    }
};

// Context for a kernel with fixed offset beta and additive ridge mu_hat.
inline RmtContext make_context(double alpha, double beta, double c,
                               double ridge) {
    RmtContext ctx;
    ctx.alpha = alpha;
    ctx.beta = beta;
    ctx.c = c;
    ctx.mu_arg = (beta + ridge) / alpha;
    ctx.scaled_offset = false;
    ctx.validate();
    return ctx;
}

// Context in the beta = beta0 * lambda convention; mu_arg is filled per
// (lambda, gamma) by the operations that need it.
inline RmtContext make_scaled_context(double alpha, double beta0, double c) {
    RmtContext ctx;
    ctx.alpha = alpha;
    ctx.beta = beta0;
    ctx.c = c;
    ctx.mu_arg = 1.0;
    ctx.scaled_offset = true;
    ctx.validate();
    return ctx;
}

namespace detail {

// sqrt((c mu + c + 1)^2 - 4c); the discriminant is >= (c - 1)^2 >= 0.
inline double disc(double mu, double c) {
    const double t = c * mu + c + 1.0;
    return std::sqrt(t * t - 4.0 * c);
}

// T(mu, c), written in the rationalized form 2c^2 / (disc + c mu + 1 - c)
// which avoids the large-mu cancellation of the textbook expression.
inline double trace_low(double mu, double c) {
    return 2.0 * c * c / (disc(mu, c) + c * mu + 1.0 - c);
}

// T~(mu, c) = 2c / (disc + c mu + c - 1); equals T + (1 - c)/mu.
inline double trace_high(double mu, double c) {
    return 2.0 * c / (disc(mu, c) + c * mu + c - 1.0);
}

inline double logdet_low(double mu, double c) {
    const double t = trace_low(mu, c);
    return std::log1p(t / c) - t / (c + t) - c * std::log(t / c);
}

inline double logdet_high(double mu, double c) {
    const double t = trace_high(mu, c);
    return c * std::log1p(t / c) - c * t / (c + t) - std::log(t);
}

inline void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::domain_error(std::string(what) + " must be positive and finite");
    }
}

}  // namespace detail

// Stieltjes transform m(z) of the Marchenko-Pastur law on the negative real
// axis; satisfies m = 1 / (1 - c - z - c z m).  Rationalized to
// 2 / (1 - c - z + sqrt((z - c - 1)^2 - 4c)).
inline double mp_stieltjes(double z, double c) {
    if (!(z < 0.0) || !std::isfinite(z)) {
        throw std::domain_error("mp_stieltjes: z must be negative");
    }
    detail::require_positive(c, "mp_stieltjes: c");
    const double t = z - c - 1.0;
    const double s = std::sqrt(t * t - 4.0 * c);
    return 2.0 / (1.0 - c - z + s);
}

// Limit of n^-1 E tr((d^-1 X^T X + mu I)^-1) for c <= 1, and of
// n^-1 E tr((d^-1 X X^T + mu I)^-1) for c > 1.  The two branches coincide at
// c = 1 and differ by (1 - c)/mu in general.
inline double trace_limit(double mu, double c) {
    detail::require_positive(mu, "trace_limit: mu");
    detail::require_positive(c, "trace_limit: c");
    return c <= 1.0 ? detail::trace_low(mu, c) : detail::trace_high(mu, c);
}

// Limit of n^-1 E log det(d^-1 X^T X + mu I) for c <= 1 (D) and of
// n^-1 E log det(d^-1 X X^T + mu I) for c > 1 (D~).
inline double logdet_limit(double mu, double c) {
    detail::require_positive(mu, "logdet_limit: mu");
    detail::require_positive(c, "logdet_limit: c");
    return c <= 1.0 ? detail::logdet_low(mu, c) : detail::logdet_high(mu, c);
}

// Integral form of logdet_limit, by quadrature of the trace limit.  Kept as
// an independent route for validation; the t -> 0 endpoint is handled by the
// substitution t = s^2, which absorbs the t^-1/2 behavior at c = 1.
inline double logdet_limit_quadrature(double mu, double c, double tol = 1e-9) {
    detail::require_positive(mu, "logdet_limit_quadrature: mu");
    detail::require_positive(c, "logdet_limit_quadrature: c");
    const double root = std::sqrt(mu);
    if (c <= 1.0) {
        // 2s T(s^2, c) = 4c^2 s / (disc + c s^2 + 1 - c); at c = 1 the s = 0
        // limit is 2 (both numerator and denominator vanish linearly).
        auto integrand = [c](double s) {
            if (s == 0.0) return c < 1.0 ? 0.0 : 2.0;
            return 4.0 * c * c * s / (detail::disc(s * s, c) + c * s * s + 1.0 - c);
        };
        const double integral = quad::adaptive_simpson(integrand, 0.0, root, tol);
        const double head =
            c < 1.0 ? (c - 1.0) * std::log(1.0 - c) - c * std::log(c) - c : -1.0;
        return head + integral;
    }
    auto integrand = [c](double s) {
        return 4.0 * c * s / (detail::disc(s * s, c) + c * s * s + c - 1.0);
    };
    const double integral = quad::adaptive_simpson(integrand, 0.0, root, tol);
    return (1.0 - c) * std::log(c - 1.0) + (c - 1.0) * std::log(c) - 1.0 +
           integral;
}

// Limit of n^-1 E tr((K_X + mu_hat I)^-1) for a kernel with linearization
// (alpha, beta); ctx.mu_arg = (beta + mu_hat) / alpha.
inline double gram_trace_limit(const RmtContext& ctx) {
    ctx.validate();
    if (ctx.c <= 1.0) {
        return (1.0 - ctx.c) / (ctx.alpha * ctx.mu_arg) +
               detail::trace_low(ctx.mu_arg, ctx.c) / ctx.alpha;
    }
    return detail::trace_high(ctx.mu_arg, ctx.c) / ctx.alpha;
}

// Limit of n^-1 E log det(K_X + mu_hat I) under the same conventions.
inline double gram_logdet_limit(const RmtContext& ctx) {
    ctx.validate();
    if (ctx.c <= 1.0) {
        return detail::logdet_low(ctx.mu_arg, ctx.c) +
               (1.0 - ctx.c) * std::log(ctx.mu_arg) + std::log(ctx.alpha);
    }
    return detail::logdet_high(ctx.mu_arg, ctx.c) + std::log(ctx.alpha);
}

// Limiting mean free energy F_infinity at hyperparameters (lambda, gamma).
// The effective resolvent argument is (offset + lambda gamma) / alpha, where
// offset is beta or beta0 * lambda depending on the context convention.
inline double limiting_free_energy(double lambda, double gamma,
                                   const RmtContext& ctx) {
    detail::require_positive(lambda, "limiting_free_energy: lambda");
    detail::require_positive(gamma, "limiting_free_energy: gamma");
    const double ridge = lambda * gamma;
    const double off = ctx.offset(lambda);
    const double mu = (off + ridge) / ctx.alpha;
    detail::require_positive(mu, "limiting_free_energy: mu");
    const double c = ctx.c;
    const double log_term = -0.5 * std::log(lambda / (2.0 * kPi * ctx.alpha));
    if (c <= 1.0) {
        const double trace_part =
            (1.0 - c) / (off + ridge) + detail::trace_low(mu, c) / ctx.alpha;
        return 0.5 * lambda * trace_part + log_term +
               0.5 * detail::logdet_low(mu, c) +
               0.5 * (1.0 - c) * std::log(mu);
    }
    return 0.5 * lambda * detail::trace_high(mu, c) / ctx.alpha + log_term +
           0.5 * detail::logdet_high(mu, c);
}

// Minimizer of F_infinity over gamma in the tempered setting lambda = mu /
// gamma.  Equals mu * (limiting Gram trace at ridge mu):
//   gamma* = mu/(2(beta+mu)) [1 - c - c(beta+mu)/alpha
//                             + sqrt((c(beta+mu)/alpha + c + 1)^2 - 4c)],
// evaluated here through the rationalized trace form.  Strictly positive.
inline double optimal_gamma(double mu, const RmtContext& ctx) {
    detail::require_positive(mu, "optimal_gamma: mu");
    ctx.validate();
    if (ctx.scaled_offset) {
        throw std::domain_error("optimal_gamma: requires a fixed-offset context");
    }
    const double m = (ctx.beta + mu) / ctx.alpha;
    return mu * detail::trace_high(m, ctx.c) / ctx.alpha;
}

// Minimizer of F_infinity over lambda in the beta = beta0 * lambda
// convention, for gamma_0 = gamma + beta0 < 1:
//   lambda* = alpha [(c+1) gamma_0 + sqrt((c-1)^2 + 4 c gamma_0^2)]
//             / (c (1 - gamma_0^2)).
// Throws NoOptimalLambda when gamma >= 1 - beta0: no minimizer exists.
inline double optimal_lambda(double gamma, const RmtContext& ctx) {
    detail::require_positive(gamma, "optimal_lambda: gamma");
    ctx.validate();
    if (!ctx.scaled_offset) {
        throw std::domain_error(
            "optimal_lambda: requires a scaled-offset (beta0) context");
    }
    const double g0 = gamma + ctx.beta;
    if (g0 >= 1.0) {
        throw NoOptimalLambda(
            "optimal_lambda: no optimal lambda exists for gamma + beta0 = " +
            std::to_string(g0) + " >= 1");
    }
    const double c = ctx.c;
    const double root = std::sqrt((c - 1.0) * (c - 1.0) + 4.0 * c * g0 * g0);
    return ctx.alpha * ((c + 1.0) * g0 + root) / (c * (1.0 - g0 * g0));
}

}  // namespace gpdd::rmt
