#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "gpdd/data.hpp"
#include "gpdd/errors.hpp"
#include "gpdd/gp.hpp"
#include "gpdd/harness.hpp"
#include "gpdd/kernels.hpp"
#include "gpdd/minimize.hpp"
#include "gpdd/rmt.hpp"
#include "gpdd/rng.hpp"
#include "gpdd/specfun.hpp"

namespace gpdd::harness {

struct CheckResult {
    std::string suite;
    std::string name;
    double tolerance = 0.0;
    double observed = 0.0;
    bool pass = false;
    std::string note;
};

// Test fixture: lambda_star_scale != 1 perturbs the closed-form optimal
// lambda inside the minimizer-agreement check, which must then fail.
struct ValidateOptions {
    double lambda_star_scale = 1.0;
};

namespace detail_validate {

inline Eigen::MatrixXd randn(int n, int d, std::uint64_t seed) {
    rng::Xoshiro256pp gen(seed);
    Eigen::MatrixXd X(n, d);
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < n; ++i) X(i, j) = gen.gaussian();
    }
    return X;
}

inline Eigen::VectorXd randv(int n, std::uint64_t seed) {
    rng::Xoshiro256pp gen(seed);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gen.gaussian();
    return v;
}

class Runner {
public:
    explicit Runner(std::vector<CheckResult>& out) : out_(out) {}

    // Numeric check: passes when observed <= tolerance.
    void residual(const std::string& suite, const std::string& name, double tolerance,
                  const std::function<double()>& body, std::string note = "") {
        CheckResult r;
        r.suite = suite;
        r.name = name;
        r.tolerance = tolerance;
        r.note = std::move(note);
        try {
            r.observed = body();
            r.pass = r.observed <= tolerance && std::isfinite(r.observed);
        } catch (const std::exception& e) {
            r.observed = std::numeric_limits<double>::quiet_NaN();
            r.pass = false;
            r.note = e.what();
        }
        out_.push_back(std::move(r));
    }

    // Boolean check: body returns true on success and may set the note.
    void condition(const std::string& suite, const std::string& name,
                   const std::function<bool(std::string&)>& body) {
        CheckResult r;
        r.suite = suite;
        r.name = name;
        r.tolerance = 0.0;
        try {
            r.pass = body(r.note);
            r.observed = r.pass ? 0.0 : 1.0;
        } catch (const std::exception& e) {
            r.pass = false;
            r.observed = 1.0;
            r.note = e.what();
        }
        out_.push_back(std::move(r));
    }

private:
    std::vector<CheckResult>& out_;
};

inline void validate_specfun(Runner& run) {
    using specfun::digamma;

    run.residual("specfun", "digamma-recurrence", 1e-12, [] {
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const double z = std::pow(10.0, -2.0 + 7.0 * i / 999.0);
            worst = std::max(worst, std::abs(digamma(z + 1.0) - digamma(z) - 1.0 / z));
        }
        return worst;
    });

    run.residual("specfun", "digamma-asymptotic", 1.0, [] {
        double worst = 0.0;
        for (double z = 10.0; z < 1e6; z *= 2.3) {
            worst = std::max(worst,
                             std::abs(digamma(z) - (std::log(z) - 0.5 / z)) / (0.1 / (z * z)));
        }
        return worst;
    }, "|psi - (log z - 1/2z)| relative to the 0.1/z^2 envelope");

    run.residual("specfun", "digamma-reference-values", 1e-12, [] {
        const double g = 0.57721566490153286060652;
        double worst = std::abs(digamma(1.0) + g);
        worst = std::max(worst, std::abs(digamma(0.5) + g + 2.0 * std::log(2.0)));
        worst = std::max(worst, std::abs(digamma(2.0) - (1.0 - g)));
        return worst;
    });

    run.residual("specfun", "digamma-sum-identity", 1e-10, [] {
        double worst = 0.0;
        for (int n = 1; n <= 50; ++n) {
            for (double z : {0.5, 1.0, 2.5, 10.0}) {
                double direct = 0.0;
                for (int i = 1; i <= n; ++i) direct += digamma(z + i);
                worst = std::max(worst, std::abs(specfun::sum_digamma(n, z) - direct));
            }
        }
        return worst;
    });

    run.residual("specfun", "digamma-half-sum-identity", 1e-10, [] {
        double worst = 0.0;
        for (int d = 1; d <= 20; ++d) {
            for (int n = d + 2; n <= 60; ++n) {
                worst = std::max(worst, std::abs(specfun::sum_digamma_half_closed(n, d) -
                                                 specfun::sum_digamma_half(n, d)));
            }
        }
        return worst;
    });

    run.residual("specfun", "wishart-logdet-mc", 3e-3, [] {
        rng::Xoshiro256pp gen(1234);
        double total = 0.0;
        const int draws = 1'000'000;
        for (int it = 0; it < draws; ++it) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double g = gen.gaussian();
                s += g * g;
            }
            total += std::log(s);
        }
        return std::abs(total / draws - specfun::expected_logdet_wishart(3, 1));
    }, "E log chi^2_3 over 1e6 draws");
}

inline void validate_rmt(Runner& run, const ValidateOptions& options) {
    run.residual("rmt", "mp-fixed-point", 1e-10, [] {
        double worst = 0.0;
        for (double z : {-0.1, -1.0, -2.0, -10.0}) {
            for (double c : {0.05, 0.5, 1.0, 3.0}) {
                const double m = rmt::mp_stieltjes(z, c);
                worst = std::max(worst, std::abs(m - 1.0 / (1.0 - c - z - c * z * m)));
            }
        }
        return worst;
    });

    run.residual("rmt", "trace-fixed-points", 1e-10, [] {
        double worst = 0.0;
        for (int i = 0; i < 20; ++i) {
            const double mu = std::pow(10.0, -2.0 + 4.0 * i / 19.0);
            for (int j = 0; j < 20; ++j) {
                const double c = std::pow(10.0, -1.0 + 2.0 * j / 19.0);
                const double t = rmt::trace_limit(mu, c);
                const double res =
                    c <= 1.0 ? t - c * c / (1.0 - c + c * mu + mu * t)
                             : t - c / (c - 1.0 + c * mu + mu * t);
                worst = std::max(worst, std::abs(res));
            }
        }
        return worst;
    });

    run.residual("rmt", "trace-duality", 1e-10, [] {
        double worst = 0.0;
        for (double c : {1.1, 2.0, 5.0, 40.0}) {
            for (double mu : {0.01, 0.5, 1.0, 30.0}) {
                worst = std::max(worst, std::abs(rmt::trace_limit(mu, c) -
                                                 c * c * rmt::trace_limit(c * mu, 1.0 / c)));
            }
        }
        return worst;
    });

    run.residual("rmt", "logdet-quadrature-equivalence", 1e-6, [] {
        double worst = 0.0;
        for (double mu : {0.1, 1.0, 10.0}) {
            for (double c : {0.1, 0.5, 1.0, 1.1, 2.0, 5.0}) {
                worst = std::max(worst, std::abs(rmt::logdet_limit(mu, c) -
                                                 rmt::logdet_limit_quadrature(mu, c)));
            }
        }
        return worst;
    });

    run.residual("rmt", "branch-continuity", 1e-3, [] {
        double worst = 0.0;
        for (double mu : {0.1, 1.0, 10.0}) {
            worst = std::max(worst, std::abs(rmt::logdet_limit(mu, 1.0 - 1e-6) -
                                             rmt::logdet_limit(mu, 1.0 + 1e-6)));
            worst = std::max(worst, std::abs(rmt::trace_limit(mu, 1.0 - 1e-6) -
                                             rmt::trace_limit(mu, 1.0 + 1e-6)));
        }
        for (double lambda : {0.5, 2.0}) {
            const auto lo = rmt::make_context(1.0, 0.0, 1.0 - 1e-9, lambda);
            const auto hi = rmt::make_context(1.0, 0.0, 1.0 + 1e-9, lambda);
            worst = std::max(worst, std::abs(rmt::limiting_free_energy(lambda, 1.0, lo) -
                                             rmt::limiting_free_energy(lambda, 1.0, hi)));
        }
        return worst;
    });

    const double cs[] = {0.25, 0.5, 0.9, 1.0, 1.1, 2.0, 4.0};
    const auto gaussian_co = kernels::coefficients(kernels::gaussian_kernel(), 1.0);

    run.residual("rmt", "optimal-gamma-minimizer-agreement", 1e-6, [&] {
        double worst = 0.0;
        for (double c : cs) {
            for (double mu : {0.1, 1.0}) {
                for (int k = 0; k < 2; ++k) {
                    const double alpha = k == 0 ? 1.0 : gaussian_co.alpha;
                    const double beta = k == 0 ? 0.0 : gaussian_co.beta;
                    const auto ctx = rmt::make_context(alpha, beta, c, mu);
                    const auto min = minimize::golden_section_log(
                        [&](double g) { return rmt::limiting_free_energy(mu / g, g, ctx); },
                        1e-6, 1e3, 200);
                    const double closed = rmt::optimal_gamma(mu, ctx);
                    worst = std::max(worst, std::abs(closed - min.argmin) / closed);
                }
            }
        }
        return worst;
    });

    run.residual("rmt", "optimal-lambda-minimizer-agreement", 1e-6, [&, options] {
        double worst = 0.0;
        for (double c : cs) {
            for (double gamma : {0.1, 0.5}) {
                for (int k = 0; k < 2; ++k) {
                    // linear (beta0 = 0) and the gaussian plug-in coefficient
                    // frame: beta0 = beta / lambda* at the self-consistent
                    // lambda*, under which the closed form must equal the
                    // minimizer of the scaled-offset objective.
                    double alpha = 1.0, beta0 = 0.0;
                    if (k == 1) {
                        alpha = gaussian_co.alpha;
                        const double lam = optimal_lambda_plugin(alpha, gaussian_co.beta,
                                                                 gamma, c);
                        beta0 = gaussian_co.beta / lam;
                    }
                    const auto ctx = rmt::make_scaled_context(alpha, beta0, c);
                    const double closed =
                        rmt::optimal_lambda(gamma, ctx) * options.lambda_star_scale;
                    const auto min = minimize::golden_section_log(
                        [&](double l) { return rmt::limiting_free_energy(l, gamma, ctx); },
                        1e-6, 1e6, 200);
                    worst = std::max(worst, std::abs(closed - min.argmin) / closed);
                }
            }
        }
        return worst;
    });

    run.condition("rmt", "optimal-lambda-window", [](std::string& note) {
        int wrong = 0;
        for (double beta0 : {0.0, 0.2, 0.6}) {
            for (int i = 1; i <= 31; ++i) {
                const double gamma = i == 31 ? 1.0 - beta0 : 0.05 * i;
                bool threw = false;
                try {
                    rmt::optimal_lambda(gamma, rmt::make_scaled_context(1.0, beta0, 1.3));
                } catch (const NoOptimalLambda&) {
                    threw = true;
                }
                if (threw != (gamma + beta0 >= 1.0)) ++wrong;
            }
        }
        note = "NoOptimalLambda thrown exactly when gamma >= 1 - beta0";
        return wrong == 0;
    });

    run.condition("rmt", "optimal-gamma-form-adjudication", [&](std::string& note) {
        // The implemented gamma* = mu * (limiting trace) against an algebraic
        // variant that drops the mu/(2(beta+mu)) prefactor and flips the
        // (1-c) sign; only the former should track the minimizer.
        auto variant = [](double mu, double alpha, double beta, double c) {
            const double m = (beta + mu) / alpha;
            return c - 1.0 - c * m + std::sqrt((1.0 + c * (m + 1.0)) * (1.0 + c * (m + 1.0)) -
                                               4.0 * c);
        };
        double implemented_worst = 0.0;
        double variant_best = 1e300;
        for (double c : {0.25, 0.5, 2.0, 4.0}) {
            for (double mu : {0.1, 1.0}) {
                const auto ctx = rmt::make_context(1.0, 0.0, c, mu);
                const auto min = minimize::golden_section_log(
                    [&](double g) { return rmt::limiting_free_energy(mu / g, g, ctx); },
                    1e-6, 1e3, 200);
                implemented_worst =
                    std::max(implemented_worst,
                             std::abs(rmt::optimal_gamma(mu, ctx) - min.argmin) / min.argmin);
                variant_best = std::min(variant_best, std::abs(variant(mu, 1.0, 0.0, c) -
                                                               min.argmin) /
                                                          min.argmin);
            }
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "implemented form max rel dev %.2e (matches); prefactor-free variant "
                      "min rel dev %.2e (does not match)",
                      implemented_worst, variant_best);
        note = buf;
        return implemented_worst < 1e-6 && variant_best > 1e-3;
    });

    run.condition("rmt", "monotonicity-analytic", [](std::string& note) {
        for (double gamma : {0.01, 0.1, 0.5}) {
            for (double beta0 : {0.0, 0.2}) {
                double prev = 0.0;
                bool first = true;
                for (int i = 0; i < 200; ++i) {
                    const double c = 0.05 + (5.0 - 0.05) * i / 199.0;
                    const auto ctx = rmt::make_scaled_context(1.0, beta0, c);
                    const double lstar = rmt::optimal_lambda(gamma, ctx);
                    const double value = rmt::limiting_free_energy(lstar, gamma, ctx);
                    if (!first && value >= prev) {
                        note = "increase at c = " + std::to_string(c);
                        return false;
                    }
                    prev = value;
                    first = false;
                }
            }
        }
        note = "F at lambda* strictly decreasing over 200 c-points, gamma in "
               "{0.01, 0.1, 0.5}, beta0 in {0, 0.2}";
        return true;
    });

    run.condition("rmt", "optimal-gamma-positivity", [](std::string& note) {
        for (double c : {0.1, 1.0, 7.0}) {
            for (double mu : {1e-3, 1.0, 1e3}) {
                if (!(rmt::optimal_gamma(mu, rmt::make_context(1.0, 0.0, c, mu)) > 0.0)) {
                    note = "non-positive gamma*";
                    return false;
                }
            }
        }
        return true;
    });

    run.residual("rmt", "optimal-lambda-critical-point", 1e-9, [] {
        double worst = 0.0;
        for (double c : {0.25, 1.0, 3.0}) {
            for (double gamma : {0.1, 0.5}) {
                for (double beta0 : {0.0, 0.2}) {
                    const double alpha = 1.7;
                    const auto ctx = rmt::make_scaled_context(alpha, beta0, c);
                    const double lstar = rmt::optimal_lambda(gamma, ctx);
                    const double g0 = gamma + beta0;
                    const double mu = lstar * g0 / alpha;
                    worst = std::max(
                        worst, std::abs(c * c * (1.0 - g0 * g0) * mu * mu -
                                        2.0 * c * mu * (c + 1.0) * g0 * g0 -
                                        (c - 1.0) * (c - 1.0) * g0 * g0));
                }
            }
        }
        return worst;
    });

    run.residual("rmt", "free-energy-mc-reduced", 0.05, [] {
        const int n = 800, d = 400, reps = 6;
        double mc = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
            const Eigen::MatrixXd X = randn(n, d, rng::stream_seed(4242, rep));
            const Eigen::VectorXd Y = randv(n, rng::stream_seed(4242, rep, 1));
            const Eigen::MatrixXd K = kernels::gram(kernels::linear_kernel(), X);
            mc += gp::free_energy(K, Y, gp::HyperParams::fixed(1.0, 1.0)) / n;
        }
        mc /= reps;
        const auto ctx = rmt::make_context(1.0, 0.0, 0.5, 1.0);
        return std::abs(mc - rmt::limiting_free_energy(1.0, 1.0, ctx));
    }, "full-scale convergence is exercised by the acceptance suite");
}

inline void validate_kernels(Runner& run) {
    run.residual("kernels", "gram-symmetry-exact", 0.0, [] {
        const Eigen::MatrixXd X = randn(23, 6, 77);
        double worst = 0.0;
        for (const auto& spec :
             {kernels::linear_kernel(), kernels::gaussian_kernel(),
              kernels::exponential_kernel(), kernels::polynomial_kernel(1.0, 2),
              kernels::matern_kernel(1.5)}) {
            const Eigen::MatrixXd K = kernels::gram(spec, X);
            worst = std::max(worst, (K - K.transpose()).lpNorm<Eigen::Infinity>());
        }
        return worst;
    });

    run.residual("kernels", "coefficients-reference", 1e-12, [] {
        const auto lin = kernels::coefficients(kernels::linear_kernel(), 1.0);
        const auto gau = kernels::coefficients(kernels::gaussian_kernel(), 1.0);
        const auto expk = kernels::coefficients(kernels::exponential_kernel(), 1.0);
        double worst = std::abs(lin.alpha - 1.0) + std::abs(lin.beta);
        worst = std::max(worst, std::abs(gau.alpha - 2.0 * std::exp(-2.0)));
        worst = std::max(worst, std::abs(gau.beta - (1.0 - 3.0 * std::exp(-2.0))));
        worst = std::max(worst, std::abs(expk.alpha - 1.0));
        worst = std::max(worst, std::abs(expk.beta - (std::exp(1.0) - 2.0)));
        return worst;
    });

    run.condition("kernels", "bandwidth-rescale-contract", [](std::string& note) {
        const auto lin = kernels::rescale_bandwidth(kernels::linear_kernel(), 3.0);
        if (lin.alpha != 1.0 || lin.beta0 != 0.0) {
            note = "linear kernel transform wrong";
            return false;
        }
        const auto quad = kernels::rescale_bandwidth(kernels::polynomial_kernel(1.0, 2), 2.0);
        if (std::abs(quad.alpha - 2.0) > 1e-9 || std::abs(quad.beta0 - 1.0) > 1e-9) {
            note = "quadratic kernel transform wrong";
            return false;
        }
        try {
            kernels::rescale_bandwidth(kernels::gaussian_kernel(), 2.0);
            note = "gaussian transform unexpectedly accepted";
            return false;
        } catch (const NotLambdaScalable&) {
        }
        note = "linear: (1, 0); quadratic: (2, 1); gaussian rejected";
        return true;
    });

    run.residual("kernels", "matern-gaussian-limit", 0.02, [] {
        const Eigen::MatrixXd X = randn(10, 5, 7);
        const Eigen::MatrixXd K = kernels::gram(kernels::matern_kernel(100.0), X);
        double worst = 0.0;
        for (int i = 0; i < 10; ++i) {
            for (int j = 0; j < 10; ++j) {
                const double t = (X.row(i) - X.row(j)).squaredNorm() / 5.0;
                const double se = std::exp(-t / 400.0);
                worst = std::max(worst, std::abs(K(i, j) - se) / se);
            }
        }
        return worst;
    }, "nu = 100 against the matched squared exponential, entrywise relative");

    run.condition("kernels", "elkaroui-convergence", [](std::string& note) {
        const double ridge = 0.1;
        for (const auto& spec : {kernels::linear_kernel(), kernels::gaussian_kernel()}) {
            const auto co = kernels::coefficients(spec, 1.0);
            for (double c : {0.5, 2.0}) {
                const int sizes[] = {250, 1000};
                double tdev[2], ldev[2];
                for (int si = 0; si < 2; ++si) {
                    const int n = sizes[si];
                    const int d = static_cast<int>(std::lround(c * n));
                    const int reps = si == 0 ? 4 : 2;
                    double tr = 0.0, ld = 0.0;
                    for (int rep = 0; rep < reps; ++rep) {
                        const Eigen::MatrixXd X =
                            randn(n, d, rng::stream_seed(55, si, rep));
                        Eigen::MatrixXd K = kernels::gram(spec, X);
                        K.diagonal().array() += ridge;
                        const Eigen::LLT<Eigen::MatrixXd> llt(K);
                        tr += llt.solve(Eigen::MatrixXd::Identity(n, n)).trace() / n;
                        ld += 2.0 * llt.matrixLLT().diagonal().array().log().sum() / n;
                    }
                    tr /= reps;
                    ld /= reps;
                    const auto ctx = rmt::make_context(co.alpha, co.beta, c, ridge);
                    tdev[si] = std::abs(tr - rmt::gram_trace_limit(ctx));
                    ldev[si] = std::abs(ld - rmt::gram_logdet_limit(ctx));
                }
                const auto ctx = rmt::make_context(co.alpha, co.beta, c, ridge);
                const double t_allow = 0.05 * std::abs(rmt::gram_trace_limit(ctx));
                const double l_allow =
                    std::max(0.05 * std::abs(rmt::gram_logdet_limit(ctx)), 0.005);
                // the 1.5x shrink requirement only binds while the large-n
                // deviation is itself resolvable (above half the accuracy
                // target); below that, draws order by noise
                const bool t_trend = tdev[1] < 1.5 * tdev[0] + 1e-4 || tdev[1] < 0.5 * t_allow;
                const bool l_trend = ldev[1] < 1.5 * ldev[0] + 1e-4 || ldev[1] < 0.5 * l_allow;
                if (!(t_trend && l_trend && tdev[1] < t_allow && ldev[1] < l_allow)) {
                    note = spec.id() + " at c = " + std::to_string(c);
                    return false;
                }
            }
        }
        note = "trace/log-det deviations shrink with n and are small at n = 1000";
        return true;
    });
}

inline void validate_gp(Runner& run) {
    run.residual("gp", "free-energy-gaussian-oracle", 1e-10, [] {
        double worst = 0.0;
        for (int n : {2, 7, 20}) {
            const Eigen::MatrixXd X = randn(n, 4, 900 + n);
            const Eigen::MatrixXd K = kernels::gram(kernels::gaussian_kernel(), X);
            const Eigen::VectorXd Y = randv(n, 950 + n);
            for (double lambda : {0.4, 1.0}) {
                for (double gamma : {0.1, 1.0}) {
                    Eigen::MatrixXd cov = K / lambda;
                    cov.diagonal().array() += gamma;
                    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
                    const Eigen::VectorXd r = es.eigenvectors().transpose() * Y;
                    double quad = 0.0, logdet = 0.0;
                    for (int i = 0; i < n; ++i) {
                        quad += r(i) * r(i) / es.eigenvalues()(i);
                        logdet += std::log(es.eigenvalues()(i));
                    }
                    const double oracle =
                        0.5 * (quad + logdet + n * gp::kLog2Pi);
                    worst = std::max(
                        worst, std::abs(gp::free_energy(K, Y, gp::HyperParams::fixed(
                                                                  lambda, gamma)) -
                                        oracle));
                }
            }
        }
        return worst;
    });

    run.residual("gp", "weight-space-equivalence", 1e-8, [] {
        double worst = 0.0;
        for (int n : {4, 10}) {
            for (int d : {3, 10}) {
                const Eigen::MatrixXd X = randn(n, d, 700 + 10 * n + d);
                const Eigen::VectorXd Y = randv(n, 800 + n + d);
                const Eigen::MatrixXd K = kernels::gram(kernels::linear_kernel(), X);
                const double lambda = 0.7, gamma = 0.4;
                const Eigen::MatrixXd Phi = X / std::sqrt(static_cast<double>(d));
                const Eigen::MatrixXd A =
                    Phi.transpose() * Phi / gamma +
                    lambda * Eigen::MatrixXd::Identity(d, d);
                const Eigen::VectorXd b = Phi.transpose() * Y / gamma;
                const Eigen::LLT<Eigen::MatrixXd> llt(A);
                const double logdet_a =
                    2.0 * llt.matrixLLT().diagonal().array().log().sum();
                const double log_z = 0.5 * d * std::log(lambda) -
                                     0.5 * n * std::log(gamma) -
                                     0.5 * n * gp::kLog2Pi - 0.5 * logdet_a -
                                     0.5 * (Y.squaredNorm() / gamma - b.dot(llt.solve(b)));
                worst = std::max(worst,
                                 std::abs(gp::free_energy(K, Y, gp::HyperParams::fixed(
                                                                    lambda, gamma)) +
                                          log_z));
            }
        }
        return worst;
    });

    run.residual("gp", "free-energy-cv-decomposition", 1e-8, [] {
        const gp::HyperParams hp = gp::HyperParams::fixed(1.0, 0.7);
        double worst = 0.0;
        for (int n : {2, 3, 4, 5}) {
            const Eigen::MatrixXd X = randn(n, 3, 90 + n);
            const Eigen::VectorXd Y = randv(n, 95 + n);
            const auto spec =
                n % 2 == 0 ? kernels::linear_kernel() : kernels::gaussian_kernel();
            const Eigen::MatrixXd K = kernels::gram(spec, X);
            double sum = 0.0;
            for (int k = 1; k <= n; ++k) sum += gp::cv_score(X, Y, k, spec, hp);
            worst = std::max(worst, std::abs(gp::free_energy(K, Y, hp) - sum));
        }
        return worst;
    });

    run.residual("gp", "ppnll-ppl2-identity", 1e-12, [] {
        const Eigen::MatrixXd X = randn(9, 4, 50);
        const Eigen::MatrixXd Z = randn(5, 4, 51);
        const auto spec = kernels::gaussian_kernel();
        const Eigen::MatrixXd K = kernels::gram(spec, X);
        const Eigen::MatrixXd kx = kernels::cross_gram(spec, X, Z);
        const Eigen::MatrixXd Kx = kernels::gram(spec, Z);
        const Eigen::VectorXd Y = randv(9, 52);
        const Eigen::VectorXd y = randv(5, 53);
        double worst = 0.0;
        for (double gamma : {0.05, 0.8, 3.0}) {
            const gp::HyperParams hp = gp::HyperParams::fixed(1.3, gamma);
            const auto pp = gp::posterior_predictive(K, kx, Kx, Y, hp);
            worst = std::max(
                worst, std::abs(gp::ppnll(pp, y, hp) -
                                (gp::ppl2(pp, y, hp) / (2.0 * gamma) +
                                 2.5 * (gp::kLog2Pi + std::log(gamma)))));
        }
        return worst;
    });

    run.condition("gp", "posterior-psd-and-trace-bound", [](std::string& note) {
        for (int trial = 0; trial < 10; ++trial) {
            const auto seed = static_cast<std::uint64_t>(trial);
            const Eigen::MatrixXd X = randn(8, 3, 1000 + seed);
            const Eigen::MatrixXd Z = randn(4, 3, 2000 + seed);
            const auto spec = kernels::gaussian_kernel();
            const Eigen::MatrixXd K = kernels::gram(spec, X);
            const Eigen::MatrixXd kx = kernels::cross_gram(spec, X, Z);
            const Eigen::MatrixXd Kx = kernels::gram(spec, Z);
            const Eigen::VectorXd Y = randv(8, 3000 + seed);
            const auto pp =
                gp::posterior_predictive(K, kx, Kx, Y, gp::HyperParams::fixed(0.7, 0.3));
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pp.cov);
            if (es.eigenvalues().minCoeff() <= -1e-10) {
                note = "negative eigenvalue";
                return false;
            }
            if (pp.raw_sigma.trace() > Kx.diagonal().sum() + 1e-12) {
                note = "trace bound violated";
                return false;
            }
        }
        return true;
    });

    run.residual("gp", "interpolation-limit", 1e-6, [] {
        const Eigen::MatrixXd X = randn(5, 8, 17);
        const Eigen::MatrixXd K = kernels::gram(kernels::gaussian_kernel(), X);
        const Eigen::VectorXd Y = randv(5, 18);
        const auto pp =
            gp::posterior_predictive(K, K, K, Y, gp::HyperParams::fixed(1.0, 1e-10));
        return (pp.mean - Y).lpNorm<Eigen::Infinity>();
    });
}

inline void validate_data(Runner& run) {
    run.condition("data", "synthetic-determinism", [](std::string& note) {
        const auto a = data::synth_gaussian(20, 7, data::CovSpec::identity(), 1.0, 99);
        const auto b = data::synth_gaussian(20, 7, data::CovSpec::identity(), 1.0, 99);
        if (a.X != b.X || a.Y != b.Y) {
            note = "same seed produced different data";
            return false;
        }
        return true;
    });

    run.residual("data", "whiten-postconditions", 1e-8, [] {
        const auto raw = data::synth_gaussian(500, 50, data::CovSpec::identity(), 3.0, 11);
        Eigen::MatrixXd X = raw.X;
        for (int j = 0; j < 50; ++j) {
            X.col(j) = X.col(j) * (1.0 + j) + Eigen::VectorXd::Constant(500, j);
        }
        const auto ds = data::whiten(X, raw.Y);
        const Eigen::MatrixXd cov = ds.X.transpose() * ds.X / 500.0;
        return std::max(
            (cov - Eigen::MatrixXd::Identity(50, 50)).lpNorm<Eigen::Infinity>(),
            ds.X.colwise().mean().lpNorm<Eigen::Infinity>() * 100.0);
    });

    run.residual("data", "whiten-idempotence", 1e-8, [] {
        const auto raw = data::synth_gaussian(300, 20, data::CovSpec::identity(), 2.0, 12);
        const auto once = data::whiten(raw.X, raw.Y);
        const auto twice = data::whiten(once.X, once.Y);
        return (twice.X - once.X).lpNorm<Eigen::Infinity>();
    });

    run.condition("data", "whiten-rank-drop", [](std::string& note) {
        const auto raw = data::synth_gaussian(100, 5, data::CovSpec::identity(), 1.0, 13);
        Eigen::MatrixXd X(100, 6);
        X << raw.X, raw.X.col(2);
        const auto ds = data::whiten(X, raw.Y);
        if (ds.d() != 5) {
            note = "duplicated column not dropped";
            return false;
        }
        return true;
    });

    run.condition("data", "augment-contracts", [](std::string& note) {
        const auto base = data::synth_gaussian(50, 30, data::CovSpec::identity(), 1.0, 21);
        const auto copied = data::augment(base, data::AugmentMode::copied, 70, 22);
        if (copied.X.col(30) != base.X.col(0)) {
            note = "copied-column rule broken";
            return false;
        }
        const auto padded = data::augment(base, data::AugmentMode::padded, 45, 23);
        if (!padded.X.rightCols(15).isZero(0.0)) {
            note = "padded columns not zero";
            return false;
        }
        const auto gauss = data::augment(base, data::AugmentMode::gaussian, 1030, 24);
        const double var = gauss.X.rightCols(1000).squaredNorm() / (50.0 * 1000.0);
        if (std::abs(var - 1.0) > 0.05) {
            note = "gaussian augmentation variance off";
            return false;
        }
        return true;
    });

    run.condition("data", "misspec-diagnostic-bound", [](std::string& note) {
        const auto r = data::synth_gaussian(1, 40, data::CovSpec::identity(), 1.0, 41);
        const auto diag = data::misspec_diagnostic(r.X.row(0).transpose());
        if (diag.lower_bound > diag.variance + 1e-12) {
            note = "reverse Poincare bound violated";
            return false;
        }
        const auto eq =
            data::misspec_diagnostic(Eigen::VectorXd::Constant(9, 1.0 / 3.0));
        if (std::abs(eq.variance - 1.0) > 1e-12 || std::abs(eq.lower_bound - 1.0) > 1e-12) {
            note = "equality case wrong";
            return false;
        }
        return true;
    });

    run.condition("data", "csv-roundtrip", [](std::string& note) {
        const std::string path = "/tmp/gpdd_validate_roundtrip.csv";
        const auto ds = data::synth_gaussian(13, 3, data::CovSpec::identity(), 1.3, 51);
        data::save_csv(ds, path);
        const auto back = data::load_csv(path, "label");
        std::remove(path.c_str());
        if (back.X != ds.X || back.Y != ds.Y) {
            note = "round trip not exact";
            return false;
        }
        return true;
    });
}

}  // namespace detail_validate

// Runs the oracle/invariant checks for one module suite or for all of them.
inline std::vector<CheckResult> validate(const std::string& suite,
                                         const ValidateOptions& options = {}) {
    std::vector<CheckResult> results;
    detail_validate::Runner run(results);
    const bool all = suite == "all";
    if (!all && suite != "specfun" && suite != "rmt" && suite != "gp" &&
        suite != "kernels" && suite != "data") {
        throw ConfigError("validate: unknown suite '" + suite + "'");
    }
    if (all || suite == "specfun") detail_validate::validate_specfun(run);
    if (all || suite == "rmt") detail_validate::validate_rmt(run, options);
    if (all || suite == "kernels") detail_validate::validate_kernels(run);
    if (all || suite == "gp") detail_validate::validate_gp(run);
    if (all || suite == "data") detail_validate::validate_data(run);
    return results;
}

inline bool validation_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results) {
        if (!r.pass) return false;
    }
    return true;
}

inline void print_validation_report(const std::vector<CheckResult>& results,
                                    std::ostream& os) {
    int failed = 0;
    for (const auto& r : results) {
        char line[256];
        if (r.tolerance > 0.0 || r.observed != 0.0) {
            std::snprintf(line, sizeof(line), "[%s] %s/%s  observed %.3e  (tolerance %.1e)",
                          r.pass ? "PASS" : "FAIL", r.suite.c_str(), r.name.c_str(),
                          r.observed, r.tolerance);
        } else {
            std::snprintf(line, sizeof(line), "[%s] %s/%s", r.pass ? "PASS" : "FAIL",
                          r.suite.c_str(), r.name.c_str());
        }
        os << line;
        if (!r.note.empty()) os << "  -- " << r.note;
        os << "\n";
        if (!r.pass) ++failed;
    }
    os << (failed == 0 ? "all checks passed" : std::to_string(failed) + " check(s) failed")
       << " (" << results.size() << " total)\n";
}

}  // namespace gpdd::harness
