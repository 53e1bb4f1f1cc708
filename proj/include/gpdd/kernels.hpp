#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "gpdd/errors.hpp"
#include "gpdd/quadrature.hpp"

namespace gpdd::kernels {

enum class Family {
    linear,
    polynomial,
    exponential,
    gaussian,
    multiquadric,
    inverse_multiquadric,
    matern,
};

enum class Kind { inner_product, radial };

// A covariance kernel family under the proportional-scaling convention:
// inner-product kernels evaluate kappa(x.x'/d), radial kernels evaluate
// kappa(|x-x'|^2/d).  The bandwidth transform kappa_eta(t) = kappa(eta t)/eta
// preserves the family.
struct KernelSpec {
    Family family = Family::linear;
    double c0 = 0.0;     // polynomial / multiquadric offset
    double degree = 1.0; // polynomial: integer >= 1; (inverse) multiquadric: exponent p
    double nu = 1.5;     // matern smoothness
    double eta = 1.0;    // bandwidth

    Kind kind() const {
        switch (family) {
            case Family::linear:
            case Family::polynomial:
            case Family::exponential:
                return Kind::inner_product;
            default:
                return Kind::radial;
        }
    }

    std::string id() const {
        char buf[96];
        switch (family) {
            case Family::linear:
                return eta == 1.0 ? "linear" : tagged("linear");
            case Family::exponential:
                return eta == 1.0 ? "exponential" : tagged("exponential");
            case Family::gaussian:
                return eta == 1.0 ? "gaussian" : tagged("gaussian");
            case Family::polynomial:
                std::snprintf(buf, sizeof(buf), "polynomial(c0=%g,p=%g)", c0, degree);
                break;
            case Family::multiquadric:
                std::snprintf(buf, sizeof(buf), "multiquadric(c0=%g,p=%g)", c0, degree);
                break;
            case Family::inverse_multiquadric:
                std::snprintf(buf, sizeof(buf), "inverse-multiquadric(c0=%g,p=%g)", c0, degree);
                break;
            case Family::matern:
                std::snprintf(buf, sizeof(buf), "matern(nu=%g)", nu);
                break;
        }
        std::string s(buf);
        return eta == 1.0 ? s : s + tagged("");
    }

    void validate() const {
        if (!(eta > 0.0)) throw std::domain_error("KernelSpec: eta must be positive");
        switch (family) {
            case Family::polynomial:
                if (c0 < 0.0) throw std::domain_error("KernelSpec: polynomial c0 must be >= 0");
                if (degree < 1.0 || degree != std::floor(degree)) {
                    throw std::domain_error("KernelSpec: polynomial degree must be a positive integer");
                }
                break;
            case Family::multiquadric:
                if (!(c0 > 0.0)) throw std::domain_error("KernelSpec: multiquadric c0 must be > 0");
                break;
            case Family::inverse_multiquadric:
                if (!(c0 > 0.0) || !(degree > 0.0)) {
                    throw std::domain_error("KernelSpec: inverse multiquadric needs c0 > 0, p > 0");
                }
                break;
            case Family::matern:
                if (!(nu > 0.0)) throw std::domain_error("KernelSpec: matern nu must be positive");
                break;
            default:
                break;
        }
    }

private:
    std::string tagged(const std::string& base) const {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "[eta=%g]", eta);
        return base + buf;
    }
};

inline KernelSpec linear_kernel() { return {}; }
inline KernelSpec gaussian_kernel() { KernelSpec s; s.family = Family::gaussian; return s; }
inline KernelSpec exponential_kernel() { KernelSpec s; s.family = Family::exponential; return s; }
inline KernelSpec polynomial_kernel(double c0, int degree) {
    KernelSpec s; s.family = Family::polynomial; s.c0 = c0; s.degree = degree; return s;
}
inline KernelSpec matern_kernel(double nu) {
    KernelSpec s; s.family = Family::matern; s.nu = nu; return s;
}

// ---------------------------------------------------------------------------
// Bessel K, as needed by the Matern family.

namespace bessel {

inline double log_cosh(double x) {
    x = std::abs(x);
    // log cosh x = x + log1p(e^{-2x}) - log 2, overflow-free.
    return x + std::log1p(std::exp(-2.0 * x)) - 0.6931471805599453094;
}

// K_{n+1/2}(x) = sqrt(pi/(2x)) e^{-x} sum_{k=0}^{n} (n+k)! / (k! (n-k)! (2x)^k)
inline double log_bessel_k_half_integer(int n, double x) {
    double sum = 0.0;
    double term = 1.0;
    for (int k = 0; k <= n; ++k) {
        if (k > 0) {
            term *= static_cast<double>((n + k) * (n - k + 1)) /
                    (2.0 * static_cast<double>(k) * x);
        }
        sum += term;
    }
    return 0.5 * std::log(1.5707963267948966192 / x) - x + std::log(sum);
}

// log K_nu(x) through the integral representation
//   K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt,
// integrated in a scaled exponent frame so large orders do not overflow.
inline double log_bessel_k_integral(double nu, double x) {
    nu = std::abs(nu);
    auto exponent = [&](double t) { return log_cosh(nu * t) - x * std::cosh(t); };
    // Locate the exponent peak; for nu <= x it sits at t = 0.
    double t_peak = 0.0;
    if (nu > x) {
        // Solve nu tanh(nu t) = x sinh t; asinh(nu/x) is an excellent start.
        double t = std::asinh(nu / x);
        for (int it = 0; it < 60; ++it) {
            const double g = nu * std::tanh(nu * t) - x * std::sinh(t);
            const double th = std::tanh(nu * t);
            const double gp = nu * nu * (1.0 - th * th) - x * std::cosh(t);
            if (gp == 0.0) break;
            const double step = g / gp;
            t -= step;
            if (t < 0.0) t = 0.5 * (t + step);  // keep inside the domain
            if (std::abs(step) < 1e-14 * (1.0 + std::abs(t))) break;
        }
        t_peak = std::max(t, 0.0);
    }
    const double peak = exponent(t_peak);
    // Expand until the integrand is negligible relative to the peak.
    double hi = t_peak + 1.0;
    while (exponent(hi) - peak > -46.0) hi += 1.0;
    const double integral = quad::adaptive_simpson(
        [&](double t) { return std::exp(exponent(t) - peak); }, 0.0, hi, 1e-12);
    return peak + std::log(integral);
}

inline double log_bessel_k(double nu, double x) {
    if (!(x > 0.0)) throw std::domain_error("log_bessel_k: x must be positive");
    nu = std::abs(nu);
    const double half = nu - 0.5;
    if (std::abs(half - std::round(half)) < 1e-12 && std::round(half) >= 0.0 &&
        std::round(half) <= 64.0) {
        return log_bessel_k_half_integer(static_cast<int>(std::round(half)), x);
    }
    return log_bessel_k_integral(nu, x);
}

inline double bessel_k(double nu, double x) { return std::exp(log_bessel_k(nu, x)); }

}  // namespace bessel

// ---------------------------------------------------------------------------
// Base family profiles kappa(t) and their derivatives (no bandwidth applied).

namespace detail {

inline double pow_int(double base, long p) {
    double r = 1.0;
    for (long i = 0; i < p; ++i) r *= base;
    return r;
}

// Matern profile as a function of t = r^2: (2^{nu-1} Gamma(nu))^-1 r^nu K_nu(r),
// normalized so kappa(0) = 1.  Evaluated in log space to survive large nu.
inline double matern_profile(double nu, double t) {
    if (t <= 0.0) return 1.0;
    const double r = std::sqrt(t);
    const double log_val = nu * std::log(r) + bessel::log_bessel_k(nu, r) -
                           (nu - 1.0) * 0.6931471805599453094 - std::lgamma(nu);
    return std::exp(log_val);
}

// d/dt of the Matern profile: -(1/2) C_nu r^{nu-1} K_{nu-1}(r).
inline double matern_profile_prime(double nu, double t) {
    if (t <= 0.0) throw std::domain_error("matern derivative needs t > 0");
    const double r = std::sqrt(t);
    const double log_mag = (nu - 1.0) * std::log(r) +
                           bessel::log_bessel_k(std::abs(nu - 1.0), r) -
                           (nu - 1.0) * 0.6931471805599453094 - std::lgamma(nu);
    return -0.5 * std::exp(log_mag);
}

inline double kappa_base(const KernelSpec& s, double t) {
    switch (s.family) {
        case Family::linear: return t;
        case Family::polynomial: return pow_int(s.c0 + t, static_cast<long>(s.degree));
        case Family::exponential: return std::exp(t);
        case Family::gaussian: return std::exp(-t);
        case Family::multiquadric: return std::pow(s.c0 + t, s.degree);
        case Family::inverse_multiquadric: return std::pow(s.c0 + t, -s.degree);
        case Family::matern: return matern_profile(s.nu, t);
    }
    return 0.0;
}

inline double kappa_base_prime(const KernelSpec& s, double t) {
    switch (s.family) {
        case Family::linear: return 1.0;
        case Family::polynomial:
            return s.degree * pow_int(s.c0 + t, static_cast<long>(s.degree) - 1);
        case Family::exponential: return std::exp(t);
        case Family::gaussian: return -std::exp(-t);
        case Family::multiquadric: return s.degree * std::pow(s.c0 + t, s.degree - 1.0);
        case Family::inverse_multiquadric:
            return -s.degree * std::pow(s.c0 + t, -s.degree - 1.0);
        case Family::matern: return matern_profile_prime(s.nu, t);
    }
    return 0.0;
}

}  // namespace detail

// kappa_eta(t) = kappa(eta t) / eta.
inline double kappa(const KernelSpec& s, double t) {
    return detail::kappa_base(s, s.eta * t) / s.eta;
}

// kappa_eta'(t) = kappa'(eta t).
inline double kappa_prime(const KernelSpec& s, double t) {
    return detail::kappa_base_prime(s, s.eta * t);
}

// ---------------------------------------------------------------------------
// Evaluation and Gram assembly.

inline double eval(const KernelSpec& s, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& xp) {
    if (x.size() != xp.size() || x.size() == 0) {
        throw std::domain_error("kernel eval: dimension mismatch");
    }
    const double d = static_cast<double>(x.size());
    const double t = s.kind() == Kind::inner_product
                         ? x.dot(xp) / d
                         : (x - xp).squaredNorm() / d;
    return kappa(s, t);
}

// Symmetric Gram matrix; both triangles are filled from a single evaluation
// per pair, so K == K^T holds exactly.
inline Eigen::MatrixXd gram(const KernelSpec& s, const Eigen::Ref<const Eigen::MatrixXd>& X) {
    s.validate();
    const Eigen::Index n = X.rows();
    const double d = static_cast<double>(X.cols());
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
    G.selfadjointView<Eigen::Lower>().rankUpdate(X, 1.0 / d);
    if (s.kind() == Kind::inner_product) {
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = j; i < n; ++i) {
                G(i, j) = kappa(s, G(i, j));
            }
        }
    } else {
        const Eigen::VectorXd sq = G.diagonal();
        const double diag_value = kappa(s, 0.0);
        for (Eigen::Index j = 0; j < n; ++j) {
            G(j, j) = diag_value;
            for (Eigen::Index i = j + 1; i < n; ++i) {
                const double t = std::max(sq(i) + sq(j) - 2.0 * G(i, j), 0.0);
                G(i, j) = kappa(s, t);
            }
        }
    }
    G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
    return G;
}

// Cross Gram k_x with entries k(X_i, Z_j); X is n x d, Z is m x d.
inline Eigen::MatrixXd cross_gram(const KernelSpec& s,
                                  const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  const Eigen::Ref<const Eigen::MatrixXd>& Z) {
    s.validate();
    if (X.cols() != Z.cols()) throw std::domain_error("cross_gram: dimension mismatch");
    const double d = static_cast<double>(X.cols());
    Eigen::MatrixXd G = X * Z.transpose() / d;
    if (s.kind() == Kind::inner_product) {
        for (Eigen::Index j = 0; j < G.cols(); ++j) {
            for (Eigen::Index i = 0; i < G.rows(); ++i) {
                G(i, j) = kappa(s, G(i, j));
            }
        }
    } else {
        const Eigen::VectorXd sx = X.rowwise().squaredNorm() / d;
        const Eigen::VectorXd sz = Z.rowwise().squaredNorm() / d;
        for (Eigen::Index j = 0; j < G.cols(); ++j) {
            for (Eigen::Index i = 0; i < G.rows(); ++i) {
                const double t = std::max(sx(i) + sz(j) - 2.0 * G(i, j), 0.0);
                G(i, j) = kappa(s, t);
            }
        }
    }
    return G;
}

// ---------------------------------------------------------------------------
// Spectral linearization coefficients and the bandwidth transform.

struct Coefficients {
    double alpha = 0.0;
    double beta = 0.0;
};

// (alpha, beta) of the linearization K ~ alpha XX^T/d + beta I for data with
// per-coordinate variance sigma2.  Derivatives are analytic per family.
//   inner-product: alpha = kappa'(0),       beta = kappa(s2) - kappa(0) - kappa'(0) s2
//   radial:        alpha = -2 kappa'(2 s2), beta = kappa(0) + 2 s2 kappa'(2 s2) - kappa(2 s2)
inline Coefficients coefficients(const KernelSpec& s, double sigma2) {
    s.validate();
    if (!(sigma2 > 0.0)) throw std::domain_error("coefficients: sigma2 must be positive");
    Coefficients co;
    if (s.kind() == Kind::inner_product) {
        co.alpha = kappa_prime(s, 0.0);
        co.beta = kappa(s, sigma2) - kappa(s, 0.0) - co.alpha * sigma2;
    } else {
        const double kp = kappa_prime(s, 2.0 * sigma2);
        co.alpha = -2.0 * kp;
        co.beta = kappa(s, 0.0) + 2.0 * sigma2 * kp - kappa(s, 2.0 * sigma2);
    }
    if (!(co.alpha > 0.0) || !std::isfinite(co.alpha)) {
        throw DegenerateKernel("coefficients: alpha <= 0 for kernel " + s.id());
    }
    return co;
}

struct Rescaled {
    KernelSpec spec;   // bandwidth eta multiplied by lambda
    double alpha = 0.0;
    double beta0 = 0.0;  // beta(lambda) / lambda
};

// Bandwidth transform kappa -> kappa_lambda(t) = kappa(lambda t)/lambda.
// Valid only for families whose transformed coefficients satisfy
// alpha(lambda) constant and beta(lambda) = beta0 * lambda; verified by
// evaluating the coefficients at two bandwidths.
inline Rescaled rescale_bandwidth(const KernelSpec& s, double lambda) {
    if (!(lambda > 0.0)) throw std::domain_error("rescale_bandwidth: lambda must be positive");
    auto at = [&](double scale) {
        KernelSpec t = s;
        t.eta = s.eta * scale;
        return coefficients(t, 1.0);
    };
    const Coefficients c1 = at(lambda);
    const Coefficients c2 = at(2.0 * lambda);
    const double b0_1 = c1.beta / lambda;
    const double b0_2 = c2.beta / (2.0 * lambda);
    const double alpha_dev = std::abs(c2.alpha - c1.alpha) / std::abs(c1.alpha);
    const double b0_scale = std::max({std::abs(b0_1), std::abs(b0_2), 1e-3});
    const double b0_dev = std::abs(b0_2 - b0_1) / b0_scale;
    if (alpha_dev > 1e-9 || b0_dev > 1e-9) {
        throw NotLambdaScalable("rescale_bandwidth: kernel " + s.id() +
                                " has lambda-dependent coefficients (alpha dev " +
                                std::to_string(alpha_dev) + ", beta0 dev " +
                                std::to_string(b0_dev) + ")");
    }
    Rescaled r;
    r.spec = s;
    r.spec.eta = s.eta * lambda;
    r.alpha = c1.alpha;
    r.beta0 = b0_1;
    return r;
}

}  // namespace gpdd::kernels
