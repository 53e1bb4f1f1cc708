// Test-only oracles: independent routes for the quantities the library
// computes in closed form.  Kept free of the implementation paths they check.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "gpdd/rng.hpp"

namespace oracles {

// Digamma by direct summation of psi(z) = -gamma_EM + sum_k (1/(k+1) - 1/(k+z)),
// with an Euler-Maclaurin tail after K terms.  Error is O(K^-6); far below
// 1e-13 for K = 1e4 and moderate z.
inline double digamma_series(double z) {
    constexpr double euler_mascheroni = 0.57721566490153286060651209;
    constexpr int K = 20000;
    double sum = 0.0;
    for (int k = K - 1; k >= 0; --k) {  // ascending magnitude
        sum += 1.0 / (k + 1.0) - 1.0 / (k + z);
    }
    const double k = static_cast<double>(K);
    // tail of sum_{j>=K} f(j), f(j) = 1/(j+1) - 1/(j+z)
    const double f0 = 1.0 / (k + 1.0) - 1.0 / (k + z);
    const double f1 = -1.0 / ((k + 1.0) * (k + 1.0)) + 1.0 / ((k + z) * (k + z));
    const double f3 = -6.0 / std::pow(k + 1.0, 4) + 6.0 / std::pow(k + z, 4);
    const double tail = std::log((k + z) / (k + 1.0)) + 0.5 * f0 - f1 / 12.0 + f3 / 720.0;
    return -euler_mascheroni + sum + tail;
}

// Mean of log det over Monte Carlo draws of W^T W, W n x d standard normal.
inline double mc_wishart_logdet(int n, int d, int draws, std::uint64_t seed) {
    gpdd::rng::Xoshiro256pp gen(seed);
    double total = 0.0;
    Eigen::MatrixXd W(n, d);
    for (int it = 0; it < draws; ++it) {
        for (int j = 0; j < d; ++j) {
            for (int i = 0; i < n; ++i) W(i, j) = gen.gaussian();
        }
        if (d == 1) {
            total += std::log(W.col(0).squaredNorm());
        } else {
            const Eigen::MatrixXd G = W.transpose() * W;
            total += std::log(G.determinant());
        }
    }
    return total / draws;
}

// d^-1 tr((n^-1 X^T X - z I)^-1) averaged over draws.
inline double mc_mp_resolvent_trace(int n, int d, double z, int draws,
                                    std::uint64_t seed) {
    gpdd::rng::Xoshiro256pp gen(seed);
    double total = 0.0;
    for (int it = 0; it < draws; ++it) {
        Eigen::MatrixXd X(n, d);
        for (int j = 0; j < d; ++j) {
            for (int i = 0; i < n; ++i) X(i, j) = gen.gaussian();
        }
        Eigen::MatrixXd A = (X.transpose() * X) / static_cast<double>(n);
        A.diagonal().array() -= z;
        total += A.llt().solve(Eigen::MatrixXd::Identity(d, d)).trace() /
                 static_cast<double>(d);
    }
    return total / draws;
}

// n^-1 tr((d^-1 X^T X + mu I)^-1) (gram = false) or with X X^T (gram = true).
inline double mc_ridge_trace(int n, int d, double mu, bool use_xxt, int draws,
                             std::uint64_t seed) {
    gpdd::rng::Xoshiro256pp gen(seed);
    double total = 0.0;
    for (int it = 0; it < draws; ++it) {
        Eigen::MatrixXd X(n, d);
        for (int j = 0; j < d; ++j) {
            for (int i = 0; i < n; ++i) X(i, j) = gen.gaussian();
        }
        const int m = use_xxt ? n : d;
        Eigen::MatrixXd A = use_xxt
                                ? Eigen::MatrixXd((X * X.transpose()) / static_cast<double>(d))
                                : Eigen::MatrixXd((X.transpose() * X) / static_cast<double>(d));
        A.diagonal().array() += mu;
        total += A.llt().solve(Eigen::MatrixXd::Identity(m, m)).trace() /
                 static_cast<double>(n);
    }
    return total / draws;
}

// n^-1 log det(d^-1 X^T X + mu I) averaged over draws (c <= 1 orientation).
inline double mc_ridge_logdet(int n, int d, double mu, bool use_xxt, int draws,
                              std::uint64_t seed) {
    gpdd::rng::Xoshiro256pp gen(seed);
    double total = 0.0;
    for (int it = 0; it < draws; ++it) {
        Eigen::MatrixXd X(n, d);
        for (int j = 0; j < d; ++j) {
            for (int i = 0; i < n; ++i) X(i, j) = gen.gaussian();
        }
        const int m = use_xxt ? n : d;
        Eigen::MatrixXd A = use_xxt
                                ? Eigen::MatrixXd((X * X.transpose()) / static_cast<double>(d))
                                : Eigen::MatrixXd((X.transpose() * X) / static_cast<double>(d));
        A.diagonal().array() += mu;
        const Eigen::LLT<Eigen::MatrixXd> llt(A);
        total += 2.0 * llt.matrixLLT().diagonal().array().log().sum() /
                 static_cast<double>(n);
    }
    return total / draws;
}

// Log density of N(mean, cov) at y, via an eigendecomposition (a route
// distinct from the Cholesky used by the library).
inline double gaussian_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov) {
    const Eigen::Index m = y.size();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::VectorXd r = es.eigenvectors().transpose() * (y - mean);
    double quad = 0.0, logdet = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        quad += r(i) * r(i) / es.eigenvalues()(i);
        logdet += std::log(es.eigenvalues()(i));
    }
    return -0.5 * (quad + logdet + static_cast<double>(m) * 1.837877066409345483560659472811);
}

// Weight-space marginal of the d-scaled linear kernel: f(x) = w.x / sqrt(d)
// with w ~ N(0, I/lambda) and Gaussian noise of variance gamma.
//   -log Z = -log N(Y; 0, Phi Phi^T / lambda + gamma I), Phi = X / sqrt(d),
// evaluated through the finite-dimensional Gaussian integral over w.
inline double weight_space_neg_log_marginal(const Eigen::MatrixXd& X,
                                            const Eigen::VectorXd& Y, double lambda,
                                            double gamma) {
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    const Eigen::MatrixXd Phi = X / std::sqrt(static_cast<double>(d));
    const Eigen::MatrixXd A =
        Phi.transpose() * Phi / gamma + lambda * Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd b = Phi.transpose() * Y / gamma;
    const Eigen::LLT<Eigen::MatrixXd> llt(A);
    const double logdet_a = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double quad = b.dot(llt.solve(b));
    constexpr double log2pi = 1.837877066409345483560659472811;
    // log Z = (d/2) log lambda - (n/2) log gamma - ((n+d)/2) log 2pi
    //         + (d/2) log 2pi - (1/2) log det A - (1/2)(|Y|^2/gamma - b^T A^-1 b)
    const double log_z = 0.5 * d * std::log(lambda) - 0.5 * n * std::log(gamma) -
                         0.5 * (n + d) * log2pi + 0.5 * d * log2pi -
                         0.5 * logdet_a - 0.5 * (Y.squaredNorm() / gamma - quad);
    return -log_z;
}

}  // namespace oracles
