#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gpdd/errors.hpp"
#include "gpdd/kernels.hpp"
#include "gpdd/rng.hpp"

namespace gpdd::gp {

inline constexpr double kLog2Pi = 1.837877066409345483560659472811;

// Prior precision scale lambda and temperature gamma.  The tempered policy
// ties lambda = mu / gamma; the optimal policy defers lambda to the harness.
struct HyperParams {
    enum class Policy { fixed, tempered, optimal_lambda };

    double lambda = 1.0;
    double gamma = 1.0;
    Policy policy = Policy::fixed;
    double mu = 0.0;  // tempered only

    static HyperParams fixed(double lambda, double gamma) {
        HyperParams hp;
        hp.lambda = lambda;
        hp.gamma = gamma;
        return hp;
    }

    static HyperParams tempered(double mu, double gamma) {
        HyperParams hp;
        hp.lambda = mu / gamma;
        hp.gamma = gamma;
        hp.policy = Policy::tempered;
        hp.mu = mu;
        return hp;
    }

    double ridge() const { return lambda * gamma; }

    void validate() const {
        if (!(lambda > 0.0) || !(gamma > 0.0) || !(ridge() > 0.0)) {
            throw std::domain_error("HyperParams: requires lambda, gamma, lambda*gamma > 0");
        }
    }
};

// One symmetric positive-definite factorization of K + ridge * I serving all
// solves and log-determinants of a metric bundle; no explicit inverse is
// ever formed.
class RidgeFactor {
public:
    RidgeFactor(const Eigen::Ref<const Eigen::MatrixXd>& K, double ridge) {
        if (K.rows() != K.cols()) throw std::domain_error("RidgeFactor: K must be square");
        if (!(ridge > 0.0)) throw std::domain_error("RidgeFactor: ridge must be positive");
        n_ = K.rows();
        if (n_ == 0) return;
        Eigen::MatrixXd A = K;
        A.diagonal().array() += ridge;
        llt_.compute(A);
        if (llt_.info() != Eigen::Success) {
            throw FactorizationFailure(
                "RidgeFactor: K + ridge*I is not positive definite (ridge = " +
                std::to_string(ridge) + ")");
        }
    }

    Eigen::Index n() const { return n_; }

    double logdet() const {
        if (n_ == 0) return 0.0;
        return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
    }

    template <typename Derived>
    auto solve(const Eigen::MatrixBase<Derived>& b) const {
        return llt_.solve(b).eval();
    }

    // tr((K + ridge I)^-1) = |L^-1|_F^2.
    double trace_inverse() const {
        if (n_ == 0) return 0.0;
        Eigen::MatrixXd inv_l = Eigen::MatrixXd::Identity(n_, n_);
        llt_.matrixL().solveInPlace(inv_l);
        return inv_l.squaredNorm();
    }

private:
    Eigen::Index n_ = 0;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

// Bayes free energy
//   F_n = (lambda/2) Y^T (K + lambda gamma I)^-1 Y
//         + (1/2) log det(K + lambda gamma I) - (n/2) log(lambda / (2 pi)).
inline double free_energy(const RidgeFactor& factor,
                          const Eigen::Ref<const Eigen::VectorXd>& Y,
                          const HyperParams& hp) {
    hp.validate();
    if (Y.size() != factor.n()) throw std::domain_error("free_energy: size mismatch");
    const double quad = Y.dot(factor.solve(Y));
    const double n = static_cast<double>(factor.n());
    return 0.5 * hp.lambda * quad + 0.5 * factor.logdet() -
           0.5 * n * (std::log(hp.lambda) - kLog2Pi);
}

inline double free_energy(const Eigen::Ref<const Eigen::MatrixXd>& K,
                          const Eigen::Ref<const Eigen::VectorXd>& Y,
                          const HyperParams& hp) {
    hp.validate();
    return free_energy(RidgeFactor(K, hp.ridge()), Y, hp);
}

// Posterior predictive law of f at m test points:
//   mean      = k_x^T (K + lambda gamma I)^-1 Y
//   raw_sigma = K_x - k_x^T (K + lambda gamma I)^-1 k_x
//   cov       = raw_sigma / lambda
struct PosteriorPredictive {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd raw_sigma;
};

inline PosteriorPredictive posterior_predictive(
    const RidgeFactor& factor, const Eigen::Ref<const Eigen::MatrixXd>& k_x,
    const Eigen::Ref<const Eigen::MatrixXd>& K_x,
    const Eigen::Ref<const Eigen::VectorXd>& Y, const HyperParams& hp) {
    hp.validate();
    const Eigen::Index n = factor.n();
    const Eigen::Index m = K_x.rows();
    if (K_x.cols() != m || k_x.rows() != n || k_x.cols() != m || Y.size() != n) {
        throw std::domain_error("posterior_predictive: inconsistent shapes");
    }
    PosteriorPredictive pp;
    if (n == 0) {
        pp.mean = Eigen::VectorXd::Zero(m);
        pp.raw_sigma = K_x;
    } else {
        const Eigen::MatrixXd w = factor.solve(k_x);  // (K + ridge)^-1 k_x
        pp.mean = w.transpose() * Y;
        pp.raw_sigma = K_x - k_x.transpose() * w;
        pp.raw_sigma = 0.5 * (pp.raw_sigma + pp.raw_sigma.transpose()).eval();
    }
    pp.cov = pp.raw_sigma / hp.lambda;
    return pp;
}

inline PosteriorPredictive posterior_predictive(
    const Eigen::Ref<const Eigen::MatrixXd>& K,
    const Eigen::Ref<const Eigen::MatrixXd>& k_x,
    const Eigen::Ref<const Eigen::MatrixXd>& K_x,
    const Eigen::Ref<const Eigen::VectorXd>& Y, const HyperParams& hp) {
    hp.validate();
    return posterior_predictive(RidgeFactor(K, hp.ridge()), k_x, K_x, Y, hp);
}

// Posterior predictive L2 loss: |mean - y|^2 + tr(raw_sigma) / lambda.
inline double ppl2(const PosteriorPredictive& pp,
                   const Eigen::Ref<const Eigen::VectorXd>& y,
                   const HyperParams& hp) {
    hp.validate();
    if (y.size() != pp.mean.size()) throw std::domain_error("ppl2: size mismatch");
    return (pp.mean - y).squaredNorm() + pp.raw_sigma.trace() / hp.lambda;
}

// Posterior predictive negative log-likelihood:
//   (1/2gamma)|mean - y|^2 + (1/(2 lambda gamma)) tr(raw_sigma)
//   + (m/2) log(2 pi gamma).
inline double ppnll(const PosteriorPredictive& pp,
                    const Eigen::Ref<const Eigen::VectorXd>& y,
                    const HyperParams& hp) {
    hp.validate();
    if (y.size() != pp.mean.size()) throw std::domain_error("ppnll: size mismatch");
    const double m = static_cast<double>(y.size());
    return (pp.mean - y).squaredNorm() / (2.0 * hp.gamma) +
           pp.raw_sigma.trace() / (2.0 * hp.lambda * hp.gamma) +
           0.5 * m * (kLog2Pi + std::log(hp.gamma));
}

// Optimally tempered PPNLL.  In the tempered setting lambda = mu / gamma the
// stationary temperature is gamma* = mse / m, and the loss there is
//   (m/2) [1 + log(2 pi mse)] + tr(Sigma) / (2 mu),
// with mse the (estimated) expected squared error.
struct OptimalPpnll {
    double gamma_star = 0.0;
    double value = 0.0;
};

inline OptimalPpnll optimal_ppnll(double mse, double trace_sigma, int m, double mu) {
    if (!(mse > 0.0)) throw std::domain_error("optimal_ppnll: mse must be positive");
    if (m < 1) throw std::domain_error("optimal_ppnll: m must be >= 1");
    if (trace_sigma < 0.0) throw std::domain_error("optimal_ppnll: trace_sigma must be >= 0");
    if (!(mu > 0.0)) throw std::domain_error("optimal_ppnll: mu must be positive");
    OptimalPpnll out;
    out.gamma_star = mse / static_cast<double>(m);
    out.value = 0.5 * static_cast<double>(m) * (1.0 + kLog2Pi + std::log(mse)) +
                trace_sigma / (2.0 * mu);
    return out;
}

// Log marginal predictive density of test labels y:
//   log N(y; mean, raw_sigma / lambda + gamma I).
// An empty training set yields the prior predictive log N(y; 0, K_x/lambda + gamma I).
inline double log_predictive_density(const Eigen::Ref<const Eigen::MatrixXd>& K,
                                     const Eigen::Ref<const Eigen::MatrixXd>& k_x,
                                     const Eigen::Ref<const Eigen::MatrixXd>& K_x,
                                     const Eigen::Ref<const Eigen::VectorXd>& Y,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     const HyperParams& hp) {
    hp.validate();
    const PosteriorPredictive pp = posterior_predictive(K, k_x, K_x, Y, hp);
    const Eigen::Index m = y.size();
    if (pp.mean.size() != m) throw std::domain_error("log_predictive_density: size mismatch");
    Eigen::MatrixXd S = pp.cov;
    S.diagonal().array() += hp.gamma;
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) {
        throw FactorizationFailure("log_predictive_density: predictive covariance not PD");
    }
    const Eigen::VectorXd r = y - pp.mean;
    const double quad = r.dot(llt.solve(r));
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * (quad + logdet + static_cast<double>(m) * kLog2Pi);
}

// Leave-k-out cross-validation score under the marginal predictive density:
// the average over test subsets T of size k and a uniform held-out index
// i in T of -log p(Y_i | X_T-complement, Y_T-complement).
struct CvMode {
    enum class Type { exact, sampled };
    Type type = Type::exact;
    int reps = 0;               // sampled mode
    std::uint64_t seed = 0;     // sampled mode

    static CvMode exact() { return {}; }
    static CvMode sampled(int reps, std::uint64_t seed) {
        CvMode m;
        m.type = Type::sampled;
        m.reps = reps;
        m.seed = seed;
        return m;
    }
};

namespace detail {

inline double neg_log_pred_one(const Eigen::Ref<const Eigen::MatrixXd>& X,
                               const Eigen::Ref<const Eigen::VectorXd>& Y,
                               const std::vector<int>& train, int held_out,
                               const kernels::KernelSpec& spec,
                               const HyperParams& hp) {
    const Eigen::Index d = X.cols();
    const Eigen::Index nt = static_cast<Eigen::Index>(train.size());
    Eigen::MatrixXd Xt(nt, d);
    Eigen::VectorXd Yt(nt);
    for (Eigen::Index a = 0; a < nt; ++a) {
        Xt.row(a) = X.row(train[static_cast<std::size_t>(a)]);
        Yt(a) = Y(train[static_cast<std::size_t>(a)]);
    }
    const Eigen::MatrixXd Xo = X.row(held_out);
    const Eigen::MatrixXd K = nt > 0 ? kernels::gram(spec, Xt) : Eigen::MatrixXd(0, 0);
    const Eigen::MatrixXd kx = nt > 0 ? kernels::cross_gram(spec, Xt, Xo) : Eigen::MatrixXd(0, 1);
    const Eigen::MatrixXd Kx = kernels::gram(spec, Xo);
    Eigen::VectorXd yo(1);
    yo(0) = Y(held_out);
    return -log_predictive_density(K, kx, Kx, Yt, yo, hp);
}

}  // namespace detail

inline double cv_score(const Eigen::Ref<const Eigen::MatrixXd>& X,
                       const Eigen::Ref<const Eigen::VectorXd>& Y, int k,
                       const kernels::KernelSpec& spec, const HyperParams& hp,
                       const CvMode& mode = CvMode::exact()) {
    const int n = static_cast<int>(X.rows());
    if (k < 1 || k > n) throw std::domain_error("cv_score: requires 1 <= k <= n");

    if (mode.type == CvMode::Type::sampled) {
        if (mode.reps < 1) throw std::domain_error("cv_score: sampled mode needs reps >= 1");
        rng::Xoshiro256pp gen(rng::stream_seed(mode.seed, 0xC45C0));
        std::vector<int> idx(static_cast<std::size_t>(n));
        double total = 0.0;
        for (int rep = 0; rep < mode.reps; ++rep) {
            for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
            for (int i = 0; i < k; ++i) {  // partial Fisher-Yates: first k entries = test set
                const int j = i + static_cast<int>(gen.below(static_cast<std::uint64_t>(n - i)));
                std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
            }
            const int held = idx[gen.below(static_cast<std::uint64_t>(k))];
            std::vector<int> train(idx.begin() + k, idx.end());
            std::sort(train.begin(), train.end());
            total += detail::neg_log_pred_one(X, Y, train, held, spec, hp);
        }
        return total / static_cast<double>(mode.reps);
    }

    // Exact enumeration over all C(n, k) test subsets and all k held-out
    // choices within each.
    double budget = 1.0;
    for (int i = 0; i < k; ++i) {
        budget *= static_cast<double>(n - i) / static_cast<double>(i + 1);
    }
    budget *= static_cast<double>(k);
    if (budget > 1e5) {
        throw BudgetExceeded("cv_score: exact enumeration needs " +
                             std::to_string(budget) + " evaluations (budget 1e5)");
    }

    std::vector<int> subset(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) subset[static_cast<std::size_t>(i)] = i;
    double total = 0.0;
    long count = 0;
    for (;;) {
        std::vector<int> train;
        train.reserve(static_cast<std::size_t>(n - k));
        {
            std::size_t s = 0;
            for (int i = 0; i < n; ++i) {
                if (s < subset.size() && subset[s] == i) {
                    ++s;
                } else {
                    train.push_back(i);
                }
            }
        }
        for (int held : subset) {
            total += detail::neg_log_pred_one(X, Y, train, held, spec, hp);
            ++count;
        }
        // next combination in lexicographic order
        int pos = k - 1;
        while (pos >= 0 && subset[static_cast<std::size_t>(pos)] == n - k + pos) --pos;
        if (pos < 0) break;
        ++subset[static_cast<std::size_t>(pos)];
        for (int i = pos + 1; i < k; ++i) {
            subset[static_cast<std::size_t>(i)] = subset[static_cast<std::size_t>(i - 1)] + 1;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace gpdd::gp
