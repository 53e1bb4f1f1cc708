#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "gpdd/errors.hpp"
#include "gpdd/gp.hpp"
#include "gpdd/kernels.hpp"
#include "gpdd/rng.hpp"
#include "oracles.hpp"

namespace { constexpr double kPi = 3.141592653589793238462643383279502884; }

namespace gp = gpdd::gp;
namespace kernels = gpdd::kernels;
using gp::HyperParams;

namespace {

Eigen::MatrixXd random_matrix(int n, int d, std::uint64_t seed) {
    gpdd::rng::Xoshiro256pp gen(seed);
    Eigen::MatrixXd X(n, d);
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < n; ++i) X(i, j) = gen.gaussian();
    }
    return X;
}

Eigen::VectorXd random_vector(int n, std::uint64_t seed) {
    gpdd::rng::Xoshiro256pp gen(seed);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gen.gaussian();
    return v;
}

}  // namespace

TEST_CASE("free energy") {
    SECTION("single observation, unit everything") {
        Eigen::MatrixXd K(1, 1);
        K << 1.0;
        Eigen::VectorXd Y(1);
        Y << 1.0;
        // (1/2) log(4 pi) + 1/4
        CHECK(gp::free_energy(K, Y, HyperParams::fixed(1.0, 1.0)) ==
              Catch::Approx(1.5155121234846454).margin(1e-12));
    }
    SECTION("zero labels reduce to the volume terms") {
        const Eigen::MatrixXd X = random_matrix(6, 3, 1);
        const Eigen::MatrixXd K = kernels::gram(kernels::gaussian_kernel(), X);
        const Eigen::VectorXd Y = Eigen::VectorXd::Zero(6);
        const HyperParams hp = HyperParams::fixed(2.0, 0.5);
        const gp::RidgeFactor factor(K, hp.ridge());
        CHECK(gp::free_energy(K, Y, hp) ==
              Catch::Approx(0.5 * factor.logdet() -
                            3.0 * std::log(2.0 / (2.0 * kPi)))
                  .margin(1e-12));
    }
    SECTION("matches the Gaussian log-density oracle on random instances") {
        for (int n : {2, 5, 11, 20}) {
            const Eigen::MatrixXd X = random_matrix(n, 4, 100 + n);
            const Eigen::MatrixXd K = kernels::gram(kernels::gaussian_kernel(), X);
            const Eigen::VectorXd Y = random_vector(n, 200 + n);
            for (double lambda : {0.3, 1.0, 5.0}) {
                for (double gamma : {0.05, 1.0}) {
                    // -log N(Y; 0, K/lambda + gamma I)
                    Eigen::MatrixXd cov = K / lambda;
                    cov.diagonal().array() += gamma;
                    const double oracle = -oracles::gaussian_logpdf(
                        Y, Eigen::VectorXd::Zero(n), cov);
                    INFO("n = " << n << ", lambda = " << lambda << ", gamma = " << gamma);
                    REQUIRE(std::abs(gp::free_energy(K, Y, HyperParams::fixed(lambda, gamma)) -
                                     oracle) < 1e-10);
                }
            }
        }
    }
    SECTION("weight-space marginal equivalence for the linear kernel") {
        for (int n : {3, 7, 10}) {
            for (int d : {2, 5, 10}) {
                const Eigen::MatrixXd X = random_matrix(n, d, 300 + 10 * n + d);
                const Eigen::VectorXd Y = random_vector(n, 400 + n + d);
                const Eigen::MatrixXd K = kernels::gram(kernels::linear_kernel(), X);
                for (double lambda : {0.5, 2.0}) {
                    for (double gamma : {0.2, 1.0}) {
                        INFO("n = " << n << ", d = " << d << ", lambda = " << lambda
                                    << ", gamma = " << gamma);
                        REQUIRE(std::abs(gp::free_energy(K, Y, HyperParams::fixed(lambda, gamma)) -
                                         oracles::weight_space_neg_log_marginal(X, Y, lambda,
                                                                                gamma)) < 1e-8);
                    }
                }
            }
        }
    }
    SECTION("factorization failure on a broken Gram") {
        Eigen::MatrixXd K(2, 2);
        K << 1.0, 3.0, 3.0, 1.0;  // indefinite
        Eigen::VectorXd Y(2);
        Y << 1.0, -1.0;
        CHECK_THROWS_AS(gp::free_energy(K, Y, HyperParams::fixed(1.0, 1e-12)),
                        gpdd::FactorizationFailure);
    }
}

TEST_CASE("posterior predictive") {
    SECTION("prior reversion at k_x = 0") {
        const Eigen::MatrixXd K = Eigen::MatrixXd::Identity(3, 3);
        const Eigen::MatrixXd kx = Eigen::MatrixXd::Zero(3, 2);
        Eigen::MatrixXd Kx(2, 2);
        Kx << 1.0, 0.2, 0.2, 1.0;
        const Eigen::VectorXd Y = random_vector(3, 7);
        const auto pp = gp::posterior_predictive(K, kx, Kx, Y, HyperParams::fixed(2.0, 1.0));
        CHECK(pp.mean.isZero(0));
        CHECK(pp.raw_sigma.isApprox(Kx, 1e-14));
        CHECK(pp.cov.isApprox(Kx / 2.0, 1e-14));
    }
    SECTION("one training point, linear kernel in one dimension") {
        // X = [1], Y = [1], test x = 2, lambda = gamma = 1
        Eigen::MatrixXd K(1, 1), kx(1, 1), Kx(1, 1);
        K << 1.0;
        kx << 2.0;
        Kx << 4.0;
        Eigen::VectorXd Y(1);
        Y << 1.0;
        const auto pp = gp::posterior_predictive(K, kx, Kx, Y, HyperParams::fixed(1.0, 1.0));
        CHECK(pp.mean(0) == Catch::Approx(1.0).margin(1e-14));
        CHECK(pp.raw_sigma(0, 0) == Catch::Approx(2.0).margin(1e-14));
        CHECK(pp.cov(0, 0) == Catch::Approx(2.0).margin(1e-14));
    }
    SECTION("interpolation limit as gamma -> 0+") {
        const Eigen::MatrixXd X = random_matrix(5, 8, 17);
        const Eigen::MatrixXd K = kernels::gram(kernels::gaussian_kernel(), X);
        const Eigen::VectorXd Y = random_vector(5, 18);
        const auto pp = gp::posterior_predictive(K, K, K, Y, HyperParams::fixed(1.0, 1e-10));
        CHECK((pp.mean - Y).lpNorm<Eigen::Infinity>() < 1e-6);
    }
    SECTION("covariance is PSD and obeys the trace bound") {
        for (int trial = 0; trial < 20; ++trial) {
            const auto seed = static_cast<std::uint64_t>(trial);
            const Eigen::MatrixXd X = random_matrix(8, 3, 1000 + seed);
            const Eigen::MatrixXd Z = random_matrix(4, 3, 2000 + seed);
            const auto spec = trial % 2 == 0 ? kernels::gaussian_kernel()
                                             : kernels::exponential_kernel();
            const Eigen::MatrixXd K = kernels::gram(spec, X);
            const Eigen::MatrixXd kx = kernels::cross_gram(spec, X, Z);
            const Eigen::MatrixXd Kx = kernels::gram(spec, Z);
            const Eigen::VectorXd Y = random_vector(8, 3000 + seed);
            const auto pp =
                gp::posterior_predictive(K, kx, Kx, Y, HyperParams::fixed(0.7, 0.3));
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pp.cov);
            INFO("trial " << trial);
            REQUIRE(es.eigenvalues().minCoeff() > -1e-10);
            REQUIRE(pp.raw_sigma.trace() <= Kx.diagonal().sum() + 1e-12);
        }
    }
}

TEST_CASE("posterior predictive losses") {
    SECTION("orthogonal test point") {
        const Eigen::MatrixXd K = Eigen::MatrixXd::Identity(2, 2);
        const Eigen::MatrixXd kx = Eigen::MatrixXd::Zero(2, 1);
        Eigen::MatrixXd Kx(1, 1);
        Kx << 0.5;
        Eigen::VectorXd Y(2), y(1);
        Y << 0.3, -0.7;
        y << 1.0;
        const HyperParams hp = HyperParams::fixed(1.0, 1.0);
        const auto pp = gp::posterior_predictive(K, kx, Kx, Y, hp);
        CHECK(gp::ppl2(pp, y, hp) == Catch::Approx(1.5).margin(1e-14));
    }
    SECTION("one-point example continues to ppl2 = 2") {
        Eigen::MatrixXd K(1, 1), kx(1, 1), Kx(1, 1);
        K << 1.0;
        kx << 2.0;
        Kx << 4.0;
        Eigen::VectorXd Y(1), y(1);
        Y << 1.0;
        y << 1.0;
        const HyperParams hp = HyperParams::fixed(1.0, 1.0);
        const auto pp = gp::posterior_predictive(K, kx, Kx, Y, hp);
        CHECK(gp::ppl2(pp, y, hp) == Catch::Approx(2.0).margin(1e-14));
    }
    SECTION("ppnll = ppl2/(2 gamma) + (m/2) log(2 pi gamma), exactly") {
        const Eigen::MatrixXd X = random_matrix(9, 4, 50);
        const Eigen::MatrixXd Z = random_matrix(5, 4, 51);
        const auto spec = kernels::gaussian_kernel();
        const Eigen::MatrixXd K = kernels::gram(spec, X);
        const Eigen::MatrixXd kx = kernels::cross_gram(spec, X, Z);
        const Eigen::MatrixXd Kx = kernels::gram(spec, Z);
        const Eigen::VectorXd Y = random_vector(9, 52);
        const Eigen::VectorXd y = random_vector(5, 53);
        for (double gamma : {0.05, 0.8, 3.0}) {
            const HyperParams hp = HyperParams::fixed(1.3, gamma);
            const auto pp = gp::posterior_predictive(K, kx, Kx, Y, hp);
            const double expected = gp::ppl2(pp, y, hp) / (2.0 * gamma) +
                                    2.5 * std::log(2.0 * kPi * gamma);
            INFO("gamma = " << gamma);
            REQUIRE(gp::ppnll(pp, y, hp) == Catch::Approx(expected).margin(1e-12));
        }
    }
    SECTION("ppl2 = 2, gamma = 1, m = 1 gives the frozen ppnll") {
        // 1 + (1/2) log(2 pi)
        Eigen::MatrixXd K(1, 1), kx(1, 1), Kx(1, 1);
        K << 1.0;
        kx << 2.0;
        Kx << 4.0;
        Eigen::VectorXd Y(1), y(1);
        Y << 1.0;
        y << 1.0;
        const HyperParams hp = HyperParams::fixed(1.0, 1.0);
        const auto pp = gp::posterior_predictive(K, kx, Kx, Y, hp);
        CHECK(gp::ppnll(pp, y, hp) == Catch::Approx(1.9189385332046727).margin(1e-12));
    }
    SECTION("tempered ppl2: difference across gamma at fixed mu is (g1-g2)/mu tr(Sigma_mu)") {
        const Eigen::MatrixXd X = random_matrix(10, 6, 60);
        const Eigen::MatrixXd Z = random_matrix(4, 6, 61);
        const auto spec = kernels::linear_kernel();
        const Eigen::MatrixXd K = kernels::gram(spec, X);
        const Eigen::MatrixXd kx = kernels::cross_gram(spec, X, Z);
        const Eigen::MatrixXd Kx = kernels::gram(spec, Z);
        const Eigen::VectorXd Y = random_vector(10, 62);
        const Eigen::VectorXd y = random_vector(4, 63);
        const double mu = 0.4;
        const HyperParams hp1 = HyperParams::tempered(mu, 0.1);
        const HyperParams hp2 = HyperParams::tempered(mu, 0.2);
        const auto pp1 = gp::posterior_predictive(K, kx, Kx, Y, hp1);
        const auto pp2 = gp::posterior_predictive(K, kx, Kx, Y, hp2);
        // mean is gamma-invariant at fixed mu
        CHECK(pp1.mean.isApprox(pp2.mean, 1e-12));
        const double diff = gp::ppl2(pp1, y, hp1) - gp::ppl2(pp2, y, hp2);
        CHECK(diff == Catch::Approx((0.1 - 0.2) / mu * pp1.raw_sigma.trace()).margin(1e-10));
    }
}

TEST_CASE("optimally tempered ppnll") {
    SECTION("frozen example") {
        const auto r = gp::optimal_ppnll(0.5, 1.0, 1, 1.0);
        CHECK(r.gamma_star == Catch::Approx(0.5).margin(1e-15));
        // (1/2)(1 + log pi) + 1/2
        CHECK(r.value == Catch::Approx(1.5723649429247001).margin(1e-12));
    }
    SECTION("log term vanishes at mse = 1/(2 pi)") {
        const auto r = gp::optimal_ppnll(1.0 / (2.0 * kPi), 0.0, 1, 1.0);
        CHECK(r.value == Catch::Approx(0.5).margin(1e-12));
    }
    SECTION("per-coordinate mse") {
        CHECK(gp::optimal_ppnll(2.0, 0.0, 2, 1.0).gamma_star == Catch::Approx(1.0));
    }
    SECTION("gamma* is a stationary point of the tempered ppnll") {
        const double mse = 0.37, tr = 0.9, mu = 0.8;
        auto tempered_ppnll = [&](double gamma) {
            return mse / (2.0 * gamma) + tr / (2.0 * mu) +
                   0.5 * std::log(2.0 * kPi * gamma);
        };
        const double gstar = gp::optimal_ppnll(mse, tr, 1, mu).gamma_star;
        const double h = 1e-6;
        const double deriv = (tempered_ppnll(gstar + h) - tempered_ppnll(gstar - h)) / (2 * h);
        CHECK(std::abs(deriv) < 1e-6);
        // and the value formula agrees with the objective at gamma*
        CHECK(gp::optimal_ppnll(mse, tr, 1, mu).value ==
              Catch::Approx(tempered_ppnll(gstar)).margin(1e-12));
    }
    CHECK_THROWS_AS(gp::optimal_ppnll(0.0, 1.0, 1, 1.0), std::domain_error);
}

TEST_CASE("log predictive density") {
    SECTION("empty training set is the prior predictive") {
        Eigen::MatrixXd K(0, 0), kx(0, 1), Kx(1, 1);
        Kx << 1.0;
        Eigen::VectorXd Y(0), y(1);
        y << 1.0;
        CHECK(gp::log_predictive_density(K, kx, Kx, Y, y, HyperParams::fixed(1.0, 1.0)) ==
              Catch::Approx(-1.5155121234846454).margin(1e-12));
    }
    SECTION("chain consistency: log p(y1, y2) = log p(y1) + log p(y2 | y1)") {
        const auto spec = kernels::gaussian_kernel();
        const Eigen::MatrixXd X = random_matrix(6, 3, 70);
        const Eigen::MatrixXd Z = random_matrix(2, 3, 71);
        const Eigen::VectorXd Y = random_vector(6, 72);
        const Eigen::VectorXd y = random_vector(2, 73);
        const HyperParams hp = HyperParams::fixed(1.7, 0.4);

        const double joint = gp::log_predictive_density(
            kernels::gram(spec, X), kernels::cross_gram(spec, X, Z),
            kernels::gram(spec, Z), Y, y, hp);

        const Eigen::MatrixXd Z1 = Z.topRows(1);
        const double first = gp::log_predictive_density(
            kernels::gram(spec, X), kernels::cross_gram(spec, X, Z1),
            kernels::gram(spec, Z1), Y, y.head(1), hp);

        Eigen::MatrixXd X2(7, 3);
        X2 << X, Z1;
        Eigen::VectorXd Y2(7);
        Y2 << Y, y.head(1);
        const Eigen::MatrixXd Z2 = Z.bottomRows(1);
        const double second = gp::log_predictive_density(
            kernels::gram(spec, X2), kernels::cross_gram(spec, X2, Z2),
            kernels::gram(spec, Z2), Y2, y.tail(1), hp);

        CHECK(joint == Catch::Approx(first + second).margin(1e-10));
    }
}

TEST_CASE("cross-validation scores") {
    const auto spec = kernels::linear_kernel();
    const HyperParams hp = HyperParams::fixed(1.0, 0.7);

    SECTION("k = n averages prior predictive scores") {
        const Eigen::MatrixXd X = random_matrix(4, 2, 80);
        const Eigen::VectorXd Y = random_vector(4, 81);
        const double sn = gp::cv_score(X, Y, 4, spec, hp);
        double expected = 0.0;
        for (int i = 0; i < 4; ++i) {
            Eigen::MatrixXd K(0, 0), kx(0, 1), Kx(1, 1);
            Kx << kernels::eval(spec, X.row(i), X.row(i));
            Eigen::VectorXd y(1);
            y << Y(i);
            expected -= gp::log_predictive_density(K, kx, Kx, Eigen::VectorXd(0), y, hp);
        }
        CHECK(sn == Catch::Approx(expected / 4.0).margin(1e-12));
    }

    SECTION("free energy decomposes into leave-k-out scores") {
        for (int n : {2, 3, 4, 5}) {
            const Eigen::MatrixXd X = random_matrix(n, 3, 90 + n);
            const Eigen::VectorXd Y = random_vector(n, 95 + n);
            const auto kspec = n % 2 == 0 ? kernels::linear_kernel()
                                          : kernels::gaussian_kernel();
            const Eigen::MatrixXd K = kernels::gram(kspec, X);
            double sum = 0.0;
            for (int k = 1; k <= n; ++k) sum += gp::cv_score(X, Y, k, kspec, hp);
            INFO("n = " << n << ", kernel = " << kspec.id());
            REQUIRE(std::abs(gp::free_energy(K, Y, hp) - sum) < 1e-8);
        }
    }

    SECTION("sampled mode approaches the exact score") {
        const Eigen::MatrixXd X = random_matrix(6, 2, 83);
        const Eigen::VectorXd Y = random_vector(6, 84);
        const double exact = gp::cv_score(X, Y, 3, spec, hp);
        const double sampled = gp::cv_score(X, Y, 3, spec, hp, gp::CvMode::sampled(4000, 11));
        CHECK(std::abs(exact - sampled) < 0.05);
    }

    SECTION("budget error") {
        const Eigen::MatrixXd X = random_matrix(60, 2, 85);
        const Eigen::VectorXd Y = random_vector(60, 86);
        CHECK_THROWS_AS(gp::cv_score(X, Y, 30, spec, hp), gpdd::BudgetExceeded);
    }

    SECTION("k out of range") {
        const Eigen::MatrixXd X = random_matrix(4, 2, 87);
        const Eigen::VectorXd Y = random_vector(4, 88);
        CHECK_THROWS_AS(gp::cv_score(X, Y, 0, spec, hp), std::domain_error);
        CHECK_THROWS_AS(gp::cv_score(X, Y, 5, spec, hp), std::domain_error);
    }
}
