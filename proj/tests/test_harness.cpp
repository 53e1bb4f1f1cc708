#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdlib>

#include "gpdd/errors.hpp"
#include "gpdd/harness.hpp"
#include "gpdd/validate.hpp"

namespace harness = gpdd::harness;
namespace rmt = gpdd::rmt;
using gpdd::ConfigError;
using harness::ExperimentConfig;
using harness::json;

namespace {

json base_config() {
    return json{
        {"name", "unit"},
        {"kernel", {{"family", "linear"}}},
        {"metric", "free-energy"},
        {"n", 40},
        {"d_grid", {10, 20, 40, 80}},
        {"gamma", 0.5},
        {"lambda_policy", {{"type", "fixed"}, {"value", 1.0}}},
        {"reps", 4},
        {"seed", 7},
    };
}

struct ThreadsGuard {
    explicit ThreadsGuard(const char* value) { setenv("GPDD_THREADS", value, 1); }
    ~ThreadsGuard() { unsetenv("GPDD_THREADS"); }
};

}  // namespace

TEST_CASE("config parsing") {
    SECTION("round trip of the base config") {
        const ExperimentConfig cfg = harness::parse_config(base_config());
        CHECK(cfg.name == "unit");
        CHECK(cfg.n_grid == std::vector<int>{40});
        CHECK(cfg.d_grid == std::vector<int>{10, 20, 40, 80});
        CHECK(cfg.gammas == std::vector<double>{0.5});
        CHECK(cfg.reps == 4);
    }
    SECTION("unknown keys are an error at every level") {
        json j = base_config();
        j["typo"] = 1;
        CHECK_THROWS_AS(harness::parse_config(j), ConfigError);
        j = base_config();
        j["kernel"]["params"] = {{"bogus", 1.0}};
        CHECK_THROWS_AS(harness::parse_config(j), ConfigError);
        j = base_config();
        j["lambda_policy"]["extra"] = 2;
        CHECK_THROWS_AS(harness::parse_config(j), ConfigError);
    }
    SECTION("exactly one dimension axis") {
        json j = base_config();
        j["c_grid"] = {0.5, 1.0};
        CHECK_THROWS_AS(harness::parse_config(j), ConfigError);
        j.erase("d_grid");
        CHECK_NOTHROW(harness::parse_config(j));
        j.erase("c_grid");
        CHECK_THROWS_AS(harness::parse_config(j), ConfigError);
    }
    SECTION("xi scaling needs an n grid and computes d = 2^{10(1-xi)} n^xi") {
        json j = base_config();
        j.erase("d_grid");
        j.erase("n");
        j["xi_scaling"] = {{"xi", 0.5}};
        j["n_grid"] = {400, 900};
        const ExperimentConfig cfg = harness::parse_config(j);
        const auto grid_d = [&](int n) {
            return static_cast<int>(std::lround(std::pow(2.0, 5.0) * std::sqrt(n)));
        };
        const auto records_dims = harness::detail::build_grid(cfg);
        REQUIRE(records_dims.size() == 2);
        CHECK(records_dims[0].d == grid_d(400));
        CHECK(records_dims[1].d == grid_d(900));
    }
    SECTION("reps below 2 rejected") {
        json j = base_config();
        j["reps"] = 1;
        CHECK_THROWS_AS(harness::parse_config(j), ConfigError);
    }
    SECTION("ppnll-opt requires the tempered policy") {
        json j = base_config();
        j["metric"] = "ppnll-opt";
        CHECK_THROWS_AS(harness::parse_config(j), ConfigError);
        j["lambda_policy"] = {{"type", "tempered"}, {"mu", 0.1}};
        CHECK_NOTHROW(harness::parse_config(j));
    }
}

TEST_CASE("aggregate") {
    // 100 values with sample sd exactly 1: ci half-width 1.96/10
    std::vector<double> v(100);
    const double a = std::sqrt(99.0 / 100.0);
    for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i < 50 ? a : -a;
    const auto agg = harness::aggregate(v);
    CHECK(agg.mean == Catch::Approx(0.0).margin(1e-15));
    CHECK(agg.ci_half_width == Catch::Approx(0.196).margin(1e-12));
}

TEST_CASE("minimize_scalar") {
    SECTION("parabola") {
        const auto [argmin, min] =
            harness::minimize_scalar([](double x) { return (x - 2.0) * (x - 2.0); }, 0.0, 10.0);
        CHECK(argmin == Catch::Approx(2.0).margin(1e-8));
        CHECK(min == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("limiting free energy over gamma reproduces optimal_gamma") {
        const rmt::RmtContext ctx = rmt::make_context(1.0, 0.0, 1.0, 1.0);
        const auto [argmin, min] = harness::minimize_scalar(
            [&](double g) { return rmt::limiting_free_energy(1.0 / g, g, ctx); }, 1e-4, 10.0);
        CHECK(argmin == Catch::Approx(0.6180339887).margin(1e-6));
    }
    SECTION("limiting free energy over lambda reproduces optimal_lambda") {
        const rmt::RmtContext ctx = rmt::make_scaled_context(1.0, 0.0, 1.0);
        const auto [argmin, min] = harness::minimize_scalar(
            [&](double l) { return rmt::limiting_free_energy(l, 0.5, ctx); }, 1e-4, 100.0);
        CHECK(argmin == Catch::Approx(8.0 / 3.0).margin(1e-6));
    }
}

TEST_CASE("lambda resolution") {
    SECTION("fixed and tempered") {
        const auto fixed = harness::resolve_lambda(harness::LambdaPolicy::fixed(0.25), 0.1,
                                                   gpdd::kernels::linear_kernel(), 1.0);
        CHECK(fixed.lambda == 0.25);
        const auto tempered = harness::resolve_lambda(harness::LambdaPolicy::tempered(0.02),
                                                      0.1, gpdd::kernels::linear_kernel(), 1.0);
        CHECK(tempered.lambda == Catch::Approx(0.2).margin(1e-15));
    }
    SECTION("optimal for the linear kernel equals the closed form") {
        const auto r = harness::resolve_lambda(harness::LambdaPolicy::optimal(), 0.5,
                                               gpdd::kernels::linear_kernel(), 1.0);
        CHECK(r.lambda == Catch::Approx(8.0 / 3.0).margin(1e-12));
    }
    SECTION("plug-in fixed point is self-consistent for the gaussian kernel") {
        const auto kernel = gpdd::kernels::gaussian_kernel();
        const auto co = gpdd::kernels::coefficients(kernel, 1.0);
        for (double c : {0.5, 1.0, 2.0}) {
            for (double gamma : {0.1, 0.5}) {
                const auto r = harness::resolve_lambda(harness::LambdaPolicy::optimal(),
                                                       gamma, kernel, c);
                const double again = rmt::optimal_lambda(
                    gamma, rmt::make_scaled_context(co.alpha, co.beta / r.lambda, c));
                INFO("c = " << c << ", gamma = " << gamma);
                REQUIRE(std::abs(again - r.lambda) / r.lambda < 1e-12);
            }
        }
    }
    SECTION("no optimal lambda at warm temperatures") {
        CHECK_THROWS_AS(harness::resolve_lambda(harness::LambdaPolicy::optimal(), 1.5,
                                                gpdd::kernels::linear_kernel(), 1.0),
                        gpdd::NoOptimalLambda);
        CHECK_THROWS_AS(harness::resolve_lambda(harness::LambdaPolicy::optimal(), 1.0,
                                                gpdd::kernels::gaussian_kernel(), 1.0),
                        gpdd::NoOptimalLambda);
    }
    SECTION("lambda-scaled mode transforms the kernel") {
        const auto r = harness::resolve_lambda(
            harness::LambdaPolicy::optimal(harness::LambdaPolicy::OptimalMode::lambda_scaled),
            0.5, gpdd::kernels::linear_kernel(), 1.0);
        CHECK(r.kernel.eta == Catch::Approx(8.0 / 3.0).margin(1e-12));
        CHECK_THROWS_AS(
            harness::resolve_lambda(
                harness::LambdaPolicy::optimal(harness::LambdaPolicy::OptimalMode::lambda_scaled),
                0.5, gpdd::kernels::gaussian_kernel(), 1.0),
            gpdd::NotLambdaScalable);
    }
}

TEST_CASE("run_sweep") {
    SECTION("one record per grid point, resolved lambda recorded") {
        json j = base_config();
        j["gamma"] = {0.25, 0.5};
        j["lambda_policy"] = {{"type", "optimal"}};
        const auto records = harness::run_sweep(harness::parse_config(j));
        REQUIRE(records.size() == 8);
        for (const auto& rec : records) {
            INFO("d = " << rec.d << ", gamma = " << rec.gamma);
            REQUIRE(rec.error.empty());
            REQUIRE(rec.reps == 4);
            const double expect = rmt::optimal_lambda(
                rec.gamma, rmt::make_scaled_context(1.0, 0.0, rec.c));
            REQUIRE(rec.lambda == Catch::Approx(expect).epsilon(1e-14));
            REQUIRE(std::isfinite(rec.mean));
            REQUIRE(rec.ci_half_width >= 0.0);
        }
    }
    SECTION("NoOptimalLambda points become error records, others proceed") {
        json j = base_config();
        j["gamma"] = {0.5, 1.5};
        j["lambda_policy"] = {{"type", "optimal"}};
        const auto records = harness::run_sweep(harness::parse_config(j));
        REQUIRE(records.size() == 8);
        int errors = 0;
        for (const auto& rec : records) {
            if (!rec.error.empty()) {
                ++errors;
                CHECK(rec.gamma == 1.5);
            }
        }
        CHECK(errors == 4);
    }
    SECTION("deterministic across thread counts, byte-identical CSV") {
        json j = base_config();
        j["metric"] = "ppl2";
        j["lambda_policy"] = {{"type", "tempered"}, {"mu", 0.1}};
        j["test_points"] = 20;
        const ExperimentConfig cfg = harness::parse_config(j);
        std::string csv1, csv3;
        {
            ThreadsGuard guard("1");
            csv1 = harness::records_to_csv(harness::run_sweep(cfg));
        }
        {
            ThreadsGuard guard("3");
            csv3 = harness::records_to_csv(harness::run_sweep(cfg));
        }
        CHECK(csv1 == csv3);
        CHECK(!csv1.empty());
    }
}

TEST_CASE("sweeps over the remaining data and grid modes") {
    SECTION("xi scaling drives both n and d") {
        json j{
            {"name", "xi"},
            {"kernel", {{"family", "linear"}}},
            {"metric", "free-energy"},
            {"xi_scaling", {{"xi", 0.5}}},
            {"n_grid", {100, 400}},
            {"gamma", 0.1},
            {"lambda_policy", {{"type", "optimal"}}},
            {"reps", 3},
            {"seed", 2},
        };
        const auto records = harness::run_sweep(harness::parse_config(j));
        REQUIRE(records.size() == 2);
        CHECK(records[0].n == 100);
        CHECK(records[0].d == 320);  // 2^5 * sqrt(100)
        CHECK(records[1].n == 400);
        CHECK(records[1].d == 640);
        for (const auto& r : records) REQUIRE(std::isfinite(r.mean));
    }
    SECTION("misspecified labels") {
        json j{
            {"name", "misspec"},
            {"kernel", {{"family", "linear"}}},
            {"metric", "free-energy"},
            {"n", 50},
            {"d_grid", {25, 50}},
            {"gamma", 0.1},
            {"lambda_policy", {{"type", "optimal"}}},
            {"reps", 3},
            {"seed", 3},
            {"data", {{"type", "misspecified"}, {"theta", "growing"}, {"noise_sd", 1.0}}},
        };
        const auto records = harness::run_sweep(harness::parse_config(j));
        REQUIRE(records.size() == 2);
        for (const auto& r : records) REQUIRE(std::isfinite(r.mean));
    }
    SECTION("csv-backed sweep subsamples rows and slices columns") {
        const auto full =
            gpdd::data::synth_gaussian(40, 6, gpdd::data::CovSpec::identity(), 1.0, 9);
        gpdd::data::save_csv(full, "/tmp/gpdd_sweep_source.csv");
        json j{
            {"name", "csv"},
            {"kernel", {{"family", "gaussian"}}},
            {"metric", "free-energy"},
            {"n", 20},
            {"d_grid", {3, 6}},
            {"gamma", 0.5},
            {"lambda_policy", {{"type", "fixed"}, {"value", 1.0}}},
            {"reps", 4},
            {"seed", 4},
            {"data", {{"type", "csv"}, {"path", "/tmp/gpdd_sweep_source.csv"}, {"label", "label"}}},
        };
        const auto records = harness::run_sweep(harness::parse_config(j));
        REQUIRE(records.size() == 2);
        for (const auto& r : records) REQUIRE(std::isfinite(r.mean));
        // asking for more features than the file carries is a config error
        json bad = j;
        bad["d_grid"] = {12};
        CHECK_THROWS_AS(harness::run_sweep(harness::parse_config(bad)), std::runtime_error);
        std::remove("/tmp/gpdd_sweep_source.csv");
    }
    SECTION("augmented sweep draws, whitens and extends the base") {
        json j{
            {"name", "aug"},
            {"kernel", {{"family", "linear"}}},
            {"metric", "free-energy"},
            {"n", 60},
            {"d_grid", {10, 20, 40}},
            {"gamma", 0.1},
            {"lambda_policy", {{"type", "fixed"}, {"value", 1.0}}},
            {"reps", 3},
            {"seed", 5},
            {"data",
             {{"type", "augmented"}, {"base_d", 10}, {"mode", "copied"}, {"whiten", true}}},
        };
        const auto records = harness::run_sweep(harness::parse_config(j));
        REQUIRE(records.size() == 3);
        for (const auto& r : records) REQUIRE(std::isfinite(r.mean));
    }
}

TEST_CASE("remaining validation suites pass unperturbed") {
    for (const char* suite : {"rmt", "kernels"}) {
        const auto results = harness::validate(suite);
        INFO(suite);
        for (const auto& r : results) {
            INFO(r.suite << "/" << r.name << " observed " << r.observed << " note " << r.note);
            REQUIRE(r.pass);
        }
    }
}

TEST_CASE("empirical_vs_limit") {
    json j = base_config();
    j["n"] = 300;
    j["d_grid"] = {150, 300, 600};
    j["gamma"] = 1.0;
    j["reps"] = 8;
    const auto cmp = harness::empirical_vs_limit(harness::parse_config(j));
    REQUIRE(cmp.size() == 3);
    for (const auto& c : cmp) {
        INFO("c = " << c.c);
        CHECK(std::isfinite(c.limit_value));
        CHECK(c.abs_dev < 0.1);
    }
}

TEST_CASE("validation harness") {
    SECTION("module suites pass on a correct build") {
        // the full "all" suite runs in the CLI test and acceptance; here the
        // cheap ones keep the unit suite fast
        for (const char* suite : {"specfun", "gp", "data"}) {
            const auto results = harness::validate(suite);
            INFO(suite);
            for (const auto& r : results) {
                INFO(r.suite << "/" << r.name << " observed " << r.observed << " note "
                             << r.note);
                REQUIRE(r.pass);
            }
        }
    }
    SECTION("a perturbed optimal-lambda formula is caught by name") {
        harness::ValidateOptions options;
        options.lambda_star_scale = 1.01;
        const auto results = harness::validate("rmt", options);
        bool found_named_failure = false;
        for (const auto& r : results) {
            if (r.name == "optimal-lambda-minimizer-agreement") {
                found_named_failure = !r.pass;
            }
        }
        CHECK(found_named_failure);
    }
    SECTION("unknown suite") {
        CHECK_THROWS_AS(harness::validate("bogus"), ConfigError);
    }
}

TEST_CASE("emit") {
    std::vector<harness::SweepRecord> records;
    harness::SweepRecord r;
    r.metric = "free-energy";
    r.kernel = "linear";
    r.n = 10;
    r.d = 5;
    r.c = 0.5;
    r.gamma = 0.1;
    r.lambda = 1.0;
    r.reps = 100;
    r.mean = 1.25;
    r.ci_half_width = 0.196;
    r.seed = 3;
    records.push_back(r);
    r.d = 10;
    r.c = 1.0;
    r.mean = 1.5;
    records.push_back(r);
    r.d = 20;
    r.c = 2.0;
    r.error = "no optimal lambda";
    records.push_back(r);

    SECTION("csv schema") {
        const std::string csv = harness::records_to_csv(records);
        CHECK(csv.rfind("metric,kernel,n,d,c,gamma,lambda,reps,mean,ci_half_width,seed,error\n",
                        0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
        CHECK(csv.find("free-energy,linear,10,5,0.5,0.10000000000000001,1,100,1.25,"
                       "0.19600000000000001,3,\n") != std::string::npos);
        // error rows leave lambda/mean/ci empty
        CHECK(csv.find(",,100,,,3,no optimal lambda\n") != std::string::npos);
    }
    SECTION("svg is well-formed with one polyline per series") {
        const std::string svg = harness::records_to_svg(records);
        CHECK(svg.rfind("<?xml", 0) == 0);
        CHECK(svg.find("<svg xmlns=\"http://www.w3.org/2000/svg\"") != std::string::npos);
        const auto polylines =
            [&] {
                std::size_t n = 0, pos = 0;
                while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
                    ++n;
                    pos += 9;
                }
                return n;
            }();
        CHECK(polylines == 1);  // single gamma series
        CHECK(svg.find("</svg>") != std::string::npos);
    }
    SECTION("files on disk") {
        harness::emit(records, "/tmp/gpdd_emit_test.csv", "/tmp/gpdd_emit_test.svg");
        std::ifstream csv("/tmp/gpdd_emit_test.csv");
        REQUIRE(csv.good());
        std::string header;
        std::getline(csv, header);
        CHECK(header == "metric,kernel,n,d,c,gamma,lambda,reps,mean,ci_half_width,seed,error");
        std::ifstream svg("/tmp/gpdd_emit_test.svg");
        REQUIRE(svg.good());
        std::remove("/tmp/gpdd_emit_test.csv");
        std::remove("/tmp/gpdd_emit_test.svg");
    }
}
