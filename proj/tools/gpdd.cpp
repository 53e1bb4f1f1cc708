// gpdd: Gaussian process uncertainty metrics at finite n, their
// proportional-regime limits, and the experiment sweeps behind them.
//
// Exit codes: 0 success, 1 validation failure, 2 usage/config error,
// 3 numerical failure.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "gpdd/data.hpp"
#include "gpdd/errors.hpp"
#include "gpdd/gp.hpp"
#include "gpdd/harness.hpp"
#include "gpdd/kernels.hpp"
#include "gpdd/rmt.hpp"
#include "gpdd/validate.hpp"

namespace {

using namespace gpdd;

// Kernel ids: "linear", "gaussian", "exponential", or parameterized forms
// like "polynomial:c0=1,degree=2", "matern:nu=1.5", "gaussian:eta=0.5".
kernels::KernelSpec parse_kernel_id(const std::string& id) {
    kernels::KernelSpec spec;
    const auto colon = id.find(':');
    const std::string family = id.substr(0, colon);
    if (family == "linear") spec.family = kernels::Family::linear;
    else if (family == "polynomial") spec.family = kernels::Family::polynomial;
    else if (family == "exponential") spec.family = kernels::Family::exponential;
    else if (family == "gaussian") spec.family = kernels::Family::gaussian;
    else if (family == "multiquadric") spec.family = kernels::Family::multiquadric;
    else if (family == "inverse-multiquadric") spec.family = kernels::Family::inverse_multiquadric;
    else if (family == "matern") spec.family = kernels::Family::matern;
    else throw ConfigError("unknown kernel family '" + family + "'");
    if (colon != std::string::npos) {
        std::string rest = id.substr(colon + 1);
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const std::string item = rest.substr(0, comma);
            rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
            const auto eq = item.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("kernel parameter '" + item + "' is not key=value");
            }
            const std::string key = item.substr(0, eq);
            const double value = std::stod(item.substr(eq + 1));
            if (key == "c0") spec.c0 = value;
            else if (key == "degree" || key == "p") spec.degree = value;
            else if (key == "nu") spec.nu = value;
            else if (key == "eta") spec.eta = value;
            else throw ConfigError("unknown kernel parameter '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

int run_sweep_command(const std::string& config_path, const std::string& out_csv,
                      const std::string& out_svg) {
    const harness::ExperimentConfig cfg = harness::load_config(config_path);
    const auto records = harness::run_sweep(cfg);
    harness::emit(records, out_csv, out_svg);
    std::printf("%zu records -> %s\n", records.size(), out_csv.c_str());
    return 0;
}

int run_limits_command(const std::string& kernel_id, double c_min, double c_max,
                       int points, double gamma, double lambda, bool optimal_lambda,
                       const std::string& out_csv) {
    if (!(c_min > 0.0) || !(c_max >= c_min) || points < 1) {
        throw ConfigError("limits: need 0 < c-min <= c-max and points >= 1");
    }
    const kernels::KernelSpec kernel = parse_kernel_id(kernel_id);
    const kernels::Coefficients co = kernels::coefficients(kernel, 1.0);
    std::FILE* out = std::fopen(out_csv.c_str(), "wb");
    if (!out) throw ParseError("limits: cannot write '" + out_csv + "'");
    std::fprintf(out, "kernel,c,gamma,lambda,f_infinity,error\n");
    for (int i = 0; i < points; ++i) {
        const double c =
            points == 1 ? c_min
                        : c_min * std::pow(c_max / c_min, static_cast<double>(i) / (points - 1));
        std::string error;
        double lam = lambda;
        double value = 0.0;
        try {
            if (optimal_lambda) {
                lam = harness::optimal_lambda_plugin(co.alpha, co.beta, gamma, c);
            }
            const rmt::RmtContext ctx = rmt::make_context(co.alpha, co.beta, c, lam * gamma);
            value = rmt::limiting_free_energy(lam, gamma, ctx);
        } catch (const NoOptimalLambda& e) {
            error = e.what();
        }
        if (error.empty()) {
            std::fprintf(out, "%s,%.17g,%.17g,%.17g,%.17g,\n", kernel.id().c_str(), c,
                         gamma, lam, value);
        } else {
            for (char& ch : error) {
                if (ch == ',' || ch == '\n') ch = ';';
            }
            std::fprintf(out, "%s,%.17g,%.17g,,,%s\n", kernel.id().c_str(), c, gamma,
                         error.c_str());
        }
    }
    std::fclose(out);
    std::printf("%d limit points -> %s\n", points, out_csv.c_str());
    return 0;
}

int run_optimal_command(const std::string& which, const std::string& kernel_id, double c,
                        double mu, double gamma, bool have_mu, bool have_gamma) {
    const kernels::KernelSpec kernel = parse_kernel_id(kernel_id);
    if (which == "gamma") {
        if (!have_mu) throw ConfigError("optimal gamma requires --mu");
        const kernels::Coefficients co = kernels::coefficients(kernel, 1.0);
        const double g = rmt::optimal_gamma(mu, rmt::make_context(co.alpha, co.beta, c, mu));
        std::printf("%.17g\n", g);
        return 0;
    }
    if (which == "lambda") {
        if (!have_gamma) throw ConfigError("optimal lambda requires --gamma");
        const auto resolved =
            harness::resolve_lambda(harness::LambdaPolicy::optimal(), gamma, kernel, c);
        std::printf("%.17g\n", resolved.lambda);
        return 0;
    }
    throw ConfigError("optimal: expected 'gamma' or 'lambda', got '" + which + "'");
}

int run_whiten_command(const std::string& input, const std::string& label,
                       const std::string& output) {
    const data::Dataset raw = data::load_csv(input, label);
    const data::Dataset white = data::whiten(raw);
    data::save_csv(white, output);
    std::printf("whitened %d rows: %d of %d features retained -> %s\n", white.n(),
                white.d(), raw.d(), output.c_str());
    return 0;
}

int run_augment_command(const std::string& input, const std::string& label,
                        const std::string& mode_name, int target_d, std::uint64_t seed,
                        const std::string& output) {
    data::AugmentMode mode;
    if (mode_name == "gaussian") mode = data::AugmentMode::gaussian;
    else if (mode_name == "copied") mode = data::AugmentMode::copied;
    else if (mode_name == "padded") mode = data::AugmentMode::padded;
    else throw ConfigError("augment: unknown mode '" + mode_name + "'");
    const data::Dataset ds = data::load_csv(input, label);
    const data::Dataset out = data::augment(ds, mode, target_d, seed);
    data::save_csv(out, output);
    std::printf("augmented %d -> %d features (%s) -> %s\n", ds.d(), out.d(),
                mode_name.c_str(), output.c_str());
    return 0;
}

int run_validate_command(const std::string& suite) {
    const auto results = harness::validate(suite);
    harness::print_validation_report(results, std::cout);
    return harness::validation_passed(results) ? 0 : 1;
}

int run_cvcheck_command(int n, const std::string& kernel_id, std::uint64_t seed,
                        double lambda, double gamma) {
    if (n < 2 || n > 6) throw ConfigError("cvcheck: n must lie in [2, 6]");
    const kernels::KernelSpec kernel = parse_kernel_id(kernel_id);
    const data::Dataset ds =
        data::synth_gaussian(n, 3, data::CovSpec::identity(), 1.0, seed);
    const gp::HyperParams hp = gp::HyperParams::fixed(lambda, gamma);
    const Eigen::MatrixXd K = kernels::gram(kernel, ds.X);
    const double fn = gp::free_energy(K, ds.Y, hp);
    double sum = 0.0;
    std::printf("leave-k-out scores (n = %d, kernel %s):\n", n, kernel.id().c_str());
    for (int k = 1; k <= n; ++k) {
        const double sk = gp::cv_score(ds.X, ds.Y, k, kernel, hp);
        sum += sk;
        std::printf("  S_%d = %.12f\n", k, sk);
    }
    const double residual = std::abs(fn - sum);
    std::printf("F_n        = %.12f\nsum of S_k = %.12f\nresidual   = %.3e\n", fn, sum,
                residual);
    if (residual > 1e-8) {
        std::printf("FAIL: free energy does not match the score decomposition\n");
        return 1;
    }
    std::printf("PASS\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian process uncertainty metrics and their proportional-regime limits"};
    app.require_subcommand(1);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Run an experiment sweep from a JSON config");
    std::string config_path, out_csv, out_svg;
    sweep->add_option("--config", config_path, "JSON experiment config")->required();
    sweep->add_option("--out", out_csv, "Output CSV path")->required();
    sweep->add_option("--plot", out_svg, "Optional SVG line-chart path");

    // limits
    auto* limits = app.add_subcommand("limits", "Tabulate the limiting mean free energy over c");
    std::string limits_kernel = "linear";
    double c_min = 0.1, c_max = 5.0, limits_gamma = 0.1, limits_lambda = 1.0;
    int limits_points = 50;
    bool limits_optimal = false;
    std::string limits_out;
    limits->add_option("--kernel", limits_kernel, "Kernel id")->required();
    limits->add_option("--c-min", c_min)->required();
    limits->add_option("--c-max", c_max)->required();
    limits->add_option("--points", limits_points)->required();
    limits->add_option("--gamma", limits_gamma)->required();
    limits->add_option("--out", limits_out, "Output CSV path")->required();
    auto* lambda_opt = limits->add_option("--lambda", limits_lambda, "Fixed lambda");
    auto* optimal_flag =
        limits->add_flag("--optimal-lambda", limits_optimal, "Resolve lambda* per point");
    lambda_opt->excludes(optimal_flag);

    // optimal
    auto* optimal = app.add_subcommand("optimal", "Print a closed-form optimal hyperparameter");
    std::string which, optimal_kernel = "linear";
    double optimal_c = 1.0, optimal_mu = 1.0, optimal_gamma_value = 0.1;
    optimal->add_option("what", which, "gamma or lambda")->required();
    optimal->add_option("--kernel", optimal_kernel)->required();
    optimal->add_option("--c", optimal_c)->required();
    auto* mu_opt = optimal->add_option("--mu", optimal_mu, "Tempering constant (for gamma)");
    auto* gamma_opt =
        optimal->add_option("--gamma", optimal_gamma_value, "Temperature (for lambda)");

    // whiten
    auto* whiten = app.add_subcommand("whiten", "Whiten a CSV dataset");
    std::string whiten_in, whiten_label, whiten_out;
    whiten->add_option("--input", whiten_in)->required();
    whiten->add_option("--label", whiten_label)->required();
    whiten->add_option("--output", whiten_out)->required();

    // augment
    auto* augment = app.add_subcommand("augment", "Append synthetic covariates to a CSV dataset");
    std::string augment_in, augment_label = "label", augment_mode, augment_out;
    int target_d = 0;
    std::uint64_t augment_seed = 0;
    augment->add_option("--input", augment_in)->required();
    augment->add_option("--mode", augment_mode, "gaussian | copied | padded")->required();
    augment->add_option("--target-d", target_d)->required();
    augment->add_option("--seed", augment_seed)->required();
    augment->add_option("--output", augment_out)->required();
    augment->add_option("--label", augment_label, "Label column name (default 'label')");

    // validate
    auto* validate = app.add_subcommand("validate", "Run the built-in validation checks");
    std::string suite = "all";
    validate->add_option("--suite", suite, "all | specfun | rmt | gp | kernels | data");

    // cvcheck
    auto* cvcheck =
        app.add_subcommand("cvcheck", "Check F_n = sum of leave-k-out scores by enumeration");
    int cv_n = 4;
    std::string cv_kernel = "linear";
    std::uint64_t cv_seed = 0;
    double cv_lambda = 1.0, cv_gamma = 1.0;
    cvcheck->add_option("--n", cv_n, "Dataset size (<= 6)")->required();
    cvcheck->add_option("--kernel", cv_kernel)->required();
    cvcheck->add_option("--seed", cv_seed)->required();
    cvcheck->add_option("--lambda", cv_lambda);
    cvcheck->add_option("--gamma", cv_gamma);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sweep->parsed()) return run_sweep_command(config_path, out_csv, out_svg);
        if (limits->parsed()) {
            return run_limits_command(limits_kernel, c_min, c_max, limits_points,
                                      limits_gamma, limits_lambda, limits_optimal,
                                      limits_out);
        }
        if (optimal->parsed()) {
            return run_optimal_command(which, optimal_kernel, optimal_c, optimal_mu,
                                       optimal_gamma_value, mu_opt->count() > 0,
                                       gamma_opt->count() > 0);
        }
        if (whiten->parsed()) return run_whiten_command(whiten_in, whiten_label, whiten_out);
        if (augment->parsed()) {
            return run_augment_command(augment_in, augment_label, augment_mode, target_d,
                                       augment_seed, augment_out);
        }
        if (validate->parsed()) return run_validate_command(suite);
        if (cvcheck->parsed()) {
            return run_cvcheck_command(cv_n, cv_kernel, cv_seed, cv_lambda, cv_gamma);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    }
    return 2;
}
