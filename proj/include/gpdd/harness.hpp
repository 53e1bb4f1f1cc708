#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gpdd/data.hpp"
#include "gpdd/errors.hpp"
#include "gpdd/gp.hpp"
#include "gpdd/kernels.hpp"
#include "gpdd/minimize.hpp"
#include "gpdd/rmt.hpp"

namespace gpdd::harness {

using json = nlohmann::json;

enum class Metric { free_energy, ppl2, ppnll, ppnll_opt };

inline std::string metric_name(Metric m) {
    switch (m) {
        case Metric::free_energy: return "free-energy";
        case Metric::ppl2: return "ppl2";
        case Metric::ppnll: return "ppnll";
        case Metric::ppnll_opt: return "ppnll-opt";
    }
    return "?";
}

inline Metric parse_metric(const std::string& s) {
    if (s == "free-energy") return Metric::free_energy;
    if (s == "ppl2") return Metric::ppl2;
    if (s == "ppnll") return Metric::ppnll;
    if (s == "ppnll-opt") return Metric::ppnll_opt;
    throw ConfigError("unknown metric '" + s + "'");
}

// How lambda is chosen at each grid point.  The optimal policy resolves
// lambda* from the kernel's linearization; "plug-in" keeps the kernel fixed
// and solves the closed form self-consistently with beta0 = beta / lambda,
// while "lambda-scaled" transforms the kernel bandwidth with eta = lambda*.
struct LambdaPolicy {
    enum class Type { fixed, tempered, optimal };
    enum class OptimalMode { plug_in, lambda_scaled };

    Type type = Type::fixed;
    double value = 1.0;                              // fixed
    double mu = 0.0;                                 // tempered: lambda = mu / gamma
    OptimalMode mode = OptimalMode::plug_in;         // optimal

    static LambdaPolicy fixed(double v) { return {Type::fixed, v, 0.0, OptimalMode::plug_in}; }
    static LambdaPolicy tempered(double mu) { return {Type::tempered, 0.0, mu, OptimalMode::plug_in}; }
    static LambdaPolicy optimal(OptimalMode m = OptimalMode::plug_in) {
        return {Type::optimal, 0.0, 0.0, m};
    }

    std::string name() const {
        switch (type) {
            case Type::fixed: return "fixed";
            case Type::tempered: return "tempered";
            case Type::optimal:
                return mode == OptimalMode::plug_in ? "optimal" : "optimal-scaled";
        }
        return "?";
    }
};

struct DataSpec {
    enum class Type { synthetic, csv, augmented, misspecified };
    Type type = Type::synthetic;

    // synthetic (also the base of augmented/misspecified draws)
    data::CovSpec cov;
    double label_sd = 1.0;

    // csv
    std::string path;
    std::string label_column;

    // augmented: draw or load base_d covariates, optionally whiten, then
    // extend to the sweep's d
    int base_d = 0;
    data::AugmentMode mode = data::AugmentMode::gaussian;
    bool whiten_base = true;

    // misspecified
    data::ThetaMode theta = data::ThetaMode::small;
    double noise_sd = 1.0;
};

struct ExperimentConfig {
    std::string name;
    kernels::KernelSpec kernel;
    Metric metric = Metric::free_energy;
    std::vector<int> n_grid;      // single entry unless xi scaling drives n
    std::vector<int> d_grid;
    std::vector<double> c_grid;
    std::optional<double> xi;     // d = 2^{10(1-xi)} n^xi over n_grid
    std::vector<double> gammas;
    LambdaPolicy lambda_policy;
    int reps = 2;
    int test_points = 200;
    std::uint64_t seed = 0;
    DataSpec data;
};

// Replicate aggregation: mean and the 95% CLT half-width
// 1.96 * sample_sd / sqrt(reps).
struct Aggregate {
    double mean = 0.0;
    double ci_half_width = 0.0;
};

inline Aggregate aggregate(const std::vector<double>& values) {
    if (values.size() < 2) throw std::domain_error("aggregate: needs >= 2 replicates");
    Aggregate out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    out.ci_half_width = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
    return out;
}

// One grid point's aggregate.  ci_half_width = 1.96 * sample_sd / sqrt(reps).
struct SweepRecord {
    std::string metric;
    std::string kernel;
    int n = 0;
    int d = 0;
    double c = 0.0;
    double gamma = 0.0;
    double lambda = 0.0;
    int reps = 0;
    double mean = 0.0;
    double ci_half_width = 0.0;
    std::uint64_t seed = 0;
    std::string error;
};

// ---------------------------------------------------------------------------
// Config parsing (strict: unknown keys are an error).

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

inline kernels::KernelSpec parse_kernel_json(const json& j) {
    check_keys(j, {"family", "params"}, "kernel");
    if (!j.contains("family")) throw ConfigError("kernel: missing 'family'");
    const std::string fam = j.at("family").get<std::string>();
    const json params = j.value("params", json::object());
    check_keys(params, {"c0", "degree", "nu", "eta"}, "kernel.params");
    kernels::KernelSpec s;
    if (fam == "linear") s.family = kernels::Family::linear;
    else if (fam == "polynomial") s.family = kernels::Family::polynomial;
    else if (fam == "exponential") s.family = kernels::Family::exponential;
    else if (fam == "gaussian") s.family = kernels::Family::gaussian;
    else if (fam == "multiquadric") s.family = kernels::Family::multiquadric;
    else if (fam == "inverse-multiquadric") s.family = kernels::Family::inverse_multiquadric;
    else if (fam == "matern") s.family = kernels::Family::matern;
    else throw ConfigError("kernel: unknown family '" + fam + "'");
    s.c0 = params.value("c0", s.c0);
    s.degree = params.value("degree", s.degree);
    s.nu = params.value("nu", s.nu);
    s.eta = params.value("eta", s.eta);
    try {
        s.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("kernel: ") + e.what());
    }
    return s;
}

inline DataSpec parse_data_json(const json& j) {
    DataSpec spec;
    check_keys(j,
               {"type", "cov", "diag", "label_sd", "path", "label", "base_d",
                "mode", "whiten", "theta", "noise_sd"},
               "data");
    const std::string type = j.value("type", std::string("synthetic"));
    auto parse_cov = [&]() {
        const std::string cov = j.value("cov", std::string("identity"));
        if (cov == "identity") {
            spec.cov = data::CovSpec::identity();
        } else if (cov == "diagonal") {
            if (!j.contains("diag")) throw ConfigError("data: diagonal cov needs 'diag'");
            const auto vals = j.at("diag").get<std::vector<double>>();
            Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
            for (std::size_t i = 0; i < vals.size(); ++i) v(static_cast<Eigen::Index>(i)) = vals[i];
            spec.cov = data::CovSpec::diagonal(std::move(v));
        } else {
            throw ConfigError("data: unknown cov '" + cov + "'");
        }
        spec.label_sd = j.value("label_sd", 1.0);
    };
    if (type == "synthetic") {
        spec.type = DataSpec::Type::synthetic;
        parse_cov();
    } else if (type == "csv") {
        spec.type = DataSpec::Type::csv;
        if (!j.contains("path") || !j.contains("label")) {
            throw ConfigError("data: csv needs 'path' and 'label'");
        }
        spec.path = j.at("path").get<std::string>();
        spec.label_column = j.at("label").get<std::string>();
    } else if (type == "augmented") {
        spec.type = DataSpec::Type::augmented;
        parse_cov();
        if (j.contains("path")) {
            spec.path = j.at("path").get<std::string>();
            spec.label_column = j.value("label", std::string("label"));
        }
        if (!j.contains("base_d")) throw ConfigError("data: augmented needs 'base_d'");
        spec.base_d = j.at("base_d").get<int>();
        const std::string mode = j.value("mode", std::string("gaussian"));
        if (mode == "gaussian") spec.mode = data::AugmentMode::gaussian;
        else if (mode == "copied") spec.mode = data::AugmentMode::copied;
        else if (mode == "padded") spec.mode = data::AugmentMode::padded;
        else throw ConfigError("data: unknown augment mode '" + mode + "'");
        spec.whiten_base = j.value("whiten", true);
    } else if (type == "misspecified") {
        spec.type = DataSpec::Type::misspecified;
        parse_cov();
        const std::string theta = j.value("theta", std::string("small"));
        if (theta == "small") spec.theta = data::ThetaMode::small;
        else if (theta == "large") spec.theta = data::ThetaMode::large;
        else if (theta == "growing") spec.theta = data::ThetaMode::growing;
        else throw ConfigError("data: unknown theta mode '" + theta + "'");
        spec.noise_sd = j.value("noise_sd", 1.0);
    } else {
        throw ConfigError("data: unknown type '" + type + "'");
    }
    return spec;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    detail::check_keys(j,
                       {"name", "kernel", "metric", "n", "n_grid", "d_grid",
                        "c_grid", "xi_scaling", "gamma", "lambda_policy", "reps",
                        "test_points", "seed", "data"},
                       "config");
    ExperimentConfig cfg;
    cfg.name = j.value("name", std::string("sweep"));
    if (!j.contains("kernel")) throw ConfigError("config: missing 'kernel'");
    cfg.kernel = detail::parse_kernel_json(j.at("kernel"));
    if (!j.contains("metric")) throw ConfigError("config: missing 'metric'");
    cfg.metric = parse_metric(j.at("metric").get<std::string>());

    const int axes = (j.contains("d_grid") ? 1 : 0) + (j.contains("c_grid") ? 1 : 0) +
                     (j.contains("xi_scaling") ? 1 : 0);
    if (axes != 1) {
        throw ConfigError("config: exactly one of d_grid, c_grid, xi_scaling required");
    }
    if (j.contains("xi_scaling")) {
        const json& xs = j.at("xi_scaling");
        detail::check_keys(xs, {"xi"}, "xi_scaling");
        cfg.xi = xs.at("xi").get<double>();
        if (!j.contains("n_grid")) throw ConfigError("config: xi_scaling needs 'n_grid'");
        cfg.n_grid = j.at("n_grid").get<std::vector<int>>();
    } else {
        if (j.contains("n_grid")) throw ConfigError("config: n_grid only valid with xi_scaling");
        if (!j.contains("n")) throw ConfigError("config: missing 'n'");
        cfg.n_grid = {j.at("n").get<int>()};
        if (j.contains("d_grid")) cfg.d_grid = j.at("d_grid").get<std::vector<int>>();
        if (j.contains("c_grid")) cfg.c_grid = j.at("c_grid").get<std::vector<double>>();
    }

    if (!j.contains("gamma")) throw ConfigError("config: missing 'gamma'");
    if (j.at("gamma").is_array()) {
        cfg.gammas = j.at("gamma").get<std::vector<double>>();
    } else {
        cfg.gammas = {j.at("gamma").get<double>()};
    }
    for (double g : cfg.gammas) {
        if (!(g > 0.0)) throw ConfigError("config: gamma values must be positive");
    }

    if (!j.contains("lambda_policy")) throw ConfigError("config: missing 'lambda_policy'");
    {
        const json& lp = j.at("lambda_policy");
        detail::check_keys(lp, {"type", "value", "mu", "mode"}, "lambda_policy");
        const std::string type = lp.at("type").get<std::string>();
        if (type == "fixed") {
            cfg.lambda_policy = LambdaPolicy::fixed(lp.at("value").get<double>());
        } else if (type == "tempered") {
            cfg.lambda_policy = LambdaPolicy::tempered(lp.at("mu").get<double>());
        } else if (type == "optimal") {
            const std::string mode = lp.value("mode", std::string("plug-in"));
            if (mode == "plug-in") {
                cfg.lambda_policy = LambdaPolicy::optimal(LambdaPolicy::OptimalMode::plug_in);
            } else if (mode == "lambda-scaled") {
                cfg.lambda_policy = LambdaPolicy::optimal(LambdaPolicy::OptimalMode::lambda_scaled);
            } else {
                throw ConfigError("lambda_policy: unknown mode '" + mode + "'");
            }
        } else {
            throw ConfigError("lambda_policy: unknown type '" + type + "'");
        }
    }

    cfg.reps = j.value("reps", 2);
    if (cfg.reps < 2) throw ConfigError("config: reps must be >= 2 for a CI");
    cfg.test_points = j.value("test_points", 200);
    if (cfg.test_points < 1) throw ConfigError("config: test_points must be >= 1");
    cfg.seed = j.value("seed", static_cast<std::uint64_t>(0));
    cfg.data = j.contains("data") ? detail::parse_data_json(j.at("data")) : DataSpec{};

    if (cfg.metric == Metric::ppnll_opt &&
        cfg.lambda_policy.type != LambdaPolicy::Type::tempered) {
        throw ConfigError("config: metric ppnll-opt requires the tempered lambda policy");
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// Lambda resolution.

// Self-consistent optimal lambda for a fixed kernel: the closed form with
// beta0 = beta / lambda substituted, solved by bisection.  For beta = 0 this
// is the closed form itself.  Requires gamma < 1.
inline double optimal_lambda_plugin(double alpha, double beta, double gamma, double c) {
    if (!(gamma > 0.0)) throw std::domain_error("optimal_lambda_plugin: gamma must be positive");
    if (gamma >= 1.0) {
        throw NoOptimalLambda("optimal_lambda_plugin: gamma = " + std::to_string(gamma) +
                              " >= 1, no optimal lambda exists");
    }
    if (beta == 0.0) {
        return rmt::optimal_lambda(gamma, rmt::make_scaled_context(alpha, 0.0, c));
    }
    auto closed_form = [&](double lambda) {
        return rmt::optimal_lambda(gamma, rmt::make_scaled_context(alpha, beta / lambda, c));
    };
    // lambda - closed_form(lambda) is increasing from -inf on
    // (beta/(1-gamma), inf) and has exactly one root.
    double lo = beta / (1.0 - gamma) * (1.0 + 1e-12);
    double hi = std::max(2.0 * lo, 1.0);
    while (hi - closed_form(hi) < 0.0) {
        hi *= 2.0;
        if (hi > 1e300) throw NoOptimalLambda("optimal_lambda_plugin: no finite fixed point");
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid - closed_form(mid) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Final evaluation through the closed form keeps the self-consistency
    // residual at the rounding level.
    return closed_form(0.5 * (lo + hi));
}

struct ResolvedLambda {
    double lambda = 0.0;
    kernels::KernelSpec kernel;  // bandwidth-transformed in lambda-scaled mode
};

inline ResolvedLambda resolve_lambda(const LambdaPolicy& policy, double gamma,
                                     const kernels::KernelSpec& kernel, double c) {
    ResolvedLambda out;
    out.kernel = kernel;
    switch (policy.type) {
        case LambdaPolicy::Type::fixed:
            out.lambda = policy.value;
            break;
        case LambdaPolicy::Type::tempered:
            out.lambda = policy.mu / gamma;
            break;
        case LambdaPolicy::Type::optimal: {
            if (policy.mode == LambdaPolicy::OptimalMode::lambda_scaled) {
                const kernels::Rescaled probe = kernels::rescale_bandwidth(kernel, 1.0);
                out.lambda = rmt::optimal_lambda(
                    gamma, rmt::make_scaled_context(probe.alpha, probe.beta0, c));
                out.kernel = kernels::rescale_bandwidth(kernel, out.lambda).spec;
            } else {
                const kernels::Coefficients co = kernels::coefficients(kernel, 1.0);
                out.lambda = optimal_lambda_plugin(co.alpha, co.beta, gamma, c);
            }
            break;
        }
    }
    if (!(out.lambda > 0.0) || !std::isfinite(out.lambda)) {
        throw std::domain_error("resolve_lambda: non-positive lambda");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Worker pool.  GPDD_THREADS caps the worker count (default: hardware).
// Tasks write into preassigned slots and aggregation is index-ordered, so
// results do not depend on scheduling.

inline int worker_count() {
    if (const char* env = std::getenv("GPDD_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

template <typename Task>
void parallel_for(int count, Task&& task) {
    const int workers = std::min(worker_count(), std::max(count, 1));
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    auto body = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= count || failed.load()) return;
            try {
                task(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) threads.emplace_back(body);
    for (auto& t : threads) t.join();
    if (failed.load()) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Sweep execution.

namespace detail {

struct GridPoint {
    int n = 0;
    int d = 0;
    double gamma = 0.0;
};

inline std::vector<GridPoint> build_grid(const ExperimentConfig& cfg) {
    std::vector<std::pair<int, int>> nd;
    if (cfg.xi) {
        for (int n : cfg.n_grid) {
            const double d = std::pow(2.0, 10.0 * (1.0 - *cfg.xi)) *
                             std::pow(static_cast<double>(n), *cfg.xi);
            nd.emplace_back(n, std::max(1, static_cast<int>(std::lround(d))));
        }
    } else if (!cfg.d_grid.empty()) {
        for (int d : cfg.d_grid) nd.emplace_back(cfg.n_grid.at(0), d);
    } else {
        for (double c : cfg.c_grid) {
            const int n = cfg.n_grid.at(0);
            nd.emplace_back(n, std::max(1, static_cast<int>(std::lround(c * n))));
        }
    }
    std::vector<GridPoint> grid;
    for (const auto& [n, d] : nd) {
        if (n < 1 || d < 1) throw ConfigError("grid: n and d must be >= 1");
        for (double g : cfg.gammas) grid.push_back({n, d, g});
    }
    return grid;
}

// Seeded row subsample (without replacement) and leading-column slice.
inline data::Dataset subsample(const data::Dataset& full, int n, int d,
                               std::uint64_t seed) {
    if (d > full.d()) {
        throw ConfigError("csv data has " + std::to_string(full.d()) +
                          " features, sweep asks for d = " + std::to_string(d));
    }
    if (n > full.n()) {
        throw ConfigError("csv data has " + std::to_string(full.n()) +
                          " rows, sweep asks for n = " + std::to_string(n));
    }
    data::Dataset out;
    out.meta = full.meta;
    out.meta.seed = seed;
    if (n == full.n()) {
        out.X = full.X.leftCols(d);
        out.Y = full.Y;
        return out;
    }
    rng::Xoshiro256pp gen(rng::stream_seed(seed, data::stream::kSubsample));
    std::vector<int> idx(static_cast<std::size_t>(full.n()));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < n; ++i) {
        const int j = i + static_cast<int>(gen.below(static_cast<std::uint64_t>(full.n() - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    out.X.resize(n, d);
    out.Y.resize(n);
    for (int i = 0; i < n; ++i) {
        out.X.row(i) = full.X.row(idx[static_cast<std::size_t>(i)]).head(d);
        out.Y(i) = full.Y(idx[static_cast<std::size_t>(i)]);
    }
    return out;
}

// Materialize the dataset for one replicate of one grid point.
inline data::Dataset make_dataset(const ExperimentConfig& cfg, const GridPoint& pt,
                                  std::uint64_t rep_seed) {
    switch (cfg.data.type) {
        case DataSpec::Type::synthetic:
            return data::synth_gaussian(pt.n, pt.d, cfg.data.cov, cfg.data.label_sd, rep_seed);
        case DataSpec::Type::misspecified: {
            data::Dataset ds =
                data::synth_gaussian(pt.n, pt.d, cfg.data.cov, 1.0, rep_seed);
            return data::misspecify_labels(ds, cfg.data.theta, cfg.data.noise_sd, rep_seed);
        }
        case DataSpec::Type::augmented: {
            if (pt.d < cfg.data.base_d) {
                throw ConfigError("augmented sweep: d below base_d");
            }
            data::Dataset base;
            if (!cfg.data.path.empty()) {
                base = data::load_csv(cfg.data.path, cfg.data.label_column);
                base = subsample(base, pt.n, cfg.data.base_d, rep_seed);
            } else {
                base = data::synth_gaussian(pt.n, cfg.data.base_d, cfg.data.cov,
                                            cfg.data.label_sd, rep_seed);
            }
            if (cfg.data.whiten_base) base = data::whiten(base);
            if (static_cast<int>(base.X.cols()) > cfg.data.base_d) {
                base.X.conservativeResize(base.n(), cfg.data.base_d);
            }
            return data::augment(base, cfg.data.mode, pt.d, rep_seed);
        }
        case DataSpec::Type::csv: {
            data::Dataset full = data::load_csv(cfg.data.path, cfg.data.label_column);
            return subsample(full, pt.n, pt.d, rep_seed);
        }
    }
    throw ConfigError("make_dataset: unreachable");
}

// One replicate's metric value.
inline double evaluate_metric(const ExperimentConfig& cfg, const GridPoint& pt,
                              const kernels::KernelSpec& kernel, double lambda,
                              std::uint64_t grid_index, std::uint64_t rep) {
    const std::uint64_t rep_seed = rng::stream_seed(cfg.seed, grid_index, rep);
    const data::Dataset ds = make_dataset(cfg, pt, rep_seed);
    const gp::HyperParams hp = gp::HyperParams::fixed(lambda, pt.gamma);
    const Eigen::MatrixXd K = kernels::gram(kernel, ds.X);

    if (cfg.metric == Metric::free_energy) {
        return gp::free_energy(K, ds.Y, hp) / static_cast<double>(pt.n);
    }

    // Posterior predictive metrics: m fresh iid test points per replicate,
    // reported per test point.
    const int m = cfg.test_points;
    Eigen::MatrixXd Xt(m, ds.d());
    for (int i = 0; i < m; ++i) {
        rng::Xoshiro256pp gen(rng::stream_seed(rep_seed, data::stream::kTestRow,
                                               static_cast<std::uint64_t>(i)));
        for (int j = 0; j < ds.d(); ++j) Xt(i, j) = gen.gaussian();
    }
    Eigen::VectorXd yt(m);
    rng::Xoshiro256pp ygen(rng::stream_seed(rep_seed, data::stream::kTestLabels));
    for (int i = 0; i < m; ++i) yt(i) = ygen.gaussian();

    const Eigen::MatrixXd kx = kernels::cross_gram(kernel, ds.X, Xt);
    const Eigen::MatrixXd Kx = kernels::gram(kernel, Xt);
    const gp::PosteriorPredictive pp = gp::posterior_predictive(K, kx, Kx, ds.Y, hp);

    switch (cfg.metric) {
        case Metric::ppl2:
            return gp::ppl2(pp, yt, hp) / static_cast<double>(m);
        case Metric::ppnll:
            return gp::ppnll(pp, yt, hp) / static_cast<double>(m);
        case Metric::ppnll_opt: {
            const double mse = (pp.mean - yt).squaredNorm() / static_cast<double>(m);
            const double tr = pp.raw_sigma.trace() / static_cast<double>(m);
            return gp::optimal_ppnll(mse, tr, 1, cfg.lambda_policy.mu).value;
        }
        default:
            break;
    }
    throw ConfigError("evaluate_metric: unreachable");
}

}  // namespace detail

inline std::vector<SweepRecord> run_sweep(const ExperimentConfig& cfg) {
    const std::vector<detail::GridPoint> grid = detail::build_grid(cfg);
    const int reps = cfg.reps;

    struct PointPlan {
        detail::GridPoint pt;
        kernels::KernelSpec kernel;
        double lambda = 0.0;
        std::string error;
    };
    std::vector<PointPlan> plans(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        plans[g].pt = grid[g];
        plans[g].kernel = cfg.kernel;
        const double c = static_cast<double>(grid[g].d) / static_cast<double>(grid[g].n);
        try {
            const ResolvedLambda r =
                resolve_lambda(cfg.lambda_policy, grid[g].gamma, cfg.kernel, c);
            plans[g].lambda = r.lambda;
            plans[g].kernel = r.kernel;
        } catch (const NoOptimalLambda& e) {
            plans[g].error = e.what();
        }
    }

    struct TaskRef {
        std::size_t g;
        int rep;
    };
    std::vector<TaskRef> tasks;
    for (std::size_t g = 0; g < plans.size(); ++g) {
        if (!plans[g].error.empty()) continue;
        for (int r = 0; r < reps; ++r) tasks.push_back({g, r});
    }
    std::vector<std::vector<double>> values(plans.size(),
                                            std::vector<double>(static_cast<std::size_t>(reps), 0.0));
    parallel_for(static_cast<int>(tasks.size()), [&](int t) {
        const TaskRef& ref = tasks[static_cast<std::size_t>(t)];
        const PointPlan& plan = plans[ref.g];
        try {
            values[ref.g][static_cast<std::size_t>(ref.rep)] = detail::evaluate_metric(
                cfg, plan.pt, plan.kernel, plan.lambda, static_cast<std::uint64_t>(ref.g),
                static_cast<std::uint64_t>(ref.rep));
        } catch (const std::exception& e) {
            throw std::runtime_error("sweep point (n=" + std::to_string(plan.pt.n) +
                                     ", d=" + std::to_string(plan.pt.d) + ", gamma=" +
                                     std::to_string(plan.pt.gamma) + ", rep=" +
                                     std::to_string(ref.rep) + "): " + e.what());
        }
    });

    std::vector<SweepRecord> records;
    records.reserve(plans.size());
    for (std::size_t g = 0; g < plans.size(); ++g) {
        const PointPlan& plan = plans[g];
        SweepRecord rec;
        rec.metric = metric_name(cfg.metric);
        rec.kernel = plan.kernel.id();
        rec.n = plan.pt.n;
        rec.d = plan.pt.d;
        rec.c = static_cast<double>(plan.pt.d) / static_cast<double>(plan.pt.n);
        rec.gamma = plan.pt.gamma;
        rec.lambda = plan.lambda;
        rec.reps = reps;
        rec.seed = cfg.seed;
        rec.error = plan.error;
        if (plan.error.empty()) {
            const Aggregate agg = aggregate(values[g]);
            rec.mean = agg.mean;
            rec.ci_half_width = agg.ci_half_width;
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// Pairs each free-energy sweep point with the limiting value at matching
// (lambda, gamma, c, alpha, beta).
struct LimitComparison {
    double c = 0.0;
    double empirical_mean = 0.0;
    double limit_value = 0.0;
    double abs_dev = 0.0;
};

inline std::vector<LimitComparison> empirical_vs_limit(const ExperimentConfig& cfg) {
    if (cfg.metric != Metric::free_energy) {
        throw ConfigError("empirical_vs_limit: requires the free-energy metric");
    }
    if (cfg.data.type != DataSpec::Type::synthetic) {
        throw ConfigError("empirical_vs_limit: requires synthetic data");
    }
    const std::vector<SweepRecord> records = run_sweep(cfg);
    std::vector<LimitComparison> out;
    for (const SweepRecord& rec : records) {
        if (!rec.error.empty()) continue;
        kernels::KernelSpec kernel = cfg.kernel;
        if (cfg.lambda_policy.type == LambdaPolicy::Type::optimal &&
            cfg.lambda_policy.mode == LambdaPolicy::OptimalMode::lambda_scaled) {
            kernel = kernels::rescale_bandwidth(cfg.kernel, rec.lambda).spec;
        }
        const kernels::Coefficients co = kernels::coefficients(kernel, 1.0);
        const rmt::RmtContext ctx =
            rmt::make_context(co.alpha, co.beta, rec.c, rec.lambda * rec.gamma);
        LimitComparison cmp;
        cmp.c = rec.c;
        cmp.empirical_mean = rec.mean;
        cmp.limit_value = rmt::limiting_free_energy(rec.lambda, rec.gamma, ctx);
        cmp.abs_dev = std::abs(cmp.empirical_mean - cmp.limit_value);
        out.push_back(cmp);
    }
    return out;
}

// Golden-section oracle exposed at the harness level.
template <typename F>
std::pair<double, double> minimize_scalar(F&& f, double lo, double hi, int iters = 200) {
    const minimize::ScalarMin r = minimize::golden_section(f, lo, hi, iters);
    return {r.argmin, r.min};
}

// ---------------------------------------------------------------------------
// Emission: CSV (canonical) and a minimal SVG line chart.

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string sanitize(std::string s) {
    for (char& ch : s) {
        if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
    }
    return s;
}

}  // namespace detail

inline std::string records_to_csv(const std::vector<SweepRecord>& records) {
    std::string out = "metric,kernel,n,d,c,gamma,lambda,reps,mean,ci_half_width,seed,error\n";
    for (const SweepRecord& r : records) {
        out += r.metric;
        out += ',';
        out += detail::sanitize(r.kernel);
        out += ',';
        out += std::to_string(r.n);
        out += ',';
        out += std::to_string(r.d);
        out += ',';
        out += detail::fmt(r.c);
        out += ',';
        out += detail::fmt(r.gamma);
        out += ',';
        if (r.error.empty()) out += detail::fmt(r.lambda);
        out += ',';
        out += std::to_string(r.reps);
        out += ',';
        if (r.error.empty()) out += detail::fmt(r.mean);
        out += ',';
        if (r.error.empty()) out += detail::fmt(r.ci_half_width);
        out += ',';
        out += std::to_string(r.seed);
        out += ',';
        out += detail::sanitize(r.error);
        out += '\n';
    }
    return out;
}

// One polyline per gamma series; x is the dimension axis, y the mean, with
// vertical CI whiskers.  Structure over styling.
inline std::string records_to_svg(const std::vector<SweepRecord>& records) {
    const double width = 800, height = 520;
    const double ml = 70, mr = 20, mt = 20, mb = 50;
    std::vector<double> gammas;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const SweepRecord& r : records) {
        if (!r.error.empty()) continue;
        if (std::find(gammas.begin(), gammas.end(), r.gamma) == gammas.end()) {
            gammas.push_back(r.gamma);
        }
        xmin = std::min(xmin, static_cast<double>(r.d));
        xmax = std::max(xmax, static_cast<double>(r.d));
        ymin = std::min(ymin, r.mean - r.ci_half_width);
        ymax = std::max(ymax, r.mean + r.ci_half_width);
    }
    if (xmin >= xmax) { xmin -= 1.0; xmax += 1.0; }
    if (ymin >= ymax) { ymin -= 1.0; ymax += 1.0; }
    auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto sy = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"520\" "
                      "viewBox=\"0 0 800 520\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"520\" fill=\"white\"/>\n";
    // axes
    svg += "<line x1=\"" + detail::fmt(ml) + "\" y1=\"" + detail::fmt(height - mb) +
           "\" x2=\"" + detail::fmt(width - mr) + "\" y2=\"" + detail::fmt(height - mb) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + detail::fmt(ml) + "\" y1=\"" + detail::fmt(mt) + "\" x2=\"" +
           detail::fmt(ml) + "\" y2=\"" + detail::fmt(height - mb) + "\" stroke=\"black\"/>\n";
    char label[128];
    std::snprintf(label, sizeof(label),
                  "<text x=\"%g\" y=\"%g\" font-size=\"12\">d: %g - %g</text>\n", ml,
                  height - mb + 30.0, xmin, xmax);
    svg += label;
    std::snprintf(label, sizeof(label),
                  "<text x=\"%g\" y=\"%g\" font-size=\"12\" transform=\"rotate(-90 14 %g)\">"
                  "%g - %g</text>\n", 14.0, 0.5 * height, 0.5 * height, ymin, ymax);
    svg += label;
    int series = 0;
    for (double g : gammas) {
        const char* color = palette[series % 8];
        std::string points;
        for (const SweepRecord& r : records) {
            if (!r.error.empty() || r.gamma != g) continue;
            points += detail::fmt(sx(r.d)) + "," + detail::fmt(sy(r.mean)) + " ";
            svg += "<line x1=\"" + detail::fmt(sx(r.d)) + "\" y1=\"" +
                   detail::fmt(sy(r.mean - r.ci_half_width)) + "\" x2=\"" +
                   detail::fmt(sx(r.d)) + "\" y2=\"" +
                   detail::fmt(sy(r.mean + r.ci_half_width)) + "\" stroke=\"" + color +
                   "\" stroke-width=\"1\"/>\n";
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
        ++series;
    }
    svg += "</svg>\n";
    return svg;
}

inline void emit(const std::vector<SweepRecord>& records, const std::string& csv_path,
                 const std::string& svg_path = "") {
    if (records.empty()) throw ConfigError("emit: no records");
    {
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw ParseError("emit: cannot write '" + csv_path + "'");
        out << records_to_csv(records);
        if (!out) throw ParseError("emit: write failure on '" + csv_path + "'");
    }
    if (!svg_path.empty()) {
        std::ofstream out(svg_path, std::ios::binary);
        if (!out) throw ParseError("emit: cannot write '" + svg_path + "'");
        out << records_to_svg(records);
        if (!out) throw ParseError("emit: write failure on '" + svg_path + "'");
    }
}

}  // namespace gpdd::harness
