#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gpdd/errors.hpp"
#include "gpdd/rng.hpp"

namespace gpdd::data {

// Stream purpose tags; combined with (seed, row) they make every generated
// value a pure function of its coordinates.  Rows draw from per-row streams,
// so a dataset with the same seed and smaller (n, d) is the exact top-left
// block of the larger one.
namespace stream {
inline constexpr std::uint64_t kRow = 0x01;
inline constexpr std::uint64_t kLabels = 0x02;
inline constexpr std::uint64_t kAugmentRow = 0x03;
inline constexpr std::uint64_t kNoise = 0x04;
inline constexpr std::uint64_t kTestRow = 0x05;
inline constexpr std::uint64_t kTestLabels = 0x06;
inline constexpr std::uint64_t kSubsample = 0x07;
}  // namespace stream

struct DatasetMeta {
    std::uint64_t seed = 0;
    bool whitened = false;
    std::vector<int> retained_features;  // post-reduction column -> original column
    double label_variance = 1.0;
};

struct Dataset {
    Eigen::MatrixXd X;
    Eigen::VectorXd Y;
    DatasetMeta meta;

    int n() const { return static_cast<int>(X.rows()); }
    int d() const { return static_cast<int>(X.cols()); }
};

// Input covariance specification for synthetic draws.
struct CovSpec {
    enum class Type { identity, diagonal, full };
    Type type = Type::identity;
    Eigen::VectorXd diag;
    Eigen::MatrixXd matrix;

    static CovSpec identity() { return {}; }
    static CovSpec diagonal(Eigen::VectorXd values) {
        CovSpec c;
        c.type = Type::diagonal;
        c.diag = std::move(values);
        return c;
    }
    static CovSpec full(Eigen::MatrixXd m) {
        CovSpec c;
        c.type = Type::full;
        c.matrix = std::move(m);
        return c;
    }
};

namespace detail {

// Square root factor of the requested covariance, or empty for identity.
inline Eigen::MatrixXd cov_factor(const CovSpec& cov, int d) {
    switch (cov.type) {
        case CovSpec::Type::identity:
            return Eigen::MatrixXd();
        case CovSpec::Type::diagonal: {
            if (cov.diag.size() != d) {
                throw std::invalid_argument("synth_gaussian: diagonal covariance size mismatch");
            }
            if ((cov.diag.array() < 0.0).any()) {
                throw std::invalid_argument("synth_gaussian: diagonal covariance has negative entries");
            }
            return cov.diag.array().sqrt().matrix().asDiagonal();
        }
        case CovSpec::Type::full: {
            if (cov.matrix.rows() != d || cov.matrix.cols() != d) {
                throw std::invalid_argument("synth_gaussian: covariance matrix size mismatch");
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov.matrix);
            if (es.info() != Eigen::Success) {
                throw std::invalid_argument("synth_gaussian: covariance eigendecomposition failed");
            }
            const double top = es.eigenvalues().maxCoeff();
            if (top <= 0.0) throw std::invalid_argument("synth_gaussian: covariance is not PSD");
            Eigen::VectorXd ev = es.eigenvalues();
            for (Eigen::Index i = 0; i < ev.size(); ++i) {
                if (ev(i) < -1e-10 * top) {
                    throw std::invalid_argument("synth_gaussian: covariance is not PSD");
                }
                ev(i) = std::sqrt(std::max(ev(i), 0.0));
            }
            return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        }
    }
    return Eigen::MatrixXd();
}

}  // namespace detail

// X with iid N(0, Sigma) rows and Y with iid N(0, label_sd^2) entries; a pure
// function of (n, d, cov, label_sd, seed).
inline Dataset synth_gaussian(int n, int d, const CovSpec& cov, double label_sd,
                              std::uint64_t seed) {
    if (n < 1 || d < 1) throw std::domain_error("synth_gaussian: requires n, d >= 1");
    if (!(label_sd > 0.0)) throw std::domain_error("synth_gaussian: label_sd must be positive");
    const Eigen::MatrixXd factor = detail::cov_factor(cov, d);

    Dataset ds;
    ds.X.resize(n, d);
    Eigen::VectorXd z(d);
    for (int i = 0; i < n; ++i) {
        rng::Xoshiro256pp gen(rng::stream_seed(seed, stream::kRow, static_cast<std::uint64_t>(i)));
        for (int j = 0; j < d; ++j) z(j) = gen.gaussian();
        if (factor.size() == 0) {
            ds.X.row(i) = z;
        } else {
            ds.X.row(i) = (factor * z).transpose();
        }
    }
    ds.Y.resize(n);
    rng::Xoshiro256pp label_gen(rng::stream_seed(seed, stream::kLabels));
    for (int i = 0; i < n; ++i) ds.Y(i) = label_sd * label_gen.gaussian();

    ds.meta.seed = seed;
    ds.meta.whitened = false;
    ds.meta.retained_features.resize(static_cast<std::size_t>(d));
    std::iota(ds.meta.retained_features.begin(), ds.meta.retained_features.end(), 0);
    ds.meta.label_variance = label_sd * label_sd;
    return ds;
}

// Whitening: center X, drop directions whose covariance eigenvalue falls
// below tol * (max eigenvalue) by removing linearly dependent original
// columns, then apply the symmetric inverse square root of the retained
// covariance.  Y is centered and scaled to unit variance.  Sample moments use
// the 1/n normalization throughout, so the output covariance is exactly the
// identity.
inline Dataset whiten(const Eigen::Ref<const Eigen::MatrixXd>& X_raw,
                      const Eigen::Ref<const Eigen::VectorXd>& Y_raw,
                      double tol = 1e-10) {
    const int n = static_cast<int>(X_raw.rows());
    const int d = static_cast<int>(X_raw.cols());
    if (n < 2) throw std::domain_error("whiten: requires n >= 2");
    if (Y_raw.size() != n) throw std::domain_error("whiten: X/Y row mismatch");

    Eigen::MatrixXd Xc = X_raw.rowwise() - X_raw.colwise().mean();

    Eigen::MatrixXd cov = (Xc.transpose() * Xc) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const double top = es.eigenvalues().maxCoeff();
    if (!(top > 0.0)) throw DegenerateData("whiten: covariance has no positive eigenvalues");

    int rank = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        if (es.eigenvalues()(i) >= tol * top) ++rank;
    }
    if (rank == 0) throw DegenerateData("whiten: all covariance eigenvalues below tolerance");

    std::vector<int> retained(static_cast<std::size_t>(d));
    std::iota(retained.begin(), retained.end(), 0);
    if (rank < d) {
        // Choose which original columns to keep with a rank-revealing QR.
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xc);
        const auto& perm = qr.colsPermutation().indices();
        retained.assign(perm.data(), perm.data() + rank);
        std::sort(retained.begin(), retained.end());
        Eigen::MatrixXd Xr(n, rank);
        for (int j = 0; j < rank; ++j) Xr.col(j) = Xc.col(retained[static_cast<std::size_t>(j)]);
        Xc = std::move(Xr);
        cov = (Xc.transpose() * Xc) / static_cast<double>(n);
        es.compute(cov);
        if ((es.eigenvalues().array() < tol * top).any()) {
            throw DegenerateData("whiten: retained columns remain rank-deficient");
        }
    }

    const Eigen::VectorXd inv_sqrt = es.eigenvalues().array().rsqrt();
    const Eigen::MatrixXd W =
        es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();

    const double y_mean = Y_raw.mean();
    const double y_var = (Y_raw.array() - y_mean).square().sum() / static_cast<double>(n);
    if (!(y_var > 0.0)) throw DegenerateData("whiten: labels have zero variance");

    Dataset ds;
    ds.X = Xc * W;
    ds.Y = (Y_raw.array() - y_mean) / std::sqrt(y_var);
    ds.meta.whitened = true;
    ds.meta.retained_features = std::move(retained);
    ds.meta.label_variance = 1.0;
    return ds;
}

inline Dataset whiten(const Dataset& ds, double tol = 1e-10) {
    Dataset out = whiten(ds.X, ds.Y, tol);
    out.meta.seed = ds.meta.seed;
    return out;
}

enum class AugmentMode { gaussian, copied, padded };

// Extend X with synthetic covariates up to target_d columns: iid standard
// normals, cyclically copied originals X_{i,(j-1) mod d0 + 1}, or zeros.
inline Dataset augment(const Dataset& ds, AugmentMode mode, int target_d,
                       std::uint64_t seed) {
    const int n = ds.n();
    const int d0 = ds.d();
    if (target_d < d0) throw std::domain_error("augment: target_d must be >= current d");

    Dataset out = ds;
    out.X.conservativeResize(n, target_d);
    switch (mode) {
        case AugmentMode::gaussian:
            for (int i = 0; i < n; ++i) {
                rng::Xoshiro256pp gen(rng::stream_seed(seed, stream::kAugmentRow,
                                                       static_cast<std::uint64_t>(i)));
                for (int j = d0; j < target_d; ++j) out.X(i, j) = gen.gaussian();
            }
            break;
        case AugmentMode::copied:
            for (int j = d0; j < target_d; ++j) out.X.col(j) = ds.X.col(j % d0);
            break;
        case AugmentMode::padded:
            out.X.rightCols(target_d - d0).setZero();
            break;
    }
    out.meta.seed = seed;
    return out;
}

enum class ThetaMode { small, large, growing };

inline Eigen::VectorXd misspec_theta(ThetaMode mode, int n, int d) {
    const double root_d = std::sqrt(static_cast<double>(d));
    switch (mode) {
        case ThetaMode::small:
            return Eigen::VectorXd::Constant(d, 1.0 / root_d);
        case ThetaMode::large:
            return Eigen::VectorXd::Constant(d, static_cast<double>(n) / root_d);
        case ThetaMode::growing:
            return Eigen::VectorXd::Ones(d);
    }
    return Eigen::VectorXd();
}

// Replace labels with Y_i = theta0 . X_i + eps_i, eps_i ~ N(0, noise_sd^2).
inline Dataset misspecify_labels(const Dataset& ds, ThetaMode mode,
                                 double noise_sd, std::uint64_t seed) {
    if (noise_sd < 0.0) throw std::domain_error("misspecify_labels: noise_sd must be >= 0");
    const Eigen::VectorXd theta = misspec_theta(mode, ds.n(), ds.d());
    Dataset out = ds;
    out.Y = ds.X * theta;
    rng::Xoshiro256pp gen(rng::stream_seed(seed, stream::kNoise));
    for (int i = 0; i < out.n(); ++i) out.Y(i) += noise_sd * gen.gaussian();
    out.meta.seed = seed;
    out.meta.label_variance = theta.squaredNorm() + noise_sd * noise_sd;
    return out;
}

struct MisspecDiagnostic {
    double variance = 0.0;
    double lower_bound = 0.0;
};

// For linear f(z) = theta . z with z standard normal: Var f = |theta|^2, and
// the reverse Poincare bound d^-1 (sum_i theta_i)^2 <= Var f.
inline MisspecDiagnostic misspec_diagnostic(const Eigen::Ref<const Eigen::VectorXd>& theta) {
    if (theta.size() < 1) throw std::domain_error("misspec_diagnostic: d must be >= 1");
    MisspecDiagnostic out;
    out.variance = theta.squaredNorm();
    const double s = theta.sum();
    out.lower_bound = s * s / static_cast<double>(theta.size());
    return out;
}

// ---------------------------------------------------------------------------
// CSV input/output.  Comma-separated, header row, one observation per row,
// label column named by the caller, 17-significant-digit decimal output so a
// save/load round trip reproduces every value exactly.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
    double value = 0.0;
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end || begin == end) {
        throw ParseError("csv: non-numeric cell at row " + std::to_string(row) +
                         ", column " + std::to_string(col + 1) + ": '" + cell + "'");
    }
    return value;
}

}  // namespace detail

inline Dataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw ParseError("csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError("csv: '" + path + "' is empty");
    const std::vector<std::string> header = detail::split_csv_line(line);

    int label_idx = -1;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == label_column) {
            label_idx = static_cast<int>(j);
            break;
        }
    }
    if (label_idx < 0) {
        std::string names;
        for (std::size_t j = 0; j < header.size(); ++j) {
            names += (j ? ", " : "") + header[j];
        }
        throw ParseError("csv: no column named '" + label_column +
                         "' in '" + path + "'; available: " + names);
    }

    const std::size_t ncols = header.size();
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != ncols) {
            throw ParseError("csv: row " + std::to_string(lineno) + " has " +
                             std::to_string(cells.size()) + " fields, expected " +
                             std::to_string(ncols));
        }
        std::vector<double> vals(ncols);
        for (std::size_t j = 0; j < ncols; ++j) {
            vals[j] = detail::parse_cell(cells[j], lineno, j);
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw ParseError("csv: '" + path + "' has no data rows");

    Dataset ds;
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(ncols) - 1;
    if (d < 1) throw ParseError("csv: '" + path + "' has no feature columns");
    ds.X.resize(n, d);
    ds.Y.resize(n);
    for (int i = 0; i < n; ++i) {
        int jj = 0;
        for (int j = 0; j < static_cast<int>(ncols); ++j) {
            if (j == label_idx) {
                ds.Y(i) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            } else {
                ds.X(i, jj++) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            }
        }
    }
    ds.meta.retained_features.resize(static_cast<std::size_t>(d));
    std::iota(ds.meta.retained_features.begin(), ds.meta.retained_features.end(), 0);
    const double mean = ds.Y.mean();
    ds.meta.label_variance = (ds.Y.array() - mean).square().sum() / static_cast<double>(n);
    return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("csv: cannot write '" + path + "'");
    for (int j = 0; j < ds.d(); ++j) out << "x" << (j + 1) << ",";
    out << "label\n";
    char buf[40];
    for (int i = 0; i < ds.n(); ++i) {
        for (int j = 0; j < ds.d(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.X(i, j));
            out << buf << ",";
        }
        std::snprintf(buf, sizeof(buf), "%.17g", ds.Y(i));
        out << buf << "\n";
    }
    if (!out) throw ParseError("csv: write failure on '" + path + "'");
}

}  // namespace gpdd::data
