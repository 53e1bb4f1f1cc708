#pragma once

#include <stdexcept>
#include <string>

namespace gpdd {

// K + lambda*gamma*I was not numerically positive definite. Signals a broken
// Gram matrix or a ridge that underflowed; no jitter is added silently.
struct FactorizationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// gamma >= 1 - beta0: the limiting free energy has no interior minimizer in
// lambda, so there is nothing to return.
struct NoOptimalLambda : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Kernel slope alpha <= 0; the linearization coefficients are meaningless.
struct DegenerateKernel : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The bandwidth transform does not produce lambda-independent (alpha, beta0).
struct NotLambdaScalable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Whitening cannot proceed: covariance has no usable directions, or the
// labels have zero variance.
struct DegenerateData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad experiment configuration or CLI usage.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed CSV input; message carries row/column location.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exact-mode cross-validation enumeration would exceed its budget.
struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gpdd
