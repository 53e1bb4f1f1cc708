#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

namespace gpdd::minimize {

struct ScalarMin {
    double argmin = 0.0;
    double min = 0.0;
};

// Golden-section search for the minimizer of a unimodal f on [lo, hi].
// Final bracket width is (hi - lo) * 0.618^iters.
template <typename F>
ScalarMin golden_section(F&& f, double lo, double hi, int iters = 200) {
    if (!(lo < hi)) throw std::domain_error("golden_section: requires lo < hi");
    constexpr double invphi = 0.6180339887498948482;   // 1/phi
    constexpr double invphi2 = 0.3819660112501051518;  // 1/phi^2
    double a = lo, b = hi;
    double x1 = a + invphi2 * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    for (int it = 0; it < iters && b - a > 0.0; ++it) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + invphi2 * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        }
    }
    const double x = 0.5 * (a + b);
    return {x, f(x)};
}

// Golden-section on a logarithmic axis; lo, hi > 0.  Suits scale parameters
// such as lambda and gamma, whose useful range spans many decades.
template <typename F>
ScalarMin golden_section_log(F&& f, double lo, double hi, int iters = 200) {
    if (!(lo > 0.0) || !(hi > lo)) {
        throw std::domain_error("golden_section_log: requires 0 < lo < hi");
    }
    auto g = [&](double t) { return f(std::exp(t)); };
    ScalarMin r = golden_section(g, std::log(lo), std::log(hi), iters);
    return {std::exp(r.argmin), r.min};
}

}  // namespace gpdd::minimize
