#pragma once

#include <cmath>

namespace gpdd::quad {

namespace detail {

template <typename F>
double simpson(F&& f, double a, double fa, double b, double fb, double m,
               double fm) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <typename F>
double adaptive(F&& f, double a, double fa, double b, double fb, double m,
                double fm, double whole, double tol, int depth) {
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(f, a, fa, m, fm, lm, flm);
    const double right = simpson(f, m, fm, b, fb, rm, frm);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Adaptive Simpson quadrature of f over [a, b] with absolute target tol.
template <typename F>
double adaptive_simpson(F&& f, double a, double b, double tol = 1e-9,
                        int max_depth = 48) {
    if (a == b) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(m);
    const double whole = detail::simpson(f, a, fa, b, fb, m, fm);
    return detail::adaptive(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
}

}  // namespace gpdd::quad
