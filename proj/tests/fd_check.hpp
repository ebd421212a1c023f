#pragma once

// Finite-difference gradient oracle shared by the unit and acceptance suites.
// Central differences with h = 1e-5; relative error is
// |a - n| / max(1e-8, |a| + |n|). Kept independent of the tape: it only ever
// re-evaluates the forward function.

#include <cmath>
#include <functional>
#include <vector>

namespace valr::test {

inline double rel_err(double a, double n) {
    return std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n));
}

// f evaluates the scalar objective at the given flat parameter vector.
// Returns the worst relative error between analytic and numeric gradients.
// Coordinates where both values fall below `tiny_floor` are compared
// absolutely instead: central differences at h=1e-5 carry ~|f|*eps/h of
// roundoff, which swamps the relative error of a near-zero gradient without
// indicating any defect (0 disables the guard).
inline double fd_max_rel_err(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x, const std::vector<double>& analytic,
                             double h = 1e-5, double tiny_floor = 0.0,
                             double tiny_abs_tol = 1e-7) {
    double worst = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double keep = x[i];
        x[i] = keep + h;
        double fp = f(x);
        x[i] = keep - h;
        double fm = f(x);
        x[i] = keep;
        double numeric = (fp - fm) / (2.0 * h);
        if (std::abs(analytic[i]) + std::abs(numeric) < tiny_floor) {
            if (std::abs(analytic[i] - numeric) > tiny_abs_tol) worst = std::max(worst, 1.0);
            continue;
        }
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

// Single-coordinate variant for spot checks on large parameter sets.
inline double fd_rel_err_at(const std::function<double(const std::vector<double>&)>& f,
                            std::vector<double> x, size_t i, double analytic, double h = 1e-5) {
    double keep = x[i];
    x[i] = keep + h;
    double fp = f(x);
    x[i] = keep - h;
    double fm = f(x);
    x[i] = keep;
    return rel_err(analytic, (fp - fm) / (2.0 * h));
}

}  // namespace valr::test
