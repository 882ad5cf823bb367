#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "branchlim/common.hpp"

namespace branchlim::detail {

// One accepted step of a scalar Dormand-Prince 5(4) integration together
// with the quartic dense-output polynomial for that interval.
struct DenseStep {
    double t0 = 0.0;
    double h = 0.0;
    double r1 = 0.0, r2 = 0.0, r3 = 0.0, r4 = 0.0, r5 = 0.0;

    double eval(double t) const {
        const double theta = (t - t0) / h;
        const double om = 1.0 - theta;
        return r1 + theta * (r2 + om * (r3 + theta * (r4 + om * r5)));
    }
};

class StepUnderflowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Scalar adaptive RK5(4), Dormand-Prince coefficients, with the classical
// continuous extension. Integrates y' = f(y) (autonomous) from 0 to t_end.
class Dopri5Scalar {
public:
    template <class F>
    static std::vector<DenseStep> integrate(F&& f, double y0, double t_end, double tol) {
        std::vector<DenseStep> steps;
        if (t_end <= 0.0) return steps;

        const double atol = tol;
        const double rtol = tol;

        double t = 0.0;
        double y = y0;
        double k1 = f(y);
        double h = initial_step(std::abs(y0), std::abs(k1), t_end, tol);
        const double h_min = t_end * 1e-15;
        std::size_t rejected_in_a_row = 0;

        while (t_end - t > h_min) {
            if (h < h_min) throw StepUnderflowError("Dopri5Scalar: step size underflow");
            if (t + h > t_end) h = t_end - t;

            const double k2 = f(y + h * (a21 * k1));
            const double k3 = f(y + h * (a31 * k1 + a32 * k2));
            const double k4 = f(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
            const double k5 = f(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
            const double k6 = f(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
            const double y1 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            const double k7 = f(y1);

            const double err_raw =
                h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            const double scale = atol + rtol * std::max(std::abs(y), std::abs(y1));
            const double err = std::abs(err_raw) / scale;

            if (err <= 1.0) {
                DenseStep ds;
                ds.t0 = t;
                ds.h = h;
                ds.r1 = y;
                ds.r2 = y1 - y;
                ds.r3 = h * k1 - ds.r2;
                ds.r4 = ds.r2 - h * k7 - ds.r3;
                ds.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
                steps.push_back(ds);

                t += h;
                y = y1;
                k1 = k7; // FSAL
                rejected_in_a_row = 0;
                const double factor =
                    err == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
                h *= factor;
            } else {
                h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
                if (++rejected_in_a_row > 200)
                    throw StepUnderflowError("Dopri5Scalar: persistent step rejection");
            }
        }
        return steps;
    }

private:
    static double initial_step(double y_mag, double f_mag, double t_end, double tol) {
        double h = 0.01 * (y_mag + tol) / (f_mag + tol);
        if (!(h > 0.0) || !std::isfinite(h)) h = 1e-6 * t_end;
        return std::min(h, t_end);
    }

    static constexpr double a21 = 1.0 / 5.0;
    static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                            a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
    static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                            a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
    static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                            b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
    static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                            e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
    static constexpr double d1 = -12715105075.0 / 11282082432.0;
    static constexpr double d3 = 87487479700.0 / 32700410799.0;
    static constexpr double d4 = -10690763975.0 / 1880347072.0;
    static constexpr double d5 = 701980252875.0 / 199316789632.0;
    static constexpr double d6 = -1453857185.0 / 822651844.0;
    static constexpr double d7 = 69997945.0 / 29380423.0;
};

// Adaptive Simpson quadrature with absolute tolerance.
inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                                   double fa, double fm, double fb, double whole, double tol,
                                   int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol, int max_depth = 30) {
    if (b <= a) return 0.0;
    const double fa = f(a);
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    const double fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

} // namespace branchlim::detail
