#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bspde/noise.hpp"

namespace bspde {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// lambda_k = k*pi; the quartic operator has eigenvalue lambda_k^4.
inline double eigenvalue(int k) {
    if (k < 1) throw std::invalid_argument("eigenvalue: mode index starts at 1");
    return k * kPi;
}

inline double quartic_eigenvalue(int k) {
    const double lambda = eigenvalue(k);
    return (lambda * lambda) * (lambda * lambda);
}

// eps_k(x) = sqrt(2) sin(k pi x), the L2-orthonormal sine basis on (0,1).
inline double eval_basis(int k, double x) {
    if (k < 1) throw std::invalid_argument("eval_basis: mode index starts at 1");
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("eval_basis: point outside [0,1]");
    return std::sqrt(2.0) * std::sin(k * kPi * x);
}

// Finite sine expansion; coefficient k is the inner product against eps_k.
class SpectralField {
public:
    SpectralField() = default;
    explicit SpectralField(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
        if (coeffs_.empty()) throw std::invalid_argument("SpectralField: needs at least one mode");
        for (double a : coeffs_)
            if (!std::isfinite(a)) throw std::invalid_argument("SpectralField: non-finite coefficient");
    }

    static SpectralField zeros(int modes) { return SpectralField(std::vector<double>(modes, 0.0)); }

    static SpectralField unit_mode(int k, int modes = 0) {
        if (k < 1) throw std::invalid_argument("unit_mode: mode index starts at 1");
        std::vector<double> c(std::max(k, modes), 0.0);
        c[k - 1] = 1.0;
        return SpectralField(std::move(c));
    }

    int modes() const { return static_cast<int>(coeffs_.size()); }
    double coeff(int k) const { return k <= modes() ? coeffs_[k - 1] : 0.0; }
    std::span<const double> coeffs() const { return coeffs_; }

    double evaluate(double x) const {
        double v = 0.0;
        for (int k = 1; k <= modes(); ++k) v += coeffs_[k - 1] * eval_basis(k, x);
        return v;
    }

private:
    std::vector<double> coeffs_;
};

// || f ||_{Hdot^s} on the truncated expansion.
inline double hdot_norm(const SpectralField& f, double s) {
    double sum = 0.0;
    for (int k = 1; k <= f.modes(); ++k) {
        const double a = f.coeff(k);
        sum += std::pow(eigenvalue(k), 2.0 * s) * a * a;
    }
    return std::sqrt(sum);
}

// Solution operator of the homogeneous problem: coefficients decay like
// exp(-lambda_k^4 t).  Underflow for large arguments flushes to zero.
inline SpectralField semigroup_apply(const SpectralField& f, double t) {
    if (t < 0.0) throw std::invalid_argument("semigroup_apply: negative time");
    std::vector<double> c(f.coeffs().begin(), f.coeffs().end());
    for (int k = 1; k <= f.modes(); ++k) c[k - 1] *= std::exp(-quartic_eigenvalue(k) * t);
    return SpectralField(std::move(c));
}

// Inverse elliptic solves on the eigenbasis.  Order 2 solves v'' = f
// (symbol -lambda_k^{-2}); order 4 solves v'''' = f (symbol
// +lambda_k^{-4}); the order-4 operator is the square of the order-2 one.
inline SpectralField apply_inverse_elliptic(const SpectralField& f, int order) {
    if (order != 2 && order != 4) throw std::invalid_argument("apply_inverse_elliptic: order is 2 or 4");
    std::vector<double> c(f.coeffs().begin(), f.coeffs().end());
    for (int k = 1; k <= f.modes(); ++k) {
        const double lambda2 = eigenvalue(k) * eigenvalue(k);
        c[k - 1] *= (order == 2) ? -1.0 / lambda2 : 1.0 / (lambda2 * lambda2);
    }
    return SpectralField(std::move(c));
}

// (1 - e^{-x}) / x, the interval average of the decay kernel.
inline double decay_average(double x) {
    if (x == 0.0) return 1.0;
    return -std::expm1(-x) / x;
}

// phi1(x) = (1 - e^{-2x}) / (2x): mean of the squared kernel.
inline double decay_sq_average(double x) {
    if (x == 0.0) return 1.0;
    return -std::expm1(-2.0 * x) / (2.0 * x);
}

// phi1 - phi2 with phi2 = decay_average^2: per-interval L2 defect of
// replacing the decay kernel by its interval average.  The direct
// difference cancels for small x, so a series takes over below 0.1.
inline double projection_defect(double x) {
    if (x < 0.1) {
        return x * x *
               (1.0 / 12 +
                x * (-1.0 / 12 +
                     x * (17.0 / 360 +
                          x * (-7.0 / 360 +
                               x * (43.0 / 6720 +
                                    x * (-107.0 / 60480 +
                                         x * (769.0 / 1814400 + x * (-163.0 / 1814400))))))));
    }
    const double avg = decay_average(x);
    return decay_sq_average(x) - avg * avg;
}

// Exact solution of the truncated-noise problem at the noise nodes,
// integrated mode by mode: over one interval the coefficient obeys a
// linear ODE with constant forcing, giving
//   u_i(t_n) = e^{-a dt} u_i(t_{n-1}) + R_i^n (1 - e^{-a dt}) / (a dt).
inline std::vector<SpectralField> exact_uhat(const NoisePath& path) {
    const int modes = path.modes();
    const int intervals = path.intervals();
    std::vector<double> state(modes, 0.0);
    std::vector<SpectralField> out;
    out.reserve(intervals + 1);
    out.push_back(SpectralField::zeros(modes));
    std::vector<double> damp(modes), gain(modes);
    for (int i = 1; i <= modes; ++i) {
        const double x = quartic_eigenvalue(i) * path.dt;
        damp[i - 1] = std::exp(-x);
        gain[i - 1] = decay_average(x);
    }
    for (int n = 0; n < intervals; ++n) {
        for (int i = 0; i < modes; ++i)
            state[i] = damp[i] * state[i] + path.increments(i, n) * gain[i];
        out.push_back(SpectralField(state));
    }
    return out;
}

// Exact second moment of the truncation error u - u_hat at a noise node,
// split into the deterministically evaluated part (modes up to the series
// cutoff) and an analytic bound on the remaining tail.
struct ModelError {
    double value = 0.0;       // modes 1..k_ref, exact
    double tail_bound = 0.0;  // bound on the contribution of modes > k_ref
    double total() const { return value + tail_bound; }
};

// Bound on sum_{i>k} 1/(2 lambda_i^4) via the integral comparison.
inline double mode_tail_bound(int k) {
    return 1.0 / (6.0 * kPi * kPi * kPi * kPi * static_cast<double>(k) * k * k);
}

inline int k_ref_for_tail(double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("k_ref_for_tail: tolerance must be positive");
    const double k = std::cbrt(1.0 / (6.0 * kPi * kPi * kPi * kPi * tol));
    return std::max(1, static_cast<int>(std::ceil(k)));
}

inline ModelError model_error_exact(int mode_cut, double dt, double t, int k_ref) {
    if (mode_cut < 1) throw std::invalid_argument("model_error_exact: mode cut must be >= 1");
    if (k_ref <= mode_cut) throw std::invalid_argument("model_error_exact: k_ref must exceed the mode cut");
    if (!(dt > 0.0) || !(t > 0.0)) throw std::invalid_argument("model_error_exact: dt and t must be positive");
    const double steps = t / dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps))
        throw std::invalid_argument("model_error_exact: t must be a noise node");

    ModelError result;
    for (int i = 1; i <= k_ref; ++i) {
        const double a = quartic_eigenvalue(i);
        const double x = a * dt;
        const double var = -std::expm1(-2.0 * a * t) / (2.0 * a);  // ||g_i||^2 on (0,t)
        if (i <= mode_cut) {
            // retained mode: what the interval-average projection misses
            const double geom = -std::expm1(-2.0 * a * t) / -std::expm1(-2.0 * x);
            result.value += geom * dt * projection_defect(x);
        } else {
            result.value += var;  // dropped mode keeps its full variance
        }
    }
    result.tail_bound = mode_tail_bound(k_ref);
    return result;
}

}  // namespace bspde
