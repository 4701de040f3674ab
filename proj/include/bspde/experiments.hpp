#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bspde/schemes.hpp"
#include "bspde/util.hpp"

namespace bspde {

enum class ParameterKind { TimeStep, MeshWidth, ModeCut, NoiseStep };

inline std::string to_string(ParameterKind kind) {
    switch (kind) {
        case ParameterKind::TimeStep: return "dtau";
        case ParameterKind::MeshWidth: return "h";
        case ParameterKind::ModeCut: return "inverse_modes";
        case ParameterKind::NoiseStep: return "dt";
    }
    return "unknown";
}

struct ErrorCurve {
    ParameterKind kind = ParameterKind::TimeStep;
    std::vector<std::pair<double, double>> points;  // (parameter, error)

    void validate() const {
        if (points.size() < 3) throw std::invalid_argument("ErrorCurve: needs at least 3 points");
        for (std::size_t i = 1; i < points.size(); ++i)
            if (!(points[i].first < points[i - 1].first))
                throw std::invalid_argument("ErrorCurve: parameters must strictly decrease");
    }
};

struct RateReport {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    ErrorCurve curve;
};

// Least-squares fit of log(error) against log(parameter).
inline RateReport rate_regression(const ErrorCurve& curve) {
    curve.validate();
    for (const auto& [x, e] : curve.points)
        if (!(e > 0.0)) throw std::domain_error("rate_regression: degenerate curve (nonpositive error)");
    const int n = static_cast<int>(curve.points.size());
    double sx = 0, sy = 0;
    for (const auto& [x, e] : curve.points) {
        sx += std::log(x);
        sy += std::log(e);
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& [x, e] : curve.points) {
        const double dx = std::log(x) - mx;
        const double dy = std::log(e) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    RateReport report;
    report.curve = curve;
    report.slope = sxy / sxx;
    report.intercept = my - report.slope * mx;
    report.r_squared = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
    return report;
}

namespace detail {

inline int noise_interval_count(double horizon, double dt) {
    const double ratio = horizon / dt;
    const int n = static_cast<int>(std::round(ratio));
    if (n < 1 || std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio))
        throw std::invalid_argument("noise grid does not tile the horizon");
    return n;
}

// Terminal response of the spectral CN recursion to a unit load placed in
// scheme step m is s * r^{steps - m}; this accumulates the overlap-
// weighted combination for noise interval n (1-based).
struct CnModeKernel {
    double r = 0.0;
    double s = 0.0;
    std::vector<double> power;  // power[j] = r^j

    CnModeKernel(double quartic_ev, const SchemeConfig& cfg) {
        const auto sym = cn_symbol(quartic_ev, cfg.dtau());
        r = sym.r;
        s = sym.s;
        power.resize(cfg.steps);
        double v = 1.0;
        for (int j = 0; j < cfg.steps; ++j) {
            power[j] = v;
            v *= r;
        }
    }

    // Overlap weights in noise-interval index units (exact on aligned
    // and dyadically nested grids), matching the scheme's load rule.
    double terminal_coeff(int n, double dt, const SchemeConfig& cfg) const {
        const double ratio = cfg.dtau() / dt;  // scheme width in noise intervals
        const double lo = n - 1.0;
        const double hi = n;
        const int m_first = std::max(1, static_cast<int>(std::floor(lo / ratio)) + 1);
        double c = 0.0;
        for (int m = m_first; m <= cfg.steps; ++m) {
            const double a = (m - 1) * ratio;
            if (a >= hi) break;
            const double w = std::min(m * ratio, hi) - std::max(a, lo);
            if (w <= 0.0) continue;
            c += w * s * power[cfg.steps - m];
        }
        return c;
    }
};

// Terminal coefficient of the exact truncated-noise solution for a unit
// increment in noise interval n: e^{-a (T - t_n)} (1 - e^{-a dt})/(a dt).
inline double uhat_terminal_coeff(double quartic_ev, int n, int intervals, double dt) {
    const double x = quartic_ev * dt;
    return std::exp(-quartic_ev * dt * (intervals - n)) * decay_average(x);
}

}  // namespace detail

// Exact E|U^M - uhat(T)|^2 for the spectral CN scheme: both solutions are
// linear in the independent increments, so the expectation is the
// dt-weighted sum of squared differences of the deterministic impulse
// coefficients.  No sampling is involved.
inline double strong_error_exact_time(int mode_cut, double dt, const SchemeConfig& cfg,
                                      int threads = 1) {
    cfg.validate();
    if (mode_cut < 1) throw std::invalid_argument("strong_error_exact_time: mode cut must be >= 1");
    const int intervals = detail::noise_interval_count(cfg.horizon, dt);
    std::vector<double> per_mode(mode_cut, 0.0);
    parallel_for(mode_cut, threads, [&](int idx) {
        const int i = idx + 1;
        const double a = quartic_eigenvalue(i);
        const detail::CnModeKernel kernel(a, cfg);
        double sum = 0.0;
        for (int n = 1; n <= intervals; ++n) {
            const double d = kernel.terminal_coeff(n, dt, cfg) -
                             detail::uhat_terminal_coeff(a, n, intervals, dt);
            sum += d * d;
        }
        per_mode[idx] = dt * sum;
    });
    double total = 0.0;
    for (double v : per_mode) total += v;  // fixed mode order
    return total;
}

// Reference solution the finite element error is measured against.
enum class SpaceErrorReference {
    TimeDiscrete,  // spectral CN run on the same grid: isolates the space error
    ExactMild      // exact truncated-noise solution: full discretization error
};

// Exact E|U_h^M - reference(T)|^2 via one finite element impulse response
// per scheme step and mode, sharing a single factorization.  Requires the
// noise grid to be nested in the scheme grid (dt divides dtau); the
// general case runs through cn_fem_stochastic sampling instead.
inline double strong_error_exact_full(const FemSpace& space, int mode_cut, double dt,
                                      const SchemeConfig& cfg,
                                      SpaceErrorReference reference = SpaceErrorReference::TimeDiscrete,
                                      int threads = 1) {
    cfg.validate();
    if (mode_cut < 1) throw std::invalid_argument("strong_error_exact_full: mode cut must be >= 1");
    const int intervals = detail::noise_interval_count(cfg.horizon, dt);
    const double dtau = cfg.dtau();
    const int per_block = static_cast<int>(std::round(dtau / dt));
    if (per_block < 1 || std::abs(dtau - per_block * dt) > 1e-9 * dtau)
        throw std::invalid_argument("strong_error_exact_full: noise grid must be nested in the scheme grid");

    const CnFemOperator op(space, dtau);
    std::vector<double> per_mode(mode_cut, 0.0);
    parallel_for(mode_cut, threads, [&](int idx) {
        const int i = idx + 1;
        const double a = quartic_eigenvalue(i);
        const FemVector load = sine_load(space, i);

        // orbit of terminal responses: orbit step j is the terminal state
        // produced by a unit load in scheme step M - j
        std::vector<double> self(cfg.steps), cross(cfg.steps);
        FemVector state = op.solve_implicit(load);
        for (int j = 0; j < cfg.steps; ++j) {
            self[j] = op.mass().quadratic_form(state);
            double dot = 0.0;
            for (int q = 0; q < space.dim(); ++q) dot += load[q] * state[q];
            cross[j] = dot;
            if (j + 1 < cfg.steps) state = op.solve_implicit(op.apply_explicit(state));
        }

        const detail::CnModeKernel kernel(a, cfg);
        double sum = 0.0;
        for (int n = 1; n <= intervals; ++n) {
            const int m = (n + per_block - 1) / per_block;  // scheme block containing T_n
            const int j = cfg.steps - m;
            const double gamma = (reference == SpaceErrorReference::TimeDiscrete)
                                     ? kernel.s * kernel.power[j]
                                     : detail::uhat_terminal_coeff(a, n, intervals, dt);
            sum += self[j] - 2.0 * gamma * cross[j] + gamma * gamma;
        }
        per_mode[idx] = dt * sum;
    });
    double total = 0.0;
    for (double v : per_mode) total += v;
    return total;
}

struct McResult {
    double estimate = 0.0;
    double std_error = 0.0;
};

// Unbiased Monte Carlo mean of a per-sample squared error, with the
// normal-approximation standard error.  Sample streams are independent of
// scheduling, and the reduction runs in sample order.
inline McResult mc_strong_error(const std::function<double(std::uint64_t)>& sample_sq_error,
                                int samples, std::uint64_t seed, int threads = 1) {
    if (samples < 2) throw std::invalid_argument("mc_strong_error: needs at least two samples");
    std::vector<double> values(samples);
    parallel_for(samples, threads, [&](int s) { values[s] = sample_sq_error(derive_seed(seed, s)); });
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / samples;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (static_cast<double>(samples) - 1.0) / samples)};
}

inline McResult mc_strong_error_time(int mode_cut, double dt, const SchemeConfig& cfg, int samples,
                                     std::uint64_t seed, int threads = 1) {
    cfg.validate();
    const int intervals = detail::noise_interval_count(cfg.horizon, dt);
    return mc_strong_error(
        [&, intervals](std::uint64_t sample_seed) {
            const auto path = sample_noise(mode_cut, intervals, cfg.horizon, sample_seed);
            const auto cn = cn_spectral_stochastic(path, cfg).back();
            const auto exact = exact_uhat(path).back();
            double sq = 0.0;
            for (int i = 1; i <= mode_cut; ++i) {
                const double d = cn.coeff(i) - exact.coeff(i);
                sq += d * d;
            }
            return sq;
        },
        samples, seed, threads);
}

inline McResult mc_strong_error_full(const FemSpace& space, int mode_cut, double dt,
                                     const SchemeConfig& cfg, SpaceErrorReference reference,
                                     int samples, std::uint64_t seed, int threads = 1) {
    cfg.validate();
    const int intervals = detail::noise_interval_count(cfg.horizon, dt);
    const CnFemOperator op(space, cfg.dtau());
    std::vector<FemVector> loads;
    loads.reserve(mode_cut);
    for (int i = 1; i <= mode_cut; ++i) loads.push_back(sine_load(space, i));
    return mc_strong_error(
        [&, intervals](std::uint64_t sample_seed) {
            const auto path = sample_noise(mode_cut, intervals, cfg.horizon, sample_seed);
            FemVector state(space.dim(), 0.0);
            for (int m = 1; m <= cfg.steps; ++m) {
                const auto coeffs = detail::step_loads(path, cfg, m);
                FemVector load(space.dim(), 0.0);
                for (int i = 0; i < mode_cut; ++i)
                    for (int j = 0; j < space.dim(); ++j) load[j] += coeffs[i] * loads[i][j];
                state = op.step(state, load);
            }
            const SpectralField ref = (reference == SpaceErrorReference::TimeDiscrete)
                                          ? cn_spectral_stochastic(path, cfg).back()
                                          : exact_uhat(path).back();
            double sq = op.mass().quadratic_form(state);
            for (int i = 1; i <= mode_cut; ++i) {
                const double y = ref.coeff(i);
                double dot = 0.0;
                for (int j = 0; j < space.dim(); ++j) dot += loads[i - 1][j] * state[j];
                sq += y * y - 2.0 * y * dot;
            }
            return sq;
        },
        samples, seed, threads);
}

// Which discrete-in-time L2 error the deterministic studies measure.
enum class ErrorSampling {
    MidpointAverage,  // dtau-weighted midpoint values (first entry handled per scheme)
    Nodal             // dtau-weighted nodal values
};

// Time-refinement study of the modified CN scheme against the exact
// semigroup solution, per-mode closed forms throughout.
inline RateReport deterministic_time_rate(ErrorSampling sampling, const SpectralField& w0,
                                          double horizon, const std::vector<int>& step_counts) {
    ErrorCurve curve;
    curve.kind = ParameterKind::TimeStep;
    for (const int steps : step_counts) {
        SchemeConfig cfg{.horizon = horizon, .steps = steps};
        cfg.validate();
        const auto fields = cn_spectral_deterministic(w0, cfg);
        const double dtau = cfg.dtau();
        double sum = 0.0;
        for (int m = 1; m <= steps; ++m) {
            double term = 0.0;
            for (int k = 1; k <= w0.modes(); ++k) {
                const double a = quartic_eigenvalue(k);
                double d;
                if (sampling == ErrorSampling::Nodal) {
                    d = fields[m].coeff(k) - std::exp(-a * m * dtau) * w0.coeff(k);
                } else {
                    const double scheme_mid = 0.5 * (fields[m].coeff(k) + fields[m - 1].coeff(k));
                    const double exact_mid = 0.5 * (std::exp(-a * m * dtau) + std::exp(-a * (m - 1) * dtau)) *
                                             w0.coeff(k);
                    d = scheme_mid - exact_mid;
                }
                term += d * d;
            }
            sum += dtau * term;
        }
        curve.points.emplace_back(dtau, std::sqrt(sum));
    }
    return rate_regression(curve);
}

namespace detail {

// || v_h - y ||_{L2}^2 with y spectral, through assembled inner products.
inline double fem_vs_spectral_sq(const BandedSymMatrix& mass, const std::vector<FemVector>& loads,
                                 std::span<const double> v, const SpectralField& y) {
    double sq = mass.quadratic_form(v);
    for (int k = 1; k <= y.modes(); ++k) {
        const double a = y.coeff(k);
        if (a == 0.0) continue;
        double dot = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) dot += loads[k - 1][j] * v[j];
        sq += a * a - 2.0 * a * dot;
    }
    return sq;
}

}  // namespace detail

// Mesh-refinement study of the modified CN finite element scheme against
// the modified CN spectral scheme on the same time grid.
inline RateReport deterministic_space_rate(ErrorSampling sampling, const SpectralField& w0,
                                           double horizon, int steps, int degree,
                                           const std::vector<int>& element_counts) {
    SchemeConfig cfg{.horizon = horizon, .steps = steps};
    cfg.validate();
    const auto reference = cn_spectral_deterministic(w0, cfg);
    const double dtau = cfg.dtau();
    ErrorCurve curve;
    curve.kind = ParameterKind::MeshWidth;
    for (const int elements : element_counts) {
        FemSpace space(Mesh::uniform(elements), degree);
        const auto mass = assemble_mass(space);
        std::vector<FemVector> loads;
        for (int k = 1; k <= w0.modes(); ++k) loads.push_back(sine_load(space, k));
        const auto fields = cn_fem_deterministic(space, w0, cfg);
        double sum = 0.0;
        if (sampling == ErrorSampling::Nodal) {
            for (int m = 1; m <= steps; ++m)
                sum += dtau * detail::fem_vs_spectral_sq(mass, loads, fields[m], reference[m]);
        } else {
            // first entry is the nodal value at m = 1, the rest midpoints
            sum += dtau * detail::fem_vs_spectral_sq(mass, loads, fields[1], reference[1]);
            for (int m = 2; m <= steps; ++m) {
                FemVector mid(space.dim());
                for (int j = 0; j < space.dim(); ++j) mid[j] = 0.5 * (fields[m][j] + fields[m - 1][j]);
                std::vector<double> coeffs(w0.modes());
                for (int k = 1; k <= w0.modes(); ++k)
                    coeffs[k - 1] = 0.5 * (reference[m].coeff(k) + reference[m - 1].coeff(k));
                sum += dtau * detail::fem_vs_spectral_sq(mass, loads, mid, SpectralField(coeffs));
            }
        }
        curve.points.emplace_back(space.mesh().h_max(), std::sqrt(std::max(0.0, sum)));
    }
    return rate_regression(curve);
}

}  // namespace bspde
