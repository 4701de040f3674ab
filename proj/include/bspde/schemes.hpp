#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "bspde/fem.hpp"
#include "bspde/noise.hpp"
#include "bspde/spectral.hpp"

namespace bspde {

struct SchemeConfig {
    double horizon = 1.0;
    int steps = 1;
    bool modified_first_step = true;  // deterministic schemes only

    double dtau() const { return horizon / steps; }

    void validate() const {
        if (steps < 1 || !(horizon > 0.0)) throw std::invalid_argument("SchemeConfig: invalid grid");
    }
};

namespace detail {

inline void require_matching_horizon(const NoisePath& path, const SchemeConfig& cfg) {
    if (std::abs(path.horizon() - cfg.horizon) > 1e-12 * std::max(1.0, cfg.horizon))
        throw std::invalid_argument("scheme: noise horizon differs from scheme horizon");
}

// Per-mode amplification r = (1 - dtau a/2)/(1 + dtau a/2) and load gain
// s = 1/(1 + dtau a/2).
struct CnSymbol {
    double r;
    double s;
};

inline CnSymbol cn_symbol(double quartic_ev, double dtau) {
    const double y = 0.5 * dtau * quartic_ev;
    return {(1.0 - y) / (1.0 + y), 1.0 / (1.0 + y)};
}

// Accumulates, for scheme step m (1-based), the noise loads
// L_i^m = sum_n |Delta_m cap T_n| R_i^n / dt for all modes at once.
// Overlaps are computed in noise-interval index units, which keeps
// aligned and dyadically nested grids exact.
inline std::vector<double> step_loads(const NoisePath& path, const SchemeConfig& cfg, int m) {
    const double ratio = cfg.dtau() / path.dt;  // scheme width in noise intervals
    const double lo = (m - 1) * ratio;
    const double hi = m * ratio;
    std::vector<double> loads(path.modes(), 0.0);
    const int n_first = std::max(0, static_cast<int>(std::floor(lo)));
    for (int n = n_first; n < path.intervals(); ++n) {
        if (n >= hi) break;
        const double w = std::min(hi, static_cast<double>(n + 1)) - std::max(lo, static_cast<double>(n));
        if (w <= 0.0) continue;
        for (int i = 0; i < path.modes(); ++i) loads[i] += w * path.increments(i, n);
    }
    return loads;
}

}  // namespace detail

// Crank-Nicolson time stepping of the truncated-noise problem on the
// eigenbasis.  U^0 = 0; every step, including the first, is the plain
// trapezoidal step.
inline std::vector<SpectralField> cn_spectral_stochastic(const NoisePath& path,
                                                         const SchemeConfig& cfg) {
    cfg.validate();
    detail::require_matching_horizon(path, cfg);
    const int modes = path.modes();
    std::vector<detail::CnSymbol> symbols(modes);
    for (int i = 1; i <= modes; ++i) symbols[i - 1] = detail::cn_symbol(quartic_eigenvalue(i), cfg.dtau());
    std::vector<double> state(modes, 0.0);
    std::vector<SpectralField> out;
    out.reserve(cfg.steps + 1);
    out.push_back(SpectralField::zeros(modes));
    for (int m = 1; m <= cfg.steps; ++m) {
        const auto loads = detail::step_loads(path, cfg, m);
        for (int i = 0; i < modes; ++i)
            state[i] = symbols[i].r * state[i] + symbols[i].s * loads[i];
        out.push_back(SpectralField(state));
    }
    return out;
}

// One Crank-Nicolson step operator for a finite element space: a single
// factorization of (M + dtau/2 B) shared by every step, sample, and
// impulse response at this (space, dtau).
class CnFemOperator {
public:
    CnFemOperator(const FemSpace& space, double dtau)
        : space_(&space), dtau_(dtau),
          mass_(assemble_mass(space)), stiffness_(assemble_biharmonic(space)),
          implicit_matrix_(mass_.dim(), mass_.bandwidth()),
          solver_(make_implicit(mass_, stiffness_, dtau, implicit_matrix_)) {}

    const FemSpace& space() const { return *space_; }
    double dtau() const { return dtau_; }
    const BandedSymMatrix& mass() const { return mass_; }
    const BandedSymMatrix& stiffness() const { return stiffness_; }

    FemVector solve_implicit(FemVector rhs) const {
        solver_.solve_in_place(rhs);
        return rhs;
    }

    // (M - dtau/2 B) v
    FemVector apply_explicit(std::span<const double> v) const {
        FemVector out = mass_.multiply(v);
        const FemVector bv = stiffness_.multiply(v);
        for (int j = 0; j < mass_.dim(); ++j) out[j] -= 0.5 * dtau_ * bv[j];
        return out;
    }

    // full CN step: solve (M + dtau/2 B) u = (M - dtau/2 B) prev + load
    FemVector step(std::span<const double> prev, std::span<const double> load) const {
        FemVector rhs = apply_explicit(prev);
        for (int j = 0; j < mass_.dim(); ++j) rhs[j] += load[j];
        return solve_implicit(std::move(rhs));
    }

    // damped first step of the deterministic scheme:
    // (M + dtau/2 B) u = M prev
    FemVector damped_step(std::span<const double> prev) const {
        return solve_implicit(mass_.multiply(prev));
    }

private:
    static BandCholesky make_implicit(const BandedSymMatrix& mass, const BandedSymMatrix& stiffness,
                                      double dtau, BandedSymMatrix& out) {
        for (int j = 0; j < mass.dim(); ++j)
            for (int d = 0; d <= mass.bandwidth(); ++d) {
                const int i = j + d;
                if (i >= mass.dim()) break;
                out.add(i, j, mass.at(i, j) + 0.5 * dtau * stiffness.at(i, j));
            }
        return BandCholesky(out);
    }

    const FemSpace* space_;
    double dtau_;
    BandedSymMatrix mass_;
    BandedSymMatrix stiffness_;
    BandedSymMatrix implicit_matrix_;
    BandCholesky solver_;
};

// Crank-Nicolson finite element scheme for the truncated-noise problem.
inline std::vector<FemVector> cn_fem_stochastic(const FemSpace& space, const NoisePath& path,
                                                const SchemeConfig& cfg) {
    cfg.validate();
    detail::require_matching_horizon(path, cfg);
    const CnFemOperator op(space, cfg.dtau());
    std::vector<FemVector> out;
    out.reserve(cfg.steps + 1);
    out.emplace_back(space.dim(), 0.0);
    std::vector<FemVector> mode_loads;
    mode_loads.reserve(path.modes());
    for (int i = 1; i <= path.modes(); ++i) mode_loads.push_back(sine_load(space, i));
    for (int m = 1; m <= cfg.steps; ++m) {
        const auto coeffs = detail::step_loads(path, cfg, m);
        FemVector load(space.dim(), 0.0);
        for (int i = 0; i < path.modes(); ++i) {
            if (coeffs[i] == 0.0) continue;
            for (int j = 0; j < space.dim(); ++j) load[j] += coeffs[i] * mode_loads[i][j];
        }
        out.push_back(op.step(out.back(), load));
    }
    return out;
}

// Modified Crank-Nicolson for the homogeneous problem on the eigenbasis:
// one damped half-implicit first step, trapezoidal afterwards.  With the
// modification off the first step is the plain one (comparison only).
inline std::vector<SpectralField> cn_spectral_deterministic(const SpectralField& w0,
                                                            const SchemeConfig& cfg) {
    cfg.validate();
    const int modes = w0.modes();
    std::vector<double> state(w0.coeffs().begin(), w0.coeffs().end());
    std::vector<SpectralField> out;
    out.reserve(cfg.steps + 1);
    out.push_back(w0);
    for (int m = 1; m <= cfg.steps; ++m) {
        for (int i = 0; i < modes; ++i) {
            const auto sym = detail::cn_symbol(quartic_eigenvalue(i + 1), cfg.dtau());
            if (m == 1 && cfg.modified_first_step)
                state[i] *= sym.s;
            else
                state[i] *= sym.r;
        }
        out.push_back(SpectralField(state));
    }
    return out;
}

// Modified Crank-Nicolson finite element scheme for the homogeneous
// problem, started from the L2 projection of w0.
inline std::vector<FemVector> cn_fem_deterministic(const FemSpace& space, const SpectralField& w0,
                                                   const SchemeConfig& cfg) {
    cfg.validate();
    const CnFemOperator op(space, cfg.dtau());
    std::vector<FemVector> out;
    out.reserve(cfg.steps + 1);
    out.push_back(BandCholesky(op.mass()).solve(spectral_load(space, w0)));
    const FemVector zero(space.dim(), 0.0);
    for (int m = 1; m <= cfg.steps; ++m) {
        if (m == 1 && cfg.modified_first_step)
            out.push_back(op.damped_step(out.back()));
        else
            out.push_back(op.step(out.back(), zero));
    }
    return out;
}

}  // namespace bspde
