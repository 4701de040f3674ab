#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <utility>

#include "bspde/util.hpp"

namespace bspde {

// Deterministic Gaussian stream: mt19937_64 uniforms through an explicit
// Box-Muller transform, two uniforms per pair of normals.  Draw order is
// fixed by the caller, never by the scheduler.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : engine_(seed ^ 0x6a09e667f3bcc908ULL) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform_open();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    double uniform_open() {
        // (0, 1]: keeps log() finite.
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Wiener increments of the first `modes` spectral Brownian motions over a
// uniform grid: increments(i, n) holds the increment of motion i+1 over
// the n-th interval of width dt, an independent N(0, dt) draw.
struct NoisePath {
    Matrix increments;  // modes x intervals
    double dt = 0.0;

    int modes() const { return increments.rows(); }
    int intervals() const { return increments.cols(); }
    double horizon() const { return dt * intervals(); }
};

inline NoisePath sample_noise(int modes, int intervals, double horizon, std::uint64_t seed) {
    if (modes < 1 || intervals < 1) throw std::invalid_argument("sample_noise: empty grid");
    if (!(horizon > 0.0)) throw std::invalid_argument("sample_noise: horizon must be positive");
    NoisePath path;
    path.dt = horizon / intervals;
    path.increments = Matrix(modes, intervals);
    const double scale = std::sqrt(path.dt);
    GaussianStream stream(seed);
    for (int i = 0; i < modes; ++i)
        for (int n = 0; n < intervals; ++n) path.increments(i, n) = scale * stream.next();
    return path;
}

// Merges groups of `factor` consecutive increments.  The coarse path lives
// on the same Brownian motions as the fine one, which is what couples
// discretizations of different resolution in refinement studies.
inline NoisePath coarsen_time(const NoisePath& path, int factor) {
    if (factor < 1 || path.intervals() % factor != 0)
        throw std::invalid_argument("coarsen_time: factor must divide the interval count");
    NoisePath coarse;
    coarse.dt = path.dt * factor;
    coarse.increments = Matrix(path.modes(), path.intervals() / factor);
    for (int i = 0; i < path.modes(); ++i)
        for (int n = 0; n < coarse.intervals(); ++n) {
            double sum = 0.0;
            for (int j = 0; j < factor; ++j) sum += path.increments(i, n * factor + j);
            coarse.increments(i, n) = sum;
        }
    return coarse;
}

inline NoisePath truncate_modes(const NoisePath& path, int mode_cut) {
    if (mode_cut < 1 || mode_cut > path.modes())
        throw std::invalid_argument("truncate_modes: mode cut out of range");
    NoisePath out;
    out.dt = path.dt;
    out.increments = Matrix(mode_cut, path.intervals());
    for (int i = 0; i < mode_cut; ++i)
        for (int n = 0; n < path.intervals(); ++n) out.increments(i, n) = path.increments(i, n);
    return out;
}

// Sine coefficient of the piecewise-constant noise realization on interval
// n for mode i (both 1-based).
inline double what_coeff(const NoisePath& path, int n, int i) {
    if (i < 1 || i > path.modes() || n < 1 || n > path.intervals())
        throw std::invalid_argument("what_coeff: index out of range");
    return path.increments(i - 1, n - 1) / path.dt;
}

// L2 projection onto functions that are piecewise constant in time and
// span the retained sine modes.  The input holds the exact per-interval
// integrals of the mode coefficients of g; the output holds the
// per-interval coefficients of the projection.
inline Matrix project_Pi(const Matrix& interval_integrals, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("project_Pi: dt must be positive");
    Matrix coeffs(interval_integrals.rows(), interval_integrals.cols());
    for (int i = 0; i < coeffs.rows(); ++i)
        for (int n = 0; n < coeffs.cols(); ++n) coeffs(i, n) = interval_integrals(i, n) / dt;
    return coeffs;
}

// Both sides of the identity equating the stochastic integral of the
// projected integrand with the noise-weighted inner product of g.  The
// two sides are evaluated along independent arithmetic routes and must
// agree pathwise up to rounding.
inline std::pair<double, double> ito_vs_inner_identity(const NoisePath& path,
                                                       const Matrix& interval_integrals) {
    if (interval_integrals.rows() != path.modes() || interval_integrals.cols() != path.intervals())
        throw std::invalid_argument("ito_vs_inner_identity: shape mismatch");
    const Matrix coeffs = project_Pi(interval_integrals, path.dt);
    double lhs = 0.0;  // Ito integral of the simple process
    for (int i = 0; i < path.modes(); ++i)
        for (int n = 0; n < path.intervals(); ++n) lhs += coeffs(i, n) * path.increments(i, n);
    double rhs = 0.0;  // inner product of g against the noise realization
    for (int i = 0; i < path.modes(); ++i)
        for (int n = 0; n < path.intervals(); ++n)
            rhs += what_coeff(path, n + 1, i + 1) * interval_integrals(i, n);
    return {lhs, rhs};
}

// Binary dump: three 64-bit header fields (modes, intervals as signed
// integers, dt as IEEE double), then the increment matrix row-major as
// 64-bit doubles, all little-endian.
inline void save_path(const NoisePath& path, const std::filesystem::path& file) {
    static_assert(std::endian::native == std::endian::little, "dump format is little-endian");
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("save_path: cannot open " + file.string());
    const std::int64_t modes = path.modes();
    const std::int64_t intervals = path.intervals();
    out.write(reinterpret_cast<const char*>(&modes), 8);
    out.write(reinterpret_cast<const char*>(&intervals), 8);
    out.write(reinterpret_cast<const char*>(&path.dt), 8);
    out.write(reinterpret_cast<const char*>(path.increments.data().data()),
              static_cast<std::streamsize>(path.increments.data().size() * 8));
    if (!out) throw std::runtime_error("save_path: write failed");
}

inline NoisePath load_path(const std::filesystem::path& file) {
    static_assert(std::endian::native == std::endian::little, "dump format is little-endian");
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("load_path: cannot open " + file.string());
    std::int64_t modes = 0;
    std::int64_t intervals = 0;
    double dt = 0.0;
    in.read(reinterpret_cast<char*>(&modes), 8);
    in.read(reinterpret_cast<char*>(&intervals), 8);
    in.read(reinterpret_cast<char*>(&dt), 8);
    if (!in || modes < 1 || intervals < 1 || !(dt > 0.0))
        throw std::runtime_error("load_path: invalid header");
    NoisePath path;
    path.dt = dt;
    path.increments = Matrix(static_cast<int>(modes), static_cast<int>(intervals));
    in.read(reinterpret_cast<char*>(path.increments.data().data()),
            static_cast<std::streamsize>(path.increments.data().size() * 8));
    if (!in) throw std::runtime_error("load_path: truncated payload");
    return path;
}

}  // namespace bspde
