#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "bspde/spectral.hpp"

namespace bspde {

using FemVector = std::vector<double>;

struct Mesh {
    std::vector<double> nodes;  // strictly increasing, nodes.front()=0, nodes.back()=1

    static Mesh uniform(int elements) {
        if (elements < 1) throw std::invalid_argument("Mesh: needs at least one element");
        Mesh mesh;
        mesh.nodes.resize(elements + 1);
        for (int i = 0; i <= elements; ++i) mesh.nodes[i] = static_cast<double>(i) / elements;
        mesh.nodes.back() = 1.0;
        return mesh;
    }

    explicit Mesh() = default;
    explicit Mesh(std::vector<double> pts) : nodes(std::move(pts)) { validate(); }

    void validate() const {
        if (nodes.size() < 2 || nodes.front() != 0.0 || nodes.back() != 1.0)
            throw std::invalid_argument("Mesh: nodes must run from 0 to 1");
        for (std::size_t i = 1; i < nodes.size(); ++i)
            if (!(nodes[i] > nodes[i - 1])) throw std::invalid_argument("Mesh: nodes must increase");
    }

    int elements() const { return static_cast<int>(nodes.size()) - 1; }
    double length(int e) const { return nodes[e + 1] - nodes[e]; }
    double h_max() const {
        double h = 0.0;
        for (int e = 0; e < elements(); ++e) h = std::max(h, length(e));
        return h;
    }
};

// Symmetric banded matrix, packed lower storage: entry(j+d, j) for
// d = 0..bandwidth lives at band[d * dim + j].
class BandedSymMatrix {
public:
    BandedSymMatrix() = default;
    BandedSymMatrix(int dim, int bandwidth)
        : dim_(dim), bandwidth_(bandwidth),
          band_(static_cast<std::size_t>(bandwidth + 1) * dim, 0.0) {}

    int dim() const { return dim_; }
    int bandwidth() const { return bandwidth_; }

    double at(int i, int j) const {
        if (i < j) std::swap(i, j);
        if (i - j > bandwidth_) return 0.0;
        return band_[static_cast<std::size_t>(i - j) * dim_ + j];
    }

    void add(int i, int j, double v) {
        if (i < j) std::swap(i, j);
        if (i - j > bandwidth_) throw std::invalid_argument("BandedSymMatrix: outside band");
        band_[static_cast<std::size_t>(i - j) * dim_ + j] += v;
    }

    FemVector multiply(std::span<const double> x) const {
        FemVector y(dim_, 0.0);
        for (int j = 0; j < dim_; ++j) {
            y[j] += band_[j] * x[j];
            for (int d = 1; d <= bandwidth_; ++d) {
                const int i = j + d;
                if (i >= dim_) break;
                const double v = band_[static_cast<std::size_t>(d) * dim_ + j];
                y[i] += v * x[j];
                y[j] += v * x[i];
            }
        }
        return y;
    }

    double quadratic_form(std::span<const double> x) const {
        double s = 0.0;
        const FemVector y = multiply(x);
        for (int i = 0; i < dim_; ++i) s += x[i] * y[i];
        return s;
    }

private:
    int dim_ = 0;
    int bandwidth_ = 0;
    std::vector<double> band_;

    friend class BandCholesky;
};

// Cholesky factorization preserving the band.  Construction fails on
// matrices that are not positive definite.
class BandCholesky {
public:
    explicit BandCholesky(const BandedSymMatrix& a) : factor_(a) {
        const int n = factor_.dim_;
        const int bw = factor_.bandwidth_;
        auto entry = [&](int i, int j) -> double& {
            return factor_.band_[static_cast<std::size_t>(i - j) * n + j];
        };
        for (int j = 0; j < n; ++j) {
            for (int d = 0; d <= bw && j + d < n; ++d) {
                const int i = j + d;
                double sum = entry(i, j);
                const int k_lo = std::max(0, i - bw);
                for (int k = k_lo; k < j; ++k) sum -= entry(i, k) * entry(j, k);
                if (i == j) {
                    if (!(sum > 0.0)) throw std::runtime_error("BandCholesky: matrix not positive definite");
                    entry(j, j) = std::sqrt(sum);
                } else {
                    entry(i, j) = sum / entry(j, j);
                }
            }
        }
    }

    void solve_in_place(FemVector& x) const {
        const int n = factor_.dim_;
        const int bw = factor_.bandwidth_;
        const auto& band = factor_.band_;
        for (int i = 0; i < n; ++i) {
            double s = x[i];
            const int k_lo = std::max(0, i - bw);
            for (int k = k_lo; k < i; ++k) s -= band[static_cast<std::size_t>(i - k) * n + k] * x[k];
            x[i] = s / band[i];
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = x[i];
            const int k_hi = std::min(n - 1, i + bw);
            for (int k = i + 1; k <= k_hi; ++k) s -= band[static_cast<std::size_t>(k - i) * n + i] * x[k];
            x[i] = s / band[i];
        }
    }

    FemVector solve(FemVector rhs) const {
        solve_in_place(rhs);
        return rhs;
    }

    int dim() const { return factor_.dim_; }

private:
    BandedSymMatrix factor_;
};

namespace detail {

// Cox-de Boor evaluation of one B-spline (index j, given degree) on the
// padded knot vector; deriv <= 2.
inline double bspline_eval(const std::vector<double>& knots, int j, int degree, double x, int deriv) {
    if (deriv > 0) {
        const double dl = knots[j + degree] - knots[j];
        const double dr = knots[j + degree + 1] - knots[j + 1];
        double v = 0.0;
        if (dl > 0.0) v += degree / dl * bspline_eval(knots, j, degree - 1, x, deriv - 1);
        if (dr > 0.0) v -= degree / dr * bspline_eval(knots, j + 1, degree - 1, x, deriv - 1);
        return v;
    }
    if (degree == 0) return (x >= knots[j] && x < knots[j + 1]) ? 1.0 : 0.0;
    const double dl = knots[j + degree] - knots[j];
    const double dr = knots[j + degree + 1] - knots[j + 1];
    double v = 0.0;
    if (dl > 0.0) v += (x - knots[j]) / dl * bspline_eval(knots, j, degree - 1, x, 0);
    if (dr > 0.0) v += (knots[j + degree + 1] - x) / dr * bspline_eval(knots, j + 1, degree - 1, x, 0);
    return v;
}

inline constexpr std::array<double, 4> kGauss8Nodes = {
    0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363};
inline constexpr std::array<double, 4> kGauss8Weights = {
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

}  // namespace detail

// Gauss-Legendre 8-point rule mapped to [a, b].
template <typename F>
double gauss8(const F& f, double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double s = 0.0;
    for (int q = 0; q < 4; ++q) {
        const double dx = half * detail::kGauss8Nodes[q];
        s += detail::kGauss8Weights[q] * (f(mid - dx) + f(mid + dx));
    }
    return s * half;
}

// H2-conforming space on (0,1) with essential conditions v(0)=v(1)=0:
// cubic Hermite elements for degree 3, C^1 quadratic B-splines for
// degree 2.  Every basis function is stored per element as a polynomial
// in the local coordinate t = x - x_left.
class FemSpace {
public:
    FemSpace(Mesh mesh, int degree) : mesh_(std::move(mesh)), degree_(degree) {
        mesh_.validate();
        if (degree_ != 2 && degree_ != 3) throw std::invalid_argument("FemSpace: degree is 2 or 3");
        if (degree_ == 2 && mesh_.elements() < 2)
            throw std::invalid_argument("FemSpace: quadratic splines need at least two elements");
        if (degree_ == 3)
            build_hermite();
        else
            build_quadratic_spline();
    }

    const Mesh& mesh() const { return mesh_; }
    int degree() const { return degree_; }
    int dim() const { return dim_; }
    int local_functions() const { return degree_ == 3 ? 4 : 3; }

    // global dof of local function l on element e; -1 when constrained out
    int dof(int e, int l) const { return dofs_[static_cast<std::size_t>(e) * local_functions() + l]; }

    // polynomial coefficients of local function l on element e
    std::span<const double> poly(int e, int l) const {
        const int stride = degree_ + 1;
        return {poly_.data() +
                    (static_cast<std::size_t>(e) * local_functions() + l) * stride,
                static_cast<std::size_t>(stride)};
    }

    int element_of(double x) const {
        if (x < 0.0 || x > 1.0) throw std::invalid_argument("FemSpace: point outside [0,1]");
        const auto it = std::upper_bound(mesh_.nodes.begin(), mesh_.nodes.end(), x);
        int e = static_cast<int>(it - mesh_.nodes.begin()) - 1;
        return std::clamp(e, 0, mesh_.elements() - 1);
    }

    double eval_local(int e, int l, double x, int deriv = 0) const {
        const auto c = poly(e, l);
        const double t = x - mesh_.nodes[e];
        double v = 0.0;
        for (int m = degree_; m >= deriv; --m) {
            double factor = 1.0;
            for (int d = 0; d < deriv; ++d) factor *= (m - d);
            v = v * t + factor * c[m];
        }
        return v;
    }

    // member function with given coefficient vector, evaluated inside
    // element e (callers pin the element to probe one-sided limits)
    double evaluate_in_element(std::span<const double> coeffs, int e, double x, int deriv = 0) const {
        double v = 0.0;
        for (int l = 0; l < local_functions(); ++l) {
            const int j = dof(e, l);
            if (j >= 0) v += coeffs[j] * eval_local(e, l, x, deriv);
        }
        return v;
    }

    double evaluate(std::span<const double> coeffs, double x, int deriv = 0) const {
        return evaluate_in_element(coeffs, element_of(x), x, deriv);
    }

    // single global basis function, probed inside element e (zero if the
    // function is not supported there)
    double eval_basis_in_element(int j, int e, double x, int deriv = 0) const {
        double v = 0.0;
        for (int l = 0; l < local_functions(); ++l)
            if (dof(e, l) == j) v += eval_local(e, l, x, deriv);
        return v;
    }

    int bandwidth() const { return degree_ == 3 ? 3 : 2; }

private:
    void push_poly(std::array<double, 4> c) {
        for (int m = 0; m <= degree_; ++m) poly_.push_back(c[m]);
    }

    void build_hermite() {
        const int n = mesh_.elements();
        dim_ = 2 * n;
        // slope scale per node: mean of adjacent element lengths
        std::vector<double> scale(n + 1);
        for (int j = 0; j <= n; ++j) {
            if (j == 0)
                scale[j] = mesh_.length(0);
            else if (j == n)
                scale[j] = mesh_.length(n - 1);
            else
                scale[j] = 0.5 * (mesh_.length(j - 1) + mesh_.length(j));
        }
        auto value_dof = [&](int j) { return (j == 0 || j == n) ? -1 : 2 * j - 1; };
        auto slope_dof = [&](int j) { return j == 0 ? 0 : (j == n ? 2 * n - 1 : 2 * j); };
        for (int e = 0; e < n; ++e) {
            const double h = mesh_.length(e);
            const double h2 = h * h;
            const double h3 = h2 * h;
            dofs_.push_back(value_dof(e));
            push_poly({1.0, 0.0, -3.0 / h2, 2.0 / h3});
            dofs_.push_back(slope_dof(e));
            const double sl = scale[e];
            push_poly({0.0, sl, -2.0 * sl / h, sl / h2});
            dofs_.push_back(value_dof(e + 1));
            push_poly({0.0, 0.0, 3.0 / h2, -2.0 / h3});
            dofs_.push_back(slope_dof(e + 1));
            const double sr = scale[e + 1];
            push_poly({0.0, 0.0, -sr / h, sr / h2});
        }
    }

    void build_quadratic_spline() {
        const int n = mesh_.elements();
        dim_ = n;
        // clamped knot vector with triple end knots
        std::vector<double> knots;
        knots.reserve(n + 5);
        knots.insert(knots.end(), 2, mesh_.nodes.front());
        knots.insert(knots.end(), mesh_.nodes.begin(), mesh_.nodes.end());
        knots.insert(knots.end(), 2, mesh_.nodes.back());
        // splines 0 and n+1 carry the endpoint values and are dropped
        for (int e = 0; e < n; ++e) {
            const double xl = mesh_.nodes[e];
            const double xm = 0.5 * (xl + mesh_.nodes[e + 1]);
            for (int local = 0; local < 3; ++local) {
                const int spline = e + local;
                dofs_.push_back((spline >= 1 && spline <= n) ? spline - 1 : -1);
                const double v0 = detail::bspline_eval(knots, spline, 2, xm, 0);
                const double v1 = detail::bspline_eval(knots, spline, 2, xm, 1);
                const double v2 = detail::bspline_eval(knots, spline, 2, xm, 2);
                // Taylor about the element's left edge
                const double tm = xm - xl;
                const double c2 = 0.5 * v2;
                const double c1 = v1 - 2.0 * c2 * tm;
                const double c0 = v0 - c1 * tm - c2 * tm * tm;
                push_poly({c0, c1, c2, 0.0});
            }
        }
    }

    Mesh mesh_;
    int degree_ = 0;
    int dim_ = 0;
    std::vector<int> dofs_;
    std::vector<double> poly_;
};

namespace detail {

// exact integral over the element of the product of two local
// polynomials, optionally differentiated
inline double element_product_integral(const FemSpace& space, int e, int l1, int l2, int deriv) {
    const int p = space.degree();
    const auto a = space.poly(e, l1);
    const auto b = space.poly(e, l2);
    std::array<double, 4> da{}, db{};
    for (int m = deriv; m <= p; ++m) {
        double factor = 1.0;
        for (int d = 0; d < deriv; ++d) factor *= (m - d);
        da[m - deriv] = factor * a[m];
        db[m - deriv] = factor * b[m];
    }
    const int q = p - deriv;
    const double h = space.mesh().length(e);
    double integral = 0.0;
    for (int m1 = 0; m1 <= q; ++m1)
        for (int m2 = 0; m2 <= q; ++m2)
            integral += da[m1] * db[m2] * std::pow(h, m1 + m2 + 1) / (m1 + m2 + 1);
    return integral;
}

inline BandedSymMatrix assemble(const FemSpace& space, int deriv) {
    BandedSymMatrix out(space.dim(), space.bandwidth());
    for (int e = 0; e < space.mesh().elements(); ++e)
        for (int l1 = 0; l1 < space.local_functions(); ++l1) {
            const int i = space.dof(e, l1);
            if (i < 0) continue;
            for (int l2 = 0; l2 <= l1; ++l2) {
                const int j = space.dof(e, l2);
                if (j < 0) continue;
                out.add(i, j, element_product_integral(space, e, l1, l2, deriv));
            }
        }
    return out;
}

}  // namespace detail

inline BandedSymMatrix assemble_mass(const FemSpace& space) { return detail::assemble(space, 0); }

inline BandedSymMatrix assemble_biharmonic(const FemSpace& space) { return detail::assemble(space, 2); }

// Load vector (eps_k, phi_j): per element the moments
// S_m = int_0^h t^m sin(a (x_l + t)) dt are produced by the integration by
// parts recurrence, which stays accurate for k h >> 1 where fixed-order
// quadrature degrades.
inline FemVector sine_load(const FemSpace& space, int k) {
    if (k < 1) throw std::invalid_argument("sine_load: mode index starts at 1");
    const double a = eigenvalue(k);
    FemVector load(space.dim(), 0.0);
    const int p = space.degree();
    for (int e = 0; e < space.mesh().elements(); ++e) {
        const double xl = space.mesh().nodes[e];
        const double xr = space.mesh().nodes[e + 1];
        const double h = xr - xl;
        const double sl = std::sin(a * xl), cl = std::cos(a * xl);
        const double sr = std::sin(a * xr), cr = std::cos(a * xr);
        std::array<double, 4> s_m{}, c_m{};
        s_m[0] = (cl - cr) / a;
        c_m[0] = (sr - sl) / a;
        double hm = 1.0;  // h^m
        for (int m = 1; m <= p; ++m) {
            hm *= h;
            s_m[m] = -hm * cr / a + m / a * c_m[m - 1];
            c_m[m] = hm * sr / a - m / a * s_m[m - 1];
        }
        for (int l = 0; l < space.local_functions(); ++l) {
            const int j = space.dof(e, l);
            if (j < 0) continue;
            const auto c = space.poly(e, l);
            double v = 0.0;
            for (int m = 0; m <= p; ++m) v += c[m] * s_m[m];
            load[j] += std::sqrt(2.0) * v;
        }
    }
    return load;
}

inline FemVector spectral_load(const FemSpace& space, const SpectralField& g) {
    FemVector rhs(space.dim(), 0.0);
    for (int k = 1; k <= g.modes(); ++k) {
        const double a = g.coeff(k);
        if (a == 0.0) continue;
        const FemVector lk = sine_load(space, k);
        for (int j = 0; j < space.dim(); ++j) rhs[j] += a * lk[j];
    }
    return rhs;
}

inline FemVector function_load(const FemSpace& space, const std::function<double(double)>& f,
                               int panels_per_element = 4) {
    FemVector rhs(space.dim(), 0.0);
    for (int e = 0; e < space.mesh().elements(); ++e) {
        const double xl = space.mesh().nodes[e];
        const double h = space.mesh().length(e);
        for (int l = 0; l < space.local_functions(); ++l) {
            const int j = space.dof(e, l);
            if (j < 0) continue;
            double v = 0.0;
            for (int s = 0; s < panels_per_element; ++s) {
                const double a = xl + h * s / panels_per_element;
                const double b = xl + h * (s + 1) / panels_per_element;
                v += gauss8([&](double x) { return f(x) * space.eval_local(e, l, x); }, a, b);
            }
            rhs[j] += v;
        }
    }
    return rhs;
}

inline FemVector l2_project(const FemSpace& space, const SpectralField& g) {
    return BandCholesky(assemble_mass(space)).solve(spectral_load(space, g));
}

inline FemVector l2_project(const FemSpace& space, const std::function<double(double)>& f,
                            int panels_per_element = 4) {
    return BandCholesky(assemble_mass(space)).solve(function_load(space, f, panels_per_element));
}

// Galerkin solution of the quartic two-point problem with load f.
inline FemVector solve_Tbh(const FemSpace& space, const SpectralField& f) {
    return BandCholesky(assemble_biharmonic(space)).solve(spectral_load(space, f));
}

// || v_h - g ||_{L2}: pointwise difference integrated element by element,
// panel count scaled to the highest retained mode.
inline double fem_vs_spectral_error(const FemSpace& space, std::span<const double> v,
                                    const SpectralField& g) {
    double total = 0.0;
    for (int e = 0; e < space.mesh().elements(); ++e) {
        const double xl = space.mesh().nodes[e];
        const double h = space.mesh().length(e);
        const int panels = std::max(1, static_cast<int>(std::ceil(1.5 * g.modes() * h)));
        for (int s = 0; s < panels; ++s) {
            const double a = xl + h * s / panels;
            const double b = xl + h * (s + 1) / panels;
            total += gauss8(
                [&](double x) {
                    const double d = space.evaluate_in_element(v, e, x) - g.evaluate(x);
                    return d * d;
                },
                a, b);
        }
    }
    return std::sqrt(total);
}

}  // namespace bspde
