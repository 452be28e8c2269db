#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "sercor/errors.hpp"

namespace sercor {

/// Dense square matrix, row major. Only what the eigenvalue and Cholesky
/// routines need; not a general linear algebra type.
class Matrix {
  public:
    Matrix() = default;
    explicit Matrix(int n) : n_(n), a_(static_cast<std::size_t>(n) * n, 0.0) {}

    int size() const { return n_; }
    double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * n_ + j]; }
    double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * n_ + j]; }

    double max_abs() const {
        double m = 0.0;
        for (double v : a_) m = std::max(m, std::abs(v));
        return m;
    }

  private:
    int n_ = 0;
    std::vector<double> a_;
};

inline Matrix matmul(const Matrix& x, const Matrix& y) {
    const int n = x.size();
    Matrix r(n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double xik = x(i, k);
            if (xik == 0.0) continue;
            for (int j = 0; j < n; ++j) r(i, j) += xik * y(k, j);
        }
    return r;
}

/// Upper-triangular U with sigma = U^T U. Throws FactorizationFailure when a
/// pivot is not positive.
inline Matrix cholesky_upper(const Matrix& sigma) {
    const int n = sigma.size();
    // Standard lower factor L with sigma = L L^T, returned transposed.
    Matrix l(n);
    for (int j = 0; j < n; ++j) {
        double d = sigma(j, j);
        for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) throw FactorizationFailure("cholesky: matrix is not positive definite");
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (int i = j + 1; i < n; ++i) {
            double s = sigma(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    Matrix u(n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) u(i, j) = l(j, i);
    return u;
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps, ascending.
/// Accurate and simple; fine for the small dense problems used here.
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
    const int n = a.size();
    const double scale = a.max_abs();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(a(i, j) - a(j, i)) > 1e-10 * (1.0 + scale))
                throw std::invalid_argument("symmetric_eigenvalues: matrix is not symmetric");

    auto off_diagonal = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
        return std::sqrt(2.0 * s);
    };

    const double tol = 1e-15 * std::max(1.0, scale) * n;
    for (int sweep = 0; sweep < 100 && off_diagonal() > tol; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }

    std::vector<double> lam(n);
    for (int i = 0; i < n; ++i) lam[i] = a(i, i);
    std::sort(lam.begin(), lam.end());
    return lam;
}

/// Adaptive quadrature settings. Panels use a 7-point Gauss rule embedded in
/// a 15-point Kronrod extension; panels whose error share exceeds the target
/// are bisected until the panel budget runs out.
struct Quadrature {
    double abs_tol = 1e-13;
    double rel_tol = 1e-11;
    int max_panels = 20000;
    static constexpr int nodes_per_panel = 15;
};

namespace detail {

// G7-K15 nodes and weights on [-1, 1].
inline constexpr double kGk15Nodes[8] = {
    0.000000000000000000000000000000000e+00, 2.077849550078984676006894037732449e-01,
    4.058451513773971669066064120769615e-01, 5.860872354676911302941448382587296e-01,
    7.415311855993944398638647732807884e-01, 8.648644233597690727897127886409262e-01,
    9.491079123427585245261896840478513e-01, 9.914553711208126392068546975263285e-01};
inline constexpr double kKronrodW[8] = {
    2.094821410847278280129991748917143e-01, 2.044329400752988924141619992346491e-01,
    1.903505780647854099132564024210137e-01, 1.690047266392679028265834265985503e-01,
    1.406532597155259187451895905102379e-01, 1.047900103222501838398763225415180e-01,
    6.309209262997855329070066318920429e-02, 2.293532201052922496373200805896959e-02};
inline constexpr double kGaussW[4] = {
    4.179591836734693877551020408163265e-01, 3.818300505051189449503697754889751e-01,
    2.797053914892766679014677714237796e-01, 1.294849661688696932706114326790820e-01};

template <class F>
inline void gk15(const F& f, double a, double b, double& result, double& error) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double f0 = f(mid);
    double k = kKronrodW[0] * f0;
    double g = kGaussW[0] * f0;
    for (int i = 1; i < 8; ++i) {
        const double dx = half * kGk15Nodes[i];
        const double fs = f(mid + dx) + f(mid - dx);
        k += kKronrodW[i] * fs;
        if (i % 2 == 0) g += kGaussW[i / 2] * fs;
    }
    result = k * half;
    error = std::abs((k - g) * half);
}

} // namespace detail

/// Integral of f over [a, b]. Throws QuadratureFailure (with the best
/// estimate attached) when the panel budget is exhausted before the error
/// bound meets max(abs_tol, rel_tol * |result|).
template <class F>
inline double integrate_interval(const F& f, double a, double b, const Quadrature& quad = {}) {
    if (!(b > a)) return 0.0;
    struct Panel {
        double a, b, value, error;
    };
    std::vector<Panel> heap;
    double r0, e0;
    detail::gk15(f, a, b, r0, e0);
    heap.push_back({a, b, r0, e0});
    double total = r0, err = e0;
    auto worse = [](const Panel& x, const Panel& y) { return x.error < y.error; };
    std::make_heap(heap.begin(), heap.end(), worse);
    int panels = 1;
    while (err > std::max(quad.abs_tol, quad.rel_tol * std::abs(total))) {
        if (panels >= quad.max_panels) throw QuadratureFailure("integrate: panel budget exhausted", total, err);
        std::pop_heap(heap.begin(), heap.end(), worse);
        const Panel p = heap.back();
        heap.pop_back();
        const double mid = 0.5 * (p.a + p.b);
        Panel l{p.a, mid, 0, 0}, r{mid, p.b, 0, 0};
        detail::gk15(f, l.a, l.b, l.value, l.error);
        detail::gk15(f, r.a, r.b, r.value, r.error);
        total += l.value + r.value - p.value;
        err += l.error + r.error - p.error;
        heap.push_back(l);
        std::push_heap(heap.begin(), heap.end(), worse);
        heap.push_back(r);
        std::push_heap(heap.begin(), heap.end(), worse);
        ++panels;
    }
    return total;
}

/// Integral of f over the whole line, for integrands whose mass is located
/// by (center, scale) and decays at least as fast as a Gaussian times a
/// polynomial. The window is doubled until the newly added shells stop
/// contributing at the requested tolerance.
template <class F>
inline double integrate(const F& f, const Quadrature& quad, double center, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("integrate: scale must be positive");
    double w = 8.0 * scale;
    double total = integrate_interval(f, center - w, center + w, quad);
    for (int round = 0; round < 12; ++round) {
        const double lo = integrate_interval(f, center - 2.0 * w, center - w, quad);
        const double hi = integrate_interval(f, center + w, center + 2.0 * w, quad);
        total += lo + hi;
        w *= 2.0;
        if (std::abs(lo) + std::abs(hi) <=
            0.5 * std::max(quad.abs_tol, quad.rel_tol * std::abs(total)))
            return total;
    }
    throw QuadratureFailure("integrate: window did not close", total, std::abs(total));
}

/// Bracket with f(lower) <= 0 <= f(upper) for a nondecreasing f.
struct RootBracket {
    double lower;
    double upper;
};

namespace detail {

// Newton iteration with a bisection safeguard on a sign-changing bracket.
// `eval` returns {f(x), f'(x)}; a NaN derivative forces bisection.
template <class Eval>
inline double safeguarded_root(const Eval& eval, double lo, double hi, double flo, double fhi,
                               double tol) {
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (flo > 0.0 || fhi < 0.0) throw NoRoot("solve_increasing: no sign change over bracket");
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        auto [fx, dfx] = eval(x);
        if (std::abs(fx) <= tol) return x;
        if (fx > 0.0)
            hi = x;
        else
            lo = x;
        if (hi - lo <= tol * (1.0 + std::abs(x))) return 0.5 * (lo + hi);
        double next = x - fx / dfx;
        if (!std::isfinite(next) || next <= lo || next >= hi) next = 0.5 * (lo + hi);
        x = next;
    }
    return x;
}

} // namespace detail

/// Root of a continuous nondecreasing f over the bracket, located to
/// |f| <= tol or bracket width <= tol * (1 + |root|).
template <class F>
inline double solve_increasing(const F& f, RootBracket bracket, double tol) {
    auto eval = [&](double x) { return std::pair<double, double>(f(x), std::numeric_limits<double>::quiet_NaN()); };
    return detail::safeguarded_root(eval, bracket.lower, bracket.upper, f(bracket.lower),
                                    f(bracket.upper), tol);
}

/// Same contract, with an analytic derivative for Newton steps.
template <class F, class DF>
inline double solve_increasing(const F& f, const DF& df, RootBracket bracket, double tol) {
    auto eval = [&](double x) { return std::pair<double, double>(f(x), df(x)); };
    return detail::safeguarded_root(eval, bracket.lower, bracket.upper, f(bracket.lower),
                                    f(bracket.upper), tol);
}

/// P(Z >= z) for standard normal Z.
inline double normal_upper_tail(double z) {
    return 0.5 * std::erfc(z * 0.7071067811865475244008443621048490);
}

inline double normal_density(double z) {
    return 0.3989422804014326779399460599343819 * std::exp(-0.5 * z * z);
}

/// log P(Z >= z), stable far into the tail (z up to a few hundred). Uses the
/// asymptotic series phi(z)/z * (1 - 1/z^2 + 3/z^4 - ...) once erfc would
/// lose relative accuracy.
inline double log_normal_upper_tail(double z) {
    if (z < 12.0) {
        if (z < -12.0) {
            // log(1 - upper_tail(-z)) with a tiny tail: -log1p keeps precision.
            const double lt = log_normal_upper_tail(-z);
            return std::log1p(-std::exp(lt));
        }
        return std::log(normal_upper_tail(z));
    }
    const double zs = 1.0 / (z * z);
    double term = 1.0, series = 1.0;
    for (int k = 1; k < 40; ++k) {
        term *= -(2.0 * k - 1.0) * zs;
        if (std::abs(term) < 1e-18) break;
        series += term;
    }
    return -0.5 * z * z - 0.9189385332046727417803297364056176 - std::log(z) + std::log(series);
}

} // namespace sercor
