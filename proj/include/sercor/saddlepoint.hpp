#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sercor/ar1.hpp"
#include "sercor/cgf.hpp"
#include "sercor/errors.hpp"
#include "sercor/numerics.hpp"
#include "sercor/parallel.hpp"

namespace sercor {

/// One tail query: the zero-tilt point u0, the saddlepoint t_hat, the signed
/// deviate W, the curvature factor Psi, the corrected deviate W_plus, and
/// the tail probability. For conditional backends the tail is
/// Phibar(sqrt(m) W_plus); the unconditional backend works on total scale
/// and reports u0 as the u at which the tilt vanishes.
struct SaddleResult {
    double u = 0.0;
    double u0 = 0.0;
    double t_hat = 0.0;
    double w = 0.0;
    double psi = 1.0;
    double w_plus = 0.0;
    double tail = 0.0;
    bool feasible = false;
};

template <class Cgf>
concept ConditionalCgfBackend = requires(const Cgf& c, double t, double u) {
    { c.eval(t, u) } -> std::convertible_to<CgfEvaluation>;
    { c.t_lower(u) } -> std::convertible_to<double>;
    { c.a_bar_sq() } -> std::convertible_to<double>;
    { c.b_bar() } -> std::convertible_to<double>;
    { c.m() } -> std::convertible_to<int>;
    { compute_u0(c) } -> std::convertible_to<U0Result>;
};

namespace detail {

// Root tolerance for the saddle equation, well under the 1e-10 residual the
// downstream checks assert.
inline constexpr double kSaddleTol = 1e-12;

// Switch point for the small-deviate branch: below sqrt(m)|W| = 1e-3 the
// singular log(Psi)/(mW) evaluation is replaced by its limit
// K30 / (6 m K20^(3/2)), with K30 taken by centered differences of K20.
inline constexpr double kSmallW = 1e-3;

template <class K10, class K20>
inline double solve_saddle(const K10& k10, const K20& k20, double lo, double hi, double flo,
                           double fhi, double ftol) {
    auto eval = [&](double t) { return std::pair<double, double>(k10(t), k20(t)); };
    return detail::safeguarded_root(eval, lo, hi, flo, fhi, ftol);
}

} // namespace detail

/// Tail probability P(R > u | conditioning) by the corrected-normal
/// approximation on the conditional CGF backend. Zero (with feasible=false)
/// above the feasibility boundary; exact 1/2 at u = u0; for u > u0 the
/// saddlepoint is bracketed in (0, T] by doubling, for u < u0 by descending
/// toward the domain pole.
template <ConditionalCgfBackend Cgf>
inline SaddleResult conditional_tail(const Cgf& cgf, double u) {
    if (!(u > 0.0))
        throw std::invalid_argument("conditional_tail: u must be positive");
    SaddleResult res;
    res.u = u;
    const double margin = cgf.a_bar_sq() - 4.0 * u * u * cgf.b_bar();
    res.u0 = compute_u0(cgf).u0;
    if (margin <= 0.0) {
        res.feasible = false;
        res.tail = 0.0;
        return res;
    }
    res.feasible = true;

    const auto at0 = cgf.eval(0.0, u);
    const double scale0 = 1.0 + std::abs(at0.k10);
    const double ftol = detail::kSaddleTol * scale0;
    auto k10 = [&](double t) {
        const auto e = cgf.eval(t, u);
        if (!e.feasible) return std::numeric_limits<double>::quiet_NaN();
        return e.k10;
    };
    auto k20 = [&](double t) { return cgf.eval(t, u).k20; };

    double t_hat = 0.0;
    double blo = 0.0, bhi = 0.0;
    if (std::abs(at0.k10) <= ftol) {
        t_hat = 0.0;
    } else if (at0.k10 < 0.0) {
        // u above u0: K10 rises to margin/(4u) > 0, so doubling finds a
        // sign change.
        double T = 1.0 / (4.0 * u * cgf.b_bar() + 1e-12);
        double fT = k10(T);
        int doublings = 0;
        while (!(fT > 0.0)) {
            T *= 2.0;
            fT = k10(T);
            if (++doublings > 60)
                throw SaddleFailure("conditional_tail: no sign change while doubling", u, res.u0,
                                    0.0, T);
        }
        blo = 0.0;
        bhi = T;
        t_hat = detail::solve_saddle(k10, k20, 0.0, T, at0.k10, fT, ftol);
    } else {
        // u below u0: the saddlepoint is negative; approach the domain pole
        // geometrically until the sign flips.
        const double pole = cgf.t_lower(u);
        if (!(pole < 0.0))
            throw SaddleFailure("conditional_tail: backend has no negative-t domain", u, res.u0,
                                0.0, 0.0);
        double delta = 0.5;
        double lo = pole * (1.0 - delta);
        double flo = k10(lo);
        while (!(std::isfinite(flo) && flo < 0.0)) {
            delta *= 0.25;
            if (delta < 1e-14)
                throw SaddleFailure("conditional_tail: could not bracket below u0", u, res.u0,
                                    pole, 0.0);
            lo = pole * (1.0 - delta);
            flo = k10(lo);
        }
        blo = lo;
        bhi = 0.0;
        t_hat = detail::solve_saddle(k10, k20, lo, 0.0, flo, at0.k10, ftol);
    }

    res.t_hat = t_hat;
    if (t_hat == 0.0) {
        res.w = 0.0;
        res.w_plus = 0.0;
        res.psi = 1.0;
        res.tail = 0.5;
        return res;
    }
    const auto at_hat = cgf.eval(t_hat, u);
    if (!at_hat.feasible || !(at_hat.k20 > 0.0))
        throw SaddleFailure("conditional_tail: degenerate curvature at the saddlepoint", u,
                            res.u0, blo, bhi);
    const double m = static_cast<double>(cgf.m());
    const double w = (t_hat > 0.0 ? 1.0 : -1.0) * std::sqrt(std::max(0.0, -2.0 * at_hat.k));
    const double psi = w / (t_hat * std::sqrt(at_hat.k20));
    res.w = w;
    res.psi = psi;
    const double sm = std::sqrt(m);
    if (sm * std::abs(w) < detail::kSmallW) {
        const double h = 1e-4;
        const double k30 = (cgf.eval(t_hat + h, u).k20 - cgf.eval(t_hat - h, u).k20) / (2.0 * h);
        res.w_plus = w + k30 / (6.0 * m * at_hat.k20 * std::sqrt(at_hat.k20));
        res.tail = normal_upper_tail(sm * res.w_plus);
    } else {
        res.w_plus = w - std::log(psi) / (m * w);
        res.tail = normal_upper_tail(sm * res.w_plus);
    }
    return res;
}

/// Tail probability P(R > u) for the stationary Gaussian model, computed
/// from the eigenvalue CGF with the corrected-normal formula on total scale.
inline SaddleResult gaussian_unconditional_tail(const GaussianUnconditionalCgf& cgf) {
    SaddleResult res;
    res.u = cgf.u();
    res.feasible = true;

    const auto& lam = cgf.eigenvalues();
    if (lam.back() <= 0.0) {
        // S <= 0 almost surely.
        res.tail = 0.0;
        res.u0 = std::numeric_limits<double>::quiet_NaN();
        return res;
    }
    if (lam.front() >= 0.0) {
        res.tail = 1.0;
        res.u0 = std::numeric_limits<double>::quiet_NaN();
        return res;
    }

    auto k10 = [&](double t) {
        const auto e = cgf.eval(t);
        return e.feasible ? e.k10 : std::numeric_limits<double>::quiet_NaN();
    };
    auto k20 = [&](double t) { return cgf.eval(t).k20; };

    const double f0 = k10(0.0);
    const double ftol = detail::kSaddleTol * (1.0 + std::abs(f0));
    // Approach whichever pole hides the sign change.
    auto descend = [&](double pole, bool want_negative) {
        double delta = 0.5;
        for (;;) {
            const double t = pole * (1.0 - delta);
            const double f = k10(t);
            if (std::isfinite(f) && ((f < 0.0) == want_negative) && f != 0.0) return t;
            delta *= 0.25;
            if (delta < 1e-15)
                throw SaddleFailure("gaussian_unconditional_tail: pole descent failed", cgf.u(),
                                    std::numeric_limits<double>::quiet_NaN(), pole, 0.0);
        }
    };
    double lo, hi;
    if (std::abs(f0) <= ftol) {
        res.t_hat = 0.0;
        res.tail = 0.5;
        res.u0 = cgf.u();
        res.psi = 1.0;
        return res;
    } else if (f0 < 0.0) {
        lo = 0.0;
        hi = descend(cgf.t_upper(), false);
    } else {
        lo = descend(cgf.t_lower(), true);
        hi = 0.0;
    }
    const double t_hat = detail::solve_saddle(k10, k20, lo, hi, k10(lo), k10(hi), ftol);
    res.t_hat = t_hat;
    res.u0 = std::numeric_limits<double>::quiet_NaN();

    const auto at_hat = cgf.eval(t_hat);
    if (!at_hat.feasible || !(at_hat.k20 > 0.0))
        throw SaddleFailure("gaussian_unconditional_tail: degenerate curvature", cgf.u(),
                            res.u0, lo, hi);
    const double w = (t_hat > 0.0 ? 1.0 : -1.0) * std::sqrt(std::max(0.0, -2.0 * at_hat.k));
    res.w = w;
    if (std::abs(w) < detail::kSmallW) {
        const double h = 1e-6;
        const double k30 = (cgf.eval(t_hat + h).k20 - cgf.eval(t_hat - h).k20) / (2.0 * h);
        res.psi = 1.0;
        res.w_plus = w + k30 / (6.0 * at_hat.k20 * std::sqrt(at_hat.k20));
        res.tail = normal_upper_tail(res.w_plus);
    } else {
        res.psi = w / (t_hat * std::sqrt(at_hat.k20));
        res.w_plus = w - std::log(res.psi) / w;
        res.tail = normal_upper_tail(res.w_plus);
    }
    return res;
}

inline SaddleResult gaussian_unconditional_tail(int n, double rho, double u) {
    if (!(std::abs(u) < 1.0))
        throw std::invalid_argument("gaussian_unconditional_tail: need u in (-1, 1)");
    return gaussian_unconditional_tail(GaussianUnconditionalCgf(n, rho, u));
}

/// Model triple used by the averaging and bootstrap front ends.
struct Ar1Model {
    int n;
    double rho0;
    ErrorDistribution dist;
};

enum class ConditionalBackendKind { gaussian, general };

/// Average of conditional tails over n_cond conditioning sets drawn by
/// simulating fresh series from the model. Infeasible draws contribute
/// exactly zero. One tail per query point, all evaluated on the same draws.
/// Fails if more than 0.1% of the draws throw.
inline std::vector<TailEstimate> expected_conditional_tail_grid(
    const Ar1Model& model, std::span<const double> us, ConditionalBackendKind backend,
    std::uint64_t n_cond, std::uint64_t seed, int threads = 1) {
    if (n_cond < 1) throw std::invalid_argument("expected_conditional_tail: n_cond >= 1 required");
    const std::size_t nu = us.size();
    const std::uint64_t chunk = 256;
    const std::uint64_t n_chunks = (n_cond + chunk - 1) / chunk;
    std::vector<std::vector<double>> sums(n_chunks, std::vector<double>(2 * nu, 0.0));
    std::vector<std::uint64_t> failures(n_chunks, 0);

    parallel_chunks(n_cond, chunk, resolve_threads(threads), [&](std::uint64_t c, std::uint64_t b,
                                                                 std::uint64_t e) {
        auto& acc = sums[c];
        for (std::uint64_t r = b; r < e; ++r) {
            RngStream rng(seed, r);
            const Ar1Series series = simulate_ar1(model.n, model.rho0, model.dist, rng);
            const OddConditioning cond = condition_decompose(series);
            for (std::size_t j = 0; j < nu; ++j) {
                double tail = 0.0;
                try {
                    if (backend == ConditionalBackendKind::gaussian) {
                        const GaussianConditionalCgf cgf(cond, model.rho0);
                        tail = conditional_tail(cgf, us[j]).tail;
                    } else {
                        const GeneralConditionalCgf cgf(cond, model.dist, model.rho0);
                        tail = conditional_tail(cgf, us[j]).tail;
                    }
                } catch (const SaddleFailure&) {
                    ++failures[c];
                    continue;
                } catch (const QuadratureFailure&) {
                    ++failures[c];
                    continue;
                }
                acc[2 * j] += tail;
                acc[2 * j + 1] += tail * tail;
            }
        }
    });

    std::uint64_t failed = 0;
    for (auto f : failures) failed += f;
    if (failed * 1000 > n_cond * nu)
        throw SaddleFailure("expected_conditional_tail: more than 0.1% of draws failed",
                            us.empty() ? 0.0 : us[0], 0.0, 0.0, 0.0);

    std::vector<TailEstimate> out(nu);
    for (std::size_t j = 0; j < nu; ++j) {
        double s = 0.0, s2 = 0.0;
        for (const auto& acc : sums) {
            s += acc[2 * j];
            s2 += acc[2 * j + 1];
        }
        const double n = static_cast<double>(n_cond);
        const double mean = s / n;
        const double var = std::max(0.0, s2 / n - mean * mean);
        out[j] = {mean, n_cond, std::sqrt(var / n), seed};
    }
    return out;
}

inline TailEstimate expected_conditional_tail(const Ar1Model& model, double u,
                                              ConditionalBackendKind backend, std::uint64_t n_cond,
                                              std::uint64_t seed, int threads = 1) {
    const double us[1] = {u};
    return expected_conditional_tail_grid(model, us, backend, n_cond, seed, threads)[0];
}

/// u* with tail_fn(u*) = level, for a nonincreasing tail_fn. A coarse grid
/// locates the first bracketing cell; bisection refines it. Throws NoRoot
/// when the level is outside the achieved range.
inline double critical_value(const std::function<double(double)>& tail_fn, double level,
                             double lo, double hi, int grid = 64) {
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("critical_value: level must be in (0, 1)");
    if (!(hi > lo)) throw std::invalid_argument("critical_value: empty search interval");
    double prev_u = lo;
    double prev_f = tail_fn(lo) - level;
    if (prev_f == 0.0) return lo;
    if (prev_f < 0.0) throw NoRoot("critical_value: level above the achieved range");
    for (int i = 1; i <= grid; ++i) {
        const double cur_u = lo + (hi - lo) * i / grid;
        const double cur_f = tail_fn(cur_u) - level;
        if (cur_f <= 0.0) {
            // Bisect [prev_u, cur_u].
            double a = prev_u, b = cur_u;
            while (b - a > 1e-8 * (1.0 + std::abs(b))) {
                const double mid = 0.5 * (a + b);
                if (tail_fn(mid) - level > 0.0)
                    a = mid;
                else
                    b = mid;
            }
            return 0.5 * (a + b);
        }
        prev_u = cur_u;
        prev_f = cur_f;
    }
    throw NoRoot("critical_value: level below the achieved range");
}

/// Per-conditioning critical value for the conditional test: the u at which
/// the conditional tail crosses the level. Defined for levels in (0, 1/2];
/// the search runs from the zero-tilt point to the feasibility boundary.
template <ConditionalCgfBackend Cgf>
inline double conditional_critical_value(const Cgf& cgf, double level) {
    if (!(level > 0.0 && level <= 0.5))
        throw std::invalid_argument("conditional_critical_value: level must be in (0, 1/2]");
    const double ub = std::sqrt(cgf.a_bar_sq() / (4.0 * cgf.b_bar()));
    const double u0 = compute_u0(cgf).u0;
    const double lo = std::max(u0, 1e-9);
    if (!(ub > lo)) throw NoRoot("conditional_critical_value: empty feasible range");
    auto tail = [&](double u) { return conditional_tail(cgf, u).tail; };
    return critical_value(tail, level, lo, ub * (1.0 - 1e-12), 64);
}

} // namespace sercor
