#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "sercor/ar1.hpp"
#include "sercor/errors.hpp"
#include "sercor/numerics.hpp"

namespace sercor {

/// One evaluation of a cumulant generating function in its first argument:
/// the value, the first two t-derivatives, and whether (t, u) was inside the
/// domain. Values are meaningless when feasible is false.
struct CgfEvaluation {
    double k = 0.0;
    double k10 = 0.0;
    double k20 = 0.0;
    bool feasible = false;
};

/// Numerator and denominator of the zero-tilt point u0, the u at which the
/// saddlepoint sits at t = 0.
struct U0Result {
    double u0 = 0.0;
    double numerator = 0.0;
    double denominator = 0.0;
};

// ---------------------------------------------------------------------------
// Gaussian unconditional backend (eigenvalue form)
// ---------------------------------------------------------------------------

/// Total-scale CGF of the quadratic form S = x^T (A - uB) x for a stationary
/// Gaussian AR(1) path: kappa(t) = -1/2 sum log(1 - 2 t lambda_i), where the
/// lambda_i are the eigenvalues of U (A - uB) U^T and Sigma = U^T U. A has
/// 1/2 on the two adjacent diagonals (so x^T A x is the lag product sum) and
/// B is diag(1/2, 1, ..., 1, 1/2) (the half-weighted square sum).
class GaussianUnconditionalCgf {
  public:
    GaussianUnconditionalCgf(int n, double rho, double u) : n_(n), rho_(rho), u_(u) {
        if (n < 3) throw std::invalid_argument("GaussianUnconditionalCgf: n >= 3 required");
        if (!(std::abs(rho) < 1.0))
            throw std::invalid_argument("GaussianUnconditionalCgf: need |rho| < 1");
        Matrix quad_form(n);
        for (int i = 0; i + 1 < n; ++i) {
            quad_form(i, i + 1) = 0.5;
            quad_form(i + 1, i) = 0.5;
        }
        for (int i = 0; i < n; ++i) quad_form(i, i) -= u * ((i == 0 || i == n - 1) ? 0.5 : 1.0);

        Matrix sigma(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) sigma(i, j) = std::pow(rho, std::abs(i - j));
        const Matrix upper = cholesky_upper(sigma);

        // U (A - uB) U^T with U upper triangular.
        Matrix tmp(n);
        for (int i = 0; i < n; ++i)
            for (int k = i; k < n; ++k) {
                const double uik = upper(i, k);
                if (uik == 0.0) continue;
                for (int j = 0; j < n; ++j) tmp(i, j) += uik * quad_form(k, j);
            }
        Matrix sym(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int k = j; k < n; ++k) s += tmp(i, k) * upper(j, k);
                sym(i, j) = s;
            }
        // Enforce exact symmetry before the Jacobi sweep.
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double s = 0.5 * (sym(i, j) + sym(j, i));
                sym(i, j) = s;
                sym(j, i) = s;
            }
        lambda_ = symmetric_eigenvalues(sym);

        constexpr double inf = std::numeric_limits<double>::infinity();
        t_lo_ = lambda_.front() < 0.0 ? 0.5 / lambda_.front() : -inf;
        t_hi_ = lambda_.back() > 0.0 ? 0.5 / lambda_.back() : inf;
    }

    CgfEvaluation eval(double t) const {
        CgfEvaluation out;
        double k = 0.0, k1 = 0.0, k2 = 0.0;
        for (double lam : lambda_) {
            const double d = 1.0 - 2.0 * t * lam;
            if (!(d > 0.0)) return out;
            k += std::log(d);
            const double r = lam / d;
            k1 += r;
            k2 += 2.0 * r * r;
        }
        out.k = -0.5 * k;
        out.k10 = k1;
        out.k20 = k2;
        out.feasible = true;
        return out;
    }

    const std::vector<double>& eigenvalues() const { return lambda_; }
    double trace() const {
        double s = 0.0;
        for (double lam : lambda_) s += lam;
        return s;
    }
    double t_lower() const { return t_lo_; }
    double t_upper() const { return t_hi_; }
    int n() const { return n_; }
    double rho() const { return rho_; }
    double u() const { return u_; }

  private:
    int n_;
    double rho_;
    double u_;
    std::vector<double> lambda_;
    double t_lo_, t_hi_;
};

// ---------------------------------------------------------------------------
// Gaussian conditional backend (closed form)
// ---------------------------------------------------------------------------

/// Per-observation-scale conditional CGF when the even observations given
/// the odd ones are independent N(rho A_i / (1+rho^2), 1 / (1+rho^2)):
///
///   K(t,u) = -1/2 log(1 + 2tu/c) - t u b_bar
///            + a_bar_sq (rho+t)^2 / (2(c + 2tu)) - a_bar_sq rho^2 / (2c),
///
/// with c = 1 + rho^2. Only (a_bar_sq, b_bar) of the conditioning enter.
class GaussianConditionalCgf {
  public:
    GaussianConditionalCgf(double a_bar_sq, double b_bar, double rho, int m)
        : a2_(a_bar_sq), bb_(b_bar), rho_(rho), m_(m), c_(1.0 + rho * rho) {
        if (m < 1) throw std::invalid_argument("GaussianConditionalCgf: m >= 1 required");
        if (!(std::abs(rho) < 1.0))
            throw std::invalid_argument("GaussianConditionalCgf: need |rho| < 1");
    }

    GaussianConditionalCgf(const OddConditioning& cond, double rho)
        : GaussianConditionalCgf(cond.a_bar_sq, cond.b_bar, rho, cond.m) {}

    CgfEvaluation eval(double t, double u) const {
        CgfEvaluation out;
        const double d = c_ + 2.0 * t * u;
        if (!(d > 0.0)) return out;
        const double rt = rho_ + t;
        // The two quadratic terms cancel to O(t) analytically; the factored
        // form keeps K accurate near t = 0 where the deviate W is tiny.
        out.k = -0.5 * std::log1p(2.0 * t * u / c_) - t * u * bb_ +
                a2_ * t * (2.0 * c_ * rho_ + c_ * t - 2.0 * u * rho_ * rho_) / (2.0 * c_ * d);
        out.k10 = -u / d - u * bb_ + a2_ * rt / d - a2_ * u * rt * rt / (d * d);
        const double q = 1.0 - 2.0 * u * rt / d;
        out.k20 = 2.0 * u * u / (d * d) + a2_ / d * q * q;
        out.feasible = true;
        return out;
    }

    /// Domain edge in t for fixed u > 0 (the log argument's pole).
    double t_lower(double u) const { return u > 0.0 ? -0.5 * c_ / u : -std::numeric_limits<double>::infinity(); }

    double a_bar_sq() const { return a2_; }
    double b_bar() const { return bb_; }
    int m() const { return m_; }
    double rho() const { return rho_; }

  private:
    double a2_, bb_, rho_;
    int m_;
    double c_;
};

inline U0Result compute_u0(const GaussianConditionalCgf& cgf) {
    const double c = 1.0 + cgf.rho() * cgf.rho();
    U0Result r;
    r.numerator = cgf.rho() * cgf.a_bar_sq() / c;
    r.denominator = 1.0 / c + cgf.rho() * cgf.rho() * cgf.a_bar_sq() / (c * c) + cgf.b_bar();
    if (!(r.denominator > 0.0)) throw DegenerateInput("compute_u0: nonpositive denominator");
    r.u0 = r.numerator / r.denominator;
    return r;
}

// ---------------------------------------------------------------------------
// General conditional backend (quadrature over the conditional density)
// ---------------------------------------------------------------------------

/// Conditional CGF for an arbitrary error density f. The conditional density
/// of an even observation given its odd neighbours is
///
///   g_i(z) = f(z - rho0 xlo_i) f(xhi_i - rho0 z) / Z_i,
///
/// and the per-observation CGF is
///
///   K(t,u) = (1/m) sum_i log \int e^{-t u (z - a_i/2u)^2} g_i(z) dz
///            + t (a_bar_sq - 4 u^2 b_bar) / (4u).
///
/// All integrals run over the density product's support, with panel
/// breakpoints seeded at the mass of g_i and of the tilt factor.
class GeneralConditionalCgf {
  public:
    GeneralConditionalCgf(OddConditioning cond, ErrorDistribution dist, double rho0,
                          Quadrature quad = {})
        : cond_(std::move(cond)), dist_(std::move(dist)), rho0_(rho0), quad_(quad) {
        if (!(std::abs(rho0) < 1.0))
            throw std::invalid_argument("GeneralConditionalCgf: need |rho0| < 1");
        const int m = cond_.m;
        z_lo_.resize(m);
        z_hi_.resize(m);
        center_.resize(m);
        log_norm_.resize(m);
        const double c = 1.0 + rho0_ * rho0_;
        for (int i = 0; i < m; ++i) {
            support_bounds(i, z_lo_[i], z_hi_[i]);
            center_[i] = rho0_ * cond_.a[i] / c;
            center_[i] = std::clamp(center_[i], z_lo_[i], z_hi_[i]);
            log_norm_[i] = std::log(integrate_product(i, [](double) { return 1.0; }));
        }
    }

    CgfEvaluation eval(double t, double u) const {
        CgfEvaluation out;
        if (!(u > 0.0)) throw std::invalid_argument("GeneralConditionalCgf::eval: u > 0 required");
        if (t < 0.0 && !negative_t_allowed(u, t)) return out;
        const int m = cond_.m;
        double sum_log = 0.0, sum_k1 = 0.0, sum_k2 = 0.0;
        for (int i = 0; i < m; ++i) {
            const double b = cond_.a[i] / (2.0 * u);
            const double d0 = integrate_tilted(i, t, u, b, [](double, double) { return 1.0; });
            if (!(d0 > 0.0) || !std::isfinite(d0))
                throw QuadratureFailure("general cgf: vanishing tilted mass at index " +
                                            std::to_string(i),
                                        d0, 0.0);
            const double d1 = integrate_tilted(i, t, u, b, [&](double, double dz) {
                return u * dz * dz;
            });
            const double d2 = integrate_tilted(i, t, u, b, [&](double, double dz) {
                const double q = dz * dz;
                return u * u * q * q;
            });
            const double ki = d1 / d0;
            sum_log += std::log(d0) - log_norm_[i];
            sum_k1 += ki;
            sum_k2 += d2 / d0 - ki * ki;
        }
        const double drift = cond_.feasibility_margin(u) / (4.0 * u);
        out.k = sum_log / m + t * drift;
        out.k10 = -sum_k1 / m + drift;
        out.k20 = sum_k2 / m;
        out.feasible = true;
        return out;
    }

    /// First and second conditional moments of g_i, used for u0.
    std::pair<double, double> conditional_moments(int i) const {
        const double z0 = integrate_product(i, [](double) { return 1.0; });
        const double z1 = integrate_product(i, [](double z) { return z; });
        const double z2 = integrate_product(i, [](double z) { return z * z; });
        return {z1 / z0, z2 / z0};
    }

    double t_lower(double u) const {
        if (dist_.kind() == ErrorDistribution::Kind::normal && u > 0.0)
            return -0.5 * (1.0 + rho0_ * rho0_) / u;
        return 0.0;
    }

    double a_bar_sq() const { return cond_.a_bar_sq; }
    double b_bar() const { return cond_.b_bar; }
    int m() const { return cond_.m; }
    double rho0() const { return rho0_; }
    const OddConditioning& conditioning() const { return cond_; }

  private:
    // The tilted integral only converges for t < 0 when the density decays
    // at least as fast as the growing Gaussian factor; of the supported
    // error laws only the normal does, on 1 + 2tu/(1+rho0^2) > 0.
    bool negative_t_allowed(double u, double t) const {
        if (dist_.kind() != ErrorDistribution::Kind::normal) return false;
        return 1.0 + 2.0 * t * u / (1.0 + rho0_ * rho0_) > 0.0;
    }

    void support_bounds(int i, double& lo, double& hi) const {
        constexpr double inf = std::numeric_limits<double>::infinity();
        lo = -inf;
        hi = inf;
        const auto [slo, shi] = dist_.support();
        if (slo == -inf && shi == inf) return;
        // z - rho0 xlo in [slo, shi] and xhi - rho0 z in [slo, shi].
        const double xlo = cond_.odd[i], xhi = cond_.odd[i + 1];
        lo = std::max(lo, slo + rho0_ * xlo);
        hi = std::min(hi, shi + rho0_ * xlo);
        if (rho0_ > 0.0) {
            lo = std::max(lo, (xhi - shi) / rho0_);
            hi = std::min(hi, (xhi - slo) / rho0_);
        } else if (rho0_ < 0.0) {
            lo = std::max(lo, (xhi - slo) / rho0_);
            hi = std::min(hi, (xhi - shi) / rho0_);
        }
        if (!(lo < hi))
            throw DegenerateInput("general cgf: empty conditional support at index " +
                                  std::to_string(i));
    }

    // Log of the unnormalized conditional density; -inf off the support.
    double log_product_density(int i, double z) const {
        return dist_.log_density(z - rho0_ * cond_.odd[i]) +
               dist_.log_density(cond_.odd[i + 1] - rho0_ * z);
    }

    // Integrate h(z) * product density over the support, panels seeded
    // around the conditional mass.
    template <class H>
    double integrate_product(int i, const H& h) const {
        std::vector<double> pts = breakpoints(i, center_[i], product_scale());
        auto f = [&](double z) { return h(z) * std::exp(log_product_density(i, z)); };
        return integrate_segments(f, pts, z_lo_[i], z_hi_[i]);
    }

    // Integrate poly(z, z-b) * exp(-t u (z-b)^2) * product density. The two
    // exponents are combined in log space so a growing tilt (t < 0) cannot
    // turn an underflowed density into 0 * inf at the window edges. Extra
    // breakpoints cover the tilt's own mass when t > 0.
    template <class H>
    double integrate_tilted(int i, double t, double u, double b, const H& poly) const {
        std::vector<double> pts = breakpoints(i, center_[i], product_scale());
        if (t > 0.0) {
            const double st = 1.0 / std::sqrt(2.0 * t * u);
            for (double w : {0.0, 1.0, 2.0, 4.0, 8.0, 16.0}) {
                pts.push_back(b - w * st);
                pts.push_back(b + w * st);
            }
        }
        auto f = [&](double z) {
            const double dz = z - b;
            const double le = log_product_density(i, z) - t * u * dz * dz;
            return le < -745.0 ? 0.0 : poly(z, dz) * std::exp(le);
        };
        return integrate_segments(f, pts, z_lo_[i], z_hi_[i]);
    }

    double product_scale() const { return 1.0 / std::sqrt(1.0 + rho0_ * rho0_); }

    std::vector<double> breakpoints(int i, double center, double scale) const {
        std::vector<double> pts;
        for (double w : {0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 48.0}) {
            pts.push_back(center - w * scale);
            pts.push_back(center + w * scale);
        }
        (void)i;
        return pts;
    }

    template <class F>
    double integrate_segments(const F& f, std::vector<double>& pts) const {
        return integrate_segments(f, pts, -std::numeric_limits<double>::infinity(),
                                  std::numeric_limits<double>::infinity());
    }

    template <class F>
    double integrate_segments(const F& f, std::vector<double>& pts, double lo, double hi) const {
        const bool lo_finite = std::isfinite(lo);
        const bool hi_finite = std::isfinite(hi);
        double span_lo = lo, span_hi = hi;
        if (!lo_finite || !hi_finite) {
            double pmin = pts.front(), pmax = pts.front();
            for (double p : pts) {
                pmin = std::min(pmin, p);
                pmax = std::max(pmax, p);
            }
            if (!lo_finite) span_lo = pmin;
            if (!hi_finite) span_hi = pmax;
        }
        pts.push_back(span_lo);
        pts.push_back(span_hi);
        std::sort(pts.begin(), pts.end());
        double total = 0.0;
        for (std::size_t j = 0; j + 1 < pts.size(); ++j) {
            const double a = std::max(pts[j], span_lo);
            const double b = std::min(pts[j + 1], span_hi);
            if (b > a) total += integrate_interval(f, a, b, quad_);
        }
        // Unbounded supports: extend outward until the shells stop mattering.
        const double step = std::max(1.0, span_hi - span_lo);
        if (!hi_finite) {
            double a = span_hi, w = step;
            for (int round = 0; round < 16; ++round) {
                const double add = integrate_interval(f, a, a + w, quad_);
                total += add;
                if (std::abs(add) <= 0.5 * std::max(quad_.abs_tol, quad_.rel_tol * std::abs(total)))
                    break;
                a += w;
                w *= 2.0;
            }
        }
        if (!lo_finite) {
            double b = span_lo, w = step;
            for (int round = 0; round < 16; ++round) {
                const double add = integrate_interval(f, b - w, b, quad_);
                total += add;
                if (std::abs(add) <= 0.5 * std::max(quad_.abs_tol, quad_.rel_tol * std::abs(total)))
                    break;
                b -= w;
                w *= 2.0;
            }
        }
        return total;
    }

    OddConditioning cond_;
    ErrorDistribution dist_;
    double rho0_;
    Quadrature quad_;
    std::vector<double> z_lo_, z_hi_, center_, log_norm_;
};

inline U0Result compute_u0(const GeneralConditionalCgf& cgf) {
    const auto& cond = cgf.conditioning();
    U0Result r;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < cond.m; ++i) {
        const auto [m1, m2] = cgf.conditional_moments(i);
        num += m1 * cond.a[i];
        den += m2;
    }
    r.numerator = num;
    r.denominator = den + cond.m * cond.b_bar;
    if (!(r.denominator > 0.0)) throw DegenerateInput("compute_u0: nonpositive denominator");
    r.u0 = r.numerator / r.denominator;
    return r;
}

// ---------------------------------------------------------------------------
// Gaussian-mixture conditional backend (closed form, bootstrap densities)
// ---------------------------------------------------------------------------

/// Conditional CGF when the error law is a kernel mixture built on a
/// residual pool e_1..e_P with bandwidth tau. Given odd neighbours the even
/// observation is the normal mixture
///
///   z | i  ~  sum_{k,l} w_ikl N(rho0 a_i / c + (e_k - rho0 e_l) / c, tau^2 / c),
///   w_ikl propto exp(-(xhi_i - rho0^2 xlo_i - rho0 e_k - e_l)^2 / (2 tau^2 c)),
///
/// with c = 1 + rho0^2. Every tilted integral is a finite sum of Gaussian
/// closed forms, so K and its t-derivatives are exact up to rounding. All
/// weight handling is done in log space.
class MixtureConditionalCgf {
  public:
    MixtureConditionalCgf(OddConditioning cond, std::vector<double> pool, double rho0, double tau)
        : cond_(std::move(cond)), pool_(std::move(pool)), rho0_(rho0), tau_(tau),
          c_(1.0 + rho0 * rho0) {
        if (!(tau > 0.0)) throw std::invalid_argument("MixtureConditionalCgf: tau must be positive");
        if (!(std::abs(rho0) < 1.0))
            throw std::invalid_argument("MixtureConditionalCgf: need |rho0| < 1");
        if (pool_.empty()) throw DegenerateInput("MixtureConditionalCgf: empty residual pool");
        sigma2_ = tau_ * tau_ / c_;
        const int p = static_cast<int>(pool_.size());
        offset_.resize(static_cast<std::size_t>(p) * p);
        for (int k = 0; k < p; ++k)
            for (int l = 0; l < p; ++l)
                offset_[static_cast<std::size_t>(k) * p + l] = (pool_[k] - rho0_ * pool_[l]) / c_;

        // Per-index component log weights, normalized by the in-row maximum.
        // Rows with more components than keep_threshold drop components more
        // than 40 log units below the maximum (error below e^-40 per
        // component).
        const bool prune = static_cast<std::size_t>(p) * p * cond_.m > 61 * 61 * 61;
        weights_.resize(cond_.m);
        comp_offset_.resize(cond_.m);
        base_.resize(cond_.m);
        const double inv2t2c = 1.0 / (2.0 * tau_ * tau_ * c_);
        std::vector<double> lw(static_cast<std::size_t>(p) * p);
        for (int i = 0; i < cond_.m; ++i) {
            const double xlo = cond_.odd[i], xhi = cond_.odd[i + 1];
            base_[i] = rho0_ * cond_.a[i] / c_;
            double best = -std::numeric_limits<double>::infinity();
            for (int k = 0; k < p; ++k) {
                const double partial = xhi - rho0_ * rho0_ * xlo - rho0_ * pool_[k];
                for (int l = 0; l < p; ++l) {
                    const double dev = partial - pool_[l];
                    const double v = -dev * dev * inv2t2c;
                    lw[static_cast<std::size_t>(k) * p + l] = v;
                    best = std::max(best, v);
                }
            }
            double norm = 0.0;
            auto& wrow = weights_[i];
            auto& crow = comp_offset_[i];
            for (std::size_t idx = 0; idx < lw.size(); ++idx) {
                const double rel = lw[idx] - best;
                if (prune && rel < -40.0) continue;
                const double w = std::exp(rel);
                wrow.push_back(w);
                crow.push_back(offset_[idx]);
                norm += w;
            }
            for (double& w : wrow) w /= norm;
        }
    }

    CgfEvaluation eval(double t, double u) const {
        CgfEvaluation out;
        if (!(u > 0.0)) throw std::invalid_argument("MixtureConditionalCgf::eval: u > 0 required");
        const double g = 1.0 + 2.0 * t * u * sigma2_;
        if (!(g > 0.0)) return out;
        const double lg = std::log(g);
        double sum_log = 0.0, sum_k1 = 0.0, sum_k2 = 0.0;
        for (int i = 0; i < cond_.m; ++i) {
            const double b = cond_.a[i] / (2.0 * u);
            const auto& wrow = weights_[i];
            const auto& crow = comp_offset_[i];
            // log of each component's tilted integral plus log weight,
            // accumulated against the row maximum.
            double best = -std::numeric_limits<double>::infinity();
            thread_local std::vector<double> lv, c1v;
            lv.resize(wrow.size());
            c1v.resize(wrow.size());
            for (std::size_t j = 0; j < wrow.size(); ++j) {
                const double mu = base_[i] + crow[j];
                const double d2 = (b - mu) * (b - mu);
                const double logc = -0.5 * lg - t * u * d2 / g;
                lv[j] = std::log(wrow[j]) + logc;
                c1v[j] = -u * sigma2_ / g - u * d2 / (g * g);
                best = std::max(best, lv[j]);
            }
            double s0 = 0.0, s1 = 0.0, s2 = 0.0;
            const double c2common = 2.0 * u * u * sigma2_ * sigma2_ / (g * g);
            for (std::size_t j = 0; j < wrow.size(); ++j) {
                const double e = std::exp(lv[j] - best);
                const double c1 = c1v[j];
                const double mu = base_[i] + crow[j];
                const double d2 = (b - mu) * (b - mu);
                const double c2 = c2common + 4.0 * u * u * sigma2_ * d2 / (g * g * g);
                s0 += e;
                s1 += e * c1;
                s2 += e * (c1 * c1 + c2);
            }
            sum_log += best + std::log(s0);
            const double r1 = s1 / s0;
            sum_k1 += r1;
            sum_k2 += s2 / s0 - r1 * r1;
        }
        const double drift = cond_.feasibility_margin(u) / (4.0 * u);
        out.k = sum_log / cond_.m + t * drift;
        out.k10 = sum_k1 / cond_.m + drift;
        out.k20 = sum_k2 / cond_.m;
        out.feasible = true;
        return out;
    }

    /// Mixture mean and second moment of the even observation at index i.
    std::pair<double, double> conditional_moments(int i) const {
        const auto& wrow = weights_[i];
        const auto& crow = comp_offset_[i];
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < wrow.size(); ++j) {
            const double mu = base_[i] + crow[j];
            m1 += wrow[j] * mu;
            m2 += wrow[j] * (mu * mu + sigma2_);
        }
        return {m1, m2};
    }

    double t_lower(double u) const { return u > 0.0 ? -0.5 / (u * sigma2_) : -std::numeric_limits<double>::infinity(); }

    /// Normalized component weights for index i (sampling support).
    const std::vector<double>& weights(int i) const { return weights_[i]; }
    /// Component mean offsets aligned with weights(i).
    const std::vector<double>& component_offsets(int i) const { return comp_offset_[i]; }
    double component_mean(int i, std::size_t j) const { return base_[i] + comp_offset_[i][j]; }
    double component_sigma() const { return std::sqrt(sigma2_); }
    double base_mean(int i) const { return base_[i]; }

    double a_bar_sq() const { return cond_.a_bar_sq; }
    double b_bar() const { return cond_.b_bar; }
    int m() const { return cond_.m; }
    double rho0() const { return rho0_; }
    double tau() const { return tau_; }
    const OddConditioning& conditioning() const { return cond_; }

  private:
    OddConditioning cond_;
    std::vector<double> pool_;
    double rho0_, tau_, c_, sigma2_;
    std::vector<double> offset_;
    std::vector<double> base_;
    std::vector<std::vector<double>> weights_;
    std::vector<std::vector<double>> comp_offset_;
};

inline U0Result compute_u0(const MixtureConditionalCgf& cgf) {
    const auto& cond = cgf.conditioning();
    U0Result r;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < cond.m; ++i) {
        const auto [m1, m2] = cgf.conditional_moments(i);
        num += m1 * cond.a[i];
        den += m2;
    }
    r.numerator = num;
    r.denominator = den + cond.m * cond.b_bar;
    if (!(r.denominator > 0.0)) throw DegenerateInput("compute_u0: nonpositive denominator");
    r.u0 = r.numerator / r.denominator;
    return r;
}

} // namespace sercor
