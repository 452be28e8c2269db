#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sercor/errors.hpp"
#include "sercor/rng.hpp"

namespace sercor {

/// Innovation law for the AR(1) model. Every variant has mean 0 and
/// variance 1: the Student t is divided by sqrt(nu/(nu-2)) and the
/// exponential is the rate-1 law shifted by -1.
class ErrorDistribution {
  public:
    enum class Kind { normal, student_t, centered_exponential };

    static ErrorDistribution normal() { return ErrorDistribution(Kind::normal, 0); }

    static ErrorDistribution student_t(int nu) {
        if (nu < 9)
            throw std::invalid_argument("student_t: need nu >= 9 so the eighth moment exists");
        return ErrorDistribution(Kind::student_t, nu);
    }

    static ErrorDistribution centered_exponential() {
        return ErrorDistribution(Kind::centered_exponential, 0);
    }

    static ErrorDistribution from_name(const std::string& name) {
        if (name == "normal") return normal();
        if (name == "exp") return centered_exponential();
        if (name.size() > 1 && name[0] == 't') return student_t(std::stoi(name.substr(1)));
        throw std::invalid_argument("unknown error distribution: " + name);
    }

    Kind kind() const { return kind_; }
    int nu() const { return nu_; }

    std::string name() const {
        switch (kind_) {
            case Kind::normal: return "normal";
            case Kind::student_t: return "t" + std::to_string(nu_);
            case Kind::centered_exponential: return "exp";
        }
        return "?";
    }

    double draw(RngStream& rng) const {
        switch (kind_) {
            case Kind::normal:
                return rng.normal();
            case Kind::student_t: {
                const double z = rng.normal();
                const double chi2 = 2.0 * rng.gamma(0.5 * nu_);
                return z / std::sqrt(chi2 / nu_) / t_scale_;
            }
            case Kind::centered_exponential:
                return -std::log(rng.uniform01()) - 1.0;
        }
        return 0.0;
    }

    double density(double x) const {
        switch (kind_) {
            case Kind::normal:
                return 0.3989422804014326779399460599343819 * std::exp(-0.5 * x * x);
            case Kind::student_t: {
                const double y = x * t_scale_;
                return t_norm_ * t_scale_ * std::pow(1.0 + y * y / nu_, -0.5 * (nu_ + 1));
            }
            case Kind::centered_exponential:
                return x >= -1.0 ? std::exp(-(x + 1.0)) : 0.0;
        }
        return 0.0;
    }

    double log_density(double x) const {
        switch (kind_) {
            case Kind::normal:
                return -0.9189385332046727417803297364056176 - 0.5 * x * x;
            case Kind::student_t: {
                const double y = x * t_scale_;
                return std::log(t_norm_ * t_scale_) -
                       0.5 * (nu_ + 1) * std::log1p(y * y / nu_);
            }
            case Kind::centered_exponential:
                return x >= -1.0 ? -(x + 1.0) : -std::numeric_limits<double>::infinity();
        }
        return -std::numeric_limits<double>::infinity();
    }

    /// Support of the density, [lower, upper].
    std::pair<double, double> support() const {
        constexpr double inf = std::numeric_limits<double>::infinity();
        if (kind_ == Kind::centered_exponential) return {-1.0, inf};
        return {-inf, inf};
    }

  private:
    ErrorDistribution(Kind kind, int nu) : kind_(kind), nu_(nu) {
        if (kind_ == Kind::student_t) {
            t_scale_ = std::sqrt(static_cast<double>(nu_) / (nu_ - 2));
            t_norm_ = std::exp(std::lgamma(0.5 * (nu_ + 1)) - std::lgamma(0.5 * nu_)) /
                      std::sqrt(nu_ * 3.14159265358979323846);
        }
    }

    Kind kind_;
    int nu_;
    double t_scale_ = 1.0;
    double t_norm_ = 0.0;
};

/// An observed or simulated AR(1) path of odd length n = 2m + 1.
class Ar1Series {
  public:
    Ar1Series(std::vector<double> x, double rho) : x_(std::move(x)), rho_(rho) {
        if (x_.size() < 3 || x_.size() % 2 == 0)
            throw std::invalid_argument("Ar1Series: length must be odd and at least 3");
    }

    static Ar1Series from_observations(std::vector<double> x) {
        return Ar1Series(std::move(x), std::numeric_limits<double>::quiet_NaN());
    }

    const std::vector<double>& x() const { return x_; }
    double rho() const { return rho_; }
    int n() const { return static_cast<int>(x_.size()); }
    int m() const { return (n() - 1) / 2; }

  private:
    std::vector<double> x_;
    double rho_;
};

/// Quantities derived from the odd-indexed observations: the pair sums
/// a[i] = x[2i-1] + x[2i+1], the half square sums b[i], and their means.
/// The conditional tail of the statistic is zero above the feasibility
/// boundary a_bar_sq - 4 u^2 b_bar = 0.
struct OddConditioning {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> odd;
    double a_bar_sq = 0.0;
    double b_bar = 0.0;
    int m = 0;

    double feasibility_margin(double u) const { return a_bar_sq - 4.0 * u * u * b_bar; }
    bool feasible(double u) const { return feasibility_margin(u) > 0.0; }
};

struct ResidualSet {
    std::vector<double> raw;
    std::vector<double> standardized;
    double mean = 0.0;
    double sigma = 0.0;
};

/// A Monte Carlo tail probability with its binomial (or empirical) standard
/// error and the seed that produced it.
struct TailEstimate {
    double probability = 0.0;
    std::uint64_t replicates = 0;
    double std_error = 0.0;
    std::uint64_t seed = 0;
};

struct MomentDiagnostic {
    double eighth_moment_mean = 0.0;
    double second_moment_mean = 0.0;
};

inline Ar1Series simulate_ar1(int n, double rho, const ErrorDistribution& dist, RngStream& rng) {
    if (n < 3 || n % 2 == 0) throw std::invalid_argument("simulate_ar1: n must be odd and >= 3");
    if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("simulate_ar1: need |rho| < 1");
    std::vector<double> x(n);
    x[0] = dist.draw(rng) / std::sqrt(1.0 - rho * rho);
    for (int i = 1; i < n; ++i) x[i] = rho * x[i - 1] + dist.draw(rng);
    return Ar1Series(std::move(x), rho);
}

inline Ar1Series simulate_ar1(int n, double rho, const ErrorDistribution& dist,
                              std::uint64_t seed, std::uint64_t stream = 0) {
    RngStream rng(seed, stream);
    return simulate_ar1(n, rho, dist, rng);
}

/// Denominator of the serial correlation ratio: endpoint squares get half
/// weight.
inline double half_weighted_square_sum(const std::vector<double>& x) {
    const std::size_t n = x.size();
    double s = 0.5 * x[0] * x[0] + 0.5 * x[n - 1] * x[n - 1];
    for (std::size_t i = 1; i + 1 < n; ++i) s += x[i] * x[i];
    return s;
}

inline double lag_product_sum(const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += x[i] * x[i - 1];
    return s;
}

inline double serial_correlation(const Ar1Series& series) {
    const double den = half_weighted_square_sum(series.x());
    if (den <= 0.0) throw DegenerateInput("serial_correlation: zero denominator");
    return lag_product_sum(series.x()) / den;
}

/// S(u) = sum x_i x_{i-1} - u * (half-weighted square sum); R > u iff S > 0.
inline double statistic_s(const Ar1Series& series, double u) {
    return lag_product_sum(series.x()) - u * half_weighted_square_sum(series.x());
}

inline OddConditioning condition_decompose(const Ar1Series& series) {
    const auto& x = series.x();
    const int m = series.m();
    OddConditioning cond;
    cond.m = m;
    cond.odd.resize(m + 1);
    for (int i = 0; i <= m; ++i) cond.odd[i] = x[2 * i];
    cond.a.resize(m);
    cond.b.resize(m);
    double sa = 0.0, sb = 0.0;
    for (int i = 0; i < m; ++i) {
        const double lo = cond.odd[i], hi = cond.odd[i + 1];
        cond.a[i] = lo + hi;
        cond.b[i] = 0.5 * (lo * lo + hi * hi);
        sa += cond.a[i] * cond.a[i];
        sb += cond.b[i];
    }
    cond.a_bar_sq = sa / m;
    cond.b_bar = sb / m;
    return cond;
}

/// Residuals e_i = x_i - rho0 x_{i-1} for i = 2..n, plus the standardized
/// version (mean removed, scaled by the root mean square about the mean with
/// divisor n-1, the residual count).
inline ResidualSet compute_residuals(const Ar1Series& series, double rho0) {
    if (!(std::abs(rho0) < 1.0)) throw std::invalid_argument("compute_residuals: need |rho0| < 1");
    const auto& x = series.x();
    const std::size_t count = x.size() - 1;
    ResidualSet r;
    r.raw.resize(count);
    for (std::size_t i = 0; i < count; ++i) r.raw[i] = x[i + 1] - rho0 * x[i];
    double mean = 0.0;
    for (double v : r.raw) mean += v;
    mean /= static_cast<double>(count);
    double ss = 0.0;
    for (double v : r.raw) ss += (v - mean) * (v - mean);
    const double sigma = std::sqrt(ss / static_cast<double>(count));
    if (!(sigma > 0.0)) throw DegenerateInput("compute_residuals: degenerate residual scale");
    r.mean = mean;
    r.sigma = sigma;
    r.standardized.resize(count);
    for (std::size_t i = 0; i < count; ++i) r.standardized[i] = (r.raw[i] - mean) / sigma;
    return r;
}

/// Mean eighth and second powers of the odd-indexed observations. No verdict
/// is attached; thresholds are the caller's business.
inline MomentDiagnostic moment_diagnostic(const Ar1Series& series) {
    const auto& x = series.x();
    const int m = series.m();
    double p8 = 0.0, p2 = 0.0;
    for (int i = 0; i <= m; ++i) {
        const double v = x[2 * i];
        const double v2 = v * v;
        const double v4 = v2 * v2;
        p2 += v2;
        p8 += v4 * v4;
    }
    return {p8 / (m + 1), p2 / (m + 1)};
}

} // namespace sercor
