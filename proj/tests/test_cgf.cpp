#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sercor/ar1.hpp"
#include "sercor/cgf.hpp"
#include "sercor/numerics.hpp"

using namespace sercor;

namespace {

OddConditioning random_conditioning(int n, double rho, std::uint64_t seed) {
    RngStream rng(seed);
    return condition_decompose(simulate_ar1(n, rho, ErrorDistribution::normal(), rng));
}

// Centered finite differences of K in t.
template <class Cgf>
void check_derivatives(const Cgf& cgf, double t, double u, double tol) {
    const double h = 1e-5;
    const auto e0 = cgf.eval(t, u);
    const auto ep = cgf.eval(t + h, u);
    const auto em = cgf.eval(t - h, u);
    REQUIRE(e0.feasible);
    REQUIRE(ep.feasible);
    REQUIRE(em.feasible);
    const double fd1 = (ep.k - em.k) / (2.0 * h);
    const double fd2 = (ep.k - 2.0 * e0.k + em.k) / (h * h);
    CHECK_THAT(e0.k10, Catch::Matchers::WithinAbs(fd1, tol * (1.0 + std::abs(fd1))));
    CHECK_THAT(e0.k20, Catch::Matchers::WithinAbs(fd2, 100 * tol * (1.0 + std::abs(fd2))));
}

} // namespace

TEST_CASE("gaussian unconditional cgf at t=0") {
    for (double u : {0.0, 0.3, 0.6}) {
        const GaussianUnconditionalCgf cgf(9, 0.5, u);
        const auto e = cgf.eval(0.0);
        REQUIRE(e.feasible);
        CHECK(e.k == 0.0);
        // trace((A - uB) Sigma) = (n-1)(rho - u) for the AR covariance.
        CHECK_THAT(e.k10, Catch::Matchers::WithinAbs(8.0 * (0.5 - u), 1e-10));
        CHECK_THAT(cgf.trace(), Catch::Matchers::WithinAbs(8.0 * (0.5 - u), 1e-10));
    }
}

TEST_CASE("gaussian unconditional cgf, rho=0 u=0 has zero drift") {
    const GaussianUnconditionalCgf cgf(15, 0.0, 0.0);
    CHECK_THAT(cgf.eval(0.0).k10, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("gaussian unconditional cgf derivatives match finite differences") {
    const GaussianUnconditionalCgf cgf(9, 0.5, 0.6);
    const double h = 1e-5;
    for (double t : {-0.1, 0.0, 0.2}) {
        const auto e0 = cgf.eval(t);
        const auto ep = cgf.eval(t + h);
        const auto em = cgf.eval(t - h);
        CHECK_THAT(e0.k10,
                   Catch::Matchers::WithinRel((ep.k - em.k) / (2.0 * h), 1e-5));
        CHECK_THAT(e0.k20,
                   Catch::Matchers::WithinRel((ep.k - 2.0 * e0.k + em.k) / (h * h), 1e-4));
    }
}

TEST_CASE("gaussian unconditional cgf domain edges") {
    const GaussianUnconditionalCgf cgf(9, 0.5, 0.6);
    CHECK(cgf.t_lower() < 0.0);
    CHECK(cgf.t_upper() > 0.0);
    CHECK_FALSE(cgf.eval(cgf.t_upper() * 1.01).feasible);
    CHECK_FALSE(cgf.eval(cgf.t_lower() * 1.01).feasible);
}

TEST_CASE("gaussian conditional cgf vanishes at t=0") {
    for (double u : {0.1, 0.55, 0.9}) {
        const GaussianConditionalCgf cgf(3.7, 1.2, 0.5, 19);
        const auto e = cgf.eval(0.0, u);
        REQUIRE(e.feasible);
        CHECK_THAT(e.k, Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
}

TEST_CASE("gaussian conditional: infeasible margin keeps the tilt negative") {
    // a_bar_sq - 4 u^2 b_bar < 0 at u = 0.9: 2 - 4*0.81*1.5 < 0.
    const GaussianConditionalCgf cgf(2.0, 1.5, 0.5, 19);
    const double u = 0.9;
    REQUIRE(cgf.a_bar_sq() - 4 * u * u * cgf.b_bar() < 0.0);
    for (double t = 0.05; t < 40.0; t *= 1.7) {
        const auto e = cgf.eval(t, u);
        REQUIRE(e.feasible);
        CHECK(e.k10 < 0.0);
    }
}

TEST_CASE("gaussian conditional derivatives match finite differences") {
    const GaussianConditionalCgf cgf(4.2, 1.4, 0.5, 19);
    for (double t : {-0.3, 0.0, 0.4, 1.2}) check_derivatives(cgf, t, 0.6, 1e-5);
}

TEST_CASE("conditional tilt limit as t grows") {
    const OddConditioning cond = random_conditioning(39, 0.5, 71);
    const GaussianConditionalCgf cgf(cond, 0.5);
    const double u = 0.62;
    if (!cond.feasible(u)) return;
    const double limit = cond.feasibility_margin(u) / (4.0 * u);
    double prev = cgf.eval(0.0, u).k10;
    for (double t : {0.5, 2.0, 8.0, 32.0, 128.0}) {
        const double cur = cgf.eval(t, u).k10;
        CHECK(cur > prev);
        prev = cur;
    }
    CHECK_THAT(cgf.eval(32768.0, u).k10, Catch::Matchers::WithinRel(limit, 1e-3));
    CHECK(cgf.eval(32768.0, u).k10 < limit);
}

TEST_CASE("general conditional with normal density matches the closed form") {
    for (int n : {9, 39}) {
        const OddConditioning cond = random_conditioning(n, 0.5, 1000 + n);
        const GaussianConditionalCgf closed(cond, 0.5);
        const GeneralConditionalCgf general(cond, ErrorDistribution::normal(), 0.5);
        for (double t : {0.05, 0.4, 1.1}) {
            for (double u : {0.52, 0.62, 0.74}) {
                const auto a = closed.eval(t, u);
                const auto b = general.eval(t, u);
                REQUIRE(a.feasible);
                REQUIRE(b.feasible);
                CHECK_THAT(b.k, Catch::Matchers::WithinAbs(a.k, 1e-8));
                CHECK_THAT(b.k10, Catch::Matchers::WithinAbs(a.k10, 1e-8 * (1 + std::abs(a.k10))));
                CHECK_THAT(b.k20, Catch::Matchers::WithinAbs(a.k20, 1e-8 * (1 + a.k20)));
            }
        }
        // Negative t (below the zero-tilt point) is part of the normal
        // backend's domain.
        const auto a = closed.eval(-0.4, 0.55);
        const auto b = general.eval(-0.4, 0.55);
        REQUIRE(a.feasible);
        REQUIRE(b.feasible);
        CHECK_THAT(b.k, Catch::Matchers::WithinAbs(a.k, 1e-8));
        CHECK_THAT(b.k10, Catch::Matchers::WithinAbs(a.k10, 1e-8 * (1 + std::abs(a.k10))));
    }
}

TEST_CASE("general conditional vanishes at t=0 and rejects bad domains") {
    const OddConditioning cond = random_conditioning(9, 0.4, 2222);
    const GeneralConditionalCgf cgf(cond, ErrorDistribution::student_t(10), 0.4);
    const auto e = cgf.eval(0.0, 0.5);
    REQUIRE(e.feasible);
    CHECK_THAT(e.k, Catch::Matchers::WithinAbs(0.0, 1e-12));
    // Heavy tails cannot carry a growing tilt.
    CHECK_FALSE(cgf.eval(-0.1, 0.5).feasible);
    CHECK_THROWS_AS(cgf.eval(0.1, -0.5), std::invalid_argument);
}

TEST_CASE("general conditional with exponential errors: derivative vs finite differences") {
    RngStream rng(333);
    const auto series = simulate_ar1(5, 0.5, ErrorDistribution::centered_exponential(), rng);
    const OddConditioning cond = condition_decompose(series);
    const GeneralConditionalCgf cgf(cond, ErrorDistribution::centered_exponential(), 0.5);
    const double u = 0.6, h = 1e-5;
    for (double t : {0.2, 0.8}) {
        const auto e0 = cgf.eval(t, u);
        const auto ep = cgf.eval(t + h, u);
        const auto em = cgf.eval(t - h, u);
        REQUIRE(e0.feasible);
        const double fd = (ep.k - em.k) / (2.0 * h);
        CHECK_THAT(e0.k10, Catch::Matchers::WithinRel(fd, 1e-6));
    }
}

TEST_CASE("general conditional density normalizes for each error law") {
    for (const auto& dist : {ErrorDistribution::normal(), ErrorDistribution::student_t(10),
                             ErrorDistribution::centered_exponential()}) {
        RngStream rng(4444);
        const auto series = simulate_ar1(9, 0.5, dist, rng);
        const GeneralConditionalCgf cgf(condition_decompose(series), dist, 0.5);
        for (int i = 0; i < 4; ++i) {
            const auto [m1, m2] = cgf.conditional_moments(i);
            CHECK(std::isfinite(m1));
            CHECK(m2 > m1 * m1); // the conditional law has positive variance
        }
    }
}

TEST_CASE("mixture conditional vanishes at t=0 and has positive curvature") {
    RngStream rng(555);
    const auto series = simulate_ar1(39, 0.5, ErrorDistribution::student_t(10), rng);
    const OddConditioning cond = condition_decompose(series);
    const auto res = compute_residuals(series, 0.5);
    const MixtureConditionalCgf mix(cond, res.standardized, 0.5, 1.0 / series.m());
    for (double u : {0.52, 0.6, 0.72}) {
        const auto e = mix.eval(0.0, u);
        REQUIRE(e.feasible);
        CHECK_THAT(e.k, Catch::Matchers::WithinAbs(0.0, 1e-12));
        CHECK(e.k20 > 0.0);
    }
    for (double t : {-0.5, 0.3, 1.0}) check_derivatives(mix, t, 0.6, 1e-5);
}

TEST_CASE("single-component mixture reduces to one Gaussian tilt") {
    const OddConditioning cond = random_conditioning(9, 0.5, 666);
    const double rho0 = 0.5, tau = 0.3, e = 0.7;
    const MixtureConditionalCgf mix(cond, {e}, rho0, tau);
    const double c = 1.0 + rho0 * rho0;
    const double sigma2 = tau * tau / c;
    for (double t : {0.2, 0.9}) {
        for (double u : {0.55, 0.7}) {
            const auto got = mix.eval(t, u);
            REQUIRE(got.feasible);
            const double g = 1.0 + 2.0 * t * u * sigma2;
            double k = 0.0;
            for (int i = 0; i < cond.m; ++i) {
                const double mu = rho0 * cond.a[i] / c + e * (1.0 - rho0) / c;
                const double b = cond.a[i] / (2.0 * u);
                k += -0.5 * std::log(g) - t * u * (b - mu) * (b - mu) / g;
            }
            k = k / cond.m + t * cond.feasibility_margin(u) / (4.0 * u);
            CHECK_THAT(got.k, Catch::Matchers::WithinAbs(k, 1e-12));
        }
    }
}

TEST_CASE("mixture closed form matches quadrature of the explicit mixture") {
    // Five residuals, a moderate bandwidth, and an independently computed
    // weight table; every integral is evaluated by adaptive quadrature.
    const std::vector<double> pool = {-1.1, -0.4, 0.2, 0.8, 1.3};
    const OddConditioning cond = random_conditioning(9, 0.5, 777);
    const double rho0 = 0.5, tau = 0.4;
    const double c = 1.0 + rho0 * rho0;
    const double sigma2 = tau * tau / c;
    const MixtureConditionalCgf mix(cond, pool, rho0, tau);
    const double t = 0.4, u = 0.55;
    const auto got = mix.eval(t, u);
    REQUIRE(got.feasible);

    double k_sum = 0.0, k10_sum = 0.0, k20_sum = 0.0;
    for (int i = 0; i < cond.m; ++i) {
        const double xlo = cond.odd[i], xhi = cond.odd[i + 1];
        const double b = cond.a[i] / (2.0 * u);
        std::vector<double> w, mu;
        double wsum = 0.0;
        for (double ek : pool)
            for (double el : pool) {
                const double dev = xhi - rho0 * rho0 * xlo - rho0 * ek - el;
                w.push_back(std::exp(-dev * dev / (2.0 * tau * tau * c)));
                mu.push_back(rho0 * cond.a[i] / c + (ek - rho0 * el) / c);
                wsum += w.back();
            }
        double d0 = 0.0, d1 = 0.0, d2 = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            auto comp = [&](auto h) {
                return integrate(
                    [&](double z) {
                        const double dz = (z - mu[j]) / std::sqrt(sigma2);
                        const double tilt = std::exp(-t * u * (z - b) * (z - b));
                        return h(z) * tilt * normal_density(dz) / std::sqrt(sigma2);
                    },
                    {}, mu[j], std::sqrt(sigma2));
            };
            const double wj = w[j] / wsum;
            d0 += wj * comp([](double) { return 1.0; });
            d1 += wj * comp([&](double z) { return u * (z - b) * (z - b); });
            d2 += wj * comp([&](double z) {
                const double q = (z - b) * (z - b);
                return u * u * q * q;
            });
        }
        k_sum += std::log(d0);
        k10_sum += -d1 / d0;
        k20_sum += d2 / d0 - (d1 / d0) * (d1 / d0);
    }
    const double drift = cond.feasibility_margin(u) / (4.0 * u);
    CHECK_THAT(got.k, Catch::Matchers::WithinAbs(k_sum / cond.m + t * drift, 1e-8));
    CHECK_THAT(got.k10, Catch::Matchers::WithinAbs(k10_sum / cond.m + drift, 1e-8));
    CHECK_THAT(got.k20, Catch::Matchers::WithinAbs(k20_sum / cond.m, 1e-8));
}

TEST_CASE("zero-tilt point: closed form and plug-back") {
    const OddConditioning cond = random_conditioning(39, 0.5, 888);
    const GaussianConditionalCgf cgf(cond, 0.5);
    const auto u0 = compute_u0(cgf);
    CHECK(u0.denominator > 0.0);
    const auto at0 = cgf.eval(0.0, u0.u0);
    CHECK_THAT(at0.k10, Catch::Matchers::WithinAbs(0.0, 1e-10));
}

TEST_CASE("zero-tilt point for the general backend plugs back") {
    RngStream rng(999);
    const auto series = simulate_ar1(9, 0.5, ErrorDistribution::centered_exponential(), rng);
    const GeneralConditionalCgf cgf(condition_decompose(series),
                                    ErrorDistribution::centered_exponential(), 0.5);
    const auto u0 = compute_u0(cgf);
    CHECK_THAT(cgf.eval(0.0, u0.u0).k10, Catch::Matchers::WithinAbs(0.0, 1e-9));
}

TEST_CASE("zero-tilt point for the mixture backend plugs back") {
    RngStream rng(1111);
    const auto series = simulate_ar1(39, 0.5, ErrorDistribution::student_t(10), rng);
    const auto res = compute_residuals(series, 0.5);
    const MixtureConditionalCgf mix(condition_decompose(series), res.raw, 0.5,
                                    1.0 / series.m());
    const auto u0 = compute_u0(mix);
    CHECK_THAT(mix.eval(0.0, u0.u0).k10, Catch::Matchers::WithinAbs(0.0, 1e-10));
}

TEST_CASE("zero-tilt point approaches rho0 as m grows", "[slow]") {
    const double rho0 = 0.5;
    double mean_dev[3] = {0, 0, 0};
    const int ms[3] = {50, 200, 800};
    const int reps = 40;
    for (int k = 0; k < 3; ++k) {
        for (int r = 0; r < reps; ++r) {
            RngStream rng(13131, 100 * k + r);
            const auto series =
                simulate_ar1(2 * ms[k] + 1, rho0, ErrorDistribution::normal(), rng);
            const GaussianConditionalCgf cgf(condition_decompose(series), rho0);
            mean_dev[k] += std::abs(compute_u0(cgf).u0 - rho0);
        }
        mean_dev[k] /= reps;
    }
    // A 16-fold increase in m should shrink the deviation by about 4.
    const double ratio = mean_dev[0] / mean_dev[2];
    CHECK(ratio > 2.0);
    CHECK(ratio < 8.0);
    CHECK(mean_dev[2] < 0.05);
}

TEST_CASE("every conditional backend vanishes at t=0", "[property]") {
    RngStream rng(141);
    const auto series = simulate_ar1(19, 0.5, ErrorDistribution::normal(), rng);
    const OddConditioning cond = condition_decompose(series);
    const auto res = compute_residuals(series, 0.5);
    const GaussianConditionalCgf a(cond, 0.5);
    const GeneralConditionalCgf b(cond, ErrorDistribution::normal(), 0.5);
    const MixtureConditionalCgf c(cond, res.standardized, 0.5, 1.0 / series.m());
    for (double u = 0.05; u < 1.0; u += 0.11) {
        CHECK_THAT(a.eval(0.0, u).k, Catch::Matchers::WithinAbs(0.0, 1e-12));
        CHECK_THAT(b.eval(0.0, u).k, Catch::Matchers::WithinAbs(0.0, 1e-12));
        CHECK_THAT(c.eval(0.0, u).k, Catch::Matchers::WithinAbs(0.0, 1e-12));
        CHECK(a.eval(0.0, u).k20 > 0.0);
        CHECK(b.eval(0.0, u).k20 > 0.0);
        CHECK(c.eval(0.0, u).k20 > 0.0);
    }
}
