#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sercor/ar1.hpp"
#include "sercor/cgf.hpp"
#include "sercor/saddlepoint.hpp"

using namespace sercor;

namespace {

OddConditioning random_conditioning(int n, double rho, std::uint64_t seed) {
    RngStream rng(seed);
    return condition_decompose(simulate_ar1(n, rho, ErrorDistribution::normal(), rng));
}

// Monte Carlo of the conditional law: even observations independent
// N(rho a_i / (1+rho^2), 1/(1+rho^2)). Oracle for the conditional tail.
double conditional_mc(const OddConditioning& cond, double rho, double u, std::uint64_t reps,
                      std::uint64_t seed) {
    const double c = 1.0 + rho * rho;
    const double sd = 1.0 / std::sqrt(c);
    const double b_sum = cond.b_bar * cond.m;
    std::uint64_t hits = 0;
    RngStream rng(seed);
    for (std::uint64_t r = 0; r < reps; ++r) {
        double s1 = 0.0, s2 = b_sum;
        for (int i = 0; i < cond.m; ++i) {
            const double z = rho * cond.a[i] / c + sd * rng.normal();
            s1 += cond.a[i] * z;
            s2 += z * z;
        }
        if (s1 > u * s2) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(reps);
}

} // namespace

TEST_CASE("conditional tail is zero above the feasibility boundary") {
    const GaussianConditionalCgf cgf(2.0, 1.5, 0.5, 19);
    const double boundary = std::sqrt(2.0 / (4.0 * 1.5));
    const auto res = conditional_tail(cgf, boundary + 0.01);
    CHECK_FALSE(res.feasible);
    CHECK(res.tail == 0.0);
}

TEST_CASE("conditional tail is one half at the zero-tilt point") {
    const OddConditioning cond = random_conditioning(39, 0.5, 3);
    const GaussianConditionalCgf cgf(cond, 0.5);
    const double u0 = compute_u0(cgf).u0;
    const auto res = conditional_tail(cgf, u0);
    CHECK(res.feasible);
    CHECK(res.t_hat == 0.0);
    CHECK(res.tail == 0.5);
}

TEST_CASE("conditional tail rejects nonpositive query points") {
    const GaussianConditionalCgf cgf(4.0, 1.3, 0.5, 19);
    CHECK_THROWS_AS(conditional_tail(cgf, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(conditional_tail(cgf, -0.5), std::invalid_argument);
}

TEST_CASE("conditional tail matches a conditional Monte Carlo oracle at m=4", "[slow]") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const OddConditioning cond = random_conditioning(9, 0.5, seed);
        const GaussianConditionalCgf cgf(cond, 0.5);
        for (double u : {0.55, 0.65}) {
            const auto sp = conditional_tail(cgf, u);
            const std::uint64_t reps = 2000000;
            const double mc = conditional_mc(cond, 0.5, u, reps, seed * 1000);
            const double se = std::sqrt(std::max(mc * (1 - mc), 1e-12) / reps);
            if (sp.tail < 0.01) continue;
            const double tol = std::max(3.5 * se, 0.02 * sp.tail);
            CHECK_THAT(sp.tail, Catch::Matchers::WithinAbs(mc, tol));
        }
    }
}

TEST_CASE("saddle residual is small for feasible queries", "[property]") {
    const OddConditioning cond = random_conditioning(39, 0.5, 5);
    const GaussianConditionalCgf cgf(cond, 0.5);
    for (double u = 0.51; u < 0.8; u += 0.03) {
        if (!cond.feasible(u)) continue;
        const auto res = conditional_tail(cgf, u);
        if (res.t_hat == 0.0) continue;
        const double resid = std::abs(cgf.eval(res.t_hat, u).k10);
        const double scale = 1.0 + std::abs(cgf.eval(0.0, u).k10);
        CHECK(resid <= 1e-10 * scale);
        if (u > res.u0) CHECK(res.t_hat > 0.0);
    }
}

TEST_CASE("small-deviate branch is continuous at the switch point") {
    const OddConditioning cond = random_conditioning(39, 0.5, 7);
    const GaussianConditionalCgf cgf(cond, 0.5);
    const double u0 = compute_u0(cgf).u0;
    const double m = cond.m;
    // Queries straddling the small-W switch: sqrt(m)|W| near 1e-3.
    double u = u0;
    double just_below = 0.0, just_above = 0.0;
    for (int it = 0; it < 4000; ++it) {
        u += 2e-6;
        const auto r = conditional_tail(cgf, u);
        if (std::sqrt(m) * std::abs(r.w) > 1e-3) {
            just_above = u;
            break;
        }
        just_below = u;
    }
    REQUIRE(just_above > u0);
    // At each query, evaluate the branch the implementation did not take
    // and compare: the two formulas must agree where they meet.
    for (double q : {just_below, just_above}) {
        const auto r = conditional_tail(cgf, q);
        REQUIRE(r.t_hat != 0.0);
        const double direct = normal_upper_tail(
            std::sqrt(m) * (r.w - std::log(r.psi) / (m * r.w)));
        const double h = 1e-4;
        const double k20 = cgf.eval(r.t_hat, q).k20;
        const double k30 = (cgf.eval(r.t_hat + h, q).k20 - cgf.eval(r.t_hat - h, q).k20) /
                           (2.0 * h);
        const double limit = normal_upper_tail(
            std::sqrt(m) * (r.w + k30 / (6.0 * m * k20 * std::sqrt(k20))));
        CHECK_THAT(direct, Catch::Matchers::WithinAbs(limit, 1e-6));
        CHECK(std::min(direct, limit) <= r.tail);
        CHECK(r.tail <= std::max(direct, limit));
    }
}

TEST_CASE("conditional tail decreases along the query grid", "[property]") {
    const OddConditioning cond = random_conditioning(39, 0.5, 9);
    const GaussianConditionalCgf cgf(cond, 0.5);
    const double u0 = compute_u0(cgf).u0;
    double prev = 1.0;
    for (double u = std::max(0.05, u0 - 0.2); u < 0.95; u += 0.01) {
        const auto r = conditional_tail(cgf, u);
        CHECK(r.tail <= prev + 1e-12);
        prev = r.tail;
    }
}

TEST_CASE("gaussian and general backends agree on the conditional tail") {
    const OddConditioning cond = random_conditioning(9, 0.5, 15);
    const GaussianConditionalCgf closed(cond, 0.5);
    const GeneralConditionalCgf general(cond, ErrorDistribution::normal(), 0.5);
    for (double u : {0.55, 0.6, 0.7}) {
        const auto a = conditional_tail(closed, u);
        const auto b = conditional_tail(general, u);
        REQUIRE(a.feasible == b.feasible);
        if (a.feasible) CHECK_THAT(b.tail, Catch::Matchers::WithinAbs(a.tail, 5e-9));
    }
}

TEST_CASE("unconditional tail reproduces the published grid at n=39") {
    const double want[5] = {0.3210, 0.1923, 0.0946, 0.0353, 0.0088};
    for (int j = 0; j < 5; ++j) {
        const double u = 0.5 + 0.05 * (j + 1);
        const auto r = gaussian_unconditional_tail(39, 0.5, u);
        CHECK_THAT(r.tail, Catch::Matchers::WithinAbs(want[j], 1e-3));
    }
}

TEST_CASE("unconditional tail reproduces the published grid at n=9") {
    const double want[5] = {0.3629, 0.2937, 0.2261, 0.1624, 0.1066};
    for (int j = 0; j < 5; ++j) {
        const double u = 0.5 + 0.05 * (j + 1);
        const auto r = gaussian_unconditional_tail(9, 0.5, u);
        CHECK_THAT(r.tail, Catch::Matchers::WithinAbs(want[j], 1e-3));
    }
}

TEST_CASE("unconditional tail is one half at the symmetric point") {
    const auto r = gaussian_unconditional_tail(39, 0.0, 0.0);
    CHECK(r.tail == 0.5);
    CHECK(r.t_hat == 0.0);
}

TEST_CASE("unconditional tail handles u below the typical point") {
    const auto r = gaussian_unconditional_tail(39, 0.5, 0.2);
    CHECK(r.tail > 0.5);
    CHECK(r.t_hat < 0.0);
    CHECK(r.tail < 1.0);
}

TEST_CASE("unconditional tail validates inputs") {
    CHECK_THROWS_AS(gaussian_unconditional_tail(39, 0.5, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_unconditional_tail(39, 1.0, 0.5), std::invalid_argument);
}

TEST_CASE("expected conditional tail with one draw reduces to a single query") {
    const Ar1Model model{39, 0.5, ErrorDistribution::normal()};
    const auto est = expected_conditional_tail(model, 0.6, ConditionalBackendKind::gaussian, 1,
                                               2024, 1);
    RngStream rng(2024, 0);
    const auto series = simulate_ar1(39, 0.5, ErrorDistribution::normal(), rng);
    const GaussianConditionalCgf cgf(condition_decompose(series), 0.5);
    const auto single = conditional_tail(cgf, 0.6);
    CHECK(est.probability == single.tail);
    CHECK(est.replicates == 1);
}

TEST_CASE("expected conditional tail is reproducible across thread counts") {
    const Ar1Model model{9, 0.5, ErrorDistribution::normal()};
    const double us[2] = {0.55, 0.7};
    const auto a = expected_conditional_tail_grid(model, us, ConditionalBackendKind::gaussian,
                                                  2000, 97, 1);
    const auto b = expected_conditional_tail_grid(model, us, ConditionalBackendKind::gaussian,
                                                  2000, 97, 4);
    for (int j = 0; j < 2; ++j) {
        CHECK(a[j].probability == b[j].probability);
        CHECK(a[j].std_error == b[j].std_error);
    }
}

TEST_CASE("critical_value on the plain normal tail") {
    // Phibar(1.6448536269514722) = 0.05 (40-digit root).
    const double z = critical_value([](double v) { return normal_upper_tail(v); }, 0.05, 0.0,
                                    4.0);
    CHECK_THAT(z, Catch::Matchers::WithinAbs(1.6448536269514722, 1e-7));
}

TEST_CASE("critical_value at level one half recovers the zero-tilt point") {
    const OddConditioning cond = random_conditioning(39, 0.5, 21);
    const GaussianConditionalCgf cgf(cond, 0.5);
    const double u0 = compute_u0(cgf).u0;
    const double ustar = conditional_critical_value(cgf, 0.5);
    CHECK_THAT(ustar, Catch::Matchers::WithinAbs(u0, 1e-7));
}

TEST_CASE("critical_value self-consistency for the unconditional test") {
    auto tail = [](double u) { return gaussian_unconditional_tail(39, 0.5, u).tail; };
    const double ustar = critical_value(tail, 0.05, 0.5 + 1e-6, 0.995);
    CHECK_THAT(tail(ustar), Catch::Matchers::WithinAbs(0.05, 1e-6));
}

TEST_CASE("critical_value reports an unreachable level") {
    CHECK_THROWS_AS(critical_value([](double) { return 0.4; }, 0.05, 0.0, 1.0), NoRoot);
    CHECK_THROWS_AS(critical_value([](double) { return 0.4; }, 0.5, 0.0, 1.0), NoRoot);
}
