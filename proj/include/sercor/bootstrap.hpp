#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sercor/ar1.hpp"
#include "sercor/cgf.hpp"
#include "sercor/parallel.hpp"
#include "sercor/saddlepoint.hpp"

namespace sercor {

/// Walker alias table for O(1) discrete sampling from a fixed weight vector.
class AliasTable {
  public:
    explicit AliasTable(std::span<const double> weights) {
        const std::size_t n = weights.size();
        if (n == 0) throw std::invalid_argument("AliasTable: empty weights");
        prob_.resize(n);
        alias_.resize(n);
        const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (!(total > 0.0)) throw DegenerateInput("AliasTable: weights sum to zero");
        std::vector<double> scaled(n);
        for (std::size_t i = 0; i < n; ++i) scaled[i] = weights[i] * n / total;
        std::vector<std::uint32_t> small, large;
        for (std::size_t i = 0; i < n; ++i)
            (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
        while (!small.empty() && !large.empty()) {
            const auto s = small.back();
            const auto l = large.back();
            small.pop_back();
            large.pop_back();
            prob_[s] = scaled[s];
            alias_[s] = l;
            scaled[l] = scaled[l] + scaled[s] - 1.0;
            (scaled[l] < 1.0 ? small : large).push_back(l);
        }
        for (auto i : large) prob_[i] = 1.0;
        for (auto i : small) prob_[i] = 1.0;
    }

    std::size_t sample(RngStream& rng) const {
        const std::size_t i = static_cast<std::size_t>(rng.uniform_below(prob_.size()));
        return rng.uniform01() < prob_[i] ? i : alias_[i];
    }

    std::size_t size() const { return prob_.size(); }

  private:
    std::vector<double> prob_;
    std::vector<std::uint32_t> alias_;
};

enum class BootstrapScheme { unconditional, smoothed, conditional };

/// Shared knobs for the three bootstrap schemes. tau <= 0 means the default
/// bandwidth 1/m.
struct BootstrapConfig {
    double rho0 = 0.0;
    std::uint64_t replicates = 100000;
    double tau = 0.0;
    std::uint64_t seed = 0;
    BootstrapScheme scheme = BootstrapScheme::unconditional;
    int threads = 1;

    void validate() const {
        if (replicates < 1) throw std::invalid_argument("BootstrapConfig: replicates >= 1");
        if (!(std::abs(rho0) < 1.0)) throw std::invalid_argument("BootstrapConfig: |rho0| < 1");
        if (tau < 0.0) throw std::invalid_argument("BootstrapConfig: tau must be >= 0");
    }

    double resolved_tau(int m) const { return tau > 0.0 ? tau : 1.0 / m; }
};

namespace detail {

// Tally of indicator counts per query point, merged across fixed chunks.
inline std::vector<TailEstimate> tally_to_estimates(const std::vector<std::uint64_t>& counts,
                                                    std::uint64_t replicates, std::uint64_t seed) {
    std::vector<TailEstimate> out(counts.size());
    for (std::size_t j = 0; j < counts.size(); ++j) {
        const double p = static_cast<double>(counts[j]) / static_cast<double>(replicates);
        out[j] = {p, replicates, std::sqrt(std::max(0.0, p * (1.0 - p)) / replicates), seed};
    }
    return out;
}

} // namespace detail

/// Residual bootstrap: rebuild whole series from standardized residual
/// resamples under rho0 and tally R* > u per query point.
inline std::vector<TailEstimate> unconditional_bootstrap_tail_grid(const Ar1Series& series,
                                                                   const BootstrapConfig& cfg,
                                                                   std::span<const double> us) {
    cfg.validate();
    if (cfg.scheme != BootstrapScheme::unconditional)
        throw std::invalid_argument("unconditional_bootstrap_tail: wrong scheme");
    const ResidualSet res = compute_residuals(series, cfg.rho0);
    const std::vector<double>& eta = res.standardized;
    const int n = series.n();
    const double x1_scale = 1.0 / std::sqrt(1.0 - cfg.rho0 * cfg.rho0);
    const std::size_t nu = us.size();

    const std::uint64_t chunk = 4096;
    const std::uint64_t n_chunks = (cfg.replicates + chunk - 1) / chunk;
    std::vector<std::vector<std::uint64_t>> counts(n_chunks, std::vector<std::uint64_t>(nu, 0));

    parallel_chunks(cfg.replicates, chunk, resolve_threads(cfg.threads),
                    [&](std::uint64_t c, std::uint64_t b, std::uint64_t e) {
                        auto& cnt = counts[c];
                        std::vector<double> x(n);
                        for (std::uint64_t r = b; r < e; ++r) {
                            RngStream rng(cfg.seed, r);
                            x[0] = eta[rng.uniform_below(eta.size())] * x1_scale;
                            for (int i = 1; i < n; ++i)
                                x[i] = cfg.rho0 * x[i - 1] + eta[rng.uniform_below(eta.size())];
                            const double num = lag_product_sum(x);
                            const double den = half_weighted_square_sum(x);
                            for (std::size_t j = 0; j < nu; ++j)
                                if (num > us[j] * den) ++cnt[j];
                        }
                    });

    std::vector<std::uint64_t> total(nu, 0);
    for (const auto& cnt : counts)
        for (std::size_t j = 0; j < nu; ++j) total[j] += cnt[j];
    return detail::tally_to_estimates(total, cfg.replicates, cfg.seed);
}

inline TailEstimate unconditional_bootstrap_tail(const Ar1Series& series,
                                                 const BootstrapConfig& cfg, double u) {
    const double us[1] = {u};
    return unconditional_bootstrap_tail_grid(series, cfg, us)[0];
}

enum class SmoothedMode { monte_carlo, saddlepoint };

/// Smoothed bootstrap: residuals are kernel-smoothed with bandwidth tau, a
/// fresh series is drawn per conditioning set, and the even observations are
/// either redrawn from the induced normal mixture (monte_carlo) or handled
/// by the mixture-CGF tail approximation (saddlepoint). The result averages
/// the per-conditioning tails over n_cond draws.
inline std::vector<TailEstimate> smoothed_bootstrap_tail_grid(
    const Ar1Series& series, const BootstrapConfig& cfg, std::span<const double> us,
    std::uint64_t n_cond, SmoothedMode mode = SmoothedMode::monte_carlo) {
    cfg.validate();
    if (cfg.scheme != BootstrapScheme::smoothed)
        throw std::invalid_argument("smoothed_bootstrap_tail: wrong scheme");
    if (n_cond < 1) throw std::invalid_argument("smoothed_bootstrap_tail: n_cond >= 1");
    const ResidualSet res = compute_residuals(series, cfg.rho0);
    const std::vector<double> eta = res.standardized;
    const int n = series.n();
    const int m = series.m();
    const double tau = cfg.resolved_tau(m);
    const double x1_scale = 1.0 / std::sqrt(1.0 - cfg.rho0 * cfg.rho0);
    const std::size_t nu = us.size();
    const std::uint64_t inner = cfg.replicates;

    const std::uint64_t chunk = mode == SmoothedMode::monte_carlo ? 4 : 64;
    const std::uint64_t n_chunks = (n_cond + chunk - 1) / chunk;
    std::vector<std::vector<double>> sums(n_chunks, std::vector<double>(2 * nu, 0.0));

    parallel_chunks(n_cond, chunk, resolve_threads(cfg.threads), [&](std::uint64_t c,
                                                                     std::uint64_t b,
                                                                     std::uint64_t e) {
        auto& acc = sums[c];
        std::vector<double> x(n);
        for (std::uint64_t j = b; j < e; ++j) {
            RngStream rng(cfg.seed, j);
            // One smoothed-residual series per conditioning draw.
            for (int i = 0; i < n; ++i) {
                const double eps = eta[rng.uniform_below(eta.size())] + tau * rng.normal();
                x[i] = i == 0 ? eps * x1_scale : cfg.rho0 * x[i - 1] + eps;
            }
            Ar1Series dagger(x, cfg.rho0);
            const OddConditioning cond = condition_decompose(dagger);
            const MixtureConditionalCgf mix(cond, eta, cfg.rho0, tau);

            if (mode == SmoothedMode::saddlepoint) {
                for (std::size_t q = 0; q < nu; ++q) {
                    const double tail = conditional_tail(mix, us[q]).tail;
                    acc[2 * q] += tail;
                    acc[2 * q + 1] += tail * tail;
                }
            } else {
                std::vector<AliasTable> tables;
                tables.reserve(m);
                for (int i = 0; i < m; ++i) tables.emplace_back(mix.weights(i));
                const double sigma = mix.component_sigma();
                std::vector<std::uint64_t> hits(nu, 0);
                const double b_sum = std::accumulate(cond.b.begin(), cond.b.end(), 0.0);
                for (std::uint64_t r = 0; r < inner; ++r) {
                    // S(u) = sum_i a_i z_i - u (sum_i z_i^2 + sum_i b_i).
                    double s1 = 0.0, s2 = b_sum;
                    for (int i = 0; i < m; ++i) {
                        const std::size_t comp = tables[i].sample(rng);
                        const double z =
                            mix.component_mean(i, comp) + sigma * rng.normal();
                        s1 += cond.a[i] * z;
                        s2 += z * z;
                    }
                    for (std::size_t q = 0; q < nu; ++q)
                        if (s1 > us[q] * s2) ++hits[q];
                }
                for (std::size_t q = 0; q < nu; ++q) {
                    const double p = static_cast<double>(hits[q]) / static_cast<double>(inner);
                    acc[2 * q] += p;
                    acc[2 * q + 1] += p * p;
                }
            }
        }
    });

    std::vector<TailEstimate> out(nu);
    for (std::size_t q = 0; q < nu; ++q) {
        double s = 0.0, s2 = 0.0;
        for (const auto& acc : sums) {
            s += acc[2 * q];
            s2 += acc[2 * q + 1];
        }
        const double nc = static_cast<double>(n_cond);
        const double mean = s / nc;
        const double var = std::max(0.0, s2 / nc - mean * mean);
        out[q] = {mean, n_cond, std::sqrt(var / nc), cfg.seed};
    }
    return out;
}

inline TailEstimate smoothed_bootstrap_tail(const Ar1Series& series, const BootstrapConfig& cfg,
                                            double u, std::uint64_t n_cond,
                                            SmoothedMode mode = SmoothedMode::monte_carlo) {
    const double us[1] = {u};
    return smoothed_bootstrap_tail_grid(series, cfg, us, n_cond, mode)[0];
}

struct ConditionalBootstrapResult {
    TailEstimate mc;
    SaddleResult sp;
};

/// Conditional bootstrap: the odd-indexed observations stay fixed, raw
/// residuals feed the kernel mixture, and the even observations are redrawn
/// from it. Returns the Monte Carlo tally and the mixture-CGF tail side by
/// side.
inline std::vector<ConditionalBootstrapResult> conditional_bootstrap_tail_grid(
    const Ar1Series& series, const BootstrapConfig& cfg, std::span<const double> us) {
    cfg.validate();
    if (cfg.scheme != BootstrapScheme::conditional)
        throw std::invalid_argument("conditional_bootstrap_tail: wrong scheme");
    const ResidualSet res = compute_residuals(series, cfg.rho0);
    const OddConditioning cond = condition_decompose(series);
    const int m = series.m();
    const double tau = cfg.resolved_tau(m);
    const MixtureConditionalCgf mix(cond, res.raw, cfg.rho0, tau);
    const std::size_t nu = us.size();

    std::vector<AliasTable> tables;
    tables.reserve(m);
    for (int i = 0; i < m; ++i) tables.emplace_back(mix.weights(i));
    const double sigma = mix.component_sigma();
    const double b_sum = std::accumulate(cond.b.begin(), cond.b.end(), 0.0);

    const std::uint64_t chunk = 4096;
    const std::uint64_t n_chunks = (cfg.replicates + chunk - 1) / chunk;
    std::vector<std::vector<std::uint64_t>> counts(n_chunks, std::vector<std::uint64_t>(nu, 0));
    parallel_chunks(cfg.replicates, chunk, resolve_threads(cfg.threads),
                    [&](std::uint64_t c, std::uint64_t b, std::uint64_t e) {
                        auto& cnt = counts[c];
                        for (std::uint64_t r = b; r < e; ++r) {
                            RngStream rng(cfg.seed, r);
                            double s1 = 0.0, s2 = b_sum;
                            for (int i = 0; i < m; ++i) {
                                const std::size_t comp = tables[i].sample(rng);
                                const double z =
                                    mix.component_mean(i, comp) + sigma * rng.normal();
                                s1 += cond.a[i] * z;
                                s2 += z * z;
                            }
                            for (std::size_t j = 0; j < nu; ++j)
                                if (s1 > us[j] * s2) ++cnt[j];
                        }
                    });
    std::vector<std::uint64_t> total(nu, 0);
    for (const auto& cnt : counts)
        for (std::size_t j = 0; j < nu; ++j) total[j] += cnt[j];
    const auto mcs = detail::tally_to_estimates(total, cfg.replicates, cfg.seed);

    std::vector<ConditionalBootstrapResult> out(nu);
    for (std::size_t j = 0; j < nu; ++j) out[j] = {mcs[j], conditional_tail(mix, us[j])};
    return out;
}

inline ConditionalBootstrapResult conditional_bootstrap_tail(const Ar1Series& series,
                                                             const BootstrapConfig& cfg,
                                                             double u) {
    const double us[1] = {u};
    return conditional_bootstrap_tail_grid(series, cfg, us)[0];
}

/// One cell of the relative-error probe.
struct ProbeRow {
    int m = 0;
    double u = 0.0;
    double offset = 0.0;
    double truth = 0.0;
    double mean_rel_err = 0.0;
    double se_rel_err = 0.0;
};

struct ProbeBudgets {
    std::uint64_t samples = 40;
    std::uint64_t boot_replicates = 100000;
    std::uint64_t sim_replicates = 2000000;
};

struct ProbeResult {
    std::vector<ProbeRow> rows;
    double slope = 0.0;
    double slope_se = 0.0;
};

/// Plain Monte Carlo estimate of P(R > u) for each query point.
inline std::vector<TailEstimate> simulate_tail_grid(const Ar1Model& model,
                                                    std::span<const double> us,
                                                    std::uint64_t replicates, std::uint64_t seed,
                                                    int threads = 1) {
    const std::size_t nu = us.size();
    const std::uint64_t chunk = 4096;
    const std::uint64_t n_chunks = (replicates + chunk - 1) / chunk;
    std::vector<std::vector<std::uint64_t>> counts(n_chunks, std::vector<std::uint64_t>(nu, 0));
    parallel_chunks(replicates, chunk, resolve_threads(threads),
                    [&](std::uint64_t c, std::uint64_t b, std::uint64_t e) {
                        auto& cnt = counts[c];
                        for (std::uint64_t r = b; r < e; ++r) {
                            RngStream rng(seed, r);
                            const Ar1Series s = simulate_ar1(model.n, model.rho0, model.dist, rng);
                            const double num = lag_product_sum(s.x());
                            const double den = half_weighted_square_sum(s.x());
                            for (std::size_t j = 0; j < nu; ++j)
                                if (num > us[j] * den) ++cnt[j];
                        }
                    });
    std::vector<std::uint64_t> total(nu, 0);
    for (const auto& cnt : counts)
        for (std::size_t j = 0; j < nu; ++j) total[j] += cnt[j];
    return detail::tally_to_estimates(total, replicates, seed);
}

/// Measures |P(R>u) - P*(R*>u)| / P(R>u) over fresh samples and regresses
/// the log mean error on log(u - rho0) with one intercept per m. The slope
/// estimates the growth exponent of the bootstrap relative error in the
/// offset. Diagnostic; reports whatever is measured.
inline ProbeResult relative_error_probe(double rho0, const ErrorDistribution& dist,
                                        std::span<const int> ms,
                                        std::span<const double> offsets, const ProbeBudgets& budgets,
                                        std::uint64_t seed, int threads = 1) {
    ProbeResult result;
    std::vector<double> xs, ys;
    std::vector<int> groups;
    int group = 0;
    for (int m : ms) {
        const int n = 2 * m + 1;
        const Ar1Model model{n, rho0, dist};
        std::vector<double> us(offsets.size());
        for (std::size_t j = 0; j < offsets.size(); ++j) us[j] = rho0 + offsets[j];
        const auto truth = simulate_tail_grid(model, us, budgets.sim_replicates,
                                              seed ^ (0x9e37ULL + static_cast<std::uint64_t>(m)),
                                              threads);
        std::vector<double> err_sum(us.size(), 0.0), err_sq(us.size(), 0.0);
        for (std::uint64_t s = 0; s < budgets.samples; ++s) {
            const Ar1Series sample =
                simulate_ar1(n, rho0, dist, seed + 7777 * (m + 1), 10'000'000 + s);
            BootstrapConfig cfg;
            cfg.rho0 = rho0;
            cfg.replicates = budgets.boot_replicates;
            cfg.seed = seed + 104729 * (s + 1) + m;
            cfg.scheme = BootstrapScheme::unconditional;
            cfg.threads = threads;
            const auto boot = unconditional_bootstrap_tail_grid(sample, cfg, us);
            for (std::size_t j = 0; j < us.size(); ++j) {
                const double rel =
                    std::abs(boot[j].probability - truth[j].probability) / truth[j].probability;
                err_sum[j] += rel;
                err_sq[j] += rel * rel;
            }
        }
        for (std::size_t j = 0; j < us.size(); ++j) {
            const double ns = static_cast<double>(budgets.samples);
            const double mean = err_sum[j] / ns;
            const double var = std::max(0.0, err_sq[j] / ns - mean * mean);
            result.rows.push_back({m, us[j], offsets[j], truth[j].probability, mean,
                                   std::sqrt(var / ns)});
            xs.push_back(std::log(offsets[j]));
            ys.push_back(std::log(std::max(mean, 1e-300)));
            groups.push_back(group);
        }
        ++group;
    }

    // OLS with per-m intercepts and a common slope.
    const int g = group;
    const std::size_t nobs = xs.size();
    double sxx = 0.0, sxy = 0.0;
    std::vector<double> gx(g, 0.0), gy(g, 0.0), gn(g, 0.0);
    for (std::size_t i = 0; i < nobs; ++i) {
        gx[groups[i]] += xs[i];
        gy[groups[i]] += ys[i];
        gn[groups[i]] += 1.0;
    }
    for (std::size_t i = 0; i < nobs; ++i) {
        const double dx = xs[i] - gx[groups[i]] / gn[groups[i]];
        const double dy = ys[i] - gy[groups[i]] / gn[groups[i]];
        sxx += dx * dx;
        sxy += dx * dy;
    }
    result.slope = sxy / sxx;
    double rss = 0.0;
    for (std::size_t i = 0; i < nobs; ++i) {
        const double dx = xs[i] - gx[groups[i]] / gn[groups[i]];
        const double dy = ys[i] - gy[groups[i]] / gn[groups[i]];
        const double resid = dy - result.slope * dx;
        rss += resid * resid;
    }
    const double dof = std::max(1.0, static_cast<double>(nobs) - g - 1.0);
    result.slope_se = std::sqrt(rss / dof / sxx);
    return result;
}

} // namespace sercor
