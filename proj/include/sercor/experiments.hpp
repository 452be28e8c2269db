#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sercor/ar1.hpp"
#include "sercor/bootstrap.hpp"
#include "sercor/saddlepoint.hpp"

namespace sercor {

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Run settings shared by the CLI commands. Flags override the key=value
/// config file; unset optionals fall back to per-command defaults.
struct RunConfig {
    std::string command;
    int n = 39;
    double rho0 = 0.5;
    double rho1 = 0.0;
    std::string dist = "normal";
    std::vector<double> offsets = {0.05, 0.10, 0.15, 0.20, 0.25};
    std::optional<double> u;
    double level = 0.05;
    std::uint64_t sims = 1000000;
    std::uint64_t boot = 100000;
    std::uint64_t ncond = 0; // 0: per-command default
    double tau = 0.0;        // 0: bandwidth 1/m
    std::optional<std::uint64_t> seed;
    int threads = 0; // 0: hardware
    std::string out;
    std::string format = "csv";
    std::string method;
    std::string series_path;

    ErrorDistribution error_dist() const { return ErrorDistribution::from_name(dist); }

    std::vector<double> u_grid() const {
        if (u) return {*u};
        std::vector<double> us(offsets.size());
        for (std::size_t i = 0; i < offsets.size(); ++i) us[i] = rho0 + offsets[i];
        return us;
    }

    std::uint64_t resolved_seed(std::uint64_t command_default) const {
        return seed ? *seed : command_default;
    }

    void apply(const std::string& key, const std::string& value) {
        if (key == "n")
            n = std::stoi(value);
        else if (key == "rho0")
            rho0 = std::stod(value);
        else if (key == "rho1")
            rho1 = std::stod(value);
        else if (key == "dist")
            dist = value;
        else if (key == "u")
            u = std::stod(value);
        else if (key == "offsets") {
            offsets.clear();
            std::stringstream ss(value);
            std::string tok;
            while (std::getline(ss, tok, ',')) offsets.push_back(std::stod(tok));
        } else if (key == "level")
            level = std::stod(value);
        else if (key == "sims")
            sims = std::stoull(value);
        else if (key == "boot")
            boot = std::stoull(value);
        else if (key == "ncond")
            ncond = std::stoull(value);
        else if (key == "tau")
            tau = std::stod(value);
        else if (key == "seed")
            seed = std::stoull(value);
        else if (key == "threads")
            threads = std::stoi(value);
        else if (key == "out")
            out = value;
        else if (key == "format")
            format = value;
        else if (key == "method")
            method = value;
        else if (key == "series")
            series_path = value;
        else
            throw std::invalid_argument("unknown config key: " + key);
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("cannot open config file: " + path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line is not key=value: " + line);
            apply(line.substr(0, eq), line.substr(eq + 1));
        }
    }

    std::string canonical() const {
        std::ostringstream os;
        os << "command=" << command << ";n=" << n << ";rho0=" << format_double(rho0)
           << ";rho1=" << format_double(rho1) << ";dist=" << dist << ";offsets=";
        for (double o : offsets) os << format_double(o) << ",";
        if (u) os << ";u=" << format_double(*u);
        os << ";level=" << format_double(level) << ";sims=" << sims << ";boot=" << boot
           << ";ncond=" << ncond << ";tau=" << format_double(tau)
           << ";seed=" << (seed ? std::to_string(*seed) : std::string("default"))
           << ";method=" << method << ";series=" << series_path;
        return os.str();
    }
};

/// Labelled grid of results. Every stochastic cell carries a standard error;
/// deterministic cells carry none. Emits CSV (provenance as # comments) and
/// JSON, both of which parse back bit-exactly.
struct ResultTable {
    struct Cell {
        double u = 0.0;
        double value = 0.0;
        double se = 0.0;
        bool has_se = false;
    };
    struct Row {
        std::string method;
        std::vector<Cell> cells;
    };

    std::string command;
    std::vector<double> us;
    std::vector<Row> rows;
    std::map<std::string, std::string> provenance;
    std::vector<std::string> failures;

    Row& add_row(const std::string& method) {
        rows.push_back({method, {}});
        return rows.back();
    }

    void add_values(const std::string& method, const std::vector<double>& values) {
        Row& r = add_row(method);
        for (std::size_t i = 0; i < values.size(); ++i) r.cells.push_back({us[i], values[i], 0.0, false});
    }

    void add_estimates(const std::string& method, const std::vector<TailEstimate>& est) {
        Row& r = add_row(method);
        for (std::size_t i = 0; i < est.size(); ++i)
            r.cells.push_back({us[i], est[i].probability, est[i].std_error, true});
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "# command=" << command << "\n";
        for (const auto& [k, v] : provenance) os << "# " << k << "=" << v << "\n";
        os << "method";
        for (double u : us) os << "," << format_double(u) << "," << format_double(u) << "_se";
        os << "\n";
        for (const auto& row : rows) {
            os << row.method;
            for (const auto& c : row.cells) {
                os << "," << format_double(c.value) << ",";
                if (c.has_se) os << format_double(c.se);
            }
            os << "\n";
        }
        return os.str();
    }

    static ResultTable from_csv(const std::string& text) {
        ResultTable t;
        std::istringstream in(text);
        std::string line;
        bool header_done = false;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (line[0] == '#') {
                std::string body = line.substr(1);
                if (!body.empty() && body[0] == ' ') body.erase(0, 1);
                const auto eq = body.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = body.substr(0, eq);
                const std::string value = body.substr(eq + 1);
                if (key == "command")
                    t.command = value;
                else
                    t.provenance[key] = value;
                continue;
            }
            std::vector<std::string> fields;
            std::stringstream ss(line);
            std::string tok;
            while (std::getline(ss, tok, ',')) fields.push_back(tok);
            // A trailing empty SE field drops at the line end; restore it.
            if (line.back() == ',') fields.push_back("");
            if (!header_done) {
                for (std::size_t i = 1; i < fields.size(); i += 2) t.us.push_back(std::stod(fields[i]));
                header_done = true;
                continue;
            }
            Row row;
            row.method = fields[0];
            for (std::size_t i = 1; i + 1 < fields.size() + 1 && (i - 1) / 2 < t.us.size(); i += 2) {
                Cell c;
                c.u = t.us[(i - 1) / 2];
                c.value = std::stod(fields[i]);
                c.has_se = i + 1 < fields.size() && !fields[i + 1].empty();
                c.se = c.has_se ? std::stod(fields[i + 1]) : 0.0;
                row.cells.push_back(c);
            }
            t.rows.push_back(std::move(row));
        }
        return t;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["command"] = command;
        j["us"] = us;
        j["rows"] = nlohmann::json::array();
        for (const auto& row : rows) {
            nlohmann::json cells = nlohmann::json::array();
            for (const auto& c : row.cells) {
                nlohmann::json cell;
                cell["u"] = c.u;
                cell["value"] = c.value;
                if (c.has_se)
                    cell["se"] = c.se;
                else
                    cell["se"] = nullptr;
                cells.push_back(cell);
            }
            j["rows"].push_back({{"method", row.method}, {"cells", cells}});
        }
        j["provenance"] = provenance;
        if (!failures.empty()) j["failures"] = failures;
        return j;
    }

    static ResultTable from_json(const nlohmann::json& j) {
        ResultTable t;
        t.command = j.value("command", "");
        t.us = j.at("us").get<std::vector<double>>();
        for (const auto& row : j.at("rows")) {
            Row r;
            r.method = row.at("method").get<std::string>();
            for (const auto& cell : row.at("cells")) {
                Cell c;
                c.u = cell.at("u").get<double>();
                c.value = cell.at("value").get<double>();
                c.has_se = !cell.at("se").is_null();
                if (c.has_se) c.se = cell.at("se").get<double>();
                r.cells.push_back(c);
            }
            t.rows.push_back(std::move(r));
        }
        if (j.contains("provenance"))
            t.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
        if (j.contains("failures")) t.failures = j.at("failures").get<std::vector<std::string>>();
        return t;
    }

    bool operator==(const ResultTable& other) const {
        if (command != other.command || us != other.us || provenance != other.provenance ||
            rows.size() != other.rows.size())
            return false;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].method != other.rows[i].method ||
                rows[i].cells.size() != other.rows[i].cells.size())
                return false;
            for (std::size_t c = 0; c < rows[i].cells.size(); ++c) {
                const auto& a = rows[i].cells[c];
                const auto& b = other.rows[i].cells[c];
                if (a.u != b.u || a.value != b.value || a.has_se != b.has_se ||
                    (a.has_se && a.se != b.se))
                    return false;
            }
        }
        return true;
    }
};

inline std::vector<double> read_series_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open series file: " + path);
    std::vector<double> x;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        x.push_back(std::stod(line));
    }
    return x;
}

namespace detail {

inline void stamp_provenance(ResultTable& table, const RunConfig& cfg, std::uint64_t seed,
                             std::string_view extra = "") {
    table.command = cfg.command;
    table.provenance["config"] = cfg.canonical();
    table.provenance["seed"] = std::to_string(seed);
    std::string hashed = cfg.canonical();
    hashed.append(extra);
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(hashed)));
    table.provenance["input_hash_fnv1a64"] = buf;
}

/// Per-conditioning Monte Carlo of the Gaussian conditional law, averaged
/// over fresh conditioning draws. The simulation counterpart of the expected
/// conditional tail.
inline std::vector<TailEstimate> expected_conditional_mc_grid(const Ar1Model& model,
                                                              std::span<const double> us,
                                                              std::uint64_t n_cond,
                                                              std::uint64_t inner,
                                                              std::uint64_t seed, int threads) {
    const std::size_t nu = us.size();
    const double c = 1.0 + model.rho0 * model.rho0;
    const double sd = 1.0 / std::sqrt(c);
    const std::uint64_t chunk = 512;
    const std::uint64_t n_chunks = (n_cond + chunk - 1) / chunk;
    std::vector<std::vector<double>> sums(n_chunks, std::vector<double>(2 * nu, 0.0));
    parallel_chunks(n_cond, chunk, resolve_threads(threads), [&](std::uint64_t ch, std::uint64_t b,
                                                                 std::uint64_t e) {
        auto& acc = sums[ch];
        std::vector<std::uint64_t> hits(nu);
        for (std::uint64_t r = b; r < e; ++r) {
            RngStream rng(seed, r);
            const Ar1Series series = simulate_ar1(model.n, model.rho0, model.dist, rng);
            const OddConditioning cond = condition_decompose(series);
            const double b_sum = cond.b_bar * cond.m;
            std::fill(hits.begin(), hits.end(), 0);
            for (std::uint64_t k = 0; k < inner; ++k) {
                double s1 = 0.0, s2 = b_sum;
                for (int i = 0; i < cond.m; ++i) {
                    const double z = model.rho0 * cond.a[i] / c + sd * rng.normal();
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
        out[q] = {mean, n_cond, std::sqrt(var / nc), seed};
    }
    return out;
}

} // namespace detail

/// Saddlepoint vs Monte Carlo comparison for the stationary Gaussian model,
/// unconditional (exact eigenvalue CGF) and conditional (expected over
/// conditioning draws), at n = 39 and n = 9.
inline ResultTable cmd_table1(const RunConfig& cfg) {
    if (cfg.dist != "normal")
        throw std::invalid_argument("table1 is defined for the normal error law");
    const std::uint64_t seed = cfg.resolved_seed(1001);
    const std::uint64_t ncond = cfg.ncond ? cfg.ncond : 100000;
    ResultTable table;
    table.us = cfg.u_grid();
    detail::stamp_provenance(table, cfg, seed);
    table.provenance["ncond"] = std::to_string(ncond);
    int block = 0;
    for (int n : {cfg.n, 9}) {
        if (block == 1 && n == cfg.n) break;
        const std::string tag = " (n=" + std::to_string(n) + ")";
        const Ar1Model model{n, cfg.rho0, cfg.error_dist()};
        std::vector<double> sp(table.us.size());
        for (std::size_t j = 0; j < table.us.size(); ++j)
            sp[j] = gaussian_unconditional_tail(n, cfg.rho0, table.us[j]).tail;
        table.add_values("U saddle-point" + tag, sp);
        table.add_estimates("U simulation" + tag,
                            simulate_tail_grid(model, table.us, cfg.sims, seed + 11 + block,
                                               cfg.threads));
        table.add_estimates("C saddle-point" + tag,
                            expected_conditional_tail_grid(model, table.us,
                                                           ConditionalBackendKind::gaussian, ncond,
                                                           seed + 13 + block, cfg.threads));
        const std::uint64_t inner = std::max<std::uint64_t>(1, cfg.sims / ncond);
        table.add_estimates("C simulation" + tag,
                            detail::expected_conditional_mc_grid(model, table.us, ncond, inner,
                                                                 seed + 17 + block, cfg.threads));
        ++block;
    }
    return table;
}

/// One fresh heavy-tailed sample: unconditional bootstrap against the
/// smoothed bootstrap's Monte Carlo and saddlepoint faces, on shared
/// conditioning draws, plus the agreement gap used for acceptance.
inline ResultTable cmd_table2(const RunConfig& cfg) {
    const std::uint64_t seed = cfg.resolved_seed(1002);
    const std::uint64_t ncond = cfg.ncond ? cfg.ncond : 500;
    ResultTable table;
    table.us = cfg.u_grid();
    detail::stamp_provenance(table, cfg, seed);

    RngStream sample_rng(seed, 0xa11ce);
    const Ar1Series sample = simulate_ar1(cfg.n, cfg.rho0, cfg.error_dist(), sample_rng);

    BootstrapConfig bs;
    bs.rho0 = cfg.rho0;
    bs.replicates = cfg.boot;
    bs.tau = cfg.tau;
    bs.seed = seed + 1;
    bs.scheme = BootstrapScheme::unconditional;
    bs.threads = cfg.threads;
    table.add_estimates("BS", unconditional_bootstrap_tail_grid(sample, bs, table.us));

    BootstrapConfig sm = bs;
    sm.scheme = BootstrapScheme::smoothed;
    sm.replicates = std::max<std::uint64_t>(1, cfg.boot / 10);
    sm.seed = seed + 2;
    const auto ecbs =
        smoothed_bootstrap_tail_grid(sample, sm, table.us, ncond, SmoothedMode::monte_carlo);
    const auto ecsp =
        smoothed_bootstrap_tail_grid(sample, sm, table.us, ncond, SmoothedMode::saddlepoint);
    table.add_estimates("ECBS", ecbs);
    table.add_estimates("ECSP", ecsp);

    std::vector<double> gap(table.us.size()), bound(table.us.size());
    for (std::size_t j = 0; j < table.us.size(); ++j) {
        gap[j] = std::abs(ecbs[j].probability - ecsp[j].probability);
        bound[j] = 3.0 * std::hypot(ecbs[j].std_error, ecsp[j].std_error) +
                   0.02 * ecsp[j].probability;
    }
    table.add_values("|ECBS-ECSP|", gap);
    table.add_values("3se+2% bound", bound);
    return table;
}

/// Mean and spread of the unconditional bootstrap over fresh samples against
/// the simulated truth, for the t10 and centered exponential laws.
inline ResultTable cmd_table3(const RunConfig& cfg, std::uint64_t n_samples = 40) {
    const std::uint64_t seed = cfg.resolved_seed(1003);
    ResultTable table;
    table.us = cfg.u_grid();
    detail::stamp_provenance(table, cfg, seed);
    table.provenance["samples"] = std::to_string(n_samples);

    const std::vector<std::string> dists =
        cfg.dist == "both" ? std::vector<std::string>{"t10", "exp"} : std::vector<std::string>{cfg.dist};
    int block = 0;
    for (const auto& dname : dists) {
        const ErrorDistribution dist = ErrorDistribution::from_name(dname);
        const Ar1Model model{cfg.n, cfg.rho0, dist};
        table.add_estimates("SIM " + dname, simulate_tail_grid(model, table.us, cfg.sims,
                                                               seed + 3 + block, cfg.threads));
        std::vector<double> mean(table.us.size(), 0.0), sq(table.us.size(), 0.0);
        for (std::uint64_t s = 0; s < n_samples; ++s) {
            const Ar1Series sample = simulate_ar1(cfg.n, cfg.rho0, dist, seed + 5 + block,
                                                  0xb00 + s);
            BootstrapConfig bs;
            bs.rho0 = cfg.rho0;
            bs.replicates = cfg.boot;
            bs.seed = seed + 7 + 131 * s + block;
            bs.scheme = BootstrapScheme::unconditional;
            bs.threads = cfg.threads;
            const auto est = unconditional_bootstrap_tail_grid(sample, bs, table.us);
            for (std::size_t j = 0; j < table.us.size(); ++j) {
                mean[j] += est[j].probability;
                sq[j] += est[j].probability * est[j].probability;
            }
        }
        std::vector<double> sd(table.us.size());
        for (std::size_t j = 0; j < table.us.size(); ++j) {
            mean[j] /= static_cast<double>(n_samples);
            const double var =
                std::max(0.0, sq[j] / static_cast<double>(n_samples) - mean[j] * mean[j]);
            sd[j] = std::sqrt(var * n_samples / (n_samples - 1.0));
        }
        table.add_values("EBS " + dname, mean);
        table.add_values("SDBS " + dname, sd);
        ++block;
    }
    return table;
}

/// Conditional bootstrap on one fresh centered-exponential sample per
/// hypothesized coefficient: mixture saddlepoint vs direct resampling.
inline ResultTable cmd_table4(const RunConfig& cfg) {
    const std::uint64_t seed = cfg.resolved_seed(1004);
    ResultTable table;
    detail::stamp_provenance(table, cfg, seed);
    const std::vector<double> rhos = {0.0, cfg.rho0};
    // The query grid tracks each rho0 block; label columns by offset.
    table.us = cfg.offsets;
    int block = 0;
    for (double rho0 : rhos) {
        if (block == 1 && rho0 == 0.0) break;
        const std::string tag = " rho0=" + format_double(rho0);
        const Ar1Series sample =
            simulate_ar1(cfg.n, rho0, cfg.error_dist(), seed + 21 + block, 0xf00d);
        BootstrapConfig bs;
        bs.rho0 = rho0;
        bs.replicates = cfg.boot;
        bs.tau = cfg.tau;
        bs.seed = seed + 23 + block;
        bs.scheme = BootstrapScheme::conditional;
        bs.threads = cfg.threads;
        std::vector<double> us(cfg.offsets.size());
        for (std::size_t j = 0; j < us.size(); ++j) us[j] = rho0 + cfg.offsets[j];
        const auto results = conditional_bootstrap_tail_grid(sample, bs, us);
        std::vector<double> sp(us.size()), gap(us.size()), bound(us.size());
        std::vector<TailEstimate> mc(us.size());
        for (std::size_t j = 0; j < us.size(); ++j) {
            sp[j] = results[j].sp.tail;
            mc[j] = results[j].mc;
            gap[j] = std::abs(sp[j] - mc[j].probability);
            bound[j] = 3.0 * mc[j].std_error + 0.02 * sp[j];
        }
        table.add_values("CSP" + tag, sp);
        table.add_estimates("CBS" + tag, mc);
        table.add_values("|CSP-CBS|" + tag, gap);
        table.add_values("3se+2% bound" + tag, bound);
        ++block;
    }
    return table;
}

/// Power of the unconditional and conditional level-alpha tests against
/// rho1 > rho0, by rejection counting over simulated series. The Gaussian
/// case calibrates critical values from the saddlepoint laws; other error
/// laws calibrate per sample from the matching bootstrap law.
inline ResultTable cmd_power(const RunConfig& cfg) {
    if (!(cfg.rho1 > cfg.rho0)) throw std::invalid_argument("power: need rho1 > rho0");
    const std::uint64_t seed = cfg.resolved_seed(1005);
    const bool gaussian = cfg.dist == "normal";
    const std::uint64_t n_sims = cfg.sims == 1000000 ? (gaussian ? 40000 : 4000) : cfg.sims;
    const std::uint64_t boot = cfg.boot == 100000 ? 2000 : cfg.boot;
    ResultTable table;
    table.us = {cfg.rho1};
    detail::stamp_provenance(table, cfg, seed);
    table.provenance["power_sims"] = std::to_string(n_sims);
    table.provenance["level"] = format_double(cfg.level);

    const ErrorDistribution dist = cfg.error_dist();
    const int n = cfg.n;
    const int m = (n - 1) / 2;

    double ustar_unconditional = 0.0;
    if (gaussian) {
        auto tail = [&](double u) { return gaussian_unconditional_tail(n, cfg.rho0, u).tail; };
        ustar_unconditional = critical_value(tail, cfg.level, cfg.rho0 + 1e-6, 0.995);
        table.provenance["ustar_unconditional"] = format_double(ustar_unconditional);
    }

    const std::uint64_t chunk = 64;
    const std::uint64_t n_chunks = (n_sims + chunk - 1) / chunk;
    std::vector<std::uint64_t> rej_u(n_chunks, 0), rej_c(n_chunks, 0);
    parallel_chunks(n_sims, chunk, resolve_threads(cfg.threads), [&](std::uint64_t c,
                                                                     std::uint64_t b,
                                                                     std::uint64_t e) {
        for (std::uint64_t r = b; r < e; ++r) {
            RngStream rng(seed, r);
            const Ar1Series series = simulate_ar1(n, cfg.rho1, dist, rng);
            const double robs = serial_correlation(series);
            double ustar_u;
            double ustar_c;
            if (gaussian) {
                ustar_u = ustar_unconditional;
                const GaussianConditionalCgf cgf(condition_decompose(series), cfg.rho0);
                ustar_c = conditional_critical_value(cgf, cfg.level);
            } else {
                // Bootstrap calibration per sample under the null coefficient.
                BootstrapConfig bs;
                bs.rho0 = cfg.rho0;
                bs.replicates = boot;
                bs.seed = seed ^ (0x5eedULL + 31 * r);
                bs.scheme = BootstrapScheme::unconditional;
                const ResidualSet res = compute_residuals(series, cfg.rho0);
                std::vector<double> rstars(boot);
                std::vector<double> x(static_cast<std::size_t>(n));
                const double x1_scale = 1.0 / std::sqrt(1.0 - cfg.rho0 * cfg.rho0);
                for (std::uint64_t k = 0; k < boot; ++k) {
                    RngStream brng(bs.seed, k);
                    x[0] = res.standardized[brng.uniform_below(res.standardized.size())] * x1_scale;
                    for (int i = 1; i < n; ++i)
                        x[i] = cfg.rho0 * x[i - 1] +
                               res.standardized[brng.uniform_below(res.standardized.size())];
                    rstars[k] = lag_product_sum(x) / half_weighted_square_sum(x);
                }
                const std::size_t idx =
                    static_cast<std::size_t>(std::ceil((1.0 - cfg.level) * boot)) - 1;
                std::nth_element(rstars.begin(), rstars.begin() + idx, rstars.end());
                ustar_u = rstars[idx];
                const MixtureConditionalCgf mix(condition_decompose(series), res.raw, cfg.rho0,
                                                cfg.tau > 0.0 ? cfg.tau : 1.0 / m);
                ustar_c = conditional_critical_value(mix, cfg.level);
            }
            if (robs > ustar_u) ++rej_u[c];
            if (robs > ustar_c) ++rej_c[c];
        }
    });
    std::uint64_t total_u = 0, total_c = 0;
    for (std::uint64_t c = 0; c < n_chunks; ++c) {
        total_u += rej_u[c];
        total_c += rej_c[c];
    }
    const auto as_estimate = [&](std::uint64_t hits) {
        const double p = static_cast<double>(hits) / static_cast<double>(n_sims);
        return std::vector<TailEstimate>{
            {p, n_sims, std::sqrt(std::max(0.0, p * (1.0 - p)) / n_sims), seed}};
    };
    table.add_estimates("power U", as_estimate(total_u));
    table.add_estimates("power C", as_estimate(total_c));
    return table;
}

/// Single tail query with all intermediate quantities, serialized to JSON.
inline nlohmann::json cmd_tail(const RunConfig& cfg) {
    const std::uint64_t seed = cfg.resolved_seed(1006);
    if (!cfg.u) throw std::invalid_argument("tail: --u is required");
    const double u = *cfg.u;
    nlohmann::json j;
    j["method"] = cfg.method;
    j["u"] = u;
    j["n"] = cfg.n;
    j["rho0"] = cfg.rho0;

    auto fill = [&](const SaddleResult& r) {
        j["u0"] = std::isnan(r.u0) ? nlohmann::json(nullptr) : nlohmann::json(r.u0);
        j["t_hat"] = r.t_hat;
        j["w"] = r.w;
        j["psi"] = r.psi;
        j["w_plus"] = r.w_plus;
        j["tail"] = r.tail;
        j["feasible"] = r.feasible;
    };

    if (cfg.method == "gaussian-unconditional") {
        fill(gaussian_unconditional_tail(cfg.n, cfg.rho0, u));
        return j;
    }
    if (cfg.series_path.empty())
        throw std::invalid_argument("tail: --series is required for conditional methods");
    const Ar1Series series = Ar1Series::from_observations(read_series_file(cfg.series_path));
    j["n"] = series.n();
    const OddConditioning cond = condition_decompose(series);
    if (cfg.method == "gaussian-conditional") {
        fill(conditional_tail(GaussianConditionalCgf(cond, cfg.rho0), u));
    } else if (cfg.method == "general") {
        fill(conditional_tail(GeneralConditionalCgf(cond, cfg.error_dist(), cfg.rho0), u));
    } else if (cfg.method == "mixture-smoothed") {
        const ResidualSet res = compute_residuals(series, cfg.rho0);
        const double tau = cfg.tau > 0.0 ? cfg.tau : 1.0 / series.m();
        fill(conditional_tail(MixtureConditionalCgf(cond, res.standardized, cfg.rho0, tau), u));
    } else if (cfg.method == "mixture-conditional") {
        const ResidualSet res = compute_residuals(series, cfg.rho0);
        const double tau = cfg.tau > 0.0 ? cfg.tau : 1.0 / series.m();
        fill(conditional_tail(MixtureConditionalCgf(cond, res.raw, cfg.rho0, tau), u));
    } else {
        throw std::invalid_argument("tail: unknown method " + cfg.method);
    }
    j["seed"] = seed;
    return j;
}

inline Ar1Series cmd_simulate(const RunConfig& cfg) {
    return simulate_ar1(cfg.n, cfg.rho0, cfg.error_dist(), cfg.resolved_seed(1007), 0);
}

/// Growth-rate probe of the unconditional bootstrap's relative error.
inline ResultTable cmd_probe_relerr(const RunConfig& cfg) {
    const std::uint64_t seed = cfg.resolved_seed(1008);
    ResultTable table;
    table.us = cfg.offsets;
    detail::stamp_provenance(table, cfg, seed);
    const std::vector<int> ms = {(cfg.n - 1) / 2, 49};
    ProbeBudgets budgets;
    budgets.boot_replicates = cfg.boot;
    budgets.sim_replicates = cfg.sims;
    const auto probe = relative_error_probe(cfg.rho0, cfg.error_dist(), ms, cfg.offsets, budgets,
                                            seed, cfg.threads);
    for (int mi = 0; mi < static_cast<int>(ms.size()); ++mi) {
        std::vector<TailEstimate> est;
        std::vector<double> truth;
        for (const auto& row : probe.rows)
            if (row.m == ms[mi]) {
                est.push_back({row.mean_rel_err, budgets.samples, row.se_rel_err, seed});
                truth.push_back(row.truth);
            }
        table.add_estimates("relerr m=" + std::to_string(ms[mi]), est);
        table.add_values("truth m=" + std::to_string(ms[mi]), truth);
    }
    table.provenance["slope"] = format_double(probe.slope);
    table.provenance["slope_se"] = format_double(probe.slope_se);
    return table;
}

} // namespace sercor
