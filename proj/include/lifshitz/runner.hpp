#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lifshitz/concentration.hpp"
#include "lifshitz/config.hpp"
#include "lifshitz/ids.hpp"
#include "lifshitz/lifshitz_analysis.hpp"
#include "lifshitz/perturbation.hpp"
#include "lifshitz/persist.hpp"
#include "lifshitz/svg.hpp"

#ifndef LIFSHITZ_VERSION
#define LIFSHITZ_VERSION "unknown"
#endif

namespace lifshitz {

inline const std::vector<std::string>& subcommands()
{
    static const std::vector<std::string> names{"ids",           "exponent-fit", "exponent-table", "concentration",
                                                "perturbation",  "lower-bound",  "convergence"};
    return names;
}

struct RunOutcome {
    int exit_code = 0;
    RunRecord record;
};

namespace runner {

using json = nlohmann::json;

inline unsigned threads_of(const ExperimentConfig& c) { return c.threads == 0 ? default_thread_count() : c.threads; }

inline std::string tag(double L) { return "L" + format_double(L); }

inline IdsSetup ids_setup(const ExperimentConfig& c, double L)
{
    IdsSetup s;
    s.law = c.law;
    s.envelope = c.envelope;
    s.grid = c.grid_for(L);
    s.energies = log_energy_grid(c.energy_grid.e_min, c.energy_grid.e_max, c.energy_grid.per_decade);
    s.samples = c.samples;
    s.seed = c.base_seed;
    s.threads = threads_of(c);
    s.truncation_rel = c.truncation_rel;
    return s;
}

inline CsvTable ids_table(const IdsCurve& curve)
{
    CsvTable t({"E", "lower", "lower_stderr", "upper", "upper_stderr", "censored_flag"});
    for (std::size_t e = 0; e < curve.energies.size(); ++e) {
        t.row({format_double(curve.energies[e]), format_double(curve.lower[e]), format_double(curve.lower_stderr[e]),
               format_double(curve.upper[e]), format_double(curve.upper_stderr[e]), std::to_string(curve.censored[e])});
    }
    return t;
}

inline json curve_meta(const IdsCurve& c)
{
    return {{"L", c.side_length},          {"n", c.points_per_side},      {"samples", c.samples},
            {"skipped", c.skipped},        {"seed", c.seed},              {"censor_bound", c.censor_bound},
            {"bracket_checks", c.bracket_checks}, {"R_trunc", c.truncation_radius}};
}

inline Plot ids_plot(const IdsCurve& c)
{
    Plot p;
    p.title = "Bracketed IDS, L = " + format_double(c.side_length);
    p.x_label = "E";
    p.y_label = "N(E)";
    p.log_x = p.log_y = true;
    p.bands.push_back({"Dirichlet..Neumann", c.energies, c.lower, c.upper, "#9ecae1"});
    p.series.push_back({"Neumann (upper)", c.energies, c.upper, "#d62728", true, false});
    p.series.push_back({"Dirichlet (lower)", c.energies, c.lower, "#1f77b4", true, false});
    return p;
}

struct Context {
    const ExperimentConfig& cfg;
    ArtifactWriter& out;
    RunRecord& record;
    std::ostream& log;

    void plot(const std::string& name, const Plot& p)
    {
        if (cfg.plot) out.write(name, p.render());
    }
};

inline void run_ids(Context& ctx)
{
    const auto& c = ctx.cfg;
    json meta = json::array();
    for (double L : c.side_lengths) {
        const auto setup = ids_setup(c, L);
        const auto curve = estimate_ids(setup);
        ctx.out.write_csv("ids_" + tag(L) + ".csv", ids_table(curve));
        ctx.plot("ids_" + tag(L) + ".svg", ids_plot(curve));
        auto m = curve_meta(curve);
        const double E = 0.5 * c.factorization_c / (L * L);
        const auto fac = neumann_upper_factorization(setup, E, c.factorization_c);
        m["factorization"] = {{"E", fac.energy},          {"free_count", fac.free_count},
                              {"probability", fac.probability}, {"product", fac.product},
                              {"mean_count", fac.mean_count},   {"holds", fac.holds}};
        meta.push_back(m);
        ctx.log << "ids L=" << L << ": " << curve.samples << " samples, " << curve.bracket_checks
                << " bracketing checks, 0 violations; factorization at E=" << E << " "
                << (fac.holds ? "holds" : "VIOLATED") << "\n";
    }
    ctx.record.constants["ids"] = meta;
}

inline json fit_json(const ExponentFit& f, double gamma)
{
    return {{"gamma_hat", f.gamma_hat},
            {"stderr", f.stderr_gamma},
            {"window", {f.window.e_lo, f.window.e_hi}},
            {"points_used", f.points_used},
            {"censored_dropped", f.censored_dropped},
            {"saturated_dropped", f.saturated_dropped},
            {"r_squared", f.r_squared},
            {"theoretical_gamma", gamma},
            {"verdict", exponent_verdict(f.gamma_hat, gamma)}};
}

inline void run_exponent_fit(Context& ctx)
{
    const auto& c = ctx.cfg;
    const double L = c.side_lengths.front();
    const auto curve = estimate_ids(ids_setup(c, L));
    ctx.out.write_csv("ids_" + tag(L) + ".csv", ids_table(curve));
    const double gamma = theoretical_exponent(c.dim, c.envelope.decay_exponent());
    std::optional<FitWindow> window;
    if (c.fit.window) window = FitWindow{c.fit.window->first, c.fit.window->second};
    const CurveSide headline = c.fit.side == "lower" ? CurveSide::Lower : CurveSide::Upper;

    json report;
    report["theoretical_gamma"] = gamma;
    report["headline"] = to_string(headline);
    report["curve"] = curve_meta(curve);
    CsvTable points({"side", "E", "ln_E", "N", "ln_abs_ln_N", "used"});
    Plot plot;
    plot.title = "ln|ln N| against ln E";
    plot.x_label = "ln E";
    plot.y_label = "ln|ln N|";
    for (CurveSide side : {CurveSide::Upper, CurveSide::Lower}) {
        const auto pts = log_points(curve, side);
        std::optional<ExponentFit> fit;
        try {
            fit = fit_exponent(pts, window);
        } catch (const InsufficientDataError& e) {
            if (side == headline) throw;
            report[to_string(side)] = {{"error", e.what()}};
        }
        if (fit) report[to_string(side)] = fit_json(*fit, gamma);
        PlotSeries s{to_string(side), {}, {}, side == CurveSide::Upper ? "#d62728" : "#1f77b4", true, false};
        for (const auto& p : pts) {
            if (p.censored || !(p.log_n < 0.0)) continue;
            const bool used = fit && p.energy >= fit->window.e_lo && p.energy <= fit->window.e_hi;
            points.row({to_string(side), format_double(p.energy), format_double(std::log(p.energy)),
                        format_double(std::exp(p.log_n)), format_double(std::log(-p.log_n)), used ? "1" : "0"});
            s.x.push_back(std::log(p.energy));
            s.y.push_back(std::log(-p.log_n));
        }
        plot.series.push_back(s);
        if (fit) {
            const double a = std::log(fit->window.e_lo), b = std::log(fit->window.e_hi);
            plot.series.push_back({std::string("fit ") + to_string(side), {a, b},
                                   {fit->intercept - fit->gamma_hat * a, fit->intercept - fit->gamma_hat * b},
                                   "#333333", false, true});
            ctx.log << to_string(side) << ": gamma_hat = " << fit->gamma_hat << " +- " << fit->stderr_gamma
                    << " on [" << fit->window.e_lo << ", " << fit->window.e_hi << "] (" << fit->points_used
                    << " points), theoretical " << gamma << ", " << exponent_verdict(fit->gamma_hat, gamma) << "\n";
        }
    }
    ctx.out.write_csv("exponent_points.csv", points);
    ctx.out.write_json("exponent_fit.json", report);
    ctx.plot("exponent_fit.svg", plot);
    ctx.record.constants["exponent_fit"] = report;
}

inline void run_exponent_table(Context& ctx)
{
    const auto& c = ctx.cfg;
    const double alpha = c.envelope.decay_exponent();
    const double gamma = theoretical_exponent(c.dim, alpha);
    ctx.log << "d = " << c.dim << ", alpha = " << alpha << ": gamma = " << gamma << " ("
            << (alpha >= c.dim + 1.0 ? "alpha >= d + 1, gamma = d/2" : "d < alpha < d + 1, gamma = d/(2(alpha - d))")
            << ")\n";
    CsvTable t({"d", "alpha", "gamma"});
    for (int d = 1; d <= 3; ++d) {
        for (double off : {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0}) {
            t.row(std::vector<double>{static_cast<double>(d), d + off, theoretical_exponent(d, d + off)});
        }
    }
    ctx.out.write_csv("exponent_table.csv", t);
    ctx.record.constants["gamma"] = gamma;
}

inline void run_concentration(Context& ctx)
{
    const auto& c = ctx.cfg;
    const bool energy = c.functional == "energy";
    const double alpha = c.envelope.decay_exponent();
    if (!energy && !std::isfinite(alpha)) {
        throw ConfigError("config.functional: linear_minorant needs a poly_decay envelope");
    }
    json per_l = json::array();
    CsvTable scaling({"L", "sigma_sq"});
    std::vector<double> log_l, log_s;
    for (double L : c.side_lengths) {
        const auto grid = c.grid_for(L);
        const auto F = energy ? Functional::energy_integral(c.law, c.envelope, grid, c.truncation_rel)
                              : Functional::linear_minorant(c.law, c.dim, L, alpha, c.truncation_rel);
        const auto spec = energy ? sigma_energy_functional(c.dim, L, c.envelope, c.law, c.M)
                                 : sigma_linear_minorant(c.dim, L, alpha, c.law.support_bound());
        const auto values = sample_functional(F, c.samples, c.base_seed, threads_of(c));
        const auto lambdas = default_lambda_grid(spec.sigma_sq, c.lambda_points);
        const auto rows = empirical_tail(values, spec.sigma_sq, lambdas);
        CsvTable t({"lambda", "empirical_tail", "ci_low", "ci_high", "mcdiarmid_bound"});
        bool all_within = true;
        Plot p;
        p.title = std::string(energy ? "Energy functional" : "Linear minorant") + " tails, L = " + format_double(L);
        p.x_label = "lambda";
        p.y_label = "P(|F - mean F| > lambda)";
        PlotSeries emp{"empirical", {}, {}, "#1f77b4", true, false}, bnd{"McDiarmid bound", {}, {}, "#d62728", false, true};
        PlotBand ci{"99% Wilson", {}, {}, {}, "#9ecae1"};
        for (const auto& r : rows) {
            t.row(std::vector<double>{r.lambda, r.empirical, r.ci_low, r.ci_high, r.bound});
            all_within = all_within && r.within_bound();
            emp.x.push_back(r.lambda);
            emp.y.push_back(r.empirical);
            bnd.x.push_back(r.lambda);
            bnd.y.push_back(std::min(r.bound, 1.0));
            ci.x.push_back(r.lambda);
            ci.low.push_back(r.ci_low);
            ci.high.push_back(r.ci_high);
        }
        const std::string stem = std::string("concentration_") + c.functional + "_" + tag(L);
        ctx.out.write_csv(stem + ".csv", t);
        p.bands.push_back(ci);
        p.series.push_back(emp);
        p.series.push_back(bnd);
        ctx.plot(stem + ".svg", p);

        CsvTable coords({"j", "sigma_j", "max_difference", "holds"});
        bool coords_ok = true;
        for (std::int64_t j : {std::int64_t{0}, static_cast<std::int64_t>(L / 2), spec.case1_radius() + 1}) {
            if (j > F.radius()) continue;
            std::vector<std::int64_t> idx(static_cast<std::size_t>(c.dim), 0);
            idx[0] = j;
            const auto chk = perturb_one_coordinate_check(F, spec, idx, 100, sample_seed(c.base_seed, 1u << 20),
                                                          threads_of(c));
            coords.row({std::to_string(j), format_double(chk.sigma), format_double(chk.max_difference),
                        chk.holds ? "1" : "0"});
            coords_ok = coords_ok && chk.holds;
        }
        ctx.out.write_csv(stem + "_coordinates.csv", coords);

        scaling.row(std::vector<double>{L, spec.sigma_sq});
        log_l.push_back(std::log(L));
        log_s.push_back(std::log(spec.sigma_sq));
        per_l.push_back({{"L", L},
                         {"sigma_sq", spec.sigma_sq},
                         {"C_glob", spec.c_glob},
                         {"lattice_sum_sup", spec.lattice_sum_sup},
                         {"M", spec.M},
                         {"R_trunc", F.radius()},
                         {"tails_within_bound", all_within},
                         {"coordinates_within_sigma", coords_ok}});
        ctx.log << "concentration " << c.functional << " L=" << L << ": sigma^2 = " << spec.sigma_sq << ", tails "
                << (all_within ? "within" : "EXCEED") << " bound + 3 CI, one-coordinate checks "
                << (coords_ok ? "hold" : "FAIL") << "\n";
    }
    ctx.record.constants["concentration"] = per_l;
    if (c.side_lengths.size() >= 2) {
        ctx.out.write_csv(std::string("sigma_scaling_") + c.functional + ".csv", scaling);
        const auto lf = linear_fit(log_l, log_s);
        const double expected = energy ? c.dim : c.dim - 2.0 * alpha;
        ctx.record.constants["sigma_slope"] = {{"slope", lf.slope}, {"expected", expected}};
        ctx.log << "ln sigma^2 vs ln L slope = " << lf.slope << " (expected " << expected << ")\n";
    }
    if (energy) {
        // P(λ_1 < E) <= P(∫_Λ V < ρ L^d / 2) <= 2 exp(-2 (ρ L^d / 2)^2 / σ^2(L)) with L = κ E^{-1/2}.
        const auto rho = mean_energy_density(c.law, c.envelope, c.dim);
        CsvTable t({"E", "L", "sigma_sq", "log_bound"});
        for (double E = c.energy_grid.e_min; E <= c.energy_grid.e_max * (1 + 1e-12); E *= 10.0) {
            const double L = c.energy_box_coupling / std::sqrt(E);
            const auto spec = sigma_energy_functional(c.dim, L, c.envelope, c.law, c.M);
            const double dev = 0.5 * rho.rho * std::pow(L, c.dim);
            const double log_bound = spec.sigma_sq > 0.0 ? std::log(2.0) - 2.0 * dev * dev / spec.sigma_sq : -INFINITY;
            t.row(std::vector<double>{E, L, spec.sigma_sq, log_bound});
        }
        ctx.out.write_csv("energy_bound.csv", t);
        ctx.record.constants["rho"] = rho.rho;
    }
}

inline void run_perturbation(Context& ctx)
{
    const auto& c = ctx.cfg;
    CsvTable summary({"L", "c1", "c2", "max_b", "b", "t", "lhs", "rhs", "holds", "nu_discrete", "nu_continuum",
                      "nu_pi_over_L2"});
    json per_l = json::array();
    double c2_lo = INFINITY, c2_hi = 0.0;
    for (double L : c.side_lengths) {
        const auto grid = c.grid_for(L);
        const auto k = measure_stollmann_constants(c.law, c.envelope, grid, c.path_samples, c.base_seed,
                                                   threads_of(c), c.truncation_rel);
        const double b = c.b ? *c.b : 0.5 * k.max_b();
        const auto rep = small_eigenvalue_probability(c.law, c.envelope, grid, b, k, c.samples,
                                                      sample_seed(c.base_seed, 1u << 20), threads_of(c),
                                                      c.truncation_rel);
        const auto gap = neumann_gap(grid);
        summary.row(std::vector<double>{L, k.c1, k.c2, k.max_b(), b, rep.t, rep.lhs, rep.rhs, rep.holds ? 1.0 : 0.0,
                                        gap.discrete, gap.continuum, gap.pi_over_l2});
        c2_lo = std::min(c2_lo, k.c2);
        c2_hi = std::max(c2_hi, k.c2);

        const auto plan = plan_truncation(c.law.support_bound(), c.envelope, grid, c.truncation_rel);
        const auto v = AlloyFieldEvaluator(c.envelope, grid, plan.radius)
                           .potential(sample_couplings(c.law, c.dim, plan.radius, sample_seed(c.base_seed, 0)));
        const auto path = eigen_path(v, linear_t_grid(k.c1 / (L * L), 24));
        CsvTable pt({"t", "E_t", "t_dE0", "remainder"});
        const auto rem = path.remainder();
        for (std::size_t i = 0; i < path.t.size(); ++i) {
            pt.row(std::vector<double>{path.t[i], path.energies[i], path.t[i] * path.hf_derivative, rem[i]});
        }
        ctx.out.write_csv("path_" + tag(L) + ".csv", pt);
        if (c.plot) {
            Plot p;
            p.title = "E(t) against t E'(0), L = " + format_double(L);
            p.x_label = "t";
            p.y_label = "energy";
            std::vector<double> tan(path.t.size());
            for (std::size_t i = 0; i < tan.size(); ++i) tan[i] = path.t[i] * path.hf_derivative;
            p.series.push_back({"E(t)", path.t, path.energies, "#1f77b4", true, false});
            p.series.push_back({"t E'(0)", path.t, tan, "#d62728", false, true});
            ctx.out.write("path_" + tag(L) + ".svg", p.render());
        }
        per_l.push_back({{"L", L}, {"C1", k.c1}, {"C2", k.c2}, {"b", b}, {"lhs", rep.lhs}, {"rhs", rep.rhs},
                         {"holds", rep.holds}, {"mean_dE0", rep.mean_derivative}, {"nu_discrete", gap.discrete}});
        ctx.log << "perturbation L=" << L << ": C1 = " << k.c1 << ", C2 = " << k.c2 << ", P(lambda_1 < bL^-2) = "
                << rep.lhs << " vs " << rep.rhs << (rep.holds ? " (holds)" : " (VIOLATED)") << "\n";
    }
    ctx.out.write_csv("stollmann.csv", summary);
    ctx.record.constants["perturbation"] = per_l;
    ctx.record.constants["c2_spread"] = c2_hi / c2_lo;
    ctx.log << "C2 spread across L: " << c2_hi / c2_lo << " (factor-4 band " << (c2_hi <= 4 * c2_lo ? "met" : "missed")
            << ")\n";
}

inline void run_lower_bound(Context& ctx)
{
    const auto& c = ctx.cfg;
    RareEventSetup s;
    s.law = c.law;
    s.envelope = c.envelope;
    s.grid = c.grid();
    s.beta = c.beta;
    s.epsilon_scale = c.epsilon_scale;
    s.samples = c.samples;
    s.seed = c.base_seed;
    s.threads = threads_of(c);
    s.truncation_rel = c.truncation_rel;
    const auto rep = rare_event_probe(s);
    CsvTable t({"sample", "lambda1", "test_bound", "within"});
    for (std::size_t i = 0; i < rep.lambda1.size(); ++i) {
        t.row({std::to_string(i), format_double(rep.lambda1[i]), format_double(rep.test_bound[i]),
               rep.lambda1[i] <= rep.test_bound[i] ? "1" : "0"});
    }
    ctx.out.write_csv("lower_bound_samples.csv", t);
    json j{{"epsilon", rep.epsilon},
           {"R", rep.R},
           {"beta", rep.beta},
           {"sites", rep.sites},
           {"K", rep.small_ball_k},
           {"C", rep.small_ball_c},
           {"log_probability", rep.log_probability},
           {"log_probability_bound", rep.log_probability_bound},
           {"log_probability_volume", rep.log_probability_volume},
           {"lambda0", rep.lambda0},
           {"quantile_levels", rep.quantile_levels},
           {"lambda1_quantiles", rep.lambda1_quantiles},
           {"test_function_bound", rep.test_function_bound},
           {"measured_C", rep.measured_c},
           {"violations", rep.violations},
           {"R_trunc", rep.truncation_radius}};
    const double alpha = c.envelope.decay_exponent();
    if (std::isfinite(alpha)) j["tail_sum_bound"] = tail_sum_bound(c.dim, alpha, s.grid.side_length, rep.R);
    ctx.out.write_json("lower_bound.json", j);
    ctx.record.constants["lower_bound"] = j;
    ctx.log << "lower-bound: eps = " << rep.epsilon << ", R = " << rep.R << ", log P = " << rep.log_probability
            << ", lambda_1 median " << rep.lambda1_quantiles[3] << ", max lambda_1 L^2 = " << rep.measured_c << ", "
            << rep.violations << " variational violations\n";
}

inline void run_convergence(Context& ctx)
{
    const auto& c = ctx.cfg;
    const auto table = convergence_in_L(ids_setup(c, c.side_lengths.front()), c.side_lengths);
    CsvTable t({"L", "n", "median_band_width", "max_band_width", "sup_distance_to_next"});
    Plot p;
    p.title = "IDS bands across L";
    p.x_label = "E";
    p.y_label = "N(E)";
    p.log_x = p.log_y = true;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    json meta = json::array();
    for (std::size_t k = 0; k < table.curves.size(); ++k) {
        const auto& curve = table.curves[k];
        ctx.out.write_csv("ids_" + tag(curve.side_length) + ".csv", ids_table(curve));
        t.row({format_double(curve.side_length), std::to_string(curve.points_per_side),
               format_double(table.median_band_width[k]), format_double(table.max_band_width[k]),
               k < table.sup_distance.size() ? format_double(table.sup_distance[k]) : ""});
        p.bands.push_back({"L = " + format_double(curve.side_length), curve.energies, curve.lower, curve.upper,
                           colors[k % 5]});
        meta.push_back(curve_meta(curve));
        ctx.log << "convergence L=" << curve.side_length << ": median band width " << table.median_band_width[k]
                << "\n";
    }
    ctx.out.write_csv("convergence.csv", t);
    ctx.plot("convergence.svg", p);
    ctx.record.constants["convergence"] = meta;
}

} // namespace runner

/// Runs one subcommand, writing artifacts into cfg.out_dir and appending a
/// record to runs.jsonl there. Errors are mapped to exit codes; artifacts of a
/// failed run are removed.
inline RunOutcome run_experiment(const std::string& subcommand, const ExperimentConfig& cfg, std::ostream& log)
{
    static const std::map<std::string, std::function<void(runner::Context&)>> table{
        {"ids", runner::run_ids},
        {"exponent-fit", runner::run_exponent_fit},
        {"exponent-table", runner::run_exponent_table},
        {"concentration", runner::run_concentration},
        {"perturbation", runner::run_perturbation},
        {"lower-bound", runner::run_lower_bound},
        {"convergence", runner::run_convergence},
    };
    RunOutcome outcome;
    auto& rec = outcome.record;
    rec.subcommand = subcommand;
    rec.version = LIFSHITZ_VERSION;
    rec.config = to_json(cfg);
    rec.constants["M"] = cfg.M;
    rec.constants["threads"] = runner::threads_of(cfg);

    ArtifactWriter writer(cfg.out_dir);
    const auto start = std::chrono::steady_clock::now();
    try {
        const auto it = table.find(subcommand);
        if (it == table.end()) throw ConfigError("unknown subcommand '" + subcommand + "'");
        runner::Context ctx{cfg, writer, rec, log};
        it->second(ctx);
    } catch (const Error& e) {
        outcome.exit_code = e.exit_code();
        rec.status = "failed";
        rec.error = e.what();
        writer.remove_all();
    } catch (const std::exception& e) {
        outcome.exit_code = 3;
        rec.status = "failed";
        rec.error = e.what();
        writer.remove_all();
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rec.digests = writer.digests();
    try {
        writer.append_record(rec);
    } catch (const IoError& e) {
        if (outcome.exit_code == 0) outcome.exit_code = e.exit_code();
        if (rec.error.empty()) rec.error = e.what();
    }
    return outcome;
}

} // namespace lifshitz
