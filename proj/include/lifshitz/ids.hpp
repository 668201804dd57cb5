#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lifshitz/disorder.hpp"
#include "lifshitz/error.hpp"
#include "lifshitz/lattice.hpp"
#include "lifshitz/parallel.hpp"
#include "lifshitz/spectral.hpp"
#include "lifshitz/stats.hpp"

namespace lifshitz {

/// Log-spaced energies e_min 10^{k/per_decade}, up to e_max.
inline std::vector<double> log_energy_grid(double e_min, double e_max, int per_decade = 24)
{
    if (!(e_min > 0.0) || !(e_max >= e_min) || !std::isfinite(e_max)) {
        throw ContractError("energy grid: need 0 < e_min <= e_max");
    }
    if (per_decade < 1) throw ContractError("energy grid: per_decade must be >= 1");
    const double span = std::log10(e_max / e_min) * per_decade;
    const auto steps = static_cast<std::size_t>(std::floor(span + 1e-9));
    std::vector<double> grid(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) {
        grid[k] = e_min * std::pow(10.0, static_cast<double>(k) / per_decade);
    }
    return grid;
}

/// Everything estimate_ids needs; the runner fills it from the experiment config.
struct IdsSetup {
    CouplingLaw law;
    EnvelopeProfile envelope;
    GridSpec grid;
    std::vector<double> energies;
    std::size_t samples = 1;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    double truncation_rel = 1e-8;
    SolverOptions solver;
    /// Fraction of samples allowed to fail in the solver before the run fails.
    double max_skip_fraction = 0.01;
};

enum CensorFlag : unsigned { LowerCensored = 1u, UpperCensored = 2u };

/// Bracketed IDS: lower = E N(H^D, E) / L^d, upper = E N(H^N, E) / L^d.
struct IdsCurve {
    std::vector<double> energies;
    std::vector<double> lower;
    std::vector<double> lower_stderr;
    std::vector<double> upper;
    std::vector<double> upper_stderr;
    std::vector<unsigned> censored;
    int dim = 1;
    double side_length = 0.0;
    std::size_t points_per_side = 0;
    std::size_t samples = 0;
    std::size_t skipped = 0;
    std::uint64_t seed = 0;
    /// Resolution of a zero count: 1 / (samples L^d).
    double censor_bound = 0.0;
    /// Per-sample, per-energy Dirichlet <= Neumann comparisons performed.
    std::size_t bracket_checks = 0;
    std::int64_t truncation_radius = 0;
};

namespace detail {

inline void validate_setup(const IdsSetup& s)
{
    s.law.validate();
    s.envelope.validate(s.grid.dim);
    s.grid.validate();
    if (s.samples < 1) throw ContractError("ids: samples must be >= 1");
    if (s.energies.empty()) throw ContractError("ids: empty energy grid");
    for (std::size_t k = 0; k < s.energies.size(); ++k) {
        if (!(s.energies[k] > 0.0) || !std::isfinite(s.energies[k])) {
            throw ContractError("ids: energies must be positive and finite");
        }
        if (k > 0 && !(s.energies[k] > s.energies[k - 1])) throw ContractError("ids: energies must be increasing");
    }
}

inline void fill_curve(IdsCurve& c, const std::vector<std::vector<std::uint32_t>>& counts,
                       const std::vector<char>& ok, bool upper)
{
    const std::size_t ne = c.energies.size();
    const double volume = std::pow(c.side_length, c.dim);
    auto& mean = upper ? c.upper : c.lower;
    auto& se = upper ? c.upper_stderr : c.lower_stderr;
    mean.assign(ne, 0.0);
    se.assign(ne, 0.0);
    std::vector<double> xs;
    xs.reserve(counts.size());
    for (std::size_t e = 0; e < ne; ++e) {
        xs.clear();
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (ok[i]) xs.push_back(counts[i][e]);
        }
        const auto est = mean_estimate(xs);
        mean[e] = est.mean / volume;
        se[e] = est.standard_error / volume;
        if (mean[e] == 0.0) c.censored[e] |= upper ? UpperCensored : LowerCensored;
    }
}

} // namespace detail

/// Monte Carlo over disorder samples. For each sample both boundary
/// conditions are counted at every energy. Dirichlet <= Neumann is asserted
/// per sample and energy; solver failures skip the sample.
inline IdsCurve estimate_ids(const IdsSetup& setup)
{
    detail::validate_setup(setup);
    const auto& grid = setup.grid;
    const auto plan = plan_truncation(setup.law.support_bound(), setup.envelope, grid, setup.truncation_rel);
    const AlloyFieldEvaluator eval(setup.envelope, grid, plan.radius);
    const auto lap_d = build_laplacian(grid, BoundaryCondition::Dirichlet);
    const auto lap_n = build_laplacian(grid, BoundaryCondition::Neumann);
    const std::size_t ne = setup.energies.size();

    std::vector<std::vector<std::uint32_t>> dir(setup.samples), neu(setup.samples);
    std::vector<char> ok(setup.samples, 0);
    parallel_for(setup.samples, setup.threads, [&](std::size_t i) {
        const auto v = eval.potential(sample_couplings(setup.law, grid.dim, plan.radius, sample_seed(setup.seed, i)));
        const auto hd = assemble_hamiltonian(lap_d, v);
        const auto hn = assemble_hamiltonian(lap_n, v);
        std::vector<std::uint32_t> cd(ne), cn(ne);
        try {
            for (std::size_t e = 0; e < ne; ++e) {
                cd[e] = static_cast<std::uint32_t>(count_below(hd, setup.energies[e], setup.solver).count);
                cn[e] = static_cast<std::uint32_t>(count_below(hn, setup.energies[e], setup.solver).count);
            }
        } catch (const NumericError&) {
            return;
        }
        for (std::size_t e = 0; e < ne; ++e) {
            if (cd[e] > cn[e]) {
                throw NumericError("ids: bracketing violated on sample " + std::to_string(i) + " at E = " +
                                   std::to_string(setup.energies[e]) + " (Dirichlet " + std::to_string(cd[e]) +
                                   " > Neumann " + std::to_string(cn[e]) + ")");
            }
            if (e > 0 && (cd[e] < cd[e - 1] || cn[e] < cn[e - 1])) {
                throw NumericError("ids: count decreased in E on sample " + std::to_string(i));
            }
        }
        dir[i] = std::move(cd);
        neu[i] = std::move(cn);
        ok[i] = 1;
    });

    IdsCurve c;
    c.energies = setup.energies;
    c.dim = grid.dim;
    c.side_length = grid.side_length;
    c.points_per_side = grid.points_per_side;
    c.seed = setup.seed;
    c.truncation_radius = plan.radius;
    c.samples = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
    c.skipped = setup.samples - c.samples;
    if (c.samples == 0 || static_cast<double>(c.skipped) > setup.max_skip_fraction * static_cast<double>(setup.samples)) {
        throw NumericError("ids: " + std::to_string(c.skipped) + " of " + std::to_string(setup.samples) +
                           " samples skipped after solver failures");
    }
    c.bracket_checks = c.samples * ne;
    c.censor_bound = 1.0 / (static_cast<double>(c.samples) * grid.volume());
    c.censored.assign(ne, 0u);
    detail::fill_curve(c, dir, ok, false);
    detail::fill_curve(c, neu, ok, true);
    return c;
}

/// Terms of E N(H^N, E)/|Λ| <= N(-Δ^N, E)/|Λ| · P(λ_1(H^N) <= E).
struct NeumannFactorization {
    double energy = 0.0;
    /// N(-Δ^N, E) / L^d
    double free_count = 0.0;
    std::size_t free_count_raw = 0;
    double probability = 0.0;
    Interval probability_ci;
    double product = 0.0;
    /// E N(H^N, E) / L^d and its standard error.
    double mean_count = 0.0;
    double mean_count_stderr = 0.0;
    bool holds = true;
};

/// Valid for E in (0, c L^-2).
inline NeumannFactorization neumann_upper_factorization(const IdsSetup& setup, double energy, double c)
{
    const double l2 = setup.grid.side_length * setup.grid.side_length;
    if (!(energy > 0.0) || !(energy < c / l2)) {
        throw ContractError("neumann_upper_factorization: E = " + std::to_string(energy) +
                            " outside (0, c L^-2) = (0, " + std::to_string(c / l2) + ")");
    }
    auto one = setup;
    one.energies = {energy};
    detail::validate_setup(one);
    const auto& grid = setup.grid;
    const double volume = grid.volume();
    const auto lap_n = build_laplacian(grid, BoundaryCondition::Neumann);

    NeumannFactorization out;
    out.energy = energy;
    out.free_count_raw = count_below(lap_n, energy, setup.solver).count;
    out.free_count = static_cast<double>(out.free_count_raw) / volume;

    const auto plan = plan_truncation(setup.law.support_bound(), setup.envelope, grid, setup.truncation_rel);
    const AlloyFieldEvaluator eval(setup.envelope, grid, plan.radius);
    std::vector<double> counts(setup.samples);
    parallel_for(setup.samples, setup.threads, [&](std::size_t i) {
        const auto v = eval.potential(sample_couplings(setup.law, grid.dim, plan.radius, sample_seed(setup.seed, i)));
        counts[i] = static_cast<double>(count_below(assemble_hamiltonian(lap_n, v), energy, setup.solver).count);
    });
    std::size_t hits = 0;
    for (double k : counts) hits += k > 0.0;
    out.probability = static_cast<double>(hits) / static_cast<double>(setup.samples);
    out.probability_ci = wilson_interval(hits, setup.samples);
    out.product = out.free_count * out.probability;
    const auto est = mean_estimate(counts);
    out.mean_count = est.mean / volume;
    out.mean_count_stderr = est.standard_error / volume;
    const double slack = 3.0 * (out.mean_count_stderr + out.free_count * out.probability_ci.half_width());
    out.holds = out.mean_count <= out.product + slack;
    return out;
}

struct ConvergenceTable {
    std::vector<double> side_lengths;
    std::vector<IdsCurve> curves;
    /// upper - lower at the median grid energy.
    std::vector<double> median_band_width;
    std::vector<double> max_band_width;
    /// sup_E max(|lower_k - lower_{k+1}|, |upper_k - upper_{k+1}|), one entry per consecutive pair.
    std::vector<double> sup_distance;
};

/// Re-runs estimate_ids at each L, keeping the grid density n/L fixed.
inline ConvergenceTable convergence_in_L(const IdsSetup& setup, const std::vector<double>& side_lengths)
{
    if (side_lengths.size() < 2) throw ContractError("convergence_in_L: need at least two side lengths");
    const double density = static_cast<double>(setup.grid.points_per_side) / setup.grid.side_length;
    ConvergenceTable table;
    for (double L : side_lengths) {
        auto s = setup;
        s.grid.side_length = L;
        s.grid.points_per_side = static_cast<std::size_t>(std::llround(density * L));
        if (s.grid.points_per_side < 2) throw ContractError("convergence_in_L: side length too small for the grid density");
        auto curve = estimate_ids(s);
        const std::size_t mid = curve.energies.size() / 2;
        double widest = 0.0;
        for (std::size_t e = 0; e < curve.energies.size(); ++e) widest = std::max(widest, curve.upper[e] - curve.lower[e]);
        table.side_lengths.push_back(L);
        table.median_band_width.push_back(curve.upper[mid] - curve.lower[mid]);
        table.max_band_width.push_back(widest);
        table.curves.push_back(std::move(curve));
    }
    for (std::size_t k = 0; k + 1 < table.curves.size(); ++k) {
        const auto& a = table.curves[k];
        const auto& b = table.curves[k + 1];
        double sup = 0.0;
        for (std::size_t e = 0; e < a.energies.size(); ++e) {
            sup = std::max({sup, std::abs(a.lower[e] - b.lower[e]), std::abs(a.upper[e] - b.upper[e])});
        }
        table.sup_distance.push_back(sup);
    }
    return table;
}

} // namespace lifshitz
