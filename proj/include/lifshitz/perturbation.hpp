#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "lifshitz/disorder.hpp"
#include "lifshitz/error.hpp"
#include "lifshitz/lattice.hpp"
#include "lifshitz/parallel.hpp"
#include "lifshitz/spectral.hpp"
#include "lifshitz/stats.hpp"

namespace lifshitz {

/// E(t) = λ_1(-Δ^N + t V) along a grid of t.
struct PerturbationPath {
    std::vector<double> t;
    std::vector<double> energies;
    double hf_derivative = 0.0;
    double side_length = 1.0;

    /// |E(t) - t E'(0)| per grid point.
    std::vector<double> remainder() const
    {
        std::vector<double> r(t.size());
        for (std::size_t k = 0; k < t.size(); ++k) r[k] = std::abs(energies[k] - t[k] * hf_derivative);
        return r;
    }
};

/// E'(0) = <φ_0, V φ_0> with φ_0 the constant Neumann ground state: the grid mean of V.
inline double hellmann_feynman_derivative(const PotentialField& potential)
{
    if (potential.values.empty()) throw ContractError("hellmann_feynman_derivative: empty potential");
    double acc = 0.0;
    for (double v : potential.values) acc += v;
    return acc / static_cast<double>(potential.values.size());
}

/// Lowest eigenvalue of -Δ^N + t V.
inline double path_energy(const SparseSymOperator& neumann_laplacian, const PotentialField& potential,
                          double t, const SolverOptions& opts = {})
{
    std::vector<double> shift(potential.values.size());
    for (std::size_t k = 0; k < shift.size(); ++k) shift[k] = t * potential.values[k];
    return lowest_eigenpairs(neumann_laplacian.shifted(shift), 1, opts).front().value;
}

/// Computes E(t) on `t_grid` (ascending, inside [0, 1]) and asserts that the
/// path is nondecreasing and lies below the tangent t E'(0).
inline PerturbationPath eigen_path(const PotentialField& potential, std::span<const double> t_grid,
                                   const SolverOptions& opts = {})
{
    if (t_grid.empty()) throw ContractError("eigen_path: empty t grid");
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        if (t_grid[k] < 0.0 || t_grid[k] > 1.0) throw ContractError("eigen_path: t must lie in [0, 1]");
        if (k > 0 && !(t_grid[k] > t_grid[k - 1])) throw ContractError("eigen_path: t grid must be increasing");
    }
    const auto lap = build_laplacian(potential.grid, BoundaryCondition::Neumann);
    PerturbationPath path;
    path.t.assign(t_grid.begin(), t_grid.end());
    path.hf_derivative = hellmann_feynman_derivative(potential);
    path.side_length = potential.grid.side_length;
    double vmax = 0.0;
    for (double v : potential.values) vmax = std::max(vmax, std::abs(v));
    const double slack = std::max(opts.tolerance, 1e-13) * (lap.norm_one() + vmax);
    for (double t : t_grid) {
        const double e = path_energy(lap, potential, t, opts);
        if (!path.energies.empty() && e < path.energies.back() - slack) {
            throw NumericError("eigen_path: E(t) decreased at t = " + std::to_string(t));
        }
        if (e > t * path.hf_derivative + slack) {
            throw NumericError("eigen_path: E(t) exceeds t E'(0) at t = " + std::to_string(t));
        }
        path.energies.push_back(e);
    }
    return path;
}

inline std::vector<double> linear_t_grid(double t_max, std::size_t points)
{
    std::vector<double> grid(points);
    for (std::size_t k = 0; k < points; ++k) grid[k] = t_max * static_cast<double>(k + 1) / static_cast<double>(points);
    return grid;
}

struct RemainderFit {
    /// Least-squares c in |E(t) - t E'(0)| ≈ c t^2, divided by L^2.
    double fitted_c2 = 0.0;
    /// max over the grid of |E(t) - t E'(0)| / (L^2 t^2).
    double max_ratio = 0.0;
    /// R^2 of the pure quadratic fit.
    double r_squared = 1.0;
};

inline RemainderFit remainder_constant(const PerturbationPath& path)
{
    const auto r = path.remainder();
    const double l2 = path.side_length * path.side_length;
    double num = 0.0, den = 0.0, mean = 0.0;
    std::size_t used = 0;
    RemainderFit fit;
    for (std::size_t k = 0; k < r.size(); ++k) {
        const double t = path.t[k];
        if (t <= 0.0) continue;
        num += r[k] * t * t;
        den += t * t * t * t;
        mean += r[k];
        ++used;
        fit.max_ratio = std::max(fit.max_ratio, r[k] / (l2 * t * t));
    }
    if (used == 0) throw InsufficientDataError("remainder_constant: no positive t in the path");
    const double c = num / den;
    fit.fitted_c2 = c / l2;
    mean /= static_cast<double>(used);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
        const double t = path.t[k];
        if (t <= 0.0) continue;
        ss_res += (r[k] - c * t * t) * (r[k] - c * t * t);
        ss_tot += (r[k] - mean) * (r[k] - mean);
    }
    fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

struct WindowKnee {
    /// Largest C with a quadratic remainder fit of R^2 >= threshold on t <= C L^-2.
    double c1 = 0.0;
    RemainderFit fit;
    /// False when even the smallest probed window failed the threshold.
    bool resolved = true;
};

/// Expands t_max = C L^-2 (C doubling from c_start, t_max <= 1) until the
/// quadratic fit of the remainder degrades below r2_threshold.
inline WindowKnee measure_window(const PotentialField& potential, double c_start = 0.25,
                                 std::size_t points = 12, double r2_threshold = 0.99,
                                 const SolverOptions& opts = {})
{
    const double l2 = potential.grid.side_length * potential.grid.side_length;
    WindowKnee knee;
    knee.resolved = false;
    for (double c = c_start; c / l2 <= 1.0; c *= 2.0) {
        const auto path = eigen_path(potential, linear_t_grid(c / l2, points), opts);
        const auto fit = remainder_constant(path);
        if (fit.r_squared < r2_threshold) break;
        knee.c1 = c;
        knee.fit = fit;
        knee.resolved = true;
    }
    if (!knee.resolved) {
        knee.c1 = c_start;
        knee.fit = remainder_constant(eigen_path(potential, linear_t_grid(c_start / l2, points), opts));
    }
    return knee;
}

/// Measured window constant C1 and remainder constant C2 at one L.
struct StollmannConstants {
    double side_length = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    /// Largest admissible b, i.e. C1^2 C2 (t = (b / C2)^{1/2} L^-2 <= C1 L^-2).
    double max_b() const { return c1 * c1 * c2; }
};

/// C1 = the smallest knee over the samples, C2 = the largest max-ratio over the
/// samples on the common window t <= C1 L^-2.
inline StollmannConstants measure_stollmann_constants(const CouplingLaw& law, const EnvelopeProfile& f,
                                                      const GridSpec& grid, std::size_t samples,
                                                      std::uint64_t base_seed, unsigned threads = 1,
                                                      double relative_tolerance = 1e-8)
{
    if (samples < 1) throw ContractError("measure_stollmann_constants: need at least one sample");
    const auto plan = plan_truncation(law.support_bound(), f, grid, relative_tolerance);
    const AlloyFieldEvaluator eval(f, grid, plan.radius);
    std::vector<PotentialField> fields(samples);
    std::vector<double> knees(samples);
    parallel_for(samples, threads, [&](std::size_t i) {
        fields[i] = eval.potential(sample_couplings(law, grid.dim, plan.radius, sample_seed(base_seed, i)));
        knees[i] = measure_window(fields[i]).c1;
    });
    StollmannConstants out;
    out.side_length = grid.side_length;
    out.c1 = *std::min_element(knees.begin(), knees.end());
    std::vector<double> ratios(samples);
    const double t_max = out.c1 / (grid.side_length * grid.side_length);
    parallel_for(samples, threads, [&](std::size_t i) {
        ratios[i] = remainder_constant(eigen_path(fields[i], linear_t_grid(t_max, 12))).max_ratio;
    });
    out.c2 = *std::max_element(ratios.begin(), ratios.end());
    return out;
}

struct SmallEigenvalueReport {
    double b = 0.0;
    double max_b = 0.0;
    double t = 0.0;
    std::size_t samples = 0;
    /// P(λ_1(H^N) < b L^-2)
    double lhs = 0.0;
    Interval lhs_ci;
    /// P(|E'(0) - E E'(0)| > E E'(0) / 2), with E E'(0) the sample mean.
    double rhs = 0.0;
    Interval rhs_ci;
    double mean_derivative = 0.0;
    bool holds = true;
};

/// Monte Carlo estimate of both sides of
///   P(λ_1(H^N) < b L^-2) <= P(|E'(0) - E E'(0)| > E E'(0) / 2).
inline SmallEigenvalueReport small_eigenvalue_probability(const CouplingLaw& law, const EnvelopeProfile& f,
                                                          const GridSpec& grid, double b,
                                                          const StollmannConstants& constants,
                                                          std::size_t samples, std::uint64_t base_seed,
                                                          unsigned threads = 1,
                                                          double relative_tolerance = 1e-8)
{
    SmallEigenvalueReport rep;
    rep.b = b;
    rep.max_b = constants.max_b();
    if (!(b > 0.0)) throw ContractError("small_eigenvalue_probability: b must be positive");
    if (b > rep.max_b) {
        throw ContractError("small_eigenvalue_probability: b = " + std::to_string(b) +
                            " exceeds the admissible maximum " + std::to_string(rep.max_b));
    }
    if (samples < 1) throw ContractError("small_eigenvalue_probability: need at least one sample");
    const double l2 = grid.side_length * grid.side_length;
    rep.t = constants.c2 > 0.0 ? std::sqrt(b / constants.c2) / l2 : 0.0;
    rep.samples = samples;

    const auto plan = plan_truncation(law.support_bound(), f, grid, relative_tolerance);
    const AlloyFieldEvaluator eval(f, grid, plan.radius);
    const auto lap = build_laplacian(grid, BoundaryCondition::Neumann);
    std::vector<double> lambda1(samples), derivative(samples);
    parallel_for(samples, threads, [&](std::size_t i) {
        const auto v = eval.potential(sample_couplings(law, grid.dim, plan.radius, sample_seed(base_seed, i)));
        derivative[i] = hellmann_feynman_derivative(v);
        lambda1[i] = lowest_eigenpairs(assemble_hamiltonian(lap, v), 1).front().value;
    });
    double mean = 0.0;
    for (double x : derivative) mean += x;
    mean /= static_cast<double>(samples);
    rep.mean_derivative = mean;
    std::size_t low = 0, dev = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        low += lambda1[i] < b / l2;
        dev += std::abs(derivative[i] - mean) > 0.5 * mean;
    }
    rep.lhs = static_cast<double>(low) / static_cast<double>(samples);
    rep.rhs = static_cast<double>(dev) / static_cast<double>(samples);
    rep.lhs_ci = wilson_interval(low, samples);
    rep.rhs_ci = wilson_interval(dev, samples);
    rep.holds = rep.lhs <= rep.rhs + 3.0 * (rep.lhs_ci.half_width() + rep.rhs_ci.half_width());
    return rep;
}

/// Three candidate values for the radius ν of analyticity: the measured second
/// Neumann eigenvalue of the discrete box, the continuum (π/L)^2, and π L^-2.
struct NeumannGap {
    double discrete = 0.0;
    double continuum = 0.0;
    double pi_over_l2 = 0.0;
};

inline NeumannGap neumann_gap(const GridSpec& grid, const SolverOptions& opts = {})
{
    NeumannGap gap;
    gap.discrete = lowest_eigenpairs(build_laplacian(grid, BoundaryCondition::Neumann), 2, opts)[1].value;
    gap.continuum = std::pow(std::numbers::pi / grid.side_length, 2);
    gap.pi_over_l2 = std::numbers::pi / (grid.side_length * grid.side_length);
    return gap;
}

} // namespace lifshitz
