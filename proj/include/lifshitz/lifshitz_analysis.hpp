#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lifshitz/disorder.hpp"
#include "lifshitz/error.hpp"
#include "lifshitz/ids.hpp"
#include "lifshitz/lattice.hpp"
#include "lifshitz/lattice_sums.hpp"
#include "lifshitz/parallel.hpp"
#include "lifshitz/spectral.hpp"
#include "lifshitz/stats.hpp"

namespace lifshitz {

/// Lifshits exponent γ of N(E) for the squared alloy potential:
/// d/2 when α >= d + 1, d / (2(α - d)) when d < α < d + 1.
inline double theoretical_exponent(int dim, double alpha)
{
    if (dim < 1) throw ContractError("theoretical_exponent: dimension must be >= 1");
    if (!(alpha > dim)) throw ContractError("theoretical_exponent: need alpha > d");
    if (alpha >= dim + 1.0) return 0.5 * dim;
    return dim / (2.0 * (alpha - dim));
}

/// R = L^β: β = 1 for α >= d + 1, otherwise 1/(α - d).
inline double default_beta(int dim, double alpha)
{
    if (!(alpha > dim)) throw ContractError("default_beta: need alpha > d");
    return alpha >= dim + 1.0 ? 1.0 : 1.0 / (alpha - dim);
}

enum class CurveSide { Lower, Upper };

inline const char* to_string(CurveSide s) { return s == CurveSide::Lower ? "lower" : "upper"; }

struct FitWindow {
    double e_lo = 0.0;
    double e_hi = 0.0;
};

struct ExponentFit {
    double gamma_hat = 0.0;
    double stderr_gamma = 0.0;
    FitWindow window;
    std::size_t points_used = 0;
    /// Points inside the window with a zero (censored) estimate.
    std::size_t censored_dropped = 0;
    /// Points inside the window with N >= 1, where ln|ln N| is not monotone.
    std::size_t saturated_dropped = 0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// One point of a curve in log form: ln N and an optional standard error of N / N.
struct LogIdsPoint {
    double energy = 0.0;
    double log_n = 0.0;
    double relative_stderr = 0.0;
    bool censored = false;
};

/// Weighted least squares of ln(-ln N) against ln E; γ̂ = -slope.
/// Without an explicit window the lowest uncensored decade is used:
/// [E_0, 10 E_0] with E_0 the smallest energy carrying an admissible estimate.
inline ExponentFit fit_exponent(const std::vector<LogIdsPoint>& points, std::optional<FitWindow> window = {})
{
    auto admissible = [](const LogIdsPoint& p) {
        return !p.censored && std::isfinite(p.log_n) && p.log_n < 0.0 && p.energy > 0.0;
    };
    FitWindow w;
    if (window) {
        w = *window;
        if (!(w.e_lo > 0.0) || !(w.e_hi > w.e_lo)) throw ContractError("fit_exponent: need 0 < e_lo < e_hi");
    } else {
        const auto first = std::find_if(points.begin(), points.end(), admissible);
        if (first == points.end()) throw InsufficientDataError("fit_exponent: no uncensored point");
        w = {first->energy, 10.0 * first->energy * (1.0 + 1e-12)};
    }

    ExponentFit fit;
    std::vector<double> x, y, wt;
    bool weighted = true;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& p : points) {
        if (p.energy < w.e_lo || p.energy > w.e_hi) continue;
        if (p.censored || !std::isfinite(p.log_n)) {
            ++fit.censored_dropped;
            continue;
        }
        if (!(p.log_n < 0.0)) {
            ++fit.saturated_dropped;
            continue;
        }
        x.push_back(std::log(p.energy));
        y.push_back(std::log(-p.log_n));
        // Var ln(-ln N) ≈ (se_N / (N ln N))^2
        const double sd = p.relative_stderr / std::abs(p.log_n);
        if (sd > 0.0) {
            wt.push_back(1.0 / (sd * sd));
        } else {
            weighted = false;
        }
        lo = std::min(lo, p.energy);
        hi = std::max(hi, p.energy);
    }
    fit.points_used = x.size();
    if (fit.points_used < 4) {
        throw InsufficientDataError("fit_exponent: " + std::to_string(fit.points_used) +
                                    " admissible points in window [" + std::to_string(w.e_lo) + ", " +
                                    std::to_string(w.e_hi) + "], need 4");
    }
    const auto lf = linear_fit(x, y, weighted ? std::span<const double>(wt) : std::span<const double>{});
    fit.gamma_hat = -lf.slope;
    fit.stderr_gamma = lf.slope_stderr;
    fit.intercept = lf.intercept;
    fit.r_squared = lf.r_squared;
    fit.window = {lo, hi};
    return fit;
}

inline std::vector<LogIdsPoint> log_points(const IdsCurve& curve, CurveSide side)
{
    const auto& n = side == CurveSide::Lower ? curve.lower : curve.upper;
    const auto& se = side == CurveSide::Lower ? curve.lower_stderr : curve.upper_stderr;
    const unsigned flag = side == CurveSide::Lower ? LowerCensored : UpperCensored;
    std::vector<LogIdsPoint> out(curve.energies.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k].energy = curve.energies[k];
        out[k].censored = (curve.censored[k] & flag) != 0 || !(n[k] > 0.0);
        out[k].log_n = out[k].censored ? -std::numeric_limits<double>::infinity() : std::log(n[k]);
        out[k].relative_stderr = out[k].censored ? 0.0 : se[k] / n[k];
    }
    return out;
}

inline ExponentFit fit_exponent(const IdsCurve& curve, CurveSide side, std::optional<FitWindow> window = {})
{
    return fit_exponent(log_points(curve, side), window);
}

/// ln N for N(E) = exp(-c E^{-γ}), kept in log form so that tiny N do not underflow.
inline std::vector<LogIdsPoint> synthetic_lifshitz_curve(const std::vector<double>& energies, double c, double gamma)
{
    std::vector<LogIdsPoint> out(energies.size());
    for (std::size_t k = 0; k < energies.size(); ++k) {
        out[k].energy = energies[k];
        out[k].log_n = -c * std::pow(energies[k], -gamma);
    }
    return out;
}

/// "consistent" when γ̂/γ lies in [0.6, 1.6].
inline const char* exponent_verdict(double gamma_hat, double gamma)
{
    const double r = gamma_hat / gamma;
    return r >= 0.6 && r <= 1.6 ? "consistent" : "inconsistent";
}

/// Σ_{|i|_inf > L+R} (1 + dist(i, Λ))^{-α}, squared; dist(i, Λ) = |i|_inf - L/2.
inline double tail_sum_bound(int dim, double alpha, double L, double R)
{
    if (!(alpha > dim)) throw ContractError("tail_sum_bound: need alpha > d");
    if (!(R >= L) || !(L > 0.0)) throw ContractError("tail_sum_bound: need R >= L > 0");
    const auto start = static_cast<std::int64_t>(std::floor(L + R));
    const double s = shell_power_tail(dim, start, 1.0 - 0.5 * L, alpha);
    return s * s;
}

struct RareEventSetup {
    CouplingLaw law;
    EnvelopeProfile envelope;
    GridSpec grid;
    /// Defaults to default_beta(d, α) when unset.
    std::optional<double> beta;
    /// ε = epsilon_scale L^-2.
    double epsilon_scale = 1.0;
    std::size_t samples = 200;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    double truncation_rel = 1e-8;
    SolverOptions solver;
};

struct RareEventReport {
    double epsilon = 0.0;
    double R = 0.0;
    double beta = 1.0;
    /// (2 floor(L+R) + 1)^d couplings constrained to |q| <= ε.
    double sites = 0.0;
    double small_ball_k = 0.0;
    double small_ball_c = 0.0;
    /// sites · ln P(|q| <= ε).
    double log_probability = 0.0;
    /// sites · (ln C + K ln ε), a lower bound for ε within the small-ball range.
    double log_probability_bound = 0.0;
    /// K ln ε (L+R)^d.
    double log_probability_volume = 0.0;
    /// Lowest Dirichlet eigenvalue of the free box.
    double lambda0 = 0.0;
    std::vector<double> lambda1;
    std::vector<double> test_bound;
    std::vector<double> quantile_levels;
    std::vector<double> lambda1_quantiles;
    /// max over samples of λ_0 + <φ_0, V φ_0>.
    double test_function_bound = 0.0;
    /// max over samples of λ_1 L^2.
    double measured_c = 0.0;
    std::size_t violations = 0;
    std::int64_t truncation_radius = 0;
};

/// Samples V on the event that every coupling with |i|_inf <= L + R is at most
/// ε in modulus (coordinate-wise conditioning, exact for product laws) and
/// compares λ_1(H^D) with the Rayleigh quotient of the free ground state φ_0.
inline RareEventReport rare_event_probe(const RareEventSetup& setup)
{
    setup.law.validate();
    const auto& grid = setup.grid;
    setup.envelope.validate(grid.dim);
    grid.validate();
    if (setup.samples < 1) throw ContractError("rare_event_probe: samples must be >= 1");
    if (!(setup.epsilon_scale > 0.0)) throw ContractError("rare_event_probe: epsilon_scale must be positive");
    const double alpha = setup.envelope.decay_exponent();

    RareEventReport rep;
    rep.beta = setup.beta ? *setup.beta : (std::isfinite(alpha) ? default_beta(grid.dim, alpha) : 1.0);
    if (!(rep.beta >= 1.0)) throw ContractError("rare_event_probe: beta must be >= 1");
    const double L = grid.side_length;
    rep.R = std::pow(L, rep.beta);
    rep.epsilon = setup.epsilon_scale / (L * L);
    const auto small_radius = static_cast<std::int64_t>(std::floor(L + rep.R));
    rep.sites = std::pow(2.0 * static_cast<double>(small_radius) + 1.0, grid.dim);
    rep.small_ball_k = setup.law.small_ball_exponent();
    rep.small_ball_c = setup.law.small_ball_constant();
    rep.log_probability = rep.sites * std::log(setup.law.small_ball_probability(rep.epsilon));
    rep.log_probability_bound = rep.sites * (std::log(rep.small_ball_c) + rep.small_ball_k * std::log(rep.epsilon));
    rep.log_probability_volume = rep.small_ball_k * std::log(rep.epsilon) * std::pow(L + rep.R, grid.dim);

    const auto plan = plan_truncation(setup.law.support_bound(), setup.envelope, grid, setup.truncation_rel);
    const std::int64_t radius = std::max(plan.radius, small_radius);
    rep.truncation_radius = radius;
    const AlloyFieldEvaluator eval(setup.envelope, grid, radius);
    const auto lap = build_laplacian(grid, BoundaryCondition::Dirichlet);
    const auto ground = lowest_eigenpairs(lap, 1, setup.solver).front();
    rep.lambda0 = ground.value;
    std::vector<double> phi_sq(ground.vector.size());
    for (std::size_t k = 0; k < phi_sq.size(); ++k) phi_sq[k] = ground.vector[k] * ground.vector[k];

    rep.lambda1.resize(setup.samples);
    rep.test_bound.resize(setup.samples);
    parallel_for(setup.samples, setup.threads, [&](std::size_t i) {
        const auto sample = sample_couplings_small_near(setup.law, grid.dim, radius, sample_seed(setup.seed, i),
                                                        small_radius, rep.epsilon);
        const auto v = eval.potential(sample);
        double quad = 0.0;
        for (std::size_t k = 0; k < phi_sq.size(); ++k) quad += v.values[k] * phi_sq[k];
        rep.test_bound[i] = rep.lambda0 + quad;
        rep.lambda1[i] = lowest_eigenpairs(assemble_hamiltonian(lap, v), 1, setup.solver).front().value;
    });
    const double tol = 1e-10 * lap.norm_one();
    for (std::size_t i = 0; i < setup.samples; ++i) {
        rep.violations += rep.lambda1[i] > rep.test_bound[i] + tol;
        rep.test_function_bound = std::max(rep.test_function_bound, rep.test_bound[i]);
        rep.measured_c = std::max(rep.measured_c, rep.lambda1[i] * L * L);
    }
    rep.quantile_levels = {0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0};
    for (double p : rep.quantile_levels) rep.lambda1_quantiles.push_back(quantile(rep.lambda1, p));
    return rep;
}

} // namespace lifshitz
