#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lifshitz/disorder.hpp"
#include "lifshitz/error.hpp"
#include "lifshitz/lattice_sums.hpp"
#include "lifshitz/parallel.hpp"
#include "lifshitz/rng.hpp"
#include "lifshitz/stats.hpp"

namespace lifshitz {

enum class FunctionalId { EnergyIntegral, LinearMinorant };

inline const char* to_string(FunctionalId id)
{
    return id == FunctionalId::EnergyIntegral ? "energy" : "linear";
}

struct LatticeSumSup {
    double value = 0.0;
    /// Part of `value` that is an analytic bound on the omitted sites.
    double tail = 0.0;
    std::int64_t direct_radius = 0;
};

/// sup_x Σ_i |f(x - i)|: the maximum over a cell-centred grid of the unit cell
/// (odd resolution, so x = 0 is sampled) of the explicit sum over |i| <= R,
/// plus the lattice tail bound beyond R. R is limited by a site budget, so the
/// result errs on the large side.
inline LatticeSumSup lattice_abs_sum_sup(const EnvelopeProfile& f, int dim,
                                         double site_budget = 2e5)
{
    LatticeSumSup out;
    const auto per_axis = static_cast<std::int64_t>(std::floor(std::pow(site_budget, 1.0 / dim)));
    out.direct_radius = std::max<std::int64_t>(1, (per_axis - 1) / 2);
    if (const auto r = f.support_radius()) {
        out.direct_radius = std::min(out.direct_radius, static_cast<std::int64_t>(std::ceil(*r + 0.5)));
    }
    EnvelopeProfile unit = f;
    unit.c2 = 1.0;
    unit.height = 1.0;
    const std::size_t m = dim <= 2 ? 33 : 9;
    const AlloyFieldEvaluator eval(unit, GridSpec{dim, 1.0, m}, out.direct_radius);
    DisorderSample ones;
    ones.dim = dim;
    ones.radius = out.direct_radius;
    ones.couplings.assign(static_cast<std::size_t>(ball_count(dim, out.direct_radius)), 1.0);
    const auto u = eval.field(ones);
    out.tail = unit.lattice_tail(dim, 1.0, out.direct_radius);
    out.value = f.sup_abs() * (*std::max_element(u.begin(), u.end()) + out.tail);
    out.tail *= f.sup_abs();
    return out;
}

/// Bounded-difference constants σ_j of a McDiarmid function of the couplings.
/// σ_j depends on j only through |j|_inf, so everything is organized by shells.
struct McDiarmidSpec {
    FunctionalId functional = FunctionalId::EnergyIntegral;
    int dim = 1;
    double side_length = 1.0;
    double alpha = 0.0;
    double support_bound = 0.0;
    int M = 3;

    // Energy functional constants.
    double c_glob = 0.0;
    double lattice_sum_sup = 0.0;
    double l1_norm = 0.0;
    /// σ_j = case2_scale |j|^(-α) beyond M L (PolyDecay envelope).
    double case2_scale = 0.0;
    /// σ_j = case2_flat for M L < |j| < L/2 + support radius (compact envelope).
    double case2_flat = 0.0;
    std::optional<double> support_radius;

    double sigma_sq = 0.0;

    std::int64_t case1_radius() const
    {
        return static_cast<std::int64_t>(std::floor(M * side_length));
    }

    double sigma_at(std::int64_t m) const
    {
        if (functional == FunctionalId::LinearMinorant) {
            return 2.0 * support_bound * std::pow(side_length + static_cast<double>(m), -alpha);
        }
        if (m <= case1_radius()) return c_glob * l1_norm;
        if (support_radius) {
            return static_cast<double>(m) - 0.5 * side_length < *support_radius ? case2_flat : 0.0;
        }
        return case2_scale * std::pow(static_cast<double>(m), -alpha);
    }

    double sigma(std::span<const std::int64_t> j) const
    {
        std::int64_t m = 0;
        for (auto v : j) m = std::max<std::int64_t>(m, std::abs(v));
        return sigma_at(m);
    }

    /// Σ_{|j|_inf > radius} σ_j^power for power 1 or 2.
    double remainder(std::int64_t radius, int power = 1) const
    {
        const double p = power;
        if (functional == FunctionalId::LinearMinorant) {
            if (support_bound == 0.0) return 0.0;
            return std::pow(2.0 * support_bound, p) *
                   shell_power_tail(dim, radius, side_length, alpha * p);
        }
        const std::int64_t k = case1_radius();
        double total = 0.0;
        std::int64_t from = radius;
        if (radius < k) {
            const double inner = radius < 0 ? 0.0 : ball_count(dim, radius);
            total += (ball_count(dim, k) - inner) * std::pow(c_glob * l1_norm, p);
            from = k;
        }
        if (support_radius) {
            for (std::int64_t m = from + 1; static_cast<double>(m) - 0.5 * side_length < *support_radius; ++m) {
                total += shell_count(dim, m) * std::pow(case2_flat, p);
            }
        } else if (case2_scale != 0.0) {
            total += std::pow(case2_scale, p) * shell_power_tail(dim, from, 0.0, alpha * p);
        }
        return total;
    }

    /// Smallest radius whose remainder Σ_{|j| > R} σ_j is at most tol.
    std::int64_t certificate_radius(double tol) const
    {
        std::int64_t hi = 1;
        while (remainder(hi) > tol) {
            if (hi > (std::int64_t{1} << 40)) throw NumericError("McDiarmid remainder does not reach tolerance");
            hi *= 2;
        }
        std::int64_t lo = -1;
        while (hi - lo > 1) {
            const std::int64_t mid = lo + (hi - lo) / 2;
            (remainder(mid) <= tol ? hi : lo) = mid;
        }
        return hi;
    }
};

/// σ_j for F = ∫_Λ V dx. With C_glob = 4 Q^2 sup_x Σ_i |f(x - i)|:
///   |j| <= M L:  σ_j = C_glob ||f||_1
///   |j| >  M L:  σ_j = C_glob C2 (1 - 1/(2M))^(-α) L^d |j|^(-α)   (PolyDecay)
///                σ_j = C_glob L^d sup_{x in Λ} |f(x - j)|          (compact)
/// The PolyDecay bound uses dist(j, Λ) >= |j| - L/2 >= (1 - 1/(2M)) |j|.
inline McDiarmidSpec sigma_energy_functional(int dim, double side_length, const EnvelopeProfile& f,
                                             const CouplingLaw& law, int M = 3)
{
    if (M < 3) throw ContractError("sigma_energy_functional: M must be >= 3");
    if (!(side_length > 0.0)) throw ContractError("sigma_energy_functional: L must be positive");
    if (f.kind == EnvelopeKind::PolyDecay && !(f.alpha > dim)) {
        throw ContractError("sigma_energy_functional: alpha must exceed the dimension");
    }
    McDiarmidSpec spec;
    spec.functional = FunctionalId::EnergyIntegral;
    spec.dim = dim;
    spec.side_length = side_length;
    spec.alpha = f.decay_exponent();
    spec.support_bound = law.support_bound();
    spec.M = M;
    spec.support_radius = f.support_radius();
    const double q = spec.support_bound;
    spec.lattice_sum_sup = lattice_abs_sum_sup(f, dim).value;
    spec.c_glob = 4.0 * q * q * spec.lattice_sum_sup;
    spec.l1_norm = f.l1_norm(dim).value;
    const double volume = std::pow(side_length, dim);
    if (spec.support_radius) {
        spec.case2_flat = spec.c_glob * volume * f.sup_abs();
    } else {
        spec.case2_scale = spec.c_glob * f.c2 * std::pow(1.0 - 0.5 / M, -spec.alpha) * volume;
    }
    spec.sigma_sq = spec.remainder(-1, 2);
    return spec;
}

/// σ_j = 2 Q (L + |j|)^(-α) for F = Σ_i q_i (L + |i|)^(-α).
inline McDiarmidSpec sigma_linear_minorant(int dim, double side_length, double alpha, double q)
{
    if (!(alpha > dim)) throw ContractError("sigma_linear_minorant: alpha must exceed the dimension");
    if (!(side_length > 0.0)) throw ContractError("sigma_linear_minorant: L must be positive");
    if (q < 0.0) throw ContractError("sigma_linear_minorant: Q must be >= 0");
    McDiarmidSpec spec;
    spec.functional = FunctionalId::LinearMinorant;
    spec.dim = dim;
    spec.side_length = side_length;
    spec.alpha = alpha;
    spec.support_bound = q;
    spec.sigma_sq = spec.remainder(-1, 2);
    return spec;
}

/// 2 exp(-2 λ^2 / σ^2); 0 for a deterministic functional (σ^2 = 0, λ > 0).
inline double mcdiarmid_bound(double sigma_sq, double lambda)
{
    if (lambda < 0.0) throw ContractError("mcdiarmid_bound: lambda must be >= 0");
    if (sigma_sq < 0.0) throw ContractError("mcdiarmid_bound: sigma^2 must be >= 0");
    if (lambda == 0.0) return 2.0;
    if (sigma_sq == 0.0) return 0.0;
    return 2.0 * std::exp(-2.0 * lambda * lambda / sigma_sq);
}

inline double mcdiarmid_bound(const McDiarmidSpec& spec, double lambda)
{
    return mcdiarmid_bound(spec.sigma_sq, lambda);
}

/// A functional of the couplings, evaluated on samples of a fixed radius.
///  - EnergyIntegral: F = ∫_Λ V dx by the midpoint rule on the grid.
///  - LinearMinorant: F = Σ_{|i| <= R} q_i (L + |i|_inf)^(-α).
class Functional {
public:
    static Functional energy_integral(const CouplingLaw& law, const EnvelopeProfile& f,
                                      const GridSpec& grid, double relative_tolerance = 1e-8,
                                      std::optional<std::int64_t> radius = std::nullopt)
    {
        Functional F;
        F.id_ = FunctionalId::EnergyIntegral;
        F.law_ = law;
        F.dim_ = grid.dim;
        F.side_length_ = grid.side_length;
        F.alpha_ = f.decay_exponent();
        F.cell_volume_ = std::pow(grid.spacing(), grid.dim);
        F.radius_ = radius ? *radius : plan_truncation(law.support_bound(), f, grid, relative_tolerance).radius;
        F.evaluator_.emplace(f, grid, F.radius_);
        return F;
    }

    static Functional linear_minorant(const CouplingLaw& law, int dim, double side_length,
                                      double alpha, double relative_tolerance = 1e-8,
                                      std::optional<std::int64_t> radius = std::nullopt)
    {
        if (!(alpha > dim)) throw ContractError("linear minorant: alpha must exceed the dimension");
        Functional F;
        F.id_ = FunctionalId::LinearMinorant;
        F.law_ = law;
        F.dim_ = dim;
        F.side_length_ = side_length;
        F.alpha_ = alpha;
        if (radius) {
            F.radius_ = *radius;
        } else {
            const double q = law.support_bound();
            const double scale = std::max(1.0, q * (std::pow(side_length, -alpha) + shell_power_tail(dim, 0, side_length, alpha)));
            const double tol = relative_tolerance * scale;
            auto tail = [&](std::int64_t r) { return q * shell_power_tail(dim, r, side_length, alpha); };
            std::int64_t hi = 1;
            while (tail(hi) > tol) {
                if (ball_count(dim, hi) > default_site_cap) {
                    throw ConfigError("linear minorant: truncation tail " + std::to_string(tail(hi)) +
                                      " still exceeds tolerance " + std::to_string(tol) + " at the site cap");
                }
                hi *= 2;
            }
            std::int64_t lo = hi / 2;
            while (hi - lo > 1) {
                const std::int64_t mid = lo + (hi - lo) / 2;
                (tail(mid) <= tol ? hi : lo) = mid;
            }
            F.radius_ = hi;
        }
        return F;
    }

    FunctionalId id() const { return id_; }
    std::int64_t radius() const { return radius_; }
    int dim() const { return dim_; }
    double side_length() const { return side_length_; }
    const CouplingLaw& law() const { return law_; }

    DisorderSample sample(std::uint64_t seed) const { return sample_couplings(law_, dim_, radius_, seed); }

    double evaluate(const DisorderSample& s) const
    {
        if (s.dim != dim_) throw ContractError("functional: sample dimension mismatch");
        if (id_ == FunctionalId::EnergyIntegral) {
            const auto u = evaluator_->field(s);
            double acc = 0.0;
            for (double x : u) acc += x * x;
            return acc * cell_volume_;
        }
        double acc = 0.0;
        for (std::size_t flat = 0; flat < s.couplings.size(); ++flat) {
            if (s.couplings[flat] == 0.0) continue;
            const auto idx = s.index_of(flat);
            std::int64_t m = 0;
            for (auto v : idx) m = std::max<std::int64_t>(m, std::abs(v));
            acc += s.couplings[flat] * std::pow(side_length_ + static_cast<double>(m), -alpha_);
        }
        return acc;
    }

    /// F with all couplings beyond |i|_inf = radius set to 0.
    double evaluate_truncated(const DisorderSample& s, std::int64_t radius) const
    {
        DisorderSample cut = s;
        for (std::size_t flat = 0; flat < cut.couplings.size(); ++flat) {
            const auto idx = cut.index_of(flat);
            std::int64_t m = 0;
            for (auto v : idx) m = std::max<std::int64_t>(m, std::abs(v));
            if (m > radius) cut.couplings[flat] = 0.0;
        }
        return evaluate(cut);
    }

private:
    FunctionalId id_ = FunctionalId::EnergyIntegral;
    CouplingLaw law_;
    int dim_ = 1;
    double side_length_ = 1.0;
    double alpha_ = 0.0;
    double cell_volume_ = 1.0;
    std::int64_t radius_ = 0;
    std::optional<AlloyFieldEvaluator> evaluator_;
};

/// F on `samples` independent draws with seeds sample_seed(base_seed, index).
inline std::vector<double> sample_functional(const Functional& F, std::size_t samples,
                                             std::uint64_t base_seed, unsigned threads = 1)
{
    std::vector<double> values(samples);
    parallel_for(samples, threads, [&](std::size_t i) {
        values[i] = F.evaluate(F.sample(sample_seed(base_seed, i)));
    });
    return values;
}

struct TailRow {
    double lambda = 0.0;
    double empirical = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double bound = 0.0;
    std::size_t exceed = 0;

    /// Empirical tail within the bound plus `widths` Wilson half-widths.
    bool within_bound(double widths = 3.0) const
    {
        return empirical <= bound + widths * 0.5 * (ci_high - ci_low);
    }
};

/// Monte Carlo estimate of P(|F - mean F| > λ), with mean F the sample mean,
/// and 99% Wilson intervals.
inline std::vector<TailRow> empirical_tail(std::span<const double> values, double sigma_sq,
                                           std::span<const double> lambdas)
{
    if (values.size() < 1000) throw ContractError("empirical_tail: need at least 1000 samples");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    std::vector<TailRow> rows;
    for (double lambda : lambdas) {
        TailRow row;
        row.lambda = lambda;
        for (double v : values) row.exceed += std::abs(v - mean) > lambda;
        row.empirical = static_cast<double>(row.exceed) / static_cast<double>(values.size());
        const auto ci = wilson_interval(row.exceed, values.size());
        row.ci_low = ci.low;
        row.ci_high = ci.high;
        row.bound = mcdiarmid_bound(sigma_sq, lambda);
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<TailRow> empirical_tail(const Functional& F, const McDiarmidSpec& spec,
                                           std::size_t samples, std::span<const double> lambdas,
                                           std::uint64_t base_seed, unsigned threads = 1)
{
    const auto values = sample_functional(F, samples, base_seed, threads);
    return empirical_tail(values, spec.sigma_sq, lambdas);
}

/// λ grid spanning the bulk of the McDiarmid bound: fractions of σ.
inline std::vector<double> default_lambda_grid(double sigma_sq, std::size_t points = 12)
{
    std::vector<double> grid;
    const double sigma = std::sqrt(sigma_sq);
    for (std::size_t i = 0; i < points; ++i) grid.push_back(sigma * 1.5 * static_cast<double>(i) / static_cast<double>(points - 1));
    return grid;
}

struct CoordinateCheck {
    std::vector<std::int64_t> index;
    double sigma = 0.0;
    double max_difference = 0.0;
    bool holds = true;
    /// Witness of the largest difference: seed and the two functional values.
    std::uint64_t witness_seed = 0;
    double witness_low = 0.0;
    double witness_high = 0.0;
};

/// Samples `trials` configurations, sets q_j to the two extreme support values
/// and records max |F(Q') - F(Q)| against σ_j.
inline CoordinateCheck perturb_one_coordinate_check(const Functional& F, const McDiarmidSpec& spec,
                                                    std::span<const std::int64_t> j,
                                                    std::size_t trials, std::uint64_t base_seed,
                                                    unsigned threads = 1)
{
    if (trials < 100) throw ContractError("perturb_one_coordinate_check: need at least 100 trials");
    std::int64_t norm = 0;
    for (auto v : j) norm = std::max<std::int64_t>(norm, std::abs(v));
    if (norm > F.radius()) {
        throw ContractError("perturb_one_coordinate_check: index beyond the functional's radius " +
                            std::to_string(F.radius()));
    }
    CoordinateCheck out;
    out.index.assign(j.begin(), j.end());
    out.sigma = spec.sigma(j);
    const double lo = F.law().support_min();
    const double hi = F.law().support_max();
    std::vector<double> low(trials), high(trials);
    parallel_for(trials, threads, [&](std::size_t t) {
        auto s = F.sample(sample_seed(base_seed, t));
        s.set(j, lo);
        low[t] = F.evaluate(s);
        s.set(j, hi);
        high[t] = F.evaluate(s);
    });
    for (std::size_t t = 0; t < trials; ++t) {
        const double diff = std::abs(high[t] - low[t]);
        if (diff > out.max_difference || t == 0) {
            out.max_difference = diff;
            out.witness_seed = sample_seed(base_seed, t);
            out.witness_low = low[t];
            out.witness_high = high[t];
        }
    }
    // Round-off allowance relative to the magnitude of F.
    const double slack = 1e-12 * std::max({1.0, std::abs(out.witness_low), std::abs(out.witness_high)});
    out.holds = out.max_difference <= out.sigma + slack;
    return out;
}

struct TruncationRow {
    std::int64_t radius = 0;
    /// max over samples of |F_R - F_{R_max}|
    double observed = 0.0;
    /// Σ_{|j| > R} σ_j
    double remainder = 0.0;
};

/// F truncated to each radius in `radii` (ascending) against the largest one.
inline std::vector<TruncationRow> truncation_convergence(const Functional& F, const McDiarmidSpec& spec,
                                                         std::span<const std::int64_t> radii,
                                                         std::size_t samples, std::uint64_t base_seed)
{
    if (radii.empty()) throw ContractError("truncation_convergence: empty radius list");
    if (!std::is_sorted(radii.begin(), radii.end())) {
        throw ContractError("truncation_convergence: radii must be increasing");
    }
    if (radii.back() > F.radius()) throw ContractError("truncation_convergence: radius beyond the functional's radius");
    std::vector<TruncationRow> rows(radii.size());
    for (std::size_t k = 0; k < radii.size(); ++k) {
        rows[k].radius = radii[k];
        rows[k].remainder = spec.remainder(radii[k]);
    }
    for (std::size_t s = 0; s < samples; ++s) {
        const auto sample = F.sample(sample_seed(base_seed, s));
        const double reference = F.evaluate_truncated(sample, radii.back());
        for (std::size_t k = 0; k < radii.size(); ++k) {
            const double v = F.evaluate_truncated(sample, radii[k]);
            rows[k].observed = std::max(rows[k].observed, std::abs(v - reference));
        }
    }
    return rows;
}

} // namespace lifshitz
