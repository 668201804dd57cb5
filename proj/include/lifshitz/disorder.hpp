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

#include <boost/math/quadrature/exp_sinh.hpp>

#include "lifshitz/error.hpp"
#include "lifshitz/lattice.hpp"
#include "lifshitz/lattice_sums.hpp"
#include "lifshitz/rng.hpp"

namespace lifshitz {

enum class LawFamily { Uniform, TwoPoint, TruncatedExponential };

/// Distribution P0 of the i.i.d. couplings q_i.
///
///  - Uniform(a, b): uniform on [a, b].
///  - TwoPoint(p, Q): 0 with probability p, Q with probability 1 - p.
///  - TruncatedExponential(rate, Q): density proportional to exp(-rate q) on [0, Q].
struct CouplingLaw {
    LawFamily family = LawFamily::Uniform;
    double a = 0.0;
    double b = 1.0;
    double p_zero = 0.5;
    double value = 1.0;
    double rate = 1.0;

    /// Largest ε for which small_ball_constant() is guaranteed.
    static constexpr double small_ball_range = 0.125;

    static CouplingLaw uniform(double lo, double hi)
    {
        CouplingLaw law;
        law.family = LawFamily::Uniform;
        law.a = lo;
        law.b = hi;
        return law;
    }

    static CouplingLaw two_point(double p, double q)
    {
        CouplingLaw law;
        law.family = LawFamily::TwoPoint;
        law.p_zero = p;
        law.value = q;
        return law;
    }

    static CouplingLaw truncated_exponential(double lambda, double q)
    {
        CouplingLaw law;
        law.family = LawFamily::TruncatedExponential;
        law.rate = lambda;
        law.value = q;
        return law;
    }

    void validate() const
    {
        switch (family) {
        case LawFamily::Uniform:
            if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) {
                throw ConfigError("law.uniform: need finite a < b");
            }
            if (a > 0.0 || b < 0.0) throw ConfigError("law.uniform: 0 must lie in [a, b]");
            break;
        case LawFamily::TwoPoint:
            if (!(p_zero >= 0.0 && p_zero <= 1.0)) throw ConfigError("law.two_point: p must lie in [0, 1]");
            if (!(value >= 0.0) || !std::isfinite(value)) throw ConfigError("law.two_point: Q must be finite and >= 0");
            break;
        case LawFamily::TruncatedExponential:
            if (!(rate > 0.0) || !std::isfinite(rate)) throw ConfigError("law.truncated_exponential: rate must be positive");
            if (!(value > 0.0) || !std::isfinite(value)) throw ConfigError("law.truncated_exponential: Q must be positive");
            break;
        }
    }

    double support_min() const
    {
        switch (family) {
        case LawFamily::Uniform: return a;
        case LawFamily::TwoPoint: return p_zero > 0.0 ? 0.0 : value;
        case LawFamily::TruncatedExponential: return 0.0;
        }
        return 0.0;
    }

    double support_max() const
    {
        switch (family) {
        case LawFamily::Uniform: return b;
        case LawFamily::TwoPoint: return p_zero < 1.0 ? value : 0.0;
        case LawFamily::TruncatedExponential: return value;
        }
        return 0.0;
    }

    /// Q with supp P0 contained in [-Q, Q].
    double support_bound() const { return std::max(std::abs(support_min()), std::abs(support_max())); }

    /// Support reduced to one point (violates the standing assumptions but is
    /// useful as a deterministic control).
    bool degenerate() const { return support_min() == support_max(); }

    double mean() const
    {
        switch (family) {
        case LawFamily::Uniform: return 0.5 * (a + b);
        case LawFamily::TwoPoint: return (1.0 - p_zero) * value;
        case LawFamily::TruncatedExponential: {
            const double x = rate * value;
            // E q = 1/rate - Q/(e^{rate Q} - 1)
            return 1.0 / rate - value / std::expm1(x);
        }
        }
        return 0.0;
    }

    double variance() const
    {
        switch (family) {
        case LawFamily::Uniform: return (b - a) * (b - a) / 12.0;
        case LawFamily::TwoPoint: return p_zero * (1.0 - p_zero) * value * value;
        case LawFamily::TruncatedExponential: {
            const double x = rate * value;
            // Var q = 1/rate^2 - Q^2 e^{x} / (e^{x} - 1)^2
            const double em1 = std::expm1(x);
            return 1.0 / (rate * rate) - value * value * std::exp(x) / (em1 * em1);
        }
        }
        return 0.0;
    }

    /// P(|q| <= eps).
    double small_ball_probability(double eps) const
    {
        if (eps < 0.0) return 0.0;
        switch (family) {
        case LawFamily::Uniform:
            return (std::min(eps, b) + std::min(eps, -a)) / (b - a);
        case LawFamily::TwoPoint:
            return p_zero + (value <= eps ? 1.0 - p_zero : 0.0);
        case LawFamily::TruncatedExponential:
            return -std::expm1(-rate * std::min(eps, value)) / -std::expm1(-rate * value);
        }
        return 0.0;
    }

    /// K in P(|q| < ε) >= C ε^K.
    double small_ball_exponent() const
    {
        return family == LawFamily::TwoPoint ? 0.0 : 1.0;
    }

    /// C in P(|q| < ε) >= C ε^K, valid for 0 < ε <= small_ball_range. For the
    /// continuous families the distribution of |q| has a nonincreasing density,
    /// so P(|q| < ε)/ε is nonincreasing and its value at the range end is a bound.
    double small_ball_constant() const
    {
        if (family == LawFamily::TwoPoint) return p_zero;
        return small_ball_probability(small_ball_range) / small_ball_range;
    }

    double sample(Rng& rng) const
    {
        switch (family) {
        case LawFamily::Uniform: return a + (b - a) * rng.uniform();
        case LawFamily::TwoPoint: return rng.uniform() < p_zero ? 0.0 : value;
        case LawFamily::TruncatedExponential:
            return truncated_exponential_quantile(rng.uniform(), value);
        }
        return 0.0;
    }

    /// Draw from P0 conditioned on |q| <= eps.
    double sample_small(Rng& rng, double eps) const
    {
        switch (family) {
        case LawFamily::Uniform: {
            const double lo = std::max(a, -eps);
            const double hi = std::min(b, eps);
            return lo + (hi - lo) * rng.uniform();
        }
        case LawFamily::TwoPoint:
            if (value <= eps) return sample(rng);
            if (p_zero <= 0.0) throw ContractError("law.two_point: event |q| <= eps has probability 0");
            return 0.0;
        case LawFamily::TruncatedExponential:
            return truncated_exponential_quantile(rng.uniform(), std::min(eps, value));
        }
        return 0.0;
    }

    bool operator==(const CouplingLaw&) const = default;

private:
    double truncated_exponential_quantile(double u, double upper) const
    {
        return -std::log1p(u * std::expm1(-rate * upper)) / rate;
    }
};

inline const char* to_string(LawFamily family)
{
    switch (family) {
    case LawFamily::Uniform: return "uniform";
    case LawFamily::TwoPoint: return "two_point";
    case LawFamily::TruncatedExponential: return "truncated_exponential";
    }
    return "?";
}

struct QuadratureValue {
    double value = 0.0;
    double error = 0.0;
};

enum class EnvelopeKind { PolyDecay, CompactBump };

/// Single-site function f(x) = A φ(|x|_inf) with φ(0) = 1 nonincreasing.
///
///  - PolyDecay(α, C1, C2): f(x) = C2 (1 + |x|)^(-α); C1 <= C2 is the declared
///    lower constant, so C1 (1+|x|)^(-α) <= f(x) <= C2 (1+|x|)^(-α).
///  - CompactBump(r, h): f(x) = h on the open cube |x|_inf < r, 0 outside.
struct EnvelopeProfile {
    EnvelopeKind kind = EnvelopeKind::PolyDecay;
    double alpha = 3.0;
    double c1 = 1.0;
    double c2 = 1.0;
    double radius = 0.5;
    double height = 1.0;

    static EnvelopeProfile poly_decay(double decay, double lower, double upper)
    {
        EnvelopeProfile f;
        f.kind = EnvelopeKind::PolyDecay;
        f.alpha = decay;
        f.c1 = lower;
        f.c2 = upper;
        return f;
    }

    static EnvelopeProfile compact_bump(double r, double h)
    {
        EnvelopeProfile f;
        f.kind = EnvelopeKind::CompactBump;
        f.radius = r;
        f.height = h;
        return f;
    }

    void validate(int dim) const
    {
        if (kind == EnvelopeKind::PolyDecay) {
            if (!(alpha > dim)) throw ConfigError("envelope.alpha must exceed the dimension");
            if (!(c1 > 0.0 && c1 <= c2) || !std::isfinite(c2)) {
                throw ConfigError("envelope: need 0 < c1 <= c2");
            }
        } else {
            if (!(radius > 0.0) || !std::isfinite(radius)) throw ConfigError("envelope.radius must be positive");
            if (height == 0.0 || !std::isfinite(height)) throw ConfigError("envelope.height must be nonzero");
        }
    }

    double amplitude() const { return kind == EnvelopeKind::PolyDecay ? c2 : height; }

    double profile(double r) const
    {
        if (kind == EnvelopeKind::PolyDecay) return std::pow(1.0 + r, -alpha);
        return r < radius ? 1.0 : 0.0;
    }

    double at_radius(double r) const { return amplitude() * profile(r); }

    double operator()(std::span<const double> x) const
    {
        double r = 0.0;
        for (double xi : x) r = std::max(r, std::abs(xi));
        return at_radius(r);
    }

    double sup_abs() const { return std::abs(amplitude()); }

    std::optional<double> support_radius() const
    {
        if (kind == EnvelopeKind::CompactBump) return radius;
        return std::nullopt;
    }

    /// Decay exponent α for PolyDecay; +inf for compact support.
    double decay_exponent() const
    {
        return kind == EnvelopeKind::PolyDecay ? alpha : std::numeric_limits<double>::infinity();
    }

    /// ∫ |f|^power over R^d, via the sup-norm sphere measure 2d (2r)^(d-1) dr.
    QuadratureValue integral_power(int dim, int power) const
    {
        const double amp = std::pow(std::abs(amplitude()), power);
        if (kind == EnvelopeKind::CompactBump) return {amp * std::pow(2.0 * radius, dim), 0.0};
        auto integrand = [&](double r) {
            return 2.0 * dim * std::pow(2.0 * r, dim - 1) * std::pow(1.0 + r, -alpha * power);
        };
        boost::math::quadrature::exp_sinh<double> integrator;
        double error = 0.0;
        double l1 = 0.0;
        const double v = integrator.integrate(integrand, 0.0, std::numeric_limits<double>::infinity(),
                                              1e-12, &error, &l1);
        if (!std::isfinite(v) || error > 1e-8 * std::abs(v)) {
            throw NumericError("envelope quadrature did not converge (error " + std::to_string(error) + ")");
        }
        return {amp * v, amp * error};
    }

    QuadratureValue l1_norm(int dim) const { return integral_power(dim, 1); }
    QuadratureValue l2_norm_sq(int dim) const { return integral_power(dim, 2); }

    /// Σ_{|i|_inf > radius_cut} sup_{x in Λ_L} |f(x - i)|, with Λ_L = [-L/2, L/2]^d.
    /// Uses sup_{x in Λ}|f(x - i)| = |A| φ(max(0, |i|_inf - L/2)).
    double lattice_tail(int dim, double side_length, std::int64_t radius_cut) const
    {
        const double half = 0.5 * side_length;
        const double amp = sup_abs();
        if (kind == EnvelopeKind::CompactBump) {
            double total = 0.0;
            for (std::int64_t m = std::max<std::int64_t>(radius_cut + 1, 0);
                 static_cast<double>(m) - half < radius; ++m) {
                total += shell_count(dim, m);
            }
            return amp * total;
        }
        const auto inside = static_cast<std::int64_t>(std::floor(half));
        double total = 0.0;
        std::int64_t start = radius_cut;
        if (radius_cut < inside) {
            total += shell_sum(dim, radius_cut, inside, [&](std::int64_t m) {
                return std::pow(1.0 + std::max(0.0, static_cast<double>(m) - half), -alpha);
            });
            start = inside;
        }
        total += shell_power_tail(dim, start, 1.0 - half, alpha);
        return amp * total;
    }

    /// Cheap upper bound of sup_x Σ_i |f(x - i)|.
    double lattice_sum_bound(int dim) const { return sup_abs() + lattice_tail(dim, 1.0, 0); }

    bool operator==(const EnvelopeProfile&) const = default;
};

/// One realization of the couplings q_i for |i|_inf <= radius, stored
/// lexicographically with the last axis fastest.
struct DisorderSample {
    int dim = 1;
    std::int64_t radius = 0;
    std::uint64_t seed = 0;
    /// Q of the law the sample was drawn from (bounds the omitted couplings).
    double support_bound = 0.0;
    std::vector<double> couplings;

    std::int64_t side() const { return 2 * radius + 1; }

    std::size_t flat_index(std::span<const std::int64_t> index) const
    {
        std::size_t flat = 0;
        for (int j = 0; j < dim; ++j) {
            flat = flat * static_cast<std::size_t>(side()) + static_cast<std::size_t>(index[j] + radius);
        }
        return flat;
    }

    double at(std::span<const std::int64_t> index) const
    {
        for (int j = 0; j < dim; ++j) {
            if (index[j] < -radius || index[j] > radius) return 0.0;
        }
        return couplings[flat_index(index)];
    }

    void set(std::span<const std::int64_t> index, double q) { couplings[flat_index(index)] = q; }

    /// Lattice index of flat position `flat`.
    std::vector<std::int64_t> index_of(std::size_t flat) const
    {
        std::vector<std::int64_t> idx(static_cast<std::size_t>(dim));
        for (int j = dim - 1; j >= 0; --j) {
            idx[static_cast<std::size_t>(j)] = static_cast<std::int64_t>(flat % static_cast<std::size_t>(side())) - radius;
            flat /= static_cast<std::size_t>(side());
        }
        return idx;
    }
};

/// Default cap on the number of couplings per sample.
inline constexpr double default_site_cap = 1u << 27;

inline DisorderSample sample_couplings(const CouplingLaw& law, int dim, std::int64_t radius,
                                       std::uint64_t seed)
{
    if (radius < 0) throw ContractError("sample_couplings: region radius must be >= 0");
    if (ball_count(dim, radius) > default_site_cap) {
        throw ResourceError("sample_couplings: too many lattice sites for radius " + std::to_string(radius));
    }
    DisorderSample s;
    s.dim = dim;
    s.radius = radius;
    s.seed = seed;
    s.support_bound = law.support_bound();
    s.couplings.resize(static_cast<std::size_t>(ball_count(dim, radius)));
    Rng rng(seed);
    for (double& q : s.couplings) q = law.sample(rng);
    return s;
}

/// Same stream layout as sample_couplings, but sites with |i|_inf <= small_radius
/// are drawn from P0 conditioned on |q| <= eps.
inline DisorderSample sample_couplings_small_near(const CouplingLaw& law, int dim,
                                                  std::int64_t radius, std::uint64_t seed,
                                                  std::int64_t small_radius, double eps)
{
    DisorderSample s = sample_couplings(law, dim, radius, 0);
    s.seed = seed;
    Rng rng(seed);
    for (std::size_t flat = 0; flat < s.couplings.size(); ++flat) {
        const auto idx = s.index_of(flat);
        std::int64_t norm = 0;
        for (auto v : idx) norm = std::max<std::int64_t>(norm, std::abs(v));
        s.couplings[flat] = norm <= small_radius ? law.sample_small(rng, eps) : law.sample(rng);
    }
    return s;
}

struct TruncationPlan {
    std::int64_t radius = 0;
    double tail_bound = 0.0;
    double tolerance = 0.0;
};

/// Bound on sup_{x in Λ} |U(x) - U_R(x)| when couplings beyond radius are dropped.
inline double truncation_tail_bound(double support_bound, const EnvelopeProfile& f,
                                    const GridSpec& grid, std::int64_t radius)
{
    return support_bound * f.lattice_tail(grid.dim, grid.side_length, radius);
}

/// Absolute tail tolerance corresponding to a relative one: rel * max(1, ||U||_inf estimate).
inline double truncation_tolerance(double support_bound, const EnvelopeProfile& f, int dim,
                                   double relative)
{
    return relative * std::max(1.0, support_bound * f.lattice_sum_bound(dim));
}

/// Smallest radius whose tail bound is below relative * max(1, ||U||_inf estimate).
inline TruncationPlan plan_truncation(double support_bound, const EnvelopeProfile& f,
                                      const GridSpec& grid, double relative_tolerance = 1e-8)
{
    TruncationPlan plan;
    plan.tolerance = truncation_tolerance(support_bound, f, grid.dim, relative_tolerance);
    const auto cover = static_cast<std::int64_t>(std::ceil(0.5 * grid.side_length));
    auto tail = [&](std::int64_t r) { return truncation_tail_bound(support_bound, f, grid, r); };
    if (f.kind == EnvelopeKind::CompactBump) {
        plan.radius = static_cast<std::int64_t>(std::ceil(0.5 * grid.side_length + f.radius));
        plan.tail_bound = tail(plan.radius);
        return plan;
    }
    std::int64_t hi = std::max<std::int64_t>(cover, 1);
    while (tail(hi) > plan.tolerance) {
        if (ball_count(grid.dim, hi) > default_site_cap) {
            throw ConfigError("truncation: tail bound " + std::to_string(tail(hi)) + " at radius " +
                              std::to_string(hi) + " still exceeds tolerance " +
                              std::to_string(plan.tolerance) + "; site cap reached");
        }
        hi *= 2;
    }
    std::int64_t lo = std::max<std::int64_t>(cover, hi / 2);
    if (tail(lo) <= plan.tolerance) hi = lo;
    while (hi - lo > 1) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        (tail(mid) <= plan.tolerance ? hi : lo) = mid;
    }
    plan.radius = hi;
    plan.tail_bound = tail(hi);
    return plan;
}

/// Evaluates U(x_k) = Σ_{|i|_inf <= R} q_i f(x_k - i) on a grid.
///
/// When the grid has an integer number s of points per unit length, every
/// offset x_k - i lies on the lattice h (m + 1/2 - n/2), m = k - s i, so f is
/// tabulated once per axis and f(x - i) = A min_j G[m_j] (φ is nonincreasing).
class AlloyFieldEvaluator {
public:
    AlloyFieldEvaluator(const EnvelopeProfile& f, const GridSpec& grid, std::int64_t max_radius)
        : f_(f), grid_(grid), max_radius_(max_radius)
    {
        grid.validate();
        const double s = 1.0 / grid.spacing();
        const double rounded = std::round(s);
        if (rounded >= 1.0 && std::abs(s - rounded) <= 1e-9 * s) {
            stride_ = static_cast<std::int64_t>(rounded);
            const auto n = static_cast<std::int64_t>(grid.points_per_side);
            table_min_ = -stride_ * max_radius;
            const std::int64_t table_max = n - 1 + stride_ * max_radius;
            table_.resize(static_cast<std::size_t>(table_max - table_min_ + 1));
            const double c = 0.5 - 0.5 * static_cast<double>(n);
            const double h = grid.spacing();
            for (std::int64_t m = table_min_; m <= table_max; ++m) {
                table_[static_cast<std::size_t>(m - table_min_)] =
                    f.profile(std::abs(h * (static_cast<double>(m) + c)));
            }
            for (std::size_t t = 0; t < table_.size(); ++t) {
                if (table_[t] != 0.0) {
                    nonzero_lo_ = std::min(nonzero_lo_, static_cast<std::int64_t>(t));
                    nonzero_hi_ = std::max(nonzero_hi_, static_cast<std::int64_t>(t));
                }
            }
        }
    }

    const GridSpec& grid() const { return grid_; }
    std::int64_t max_radius() const { return max_radius_; }
    bool tabulated() const { return stride_ > 0; }

    std::vector<double> field(const DisorderSample& sample) const
    {
        if (sample.dim != grid_.dim) throw ContractError("alloy_field: sample and grid dimensions differ");
        if (sample.radius > max_radius_) throw ContractError("alloy_field: sample radius exceeds evaluator radius");
        std::vector<double> u(grid_.size(), 0.0);
        if (tabulated()) {
            field_tabulated(sample, u);
        } else {
            field_direct(sample, u);
        }
        const double amp = f_.amplitude();
        for (double& v : u) v *= amp;
        return u;
    }

    PotentialField potential(const DisorderSample& sample) const
    {
        auto u = field(sample);
        for (double& v : u) v *= v;
        return {grid_, std::move(u)};
    }

private:
    void field_tabulated(const DisorderSample& sample, std::vector<double>& u) const
    {
        const int d = grid_.dim;
        const auto n = static_cast<std::int64_t>(grid_.points_per_side);
        const std::size_t sites = sample.couplings.size();
        std::vector<std::int64_t> base(static_cast<std::size_t>(d));
        std::vector<std::int64_t> k(static_cast<std::size_t>(d));
        const double* g = table_.data();
        for (std::size_t flat = 0; flat < sites; ++flat) {
            const double q = sample.couplings[flat];
            if (q == 0.0) continue;
            bool empty = false;
            std::size_t rem = flat;
            for (int j = d - 1; j >= 0; --j) {
                const auto ij = static_cast<std::int64_t>(rem % static_cast<std::size_t>(sample.side())) - sample.radius;
                rem /= static_cast<std::size_t>(sample.side());
                base[static_cast<std::size_t>(j)] = -stride_ * ij - table_min_;
                const std::int64_t b = base[static_cast<std::size_t>(j)];
                if (b + n - 1 < nonzero_lo_ || b > nonzero_hi_) empty = true;
            }
            if (empty) continue;
            const std::int64_t inner_base = base[static_cast<std::size_t>(d - 1)];
            if (d == 1) {
                const double* row = g + inner_base;
                for (std::int64_t i = 0; i < n; ++i) u[static_cast<std::size_t>(i)] += q * row[i];
                continue;
            }
            // Odometer over the outer d-1 axes.
            std::fill(k.begin(), k.end(), 0);
            std::size_t offset = 0;
            while (true) {
                double outer = 1.0;
                for (int j = 0; j + 1 < d; ++j) {
                    outer = std::min(outer, g[k[static_cast<std::size_t>(j)] + base[static_cast<std::size_t>(j)]]);
                }
                if (outer != 0.0) {
                    const double* row = g + inner_base;
                    double* out = u.data() + offset;
                    for (std::int64_t i = 0; i < n; ++i) out[i] += q * std::min(outer, row[i]);
                }
                offset += static_cast<std::size_t>(n);
                int j = d - 2;
                while (j >= 0 && ++k[static_cast<std::size_t>(j)] == n) {
                    k[static_cast<std::size_t>(j)] = 0;
                    --j;
                }
                if (j < 0) break;
            }
        }
    }

    void field_direct(const DisorderSample& sample, std::vector<double>& u) const
    {
        const int d = grid_.dim;
        const std::size_t n = grid_.points_per_side;
        std::vector<double> x(static_cast<std::size_t>(d));
        for (std::size_t flat = 0; flat < sample.couplings.size(); ++flat) {
            const double q = sample.couplings[flat];
            if (q == 0.0) continue;
            const auto idx = sample.index_of(flat);
            for (std::size_t p = 0; p < u.size(); ++p) {
                double r = 0.0;
                std::size_t rem = p;
                for (int j = d - 1; j >= 0; --j) {
                    const double xj = grid_.coordinate(rem % n);
                    rem /= n;
                    r = std::max(r, std::abs(xj - static_cast<double>(idx[static_cast<std::size_t>(j)])));
                }
                u[p] += q * f_.profile(r);
            }
        }
    }

    EnvelopeProfile f_;
    GridSpec grid_;
    std::int64_t max_radius_;
    std::int64_t stride_ = 0;
    std::int64_t table_min_ = 0;
    std::int64_t nonzero_lo_ = std::numeric_limits<std::int64_t>::max();
    std::int64_t nonzero_hi_ = std::numeric_limits<std::int64_t>::min();
    std::vector<double> table_;
};

namespace detail {

inline void check_truncation(const DisorderSample& sample, const EnvelopeProfile& f,
                             const GridSpec& grid, double relative_tolerance)
{
    if (!std::isfinite(relative_tolerance)) return;
    const double tail = truncation_tail_bound(sample.support_bound, f, grid, sample.radius);
    const double tol = truncation_tolerance(sample.support_bound, f, grid.dim, relative_tolerance);
    if (tail > tol) {
        throw ConfigError("alloy_field: truncation tail bound " + std::to_string(tail) +
                          " at radius " + std::to_string(sample.radius) + " exceeds tolerance " +
                          std::to_string(tol));
    }
}

} // namespace detail

/// U_ω on the grid. Pass relative_tolerance = +inf to skip the truncation check.
inline std::vector<double> alloy_field(const DisorderSample& sample, const EnvelopeProfile& f,
                                       const GridSpec& grid, double relative_tolerance = 1e-8)
{
    detail::check_truncation(sample, f, grid, relative_tolerance);
    return AlloyFieldEvaluator(f, grid, sample.radius).field(sample);
}

/// V_ω = U_ω^2 on the grid.
inline PotentialField squared_potential(const DisorderSample& sample, const EnvelopeProfile& f,
                                        const GridSpec& grid, double relative_tolerance = 1e-8)
{
    detail::check_truncation(sample, f, grid, relative_tolerance);
    return AlloyFieldEvaluator(f, grid, sample.radius).potential(sample);
}

inline double potential_min(const PotentialField& field)
{
    if (field.values.empty()) throw ContractError("potential_min: empty grid");
    return *std::min_element(field.values.begin(), field.values.end());
}

inline double alloy_min(const DisorderSample& sample, const EnvelopeProfile& f,
                        const GridSpec& grid, double relative_tolerance = 1e-8)
{
    const auto u = alloy_field(sample, f, grid, relative_tolerance);
    return *std::min_element(u.begin(), u.end());
}

/// ∫_{Λ_1} V dx for one sample: midpoint rule on the unit cell at m and 2m
/// points per side, Richardson-combined.
class UnitCellEnergy {
public:
    UnitCellEnergy(const EnvelopeProfile& f, int dim, std::int64_t radius, std::size_t points = 32)
        : coarse_(f, GridSpec{dim, 1.0, points}, radius),
          fine_(f, GridSpec{dim, 1.0, 2 * points}, radius)
    {
    }

    double operator()(const DisorderSample& sample) const
    {
        const double coarse = mean_square(coarse_.field(sample));
        const double fine = mean_square(fine_.field(sample));
        return (4.0 * fine - coarse) / 3.0;
    }

private:
    static double mean_square(const std::vector<double>& u)
    {
        double acc = 0.0;
        for (double v : u) acc += v * v;
        return acc / static_cast<double>(u.size());
    }

    AlloyFieldEvaluator coarse_;
    AlloyFieldEvaluator fine_;
};

struct EnergyDensity {
    double rho = 0.0;
    double coupling_mean = 0.0;
    double coupling_variance = 0.0;
    QuadratureValue l2_norm_sq;
    /// ∫_{Λ_1} (Σ_i f(x - i))^2 dx
    QuadratureValue cell_integral;
    std::size_t cell_points = 0;
};

/// ρ = Var(q0) ||f||_2^2 + E(q0)^2 ∫_{Λ_1} (Σ_i f(x - i))^2 dx.
/// The cell integral uses the midpoint rule with Richardson extrapolation,
/// doubling the resolution until the relative change drops below 1e-6.
inline EnergyDensity mean_energy_density(const CouplingLaw& law, const EnvelopeProfile& f, int dim,
                                         double relative_tolerance = 1e-6)
{
    EnergyDensity out;
    out.coupling_mean = law.mean();
    out.coupling_variance = law.variance();
    out.l2_norm_sq = f.l2_norm_sq(dim);
    out.rho = out.coupling_variance * out.l2_norm_sq.value;
    if (out.coupling_mean == 0.0) return out;

    const GridSpec cell{dim, 1.0, 2};
    const auto plan = plan_truncation(1.0, f, cell, 1e-10);
    DisorderSample ones;
    ones.dim = dim;
    ones.radius = plan.radius;
    ones.support_bound = 1.0;
    ones.couplings.assign(static_cast<std::size_t>(ball_count(dim, plan.radius)), 1.0);

    const std::size_t max_points = dim == 1 ? (1u << 14) : dim == 2 ? 512 : 64;
    auto midpoint = [&](std::size_t m) {
        AlloyFieldEvaluator eval(f, GridSpec{dim, 1.0, m}, plan.radius);
        const auto u = eval.field(ones);
        double acc = 0.0;
        for (double v : u) acc += v * v;
        return acc / static_cast<double>(u.size());
    };

    double previous_coarse = midpoint(4);
    double previous = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t m = 8; m <= max_points; m *= 2) {
        const double fine = midpoint(m);
        const double extrapolated = (4.0 * fine - previous_coarse) / 3.0;
        if (std::isfinite(previous)) {
            const double change = std::abs(extrapolated - previous);
            if (change <= relative_tolerance * std::abs(extrapolated)) {
                out.cell_integral = {extrapolated, change + plan.tail_bound};
                out.cell_points = m;
                out.rho += out.coupling_mean * out.coupling_mean * extrapolated;
                return out;
            }
        }
        previous = extrapolated;
        previous_coarse = fine;
    }
    throw NumericError("mean_energy_density: unit-cell quadrature did not converge, last estimate " +
                       std::to_string(previous));
}

} // namespace lifshitz
