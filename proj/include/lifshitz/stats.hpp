#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "lifshitz/error.hpp"

namespace lifshitz {

/// Two-sided 99% normal quantile.
inline constexpr double z99 = 2.5758293035489004;

struct MeanEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

/// Sample mean with the standard error of the mean (unbiased variance).
inline MeanEstimate mean_estimate(std::span<const double> xs)
{
    MeanEstimate out;
    out.n = xs.size();
    if (xs.empty()) return out;
    double sum = 0.0;
    for (double x : xs) sum += x;
    out.mean = sum / static_cast<double>(xs.size());
    if (xs.size() < 2) return out;
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    out.standard_error = out.stddev / std::sqrt(static_cast<double>(xs.size()));
    return out;
}

struct Interval {
    double low = 0.0;
    double high = 0.0;
    double half_width() const { return 0.5 * (high - low); }
};

/// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(std::size_t successes, std::size_t trials, double z = z99)
{
    if (trials == 0) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    double intercept_stderr = 0.0;
    double r_squared = 0.0;
    std::size_t n = 0;
};

/// Weighted least squares y ≈ intercept + slope x. Standard errors use the
/// residual scatter (weights taken as relative).
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y,
                            std::span<const double> w = {})
{
    const std::size_t n = x.size();
    if (y.size() != n || (!w.empty() && w.size() != n)) {
        throw ContractError("linear_fit: mismatched input lengths");
    }
    if (n < 2) throw InsufficientDataError("linear_fit: need at least 2 points");
    auto weight = [&](std::size_t i) { return w.empty() ? 1.0 : w[i]; };
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += weight(i);
        sx += weight(i) * x[i];
        sy += weight(i) * y[i];
    }
    const double mx = sx / sw;
    const double my = sy / sw;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += weight(i) * dx * dx;
        sxy += weight(i) * dx * dy;
        syy += weight(i) * dy * dy;
    }
    if (!(sxx > 0.0)) throw InsufficientDataError("linear_fit: abscissae are all equal");
    LinearFit fit;
    fit.n = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        rss += weight(i) * r * r;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;
    if (n > 2) {
        const double s2 = rss / static_cast<double>(n - 2);
        fit.slope_stderr = std::sqrt(s2 / sxx);
        fit.intercept_stderr = std::sqrt(s2 * (1.0 / sw + mx * mx / sxx));
    }
    return fit;
}

/// Empirical quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> xs, double p)
{
    if (xs.empty()) throw ContractError("quantile: empty sample");
    std::sort(xs.begin(), xs.end());
    const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

} // namespace lifshitz
