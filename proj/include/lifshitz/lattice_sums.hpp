#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "lifshitz/error.hpp"

// Sums over the integer lattice organized by sup-norm shells
// {i in Z^d : |i|_inf = m}.

namespace lifshitz {

inline double shell_count(int dim, std::int64_t m)
{
    if (m == 0) return 1.0;
    const double outer = std::pow(2.0 * static_cast<double>(m) + 1.0, dim);
    const double inner = std::pow(2.0 * static_cast<double>(m) - 1.0, dim);
    return outer - inner;
}

/// Number of lattice points with |i|_inf <= radius.
inline double ball_count(int dim, std::int64_t radius)
{
    return std::pow(2.0 * static_cast<double>(radius) + 1.0, dim);
}

/// sum_{m = from + 1}^{to} shell_count(dim, m) * term(m)
template <typename Term>
double shell_sum(int dim, std::int64_t from, std::int64_t to, Term&& term)
{
    double total = 0.0;
    for (std::int64_t m = from + 1; m <= to; ++m) {
        total += shell_count(dim, m) * term(m);
    }
    return total;
}

namespace detail {

inline double binomial(int n, int k)
{
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// Closed form of int_M^inf shell_count(dim, x) (x + shift)^(-power) dx,
// treating shell_count as the polynomial (2x+1)^d - (2x-1)^d.
inline double shell_power_integral(int dim, double lower, double shift, double power)
{
    const double y0 = lower + shift;
    double total = 0.0;
    for (int k = 0; k < dim; ++k) {
        if ((dim - k) % 2 == 0) continue;
        const double coeff = 2.0 * binomial(dim, k) * std::pow(2.0, k);
        // x^k = sum_j C(k, j) y^j (-shift)^(k-j)
        for (int j = 0; j <= k; ++j) {
            const double c = binomial(k, j) * std::pow(-shift, k - j);
            total += coeff * c * std::pow(y0, j - power + 1.0) / (power - j - 1.0);
        }
    }
    return total;
}

} // namespace detail

/// Upper bound (tight to the remainder of an explicit partial sum) for
///     sum_{m > start} shell_count(dim, m) * (m + shift)^(-power),
/// requiring power > dim and start + 1 + shift > 0. The first `direct_terms`
/// shells are summed exactly; the remainder is bounded by the integral of the
/// (eventually decreasing) summand.
inline double shell_power_tail(int dim, std::int64_t start, double shift, double power,
                               std::int64_t direct_terms = 4096)
{
    if (!(power > dim)) {
        throw ContractError("shell_power_tail: divergent sum, power must exceed the dimension");
    }
    if (!(static_cast<double>(start) + 1.0 + shift > 0.0)) {
        throw ContractError("shell_power_tail: base must be positive on the summation range");
    }
    const auto monotone_from = static_cast<std::int64_t>(
        std::ceil((dim - 1) * std::max(shift, 0.0))) + 1;
    const std::int64_t last = std::max(start + direct_terms, monotone_from);
    const double direct = shell_sum(dim, start, last, [&](std::int64_t m) {
        return std::pow(static_cast<double>(m) + shift, -power);
    });
    return direct + detail::shell_power_integral(dim, static_cast<double>(last), shift, power);
}

} // namespace lifshitz
