#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <span>
#include <vector>

#include "lifshitz/lattice.hpp"

namespace lifshitz {

/// Unpivoted LDL^T factorization of (A - shift I) for a symmetric banded A.
///
/// Row i of the unit lower factor is kept in a window of `bandwidth` entries
/// covering columns [i - b, i). Counting mode keeps only the last b rows; solve
/// mode keeps all of them.
class BandedLdlt {
public:
    struct Status {
        bool ok = true;
        std::size_t negative_pivots = 0;
        std::size_t breakdown_row = 0;
        double min_abs_pivot = 0.0;
    };

    BandedLdlt(const SparseSymOperator& op, double shift, double pivot_tolerance,
               bool keep_factor)
        : n_(op.size()), b_(op.bandwidth()), keep_(keep_factor)
    {
        factor(op, shift, pivot_tolerance);
    }

    const Status& status() const { return status_; }
    std::span<const double> pivots() const { return pivots_; }

    /// Solves (A - shift I) x = rhs in place. Requires keep_factor and a
    /// successful factorization.
    void solve(std::span<double> x) const
    {
        if (!keep_ || !status_.ok) throw ContractError("BandedLdlt::solve: no usable factor");
        if (b_ == 0) {
            for (std::size_t i = 0; i < n_; ++i) x[i] /= pivots_[i];
            return;
        }
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t j0 = i > b_ ? i - b_ : 0;
            const double* row = lower_.data() + i * b_;
            double s = x[i];
            for (std::size_t j = j0; j < i; ++j) s -= row[j + b_ - i] * x[j];
            x[i] = s;
        }
        for (std::size_t i = 0; i < n_; ++i) x[i] /= pivots_[i];
        for (std::size_t i = n_; i-- > 0;) {
            const std::size_t j0 = i > b_ ? i - b_ : 0;
            const double* row = lower_.data() + i * b_;
            const double xi = x[i];
            for (std::size_t j = j0; j < i; ++j) x[j] -= row[j + b_ - i] * xi;
        }
    }

private:
    double* row_ptr(std::size_t i)
    {
        return lower_.data() + (keep_ ? i : i % (b_ + 1)) * b_;
    }

    void factor(const SparseSymOperator& op, double shift, double pivot_tolerance)
    {
        pivots_.assign(n_, 0.0);
        lower_.assign((keep_ ? n_ : std::min(n_, b_ + 1)) * b_, 0.0);
        std::vector<double> band(b_, 0.0);   // a(i, i-b+t)
        std::vector<double> scaled(b_, 0.0); // l(i, k) d(k)

        status_ = Status{};
        status_.min_abs_pivot = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t j0 = i > b_ ? i - b_ : 0;
            std::fill(band.begin(), band.end(), 0.0);
            for (std::size_t idx = op.lower_begin(i); idx < op.lower_end(i); ++idx) {
                band[op.lower_col(idx) + b_ - i] = op.lower_value(idx);
            }

            double* li = row_ptr(i);
            // c_j = a_ij - sum_{k<j} c_k l_jk ;  l_ij = c_j / d_j
            for (std::size_t j = j0; j < i; ++j) {
                const double* lj = row_ptr(j);
                const std::size_t k0 = std::max(j0, j > b_ ? j - b_ : std::size_t{0});
                double c = band[j + b_ - i];
                for (std::size_t k = k0; k < j; ++k) c -= scaled[k + b_ - i] * lj[k + b_ - j];
                scaled[j + b_ - i] = c;
                li[j + b_ - i] = c / pivots_[j];
            }
            double d = op.diagonal(i) - shift;
            for (std::size_t j = j0; j < i; ++j) d -= scaled[j + b_ - i] * li[j + b_ - i];
            pivots_[i] = d;
            status_.min_abs_pivot = std::min(status_.min_abs_pivot, std::abs(d));
            if (!(std::abs(d) > pivot_tolerance)) {
                status_.ok = false;
                status_.breakdown_row = i;
                return;
            }
            if (d < 0.0) ++status_.negative_pivots;
        }
    }

    std::size_t n_;
    std::size_t b_;
    bool keep_;
    Status status_;
    std::vector<double> pivots_;
    std::vector<double> lower_;
};

} // namespace lifshitz
