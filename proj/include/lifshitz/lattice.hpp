#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lifshitz/error.hpp"

namespace lifshitz {

/// Default upper limit on the number of grid points n^d.
inline constexpr std::size_t default_grid_cap = std::size_t{1} << 24;

/// Discretization of the box [-L/2, L/2]^d by n cell-centred points per side,
/// x_k = -L/2 + (k + 1/2) h with h = L / n.
struct GridSpec {
    int dim = 1;
    double side_length = 1.0;
    std::size_t points_per_side = 2;

    double spacing() const { return side_length / static_cast<double>(points_per_side); }

    double volume() const { return std::pow(side_length, dim); }

    /// n^d, or nullopt on overflow.
    std::optional<std::size_t> try_size() const
    {
        std::size_t total = 1;
        for (int j = 0; j < dim; ++j) {
            if (points_per_side != 0 && total > SIZE_MAX / points_per_side) return std::nullopt;
            total *= points_per_side;
        }
        return total;
    }

    std::size_t size() const { return try_size().value_or(SIZE_MAX); }

    double coordinate(std::size_t k) const
    {
        return -0.5 * side_length + (static_cast<double>(k) + 0.5) * spacing();
    }

    /// Stride of axis j in the flat index; the last axis is contiguous.
    std::size_t stride(int axis) const
    {
        std::size_t s = 1;
        for (int j = axis + 1; j < dim; ++j) s *= points_per_side;
        return s;
    }

    void validate(std::size_t cap = default_grid_cap) const
    {
        if (dim < 1) throw ContractError("grid: dim must be >= 1");
        if (points_per_side < 2) throw ContractError("grid: points_per_side must be >= 2");
        if (!(side_length > 0.0) || !std::isfinite(side_length)) {
            throw ContractError("grid: side_length must be positive and finite");
        }
        const auto n = try_size();
        if (!n || *n > cap) {
            throw ResourceError("grid: " + std::to_string(points_per_side) + "^" +
                                std::to_string(dim) + " points exceeds the cap of " +
                                std::to_string(cap));
        }
    }

    bool operator==(const GridSpec&) const = default;
};

enum class BoundaryCondition { Dirichlet, Neumann };

inline const char* to_string(BoundaryCondition bc)
{
    return bc == BoundaryCondition::Dirichlet ? "dirichlet" : "neumann";
}

/// Real symmetric sparse matrix storing the upper triangle in compressed rows.
/// Every row stores its diagonal entry first.
class SparseSymOperator {
public:
    struct Entry {
        std::size_t row;
        std::size_t col;
        double value;
    };

    SparseSymOperator() = default;

    /// Builds from upper-triangle entries (row <= col); duplicates are summed.
    SparseSymOperator(std::size_t size, std::vector<Entry> entries,
                      std::optional<BoundaryCondition> bc = std::nullopt)
        : size_(size), boundary_(bc)
    {
        std::vector<std::vector<std::pair<std::size_t, double>>> rows(size);
        for (auto& e : entries) {
            if (e.row > e.col) std::swap(e.row, e.col);
            if (e.col >= size) throw ContractError("SparseSymOperator: entry out of range");
            rows[e.row].emplace_back(e.col, e.value);
        }
        row_start_.assign(1, 0);
        row_start_.reserve(size + 1);
        for (std::size_t r = 0; r < size; ++r) {
            auto& row = rows[r];
            std::sort(row.begin(), row.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            cols_.push_back(r);
            values_.push_back(0.0);
            for (const auto& [c, v] : row) {
                if (c == r) {
                    values_[row_start_.back()] += v;
                } else if (cols_.back() == c) {
                    values_.back() += v;
                } else {
                    cols_.push_back(c);
                    values_.push_back(v);
                    bandwidth_ = std::max(bandwidth_, c - r);
                }
            }
            row_start_.push_back(cols_.size());
        }
        build_lower_index();
    }

    std::size_t size() const { return size_; }
    std::size_t bandwidth() const { return bandwidth_; }
    std::optional<BoundaryCondition> boundary() const { return boundary_; }

    std::size_t row_begin(std::size_t r) const { return row_start_[r]; }
    std::size_t row_end(std::size_t r) const { return row_start_[r + 1]; }
    std::size_t col(std::size_t idx) const { return cols_[idx]; }
    double value(std::size_t idx) const { return values_[idx]; }

    double diagonal(std::size_t r) const { return values_[row_start_[r]]; }

    /// Strictly lower entries (r, c), c < r, of row r in increasing column order.
    std::size_t lower_begin(std::size_t r) const { return lower_start_[r]; }
    std::size_t lower_end(std::size_t r) const { return lower_start_[r + 1]; }
    std::size_t lower_col(std::size_t idx) const { return lower_cols_[idx]; }
    double lower_value(std::size_t idx) const { return lower_values_[idx]; }

    std::vector<Entry> entries() const
    {
        std::vector<Entry> out;
        out.reserve(values_.size());
        for (std::size_t r = 0; r < size_; ++r) {
            for (std::size_t idx = row_start_[r]; idx < row_start_[r + 1]; ++idx) {
                out.push_back({r, cols_[idx], values_[idx]});
            }
        }
        return out;
    }

    /// y = A x
    void apply(std::span<const double> x, std::span<double> y) const
    {
        std::fill(y.begin(), y.end(), 0.0);
        for (std::size_t r = 0; r < size_; ++r) {
            const std::size_t begin = row_start_[r];
            double acc = values_[begin] * x[r];
            const double xr = x[r];
            for (std::size_t idx = begin + 1; idx < row_start_[r + 1]; ++idx) {
                const std::size_t c = cols_[idx];
                acc += values_[idx] * x[c];
                y[c] += values_[idx] * xr;
            }
            y[r] += acc;
        }
    }

    std::vector<double> apply(std::span<const double> x) const
    {
        std::vector<double> y(size_);
        apply(x, y);
        return y;
    }

    /// Row sums of |a_ij| (full symmetric matrix).
    std::vector<double> abs_row_sums() const
    {
        std::vector<double> sums(size_, 0.0);
        for (std::size_t r = 0; r < size_; ++r) {
            sums[r] += std::abs(values_[row_start_[r]]);
            for (std::size_t idx = row_start_[r] + 1; idx < row_start_[r + 1]; ++idx) {
                sums[r] += std::abs(values_[idx]);
                sums[cols_[idx]] += std::abs(values_[idx]);
            }
        }
        return sums;
    }

    /// Induced 1-norm (= infinity norm for symmetric matrices).
    double norm_one() const
    {
        double best = 0.0;
        for (double s : abs_row_sums()) best = std::max(best, s);
        return best;
    }

    /// Gershgorin interval enclosing the spectrum.
    std::pair<double, double> gershgorin() const
    {
        const auto sums = abs_row_sums();
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t r = 0; r < size_; ++r) {
            const double d = diagonal(r);
            const double radius = sums[r] - std::abs(d);
            lo = std::min(lo, d - radius);
            hi = std::max(hi, d + radius);
        }
        return {lo, hi};
    }

    /// Copy with diag_shift[r] added to diagonal entry r.
    SparseSymOperator shifted(std::span<const double> diag_shift) const
    {
        if (diag_shift.size() != size_) {
            throw ContractError("SparseSymOperator: diagonal shift has size " +
                                std::to_string(diag_shift.size()) + ", operator has size " +
                                std::to_string(size_));
        }
        SparseSymOperator out = *this;
        for (std::size_t r = 0; r < size_; ++r) out.values_[row_start_[r]] += diag_shift[r];
        return out;
    }

private:
    void build_lower_index()
    {
        lower_start_.assign(size_ + 1, 0);
        for (std::size_t r = 0; r < size_; ++r) {
            for (std::size_t idx = row_start_[r] + 1; idx < row_start_[r + 1]; ++idx) {
                ++lower_start_[cols_[idx] + 1];
            }
        }
        for (std::size_t r = 0; r < size_; ++r) lower_start_[r + 1] += lower_start_[r];
        lower_cols_.resize(lower_start_[size_]);
        lower_values_.resize(lower_start_[size_]);
        std::vector<std::size_t> fill(lower_start_.begin(), lower_start_.end() - 1);
        // Rows are visited in increasing order, so columns come out sorted.
        for (std::size_t r = 0; r < size_; ++r) {
            for (std::size_t idx = row_start_[r] + 1; idx < row_start_[r + 1]; ++idx) {
                const std::size_t pos = fill[cols_[idx]]++;
                lower_cols_[pos] = r;
                lower_values_[pos] = values_[idx];
            }
        }
    }

    std::size_t size_ = 0;
    std::size_t bandwidth_ = 0;
    std::optional<BoundaryCondition> boundary_;
    std::vector<std::size_t> row_start_{0};
    std::vector<std::size_t> cols_;
    std::vector<double> values_;
    std::vector<std::size_t> lower_start_{0};
    std::vector<std::size_t> lower_cols_;
    std::vector<double> lower_values_;
};

/// Grid values of a potential V on the points of `grid`.
struct PotentialField {
    GridSpec grid;
    std::vector<double> values;
};

/// Second-order central-difference -Δ_h. Neumann mirrors the first interior
/// value into the ghost point (u_{-1} = u_0); Dirichlet reflects it with
/// opposite sign (u_{-1} = -u_0) so the interpolated wall value vanishes.
inline SparseSymOperator build_laplacian(const GridSpec& grid, BoundaryCondition bc,
                                         std::size_t cap = default_grid_cap)
{
    grid.validate(cap);
    const std::size_t n = grid.points_per_side;
    const std::size_t size = grid.size();
    const double inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    const double wall = bc == BoundaryCondition::Dirichlet ? 2.0 : 0.0;

    std::vector<SparseSymOperator::Entry> entries;
    entries.reserve(size * static_cast<std::size_t>(grid.dim + 1));
    for (std::size_t k = 0; k < size; ++k) {
        double diag = 0.0;
        for (int axis = 0; axis < grid.dim; ++axis) {
            const std::size_t stride = grid.stride(axis);
            const std::size_t kj = (k / stride) % n;
            diag += kj > 0 ? 1.0 : wall;
            if (kj + 1 < n) {
                diag += 1.0;
                entries.push_back({k, k + stride, -inv_h2});
            } else {
                diag += wall;
            }
        }
        entries.push_back({k, k, diag * inv_h2});
    }
    return SparseSymOperator(size, std::move(entries), bc);
}

/// H = lap + diag(V).
inline SparseSymOperator assemble_hamiltonian(const SparseSymOperator& lap,
                                              const PotentialField& potential)
{
    if (potential.values.size() != lap.size()) {
        throw ContractError("assemble_hamiltonian: potential has " +
                            std::to_string(potential.values.size()) +
                            " values, operator has size " + std::to_string(lap.size()));
    }
    for (double v : potential.values) {
        if (!std::isfinite(v)) throw ContractError("assemble_hamiltonian: non-finite potential value");
    }
    return lap.shifted(potential.values);
}

/// Lowest eigenvalue d (π/L)^2 of the continuum Dirichlet Laplacian on the box.
inline double continuum_dirichlet_ground_energy(const GridSpec& grid)
{
    const double k = std::numbers::pi / grid.side_length;
    return grid.dim * k * k;
}

/// Closed-form spectrum of the one-dimensional discrete Laplacians above:
/// Dirichlet λ_k = (4/h^2) sin^2(kπ/(2n)), k = 1..n; Neumann the same with k = 0..n-1.
inline double discrete_laplacian_eigenvalue_1d(const GridSpec& grid, BoundaryCondition bc,
                                               std::size_t k)
{
    const double n = static_cast<double>(grid.points_per_side);
    const double mode = bc == BoundaryCondition::Dirichlet ? static_cast<double>(k + 1)
                                                            : static_cast<double>(k);
    const double s = std::sin(mode * std::numbers::pi / (2.0 * n));
    return 4.0 * s * s / (grid.spacing() * grid.spacing());
}

} // namespace lifshitz
