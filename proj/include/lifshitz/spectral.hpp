#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lifshitz/banded_ldlt.hpp"
#include "lifshitz/lattice.hpp"
#include "lifshitz/rng.hpp"

namespace lifshitz {

struct SolverOptions {
    /// Eigenpairs are accepted once ||H v - λ v|| <= tolerance * ||H||_1.
    double tolerance = 1e-10;
    /// Operators up to this size are diagonalized densely.
    std::size_t dense_threshold = 2048;
    std::size_t max_iterations = 600;
    std::uint64_t seed = 0x5eed5eedULL;
    bool force_lanczos = false;
    /// Relative pivot threshold (times ||H||_1) below which a factorization breaks down.
    double pivot_tolerance = 1e-14;
    int max_jitters = 3;
    /// Relative size (times max(|E|, ||H||_1)) of the first shift jitter.
    double jitter = 1e-12;
};

struct SpectralCount {
    double energy = 0.0;
    std::size_t count = 0;
    std::optional<BoundaryCondition> bc;
    /// Shift actually factorized minus the requested energy (0 when no retry was needed).
    double jitter_used = 0.0;
    int retries = 0;
};

struct EigenPair {
    double value = 0.0;
    std::vector<double> vector;
    double residual = 0.0;
};

inline Eigen::MatrixXd to_dense(const SparseSymOperator& op)
{
    const auto n = static_cast<Eigen::Index>(op.size());
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : op.entries()) {
        const auto r = static_cast<Eigen::Index>(e.row);
        const auto c = static_cast<Eigen::Index>(e.col);
        dense(r, c) = e.value;
        dense(c, r) = e.value;
    }
    return dense;
}

/// #{λ_k <= energy} from the inertia of the LDL^T factorization of op - energy I.
/// A pivot below the breakdown threshold means energy sits (numerically) on an
/// eigenvalue; the shift is then nudged upward, doubling each time.
inline SpectralCount count_below(const SparseSymOperator& op, double energy,
                                 const SolverOptions& opts = {})
{
    if (!std::isfinite(energy)) throw ContractError("count_below: energy must be finite");
    const double norm = std::max(op.norm_one(), std::numeric_limits<double>::min());
    const double tol = opts.pivot_tolerance * norm;
    const double step = opts.jitter * std::max(std::abs(energy), norm);

    SpectralCount result;
    result.energy = energy;
    result.bc = op.boundary();
    for (int attempt = 0; attempt <= opts.max_jitters; ++attempt) {
        const double jitter = attempt == 0 ? 0.0 : step * std::ldexp(1.0, attempt - 1);
        BandedLdlt ldlt(op, energy + jitter, tol, false);
        if (ldlt.status().ok) {
            result.count = ldlt.status().negative_pivots;
            result.jitter_used = jitter;
            result.retries = attempt;
            return result;
        }
    }
    throw NumericError("count_below: pivot breakdown at E = " + std::to_string(energy) +
                       " persisted after " + std::to_string(opts.max_jitters) + " jitters");
}

namespace detail {

inline double residual_norm(const SparseSymOperator& op, const std::vector<double>& v,
                            double lambda)
{
    const auto hv = op.apply(v);
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = hv[i] - lambda * v[i];
        acc += r * r;
    }
    return std::sqrt(acc);
}

// Deterministic sign: the entry of largest magnitude is positive.
inline void fix_sign(std::vector<double>& v)
{
    if (v.empty()) return;
    const auto it = std::max_element(v.begin(), v.end(),
                                     [](double a, double b) { return std::abs(a) < std::abs(b); });
    if (*it < 0.0) {
        for (double& x : v) x = -x;
    }
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b)
{
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline std::vector<EigenPair> dense_lowest(const SparseSymOperator& op, std::size_t k)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(to_dense(op));
    if (solver.info() != Eigen::Success) {
        throw NumericError("lowest_eigenpairs: dense eigensolver failed");
    }
    std::vector<EigenPair> pairs;
    for (std::size_t i = 0; i < k; ++i) {
        EigenPair p;
        p.value = solver.eigenvalues()(static_cast<Eigen::Index>(i));
        const auto col = solver.eigenvectors().col(static_cast<Eigen::Index>(i));
        p.vector.assign(col.data(), col.data() + col.size());
        fix_sign(p.vector);
        p.residual = residual_norm(op, p.vector, p.value);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// Shift-invert Lanczos with full reorthogonalization. The Krylov basis of
// (H - σ I)^{-1}, σ strictly below the Gershgorin bound, is orthogonalized twice
// against every previous vector; the projected matrix is kept in full so that a
// fresh random direction can be appended after an invariant subspace is found.
inline std::vector<EigenPair> lanczos_lowest(const SparseSymOperator& op, std::size_t k,
                                             const SolverOptions& opts)
{
    const std::size_t n = op.size();
    const double norm = std::max(op.norm_one(), 1e-300);
    const double sigma = op.gershgorin().first - 1e-3 * norm;
    BandedLdlt ldlt(op, sigma, opts.pivot_tolerance * norm, true);
    if (!ldlt.status().ok) throw NumericError("lowest_eigenpairs: shifted factorization failed");

    Rng rng(opts.seed);
    std::vector<std::vector<double>> basis;
    const std::size_t max_basis = std::min(n, opts.max_iterations);
    Eigen::MatrixXd projected = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(max_basis),
                                                      static_cast<Eigen::Index>(max_basis));

    auto orthogonalize = [&](std::vector<double>& w, Eigen::VectorXd* coeffs) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < basis.size(); ++j) {
                const double c = dot(basis[j], w);
                for (std::size_t i = 0; i < n; ++i) w[i] -= c * basis[j][i];
                if (coeffs) (*coeffs)(static_cast<Eigen::Index>(j)) += c;
            }
        }
        return std::sqrt(dot(w, w));
    };
    auto random_direction = [&]() {
        std::vector<double> v(n);
        for (double& x : v) x = rng.uniform() - 0.5;
        return v;
    };

    std::vector<double> next = random_direction();
    double beta = orthogonalize(next, nullptr);
    double scale = beta; // magnitude against which a vanishing residual is judged
    double best_residual = std::numeric_limits<double>::infinity();
    std::vector<EigenPair> best;

    while (basis.size() < max_basis) {
        if (!(beta > 1e-10 * scale)) {
            // Invariant subspace: restart with a fresh orthogonal direction.
            next = random_direction();
            scale = std::sqrt(dot(next, next));
            beta = orthogonalize(next, nullptr);
            if (!(beta > 1e-10 * scale)) break;
        }
        for (double& x : next) x /= beta;
        basis.push_back(next);

        std::vector<double> w = basis.back();
        ldlt.solve(w);
        const auto m = static_cast<Eigen::Index>(basis.size());
        Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(m);
        scale = std::sqrt(dot(w, w));
        beta = orthogonalize(w, &coeffs);
        // Column m-1 of Q^T A Q; zero above the subdiagonal up to round-off,
        // except after a restart.
        for (Eigen::Index j = 0; j < m; ++j) {
            projected(j, m - 1) = coeffs(j);
            projected(m - 1, j) = coeffs(j);
        }
        next = std::move(w);

        const bool exhausted = basis.size() == max_basis || basis.size() == n;
        if (basis.size() < k || (basis.size() % 4 != 0 && !exhausted)) continue;

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(projected.topLeftCorner(m, m));
        // The largest eigenvalues θ of the inverse map belong to the smallest λ = σ + 1/θ.
        std::vector<EigenPair> pairs;
        double worst = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const Eigen::Index col = m - 1 - static_cast<Eigen::Index>(i);
            EigenPair p;
            p.vector.assign(n, 0.0);
            for (Eigen::Index j = 0; j < m; ++j) {
                const double c = small.eigenvectors()(j, col);
                const auto& q = basis[static_cast<std::size_t>(j)];
                for (std::size_t r = 0; r < n; ++r) p.vector[r] += c * q[r];
            }
            const double vn = std::sqrt(dot(p.vector, p.vector));
            for (double& x : p.vector) x /= vn;
            // Rayleigh quotient refinement.
            const auto hv = op.apply(p.vector);
            p.value = dot(hv, p.vector);
            p.residual = residual_norm(op, p.vector, p.value);
            worst = std::max(worst, p.residual);
            fix_sign(p.vector);
            pairs.push_back(std::move(p));
        }
        if (worst < best_residual) {
            best_residual = worst;
            best = pairs;
        }
        if (worst <= opts.tolerance * norm) {
            // Confirm no eigenvalue below the k-th Ritz value was missed.
            const double top = pairs.back().value;
            const auto below = count_below(op, top + 1e-8 * norm, opts).count;
            if (below <= k || exhausted) {
                std::sort(pairs.begin(), pairs.end(),
                          [](const EigenPair& a, const EigenPair& b) { return a.value < b.value; });
                return pairs;
            }
            // A multiple eigenvalue was missed; append a random direction.
            beta = 0.0;
        }
        if (exhausted) break;
    }
    throw NumericError("lowest_eigenpairs: Lanczos did not converge, best residual " +
                       std::to_string(best_residual) + " (tolerance " +
                       std::to_string(opts.tolerance * norm) + ")");
}

} // namespace detail

/// The k smallest eigenpairs, ascending. Dense diagonalization at or below
/// opts.dense_threshold, shift-invert Lanczos above it.
inline std::vector<EigenPair> lowest_eigenpairs(const SparseSymOperator& op, std::size_t k,
                                                const SolverOptions& opts = {})
{
    if (k < 1 || k > op.size()) {
        throw ContractError("lowest_eigenpairs: k must be in [1, " + std::to_string(op.size()) + "]");
    }
    if (op.size() <= opts.dense_threshold && !opts.force_lanczos) {
        return detail::dense_lowest(op, k);
    }
    return detail::lanczos_lowest(op, k, opts);
}

/// Whether λ_1(H) >= min V - tol for H = -Δ^N + diag(V). Always true for the
/// discrete operator because -Δ_h^N is positive semidefinite.
inline bool neumann_floor_check(const SparseSymOperator& hamiltonian,
                                const PotentialField& potential, const SolverOptions& opts = {})
{
    if (potential.values.empty()) throw ContractError("neumann_floor_check: empty potential");
    const double floor = *std::min_element(potential.values.begin(), potential.values.end());
    const double lambda1 = lowest_eigenpairs(hamiltonian, 1, opts).front().value;
    const double tol = std::max(opts.tolerance, 1e-12) * hamiltonian.norm_one();
    return lambda1 >= floor - tol;
}

} // namespace lifshitz
