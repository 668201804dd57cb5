#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "lifshitz/lattice.hpp"
#include "lifshitz/lattice_sums.hpp"
#include "lifshitz/spectral.hpp"

using namespace lifshitz;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Dense 1D stencil written out by hand, used to assemble d-dim operators as
// Kronecker sums.
Eigen::MatrixXd stencil_1d(std::size_t n, double h, bool dirichlet)
{
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        a(k, k) = 2.0;
        if (i + 1 < n) a(k, k + 1) = a(k + 1, k) = -1.0;
    }
    const double end = dirichlet ? 3.0 : 1.0;
    a(0, 0) = end;
    a(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(n - 1)) = end;
    return a / (h * h);
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Eigen::MatrixXd kronecker_laplacian(const GridSpec& g, bool dirichlet)
{
    const auto one = stencil_1d(g.points_per_side, g.spacing(), dirichlet);
    const auto id = Eigen::MatrixXd::Identity(one.rows(), one.cols());
    Eigen::MatrixXd total = one;
    for (int j = 1; j < g.dim; ++j) {
        Eigen::MatrixXd eye_big = Eigen::MatrixXd::Identity(total.rows(), total.cols());
        total = kron(total, id) + kron(eye_big, one);
    }
    return total;
}

double dense_min(const Eigen::MatrixXd& m)
{
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

} // namespace

TEST_CASE("grid geometry", "[lattice]")
{
    GridSpec g{2, 4.0, 8};
    CHECK(g.spacing() == 0.5);
    CHECK(g.size() == 64);
    CHECK(g.stride(0) == 8);
    CHECK(g.stride(1) == 1);
    CHECK_THAT(g.coordinate(0), WithinAbs(-1.75, 1e-15));
    CHECK_THAT(g.coordinate(7), WithinAbs(1.75, 1e-15));
    CHECK_THROWS_AS((GridSpec{1, 1.0, 1}.validate()), ContractError);
    CHECK_THROWS_AS((GridSpec{0, 1.0, 4}.validate()), ContractError);
    CHECK_THROWS_AS((GridSpec{3, 1.0, 512}.validate()), ResourceError);
    CHECK_THROWS_AS(build_laplacian(GridSpec{2, 1.0, 64}, BoundaryCondition::Neumann, 1000), ResourceError);
}

TEST_CASE("laplacian matches the Kronecker-sum stencil", "[lattice]")
{
    for (int d : {1, 2, 3}) {
        for (bool dir : {true, false}) {
            GridSpec g{d, 2.5, 5};
            const auto op = build_laplacian(g, dir ? BoundaryCondition::Dirichlet : BoundaryCondition::Neumann);
            const auto expected = kronecker_laplacian(g, dir);
            CHECK((to_dense(op) - expected).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("n = 3 examples", "[lattice]")
{
    GridSpec g{1, 1.0, 3};
    const auto neu = build_laplacian(g, BoundaryCondition::Neumann);
    const auto y = neu.apply(std::vector<double>(3, 1.0));
    for (double v : y) CHECK(v == 0.0);

    const auto dir = build_laplacian(g, BoundaryCondition::Dirichlet);
    const double lambda1 = dense_min(to_dense(dir));
    CHECK_THAT(lambda1, WithinRel(4.0 * 9.0 * std::pow(std::sin(std::numbers::pi / 6.0), 2), 1e-12));
}

TEST_CASE("2D stencil structure", "[lattice]")
{
    GridSpec g{2, 1.0, 4};
    const auto dense = to_dense(build_laplacian(g, BoundaryCondition::Neumann));
    CHECK(dense.rows() == 16);
    for (std::size_t i = 1; i < 3; ++i) {
        for (std::size_t j = 1; j < 3; ++j) {
            const auto row = static_cast<Eigen::Index>(i * 4 + j);
            CHECK((dense.row(row).array() != 0.0).count() == 5);
        }
    }
}

TEST_CASE("symmetry and positive semidefiniteness", "[lattice]")
{
    std::mt19937_64 gen(7);
    std::normal_distribution<double> normal;
    for (int d : {1, 2, 3}) {
        for (auto bc : {BoundaryCondition::Dirichlet, BoundaryCondition::Neumann}) {
            GridSpec g{d, 3.0, d == 3 ? 6u : 10u};
            const auto op = build_laplacian(g, bc);
            for (int trial = 0; trial < 100; ++trial) {
                std::vector<double> v(op.size()), w(op.size());
                for (auto& x : v) x = normal(gen);
                for (auto& x : w) x = normal(gen);
                const auto av = op.apply(v);
                const auto aw = op.apply(w);
                double vav = 0, avw = 0, vaw = 0, vv = 0;
                for (std::size_t i = 0; i < v.size(); ++i) {
                    vav += av[i] * v[i];
                    avw += av[i] * w[i];
                    vaw += v[i] * aw[i];
                    vv += v[i] * v[i];
                }
                CHECK(vav >= -1e-12 * vv);
                CHECK_THAT(avw, WithinAbs(vaw, 1e-10 * (std::abs(avw) + 1.0)));
            }
        }
    }
}

TEST_CASE("closed-form 1D spectra", "[lattice]")
{
    for (std::size_t n : {3u, 10u, 17u}) {
        GridSpec g{1, 2.0, n};
        for (auto bc : {BoundaryCondition::Dirichlet, BoundaryCondition::Neumann}) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_dense(build_laplacian(g, bc)));
            for (std::size_t k = 0; k < n; ++k) {
                CHECK_THAT(es.eigenvalues()(static_cast<Eigen::Index>(k)),
                           WithinAbs(discrete_laplacian_eigenvalue_1d(g, bc, k), 1e-9));
            }
        }
    }
}

TEST_CASE("Dirichlet ground energy converges at second order", "[lattice]")
{
    for (int d : {1, 2}) {
        GridSpec coarse{d, 1.0, 16};
        GridSpec fine{d, 1.0, 32};
        const double exact = continuum_dirichlet_ground_energy(coarse);
        const double e1 = lowest_eigenpairs(build_laplacian(coarse, BoundaryCondition::Dirichlet), 1)[0].value;
        const double e2 = lowest_eigenpairs(build_laplacian(fine, BoundaryCondition::Dirichlet), 1)[0].value;
        const double ratio = std::abs(e1 - exact) / std::abs(e2 - exact);
        CHECK(ratio > 3.5);
        CHECK(ratio < 4.5);
    }
}

TEST_CASE("Neumann ground state is the constant vector", "[lattice]")
{
    GridSpec g{2, 4.0, 12};
    const auto pairs = lowest_eigenpairs(build_laplacian(g, BoundaryCondition::Neumann), 1);
    CHECK(std::abs(pairs[0].value) < 1e-10);
    const double c = 1.0 / std::sqrt(static_cast<double>(g.size()));
    for (double x : pairs[0].vector) CHECK_THAT(x, WithinAbs(c, 1e-9));
}

TEST_CASE("continuum Dirichlet ground energy", "[lattice]")
{
    const double pi2 = std::numbers::pi * std::numbers::pi;
    CHECK_THAT(continuum_dirichlet_ground_energy(GridSpec{1, 1.0, 4}), WithinRel(pi2, 1e-15));
    CHECK_THAT(continuum_dirichlet_ground_energy(GridSpec{2, 1.0, 4}), WithinRel(2 * pi2, 1e-15));
    CHECK_THAT(continuum_dirichlet_ground_energy(GridSpec{1, 2.0, 4}), WithinRel(pi2 / 4, 1e-15));
}

TEST_CASE("assemble_hamiltonian", "[lattice]")
{
    GridSpec g{1, 2.0, 8};
    const auto lap = build_laplacian(g, BoundaryCondition::Dirichlet);

    PotentialField zero{g, std::vector<double>(8, 0.0)};
    CHECK((to_dense(assemble_hamiltonian(lap, zero)) - to_dense(lap)).norm() == 0.0);

    PotentialField constant{g, std::vector<double>(8, 2.5)};
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> a(to_dense(lap));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> b(to_dense(assemble_hamiltonian(lap, constant)));
    CHECK((b.eigenvalues() - a.eigenvalues() - Eigen::VectorXd::Constant(8, 2.5)).cwiseAbs().maxCoeff() < 1e-10);

    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        PotentialField v{g, std::vector<double>(8)};
        for (auto& x : v.values) x = u(gen);
        Eigen::MatrixXd expected = to_dense(lap);
        for (int i = 0; i < 8; ++i) expected(i, i) += v.values[static_cast<std::size_t>(i)];
        const auto h = assemble_hamiltonian(lap, v);
        CHECK((to_dense(h) - expected).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(dense_min(expected) >= dense_min(to_dense(lap)) - 1e-12);
    }

    PotentialField wrong{g, std::vector<double>(7, 0.0)};
    CHECK_THROWS_AS(assemble_hamiltonian(lap, wrong), ContractError);
    PotentialField nan{g, std::vector<double>(8, std::nan(""))};
    CHECK_THROWS_AS(assemble_hamiltonian(lap, nan), ContractError);
}

TEST_CASE("sup-norm shell sums", "[lattice]")
{
    // Brute-force shell counts.
    for (int d : {1, 2, 3}) {
        for (int m = 0; m <= 4; ++m) {
            int count = 0;
            const int side = 2 * m + 1;
            int total = 1;
            for (int j = 0; j < d; ++j) total *= side;
            for (int idx = 0; idx < total; ++idx) {
                int rem = idx, norm = 0;
                for (int j = 0; j < d; ++j) {
                    norm = std::max(norm, std::abs(rem % side - m));
                    rem /= side;
                }
                count += norm == m;
            }
            CHECK(shell_count(d, m) == count);
        }
    }
    // Tail against a long explicit sum plus a loose remainder bound.
    for (int d : {1, 2}) {
        const double power = d + 2.0;
        double direct = 0.0;
        for (int m = 6; m <= 400000; ++m) direct += shell_count(d, m) * std::pow(m + 0.5, -power);
        const double tail = shell_power_tail(d, 5, 0.5, power);
        CHECK(tail >= direct);
        CHECK_THAT(tail, WithinRel(direct, 1e-4));
    }
    CHECK_THROWS_AS(shell_power_tail(2, 3, 0.0, 2.0), ContractError);
}
