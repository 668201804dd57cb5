#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "lifshitz/perturbation.hpp"

using namespace lifshitz;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

PotentialField sample_potential(double L, std::size_t n, std::uint64_t seed)
{
    const GridSpec g{1, L, n};
    const auto law = CouplingLaw::uniform(0.0, 1.0);
    const auto f = EnvelopeProfile::poly_decay(3.0, 1.0, 1.0);
    const auto plan = plan_truncation(1.0, f, g);
    return squared_potential(sample_couplings(law, 1, plan.radius, seed), f, g);
}

// λ_1 of -Δ^N + tV from an independently assembled dense matrix.
double dense_path_energy(const PotentialField& v, double t)
{
    const auto n = static_cast<Eigen::Index>(v.values.size());
    const double h = v.grid.spacing();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        a(i, i) = (i == 0 || i == n - 1 ? 1.0 : 2.0) / (h * h) + t * v.values[static_cast<std::size_t>(i)];
        if (i + 1 < n) a(i, i + 1) = a(i + 1, i) = -1.0 / (h * h);
    }
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

} // namespace

TEST_CASE("eigen path examples", "[perturbation]")
{
    const GridSpec g{1, 8.0, 32};
    const auto grid = linear_t_grid(1.0, 8);
    const auto zero = eigen_path(PotentialField{g, std::vector<double>(32, 0.0)}, grid);
    for (double e : zero.energies) CHECK(std::abs(e) < 1e-10);

    const auto flat = eigen_path(PotentialField{g, std::vector<double>(32, 0.7)}, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK_THAT(flat.energies[k], WithinAbs(0.7 * grid[k], 1e-10));
    CHECK(remainder_constant(flat).fitted_c2 < 1e-10);

    const auto v = sample_potential(8.0, 32, 4);
    std::vector<double> t{0.0, 0.01, 0.05, 0.1, 0.3, 0.6, 1.0};
    const auto path = eigen_path(v, t);
    CHECK(std::abs(path.energies[0]) < 1e-10);
    for (std::size_t k = 0; k < t.size(); ++k) {
        CHECK_THAT(path.energies[k], WithinAbs(dense_path_energy(v, t[k]), 1e-10));
        CHECK(path.energies[k] <= t[k] * path.hf_derivative + 1e-12);
        if (k > 0) CHECK(path.energies[k] >= path.energies[k - 1]);
    }
    const std::vector<double> bad{0.5, 0.2};
    CHECK_THROWS_AS(eigen_path(v, bad), ContractError);
    const std::vector<double> big{0.5, 2.0};
    CHECK_THROWS_AS(eigen_path(v, big), ContractError);
}

TEST_CASE("Hellmann-Feynman derivative", "[perturbation]")
{
    const GridSpec g{1, 4.0, 16};
    CHECK(hellmann_feynman_derivative(PotentialField{g, std::vector<double>(16, 2.5)}) == 2.5);
    PotentialField half{g, std::vector<double>(16, 0.0)};
    for (std::size_t k = 0; k < 8; ++k) half.values[k] = 2.0;
    CHECK(hellmann_feynman_derivative(half) == 1.0);

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto v = sample_potential(16.0, 128, seed);
        const double vmax = *std::max_element(v.values.begin(), v.values.end());
        const double delta = 1e-5 / vmax;
        const double e0 = dense_path_energy(v, 0.0);
        const double e1 = dense_path_energy(v, delta);
        const double e2 = dense_path_energy(v, 2 * delta);
        const double fd = (-3 * e0 + 4 * e1 - e2) / (2 * delta);
        CHECK_THAT(hellmann_feynman_derivative(v), WithinRel(fd, 1e-5));
    }
}

TEST_CASE("remainder constant across L", "[perturbation]")
{
    // Per-sample ratios are dominated by the lowest Fourier mode of V and are
    // noisy, so the constant is the maximum over a few samples.
    std::vector<double> ratios;
    for (double L : {8.0, 16.0}) {
        double worst = 0.0;
        for (std::uint64_t s = 0; s < 6; ++s) {
            const auto v = sample_potential(L, static_cast<std::size_t>(4 * L), sample_seed(9, s));
            if (s == 0) {
                const auto knee = measure_window(v);
                CHECK(knee.resolved);
                CHECK(knee.c1 >= 0.25);
            }
            const auto fit = remainder_constant(eigen_path(v, linear_t_grid(1.0 / (L * L), 12)));
            CHECK(fit.max_ratio > 0.0);
            CHECK(fit.max_ratio >= fit.fitted_c2 * 0.5);
            worst = std::max(worst, fit.max_ratio);
        }
        ratios.push_back(worst);
    }
    UNSCOPED_INFO("L=8: " << ratios[0] << "  L=16: " << ratios[1]);
    CHECK(ratios[1] <= 4.0 * ratios[0]);
}

TEST_CASE("mean derivative does not depend on L", "[perturbation]")
{
    std::vector<MeanEstimate> est;
    for (double L : {8.0, 16.0}) {
        std::vector<double> xs(400);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            xs[i] = hellmann_feynman_derivative(sample_potential(L, static_cast<std::size_t>(4 * L), sample_seed(7, i)));
        }
        est.push_back(mean_estimate(xs));
    }
    const double se = std::hypot(est[0].standard_error, est[1].standard_error);
    CHECK(std::abs(est[0].mean - est[1].mean) < 3 * se);
}

TEST_CASE("small eigenvalue probability", "[perturbation]")
{
    const auto f = EnvelopeProfile::poly_decay(3.0, 1.0, 1.0);
    const GridSpec g{1, 16.0, 64};
    const auto law = CouplingLaw::uniform(0.0, 1.0);
    const auto constants = measure_stollmann_constants(law, f, g, 4, 3);
    CHECK(constants.c1 > 0.0);
    CHECK(constants.c2 > 0.0);
    CHECK(constants.max_b() == constants.c1 * constants.c1 * constants.c2);

    const double b = 0.5 * constants.max_b();
    const auto rep = small_eigenvalue_probability(law, f, g, b, constants, 200, 5);
    CHECK(rep.holds);
    CHECK_THAT(rep.t, WithinRel(std::sqrt(b / constants.c2) / 256.0, 1e-12));
    CHECK(rep.t <= constants.c1 / 256.0 * (1 + 1e-12));
    const auto tiny = small_eigenvalue_probability(law, f, g, 1e-6, constants, 200, 5);
    CHECK(tiny.lhs == 0.0);
    CHECK(tiny.lhs <= rep.lhs);
    CHECK_THROWS_AS(small_eigenvalue_probability(law, f, g, 2 * constants.max_b(), constants, 10, 1), ContractError);

    const auto point = CouplingLaw::two_point(0.0, 1.0);
    const auto prep = small_eigenvalue_probability(point, f, g, 1e-3 * constants.max_b(), constants, 20, 1);
    CHECK(prep.rhs == 0.0);
    CHECK(prep.lhs == 0.0);
    CHECK(prep.holds);
}

TEST_CASE("Neumann gap report", "[perturbation]")
{
    const GridSpec g{1, 16.0, 128};
    const auto gap = neumann_gap(g);
    const double h = g.spacing();
    CHECK_THAT(gap.discrete, WithinRel(4.0 / (h * h) * std::pow(std::sin(std::numbers::pi / 256.0), 2), 1e-9));
    CHECK_THAT(gap.continuum, WithinRel(std::pow(std::numbers::pi / 16.0, 2), 1e-15));
    CHECK_THAT(gap.pi_over_l2, WithinRel(std::numbers::pi / 256.0, 1e-15));
    CHECK(std::abs(gap.discrete - gap.continuum) < 1e-3 * gap.continuum);
}
