#include <catch_amalgamated.hpp>

#include <cmath>

#include "lifshitz/concentration.hpp"

using namespace lifshitz;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Direct shell-by-shell Σ σ_j^2 up to a large radius.
double direct_sigma_sq(const McDiarmidSpec& spec, std::int64_t upto)
{
    double total = 0.0;
    for (std::int64_t m = 0; m <= upto; ++m) total += shell_count(spec.dim, m) * std::pow(spec.sigma_at(m), 2);
    return total;
}

} // namespace

TEST_CASE("lattice sum supremum", "[concentration]")
{
    // At x = 0: Σ_i (1 + |i|)^-3 = 2 ζ(3) - 1.
    const double zeta3 = 1.2020569031595942;
    const auto s = lattice_abs_sum_sup(EnvelopeProfile::poly_decay(3.0, 1.0, 1.0), 1);
    CHECK(s.value >= 2 * zeta3 - 1 - 1e-12);
    CHECK_THAT(s.value, WithinRel(2 * zeta3 - 1, 1e-6));
    // Unit-cell indicator: Σ_i f(x - i) = 1 off the cell faces.
    CHECK(lattice_abs_sum_sup(EnvelopeProfile::compact_bump(0.5, 2.0), 2).value == 2.0);
}

TEST_CASE("energy functional sigmas", "[concentration]")
{
    const auto law = CouplingLaw::uniform(0.0, 1.0);
    const auto box = EnvelopeProfile::compact_bump(0.5, 1.0);
    const auto spec = sigma_energy_functional(1, 8.0, box, law, 3);
    CHECK(spec.lattice_sum_sup == 1.0);
    CHECK(spec.c_glob == 4.0);
    CHECK(spec.sigma_at(0) == 4.0);
    CHECK(spec.sigma_at(24) == 4.0);
    // |j| = 25 > ML is farther than L/2 + 1/2 from the origin: no overlap with Λ.
    CHECK(spec.sigma_at(25) == 0.0);
    CHECK_THAT(spec.sigma_sq, WithinRel(49.0 * 16.0, 1e-14));

    const auto poly = EnvelopeProfile::poly_decay(3.0, 1.0, 1.0);
    for (int d : {1, 2}) {
        const double alpha = d + 2.0;
        const auto f = EnvelopeProfile::poly_decay(alpha, 1.0, 1.0);
        const auto a = sigma_energy_functional(d, 4.0, f, law);
        const auto b = sigma_energy_functional(d, 8.0, f, law);
        const double ratio = b.sigma_sq / a.sigma_sq;
        CHECK(ratio >= std::pow(2.0, d) * 0.5);
        CHECK(ratio <= std::pow(2.0, d) * 2.0);
        const double direct = direct_sigma_sq(a, d == 1 ? 200000 : 3000);
        CHECK(a.sigma_sq >= direct);
        CHECK_THAT(a.sigma_sq, WithinRel(direct, 1e-6));
    }

    const auto zero = sigma_energy_functional(1, 8.0, poly, CouplingLaw::two_point(1.0, 1.0));
    CHECK(zero.c_glob == 0.0);
    CHECK(zero.sigma_sq == 0.0);
    CHECK(zero.sigma_at(0) == 0.0);
    CHECK_THROWS_AS(sigma_energy_functional(2, 8.0, EnvelopeProfile::poly_decay(1.5, 1, 1), law), ContractError);
    CHECK_THROWS_AS(sigma_energy_functional(1, 8.0, poly, law, 2), ContractError);
}

TEST_CASE("linear minorant sigmas", "[concentration]")
{
    const auto spec = sigma_linear_minorant(1, 8.0, 3.0, 1.0);
    CHECK_THAT(spec.sigma_at(0), WithinRel(2.0 * std::pow(8.0, -3.0), 1e-15));
    const double direct = direct_sigma_sq(spec, 1000000);
    CHECK_THAT(spec.sigma_sq, WithinRel(direct, 1e-9));
    for (int d : {1, 2}) {
        const double alpha = d + 1.5;
        const auto a = sigma_linear_minorant(d, 8.0, alpha, 1.0);
        const auto b = sigma_linear_minorant(d, 16.0, alpha, 1.0);
        const double expected = std::pow(2.0, d - 2 * alpha);
        CHECK(b.sigma_sq / a.sigma_sq > expected / 2);
        CHECK(b.sigma_sq / a.sigma_sq < expected * 2);
    }
    CHECK(sigma_linear_minorant(1, 8.0, 3.0, 0.0).sigma_sq == 0.0);
    CHECK_THROWS_AS(sigma_linear_minorant(2, 8.0, 2.0, 1.0), ContractError);
}

TEST_CASE("McDiarmid bound", "[concentration]")
{
    CHECK(mcdiarmid_bound(3.0, 0.0) == 2.0);
    CHECK_THAT(mcdiarmid_bound(4.0, 2.0), WithinRel(2.0 * std::exp(-2.0), 1e-15));
    CHECK(mcdiarmid_bound(0.0, 0.5) == 0.0);
    CHECK_THROWS_AS(mcdiarmid_bound(1.0, -1.0), ContractError);
    // Sum of n fair bits: σ_j = 1, σ^2 = n. Exact two-sided binomial tail is below the bound.
    for (int n = 1; n <= 20; ++n) {
        for (double lambda = 0.25; lambda < n / 2.0 + 1; lambda += 0.25) {
            double p = 0.0;
            for (int k = 0; k <= n; ++k) {
                if (std::abs(k - n / 2.0) > lambda) p += detail::binomial(n, k) * std::ldexp(1.0, -n);
            }
            CHECK(p <= mcdiarmid_bound(n, lambda) + 1e-15);
        }
    }
}

TEST_CASE("empirical tails", "[concentration]")
{
    const auto f = EnvelopeProfile::poly_decay(3.0, 1.0, 1.0);
    const GridSpec grid{1, 8.0, 32};

    const auto fixed = CouplingLaw::two_point(0.0, 0.5);
    const auto F0 = Functional::energy_integral(fixed, f, grid);
    const auto spec0 = sigma_energy_functional(1, 8.0, f, fixed);
    const std::vector<double> lambdas{1e-9, 0.1, 1.0};
    for (const auto& row : empirical_tail(F0, spec0, 1000, lambdas, 3)) CHECK(row.exceed == 0);

    const auto law = CouplingLaw::uniform(0.0, 1.0);
    const auto F = Functional::energy_integral(law, f, grid);
    const auto spec = sigma_energy_functional(1, 8.0, f, law);
    const auto values = sample_functional(F, 2000, 11);
    const auto grid_l = default_lambda_grid(spec.sigma_sq);
    for (const auto& row : empirical_tail(values, spec.sigma_sq, grid_l)) CHECK(row.within_bound());
    // A tighter σ^2 equal to the sample variance would be violated, so the test has teeth.
    const auto est = mean_estimate(values);
    const std::vector<double> one_sd{0.5 * est.stddev};
    CHECK(empirical_tail(values, 0.01 * est.stddev * est.stddev, one_sd)[0].within_bound() == false);

    const auto G = Functional::linear_minorant(law, 1, 8.0, 3.0);
    const auto gspec = sigma_linear_minorant(1, 8.0, 3.0, 1.0);
    for (const auto& row : empirical_tail(G, gspec, 2000, default_lambda_grid(gspec.sigma_sq), 12)) {
        CHECK(row.within_bound());
    }
    CHECK_THROWS_AS(empirical_tail(std::vector<double>(10, 0.0), 1.0, lambdas), ContractError);
}

TEST_CASE("one-coordinate perturbations", "[concentration]")
{
    const auto law = CouplingLaw::uniform(0.0, 1.0);
    const auto f = EnvelopeProfile::poly_decay(3.0, 1.0, 1.0);
    const GridSpec grid{1, 8.0, 32};
    const auto F = Functional::energy_integral(law, f, grid);
    const auto spec = sigma_energy_functional(1, 8.0, f, law);
    for (std::int64_t j : {0, 3, 5, 24, 30, 300}) {
        const std::int64_t idx[] = {j};
        const auto check = perturb_one_coordinate_check(F, spec, idx, 100, 5);
        CHECK(check.holds);
        CHECK(check.max_difference > 0.0);
        if (j == 0) CHECK(check.sigma == spec.c_glob * spec.l1_norm);
    }
    const auto G = Functional::linear_minorant(law, 1, 8.0, 3.0);
    const auto gspec = sigma_linear_minorant(1, 8.0, 3.0, 1.0);
    for (std::int64_t j : {0, 7, 100}) {
        const std::int64_t idx[] = {j};
        const auto check = perturb_one_coordinate_check(G, gspec, idx, 100, 6);
        CHECK(check.holds);
        CHECK_THAT(check.max_difference, WithinRel(check.sigma / 2, 1e-12));
    }

    const auto null = CouplingLaw::two_point(1.0, 1.0);
    const auto Z = Functional::energy_integral(null, f, grid);
    const auto zspec = sigma_energy_functional(1, 8.0, f, null);
    const std::int64_t origin[] = {0};
    const auto z = perturb_one_coordinate_check(Z, zspec, origin, 100, 1);
    CHECK(z.max_difference == 0.0);
    CHECK(z.sigma == 0.0);
    CHECK(z.holds);

    // A deliberately wrong σ produces a failing report with a witness.
    auto bad = spec;
    bad.c_glob *= 1e-3;
    const auto fail = perturb_one_coordinate_check(F, bad, origin, 100, 5);
    CHECK_FALSE(fail.holds);
    CHECK(std::abs(fail.witness_high - fail.witness_low) == fail.max_difference);
    const std::int64_t far[] = {F.radius() + 1};
    CHECK_THROWS_AS(perturb_one_coordinate_check(F, spec, far, 100, 5), ContractError);
}

TEST_CASE("truncation convergence", "[concentration]")
{
    const auto law = CouplingLaw::uniform(0.0, 1.0);
    const GridSpec grid{1, 8.0, 32};

    const auto box = EnvelopeProfile::compact_bump(0.5, 1.0);
    const auto B = Functional::energy_integral(law, box, grid, 1e-8, 20);
    const auto bspec = sigma_energy_functional(1, 8.0, box, law);
    const std::vector<std::int64_t> box_radii{2, 4, 5, 8, 20};
    const auto brows = truncation_convergence(B, bspec, box_radii, 20, 3);
    CHECK(brows[0].observed > 0.0);
    for (std::size_t k = 2; k < brows.size(); ++k) CHECK(brows[k].observed == 0.0);

    const auto f = EnvelopeProfile::poly_decay(3.0, 1.0, 1.0);
    const auto E = Functional::energy_integral(law, f, grid, 1e-8, 4096);
    const auto espec = sigma_energy_functional(1, 8.0, f, law);
    const std::vector<std::int64_t> radii{32, 64, 128, 256, 512, 1024, 4096};
    const auto rows = truncation_convergence(E, espec, radii, 5, 4);
    for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
        CHECK(rows[k].observed <= rows[k].remainder);
        CHECK(rows[k + 1].remainder <= 0.5 * rows[k].remainder);
    }

    const auto G = Functional::linear_minorant(law, 1, 8.0, 3.0, 1e-8, 32768);
    const auto gspec = sigma_linear_minorant(1, 8.0, 3.0, 1.0);
    const std::vector<std::int64_t> gradii{16, 256, 4096, 32768};
    const auto grows = truncation_convergence(G, gspec, gradii, 5, 5);
    for (const auto& row : grows) CHECK(row.observed <= row.remainder);
    CHECK(grows.back().remainder < 1e-8);
}
