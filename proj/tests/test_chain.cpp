// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "nmqs/chain.hpp"
#include "nmqs/exact.hpp"

using namespace nmqs;

namespace {

SpectralDensity flat_weight() { return SpectralDensity::tabulated({0.0, 1.0}, {1.0, 1.0}); }

}  // namespace

TEST_CASE("recurrence coefficients of the flat weight") {
    const auto coeffs = recurrence_coefficients(flat_weight(), 21);
    CHECK(coeffs.betas[0] == doctest::Approx(1.0).epsilon(1e-12));
    for (int n = 0; n <= 20; ++n) CHECK(std::abs(coeffs.alphas[n] - 0.5) < 1e-12);
    for (int n = 1; n <= 20; ++n) {
        const double expect = n * n / (4.0 * (4.0 * n * n - 1.0));  // shifted-Legendre
        CHECK(std::abs(coeffs.betas[n] - expect) < 1e-10);
    }
    // pi_1(w) = w - alpha_0 from the monic seed pi_{-1} = 0, pi_0 = 1
    CHECK(0.3 - coeffs.alphas[0] == doctest::Approx(-0.2));
}

TEST_CASE("recurrence positivity guard") {
    CHECK_THROWS_AS(recurrence_coefficients(flat_weight(), 0), std::invalid_argument);
}

TEST_CASE("orthogonality of the generated polynomials") {
    for (const auto& j : {flat_weight(), SpectralDensity::ohmic(1.0, 1.0, 1.0)}) {
        const auto coeffs = recurrence_coefficients(j, 12);
        CHECK(orthogonality_defect(j, coeffs, 8) < 1e-8);
    }
}

TEST_CASE("Gauss discretization") {
    SUBCASE("one-point rule sits at the first moment") {
        const auto coeffs = recurrence_coefficients(flat_weight(), 1);
        const auto star = gauss_discretize(coeffs);
        CHECK(star.nodes[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(star.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("weights sum to the zeroth moment") {
        for (const auto& j : {flat_weight(), SpectralDensity::ohmic(1.0, 0.7, 1.3)}) {
            const auto star = gauss_discretize(recurrence_coefficients(j, 24));
            double sum = 0.0;
            for (double w : star.weights) sum += w;
            const double moment = spectral_moment(j, 0);
            CHECK(std::abs(sum - moment) < 1e-10 * moment);
        }
    }

    SUBCASE("moment exactness to degree 2N-1, flat weight, N = 10") {
        const auto star = gauss_discretize(recurrence_coefficients(flat_weight(), 10));
        for (int k = 0; k <= 19; ++k) {
            double s = 0.0;
            for (int p = 0; p < star.order(); ++p)
                s += star.weights[p] * std::pow(star.nodes[p], k);
            CHECK(std::abs(s - 1.0 / (k + 1)) < 1e-8 / (k + 1));
        }
    }

    SUBCASE("nodes interlace between consecutive orders") {
        const auto j = SpectralDensity::ohmic(1.0, 1.0, 1.0);
        const auto a = gauss_discretize(recurrence_coefficients(j, 8));
        const auto b = gauss_discretize(recurrence_coefficients(j, 9));
        for (int i = 0; i < 8; ++i) {
            CHECK(b.nodes[i] < a.nodes[i]);
            CHECK(a.nodes[i] < b.nodes[i + 1]);
        }
    }

    SUBCASE("nodes strictly increasing, weights positive") {
        const auto star = gauss_discretize(recurrence_coefficients(flat_weight(), 16));
        for (int i = 0; i < star.order(); ++i) {
            CHECK(star.weights[i] > 0.0);
            if (i > 0) CHECK(star.nodes[i] > star.nodes[i - 1]);
        }
    }
}

TEST_CASE("star-to-chain constants") {
    const auto coeffs = recurrence_coefficients(flat_weight(), 60);
    const auto chain = star_to_chain(coeffs);
    CHECK(chain.sys_coupling == doctest::Approx(1.0).epsilon(1e-12));
    for (double e : chain.energies) CHECK(e == doctest::Approx(0.5).epsilon(1e-10));
    // beta_n -> 1/16, so hoppings approach 1/4
    CHECK(std::abs(chain.hoppings[49] - 0.25) < 1e-3);
}

TEST_CASE("one-excitation propagation") {
    SUBCASE("zero coupling keeps |A| = 1") {
        ChainHamiltonian chain;
        chain.sys_coupling = 0.0;
        chain.energies = {0.4, 0.6, 0.5};
        chain.hoppings = {0.2, 0.2};
        const auto res = chain_propagate_one_excitation(1.0, chain, 3, TimeGrid(0.0, 0.1, 50));
        for (const auto& a : res.amplitude) CHECK(std::abs(std::abs(a) - 1.0) < 1e-12);
    }

    SUBCASE("star and chain forms are unitarily equivalent") {
        const auto coeffs = recurrence_coefficients(flat_weight(), 40);
        const auto star = gauss_discretize(coeffs);
        const auto chain = star_to_chain(coeffs);
        const TimeGrid grid(0.0, 0.25, 80);
        const auto a_star = star_propagate_one_excitation(0.5, star, grid);
        const auto a_chain = chain_propagate_one_excitation(0.5, chain, 40, grid);
        for (int k = 0; k < grid.size(); ++k)
            CHECK(std::abs(a_star.amplitude[k] - a_chain.amplitude[k]) < 1e-10);
    }

    SUBCASE("boundary-return detector reports a recurrence time") {
        const auto coeffs = recurrence_coefficients(flat_weight(), 8);
        const auto chain = star_to_chain(coeffs);
        const auto res = chain_propagate_one_excitation(0.5, chain, 8, TimeGrid(0.0, 0.5, 400));
        CHECK(res.recurrence_time > 0.0);
    }
}

TEST_CASE("chain dynamics vs Volterra oracle for a Lorentzian-like weight") {
    // tabulated Lorentzian centered well inside the support
    const double gamma = 1.0, w0 = 30.0, g2 = 0.5;  // int J ~ g2
    std::vector<double> ws, js;
    for (int k = 0; k <= 6000; ++k) {
        const double w = 60.0 * k / 6000.0;
        ws.push_back(w);
        js.push_back(g2 * gamma / M_PI / ((w - w0) * (w - w0) + gamma * gamma));
    }
    const auto j = SpectralDensity::tabulated(ws, js);

    const auto chain = star_to_chain(recurrence_coefficients(j, 200));
    const TimeGrid grid(0.0, 8.0 / gamma / 800, 800);
    const auto res = chain_propagate_one_excitation(w0, chain, 200, grid);

    // rotating-frame kernel for the Volterra solver from the same J
    std::vector<Complex> kernel_tab(2 * grid.n_steps + 1);
    for (int k = 0; k < static_cast<int>(kernel_tab.size()); ++k) {
        const double t = 0.5 * grid.dt * k;
        kernel_tab[k] = correlation_zero_T(j, t) * std::exp(I * w0 * t);
    }
    auto kernel = [&](double t) {
        const int k = static_cast<int>(std::lround(t / (0.5 * grid.dt)));
        return kernel_tab[std::min<std::size_t>(k, kernel_tab.size() - 1)];
    };
    const auto volterra = one_excitation_amplitude(kernel, grid);

    const double t_stop = res.recurrence_time > 0 ? res.recurrence_time : grid.t_end();
    double worst = 0.0;
    for (int k = 0; k < grid.size() && grid.point(k) <= t_stop; ++k) {
        const Complex chain_rot = res.amplitude[k] * std::exp(I * w0 * grid.point(k));
        worst = std::max(worst, std::abs(chain_rot - volterra.a[k]));
    }
    CHECK(worst < 1e-3);
}
