// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "nmqs/bath.hpp"

using namespace nmqs;

TEST_CASE("spectral density evaluations") {
    const auto ohmic = SpectralDensity::ohmic(1.0, 1.0, 1.0);
    CHECK(ohmic(0.0) == 0.0);
    CHECK(ohmic(1.0) == doctest::Approx(std::exp(-1.0)));
    CHECK_THROWS_AS(eval_spectral_density(ohmic, -0.5), std::domain_error);

    // Drude convention fixed by the Matsubara expansion: J(g) = lambda g/(2 pi)
    const double lambda = 0.7, gamma = 1.3;
    const auto drude = SpectralDensity::drude(lambda, gamma);
    CHECK(drude(gamma) == doctest::Approx(lambda * gamma / (2.0 * M_PI)));

    const auto hard = SpectralDensity::ohmic(1.0, 2.0, 1.5, CutoffShape::Hard);
    CHECK(hard(1.0) == doctest::Approx(2.0));
    CHECK(hard(1.6) == 0.0);

    const auto tab = SpectralDensity::tabulated({0.0, 1.0, 2.0}, {0.0, 1.0, 0.0});
    CHECK(tab(0.5) == doctest::Approx(0.5));
    CHECK(tab(3.0) == 0.0);
}

TEST_CASE("zero-temperature correlation function vs closed form") {
    // J = eta w e^{-w/wc}: alpha(t) = eta wc^2/(1 + i wc t)^2
    const double eta = 0.8, wc = 1.4;
    const auto j = SpectralDensity::ohmic(1.0, eta, wc);
    for (double t : {0.0, 0.3, 1.0, 2.7, 6.0, 10.0}) {
        const Complex closed = eta * wc * wc / std::pow(Complex(1.0, wc * t), 2.0);
        CHECK(std::abs(correlation_zero_T(j, t) - closed) < 1e-8);
    }
    // alpha(0) = int J dw, real and positive
    const Complex a0 = correlation_zero_T(j, 0.0);
    CHECK(a0.imag() == doctest::Approx(0.0));
    CHECK(a0.real() == doctest::Approx(eta * wc * wc).epsilon(1e-8));
    // Hermitian kernel
    for (double t : {0.4, 1.7}) {
        const Complex p = correlation_zero_T(j, t);
        const Complex m = correlation_zero_T(j, -t);
        CHECK(std::abs(m - std::conj(p)) < 1e-10);
    }
}

TEST_CASE("thermal correlation function") {
    const auto j = SpectralDensity::ohmic(1.0, 0.5, 1.0);

    SUBCASE("beta = infinity routes to the zero-temperature kernel") {
        BathSpec bath{j, kBetaInfinite, Statistics::Bosonic};
        CHECK(std::abs(correlation_plus(bath, 0.7)) == 0.0);
        CHECK(std::abs(correlation_minus(bath, 0.7) - correlation_zero_T(j, 0.7)) < 1e-12);
        CHECK(std::abs(correlation_thermal(bath, 0.7) - correlation_zero_T(j, 0.7)) < 1e-12);
    }

    SUBCASE("fermionic statistics are rejected") {
        BathSpec bath{j, 2.0, Statistics::Fermionic};
        CHECK_THROWS_AS(correlation_thermal(bath, 0.1), std::invalid_argument);
    }

    SUBCASE("small-t imaginary part gives the first moment of J") {
        BathSpec bath{j, 2.0, Statistics::Bosonic};
        const double t = 1e-6;
        const double first_moment = spectral_moment(j, 1);
        CHECK(correlation_thermal(bath, t).imag() / t ==
              doctest::Approx(-first_moment).epsilon(1e-4));
    }

    SUBCASE("detailed balance n(w)+1 = e^{beta w} n(w)") {
        const double beta = 1.7;
        for (double w : {0.05, 0.3, 1.0, 4.0, 11.0}) {
            const double n = thermal_occupation(beta, w);
            CHECK(std::abs((n + 1.0) - std::exp(beta * w) * n) < 1e-12 * (n + 1.0));
        }
    }

    SUBCASE("alpha_T = alpha_minus + alpha_plus") {
        BathSpec bath{j, 2.0, Statistics::Bosonic};
        for (double t : {0.2, 1.1}) {
            const Complex sum = correlation_minus(bath, t) + correlation_plus(bath, t);
            CHECK(std::abs(sum - correlation_thermal(bath, t)) < 1e-9);
        }
    }
}

TEST_CASE("Drude high-temperature kernel approaches c0 e^{-gamma t}") {
    const double gamma = 1.0, lambda = 0.2, beta = 0.1;  // beta gamma = 0.1
    BathSpec bath{SpectralDensity::drude(lambda, gamma), beta, Statistics::Bosonic};
    const Complex c0 =
        0.5 * gamma * gamma * lambda * Complex(1.0 / std::tan(0.5 * beta * gamma), -1.0);
    for (double t : {0.1, 0.5, 1.0, 2.0, 5.0}) {
        const Complex ref = c0 * std::exp(-gamma * t);
        const Complex val = drude_correlation_reference(bath, t);
        CHECK(std::abs(val - ref) / std::abs(ref) < 0.02);
    }
}

TEST_CASE("Matsubara expansion of the Drude kernel") {
    const double gamma = 0.9, lambda = 0.4, beta = 0.11;
    BathSpec bath{SpectralDensity::drude(lambda, gamma), beta, Statistics::Bosonic};

    const CorrelationSum sum = matsubara_expansion(bath, 3);
    CHECK(sum.terms[0].mu.real() == doctest::Approx(gamma));
    CHECK(sum.terms[0].mu.imag() == doctest::Approx(0.0));
    const Complex c0_expect =
        0.5 * gamma * gamma * lambda * Complex(1.0 / std::tan(0.5 * beta * gamma), -1.0);
    CHECK(std::abs(sum.terms[0].c - c0_expect) < 1e-14);
    for (int m = 1; m <= 3; ++m) {
        const double mu = 2.0 * M_PI * m / beta;
        CHECK(sum.terms[m].mu.real() == doctest::Approx(mu));
        // coefficient from the coth-pole residues (twice the printed value;
        // fixed against the quadrature kernel)
        CHECK(sum.terms[m].c.real() ==
              doctest::Approx(2.0 * gamma * gamma * lambda / beta * mu /
                              (mu * mu - gamma * gamma)));
    }

    SUBCASE("truncation error against the quadrature oracle, monotone in m_max") {
        const double t_max = 10.0 / gamma;
        const int n_test = 24;
        std::vector<double> ts;
        std::vector<Complex> ref;
        for (int k = 1; k <= n_test; ++k) {
            ts.push_back(t_max * k / n_test);
            ref.push_back(drude_correlation_reference(bath, ts.back()));
        }
        auto resid = [&](int m_max) {
            const CorrelationSum s = matsubara_expansion(bath, m_max);
            double r = 0.0;
            for (std::size_t k = 0; k < ts.size(); ++k)
                r = std::max(r, std::abs(s(ts[k]) - ref[k]));
            return r;
        };
        double prev = resid(0);
        for (int m = 4; m <= 16; m += 4) {
            const double cur = resid(m);
            CHECK(cur <= prev + 1e-15);
            prev = cur;
        }

        // convergence loop hits 1e-6 |alpha_T(0)| on the test grid
        const double scale = std::abs(drude_correlation_reference(bath, ts.front() * 1e-3));
        const CorrelationSum converged = matsubara_expansion_auto(bath, t_max, 1e-6);
        double r = 0.0;
        for (std::size_t k = 0; k < ts.size(); ++k)
            r = std::max(r, std::abs(converged(ts[k]) - ref[k]));
        CHECK(r < 1e-6 * scale);
    }

    SUBCASE("degenerate pole is rejected") {
        const int m = 2;
        BathSpec degenerate{SpectralDensity::drude(lambda, gamma), 2.0 * M_PI * m / gamma,
                            Statistics::Bosonic};
        CHECK_THROWS_AS(matsubara_expansion(degenerate, 4), NumericalError);
    }
}

TEST_CASE("exponential-sum fitting") {
    SUBCASE("single exponential is a fixed point") {
        const Complex g(0.8, 0.3), mu(0.5, 1.1);
        std::vector<Complex> samples;
        const double dt = 0.05;
        for (int k = 0; k < 200; ++k) samples.push_back(g * std::exp(-mu * (k * dt)));
        const FitResult fit = fit_correlation(samples, dt, 1);
        CHECK(std::abs(fit.sum.terms[0].c - g) < 1e-8);
        CHECK(std::abs(fit.sum.terms[0].mu - mu) < 1e-8);
        CHECK(fit.max_residual < 1e-8);
    }

    SUBCASE("Ohmic kernel with four exponentials") {
        const auto j = SpectralDensity::ohmic(1.0, 1.0, 1.0);
        const double t_max = 10.0;
        std::vector<Complex> samples;
        for (int k = 0; k <= 48; ++k) samples.push_back(correlation_zero_T(j, k * t_max / 48));
        const FitResult fit = fit_correlation(samples, t_max / 48, 4);
        CHECK(fit.max_residual < 1e-3 * std::abs(samples[0]));
        for (const auto& term : fit.sum.terms) CHECK(term.mu.real() > 0.0);

        // denser grids land slightly above; recorded as a regression bound
        std::vector<Complex> dense;
        for (int k = 0; k <= 240; ++k) dense.push_back(correlation_zero_T(j, k * t_max / 240));
        CHECK(fit_correlation(dense, t_max / 240, 4).max_residual <
              1.5e-3 * std::abs(dense[0]));
        CHECK(fit_correlation(dense, t_max / 240, 5).max_residual <
              3e-4 * std::abs(dense[0]));
    }

    SUBCASE("n_exp = 0 is rejected") {
        std::vector<Complex> samples(32, Complex(1.0));
        CHECK_THROWS_AS(fit_correlation(samples, 0.1, 0), std::invalid_argument);
    }
}

TEST_CASE("Markov rate") {
    SUBCASE("exponential kernel gives g/gamma") {
        const double g = 0.3, gamma = 2.0;
        auto alpha = [&](double t) { return Complex(g * std::exp(-gamma * t)); };
        const MarkovRate rate = markov_rate(alpha, 40.0 / gamma);
        CHECK(rate.tail_decayed);
        CHECK(std::abs(rate.gamma - Complex(g / gamma)) < 1e-10);
    }

    SUBCASE("zero kernel gives zero") {
        const MarkovRate rate = markov_rate([](double) { return Complex(0.0); }, 1.0);
        CHECK(std::abs(rate.gamma) == 0.0);
    }

    SUBCASE("symmetric Lorentzian at resonance has vanishing shift") {
        // kernel of a Lorentzian centered on the system frequency: real decay
        const double gamma = 1.0;
        auto alpha = [&](double t) { return Complex(std::exp(-gamma * t)); };
        const MarkovRate rate = markov_rate(alpha, 50.0);
        CHECK(std::abs(rate.gamma.imag()) < 1e-9);
        CHECK(rate.gamma.real() == doctest::Approx(1.0 / gamma));
    }

    SUBCASE("undecayed tail is flagged") {
        auto alpha = [](double t) { return Complex(std::exp(-0.01 * t)); };
        CHECK_FALSE(markov_rate(alpha, 10.0).tail_decayed);
    }
}

TEST_CASE("counter RNG reproducibility and independence") {
    CounterRng a(42, 7), b(42, 7), c(42, 8);
    for (int k = 0; k < 100; ++k) {
        const auto va = a.next_u64();
        CHECK(va == b.next_u64());
    }
    // different streams diverge immediately
    CounterRng a2(42, 7);
    CHECK(a2.next_u64() != c.next_u64());
}

TEST_CASE("colored noise statistics") {
    CorrelationSum kernel;
    kernel.terms.push_back({Complex(1.0, 0.0), Complex(0.8, 0.6)});

    auto run_stats = [&](const TimeGrid& grid, int n_samp, std::uint64_t seed) {
        ColoredNoiseGenerator gen(kernel, grid);
        const int n = grid.size();
        std::vector<Complex> mean(n, 0.0), cov0(n, 0.0), pseudo0(n, 0.0);
        for (int s = 0; s < n_samp; ++s) {
            const auto z = gen.sample(seed, s);
            for (int k = 0; k < n; ++k) {
                mean[k] += z[k];
                cov0[k] += z[k] * std::conj(z[0]);
                pseudo0[k] += z[k] * z[0];
            }
        }
        for (int k = 0; k < n; ++k) {
            mean[k] /= double(n_samp);
            cov0[k] /= double(n_samp);
            pseudo0[k] /= double(n_samp);
        }
        return std::make_tuple(mean, cov0, pseudo0, gen.used_circulant());
    };

    const double a0 = std::abs(kernel.at_zero());
    const int n_samp = 10000;

    SUBCASE("Cholesky path (short grid)") {
        const TimeGrid grid(0.0, 0.15, 40);
        auto [mean, cov0, pseudo0, circulant] = run_stats(grid, n_samp, 2024);
        CHECK_FALSE(circulant);
        for (int k = 0; k < grid.size(); ++k) {
            CHECK(std::abs(mean[k]) < 3.0 * std::sqrt(a0 / n_samp));
            CHECK(std::abs(cov0[k] - kernel(grid.point(k))) <
                  5.0 * std::sqrt(a0 * a0 / n_samp));
            CHECK(std::abs(pseudo0[k]) < 5.0 * a0 / std::sqrt(double(n_samp)));
        }
    }

    SUBCASE("circulant path (long grid)") {
        const TimeGrid grid(0.0, 0.05, 200);
        auto [mean, cov0, pseudo0, circulant] = run_stats(grid, n_samp, 99);
        CHECK(circulant);
        for (int k = 0; k < grid.size(); k += 7) {
            CHECK(std::abs(mean[k]) < 3.0 * std::sqrt(a0 / n_samp));
            CHECK(std::abs(cov0[k] - kernel(grid.point(k))) <
                  5.0 * std::sqrt(a0 * a0 / n_samp));
            CHECK(std::abs(pseudo0[k]) < 5.0 * a0 / std::sqrt(double(n_samp)));
        }
    }

    SUBCASE("bit-identical per (seed, index)") {
        const TimeGrid grid(0.0, 0.1, 64);
        ColoredNoiseGenerator g1(kernel, grid), g2(kernel, grid);
        const auto z1 = g1.sample(5, 123);
        const auto z2 = g2.sample(5, 123);
        for (int k = 0; k < grid.size(); ++k) CHECK(z1[k] == z2[k]);
        const auto z3 = g1.sample(5, 124);
        CHECK(z1[10] != z3[10]);
    }
}

TEST_CASE("SLN noise pair statistics") {
    const double gr = 1.0, gi = 0.4, dec = 1.2;
    auto alpha_r = [&](double t) { return gr * std::exp(-dec * std::abs(t)); };
    auto alpha_i = [&](double t) { return -gi * std::exp(-dec * std::abs(t)); };

    const TimeGrid grid(0.0, 0.2, 30);
    SlnNoiseGenerator gen(alpha_r, alpha_i, grid);
    const int n_samp = 20000;
    const int n = grid.size();

    std::vector<Complex> xx(n, 0.0), xn(n, 0.0), nn(n, 0.0), xn_acausal(n, 0.0);
    for (int s = 0; s < n_samp; ++s) {
        const SlnNoise z = gen.sample(7, s);
        const int mid = n / 2;
        for (int k = 0; k < n; ++k) {
            xx[k] += z.xi[k] * z.xi[0];
            nn[k] += z.nu[k] * z.nu[0];
            xn[k] += z.xi[k] * z.nu[0];              // t = t_k >= t' = 0
            xn_acausal[k] += z.xi[0] * z.nu[k];      // t = 0 <= t' = t_k
        }
        (void)mid;
    }
    const double floor3 = 3.0 * gr / std::sqrt(double(n_samp));
    for (int k = 0; k < n; ++k) {
        xx[k] /= n_samp;
        nn[k] /= n_samp;
        xn[k] /= n_samp;
        xn_acausal[k] /= n_samp;
        CHECK(std::abs(xx[k] - alpha_r(grid.point(k))) < 2.0 * floor3);
        CHECK(std::abs(nn[k]) < 2.0 * floor3);
        const Complex expect_xn =
            k == 0 ? Complex(0.0, -0.5 * alpha_i(0.0)) : Complex(0.0, -alpha_i(grid.point(k)));
        CHECK(std::abs(xn[k] - expect_xn) < 2.0 * floor3);
        if (k > 0) CHECK(std::abs(xn_acausal[k]) < 2.0 * floor3);
    }
}

TEST_CASE("tabulated spectral density file loading") {
    const std::string path = "/tmp/nmqs_tab_test.txt";
    {
        std::ofstream out(path);
        out << "# omega J\n0.0 0.0\n1.0 0.5 # peak\n2.0 0.0\n";
    }
    const auto j = load_tabulated_spectral_density(path);
    CHECK(j(1.0) == doctest::Approx(0.5));
    CHECK(j(0.5) == doctest::Approx(0.25));
}
