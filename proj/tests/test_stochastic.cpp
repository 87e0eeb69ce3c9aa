// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "nmqs/exact.hpp"
#include "nmqs/heom.hpp"
#include "nmqs/nonmarkov.hpp"
#include "nmqs/stochastic.hpp"

using namespace nmqs;

namespace {

DensityMatrix excited_rho() {
    Matrix r = Matrix::Zero(2, 2);
    r(0, 0) = 1.0;
    return DensityMatrix(r);
}

// Kolmogorov-Smirnov p-value against an exponential law with the given rate,
// right-censored at the observation horizon.
double ks_p_value_exponential(std::vector<double> samples, double rate, double horizon) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    const double norm = 1.0 - std::exp(-rate * horizon);
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double cdf = (1.0 - std::exp(-rate * samples[i])) / norm;
        d = std::max(d, std::abs(cdf - (i + 1) / n));
        d = std::max(d, std::abs(cdf - i / n));
    }
    const double lam = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k)
        p += 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
    return std::clamp(p, 0.0, 1.0);
}

}  // namespace

TEST_CASE("ensemble averaging") {
    const TimeGrid grid(0.0, 0.1, 5);
    Matrix rho(2, 2);
    rho << 0.5, 0.5, 0.5, 0.5;

    SUBCASE("identical trajectories have zero stderr") {
        auto gen = [&](std::uint64_t) {
            SampleTrajectory s;
            s.states.assign(grid.size(), rho);
            return s;
        };
        const auto res = ensemble_average(gen, 64, grid);
        for (double se : res.stderr_) CHECK(se == doctest::Approx(0.0));
        CHECK((res.rho.back() - rho).cwiseAbs().maxCoeff() < 1e-14);
    }

    SUBCASE("stderr scales as 1/sqrt(n)") {
        auto gen = [&](std::uint64_t idx) {
            CounterRng rng(5, idx);
            SampleTrajectory s;
            Matrix r = rho;
            r(0, 1) += 0.2 * rng.normal();
            r(1, 0) = std::conj(r(0, 1));
            s.states.assign(grid.size(), r);
            return s;
        };
        const auto small = ensemble_average(gen, 500, grid);
        const auto big = ensemble_average(gen, 2000, grid);
        const double ratio = big.stderr_[0] / small.stderr_[0];
        CHECK(ratio > 0.45);
        CHECK(ratio < 0.55);
    }

    SUBCASE("output is Hermitian even for skewed samples") {
        auto gen = [&](std::uint64_t idx) {
            CounterRng rng(9, idx);
            SampleTrajectory s;
            Matrix r = rho;
            r(0, 1) += Complex(0.1 * rng.normal(), 0.2 * rng.normal());
            s.states.assign(grid.size(), r);
            return s;
        };
        const auto res = ensemble_average(gen, 100, grid);
        for (const auto& r : res.rho) CHECK(hermiticity_defect(r) < 1e-14);
    }

    SUBCASE("more than 1% invalid trajectories reject the ensemble") {
        auto gen = [&](std::uint64_t idx) {
            SampleTrajectory s;
            s.states.assign(grid.size(), rho);
            s.valid = idx % 50 != 0;  // 2% invalid
            return s;
        };
        CHECK_THROWS_AS(ensemble_average(gen, 1000, grid), NumericalError);
    }

    SUBCASE("identical results for any worker count") {
        auto gen = [&](std::uint64_t idx) {
            CounterRng rng(11, idx);
            SampleTrajectory s;
            Matrix r = rho;
            r(0, 0) += 0.01 * rng.normal();
            r(1, 1) = 1.0 - r(0, 0);
            s.states.assign(grid.size(), r);
            return s;
        };
        const auto w1 = ensemble_average(gen, 1500, grid, 1);
        const auto w4 = ensemble_average(gen, 1500, grid, 4);
        const auto w8 = ensemble_average(gen, 1500, grid, 8);
        for (int k = 0; k < grid.size(); ++k) {
            CHECK((w1.rho[k] - w4.rho[k]).cwiseAbs().maxCoeff() == 0.0);
            CHECK((w1.rho[k] - w8.rho[k]).cwiseAbs().maxCoeff() == 0.0);
            CHECK(w1.stderr_[k] == w4.stderr_[k]);
            CHECK(w1.stderr_[k] == w8.stderr_[k]);
        }
    }
}

TEST_CASE("HOPS trajectories") {
    const double ws = 1.0, gamma = 1.0, g = 0.3;

    HopsProblem prob;
    prob.system = SystemSpec(0.5 * ws * (sigma_z() + Matrix::Identity(2, 2)), {sigma_minus()});
    prob.kernel = {Complex(g, 0.0), Complex(gamma, ws)};  // resonant Lorentzian
    prob.psi0 = excited_state();
    prob.k_max = 5;

    SUBCASE("zero coupling reduces to free evolution with empty upper levels") {
        HopsProblem free = prob;
        free.system.couplings[0] = Matrix::Zero(2, 2);
        const TimeGrid grid(0.0, 0.01, 200);
        const auto noise = hops_noise_generator(free, grid);
        const auto traj = hops_linear_trajectory(free, grid, noise, 3, 0);
        REQUIRE(traj.valid);
        for (int k = 0; k < grid.size(); ++k) {
            const Vector expect =
                std::exp(-I * ws * grid.point(k)) * excited_state();  // e-level phase
            CHECK((traj.psi0[k] - expect).cwiseAbs().maxCoeff() < 1e-9);
        }
    }

    SUBCASE("linear ensemble: mean norm stays 1 within 3 stderr") {
        const TimeGrid grid(0.0, 0.02, 150);
        const auto res = hops_ensemble(prob, grid, 2000, 77, false);
        for (int k = 0; k < grid.size(); ++k) {
            CHECK(std::abs(res.rho[k].trace().real() - 1.0) <
                  std::max(3.0 * res.stderr_[k], 5e-3));
        }
    }

    SUBCASE("linear and nonlinear ensembles match the exact amplitude damping") {
        const TimeGrid grid(0.0, 10.0 / gamma / 400, 400);
        auto rot_kernel = [&](double t) { return Complex(g * std::exp(-gamma * t)); };
        const auto amp = one_excitation_amplitude(rot_kernel, grid);

        for (bool nonlinear : {false, true}) {
            const auto res = hops_ensemble(prob, grid, 3000, 2026, nonlinear);
            CHECK(res.n_invalid == 0);
            double worst = 0.0;
            for (int k = 0; k < grid.size(); ++k) {
                Matrix expect(2, 2);
                expect(0, 0) = std::norm(amp.a[k]);
                expect(1, 1) = 1.0 - std::norm(amp.a[k]);
                expect(0, 1) = expect(1, 0) = 0.0;
                const double allowed = std::max(0.03, 3.0 * res.stderr_[k]);
                worst = std::max(worst, trace_distance(res.rho[k], expect) - allowed);
            }
            CHECK(worst <= 0.0);
        }
    }

    SUBCASE("nonlinear sampling error does not exceed the linear one") {
        const TimeGrid grid(0.0, 10.0 / gamma / 250, 250);
        const auto lin = hops_ensemble(prob, grid, 1500, 4, false);
        const auto nl = hops_ensemble(prob, grid, 1500, 4, true);
        double lin_mean = 0.0, nl_mean = 0.0;
        for (int k = 0; k < grid.size(); ++k) {
            lin_mean += lin.stderr_[k];
            nl_mean += nl.stderr_[k];
        }
        CHECK(nl_mean <= lin_mean);
    }

    SUBCASE("trajectories are reproducible per (seed, index)") {
        const TimeGrid grid(0.0, 0.02, 50);
        const auto noise = hops_noise_generator(prob, grid);
        const auto a = hops_linear_trajectory(prob, grid, noise, 12, 3);
        const auto b = hops_linear_trajectory(prob, grid, noise, 12, 3);
        for (int k = 0; k < grid.size(); ++k)
            CHECK((a.psi0[k] - b.psi0[k]).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("SLN trajectories") {
    const double w12 = 1.0, delta0 = 1.0;
    SlnProblem prob;
    prob.system = SystemSpec(0.5 * w12 * sigma_z() - 0.5 * delta0 * sigma_x(), {sigma_z()});
    Matrix r0(2, 2);
    r0 << 0.5, 0.5, 0.5, 0.5;
    prob.rho0 = r0;

    // high-temperature Drude kernel via its Matsubara expansion
    BathSpec bath{SpectralDensity::drude(0.02, 1.0), 0.1, Statistics::Bosonic};
    const CorrelationSum ker = matsubara_expansion(bath, 0);
    prob.alpha_r = [ker](double t) { return ker(t).real(); };
    prob.alpha_i = [ker](double t) { return ker(t).imag(); };

    SUBCASE("zero coupling keeps every sample trace-preserving and unitary") {
        SlnProblem free = prob;
        free.system.couplings[0] = Matrix::Zero(2, 2);
        const TimeGrid grid(0.0, 0.01, 100);
        const auto noise = sln_noise_generator(free, grid);
        const auto s = sln_trajectory(free, grid, noise, 8, 0);
        for (const auto& p : s.states) CHECK(std::abs(p.trace() - Complex(1.0)) < 1e-10);
        LindbladSpec unit(free.system, {0.0});
        const auto ref = lindblad_evolve(unit, DensityMatrix(r0), grid);
        CHECK((s.states.back() - ref.back()).cwiseAbs().maxCoeff() < 1e-9);
    }

    SUBCASE("ensemble mean trace is 1 within 3 stderr") {
        const TimeGrid grid(0.0, 0.01, 150);
        const auto res = sln_ensemble(prob, grid, 2000, 5);
        for (int k = 0; k < grid.size(); ++k)
            CHECK(std::abs(res.rho[k].trace().real() - 1.0) <
                  std::max(3.0 * res.stderr_[k], 5e-3));
    }

    SUBCASE("matches HEOM for the high-temperature Drude spin-boson problem") {
        const TimeGrid grid(0.0, 2.0 / 200, 200);  // t_end = 2/gamma
        const auto res = sln_ensemble(prob, grid, 3000, 99);
        std::vector<CorrelationSum> expansions{ker};
        const auto hier = build_hierarchy(prob.system, expansions, 8);
        const auto heom = heom_evolve(hier, DensityMatrix(r0), grid);
        const double allowed = std::max(3.0 * res.stderr_.back(), 0.01);
        CHECK(trace_distance(res.rho.back(), heom.back()) < allowed);
    }
}

TEST_CASE("non-Markovian quantum jumps") {
    const double w = 1.0;
    SystemSpec sys(0.5 * w * sigma_z(), {sigma_minus()});

    SUBCASE("constant positive rate reproduces the Lindblad solution") {
        const double rate = 0.25;
        TimeLocalSpec tl;
        tl.system = sys;
        tl.channel_ops.push_back([](double) { return sigma_minus(); });
        tl.channel_rates.push_back([rate](double) { return rate; });

        const TimeGrid grid(0.0, 0.01, 600);
        const auto res = nmqj_evolve(tl, excited_state(), grid, 4000, 31);
        LindbladSpec lb(sys, {rate});
        const auto ref = lindblad_evolve(lb, excited_rho(), grid);
        for (int k = 0; k < grid.size(); k += 40) {
            const double allowed = std::max(0.03, 3.0 * res.ensemble.stderr_[k]);
            CHECK(trace_distance(res.ensemble.rho[k], ref[k]) < allowed);
        }
        CHECK(res.backward_jumps == 0);

        // waiting times from the excited state follow Exp(2 rate)
        std::vector<double> waits;
        for (double t : res.first_jump_times)
            if (t >= 0.0) waits.push_back(t);
        CHECK(waits.size() > 3500);
        CHECK(ks_p_value_exponential(waits, 2.0 * rate, grid.t_end()) > 0.01);
    }

    SUBCASE("sign-changing exact rates match the deterministic solver") {
        const double g = 2.5, gamma = 1.0, delta = 3.0;
        auto kernel = [=](double t) {
            return g * std::exp(-gamma * t) * std::exp(-I * delta * t);
        };
        const TimeGrid grid(0.0, 0.002, 1500);  // [0, 3]
        const auto rates = exact_tcl_rates(kernel, w, grid);

        double min_rate = 1e9;
        for (double r : rates.gamma1) min_rate = std::min(min_rate, r);
        REQUIRE(min_rate < -0.05);  // genuinely sign-changing

        const auto det = time_local_evolve(rates.spec, excited_rho(), grid);
        const auto res = nmqj_evolve(rates.spec, excited_state(), grid, 4000, 17);
        CHECK(res.backward_jumps > 0);
        for (int k = 0; k < grid.size(); k += 100) {
            const double allowed = std::max(0.03, 3.0 * res.ensemble.stderr_[k]);
            CHECK(trace_distance(res.ensemble.rho[k], det[k]) < allowed);
        }
    }

    SUBCASE("zero rates: unitary trajectories, no jumps") {
        TimeLocalSpec tl;
        tl.system = sys;
        tl.channel_ops.push_back([](double) { return sigma_minus(); });
        tl.channel_rates.push_back([](double) { return 0.0; });
        Vector psi0 = (excited_state() + two_level_ground()).normalized();
        const TimeGrid grid(0.0, 0.01, 200);
        const auto res = nmqj_evolve(tl, psi0, grid, 100, 3);
        CHECK(res.forward_jumps == 0);
        CHECK(res.backward_jumps == 0);
        LindbladSpec unit(sys, {0.0});
        const auto ref = lindblad_evolve(unit, DensityMatrix(Matrix(psi0 * psi0.adjoint())), grid);
        CHECK(trace_distance(res.ensemble.rho.back(), ref.back()) < 1e-8);
    }

    SUBCASE("member counts stay conserved in the recorded history") {
        TimeLocalSpec tl;
        tl.system = sys;
        tl.channel_ops.push_back([](double) { return sigma_minus(); });
        tl.channel_rates.push_back([](double) { return 0.4; });
        const auto res = nmqj_evolve(tl, excited_state(), TimeGrid(0.0, 0.02, 100), 500, 7);
        for (const auto& snap : res.history) {
            long total = 0;
            for (long c : snap.counts) total += c;
            CHECK(total == 500);
        }
    }
}
