// SPDX-License-Identifier: Apache-2.0

#ifndef NMQS_EXACT_HPP
#define NMQS_EXACT_HPP

#include <vector>

#include "nmqs/bath.hpp"
#include "nmqs/core.hpp"
#include "nmqs/mastereq.hpp"

namespace nmqs {

// Second-order (trapezoid) solver for the linear Volterra equation
//   dy/dt = c0 y(t) - int_0^t alpha(t - tau) y(tau) dtau,  y(0) = y0.
struct VolterraSolution {
    std::vector<Complex> y;
    std::vector<Complex> ydot;
};

VolterraSolution volterra_solve(Complex c0, const KernelFn& alpha, const TimeGrid& grid,
                                Complex y0 = 1.0, double growth_limit = 1e6);

// One-excitation amplitude A(t) of a two-level emitter, rotating-frame kernel:
//   dA/dt = -int_0^t alpha(t-tau) A(tau) dtau, A(0) = 1.
// When a system frequency is supplied, u(t) = e^{-i w_s t} A(t).
struct AmplitudeSolution {
    TimeGrid grid;
    std::vector<Complex> a;
    std::vector<Complex> adot;
    std::vector<Complex> u;  // filled when omega_s was supplied
};

AmplitudeSolution one_excitation_amplitude(const KernelFn& alpha, const TimeGrid& grid);

// Exact time-local rates of the amplitude-damping master equation:
//   Delta(t) = -Im[du/dt u^-1], gamma1(t) = -Re[du/dt u^-1],
// valid while the map is invertible (|u| > 1e-10).  Also returns the
// ready-made canonical generator with C = sigma_minus for the solver modules.
struct ExactTclRates {
    TimeGrid grid;
    std::vector<double> delta;
    std::vector<double> gamma1;
    std::vector<Complex> a;  // rotating-frame amplitude
    TimeLocalSpec spec;
};

ExactTclRates exact_tcl_rates(const KernelFn& alpha, double omega_s, const TimeGrid& grid);

// Exact quantum-Brownian-motion coefficients.  u obeys the damped equation
// with full kernel alpha; v is the double kernel integral driven by the
// conjugate of alpha_plus; gamma2 = dv/dt - 2 v Re[du/dt u^-1] (fourth-order
// stencil).  For zero temperature (alpha_plus = 0) gamma2 vanishes.
struct QbmCoefficients {
    TimeGrid grid;
    std::vector<double> delta;
    std::vector<double> gamma1;
    std::vector<double> gamma2;
    std::vector<Complex> u;
    std::vector<Complex> v;
    Statistics statistics = Statistics::Bosonic;
};

QbmCoefficients qbm_coefficients(const KernelFn& alpha, const KernelFn& alpha_plus,
                                 double omega_s, const TimeGrid& grid,
                                 Statistics statistics = Statistics::Bosonic);

// Pure-dephasing decoherence exponent and phase,
//   Gamma(t) = int J(w) coth(beta w/2) (1 - cos wt)/w^2 dw
//   phi(t)   = int J(w) (wt - sin wt)/w^2 dw
double dephasing_gamma(const SpectralDensity& j, double beta, double t);
double dephasing_phase(const SpectralDensity& j, double t);

// Exact evolution for a coupling commuting with H_S: populations constant,
// coherence nm multiplied by
//   exp[-i(e_n - e_m) t + i (l_n^2 - l_m^2) phi(t) - (l_n - l_m)^2 Gamma(t)].
Trajectory dephasing_exact(const SystemSpec& system, const BathSpec& bath,
                           const DensityMatrix& rho0, const TimeGrid& grid);

}  // namespace nmqs

#endif
