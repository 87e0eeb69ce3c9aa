// SPDX-License-Identifier: Apache-2.0

#ifndef NMQS_MASTEREQ_HPP
#define NMQS_MASTEREQ_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nmqs/bath.hpp"
#include "nmqs/core.hpp"

namespace nmqs {

struct SystemSpec {
    Matrix h;                       // Hermitian system Hamiltonian
    std::vector<Matrix> couplings;  // coupling operators L_j
    std::vector<std::string> labels;

    SystemSpec() = default;
    SystemSpec(Matrix h_, std::vector<Matrix> couplings_, std::vector<std::string> labels_ = {});

    int dim() const { return static_cast<int>(h.rows()); }
};

// Time-independent Lindblad generator, paper convention
//   d rho/dt = -i[H, rho] + sum_k rate_k (2 C_k rho C_k^+ - {C_k^+ C_k, rho})
struct LindbladSpec {
    SystemSpec system;
    std::vector<double> rates;

    LindbladSpec() = default;
    LindbladSpec(SystemSpec s, std::vector<double> r);
};

using OperatorFn = std::function<Matrix(double)>;
using RateFn = std::function<double(double)>;

// Canonical time-local generator with possibly negative rates.  An optional
// time-dependent Hamiltonian overrides system.h (the canonical form carries
// a corrected H_S(t)).
struct TimeLocalSpec {
    SystemSpec system;
    std::vector<OperatorFn> channel_ops;
    std::vector<RateFn> channel_rates;
    std::optional<OperatorFn> hamiltonian;

    Matrix h_at(double t) const { return hamiltonian ? (*hamiltonian)(t) : system.h; }
};

// Invariant tolerances enforced on solver output; a breach beyond 10x throws.
struct InvariantOptions {
    double tol_trace = 1e-8;
    double tol_herm = 1e-9;
    double tol_pos = 1e-7;
    bool check_positivity = false;  // opt-in per step; tests check the final state
};

using Trajectory = std::vector<Matrix>;

Trajectory lindblad_evolve(const LindbladSpec& spec, const DensityMatrix& rho0,
                           const TimeGrid& grid, const InvariantOptions& opts = {});

// Linear propagation of an arbitrary matrix (no invariant checks); used for
// dynamical-map construction and two-time correlation functions.
Trajectory lindblad_propagate_linear(const LindbladSpec& spec, const Matrix& x0,
                                     const TimeGrid& grid);

Trajectory time_local_evolve(const TimeLocalSpec& spec, const DensityMatrix& rho0,
                             const TimeGrid& grid, const InvariantOptions& opts = {});

Trajectory time_local_propagate_linear(const TimeLocalSpec& spec, const Matrix& x0,
                                       const TimeGrid& grid);

// Second-order time-convolutionless (TCL2) master equation with kernels
// alpha_minus/alpha_plus; single coupling operator L = system.couplings[0].
// Multi-coupling kernels (matrix-valued alpha_lj) are an extension hook, not
// built here.
struct Tcl2Options {
    InvariantOptions invariants;
    // refusal guard on the memory-integral work ~ n_steps^2
    double work_budget = 4e9;
};

Trajectory tcl2_evolve(const SystemSpec& system, const BathSpec& bath, const DensityMatrix& rho0,
                       const TimeGrid& grid, const Tcl2Options& opts = {});

Trajectory tcl2_evolve_kernels(const SystemSpec& system, const KernelFn& alpha_minus,
                               const KernelFn& alpha_plus, const DensityMatrix& rho0,
                               const TimeGrid& grid, const Tcl2Options& opts = {});

// One decay channel of the secular weak-coupling generator.
struct SecularChannel {
    double omega = 0.0;  // Bohr frequency of the eigenoperator
    Matrix op;           // L(omega) or L^+(omega)
    double rate = 0.0;   // gamma-tilde = Re Gamma(omega) >= 0
    bool upward = false;
};

struct SecularGenerator {
    Matrix h_corrected;  // H_S + Lamb-shift terms
    std::vector<SecularChannel> channels;

    LindbladSpec lindblad() const;
};

// Secular (Lindblad-form) Markov generator with Lamb shift and
// Kubo-Martin-Schwinger-consistent rates.
SecularGenerator secular_markov_generator(const SystemSpec& system, const BathSpec& bath);

// Quantum regression: <A(t1) B(t2)> for a Lindblad evolution from rho0,
// propagating B rho(t2) with the same generator.
Complex qrt_two_time(const LindbladSpec& spec, const Matrix& a, const Matrix& b,
                     const DensityMatrix& rho0, double t2, double t1, double dt);

// Noninteracting-blip population equation,
//   dP/dt = -int_0^t f(t-s) P(s) ds,
//   f(s) = Delta0^2 cos[Q1(s)/pi] exp[-Q2(s)/pi],
// with Q1, Q2 the standard spectral integrals (hbar = 1).
std::vector<double> niba_evolve(double delta0, const SpectralDensity& j, double beta,
                                const TimeGrid& grid);

double niba_kernel(double delta0, const SpectralDensity& j, double beta, double s);

}  // namespace nmqs

#endif
