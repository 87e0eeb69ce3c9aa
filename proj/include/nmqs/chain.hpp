// SPDX-License-Identifier: Apache-2.0

#ifndef NMQS_CHAIN_HPP
#define NMQS_CHAIN_HPP

#include <vector>

#include "nmqs/bath.hpp"
#include "nmqs/core.hpp"

namespace nmqs {

// Monic three-term recurrence coefficients of the orthogonal polynomials of
// the weight J, computed on the support rescaled to [0, 1]:
//   pi_{n+1}(x) = (x - alpha_n) pi_n(x) - beta_n pi_{n-1}(x),
//   pi_{-1} = 0, pi_0 = 1.
// Convention: beta_0 = int J(w) dw in physical units (zeroth moment); the
// rescale factor omega_c (= omega_max of the support) converts back:
// chain energies A_n = omega_c alpha_n, hoppings B_n = omega_c sqrt(beta_n)
// for n >= 1, and system-chain coupling sqrt(beta_0).
struct ChainCoefficients {
    std::vector<double> alphas;  // alpha_0 .. alpha_{N-1}, rescaled units
    std::vector<double> betas;   // beta_0 (physical) and beta_1.. (rescaled)
    double omega_c = 1.0;        // frequency rescale

    int order() const { return static_cast<int>(alphas.size()); }
    double sys_coupling() const { return std::sqrt(betas.at(0)); }
    double energy(int n) const { return omega_c * alphas.at(n); }
    double hopping(int n) const { return omega_c * std::sqrt(betas.at(n)); }  // n >= 1
};

// Discretized Stieltjes procedure on a composite Gauss grid with an
// oversampling factor of at least 8N.  Throws naming the first n where
// beta_n loses positivity.
ChainCoefficients recurrence_coefficients(const SpectralDensity& j, int order);

// Gauss discretization of the star geometry: nodes and weights from the
// Jacobi matrix of the recurrence coefficients.  Physical units:
// sum W_p = int J dw and sum W_p w_p^k = int w^k J dw for k <= 2N-1.
struct StarDiscretization {
    std::vector<double> nodes;    // strictly increasing, inside the support
    std::vector<double> weights;  // > 0
    int order() const { return static_cast<int>(nodes.size()); }
};

StarDiscretization gauss_discretize(const ChainCoefficients& coeffs);

// Tight-binding chain data of the star-to-chain unitary transformation.
struct ChainHamiltonian {
    double sys_coupling = 0.0;      // sqrt(int J dw)
    std::vector<double> energies;   // A_n = omega_c alpha_n
    std::vector<double> hoppings;   // B_n = omega_c sqrt(beta_n), n = 1..N-1
};

ChainHamiltonian star_to_chain(const ChainCoefficients& coeffs);

// Unitary one-excitation propagation of system + chain (or star):
// returns the system-site amplitude A(t); |A(0)| = 1, total norm conserved.
struct OneExcitationResult {
    std::vector<Complex> amplitude;
    // first time the excitation weight at the end of the chain exceeds the
    // detector threshold; < 0 when the boundary was never reached
    double recurrence_time = -1.0;
};

OneExcitationResult chain_propagate_one_excitation(double omega_sys,
                                                   const ChainHamiltonian& chain, int n_sites,
                                                   const TimeGrid& grid);

OneExcitationResult star_propagate_one_excitation(double omega_sys,
                                                  const StarDiscretization& star,
                                                  const TimeGrid& grid);

// Orthogonality check helper: int J pi_n pi_m dw on the rescaled support by
// the same oversampled quadrature used for the coefficients.
double orthogonality_defect(const SpectralDensity& j, const ChainCoefficients& coeffs,
                            int n_check);

}  // namespace nmqs

#endif
