// SPDX-License-Identifier: Apache-2.0

#ifndef NMQS_NONMARKOV_HPP
#define NMQS_NONMARKOV_HPP

#include <functional>
#include <utility>
#include <vector>

#include "nmqs/core.hpp"
#include "nmqs/mastereq.hpp"

namespace nmqs {

// Time-indexed dynamical map Lambda(t_k) in column-stacking convention;
// Lambda_0 = identity, each map trace-preserving within 1e-8.
struct DynamicalMap {
    TimeGrid grid;
    int dim = 0;
    std::vector<Matrix> maps;
};

using LinearSolver = std::function<Trajectory(const Matrix& x0)>;

// Assembles Lambda(t_k) by propagating the d^2 matrix units.  The solver must
// be linear in its initial condition; this is verified against a direct run
// from rho_check (mismatch > 1e-6 throws).
DynamicalMap build_map(const LinearSolver& solver, const TimeGrid& grid, int dim);
DynamicalMap build_map(const LinearSolver& solver, const TimeGrid& grid, int dim,
                       const Matrix& rho_check);

Matrix apply_map(const DynamicalMap& map, int k, const Matrix& rho);

// D(rho1, rho2) = ||rho1 - rho2||_1 / 2
double trace_distance(const Matrix& rho1, const Matrix& rho2);

struct BlpResult {
    double value = 0.0;
    std::vector<double> best_distance;  // D(t) of the optimal pair
    bool coarse_grid_warning = false;
};

struct BlpOptions {
    int n_directions = 60;  // Bloch-sphere grid for the built-in pair strategy
    int refine_rounds = 3;
};

// Information-backflow measure: max over antipodal pure-state pairs of the
// integrated positive slope of the trace distance.  d = 2 uses the built-in
// Bloch grid; general d takes explicit pairs.
BlpResult blp_measure(const DynamicalMap& map, const BlpOptions& opts = {});
BlpResult blp_measure(const DynamicalMap& map,
                      const std::vector<std::pair<Matrix, Matrix>>& pairs);

struct RhpResult {
    double value = 0.0;
    std::vector<double> g;  // divisibility witness per time step
};

// Divisibility measure from the Choi matrix of the intermediate map
// Lambda(t+eps, t) = Lambda_{k+1} Lambda_k^{-1}, eps = grid step.
RhpResult rhp_measure(const DynamicalMap& map);

struct CanonicalRates {
    TimeGrid grid;
    std::vector<std::vector<double>> rates;       // Delta_k(t), descending
    std::vector<std::vector<Matrix>> channels;    // C_k(t)
    std::vector<Matrix> hamiltonians;             // corrected H_S(t)
    double max_herm_defect = 0.0;
    bool warning = false;  // decoherence matrix non-Hermitian beyond 1e-6
};

// Canonical decoherence rates from L(t) = dLambda/dt Lambda^{-1}: decompose
// on {I/sqrt(d)} + traceless Hermitian basis, split the Hamiltonian part and
// diagonalize the decoherence matrix.  Rates follow the same
// 2 C rho C^+ - {C^+C, rho} convention as the generator types.
CanonicalRates canonical_rates(const DynamicalMap& map);
CanonicalRates canonical_rates(const DynamicalMap& map, const std::vector<Matrix>& traceless_basis);

// Orthonormal Hermitian traceless basis (generalized Gell-Mann, fixed order).
std::vector<Matrix> gell_mann_basis(int dim);

}  // namespace nmqs

#endif
