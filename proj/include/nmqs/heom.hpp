// SPDX-License-Identifier: Apache-2.0

#ifndef NMQS_HEOM_HPP
#define NMQS_HEOM_HPP

#include <vector>

#include "nmqs/bath.hpp"
#include "nmqs/core.hpp"
#include "nmqs/mastereq.hpp"

namespace nmqs {

enum class HeomTerminator {
    Zero,          // auxiliary operators beyond the depth closed to zero
    Proportional,  // adiabatic closure rho_{n+} ~ -i(n_s+1)/(nu+mu_s) Theta_s rho_n
};

struct HeomOptions {
    long max_ados = 200000;  // memory budget refusal threshold
    HeomTerminator terminator = HeomTerminator::Zero;
    InvariantOptions invariants;
};

// Flat-array hierarchy with precomputed neighbor tables; one slot per
// (coupling site, exponential term).
struct HeomHierarchy {
    int dim = 0;
    int depth = 0;
    Matrix h;
    std::vector<Matrix> slot_coupling;  // S_j of the slot's site
    std::vector<Complex> slot_c;
    std::vector<Complex> slot_mu;
    std::vector<std::vector<int>> indices;    // multi-index n per ADO
    std::vector<std::vector<int>> plus_idx;   // [ado][slot], -1 beyond depth
    std::vector<std::vector<int>> minus_idx;  // [ado][slot], -1 below zero
    HeomTerminator terminator = HeomTerminator::Zero;

    long count() const { return static_cast<long>(indices.size()); }
    int n_slots() const { return static_cast<int>(slot_c.size()); }
};

// Enumerates all indices with sum(n) <= depth; count = C(depth + K, K) for
// K slots.  Refuses (with the count) above the budget.
HeomHierarchy build_hierarchy(const SystemSpec& system,
                              const std::vector<CorrelationSum>& expansions, int depth,
                              const HeomOptions& opts = {});

long hierarchy_size(int n_slots, int depth);

// d rho_n/dt = -(i H^X + sum_s n_s mu_s) rho_n - i sum_s S_s^X rho_{n_s^+}
//              - i sum_s n_s (c_s S_s rho_{n_s^-} - c_s^* rho_{n_s^-} S_s)
// The sum_s n_s mu_s term acts as damping (see the sign note in heom.cpp).
void heom_rhs(const HeomHierarchy& hier, const std::vector<Matrix>& ados,
              std::vector<Matrix>& dados);

// RK4 propagation of the full hierarchy; returns the physical component.
Trajectory heom_evolve(const HeomHierarchy& hier, const DensityMatrix& rho0,
                       const TimeGrid& grid, const InvariantOptions& opts = {});

// Drude bath convenience: Matsubara expansion with m_max terms (m_max < 0
// selects the convergence loop) applied to every coupling site.
Trajectory heom_evolve_drude(const SystemSpec& system, const BathSpec& bath,
                             const DensityMatrix& rho0, int depth, const TimeGrid& grid,
                             int m_max = -1, const HeomOptions& opts = {});

}  // namespace nmqs

#endif
