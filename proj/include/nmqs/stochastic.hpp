// SPDX-License-Identifier: Apache-2.0

#ifndef NMQS_STOCHASTIC_HPP
#define NMQS_STOCHASTIC_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "nmqs/bath.hpp"
#include "nmqs/core.hpp"
#include "nmqs/mastereq.hpp"

namespace nmqs {

// Ensemble average of a stochastic unraveling.  stderr(t) is the trace norm
// of the entrywise standard error of the (Hermitian-symmetrized) mean.
struct EnsembleResult {
    TimeGrid grid;
    Trajectory rho;
    std::vector<double> stderr_;
    long n_traj = 0;
    long n_invalid = 0;
};

// One stochastic sample: a density-matrix trajectory (pure states enter as
// projectors) plus a validity flag; invalid samples are counted, never
// silently dropped.
struct SampleTrajectory {
    Trajectory states;
    bool valid = true;
};

using SampleGenerator = std::function<SampleTrajectory(std::uint64_t trajectory_index)>;

// Streaming, chunk-deterministic mean/variance: identical output for any
// worker count.  Rejects the ensemble when more than 1% of trajectories are
// flagged invalid.
EnsembleResult ensemble_average(const SampleGenerator& gen, long n_traj, const TimeGrid& grid,
                                int n_workers = 1);

// ---------------------------------------------------------------------------
// Hierarchy of pure states (HOPS), single-exponential kernel
// alpha(t) = g e^{-Omega t}; multi-exponential product hierarchies are an
// extension hook.
// ---------------------------------------------------------------------------

struct HopsProblem {
    SystemSpec system;  // couplings[0] = L
    CorrelationTerm kernel;
    Vector psi0;
    int k_max = 4;
};

struct HopsTrajectory {
    std::vector<Vector> psi0;  // top level, one per grid point
    bool valid = true;
};

// Driving noise lives on the RK4 half-step grid of `grid`.
ColoredNoiseGenerator hops_noise_generator(const HopsProblem& prob, const TimeGrid& grid);

HopsTrajectory hops_linear_trajectory(const HopsProblem& prob, const TimeGrid& grid,
                                      const ColoredNoiseGenerator& noise, std::uint64_t seed,
                                      std::uint64_t trajectory_index);

// Normalized nonlinear variant: the driving noise acquires the memory shift
// int_0^t conj(alpha(t-s)) <L^+>_s ds and the hierarchy is renormalized by
// |psi^(0)| every output step.
HopsTrajectory hops_nonlinear_trajectory(const HopsProblem& prob, const TimeGrid& grid,
                                         const ColoredNoiseGenerator& noise, std::uint64_t seed,
                                         std::uint64_t trajectory_index);

EnsembleResult hops_ensemble(const HopsProblem& prob, const TimeGrid& grid, long n_traj,
                             std::uint64_t seed, bool nonlinear, int n_workers = 1);

// ---------------------------------------------------------------------------
// Stochastic Liouville-von Neumann equation
//   dP/dt = -i[H_S, P] + i xi(t) [q, P] + (i/2) nu(t) {q, P}
// Samples are not individually trace-preserving; the ensemble mean is rho_s.
// ---------------------------------------------------------------------------

struct SlnProblem {
    SystemSpec system;  // couplings[0] = q, Hermitian
    std::function<double(double)> alpha_r;
    std::function<double(double)> alpha_i;
    Matrix rho0;
};

SlnNoiseGenerator sln_noise_generator(const SlnProblem& prob, const TimeGrid& grid);

SampleTrajectory sln_trajectory(const SlnProblem& prob, const TimeGrid& grid,
                                const SlnNoiseGenerator& noise, std::uint64_t seed,
                                std::uint64_t trajectory_index);

EnsembleResult sln_ensemble(const SlnProblem& prob, const TimeGrid& grid, long n_traj,
                            std::uint64_t seed, int n_workers = 1);

// ---------------------------------------------------------------------------
// Non-Markovian quantum jumps.
// ---------------------------------------------------------------------------

// Ensemble of distinct pure states with member counts (sum = N).
struct JumpEnsemble {
    std::vector<Vector> states;
    std::vector<long> counts;
    long total = 0;
};

struct NmqjResult {
    EnsembleResult ensemble;
    std::vector<JumpEnsemble> history;         // class table per output time
    std::vector<double> first_jump_times;      // per member, -1 if none
    long forward_jumps = 0;
    long backward_jumps = 0;
};

struct PositivityViolation : NumericalError {
    double time;
    explicit PositivityViolation(double t)
        : NumericalError("nmqj: positivity violation (backward jump with empty target class) "
                         "at t = " +
                         std::to_string(t)),
          time(t) {}
};

// Piecewise-deterministic unraveling of the canonical time-local equation.
// Deterministic drift under H_eff = H(t) - i sum_k Delta_k(t) C_k^+ C_k with
// per-step renormalization; forward jumps for Delta_k > 0, backward jumps
// for Delta_k < 0 with probability proportional to N_alpha'/N_alpha.  The
// ensemble is propagated self-consistently through the shared count table.
NmqjResult nmqj_evolve(const TimeLocalSpec& spec, const Vector& psi0, const TimeGrid& grid,
                       long n_members, std::uint64_t seed);

}  // namespace nmqs

#endif
