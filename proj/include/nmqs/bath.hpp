// SPDX-License-Identifier: Apache-2.0

#ifndef NMQS_BATH_HPP
#define NMQS_BATH_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "nmqs/core.hpp"

namespace nmqs {

// ---------------------------------------------------------------------------
// Spectral densities J(w).
//
// OhmicFamily:  J(w) = eta_s w^s wc^{1-s} exp(-w/wc)   (exponential cutoff)
//               J(w) = eta_s w^s wc^{1-s} theta(wc-w)  (hard cutoff)
// Drude:        J(w) = (lambda gamma^2 / pi) w / (w^2 + gamma^2)
// Tabulated:    linear interpolation of (w_k, J_k), 0 outside the support.
//
// Drude note: the prefactor is fixed so that the finite-temperature kernel
// integral reproduces the Matsubara expansion c_0 = (gamma^2 lambda/2)
// (cot(beta gamma/2) - i) exactly; see matsubara_expansion below.
// ---------------------------------------------------------------------------

enum class CutoffShape { Exponential, Hard };

struct SpectralDensity {
    enum class Kind { OhmicFamily, Drude, Tabulated };

    Kind kind = Kind::OhmicFamily;

    // OhmicFamily
    double s = 1.0;
    double eta = 1.0;
    double omega_c = 1.0;
    CutoffShape cutoff = CutoffShape::Exponential;

    // Drude
    double lambda = 0.0;
    double gamma = 0.0;

    // Tabulated
    std::vector<double> tab_omega;
    std::vector<double> tab_j;

    // Upper bound of the support used by every integral over J.
    double omega_max = 0.0;

    static SpectralDensity ohmic(double s, double eta, double omega_c,
                                 CutoffShape cutoff = CutoffShape::Exponential,
                                 double omega_max = 0.0);
    static SpectralDensity drude(double lambda, double gamma, double omega_max = 0.0);
    static SpectralDensity tabulated(std::vector<double> omega, std::vector<double> j);

    double operator()(double omega) const;
};

// J(w) with domain check (w >= 0).
double eval_spectral_density(const SpectralDensity& j, double omega);

// \int_0^{w_max} w^k J(w) dw
double spectral_moment(const SpectralDensity& j, int k = 0);

struct CorrelationTerm {
    Complex c;   // amplitude
    Complex mu;  // decay rate, Re mu > 0
};

// alpha(t) = sum_m c_m exp(-mu_m t) for t >= 0, Hermitian extension for t < 0.
struct CorrelationSum {
    std::vector<CorrelationTerm> terms;

    Complex operator()(double t) const {
        Complex a = 0.0;
        const double at = std::abs(t);
        for (const auto& term : terms) a += term.c * std::exp(-term.mu * at);
        return t >= 0.0 ? a : std::conj(a);
    }

    Complex at_zero() const {
        Complex a = 0.0;
        for (const auto& term : terms) a += term.c;
        return a;
    }
};

enum class Statistics { Bosonic, Fermionic };

inline constexpr double kBetaInfinite = std::numeric_limits<double>::infinity();

// Bath = spectral density + inverse temperature (beta = inf means T = 0).
// The statistics flag is stored; solvers reject the fermionic branch.
struct BathSpec {
    SpectralDensity j;
    double beta = kBetaInfinite;
    Statistics statistics = Statistics::Bosonic;

    bool zero_temperature() const { return std::isinf(beta); }
};

// Mean thermal occupation n(w) = 1/(e^{beta w} - 1), 0 for beta = inf.
double thermal_occupation(double beta, double omega);

// alpha(t) = \int_0^{w_max} J(w) e^{-i w t} dw   (zero-temperature kernel)
Complex correlation_zero_T(const SpectralDensity& j, double t);

// alpha_T(t) = \int_0^{w_max} J(w) [coth(beta w/2) cos(wt) - i sin(wt)] dw
Complex correlation_thermal(const BathSpec& bath, double t);

// Split kernels of the finite-temperature master equation:
//   alpha_minus(t) = \int J(w) (n(w)+1) e^{-iwt} dw
//   alpha_plus(t)  = \int J(w) n(w) e^{+iwt} dw
// At T = 0 alpha_plus = 0 and alpha_minus reduces to correlation_zero_T.
Complex correlation_minus(const BathSpec& bath, double t);
Complex correlation_plus(const BathSpec& bath, double t);

// Matsubara expansion of the Drude kernel:
//   c_0 = (gamma^2 lambda / 2)(cot(beta gamma/2) - i),   mu_0 = gamma
//   c_m = (gamma^2 lambda / beta) mu_m/(mu_m^2 - gamma^2), mu_m = 2 pi m/beta
CorrelationSum matsubara_expansion(const BathSpec& bath, int m_max);

// Smallest m_max (stepping by 4) whose truncation error against the
// quadrature kernel stays below tol*|alpha_T(0)| on [0, t_max].
CorrelationSum matsubara_expansion_auto(const BathSpec& bath, double t_max,
                                        double tol = 1e-6, int m_cap = 400);

// Drude kernel with the support truncation removed: quadrature on a wide
// window plus the asymptotic tail of the zero-temperature part.  Serves as
// the oracle for Matsubara truncation.
Complex drude_correlation_reference(const BathSpec& bath, double t);

struct FitResult {
    CorrelationSum sum;
    double max_residual = 0.0;
};

// Least-squares exponential-sum fit of kernel samples on a uniform grid
// (Prony-type initialization, Levenberg-Marquardt refinement). Guarantees
// Re mu_m > 0. Throws NumericalError when the residual exceeds tol.
FitResult fit_correlation(const std::vector<Complex>& samples, double dt, int n_exp,
                          double tol = std::numeric_limits<double>::infinity());

using KernelFn = std::function<Complex(double)>;

struct MarkovRate {
    Complex gamma;          // \int_0^{t_cut} alpha(tau) dtau
    bool tail_decayed = true;  // false when |alpha(t_cut)| >= 1e-10 |alpha(0)|
};

MarkovRate markov_rate(const KernelFn& alpha, double t_cut);

// ---------------------------------------------------------------------------
// Counter-based RNG and noise generation.
// ---------------------------------------------------------------------------

// SplitMix64 over a counter; the stream is keyed by (seed, trajectory index)
// so ensembles are independent of worker count.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();
    double uniform();          // (0, 1)
    double normal();           // standard normal, Box-Muller
    Complex complex_normal();  // E[z z*] = 1, E[z z] = 0

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Complex Gaussian process with M[z_t] = 0, M[z_t z*_s] = alpha(t-s),
// M[z_t z_s] = 0.  Uses circulant embedding on a grid extended past the
// kernel decay length; falls back to a Cholesky factor of the covariance
// matrix when the embedding is not nonnegative.  Sampling is deterministic
// per (seed, trajectory index).
class ColoredNoiseGenerator {
public:
    ColoredNoiseGenerator(const KernelFn& alpha, const TimeGrid& grid);
    ColoredNoiseGenerator(const CorrelationSum& alpha, const TimeGrid& grid);

    std::vector<Complex> sample(std::uint64_t seed, std::uint64_t trajectory_index) const;

    int size() const { return n_; }
    bool used_circulant() const { return circulant_; }

private:
    void build(const KernelFn& alpha, double decay_len);

    int n_ = 0;
    double dt_ = 0.0;
    bool circulant_ = false;
    std::vector<double> eigs_;  // circulant eigenvalues / 2N
    int embed_n_ = 0;
    Matrix chol_;  // fallback factor
};

std::vector<Complex> sample_colored_noise(const KernelFn& alpha, const TimeGrid& grid,
                                          std::uint64_t seed, std::uint64_t trajectory_index);
std::vector<Complex> sample_colored_noise(const CorrelationSum& alpha, const TimeGrid& grid,
                                          std::uint64_t seed, std::uint64_t trajectory_index);

// Correlated noise pair of the stochastic Liouville-von Neumann equation:
//   M[xi(t) xi(s)] = alpha_R(t-s)
//   M[xi(t) nu(s)] = -i alpha_I(t-s) theta(t-s)
//   M[nu(t) nu(s)] = 0
struct SlnNoise {
    std::vector<Complex> xi;
    std::vector<Complex> nu;
};

class SlnNoiseGenerator {
public:
    using RealKernelFn = std::function<double(double)>;

    SlnNoiseGenerator(const RealKernelFn& alpha_r, const RealKernelFn& alpha_i,
                      const TimeGrid& grid);

    SlnNoise sample(std::uint64_t seed, std::uint64_t trajectory_index) const;

    int size() const { return n_; }

private:
    int n_ = 0;
    Eigen::MatrixXd chol_r_;   // lower Cholesky factor of the alpha_R covariance
    Eigen::MatrixXd k_;        // L^{-1} C with C the causal alpha_I matrix
    Eigen::MatrixXd chol_kk_;  // Cholesky factor of K^T K
};

SlnNoise sample_sln_noise_pair(const std::function<double(double)>& alpha_r,
                               const std::function<double(double)>& alpha_i,
                               const TimeGrid& grid, std::uint64_t seed,
                               std::uint64_t trajectory_index);

// Tabulated spectral density from two-column text (omega, J), '#' comments.
SpectralDensity load_tabulated_spectral_density(const std::string& path);

}  // namespace nmqs

#endif
