// SPDX-License-Identifier: Apache-2.0

#include "nmqs/bath.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <unsupported/Eigen/FFT>

namespace nmqs {

namespace {

using GK = boost::math::quadrature::gauss_kronrod<double, 15>;

double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double tol = 1e-12) {
    if (b <= a) return 0.0;
    return GK::integrate(f, a, b, 12, tol);
}

// Oscillatory-safe quadrature of f(w)*e^{-iwt} type integrands: the interval
// is split into half-period panels of the oscillation before adapting.  A
// structure scale caps the panel width near w = 0 so low-frequency kernel
// features stay resolved even when the oscillation panels are huge.
double integrate_oscillatory(const std::function<double(double)>& f, double a, double b,
                             double period_scale, double structure = 0.0, double tol = 1e-12) {
    if (b <= a) return 0.0;
    double sum = 0.0;
    if (structure > 0.0) {
        const double split = std::min(b, a + 60.0 * structure);
        if (split > a) {
            const double panel =
                period_scale > 0.0 ? std::min(M_PI / period_scale, structure) : structure;
            const auto n_panels = static_cast<long>(std::ceil((split - a) / panel));
            double lo = a;
            for (long k = 0; k < n_panels; ++k) {
                const double hi = std::min(split, a + (k + 1) * ((split - a) / double(n_panels)));
                sum += GK::integrate(f, lo, hi, 10, 1e-14);
                lo = hi;
            }
            a = split;
            if (a >= b) return sum;
        }
    }
    if (period_scale <= 0.0) return sum + integrate_adaptive(f, a, b, tol);
    const double panel = M_PI / period_scale;
    const auto n_panels = static_cast<long>(std::ceil((b - a) / panel));
    if (n_panels <= 1) return sum + integrate_adaptive(f, a, b, tol);
    double lo = a;
    const double panel_tol = std::max(tol / std::sqrt(double(n_panels)), 1e-15);
    for (long k = 0; k < n_panels; ++k) {
        const double hi = std::min(b, a + (k + 1) * panel);
        sum += GK::integrate(f, lo, hi, 8, panel_tol);
        lo = hi;
        if (lo >= b) break;
    }
    return sum;
}

double structure_scale(const SpectralDensity& j) {
    switch (j.kind) {
        case SpectralDensity::Kind::OhmicFamily:
            return j.omega_c;
        case SpectralDensity::Kind::Drude:
            return j.gamma;
        case SpectralDensity::Kind::Tabulated:
            return std::max((j.tab_omega.back() - j.tab_omega.front()) / 8.0,
                            1e-6 * j.tab_omega.back());
    }
    return j.omega_max;
}

double coth_stable(double x) {
    const double ax = std::abs(x);
    if (ax < 1e-4) return 1.0 / x + x / 3.0;
    if (ax > 350.0) return x > 0 ? 1.0 : -1.0;
    return 1.0 / std::tanh(x);
}

std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t splitmix64_next(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    return splitmix64_mix(x);
}

}  // namespace

SpectralDensity SpectralDensity::ohmic(double s, double eta, double omega_c, CutoffShape cutoff,
                                       double omega_max) {
    if (s <= 0.0) throw std::invalid_argument("SpectralDensity: ohmic exponent s must be > 0");
    if (omega_c <= 0.0) throw std::invalid_argument("SpectralDensity: cutoff must be > 0");
    SpectralDensity j;
    j.kind = Kind::OhmicFamily;
    j.s = s;
    j.eta = eta;
    j.omega_c = omega_c;
    j.cutoff = cutoff;
    if (omega_max <= 0.0)
        omega_max = (cutoff == CutoffShape::Hard) ? omega_c : (40.0 + 10.0 * s) * omega_c;
    j.omega_max = omega_max;
    return j;
}

SpectralDensity SpectralDensity::drude(double lambda, double gamma, double omega_max) {
    if (gamma <= 0.0) throw std::invalid_argument("SpectralDensity: drude gamma must be > 0");
    SpectralDensity j;
    j.kind = Kind::Drude;
    j.lambda = lambda;
    j.gamma = gamma;
    j.omega_max = omega_max > 0.0 ? omega_max : 500.0 * gamma;
    return j;
}

SpectralDensity SpectralDensity::tabulated(std::vector<double> omega, std::vector<double> jv) {
    if (omega.size() != jv.size() || omega.size() < 2)
        throw std::invalid_argument("SpectralDensity: tabulated data needs >= 2 samples");
    for (std::size_t k = 1; k < omega.size(); ++k)
        if (omega[k] <= omega[k - 1])
            throw std::invalid_argument("SpectralDensity: tabulated frequencies not increasing");
    for (double v : jv)
        if (v < 0.0) throw std::invalid_argument("SpectralDensity: tabulated J must be >= 0");
    SpectralDensity j;
    j.kind = Kind::Tabulated;
    j.omega_max = omega.back();
    j.tab_omega = std::move(omega);
    j.tab_j = std::move(jv);
    return j;
}

double SpectralDensity::operator()(double omega) const {
    return eval_spectral_density(*this, omega);
}

double eval_spectral_density(const SpectralDensity& j, double omega) {
    if (omega < 0.0) throw std::domain_error("eval_spectral_density: omega must be >= 0");
    switch (j.kind) {
        case SpectralDensity::Kind::OhmicFamily: {
            if (omega == 0.0) return 0.0;
            if (j.cutoff == CutoffShape::Hard && omega > j.omega_c) return 0.0;
            double v = j.eta * std::pow(omega, j.s) * std::pow(j.omega_c, 1.0 - j.s);
            if (j.cutoff == CutoffShape::Exponential) v *= std::exp(-omega / j.omega_c);
            return v;
        }
        case SpectralDensity::Kind::Drude:
            return j.lambda * j.gamma * j.gamma / M_PI * omega /
                   (omega * omega + j.gamma * j.gamma);
        case SpectralDensity::Kind::Tabulated: {
            const auto& w = j.tab_omega;
            if (omega <= w.front() || omega >= w.back()) {
                if (omega == w.front()) return j.tab_j.front();
                if (omega == w.back()) return j.tab_j.back();
                return 0.0;
            }
            const auto it = std::upper_bound(w.begin(), w.end(), omega);
            const auto hi = static_cast<std::size_t>(it - w.begin());
            const double f = (omega - w[hi - 1]) / (w[hi] - w[hi - 1]);
            return (1.0 - f) * j.tab_j[hi - 1] + f * j.tab_j[hi];
        }
    }
    throw std::logic_error("eval_spectral_density: bad kind");
}

double spectral_moment(const SpectralDensity& j, int k) {
    return integrate_adaptive([&](double w) { return std::pow(w, k) * j(w); }, 0.0, j.omega_max);
}

double thermal_occupation(double beta, double omega) {
    if (std::isinf(beta)) return 0.0;
    const double x = beta * omega;
    if (x > 700.0) return 0.0;
    return 1.0 / std::expm1(x);
}

Complex correlation_zero_T(const SpectralDensity& j, double t) {
    if (!std::isfinite(t)) throw std::invalid_argument("correlation_zero_T: t not finite");
    const double at = std::abs(t);
    const double re =
        integrate_oscillatory([&](double w) { return j(w) * std::cos(w * at); }, 0.0, j.omega_max, at, structure_scale(j));
    const double im =
        integrate_oscillatory([&](double w) { return j(w) * std::sin(w * at); }, 0.0, j.omega_max, at, structure_scale(j));
    const Complex a(re, -im);
    return t >= 0.0 ? a : std::conj(a);
}

Complex correlation_thermal(const BathSpec& bath, double t) {
    if (bath.statistics == Statistics::Fermionic)
        throw std::invalid_argument("correlation_thermal: fermionic baths are not supported");
    if (bath.zero_temperature()) return correlation_zero_T(bath.j, t);
    const double beta = bath.beta;
    const double at = std::abs(t);
    const auto& j = bath.j;
    const double re = integrate_oscillatory(
        [&](double w) { return j(w) * coth_stable(0.5 * beta * w) * std::cos(w * at); }, 0.0,
        j.omega_max, at, structure_scale(j));
    const double im = integrate_oscillatory(
        [&](double w) { return j(w) * std::sin(w * at); }, 0.0, j.omega_max, at, structure_scale(j));
    const Complex a(re, -im);
    return t >= 0.0 ? a : std::conj(a);
}

Complex correlation_minus(const BathSpec& bath, double t) {
    if (bath.statistics == Statistics::Fermionic)
        throw std::invalid_argument("correlation_minus: fermionic baths are not supported");
    if (bath.zero_temperature()) return correlation_zero_T(bath.j, t);
    const double beta = bath.beta;
    const double at = std::abs(t);
    const auto& j = bath.j;
    const double re = integrate_oscillatory(
        [&](double w) { return j(w) * (thermal_occupation(beta, w) + 1.0) * std::cos(w * at); },
        0.0, j.omega_max, at, structure_scale(j));
    const double im = integrate_oscillatory(
        [&](double w) { return j(w) * (thermal_occupation(beta, w) + 1.0) * std::sin(w * at); },
        0.0, j.omega_max, at, structure_scale(j));
    const Complex a(re, -im);
    return t >= 0.0 ? a : std::conj(a);
}

Complex correlation_plus(const BathSpec& bath, double t) {
    if (bath.statistics == Statistics::Fermionic)
        throw std::invalid_argument("correlation_plus: fermionic baths are not supported");
    if (bath.zero_temperature()) return Complex(0.0, 0.0);
    const double beta = bath.beta;
    const double at = std::abs(t);
    const auto& j = bath.j;
    const double re = integrate_oscillatory(
        [&](double w) { return j(w) * thermal_occupation(beta, w) * std::cos(w * at); }, 0.0,
        j.omega_max, at, structure_scale(j));
    const double im = integrate_oscillatory(
        [&](double w) { return j(w) * thermal_occupation(beta, w) * std::sin(w * at); }, 0.0,
        j.omega_max, at, structure_scale(j));
    const Complex a(re, im);
    return t >= 0.0 ? a : std::conj(a);
}

CorrelationSum matsubara_expansion(const BathSpec& bath, int m_max) {
    if (bath.j.kind != SpectralDensity::Kind::Drude)
        throw std::invalid_argument("matsubara_expansion: requires a Drude spectral density");
    if (bath.zero_temperature())
        throw std::invalid_argument("matsubara_expansion: requires finite temperature");
    if (m_max < 0) throw std::invalid_argument("matsubara_expansion: m_max must be >= 0");
    const double lambda = bath.j.lambda;
    const double gamma = bath.j.gamma;
    const double beta = bath.beta;

    CorrelationSum sum;
    const Complex c0 =
        0.5 * gamma * gamma * lambda * Complex(1.0 / std::tan(0.5 * beta * gamma), -1.0);
    sum.terms.push_back({c0, Complex(gamma, 0.0)});
    for (int m = 1; m <= m_max; ++m) {
        const double mu = 2.0 * M_PI * m / beta;
        if (std::abs(mu - gamma) < 1e-12 * gamma)
            throw NumericalError(
                "matsubara_expansion: Matsubara frequency degenerate with gamma; perturb beta");
        // residue of the coth poles: 2 gamma^2 lambda / beta (the quadrature
        // kernel is the arbiter; see the decisions ledger on the prefactor)
        const double c = 2.0 * gamma * gamma * lambda / beta * mu / (mu * mu - gamma * gamma);
        sum.terms.push_back({Complex(c, 0.0), Complex(mu, 0.0)});
    }
    return sum;
}

Complex drude_correlation_reference(const BathSpec& bath, double t) {
    const double gamma = bath.j.gamma;
    const double lambda = bath.j.lambda;
    const double beta = bath.beta;
    const double a = std::max({500.0 * gamma, 60.0 / beta, 120.0 / std::max(t, 1e-30)});

    SpectralDensity jfull = bath.j;
    jfull.omega_max = a;
    BathSpec truncated{jfull, beta, bath.statistics};
    Complex val = correlation_thermal(truncated, t);

    // tail of int_A^inf (lambda gamma^2/pi) w/(w^2+gamma^2) e^{-iwt} dw via
    // w/(w^2+g^2) = sum_p (-1)^p g^{2p} / w^{2p+1} and the asymptotic series
    // int_A^inf e^{-iwt} w^{-k} dw = e^{-iAt} sum_j (-1)^j (k)_j/((it)^{j+1} A^{k+j}).
    const Complex it(0.0, t);
    const Complex phase = std::exp(-I * a * t);
    Complex tail = 0.0;
    for (int p = 0; p <= 2; ++p) {
        const int k = 2 * p + 1;
        Complex term = 0.0;
        double poch = 1.0;
        double apow = std::pow(a, k);
        Complex itpow = it;
        for (int jj = 0; jj <= 6; ++jj) {
            term += ((jj % 2 == 0) ? 1.0 : -1.0) * poch / (itpow * apow);
            poch *= (k + jj);
            apow *= a;
            itpow *= it;
        }
        tail += ((p % 2 == 0) ? 1.0 : -1.0) * std::pow(gamma, 2 * p) * term;
    }
    tail *= lambda * gamma * gamma / M_PI * phase;
    return val + tail;
}

CorrelationSum matsubara_expansion_auto(const BathSpec& bath, double t_max, double tol,
                                        int m_cap) {
    const int n_test = 32;
    std::vector<double> ts(n_test);
    std::vector<Complex> ref(n_test);
    for (int k = 0; k < n_test; ++k) {
        ts[k] = t_max * (k + 1) / n_test;
        ref[k] = drude_correlation_reference(bath, ts[k]);
    }
    const double scale = std::abs(drude_correlation_reference(bath, ts.front() * 1e-3));

    int m_max = 0;
    while (true) {
        CorrelationSum sum = matsubara_expansion(bath, m_max);
        double resid = 0.0;
        for (int k = 0; k < n_test; ++k) resid = std::max(resid, std::abs(sum(ts[k]) - ref[k]));
        if (resid <= tol * scale) return sum;
        if (m_max >= m_cap)
            throw NumericalError("matsubara_expansion_auto: no convergence at m_max cap");
        m_max += 4;
    }
}

// ---------------------------------------------------------------------------
// Exponential-sum fitting (Prony init + Levenberg-Marquardt refinement).
// ---------------------------------------------------------------------------

namespace {

// Amplitudes for fixed exponents by (weighted) linear least squares; returns
// the unweighted max residual.
double solve_amplitudes(const std::vector<Complex>& samples, double dt,
                        const std::vector<Complex>& mus, const Eigen::VectorXd& weights,
                        std::vector<Complex>& cs) {
    const int m = static_cast<int>(samples.size());
    const int p = static_cast<int>(mus.size());
    Matrix v(m, p);
    Vector f(m);
    for (int k = 0; k < m; ++k) {
        f(k) = samples[k] * weights(k);
        for (int i = 0; i < p; ++i) v(k, i) = std::exp(-mus[i] * (k * dt)) * weights(k);
    }
    Vector c = v.colPivHouseholderQr().solve(f);
    cs.assign(c.data(), c.data() + p);
    double worst = 0.0;
    for (int k = 0; k < m; ++k) {
        Complex model = 0.0;
        for (int i = 0; i < p; ++i) model += cs[i] * std::exp(-mus[i] * (k * dt));
        worst = std::max(worst, std::abs(model - samples[k]));
    }
    return worst;
}

// Weighted Levenberg-Marquardt over the exponents (variable projection).
double lm_refine(const std::vector<Complex>& samples, double dt, const Eigen::VectorXd& weights,
                 std::vector<Complex>& mus, std::vector<Complex>& cs, int max_iters) {
    const int m = static_cast<int>(samples.size());
    const int p = static_cast<int>(mus.size());
    double resid = solve_amplitudes(samples, dt, mus, weights, cs);
    double lm = 1e-3;
    for (int iter = 0; iter < max_iters; ++iter) {
        Eigen::MatrixXd jac(2 * m, 2 * p);
        Eigen::VectorXd r(2 * m);
        for (int k = 0; k < m; ++k) {
            Complex model = 0.0;
            for (int i = 0; i < p; ++i) model += cs[i] * std::exp(-mus[i] * (k * dt));
            const Complex rk = (samples[k] - model) * weights(k);
            r(2 * k) = rk.real();
            r(2 * k + 1) = rk.imag();
            for (int i = 0; i < p; ++i) {
                const Complex d = cs[i] * (k * dt) * std::exp(-mus[i] * (k * dt)) * weights(k);
                jac(2 * k, 2 * i) = d.real();
                jac(2 * k + 1, 2 * i) = d.imag();
                const Complex di = I * d;
                jac(2 * k, 2 * i + 1) = di.real();
                jac(2 * k + 1, 2 * i + 1) = di.imag();
            }
        }
        Eigen::MatrixXd jtj = jac.transpose() * jac;
        Eigen::VectorXd jtr = jac.transpose() * r;
        jtj.diagonal().array() += lm * (jtj.diagonal().array().abs() + 1e-12);
        Eigen::VectorXd step = jtj.ldlt().solve(jtr);

        std::vector<Complex> mus_new(p);
        for (int i = 0; i < p; ++i) {
            mus_new[i] = mus[i] + Complex(step(2 * i), step(2 * i + 1));
            if (mus_new[i].real() < 1e-12) mus_new[i].real(1e-12);
        }
        std::vector<Complex> cs_new;
        const double resid_new = solve_amplitudes(samples, dt, mus_new, weights, cs_new);
        if (resid_new < resid) {
            mus = std::move(mus_new);
            cs = std::move(cs_new);
            const bool converged = resid - resid_new < 1e-15 * resid;
            resid = resid_new;
            if (converged) break;
            lm = std::max(lm * 0.3, 1e-12);
        } else {
            lm *= 8.0;
            if (lm > 1e10) break;
        }
    }
    return resid;
}

}  // namespace

FitResult fit_correlation(const std::vector<Complex>& samples, double dt, int n_exp, double tol) {
    if (n_exp < 1) throw std::invalid_argument("fit_correlation: n_exp must be >= 1");
    const int m = static_cast<int>(samples.size());
    if (m < 2 * n_exp + 2) throw std::invalid_argument("fit_correlation: too few samples");
    for (const auto& s : samples)
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
            throw std::invalid_argument("fit_correlation: non-finite samples");

    // Matrix-pencil (Prony-type) initialization: shifted Hankel pencil on the
    // leading singular subspace, robust for signals that are not exact
    // exponential sums.
    const int p = n_exp;
    const int pencil = std::max(p + 1, m / 3);
    const int rows = m - pencil;
    Matrix h0(rows, pencil), h1(rows, pencil);
    for (int k = 0; k < rows; ++k)
        for (int i = 0; i < pencil; ++i) {
            h0(k, i) = samples[k + i];
            h1(k, i) = samples[k + i + 1];
        }
    Eigen::JacobiSVD<Matrix> svd(h0, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Matrix up = svd.matrixU().leftCols(p);
    const Matrix vp = svd.matrixV().leftCols(p);
    Eigen::VectorXd sp = svd.singularValues().head(p);
    for (int i = 0; i < p; ++i) sp(i) = std::max(sp(i), 1e-14 * svd.singularValues()(0));
    const Matrix pencil_mat =
        sp.cwiseInverse().asDiagonal() * Matrix(up.adjoint() * h1 * vp);
    Eigen::ComplexEigenSolver<Matrix> pencil_eig(pencil_mat);
    std::vector<Complex> roots(pencil_eig.eigenvalues().data(),
                               pencil_eig.eigenvalues().data() + p);

    std::vector<Complex> mus(p);
    for (int i = 0; i < p; ++i) {
        Complex z = roots[i];
        double az = std::abs(z);
        if (!(az > 0.0)) z = Complex(0.5, 0.0), az = 0.5;
        if (az >= 1.0) z *= (1.0 - 1e-9) / az;  // enforce Re mu > 0
        mus[i] = -std::log(z) / dt;
    }

    // least-squares refinement, then Lawson reweighting toward the minimax
    // fit; deterministic multistart around the pencil exponents
    std::vector<Complex> best_mus, best_cs;
    double resid = std::numeric_limits<double>::infinity();
    auto run_from = [&](std::vector<Complex> mu_init) {
        std::vector<Complex> cs;
        Eigen::VectorXd weights = Eigen::VectorXd::Ones(m);
        double cur = lm_refine(samples, dt, weights, mu_init, cs, 120);
        std::vector<Complex> loc_mus = mu_init, loc_cs = cs;
        double loc_best = cur;
        for (int round = 0; round < 8; ++round) {
            for (int k = 0; k < m; ++k) {
                Complex model = 0.0;
                for (int i = 0; i < p; ++i) model += cs[i] * std::exp(-mu_init[i] * (k * dt));
                weights(k) *= std::abs(samples[k] - model) + 1e-12 * loc_best;
            }
            weights *= double(m) / weights.sum();
            cur = lm_refine(samples, dt, weights, mu_init, cs, 40);
            if (cur < loc_best) {
                loc_best = cur;
                loc_mus = mu_init;
                loc_cs = cs;
            }
        }
        if (loc_best < resid) {
            resid = loc_best;
            best_mus = std::move(loc_mus);
            best_cs = std::move(loc_cs);
        }
    };
    run_from(mus);
    CounterRng rng(0xF17C0441ULL, p);
    for (int restart = 0; restart < 5; ++restart) {
        std::vector<Complex> jittered = mus;
        for (auto& mu : jittered) {
            mu *= std::exp(0.35 * rng.normal());
            mu += Complex(0.0, 0.25 * rng.normal() * std::abs(mu));
            if (mu.real() < 1e-12) mu.real(1e-12);
        }
        run_from(jittered);
    }
    if (!(resid <= tol))
        throw NumericalError("fit_correlation: residual " + std::to_string(resid) +
                             " exceeds tolerance");
    FitResult out;
    out.max_residual = resid;
    for (int i = 0; i < p; ++i) out.sum.terms.push_back({best_cs[i], best_mus[i]});
    return out;
}

MarkovRate markov_rate(const KernelFn& alpha, double t_cut) {
    if (t_cut <= 0.0) throw std::invalid_argument("markov_rate: t_cut must be > 0");
    MarkovRate out;
    const double re =
        integrate_adaptive([&](double tau) { return alpha(tau).real(); }, 0.0, t_cut, 1e-12);
    const double im =
        integrate_adaptive([&](double tau) { return alpha(tau).imag(); }, 0.0, t_cut, 1e-12);
    out.gamma = Complex(re, im);
    out.tail_decayed = std::abs(alpha(t_cut)) < 1e-10 * std::abs(alpha(0.0));
    return out;
}

// ---------------------------------------------------------------------------
// RNG and noise.
// ---------------------------------------------------------------------------

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) {
    // nonlinear stream separation: a plain affine offset would make streams
    // shifted copies of one counter sequence
    state_ = splitmix64_mix(splitmix64_mix(seed + 0x9E3779B97F4A7C15ULL) + stream);
}

std::uint64_t CounterRng::next_u64() { return splitmix64_next(state_); }

double CounterRng::uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
}

Complex CounterRng::complex_normal() {
    const double re = normal();
    const double im = normal();
    return Complex(re * M_SQRT1_2, im * M_SQRT1_2);
}

namespace {

double kernel_decay_length(const KernelFn& alpha, double dt, int n) {
    const double a0 = std::abs(alpha(0.0));
    if (a0 == 0.0) return n * dt;
    const double horizon = 8.0 * n * dt;
    double t = n * dt;
    while (t < horizon) {
        if (std::abs(alpha(t)) < 1e-12 * a0) return t;
        t += n * dt * 0.25;
    }
    return horizon;
}

}  // namespace

ColoredNoiseGenerator::ColoredNoiseGenerator(const KernelFn& alpha, const TimeGrid& grid) {
    n_ = grid.size();
    dt_ = grid.dt;
    build(alpha, kernel_decay_length(alpha, dt_, n_));
}

ColoredNoiseGenerator::ColoredNoiseGenerator(const CorrelationSum& alpha, const TimeGrid& grid) {
    n_ = grid.size();
    dt_ = grid.dt;
    double decay = n_ * dt_;
    for (const auto& term : alpha.terms)
        if (term.mu.real() > 0.0)
            decay = std::max(decay, 28.0 / term.mu.real());
    build([&alpha](double t) { return alpha(t); }, decay);
}

void ColoredNoiseGenerator::build(const KernelFn& alpha, double decay_len) {
    const double a0 = std::abs(alpha(0.0));

    if (n_ > 128) {
        int ext = n_ + static_cast<int>(std::ceil(decay_len / dt_));
        int nfft = 1;
        while (nfft < 2 * ext) nfft *= 2;
        std::vector<Complex> col(nfft);
        for (int k = 0; k <= nfft / 2; ++k) col[k] = alpha(k * dt_);
        for (int k = nfft / 2 + 1; k < nfft; ++k) col[k] = std::conj(alpha((nfft - k) * dt_));
        Eigen::FFT<double> fft;
        std::vector<Complex> lam(nfft);
        fft.fwd(lam, col);
        double lmin = 0.0, lmax = 0.0;
        for (const auto& l : lam) {
            lmin = std::min(lmin, l.real());
            lmax = std::max(lmax, l.real());
        }
        if (lmin > -1e-8 * std::max(lmax, a0)) {
            circulant_ = true;
            embed_n_ = nfft;
            eigs_.resize(nfft);
            for (int k = 0; k < nfft; ++k)
                eigs_[k] = std::sqrt(std::max(lam[k].real(), 0.0) / nfft);
            return;
        }
    }

    // short grids (or failed embedding): Cholesky of the covariance matrix
    Matrix cov(n_, n_);
    for (int i = 0; i < n_; ++i) {
        cov(i, i) = alpha(0.0).real();
        for (int k = i + 1; k < n_; ++k) {
            const Complex a = alpha((k - i) * dt_);
            cov(k, i) = a;
            cov(i, k) = std::conj(a);
        }
    }
    const double jitter = 1e-12 * std::max(a0, 1.0);
    cov.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
        cov.diagonal().array() += 1e4 * jitter;
        llt.compute(cov);
        if (llt.info() != Eigen::Success)
            throw NumericalError(
                "ColoredNoiseGenerator: covariance not positive semidefinite (unphysical kernel)");
    }
    chol_ = llt.matrixL();
}

std::vector<Complex> ColoredNoiseGenerator::sample(std::uint64_t seed,
                                                   std::uint64_t trajectory_index) const {
    CounterRng rng(seed, trajectory_index);
    std::vector<Complex> z(n_);
    if (circulant_) {
        std::vector<Complex> w(embed_n_);
        for (int k = 0; k < embed_n_; ++k) w[k] = eigs_[k] * rng.complex_normal();
        Eigen::FFT<double> fft;
        std::vector<Complex> full(embed_n_);
        fft.inv(full, w);
        for (int k = 0; k < n_; ++k) z[k] = full[k] * double(embed_n_);
    } else {
        Vector g(n_);
        for (int k = 0; k < n_; ++k) g(k) = rng.complex_normal();
        Vector zz = chol_ * g;
        for (int k = 0; k < n_; ++k) z[k] = zz(k);
    }
    return z;
}

std::vector<Complex> sample_colored_noise(const KernelFn& alpha, const TimeGrid& grid,
                                          std::uint64_t seed, std::uint64_t trajectory_index) {
    return ColoredNoiseGenerator(alpha, grid).sample(seed, trajectory_index);
}

std::vector<Complex> sample_colored_noise(const CorrelationSum& alpha, const TimeGrid& grid,
                                          std::uint64_t seed, std::uint64_t trajectory_index) {
    return ColoredNoiseGenerator(alpha, grid).sample(seed, trajectory_index);
}

SlnNoiseGenerator::SlnNoiseGenerator(const RealKernelFn& alpha_r, const RealKernelFn& alpha_i,
                                     const TimeGrid& grid) {
    n_ = grid.size();
    const double dt = grid.dt;

    Eigen::MatrixXd a(n_, n_);
    Eigen::MatrixXd c(n_, n_);
    for (int i = 0; i < n_; ++i) {
        for (int k = 0; k < n_; ++k) {
            a(i, k) = alpha_r((i - k) * dt);
            // theta(t-t') with the symmetric convention theta(0) = 1/2
            if (i > k)
                c(i, k) = alpha_i((i - k) * dt);
            else if (i == k)
                c(i, k) = 0.5 * alpha_i(0.0);
            else
                c(i, k) = 0.0;
        }
    }
    const double jitter = 1e-10 * std::max(std::abs(alpha_r(0.0)), 1.0);
    a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
        throw NumericalError("SlnNoiseGenerator: alpha_R kernel not positive semidefinite");
    chol_r_ = llt.matrixL();

    // K = L^{-1} C; then with xi = L g1 the pair
    //   nu = -i K^T g1 + chol(K^T K) g2
    // realizes M[xi nu] = -i C and M[nu nu] = 0.
    k_ = chol_r_.triangularView<Eigen::Lower>().solve(c);
    Eigen::MatrixXd ktk = k_.transpose() * k_;
    ktk.diagonal().array() += 1e-12 * (ktk.trace() / n_ + 1.0);
    Eigen::LLT<Eigen::MatrixXd> llt2(ktk);
    if (llt2.info() != Eigen::Success)
        throw NumericalError("SlnNoiseGenerator: cross-kernel factorization failed");
    chol_kk_ = llt2.matrixL();
}

SlnNoise SlnNoiseGenerator::sample(std::uint64_t seed, std::uint64_t trajectory_index) const {
    CounterRng rng(seed, trajectory_index);
    Eigen::VectorXd g1(n_), g2(n_);
    for (int k = 0; k < n_; ++k) g1(k) = rng.normal();
    for (int k = 0; k < n_; ++k) g2(k) = rng.normal();

    Eigen::VectorXd xi = chol_r_ * g1;
    Eigen::VectorXd nu_re = chol_kk_ * g2;
    Eigen::VectorXd nu_im = -(k_.transpose() * g1);

    SlnNoise out;
    out.xi.resize(n_);
    out.nu.resize(n_);
    for (int k = 0; k < n_; ++k) {
        out.xi[k] = Complex(xi(k), 0.0);
        out.nu[k] = Complex(nu_re(k), nu_im(k));
    }
    return out;
}

SlnNoise sample_sln_noise_pair(const std::function<double(double)>& alpha_r,
                               const std::function<double(double)>& alpha_i,
                               const TimeGrid& grid, std::uint64_t seed,
                               std::uint64_t trajectory_index) {
    return SlnNoiseGenerator(alpha_r, alpha_i, grid).sample(seed, trajectory_index);
}

SpectralDensity load_tabulated_spectral_density(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open tabulated spectral density: " + path);
    std::vector<double> w, j;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        double a, b;
        if (ss >> a >> b) {
            w.push_back(a);
            j.push_back(b);
        }
    }
    return SpectralDensity::tabulated(std::move(w), std::move(j));
}

}  // namespace nmqs
