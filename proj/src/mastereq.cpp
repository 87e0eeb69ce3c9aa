// SPDX-License-Identifier: Apache-2.0

#include "nmqs/mastereq.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace nmqs {

namespace {

using GK = boost::math::quadrature::gauss_kronrod<double, 15>;

void check_invariants(const Matrix& rho, double t, const InvariantOptions& opts) {
    const double tr_err = std::abs(rho.trace() - Complex(1.0));
    const double h_err = hermiticity_defect(rho);
    if (tr_err > 10.0 * opts.tol_trace || h_err > 10.0 * opts.tol_herm)
        throw NumericalError("master-equation step too large: invariant breach at t = " +
                             std::to_string(t));
    if (opts.check_positivity && min_eigenvalue(rho) < -10.0 * opts.tol_pos)
        throw NumericalError("master-equation step too large: positivity breach at t = " +
                             std::to_string(t));
}

using MatrixRhs = std::function<Matrix(double, const Matrix&)>;

Trajectory propagate_matrix(const MatrixRhs& rhs, const Matrix& x0, const TimeGrid& grid) {
    const int d = static_cast<int>(x0.rows());
    auto vec_rhs = [&](double t, const Vector& y) { return vec(rhs(t, unvec(y, d))); };
    std::vector<Vector> ys = integrate(vec_rhs, vec(x0), grid);
    Trajectory out;
    out.reserve(ys.size());
    for (const auto& y : ys) out.push_back(unvec(y, d));
    return out;
}

Matrix lindblad_rhs(const LindbladSpec& spec, const Matrix& rho) {
    Matrix drho = -I * (spec.system.h * rho - rho * spec.system.h);
    for (std::size_t k = 0; k < spec.rates.size(); ++k) {
        const double rate = spec.rates[k];
        if (rate == 0.0) continue;
        const Matrix& c = spec.system.couplings[k];
        const Matrix cdc = c.adjoint() * c;
        drho += rate * (2.0 * c * rho * c.adjoint() - cdc * rho - rho * cdc);
    }
    return drho;
}

Matrix time_local_rhs(const TimeLocalSpec& spec, double t, const Matrix& rho) {
    const Matrix h = spec.h_at(t);
    Matrix drho = -I * (h * rho - rho * h);
    for (std::size_t k = 0; k < spec.channel_ops.size(); ++k) {
        const double rate = spec.channel_rates[k](t);
        if (rate == 0.0) continue;
        const Matrix c = spec.channel_ops[k](t);
        const Matrix cdc = c.adjoint() * c;
        drho += rate * (2.0 * c * rho * c.adjoint() - cdc * rho - rho * cdc);
    }
    return drho;
}

}  // namespace

SystemSpec::SystemSpec(Matrix h_, std::vector<Matrix> couplings_, std::vector<std::string> labels_)
    : h(std::move(h_)), couplings(std::move(couplings_)), labels(std::move(labels_)) {
    if (h.rows() != h.cols()) throw std::invalid_argument("SystemSpec: H_S not square");
    if (hermiticity_defect(h) > 1e-10)
        throw std::invalid_argument("SystemSpec: H_S not Hermitian within 1e-10");
    for (const auto& c : couplings)
        if (c.rows() != h.rows() || c.cols() != h.cols())
            throw std::invalid_argument("SystemSpec: coupling dimension mismatch");
    if (labels.empty())
        for (std::size_t k = 0; k < couplings.size(); ++k)
            labels.push_back("L" + std::to_string(k));
}

LindbladSpec::LindbladSpec(SystemSpec s, std::vector<double> r)
    : system(std::move(s)), rates(std::move(r)) {
    if (rates.size() != system.couplings.size())
        throw std::invalid_argument("LindbladSpec: one rate per channel required");
    for (double rate : rates)
        if (rate < 0.0) throw std::invalid_argument("LindbladSpec: rates must be >= 0");
}

Trajectory lindblad_propagate_linear(const LindbladSpec& spec, const Matrix& x0,
                                     const TimeGrid& grid) {
    return propagate_matrix([&](double, const Matrix& x) { return lindblad_rhs(spec, x); }, x0,
                            grid);
}

Trajectory lindblad_evolve(const LindbladSpec& spec, const DensityMatrix& rho0,
                           const TimeGrid& grid, const InvariantOptions& opts) {
    Trajectory traj = lindblad_propagate_linear(spec, rho0.rho, grid);
    for (int k = 0; k < grid.size(); ++k) check_invariants(traj[k], grid.point(k), opts);
    return traj;
}

Trajectory time_local_propagate_linear(const TimeLocalSpec& spec, const Matrix& x0,
                                       const TimeGrid& grid) {
    return propagate_matrix([&](double t, const Matrix& x) { return time_local_rhs(spec, t, x); },
                            x0, grid);
}

Trajectory time_local_evolve(const TimeLocalSpec& spec, const DensityMatrix& rho0,
                             const TimeGrid& grid, const InvariantOptions& opts) {
    Trajectory traj = time_local_propagate_linear(spec, rho0.rho, grid);
    const InvariantOptions no_pos{opts.tol_trace, opts.tol_herm, opts.tol_pos, false};
    // positivity is not asserted: negative rates may transiently break it
    for (int k = 0; k < grid.size(); ++k) check_invariants(traj[k], grid.point(k), no_pos);
    return traj;
}

// ---------------------------------------------------------------------------
// TCL2
// ---------------------------------------------------------------------------

Trajectory tcl2_evolve_kernels(const SystemSpec& system, const KernelFn& alpha_minus,
                               const KernelFn& alpha_plus, const DensityMatrix& rho0,
                               const TimeGrid& grid, const Tcl2Options& opts) {
    if (system.couplings.size() != 1)
        throw std::invalid_argument(
            "tcl2_evolve: exactly one coupling operator is supported (matrix-kernel "
            "multi-coupling is an extension hook)");
    const double work = double(grid.n_steps) * double(grid.n_steps);
    if (work > opts.work_budget)
        throw std::invalid_argument(
            "tcl2_evolve: n_steps^2 exceeds the work budget; use a coarser grid");

    const Matrix& l = system.couplings[0];
    const int n_half = 2 * grid.n_steps;  // RK4 stages live on half steps
    const double hs = 0.5 * grid.dt;

    // interaction-picture operators by eigendecomposition of H_S
    Eigen::SelfAdjointEigenSolver<Matrix> es(system.h);
    const Matrix basis = es.eigenvectors();
    const RealVector eps = es.eigenvalues();
    const int d = system.dim();
    const Matrix l_eig = basis.adjoint() * l * basis;

    auto v_minus_s = [&](const Matrix& op_eig, double s) {
        Matrix m(d, d);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                m(a, b) = op_eig(a, b) * std::exp(-I * (eps(a) - eps(b)) * s);
        return Matrix(basis * m * basis.adjoint());
    };

    // cumulative trapezoid of alpha(s) V_{-s} L over the dense half grid
    std::vector<Matrix> f_minus(n_half + 1), f_plus(n_half + 1);
    const Matrix ldag_eig = l_eig.adjoint();
    Matrix acc_m = Matrix::Zero(d, d), acc_p = Matrix::Zero(d, d);
    Matrix prev_m = alpha_minus(0.0) * v_minus_s(l_eig, 0.0);
    Matrix prev_p = alpha_plus(0.0) * v_minus_s(ldag_eig, 0.0);
    f_minus[0] = acc_m;
    f_plus[0] = acc_p;
    for (int k = 1; k <= n_half; ++k) {
        const double s = k * hs;
        const Matrix cur_m = alpha_minus(s) * v_minus_s(l_eig, s);
        const Matrix cur_p = alpha_plus(s) * v_minus_s(ldag_eig, s);
        acc_m += 0.5 * hs * (prev_m + cur_m);
        acc_p += 0.5 * hs * (prev_p + cur_p);
        f_minus[k] = acc_m;
        f_plus[k] = acc_p;
        prev_m = cur_m;
        prev_p = cur_p;
    }

    const Matrix ldag = l.adjoint();
    auto rhs = [&](double t, const Matrix& rho) {
        int k = static_cast<int>(std::lround((t - grid.t0) / hs));
        k = std::clamp(k, 0, n_half);
        const Matrix& fm = f_minus[k];
        const Matrix& fp = f_plus[k];
        Matrix drho = -I * (system.h * rho - rho * system.h);
        const Matrix term = (fp * rho) * l - l * (fp * rho) + (fm * rho) * ldag - ldag * (fm * rho);
        drho += term + term.adjoint();
        return drho;
    };

    Trajectory traj = propagate_matrix(rhs, rho0.rho, grid);
    for (int k = 0; k < grid.size(); ++k) check_invariants(traj[k], grid.point(k), opts.invariants);
    return traj;
}

Trajectory tcl2_evolve(const SystemSpec& system, const BathSpec& bath, const DensityMatrix& rho0,
                       const TimeGrid& grid, const Tcl2Options& opts) {
    if (bath.statistics == Statistics::Fermionic)
        throw std::invalid_argument("tcl2_evolve: fermionic baths are not supported");

    // sample the kernels once on the dense half grid, then interpolate exactly
    // at the stage points
    const int n_half = 2 * grid.n_steps;
    const double hs = 0.5 * grid.dt;
    std::vector<Complex> am(n_half + 1), ap(n_half + 1);
    for (int k = 0; k <= n_half; ++k) {
        am[k] = correlation_minus(bath, k * hs);
        ap[k] = bath.zero_temperature() ? Complex(0.0) : correlation_plus(bath, k * hs);
    }
    auto lookup = [hs](const std::vector<Complex>& tab, double s) {
        int k = static_cast<int>(std::lround(s / hs));
        k = std::clamp(k, 0, static_cast<int>(tab.size()) - 1);
        return tab[k];
    };
    return tcl2_evolve_kernels(
        system, [&](double s) { return lookup(am, s); }, [&](double s) { return lookup(ap, s); },
        rho0, grid, opts);
}

// ---------------------------------------------------------------------------
// Secular Markov generator
// ---------------------------------------------------------------------------

namespace {

double principal_value_rate_shift(const SpectralDensity& j, double beta, bool plus_branch,
                                  double omega, double omega_max) {
    // PV int_0^wmax f(nu)/(omega - nu) dnu for the downward branch
    // (f = J (n+1)), and int f(nu)/(nu - omega) for the upward branch (f = J n)
    auto f = [&](double nu) {
        const double n = thermal_occupation(beta, nu);
        return plus_branch ? j(nu) * n : j(nu) * (n + 1.0);
    };
    const double sgn = plus_branch ? -1.0 : 1.0;  // both reduce to PV over (omega - nu)
    if (omega <= 0.0) {
        // no singularity inside the domain
        const double v = GK::integrate([&](double nu) { return f(nu) / (omega - nu); }, 1e-12,
                                       omega_max, 12, 1e-10);
        return sgn * v;
    }
    const double a = std::min(2.0 * omega, omega_max);
    const double f_at = f(omega);
    const double reg = GK::integrate(
        [&](double nu) {
            const double den = omega - nu;
            if (std::abs(den) < 1e-14 * omega) return 0.0;
            return (f(nu) - f_at) / den;
        },
        0.0, a, 12, 1e-10);
    double log_term = 0.0;
    if (a < 2.0 * omega) log_term = f_at * std::log(omega / (a - omega));
    // PV of f_at/(omega-nu) over [0, 2 omega] vanishes by symmetry
    double outer = 0.0;
    if (a < omega_max)
        outer = GK::integrate([&](double nu) { return f(nu) / (omega - nu); }, a, omega_max, 12,
                              1e-10);
    return sgn * (reg + log_term + outer);
}

}  // namespace

LindbladSpec SecularGenerator::lindblad() const {
    SystemSpec sys;
    sys.h = h_corrected;
    std::vector<double> rates;
    for (const auto& ch : channels) {
        sys.couplings.push_back(ch.op);
        sys.labels.push_back((ch.upward ? "up@" : "down@") + std::to_string(ch.omega));
        rates.push_back(ch.rate);
    }
    return LindbladSpec(std::move(sys), std::move(rates));
}

SecularGenerator secular_markov_generator(const SystemSpec& system, const BathSpec& bath) {
    if (bath.statistics == Statistics::Fermionic)
        throw std::invalid_argument("secular_markov_generator: fermionic baths not supported");
    if (system.couplings.empty())
        throw std::invalid_argument("secular_markov_generator: no coupling operator");

    Eigen::SelfAdjointEigenSolver<Matrix> es(system.h);
    const RealVector eps = es.eigenvalues();
    const Matrix basis = es.eigenvectors();
    const int d = system.dim();

    for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b)
            if (std::abs(eps(a) - eps(b)) < 1e-8)
                throw std::invalid_argument(
                    "secular_markov_generator: degenerate H_S spectrum, secular approximation "
                    "inapplicable");

    // collect distinct positive Bohr frequencies, check pairwise separation
    std::vector<double> gaps;
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            if (eps(b) - eps(a) > 1e-8) gaps.push_back(eps(b) - eps(a));
    std::sort(gaps.begin(), gaps.end());
    for (std::size_t k = 1; k < gaps.size(); ++k)
        if (gaps[k] - gaps[k - 1] < 1e-8 && gaps[k] - gaps[k - 1] > 0.0)
            throw std::invalid_argument(
                "secular_markov_generator: Bohr frequencies not pairwise distinct within 1e-8");
    gaps.erase(std::unique(gaps.begin(), gaps.end(),
                           [](double x, double y) { return std::abs(x - y) < 1e-8; }),
               gaps.end());

    const double beta = bath.beta;
    const auto& j = bath.j;

    auto rate_down = [&](double w) {
        if (w > 1e-8) return M_PI * j(w) * (thermal_occupation(beta, w) + 1.0);
        // w -> 0 limit through J(w) n(w)
        const double w0 = 1e-7 * std::max(j.omega_max, 1.0);
        return std::isinf(beta) ? M_PI * j(w0) : M_PI * (j(w0) * thermal_occupation(beta, w0) + j(w0));
    };
    auto rate_up = [&](double w) {
        if (std::isinf(beta)) return 0.0;
        if (w > 1e-8) return M_PI * j(w) * thermal_occupation(beta, w);
        const double w0 = 1e-7 * std::max(j.omega_max, 1.0);
        return M_PI * j(w0) * thermal_occupation(beta, w0);
    };

    SecularGenerator gen;
    gen.h_corrected = system.h;

    for (const Matrix& l : system.couplings) {
        const Matrix l_eig = basis.adjoint() * l * basis;

        auto eigenop = [&](double w) {
            Matrix m = Matrix::Zero(d, d);
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b)
                    if (std::abs((eps(b) - eps(a)) - w) < 1e-8) m(a, b) = l_eig(a, b);
            return m;
        };

        std::vector<double> all_gaps = gaps;
        all_gaps.insert(all_gaps.begin(), 0.0);
        for (double w : all_gaps) {
            const Matrix lw_eig = eigenop(w);
            if (lw_eig.cwiseAbs().maxCoeff() < 1e-14) continue;
            const Matrix lw = basis * lw_eig * basis.adjoint();

            const double gd = rate_down(w);
            const double gu = rate_up(w);
            if (gd < -1e-12 || gu < -1e-12)
                throw NumericalError("secular_markov_generator: negative rate from bath kernel");

            if (gd > 0.0) gen.channels.push_back({w, lw, gd, false});
            if (gu > 0.0) gen.channels.push_back({w, lw.adjoint(), gu, true});

            const double shift_down =
                principal_value_rate_shift(j, beta, false, w, j.omega_max);
            const double shift_up =
                std::isinf(beta) ? 0.0 : principal_value_rate_shift(j, beta, true, w, j.omega_max);
            gen.h_corrected += shift_down * (lw.adjoint() * lw) + shift_up * (lw * lw.adjoint());
        }
    }
    return gen;
}

Complex qrt_two_time(const LindbladSpec& spec, const Matrix& a, const Matrix& b,
                     const DensityMatrix& rho0, double t2, double t1, double dt) {
    if (t1 < t2) throw std::domain_error("qrt_two_time: requires t1 >= t2");
    if (dt <= 0.0) throw std::invalid_argument("qrt_two_time: dt must be positive");

    Matrix rho_t2 = rho0.rho;
    if (t2 > 0.0) {
        const int n2 = std::max(1, static_cast<int>(std::ceil(t2 / dt)));
        rho_t2 = lindblad_propagate_linear(spec, rho0.rho, TimeGrid(0.0, t2 / n2, n2)).back();
    }
    Matrix x = b * rho_t2;
    if (t1 > t2) {
        const int n1 = std::max(1, static_cast<int>(std::ceil((t1 - t2) / dt)));
        x = lindblad_propagate_linear(spec, x, TimeGrid(t2, (t1 - t2) / n1, n1)).back();
    }
    return (a * x).trace();
}

// ---------------------------------------------------------------------------
// NIBA
// ---------------------------------------------------------------------------

namespace {

double niba_q1(const SpectralDensity& j, double s) {
    if (s == 0.0) return 0.0;
    auto f = [&](double w) {
        if (w * s < 1e-6) return j(w) * s / w;
        return j(w) * std::sin(w * s) / (w * w);
    };
    const double panel = M_PI / s;
    const auto n_panels =
        static_cast<long>(std::max(1.0, std::ceil(j.omega_max / panel)));
    double sum = 0.0;
    for (long k = 0; k < n_panels; ++k) {
        const double lo = j.omega_max * double(k) / double(n_panels);
        const double hi = j.omega_max * double(k + 1) / double(n_panels);
        sum += GK::integrate(f, lo, hi, 10, 1e-12);
    }
    return sum;
}

double niba_q2(const SpectralDensity& j, double beta, double s) {
    if (s == 0.0) return 0.0;
    auto f = [&](double w) {
        const double bw = 0.5 * beta * w;
        const double c = std::isinf(beta) ? 1.0
                         : (bw < 1e-4 ? 1.0 / bw + bw / 3.0 : 1.0 / std::tanh(bw));
        double osc;
        if (w * s < 1e-4)
            osc = 0.5 * s * s * (1.0 - w * w * s * s / 12.0);
        else
            osc = (1.0 - std::cos(w * s)) / (w * w);
        return j(w) * c * osc;
    };
    const double panel = M_PI / s;
    const auto n_panels =
        static_cast<long>(std::max(1.0, std::ceil(j.omega_max / panel)));
    double sum = 0.0;
    for (long k = 0; k < n_panels; ++k) {
        const double lo = j.omega_max * double(k) / double(n_panels);
        const double hi = j.omega_max * double(k + 1) / double(n_panels);
        sum += GK::integrate(f, lo, hi, 10, 1e-12);
    }
    if (!std::isfinite(sum))
        throw NumericalError("niba: Q2 integral did not converge for this spectral density");
    return sum;
}

}  // namespace

double niba_kernel(double delta0, const SpectralDensity& j, double beta, double s) {
    const double q1 = niba_q1(j, s);
    const double q2 = niba_q2(j, beta, s);
    return delta0 * delta0 * std::cos(q1 / M_PI) * std::exp(-q2 / M_PI);
}

std::vector<double> niba_evolve(double delta0, const SpectralDensity& j, double beta,
                                const TimeGrid& grid) {
    const int n = grid.n_steps;
    const double dt = grid.dt;

    std::vector<double> f(n + 1);
    for (int k = 0; k <= n; ++k) f[k] = niba_kernel(delta0, j, beta, k * dt);

    // dP/dt = -(f * P); trapezoid-in-kernel Volterra stepping (implicit in the
    // new endpoint), factorized initial condition P(0) = 1
    std::vector<double> p(n + 1, 0.0);
    p[0] = 1.0;
    auto memory = [&](int m) {
        if (m == 0) return 0.0;
        double acc = 0.5 * (f[m] * p[0] + f[0] * p[m]);
        for (int k = 1; k < m; ++k) acc += f[m - k] * p[k];
        return acc * dt;
    };
    for (int m = 0; m < n; ++m) {
        const double i_m = memory(m);
        double s = 0.5 * f[m + 1] * p[0];
        for (int k = 1; k <= m; ++k) s += f[m + 1 - k] * p[k];
        s *= dt;
        const double denom = 1.0 + 0.25 * dt * dt * f[0];
        p[m + 1] = (p[m] - 0.5 * dt * (i_m + s)) / denom;
        if (!std::isfinite(p[m + 1]))
            throw NumericalError("niba_evolve: non-finite population at step " +
                                 std::to_string(m + 1));
    }
    return p;
}

}  // namespace nmqs
