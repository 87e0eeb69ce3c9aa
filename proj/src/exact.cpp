// SPDX-License-Identifier: Apache-2.0

#include "nmqs/exact.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace nmqs {

namespace {

using GK = boost::math::quadrature::gauss_kronrod<double, 15>;

double integrate_panels(const std::function<double(double)>& f, double a, double b,
                        double period_scale) {
    if (b <= a) return 0.0;
    const double panel = period_scale > 0.0 ? M_PI / period_scale : (b - a);
    const auto n_panels = static_cast<long>(std::max(1.0, std::ceil((b - a) / panel)));
    double sum = 0.0;
    double lo = a;
    for (long k = 0; k < n_panels; ++k) {
        const double hi = std::min(b, a + (k + 1) * ((b - a) / double(n_panels)));
        sum += GK::integrate(f, lo, hi, 8, 1e-13);
        lo = hi;
    }
    return sum;
}

}  // namespace

VolterraSolution volterra_solve(Complex c0, const KernelFn& alpha, const TimeGrid& grid,
                                Complex y0, double growth_limit) {
    const int n = grid.n_steps;
    const double dt = grid.dt;

    // kernel stored reversed so the memory sums are contiguous dot products
    Vector krev(n + 1);
    for (int k = 0; k <= n; ++k) krev(n - k) = alpha(k * dt);
    const Complex ker0 = krev(n);

    VolterraSolution sol;
    sol.y.assign(n + 1, Complex(0.0));
    sol.ydot.assign(n + 1, Complex(0.0));
    sol.y[0] = y0;
    sol.ydot[0] = c0 * y0;
    Vector y = Vector::Zero(n + 1);
    y(0) = y0;

    const double y0_scale = std::max(std::abs(y0), 1.0);

    for (int m = 0; m < n; ++m) {
        // trapezoid memory integrals; the new endpoint enters with weight
        // dt/2 * ker(0)
        Complex i_m = 0.0;
        if (m > 0) {
            i_m = krev.segment(n - m, m + 1).cwiseProduct(y.segment(0, m + 1)).sum();
            i_m -= 0.5 * (krev(n - m) * y(0) + ker0 * y(m));
            i_m *= dt;
        }
        Complex s = krev.segment(n - m - 1, m + 1).cwiseProduct(y.segment(0, m + 1)).sum();
        s -= 0.5 * krev(n - m - 1) * y(0);
        s *= dt;
        const Complex denom = 1.0 - 0.5 * dt * c0 + 0.25 * dt * dt * ker0;
        const Complex rhs = y(m) + 0.5 * dt * (c0 * y(m) - i_m) - 0.5 * dt * s;
        y(m + 1) = rhs / denom;
        if (!std::isfinite(std::abs(y(m + 1))) || std::abs(y(m + 1)) > growth_limit * y0_scale)
            throw NumericalError("volterra_solve: unstable step (try a finer grid) at t = " +
                                 std::to_string(grid.point(m + 1)));
        sol.y[m + 1] = y(m + 1);
        sol.ydot[m + 1] = c0 * y(m + 1) - (s + 0.5 * dt * ker0 * y(m + 1));
    }
    return sol;
}

AmplitudeSolution one_excitation_amplitude(const KernelFn& alpha, const TimeGrid& grid) {
    // |A| <= 1 for physical kernels; the growth guard catches instability early
    VolterraSolution sol = volterra_solve(Complex(0.0), alpha, grid, Complex(1.0), 1e2);
    AmplitudeSolution out;
    out.grid = grid;
    out.a = std::move(sol.y);
    out.adot = std::move(sol.ydot);
    return out;
}

ExactTclRates exact_tcl_rates(const KernelFn& alpha, double omega_s, const TimeGrid& grid) {
    AmplitudeSolution amp = one_excitation_amplitude(alpha, grid);
    const int n = grid.size();

    ExactTclRates out;
    out.grid = grid;
    out.delta.resize(n);
    out.gamma1.resize(n);
    out.a = amp.a;

    std::vector<Complex> u(n);
    for (int k = 0; k < n; ++k) {
        // |u| crossing zero is detected at grid resolution: the zero lies
        // inside a step once |A| < |Adot| dt
        if (std::abs(amp.a[k]) < std::max(1e-10, std::abs(amp.adot[k]) * grid.dt))
            throw NumericalError("exact_tcl_rates: map not invertible (|u| ~ 0) at t = " +
                                 std::to_string(grid.point(k)));
        u[k] = std::exp(-I * omega_s * grid.point(k)) * amp.a[k];
        const Complex ratio = amp.adot[k] / amp.a[k];  // udot/u = -i w_s + Adot/A
        out.gamma1[k] = -ratio.real();
        out.delta[k] = omega_s - ratio.imag();
    }

    SystemSpec sys(0.5 * omega_s * (sigma_z() + Matrix::Identity(2, 2)), {sigma_minus()},
                   {"sigma_minus"});
    TimeLocalSpec spec;
    spec.system = sys;
    const double t0 = grid.t0, dt = grid.dt;
    const int last = n - 1;
    auto gamma_tab = out.gamma1;
    auto delta_tab = out.delta;
    // rates live on the solver grid; RK4 interior stages fall on half points,
    // resolved by linear interpolation
    auto interp = [t0, dt, last](const std::vector<double>& tab, double t) {
        const double x = std::clamp((t - t0) / dt, 0.0, double(last));
        const int k = std::min(static_cast<int>(x), last - 1);
        const double f = x - k;
        return (1.0 - f) * tab[k] + f * tab[k + 1];
    };
    spec.channel_ops.push_back([](double) { return sigma_minus(); });
    spec.channel_rates.push_back(
        [gamma_tab, interp](double t) { return interp(gamma_tab, t); });
    Matrix proj_e = 0.5 * (sigma_z() + Matrix::Identity(2, 2));
    spec.hamiltonian = [delta_tab, interp, proj_e](double t) {
        return Matrix(interp(delta_tab, t) * proj_e);
    };
    out.spec = std::move(spec);
    return out;
}

QbmCoefficients qbm_coefficients(const KernelFn& alpha, const KernelFn& alpha_plus,
                                 double omega_s, const TimeGrid& grid, Statistics statistics) {
    const int n = grid.size();
    const double dt = grid.dt;

    VolterraSolution usol = volterra_solve(-I * omega_s, alpha, grid, Complex(1.0), 1e6);

    QbmCoefficients out;
    out.grid = grid;
    out.statistics = statistics;
    out.u = usol.y;
    out.delta.resize(n);
    out.gamma1.resize(n);
    out.gamma2.resize(n);
    out.v.assign(n, Complex(0.0));

    for (int k = 0; k < n; ++k) {
        if (std::abs(usol.y[k]) < 1e-10)
            throw NumericalError("qbm_coefficients: map not invertible at t = " +
                                 std::to_string(grid.point(k)));
        const Complex ratio = usol.ydot[k] / usol.y[k];
        out.gamma1[k] = -ratio.real();
        out.delta[k] = -ratio.imag();
    }

    // v(t) = int_0^t ds int_0^t ds' u(t-s) conj(alpha_plus(s-s')) u*(t-s')
    Matrix kmat(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) kmat(i, j) = std::conj(alpha_plus((i - j) * dt));
    for (int m = 1; m < n; ++m) {
        Vector q(m + 1);
        for (int i = 0; i <= m; ++i) {
            const double w = (i == 0 || i == m) ? 0.5 * dt : dt;
            q(i) = w * usol.y[m - i];
        }
        out.v[m] = q.transpose() * kmat.topLeftCorner(m + 1, m + 1) * q.conjugate();
    }

    // dv/dt by a fourth-order stencil, lower order at the edges
    std::vector<double> vr(n);
    for (int k = 0; k < n; ++k) vr[k] = out.v[k].real();
    auto vdot = [&](int k) {
        if (k >= 2 && k + 2 < n)
            return (-vr[k + 2] + 8.0 * vr[k + 1] - 8.0 * vr[k - 1] + vr[k - 2]) / (12.0 * dt);
        if (k == 0) return (-3.0 * vr[0] + 4.0 * vr[1] - vr[2]) / (2.0 * dt);
        if (k == n - 1) return (3.0 * vr[n - 1] - 4.0 * vr[n - 2] + vr[n - 3]) / (2.0 * dt);
        return (vr[k + 1] - vr[k - 1]) / (2.0 * dt);
    };
    // gamma2 = vdot - 2 v Re[udot/u], with Re[udot/u] = -gamma1
    for (int k = 0; k < n; ++k) out.gamma2[k] = vdot(k) + 2.0 * vr[k] * out.gamma1[k];
    return out;
}

double dephasing_gamma(const SpectralDensity& j, double beta, double t) {
    const double at = std::abs(t);
    auto f = [&](double w) {
        const double c = std::isinf(beta)
                             ? 1.0
                             : (0.5 * beta * w < 1e-4 ? 2.0 / (beta * w) + beta * w / 6.0
                                                      : 1.0 / std::tanh(0.5 * beta * w));
        double osc;
        if (w * at < 1e-4) {
            osc = 0.5 * at * at * (1.0 - w * w * at * at / 12.0);
        } else {
            osc = (1.0 - std::cos(w * at)) / (w * w);
        }
        return j(w) * c * osc;
    };
    return integrate_panels(f, 0.0, j.omega_max, at);
}

double dephasing_phase(const SpectralDensity& j, double t) {
    const double at = std::abs(t);
    auto f = [&](double w) {
        double osc;
        if (w * at < 1e-4) {
            const double x = w * at;
            osc = at * x * x / 6.0 * (1.0 - x * x / 20.0);
        } else {
            osc = (w * at - std::sin(w * at)) / (w * w);
        }
        return j(w) * osc;
    };
    const double v = integrate_panels(f, 0.0, j.omega_max, at);
    return t >= 0.0 ? v : -v;
}

Trajectory dephasing_exact(const SystemSpec& system, const BathSpec& bath,
                           const DensityMatrix& rho0, const TimeGrid& grid) {
    if (system.couplings.empty()) throw std::invalid_argument("dephasing_exact: no coupling");
    const Matrix& h = system.h;
    const Matrix& l = system.couplings[0];
    if (hermiticity_defect(l) > 1e-12)
        throw std::domain_error("dephasing_exact: coupling must be Hermitian");
    const Matrix comm = l * h - h * l;
    if (comm.cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff()))
        throw std::domain_error("dephasing_exact: coupling does not commute with H_S");

    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    const Matrix basis = es.eigenvectors();
    const RealVector eps = es.eigenvalues();
    const Matrix l_eig = basis.adjoint() * l * basis;
    if ((l_eig - Matrix(l_eig.diagonal().asDiagonal())).cwiseAbs().maxCoeff() > 1e-10)
        throw std::domain_error("dephasing_exact: coupling not diagonal in the H_S eigenbasis");
    const int d = system.dim();
    RealVector lv(d);
    for (int k = 0; k < d; ++k) lv(k) = l_eig(k, k).real();

    const Matrix rho_eig = basis.adjoint() * rho0.rho * basis;

    Trajectory out;
    out.reserve(grid.size());
    for (int k = 0; k < grid.size(); ++k) {
        const double t = grid.point(k);
        const double gam = k == 0 ? 0.0 : dephasing_gamma(bath.j, bath.beta, t);
        const double phi = k == 0 ? 0.0 : dephasing_phase(bath.j, t);
        Matrix rt(d, d);
        for (int a = 0; a < d; ++a) {
            for (int b = 0; b < d; ++b) {
                if (a == b) {
                    rt(a, b) = rho_eig(a, b);
                    continue;
                }
                const double dl = lv(a) - lv(b);
                const double dl2 = lv(a) * lv(a) - lv(b) * lv(b);
                rt(a, b) = rho_eig(a, b) * std::exp(Complex(-dl * dl * gam, 0.0)) *
                           std::exp(I * (dl2 * phi - (eps(a) - eps(b)) * t));
            }
        }
        out.push_back(basis * rt * basis.adjoint());
    }
    return out;
}

}  // namespace nmqs
