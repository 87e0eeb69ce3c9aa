// SPDX-License-Identifier: Apache-2.0

#include "nmqs/chain.hpp"

#include <cmath>

namespace nmqs {

namespace {

struct QuadGrid {
    std::vector<double> x;
    std::vector<double> w;  // includes the weight function value
};

// Gauss-Legendre rule by Golub-Welsch.
void legendre_rule(int k, std::vector<double>& nodes, std::vector<double>& weights) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
    for (int i = 1; i < k; ++i) {
        const double b = i / std::sqrt(4.0 * i * i - 1.0);
        t(i, i - 1) = b;
        t(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    nodes.resize(k);
    weights.resize(k);
    for (int i = 0; i < k; ++i) {
        nodes[i] = es.eigenvalues()(i);
        weights[i] = 2.0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    }
}

// Composite Gauss grid on [0, 1] against the rescaled weight
// w(x) = J(omega_c x) omega_c, quadratically graded toward 0 so cutoff
// weights concentrated at low frequency stay resolved.
QuadGrid build_quad_grid(const SpectralDensity& j, int min_nodes) {
    const int per_panel = 24;
    const int n_panels = std::max(16, (min_nodes + per_panel - 1) / per_panel);
    std::vector<double> gl_x, gl_w;
    legendre_rule(per_panel, gl_x, gl_w);

    const double wc = j.omega_max;
    QuadGrid grid;
    grid.x.reserve(static_cast<std::size_t>(n_panels) * per_panel);
    grid.w.reserve(grid.x.capacity());
    for (int p = 0; p < n_panels; ++p) {
        const double a = std::pow(double(p) / n_panels, 2.0);
        const double b = std::pow(double(p + 1) / n_panels, 2.0);
        for (int i = 0; i < per_panel; ++i) {
            const double x = 0.5 * (a + b) + 0.5 * (b - a) * gl_x[i];
            grid.x.push_back(x);
            grid.w.push_back(0.5 * (b - a) * gl_w[i] * j(wc * x) * wc);
        }
    }
    return grid;
}

}  // namespace

ChainCoefficients recurrence_coefficients(const SpectralDensity& j, int order) {
    if (order < 1) throw std::invalid_argument("recurrence_coefficients: order must be >= 1");
    // oversampling >= 8N keeps the Stieltjes products accurate; 16N leaves
    // headroom for the highest-degree polynomials
    const QuadGrid grid = build_quad_grid(j, std::max(16 * order, 768));
    const auto m = grid.x.size();

    ChainCoefficients out;
    out.omega_c = j.omega_max;
    out.alphas.resize(order);
    out.betas.resize(order);

    // discretized Stieltjes on the quadrature nodes
    std::vector<double> p_prev(m, 0.0), p_cur(m, 1.0);
    double nrm2_cur = 0.0;
    for (std::size_t i = 0; i < m; ++i) nrm2_cur += grid.w[i];
    if (!(nrm2_cur > 0.0))
        throw NumericalError("recurrence_coefficients: weight has no mass (beta_0 <= 0)");
    out.betas[0] = nrm2_cur;  // physical zeroth moment by construction

    for (int n = 0; n < order; ++n) {
        double xs = 0.0;
        for (std::size_t i = 0; i < m; ++i) xs += grid.w[i] * grid.x[i] * p_cur[i] * p_cur[i];
        out.alphas[n] = xs / nrm2_cur;
        if (n + 1 == order) break;
        double nrm2_next = 0.0;
        const double beta_rec = n == 0 ? 0.0 : out.betas[n];
        std::vector<double> p_next(m);
        for (std::size_t i = 0; i < m; ++i) {
            p_next[i] =
                (grid.x[i] - out.alphas[n]) * p_cur[i] - (n == 0 ? 0.0 : beta_rec * p_prev[i]);
            nrm2_next += grid.w[i] * p_next[i] * p_next[i];
        }
        out.betas[n + 1] = nrm2_next / nrm2_cur;
        if (!(out.betas[n + 1] > 0.0) || !std::isfinite(out.betas[n + 1]))
            throw NumericalError("recurrence_coefficients: beta lost positivity at n = " +
                                 std::to_string(n + 1) + " (ill-conditioned weight)");
        p_prev.swap(p_cur);
        p_cur.swap(p_next);
        nrm2_cur = nrm2_next;
    }
    return out;
}

StarDiscretization gauss_discretize(const ChainCoefficients& coeffs) {
    const int n = coeffs.order();
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) t(i, i) = coeffs.alphas[i];
    for (int i = 1; i < n; ++i) {
        const double b = std::sqrt(coeffs.betas[i]);
        t(i, i - 1) = b;
        t(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    if (es.info() != Eigen::Success)
        throw NumericalError("gauss_discretize: Jacobi matrix eigensolver failed");

    StarDiscretization star;
    star.nodes.resize(n);
    star.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        star.nodes[i] = coeffs.omega_c * es.eigenvalues()(i);
        const double q = es.eigenvectors()(0, i);
        star.weights[i] = coeffs.betas[0] * q * q;
    }
    return star;
}

ChainHamiltonian star_to_chain(const ChainCoefficients& coeffs) {
    ChainHamiltonian chain;
    chain.sys_coupling = coeffs.sys_coupling();
    chain.energies.resize(coeffs.order());
    for (int n = 0; n < coeffs.order(); ++n) chain.energies[n] = coeffs.energy(n);
    for (int n = 1; n < coeffs.order(); ++n) chain.hoppings.push_back(coeffs.hopping(n));
    return chain;
}

namespace {

OneExcitationResult propagate_single_excitation(const Eigen::MatrixXd& h, const TimeGrid& grid) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    if (es.info() != Eigen::Success)
        throw NumericalError("one-excitation propagation: eigensolver failed");
    const Eigen::MatrixXd& v = es.eigenvectors();
    const Eigen::VectorXd& lam = es.eigenvalues();
    const int n = static_cast<int>(h.rows());

    OneExcitationResult out;
    out.amplitude.reserve(grid.size());
    const double detector = 1e-8;
    for (int k = 0; k < grid.size(); ++k) {
        const double t = grid.point(k);
        Complex a = 0.0;
        Complex edge = 0.0;
        for (int i = 0; i < n; ++i) {
            const Complex ph = std::exp(-I * lam(i) * t);
            a += v(0, i) * v(0, i) * ph;
            edge += v(n - 1, i) * v(0, i) * ph;
        }
        out.amplitude.push_back(a);
        if (out.recurrence_time < 0.0 && std::norm(edge) > detector) out.recurrence_time = t;
    }
    return out;
}

}  // namespace

OneExcitationResult chain_propagate_one_excitation(double omega_sys,
                                                   const ChainHamiltonian& chain, int n_sites,
                                                   const TimeGrid& grid) {
    const int available = static_cast<int>(chain.energies.size());
    if (n_sites < 1 || n_sites > available)
        throw std::invalid_argument("chain_propagate_one_excitation: n_sites out of range");
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_sites + 1, n_sites + 1);
    h(0, 0) = omega_sys;
    h(0, 1) = h(1, 0) = chain.sys_coupling;
    for (int n = 0; n < n_sites; ++n) h(n + 1, n + 1) = chain.energies[n];
    for (int n = 0; n + 1 < n_sites; ++n) h(n + 1, n + 2) = h(n + 2, n + 1) = chain.hoppings[n];
    return propagate_single_excitation(h, grid);
}

OneExcitationResult star_propagate_one_excitation(double omega_sys,
                                                  const StarDiscretization& star,
                                                  const TimeGrid& grid) {
    const int n = star.order();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n + 1, n + 1);
    h(0, 0) = omega_sys;
    for (int p = 0; p < n; ++p) {
        h(p + 1, p + 1) = star.nodes[p];
        h(0, p + 1) = h(p + 1, 0) = std::sqrt(star.weights[p]);
    }
    return propagate_single_excitation(h, grid);
}

double orthogonality_defect(const SpectralDensity& j, const ChainCoefficients& coeffs,
                            int n_check) {
    const int order = std::min(n_check + 1, coeffs.order());
    const QuadGrid grid = build_quad_grid(j, std::max(8 * coeffs.order(), 512));
    const auto m = grid.x.size();

    std::vector<std::vector<double>> polys;
    std::vector<double> p_prev(m, 0.0), p_cur(m, 1.0);
    polys.push_back(p_cur);
    for (int n = 0; n + 1 < order; ++n) {
        std::vector<double> p_next(m);
        for (std::size_t i = 0; i < m; ++i)
            p_next[i] = (grid.x[i] - coeffs.alphas[n]) * p_cur[i] -
                        (n == 0 ? 0.0 : coeffs.betas[n] * p_prev[i]);
        polys.push_back(p_next);
        p_prev.swap(p_cur);
        p_cur.swap(p_next);
    }

    std::vector<double> nrm(order);
    for (int n = 0; n < order; ++n) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += grid.w[i] * polys[n][i] * polys[n][i];
        nrm[n] = std::sqrt(s);
    }
    double worst = 0.0;
    for (int a = 0; a < order; ++a) {
        for (int b = 0; b < a; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += grid.w[i] * polys[a][i] * polys[b][i];
            worst = std::max(worst, std::abs(s) / (nrm[a] * nrm[b]));
        }
    }
    return worst;
}

}  // namespace nmqs
