// SPDX-License-Identifier: Apache-2.0

#include "nmqs/nonmarkov.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SVD>

namespace nmqs {

namespace {

void check_trace_preserving(const Matrix& lam, int d, double t) {
    // dual condition: vec(I)^+ Lambda = vec(I)^+
    const Vector vid = vec(Matrix::Identity(d, d));
    const Vector defect = lam.adjoint() * vid - vid;
    if (defect.cwiseAbs().maxCoeff() > 1e-8)
        throw NumericalError("build_map: map not trace-preserving at t = " + std::to_string(t));
}

Matrix pinv_guarded(const Matrix& lam, double t) {
    Eigen::JacobiSVD<Matrix> svd(lam, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (!(smin > 0.0) || smax / smin > 1e10)
        throw NumericalError("dynamical map not invertible (condition number guard) at t = " +
                             std::to_string(t));
    return svd.solve(Matrix::Identity(lam.rows(), lam.cols()));
}

}  // namespace

DynamicalMap build_map(const LinearSolver& solver, const TimeGrid& grid, int dim) {
    // fixed, structured check state: mixed diagonal plus small coherences
    Matrix rho = Matrix::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) rho(i, i) = 2.0 * (i + 1);
    for (int i = 0; i + 1 < dim; ++i) {
        rho(i, i + 1) = Complex(0.3, 0.1);
        rho(i + 1, i) = Complex(0.3, -0.1);
    }
    rho /= rho.trace().real();
    return build_map(solver, grid, dim, rho);
}

DynamicalMap build_map(const LinearSolver& solver, const TimeGrid& grid, int dim,
                       const Matrix& rho_check) {
    DynamicalMap map;
    map.grid = grid;
    map.dim = dim;
    map.maps.assign(grid.size(), Matrix::Zero(dim * dim, dim * dim));

    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            Matrix unit = Matrix::Zero(dim, dim);
            unit(i, j) = 1.0;
            Trajectory traj = solver(unit);
            if (static_cast<int>(traj.size()) != grid.size())
                throw std::invalid_argument("build_map: solver returned wrong trajectory length");
            for (int k = 0; k < grid.size(); ++k) map.maps[k].col(i + dim * j) = vec(traj[k]);
        }
    }
    for (int k = 0; k < grid.size(); ++k) check_trace_preserving(map.maps[k], dim, grid.point(k));

    // linearity check against a direct run
    Trajectory direct = solver(rho_check);
    double worst = 0.0;
    for (int k = 0; k < grid.size(); ++k) {
        const Matrix via_map = apply_map(map, k, rho_check);
        worst = std::max(worst, (via_map - direct[k]).cwiseAbs().maxCoeff());
    }
    if (worst > 1e-6)
        throw std::invalid_argument(
            "build_map: solver is not linear in its initial state (mismatch " +
            std::to_string(worst) + ")");
    return map;
}

Matrix apply_map(const DynamicalMap& map, int k, const Matrix& rho) {
    return unvec(map.maps.at(k) * vec(rho), map.dim);
}

double trace_distance(const Matrix& rho1, const Matrix& rho2) {
    if (rho1.rows() != rho2.rows() || rho1.cols() != rho2.cols())
        throw std::invalid_argument("trace_distance: dimension mismatch");
    return 0.5 * trace_norm(rho1 - rho2);
}

// ---------------------------------------------------------------------------
// BLP
// ---------------------------------------------------------------------------

namespace {

// positive-slope integral of D(t): centered-difference slope, trapezoid over
// the positive-sigma intervals
double positive_variation(const std::vector<double>& dist, double dt) {
    const int n = static_cast<int>(dist.size());
    std::vector<double> sigma(n, 0.0);
    for (int k = 1; k + 1 < n; ++k) sigma[k] = (dist[k + 1] - dist[k - 1]) / (2.0 * dt);
    sigma[0] = (dist[1] - dist[0]) / dt;
    sigma[n - 1] = (dist[n - 1] - dist[n - 2]) / dt;
    double acc = 0.0;
    for (int k = 0; k + 1 < n; ++k)
        acc += 0.5 * dt * (std::max(sigma[k], 0.0) + std::max(sigma[k + 1], 0.0));
    return acc;
}

std::vector<double> distance_series(const DynamicalMap& map, const Matrix& delta0) {
    std::vector<double> out(map.maps.size());
    for (std::size_t k = 0; k < map.maps.size(); ++k)
        out[k] = 0.5 * trace_norm(unvec(map.maps[k] * vec(delta0), map.dim));
    return out;
}

Matrix bloch_delta(double theta, double phi) {
    // rho_+ - rho_- = n . sigma for the antipodal pure pair along n
    const double nx = std::sin(theta) * std::cos(phi);
    const double ny = std::sin(theta) * std::sin(phi);
    const double nz = std::cos(theta);
    return nx * sigma_x() + ny * sigma_y() + nz * sigma_z();
}

}  // namespace

BlpResult blp_measure(const DynamicalMap& map, const BlpOptions& opts) {
    if (map.dim != 2)
        throw std::invalid_argument(
            "blp_measure: built-in pair strategy requires d = 2; supply explicit pairs");

    const double dt = map.grid.dt;
    double best = -1.0;
    double best_theta = 0.0, best_phi = 0.0;
    std::vector<double> best_series;

    auto eval_dir = [&](double theta, double phi) {
        const std::vector<double> dist = distance_series(map, bloch_delta(theta, phi));
        const double v = positive_variation(dist, dt);
        if (v > best) {
            best = v;
            best_theta = theta;
            best_phi = phi;
            best_series = dist;
        }
    };

    // Fibonacci sphere scan, then local refinement around the best direction
    const int n = std::max(opts.n_directions, 1);
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        eval_dir(std::acos(std::clamp(z, -1.0, 1.0)), golden * i);
    }
    double cap = M_PI / std::sqrt(double(n));
    for (int round = 0; round < opts.refine_rounds; ++round) {
        const double th0 = best_theta, ph0 = best_phi;
        for (int i = 0; i < 24; ++i) {
            const double ang = 2.0 * M_PI * i / 24.0;
            for (double frac : {0.35, 1.0}) {
                const double th = th0 + cap * frac * std::cos(ang);
                const double ph = ph0 + cap * frac * std::sin(ang) /
                                            std::max(std::sin(th0), 1e-3);
                eval_dir(std::clamp(th, 0.0, M_PI), ph);
            }
        }
        cap *= 0.4;
    }

    BlpResult res;
    res.value = best;
    res.best_distance = std::move(best_series);
    // differencing-noise heuristic: trace-norm evaluations carry ~1e-13 noise,
    // amplified by 1/dt in the slope
    const double noise_floor = 1e-12 / dt * map.grid.n_steps * dt;
    res.coarse_grid_warning = best > 0.0 && best < 10.0 * noise_floor;
    return res;
}

BlpResult blp_measure(const DynamicalMap& map,
                      const std::vector<std::pair<Matrix, Matrix>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("blp_measure: no pairs supplied");
    const double dt = map.grid.dt;
    BlpResult res;
    res.value = -1.0;
    for (const auto& [r1, r2] : pairs) {
        const std::vector<double> dist = distance_series(map, r1 - r2);
        const double v = positive_variation(dist, dt);
        if (v > res.value) {
            res.value = v;
            res.best_distance = dist;
        }
    }
    const double noise_floor = 1e-12 * map.grid.n_steps;
    res.coarse_grid_warning = res.value > 0.0 && res.value < 10.0 * noise_floor;
    return res;
}

// ---------------------------------------------------------------------------
// RHP
// ---------------------------------------------------------------------------

RhpResult rhp_measure(const DynamicalMap& map) {
    const int d = map.dim;
    const int n = static_cast<int>(map.maps.size());
    const double dt = map.grid.dt;

    RhpResult res;
    res.g.assign(n, 0.0);

    for (int k = 0; k + 1 < n; ++k) {
        const Matrix inv = pinv_guarded(map.maps[k], map.grid.point(k));
        const Matrix step = map.maps[k + 1] * inv;

        // Choi matrix of the intermediate map: (step (x) id)(|Phi><Phi|)
        Matrix choi = Matrix::Zero(d * d, d * d);
        for (int a = 0; a < d; ++a) {
            for (int b = 0; b < d; ++b) {
                Matrix unit = Matrix::Zero(d, d);
                unit(a, b) = 1.0;
                const Matrix mapped = unvec(step * vec(unit), d);
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j)
                        choi(i * d + a, j * d + b) += mapped(i, j) / double(d);
            }
        }
        res.g[k] = (trace_norm(choi) - 1.0) / dt;
    }

    double acc = 0.0;
    for (int k = 0; k + 2 < n; ++k)
        acc += 0.5 * dt * (std::max(res.g[k], 0.0) + std::max(res.g[k + 1], 0.0));
    res.value = acc;
    return res;
}

// ---------------------------------------------------------------------------
// Canonical rates
// ---------------------------------------------------------------------------

std::vector<Matrix> gell_mann_basis(int d) {
    std::vector<Matrix> basis;
    // symmetric and antisymmetric pairs
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < j; ++i) {
            Matrix s = Matrix::Zero(d, d);
            s(i, j) = s(j, i) = M_SQRT1_2;
            basis.push_back(s);
            Matrix a = Matrix::Zero(d, d);
            a(i, j) = Complex(0.0, -M_SQRT1_2);
            a(j, i) = Complex(0.0, M_SQRT1_2);
            basis.push_back(a);
        }
    }
    // diagonal ladder
    for (int l = 1; l < d; ++l) {
        Matrix m = Matrix::Zero(d, d);
        const double norm = 1.0 / std::sqrt(double(l) * (l + 1));
        for (int k = 0; k < l; ++k) m(k, k) = norm;
        m(l, l) = -double(l) * norm;
        basis.push_back(m);
    }
    return basis;
}

CanonicalRates canonical_rates(const DynamicalMap& map) {
    return canonical_rates(map, gell_mann_basis(map.dim));
}

CanonicalRates canonical_rates(const DynamicalMap& map, const std::vector<Matrix>& traceless) {
    const int d = map.dim;
    const int nb = d * d - 1;
    if (static_cast<int>(traceless.size()) != nb)
        throw std::invalid_argument("canonical_rates: basis must have d^2-1 traceless elements");
    const int n = static_cast<int>(map.maps.size());
    const double dt = map.grid.dt;

    std::vector<Matrix> g_ops;
    g_ops.push_back(Matrix::Identity(d, d) / std::sqrt(double(d)));
    for (const auto& g : traceless) g_ops.push_back(g);

    // superoperator basis elements G_j^T (x) G_i are Frobenius-orthonormal
    std::vector<Matrix> super_basis(g_ops.size() * g_ops.size());
    for (std::size_t i = 0; i < g_ops.size(); ++i)
        for (std::size_t j = 0; j < g_ops.size(); ++j)
            super_basis[i * g_ops.size() + j] = kron(g_ops[j].transpose(), g_ops[i]);

    CanonicalRates out;
    out.grid = map.grid;
    out.rates.resize(n);
    out.channels.resize(n);
    out.hamiltonians.resize(n);

    for (int k = 0; k < n; ++k) {
        Matrix dlam;
        if (k == 0)
            dlam = (map.maps[1] - map.maps[0]) / dt;
        else if (k == n - 1)
            dlam = (map.maps[n - 1] - map.maps[n - 2]) / dt;
        else
            dlam = (map.maps[k + 1] - map.maps[k - 1]) / (2.0 * dt);
        const Matrix gen = dlam * pinv_guarded(map.maps[k], map.grid.point(k));

        // c_ij = <G_j^T (x) G_i, L>
        Matrix c(d * d, d * d);
        for (int i = 0; i < d * d; ++i)
            for (int j = 0; j < d * d; ++j)
                c(i, j) = (super_basis[i * d * d + j].adjoint() * gen).trace();

        // Hamiltonian part from the i=0 / j=0 sector
        Matrix cc = Matrix::Zero(d, d);
        cc += c(0, 0) / (2.0 * double(d)) * Matrix::Identity(d, d);
        for (int i = 1; i < d * d; ++i) cc += c(i, 0) / std::sqrt(double(d)) * g_ops[i];
        out.hamiltonians[k] = 0.5 * I * (cc - cc.adjoint());

        Matrix dec = c.block(1, 1, nb, nb);
        out.max_herm_defect = std::max(out.max_herm_defect, hermiticity_defect(dec));
        dec = 0.5 * (dec + dec.adjoint());

        Eigen::SelfAdjointEigenSolver<Matrix> es(dec);
        std::vector<int> order(nb);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return es.eigenvalues()(a) > es.eigenvalues()(b); });
        for (int idx : order) {
            // the canonical form carries 2 C rho C^+ - {C^+C, rho}
            out.rates[k].push_back(0.5 * es.eigenvalues()(idx));
            Matrix ch = Matrix::Zero(d, d);
            for (int i = 0; i < nb; ++i) ch += es.eigenvectors()(i, idx) * g_ops[i + 1];
            out.channels[k].push_back(ch);
        }
    }
    out.warning = out.max_herm_defect > 1e-6;
    return out;
}

}  // namespace nmqs
