// SPDX-License-Identifier: Apache-2.0

#include "nmqs/core.hpp"

#include <Eigen/SVD>

namespace nmqs {

Matrix commutator_super(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("commutator_super: not square");
    return left_mult_super(a) - right_mult_super(a);
}

Matrix anticommutator_super(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("anticommutator_super: not square");
    return left_mult_super(a) + right_mult_super(a);
}

Matrix dissipator_super(const Matrix& c, double rate) {
    const Matrix cdc = c.adjoint() * c;
    return rate * (2.0 * kron(c.conjugate(), c) - left_mult_super(cdc) - right_mult_super(cdc));
}

double trace_norm(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("trace_norm: not square");
    Eigen::JacobiSVD<Matrix> svd(a);
    if (svd.info() != Eigen::Success) throw NumericalError("trace_norm: SVD failed");
    return svd.singularValues().sum();
}

Matrix sigma_x() {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

Matrix sigma_y() {
    Matrix m(2, 2);
    m << 0, -I, I, 0;
    return m;
}

Matrix sigma_z() {
    Matrix m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}

Matrix sigma_plus() {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = 1;
    return m;
}

Matrix sigma_minus() {
    Matrix m = Matrix::Zero(2, 2);
    m(1, 0) = 1;
    return m;
}

Matrix annihilation(int dim) {
    Matrix m = Matrix::Zero(dim, dim);
    for (int n = 1; n < dim; ++n) m(n - 1, n) = std::sqrt(double(n));
    return m;
}

Matrix number_operator(int dim) {
    Matrix m = Matrix::Zero(dim, dim);
    for (int n = 0; n < dim; ++n) m(n, n) = n;
    return m;
}

Vector basis_state(int dim, int k) {
    Vector v = Vector::Zero(dim);
    v(k) = 1;
    return v;
}

Vector ground_state(int dim) { return basis_state(dim, 0); }

Vector excited_state() { return basis_state(2, 0); }

Vector two_level_ground() { return basis_state(2, 1); }

Vector rk4_step(const Rhs& rhs, double t, const Vector& y, double dt) {
    const Vector k1 = rhs(t, y);
    const Vector k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1);
    const Vector k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2);
    const Vector k4 = rhs(t + dt, y + dt * k3);
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::vector<Vector> integrate(const Rhs& rhs, const Vector& y0, const TimeGrid& grid,
                              int substeps) {
    if (substeps < 1) throw std::invalid_argument("integrate: substeps must be >= 1");
    std::vector<Vector> out;
    out.reserve(grid.size());
    out.push_back(y0);
    Vector y = y0;
    const double h = grid.dt / substeps;
    for (int k = 0; k < grid.n_steps; ++k) {
        double t = grid.point(k);
        for (int s = 0; s < substeps; ++s) {
            y = rk4_step(rhs, t, y, h);
            t += h;
        }
        if (!y.allFinite())
            throw NumericalError("integrate: non-finite state at step " + std::to_string(k + 1));
        out.push_back(y);
    }
    return out;
}

}  // namespace nmqs
