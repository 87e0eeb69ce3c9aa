// SPDX-License-Identifier: Apache-2.0

#ifndef NMQS_CORE_HPP
#define NMQS_CORE_HPP

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nmqs {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex I{0.0, 1.0};

// Default tolerances for density-matrix invariants.
inline constexpr double kTolHerm = 1e-10;
inline constexpr double kTolTrace = 1e-10;
inline constexpr double kTolPos = 1e-8;

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Uniform time grid: n_steps intervals, n_steps + 1 sample points.
struct TimeGrid {
    double t0 = 0.0;
    double dt = 0.0;
    int n_steps = 0;

    TimeGrid() = default;
    TimeGrid(double t0_, double dt_, int n_steps_) : t0(t0_), dt(dt_), n_steps(n_steps_) {
        if (dt <= 0.0) throw std::invalid_argument("TimeGrid: dt must be positive");
        if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
    }

    int size() const { return n_steps + 1; }
    double point(int k) const { return t0 + k * dt; }
    double t_end() const { return point(n_steps); }

    std::vector<double> points() const {
        std::vector<double> ts(size());
        for (int k = 0; k < size(); ++k) ts[k] = point(k);
        return ts;
    }

    // Grid with the same span and `factor` times more steps.
    TimeGrid refined(int factor) const { return TimeGrid(t0, dt / factor, n_steps * factor); }
};

inline double hermiticity_defect(const Matrix& a) {
    return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

inline bool is_hermitian(const Matrix& a, double tol = kTolHerm) {
    return hermiticity_defect(a) <= tol;
}

inline double min_eigenvalue(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.adjoint()));
    return es.eigenvalues().minCoeff();
}

// Density matrix with Hermiticity/trace/positivity checked on construction.
struct DensityMatrix {
    Matrix rho;

    explicit DensityMatrix(Matrix m, double tol_herm = kTolHerm, double tol_tr = kTolTrace,
                           double tol_pos = kTolPos)
        : rho(std::move(m)) {
        if (rho.rows() != rho.cols()) throw std::invalid_argument("DensityMatrix: not square");
        if (!rho.allFinite()) throw std::invalid_argument("DensityMatrix: non-finite entries");
        if (hermiticity_defect(rho) > tol_herm)
            throw std::invalid_argument("DensityMatrix: not Hermitian within tolerance");
        if (std::abs(rho.trace() - Complex(1.0)) > tol_tr)
            throw std::invalid_argument("DensityMatrix: trace differs from 1");
        if (min_eigenvalue(rho) < -tol_pos)
            throw std::invalid_argument("DensityMatrix: negative eigenvalue beyond tolerance");
    }

    int dim() const { return static_cast<int>(rho.rows()); }
};

// ---------------------------------------------------------------------------
// Vectorization (column stacking) and superoperators.
//
// Convention used throughout: vec stacks columns, so vec(A rho B) =
// (B^T (x) A) vec(rho).  Every module relies on this single choice.
// ---------------------------------------------------------------------------

inline Vector vec(const Matrix& a) {
    return Eigen::Map<const Vector>(a.data(), a.size());
}

inline Matrix unvec(const Vector& v, int d) {
    if (v.size() != static_cast<Eigen::Index>(d) * d)
        throw std::invalid_argument("unvec: size mismatch");
    return Eigen::Map<const Matrix>(v.data(), d, d);
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Matrix identity_super(int d) { return Matrix::Identity(d * d, d * d); }

// rho -> A rho
inline Matrix left_mult_super(const Matrix& a) {
    return kron(Matrix::Identity(a.rows(), a.cols()), a);
}

// rho -> rho A
inline Matrix right_mult_super(const Matrix& a) {
    return kron(a.transpose(), Matrix::Identity(a.rows(), a.cols()));
}

// A^X rho = A rho - rho A
Matrix commutator_super(const Matrix& a);

// A^o rho = A rho + rho A
Matrix anticommutator_super(const Matrix& a);

// Superoperator of the Lindblad dissipator rate*(2 C rho C^+ - {C^+C, rho}).
Matrix dissipator_super(const Matrix& c, double rate);

// Sum of singular values.
double trace_norm(const Matrix& a);

// ---------------------------------------------------------------------------
// Frequently used operators.
// ---------------------------------------------------------------------------

// Two-level convention everywhere: basis {|e> = index 0, |g> = index 1},
// standard Pauli matrices, so sigma_minus = |g><e| lowers the energy of
// H = (w/2) sigma_z.  Oscillator basis: index = excitation number.
Matrix sigma_x();
Matrix sigma_y();
Matrix sigma_z();
Matrix sigma_plus();   // |e><g|
Matrix sigma_minus();  // |g><e|
Matrix annihilation(int dim);
Matrix number_operator(int dim);

Vector basis_state(int dim, int k);
Vector ground_state(int dim);  // Fock/lattice index 0
Vector excited_state();        // two-level |e>
Vector two_level_ground();     // two-level |g>

// ---------------------------------------------------------------------------
// Fixed-step RK4.
// ---------------------------------------------------------------------------

using Rhs = std::function<Vector(double t, const Vector& y)>;

// Classical RK4 sampled at every grid point.  `substeps` internal steps are
// taken per grid interval.  Aborts with the step index if the state stops
// being finite.
std::vector<Vector> integrate(const Rhs& rhs, const Vector& y0, const TimeGrid& grid,
                              int substeps = 1);

// Single RK4 step.
Vector rk4_step(const Rhs& rhs, double t, const Vector& y, double dt);

}  // namespace nmqs

#endif
