// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "nmqs/bath.hpp"
#include "nmqs/core.hpp"

using namespace nmqs;

namespace {

Matrix random_matrix(int d, CounterRng& rng) {
    Matrix m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = rng.complex_normal();
    return m;
}

}  // namespace

TEST_CASE("vectorization round-trip is exact") {
    CounterRng rng(11, 0);
    for (int d : {2, 3, 4, 7}) {
        const Matrix a = random_matrix(d, rng);
        CHECK((unvec(vec(a), d) - a).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("commutator and anticommutator superoperators") {
    const Matrix id2 = Matrix::Identity(2, 2);
    CHECK(commutator_super(id2).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK((anticommutator_super(id2) - 2.0 * identity_super(2)).cwiseAbs().maxCoeff() ==
          doctest::Approx(0.0));

    // sigma_z^X sigma_x = 2i sigma_y
    const Vector lhs = commutator_super(sigma_z()) * vec(sigma_x());
    const Matrix rhs = 2.0 * I * sigma_y();
    CHECK((unvec(lhs, 2) - rhs).cwiseAbs().maxCoeff() < 1e-15);

    CounterRng rng(17, 0);
    for (int d : {2, 4}) {
        const Matrix a = random_matrix(d, rng);
        const Matrix rho = random_matrix(d, rng);
        const Matrix via_super = unvec(commutator_super(a) * vec(rho), d);
        CHECK((via_super - (a * rho - rho * a)).cwiseAbs().maxCoeff() < 1e-13);
        const Matrix via_anti = unvec(anticommutator_super(a) * vec(rho), d);
        CHECK((via_anti - (a * rho + rho * a)).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("trace norm values and norm axioms") {
    CHECK(trace_norm(Matrix::Identity(2, 2)) == doctest::Approx(2.0));
    CHECK(trace_norm(sigma_z()) == doctest::Approx(2.0));
    Matrix n01 = Matrix::Zero(2, 2);
    n01(0, 1) = 1.0;
    CHECK(trace_norm(n01) == doctest::Approx(1.0));

    CounterRng rng(23, 0);
    for (int rep = 0; rep < 12; ++rep) {
        const Matrix a = random_matrix(3, rng);
        const Matrix b = random_matrix(3, rng);
        CHECK(trace_norm(a) >= 0.0);
        const double s = 0.5 + rng.uniform();
        CHECK(trace_norm(s * a) == doctest::Approx(s * trace_norm(a)).epsilon(1e-12));
        CHECK(trace_norm(a + b) <= trace_norm(a) + trace_norm(b) + 1e-12);
    }
}

TEST_CASE("density matrix invariants are enforced") {
    Matrix good(2, 2);
    good << 0.75, Complex(0.1, 0.2), Complex(0.1, -0.2), 0.25;
    CHECK_NOTHROW(DensityMatrix{good});

    Matrix bad_trace = 0.9 * good;
    CHECK_THROWS_AS(DensityMatrix{bad_trace}, std::invalid_argument);

    Matrix bad_herm = good;
    bad_herm(0, 1) += Complex(0.0, 1e-6);
    CHECK_THROWS_AS(DensityMatrix{bad_herm}, std::invalid_argument);

    Matrix bad_pos(2, 2);
    bad_pos << 1.2, 0.0, 0.0, -0.2;
    CHECK_THROWS_AS(DensityMatrix{bad_pos}, std::invalid_argument);
}

TEST_CASE("RK4 integrator") {
    SUBCASE("zero field keeps the state constant") {
        Vector y0(2);
        y0 << 1.0, Complex(0.0, 2.0);
        auto traj = integrate([](double, const Vector& y) { return Vector(0.0 * y); }, y0,
                              TimeGrid(0.0, 0.1, 10));
        CHECK((traj.back() - y0).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("scalar exponential decay") {
        Vector y0(1);
        y0 << 1.0;
        auto traj = integrate([](double, const Vector& y) { return Vector(-y); }, y0,
                              TimeGrid(0.0, 0.01, 100));
        CHECK(std::abs(traj.back()(0) - std::exp(-1.0)) < 1e-9);
    }

    SUBCASE("phase rotation preserves modulus") {
        Vector y0(1);
        y0 << 1.0;
        const double w = 3.0;
        auto traj = integrate([&](double, const Vector& y) { return Vector(I * w * y); }, y0,
                              TimeGrid(0.0, 0.005, 400));
        for (const auto& y : traj) CHECK(std::abs(std::abs(y(0)) - 1.0) < 1e-9);
    }

    SUBCASE("halving dt cuts the error by about 16x") {
        Vector y0(1);
        y0 << 1.0;
        auto err = [&](int n) {
            auto traj = integrate([](double, const Vector& y) { return Vector(-y); }, y0,
                                  TimeGrid(0.0, 1.0 / n, n));
            return std::abs(traj.back()(0) - std::exp(-1.0));
        };
        const double ratio = err(20) / err(40);
        CHECK(ratio > 12.0);
        CHECK(ratio < 20.0);
    }

    SUBCASE("non-finite state aborts with the step index") {
        Vector y0(1);
        y0 << 1.0;
        CHECK_THROWS_AS(integrate([](double, const Vector& y) { return Vector(1e8 * y); }, y0,
                                  TimeGrid(0.0, 1.0, 100)),
                        NumericalError);
    }
}
