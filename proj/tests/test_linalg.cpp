#include <doctest.h>

#include "drig/linalg.hpp"

using namespace drig;

TEST_CASE("checked_psd clamps round-off and rejects real negative eigenvalues") {
    Matrix a(2, 2);
    a << 1.0, 1.0, 1.0, 1.0 - 1e-13;
    const Matrix clamped = linalg::checked_psd(a, "a");
    CHECK(linalg::is_psd(clamped));
    CHECK((clamped - a).cwiseAbs().maxCoeff() < 1e-12);

    Matrix b(2, 2);
    b << 1.0, 0.0, 0.0, -1e-3;
    CHECK_THROWS_AS(linalg::checked_psd(b, "b"), Error);
    try {
        linalg::checked_psd(b, "b");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotPsd);
    }

    Matrix c(2, 2);
    c << 1.0, 0.5, 0.0, 1.0;
    CHECK_THROWS_AS(linalg::checked_psd(c, "c"), Error);
}

TEST_CASE("symmetric square roots") {
    Matrix a(3, 3);
    a << 4, 1, 0, 1, 3, 1, 0, 1, 2;
    const Matrix r = linalg::sym_sqrt(a);
    CHECK((r * r - a).cwiseAbs().maxCoeff() < 1e-12);
    const Matrix ir = linalg::sym_inv_sqrt(a);
    CHECK((ir * a * ir - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dominance and conditioning") {
    const Matrix i2 = Matrix::Identity(2, 2);
    CHECK(linalg::psd_dominates(2 * i2, i2));
    CHECK_FALSE(linalg::psd_dominates(i2, 2 * i2));
    CHECK(linalg::rcond(Matrix::Zero(2, 2)) == 0.0);
    Matrix d(2, 2);
    d << 1, 0, 0, 1e-3;
    CHECK(linalg::rcond(d) == doctest::Approx(1e-3));
    CHECK(linalg::rcond_sym(d) == doctest::Approx(1e-3));
}

TEST_CASE("solve_spd refuses near-singular systems with the requested kind") {
    Matrix f(2, 2);
    f << 1, 1, 1, 1;
    try {
        linalg::solve_spd(f, Vector::Ones(2), ErrorKind::NonPdSystem, "f");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonPdSystem);
    }
    Matrix g(2, 2);
    g << 2, 1, 1, 2;
    const auto sol = linalg::solve_spd(g, Vector::Ones(2), ErrorKind::NonPdSystem, "g");
    CHECK((g * sol.x - Vector::Ones(2)).norm() < 1e-14);
    CHECK(sol.rcond == doctest::Approx(1.0 / 3.0));
}
