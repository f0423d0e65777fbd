#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "amgnn/dense.hpp"
#include "amgnn/errors.hpp"
#include "amgnn/rng.hpp"
#include "oracles.hpp"

using namespace amgnn;

namespace {

DenseMatrix random_dense(std::size_t rows, std::size_t cols, Rng& rng) {
    DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
}

Eigen::MatrixXd to_eigen(const DenseMatrix& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
    return out;
}

} // namespace

TEST_CASE("lu_solve matches the Eigen direct solver on random systems") {
    Rng rng(101);
    for (int rep = 0; rep < 25; ++rep) {
        const std::size_t n = 1 + rng.uniform_index(30);
        DenseMatrix a = random_dense(n, n, rng);
        for (std::size_t i = 0; i < n; ++i) a(i, i) += 2.0; // keep it comfortably regular
        std::vector<double> b(n);
        for (double& v : b) v = rng.uniform(-1.0, 1.0);

        const std::vector<double> x = lu_solve(lu_factor(a), b);
        const Eigen::VectorXd x_ref = to_eigen(a).partialPivLu().solve(oracles::to_eigen(b));
        CHECK(oracles::max_abs_diff(x, oracles::from_eigen(x_ref)) < 1e-10);
    }
}

TEST_CASE("lu_factor rejects singular matrices") {
    DenseMatrix a(2, 2);
    a(0, 0) = 1.0;
    a(0, 1) = 2.0;
    a(1, 0) = 2.0;
    a(1, 1) = 4.0; // second row is a multiple of the first
    CHECK_THROWS_AS(lu_factor(a), NumericalError);
}

TEST_CASE("lu_solve checks dimensions") {
    DenseMatrix a(3, 3);
    for (std::size_t i = 0; i < 3; ++i) a(i, i) = 1.0;
    const LuFactors f = lu_factor(a);
    CHECK_THROWS_AS(lu_solve(f, std::vector<double>(2, 0.0)), DimensionError);
}

TEST_CASE("lstsq matches Eigen on overdetermined systems") {
    Rng rng(202);
    for (int rep = 0; rep < 25; ++rep) {
        const std::size_t n = 2 + rng.uniform_index(6);
        const std::size_t m = n + rng.uniform_index(20);
        DenseMatrix a = random_dense(m, n, rng);
        std::vector<double> b(m);
        for (double& v : b) v = rng.uniform(-1.0, 1.0);

        const std::vector<double> x = lstsq(a, b);
        const Eigen::VectorXd x_ref =
            to_eigen(a).colPivHouseholderQr().solve(oracles::to_eigen(b));
        CHECK(oracles::max_abs_diff(x, oracles::from_eigen(x_ref)) < 1e-9);
    }
}

TEST_CASE("lstsq on a square system is the exact solve") {
    Rng rng(303);
    DenseMatrix a = random_dense(5, 5, rng);
    for (std::size_t i = 0; i < 5; ++i) a(i, i) += 3.0;
    std::vector<double> b(5);
    for (double& v : b) v = rng.uniform(-1.0, 1.0);
    const std::vector<double> x = lstsq(a, b);
    const std::vector<double> x_lu = lu_solve(lu_factor(a), b);
    CHECK(oracles::max_abs_diff(x, x_lu) < 1e-10);
}

TEST_CASE("lstsq rejects rank-deficient and underdetermined problems") {
    DenseMatrix a(3, 2);
    a(0, 0) = 1.0;
    a(1, 0) = 2.0;
    a(2, 0) = 3.0; // second column identically zero -> rank 1
    CHECK_THROWS_AS(lstsq(a, std::vector<double>(3, 1.0)), NumericalError);

    DenseMatrix wide(2, 3);
    wide(0, 0) = 1.0;
    wide(1, 1) = 1.0;
    CHECK_THROWS_AS(lstsq(wide, std::vector<double>(2, 1.0)), DimensionError);
}
