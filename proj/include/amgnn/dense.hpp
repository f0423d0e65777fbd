#pragma once

#include <cstddef>
#include <vector>

namespace amgnn {

/** Row-major dense matrix. Used for coarsest-level factorization and small
 *  least-squares problems; not intended for large n. */
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/** LU factorization with partial pivoting, stored in-place. */
struct LuFactors {
    DenseMatrix lu;                // unit-lower L below diagonal, U on and above
    std::vector<std::size_t> perm; // row permutation applied during elimination
};

/** Factorizes a square matrix by gaussian elimination with partial pivoting.
 *  Throws NumericalError on an exactly singular pivot column. */
LuFactors lu_factor(const DenseMatrix& a);

/** Solves A x = b given the factorization of A. */
std::vector<double> lu_solve(const LuFactors& f, const std::vector<double>& b);

/** Minimum-norm least-squares solution of A x = b (A tall or square, full
 *  column rank) via Householder QR. Throws NumericalError on rank deficiency. */
std::vector<double> lstsq(const DenseMatrix& a, const std::vector<double>& b);

} // namespace amgnn
