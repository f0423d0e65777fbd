#include "amgnn/dense.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "amgnn/errors.hpp"

namespace amgnn {

LuFactors lu_factor(const DenseMatrix& a) {
    if (a.rows() != a.cols())
        throw DimensionError("lu_factor: matrix is " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + ", expected square");
    const std::size_t n = a.rows();
    LuFactors f;
    f.lu = a;
    f.perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) f.perm[i] = i;

    DenseMatrix& m = f.lu;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::fabs(m(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double v = std::fabs(m(i, k));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best == 0.0)
            throw NumericalError("lu_factor: singular matrix, zero pivot in column " +
                                 std::to_string(k));
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
            std::swap(f.perm[k], f.perm[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double l = m(i, k) / m(k, k);
            m(i, k) = l;
            for (std::size_t j = k + 1; j < n; ++j) m(i, j) -= l * m(k, j);
        }
    }
    return f;
}

std::vector<double> lu_solve(const LuFactors& f, const std::vector<double>& b) {
    const std::size_t n = f.lu.rows();
    if (b.size() != n)
        throw DimensionError("lu_solve: rhs length " + std::to_string(b.size()) +
                             " does not match matrix size " + std::to_string(n));
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[f.perm[i]];
    // forward substitution with unit lower triangle
    for (std::size_t i = 1; i < n; ++i) {
        double s = x[i];
        for (std::size_t j = 0; j < i; ++j) s -= f.lu(i, j) * x[j];
        x[i] = s;
    }
    // back substitution
    for (std::size_t ii = n; ii-- > 0;) {
        double s = x[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= f.lu(ii, j) * x[j];
        x[ii] = s / f.lu(ii, ii);
    }
    return x;
}

std::vector<double> lstsq(const DenseMatrix& a, const std::vector<double>& b) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (b.size() != m)
        throw DimensionError("lstsq: rhs length " + std::to_string(b.size()) +
                             " does not match row count " + std::to_string(m));
    if (m < n)
        throw DimensionError("lstsq: underdetermined system (" + std::to_string(m) + " rows, " +
                             std::to_string(n) + " columns)");

    DenseMatrix r = a;
    std::vector<double> y = b;

    // Householder QR, applying each reflector to the rhs as it is formed.
    for (std::size_t k = 0; k < n; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < m; ++i) norm += r(i, k) * r(i, k);
        norm = std::sqrt(norm);
        if (norm == 0.0)
            throw NumericalError("lstsq: rank-deficient column " + std::to_string(k));
        const double alpha = (r(k, k) > 0.0) ? -norm : norm;

        std::vector<double> v(m - k);
        v[0] = r(k, k) - alpha;
        for (std::size_t i = k + 1; i < m; ++i) v[i - k] = r(i, k);
        double vtv = 0.0;
        for (double vi : v) vtv += vi * vi;
        if (vtv == 0.0) continue; // column already triangular

        for (std::size_t j = k; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t i = k; i < m; ++i) dot += v[i - k] * r(i, j);
            const double c = 2.0 * dot / vtv;
            for (std::size_t i = k; i < m; ++i) r(i, j) -= c * v[i - k];
        }
        double dot = 0.0;
        for (std::size_t i = k; i < m; ++i) dot += v[i - k] * y[i];
        const double c = 2.0 * dot / vtv;
        for (std::size_t i = k; i < m; ++i) y[i] -= c * v[i - k];
    }

    std::vector<double> x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= r(ii, j) * x[j];
        if (r(ii, ii) == 0.0)
            throw NumericalError("lstsq: rank-deficient triangular factor at " +
                                 std::to_string(ii));
        x[ii] = s / r(ii, ii);
    }
    return x;
}

} // namespace amgnn
