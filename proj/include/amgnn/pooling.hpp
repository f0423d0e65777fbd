#pragma once

#include "amgnn/sparse.hpp"

namespace amgnn {

/**
 * m x m x 4 block-statistics image of a sparse matrix, channels-first:
 * 0 max positive part, 1 max negative magnitude, 2 sum, 3 nonzero count.
 */
struct PooledTensor {
    index_t m = 0;
    std::vector<double> data; // 4 * m * m, channel-major

    PooledTensor() = default;
    explicit PooledTensor(index_t side) : m(side), data(4 * side * side, 0.0) {}

    double& at(int c, index_t i, index_t j) { return data[(c * m + i) * m + j]; }
    double at(int c, index_t i, index_t j) const { return data[(c * m + i) * m + j]; }
};

/**
 * Pools an n1 x n1 matrix in coordinate form down to m x m blocks. With
 * q = n1/m and p = n1 mod m, the first p blocks cover q+1 rows and the rest
 * q rows (same split for columns). When n1 < m, index (r,c) maps straight to
 * block (r,c) and trailing blocks stay zero. Single pass over the entries.
 */
PooledTensor pool(const CooMatrix& a, index_t m);

/** Convenience overload: pools the merged coordinate form of a CSR matrix,
 *  so the count channel reflects structural nonzeros. */
PooledTensor pool(const CsrMatrix& a, index_t m);

/**
 * Per-channel log rescaling onto [-1,1]: v -> sign(v) * log(|v|+1) / M with
 * M the channel maximum of log(|v|+1). An all-zero channel stays zero.
 */
PooledTensor normalize(const PooledTensor& v);

} // namespace amgnn
