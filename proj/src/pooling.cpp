#include "amgnn/pooling.hpp"

#include <algorithm>
#include <cmath>

#include "amgnn/errors.hpp"

namespace amgnn {

PooledTensor pool(const CooMatrix& a, index_t m) {
    if (m < 1) throw ConfigError("pool: m must be >= 1");
    if (a.n_rows != a.n_cols)
        throw DimensionError("pool: matrix is " + std::to_string(a.n_rows) + "x" +
                             std::to_string(a.n_cols) + ", expected square");
    const index_t n1 = a.n_rows;
    PooledTensor v(m);

    const index_t q = n1 / m;
    const index_t p = n1 % m;
    const index_t t = (q + 1) * p;
    auto block = [&](index_t r) -> index_t {
        if (n1 < m) return r;
        return r < t ? r / (q + 1) : (r - t) / q + p;
    };

    for (std::size_t k = 0; k < a.nnz(); ++k) {
        const index_t bi = block(a.row[k]);
        const index_t bj = block(a.col[k]);
        const double x = a.val[k];
        v.at(0, bi, bj) = std::max(v.at(0, bi, bj), std::max(0.0, x));
        v.at(1, bi, bj) = std::max(v.at(1, bi, bj), std::max(0.0, -x));
        v.at(2, bi, bj) += x;
        v.at(3, bi, bj) += 1.0;
    }
    return v;
}

PooledTensor pool(const CsrMatrix& a, index_t m) { return pool(to_coo(a), m); }

PooledTensor normalize(const PooledTensor& v) {
    PooledTensor out(v.m);
    const std::size_t plane = static_cast<std::size_t>(v.m) * v.m;
    for (int c = 0; c < 4; ++c) {
        const double* src = v.data.data() + c * plane;
        double* dst = out.data.data() + c * plane;
        double max_log = 0.0;
        for (std::size_t k = 0; k < plane; ++k)
            max_log = std::max(max_log, std::log(std::fabs(src[k]) + 1.0));
        if (max_log == 0.0) continue; // channel is identically zero
        for (std::size_t k = 0; k < plane; ++k) {
            const double mag = std::log(std::fabs(src[k]) + 1.0) / max_log;
            dst[k] = src[k] > 0.0 ? mag : (src[k] < 0.0 ? -mag : 0.0);
        }
    }
    return out;
}

} // namespace amgnn
