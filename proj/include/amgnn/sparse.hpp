#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amgnn/dense.hpp"

namespace amgnn {

using index_t = std::int64_t;

/** Coordinate-list matrix: parallel (row, col, val) arrays. Duplicates are
 *  allowed here as transient pre-build state; build() merges them. */
struct CooMatrix {
    index_t n_rows = 0;
    index_t n_cols = 0;
    std::vector<index_t> row;
    std::vector<index_t> col;
    std::vector<double> val;

    void add(index_t i, index_t j, double v) {
        row.push_back(i);
        col.push_back(j);
        val.push_back(v);
    }
    std::size_t nnz() const { return val.size(); }
};

/** Compressed sparse row matrix. After build(): rows sorted by column,
 *  duplicates summed, explicit zeros dropped. */
struct CsrMatrix {
    index_t n_rows = 0;
    index_t n_cols = 0;
    std::vector<index_t> row_ptr; // length n_rows + 1
    std::vector<index_t> col_idx;
    std::vector<double> val;

    std::size_t nnz() const { return val.size(); }

    /** Value at (i,j), 0.0 when absent. Binary search within the row. */
    double at(index_t i, index_t j) const;
};

/** Converts COO to canonical CSR: duplicate entries summed, columns sorted
 *  within each row, entries that sum to exactly 0.0 dropped.
 *  Throws StructureError on out-of-range indices. */
CsrMatrix build(const CooMatrix& triplets);

/** Canonical COO (row-major, sorted, merged) of a CSR matrix. */
CooMatrix to_coo(const CsrMatrix& a);

/** n x n identity. */
CsrMatrix identity(index_t n);

/** y = A x. Throws DimensionError when x has the wrong length. */
std::vector<double> spmv(const CsrMatrix& a, const std::vector<double>& x);

CsrMatrix transpose(const CsrMatrix& a);

/** C = A B as sorted, merged CSR with exact zeros dropped. */
CsrMatrix multiply(const CsrMatrix& a, const CsrMatrix& b);

/** R A P in one call; the Galerkin product of the multigrid setup. */
CsrMatrix triple_product(const CsrMatrix& r, const CsrMatrix& a, const CsrMatrix& p);

/** Extracts the diagonal as a dense vector (0.0 for missing entries). */
std::vector<double> diagonal(const CsrMatrix& a);

/** Materializes the matrix densely; intended for coarsest-level
 *  factorization and small comparisons only. */
DenseMatrix to_dense(const CsrMatrix& a);

double norm2(const std::vector<double>& x);
double dot(const std::vector<double>& x, const std::vector<double>& y);
/** y += alpha * x */
void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y);

enum class ReorderMethod { natural, cuthill_mckee, reverse_cuthill_mckee, random };

struct ReorderResult {
    CsrMatrix matrix;
    /** New position i holds old vertex perm[i]: B(i,j) = A(perm[i], perm[j]). */
    std::vector<index_t> perm;
};

/**
 * Symmetric permutation of a square matrix.
 *
 * cuthill_mckee runs a breadth-first search from a minimum-degree vertex of
 * the symmetrized adjacency graph, visiting neighbors by ascending
 * (degree, index); reverse_cuthill_mckee reverses that ordering. random
 * shuffles with the given seed (ignored by the other methods).
 */
ReorderResult reorder(const CsrMatrix& a, ReorderMethod method, std::uint64_t seed = 0);

/** Applies an existing permutation: result(i,j) = A(perm[i], perm[j]). */
CsrMatrix permute_symmetric(const CsrMatrix& a, const std::vector<index_t>& perm);

ReorderMethod parse_reorder_method(const std::string& name);
std::string reorder_method_name(ReorderMethod m);

/** Maximum |i - j| over stored entries; 0 for diagonal or empty matrices. */
index_t bandwidth(const CsrMatrix& a);

/** Reads a MatrixMarket "coordinate real" file (general or symmetric).
 *  Symmetric storage is expanded to the full pattern. 1-based on disk,
 *  0-based in memory. Throws IoError on malformed input, including the
 *  unsupported "array" format. */
CsrMatrix read_matrix_market(const std::string& path);

/** Writes coordinate-real-general MatrixMarket with 17 significant digits,
 *  enough for a bit-exact float64 round trip. */
void write_matrix_market(const std::string& path, const CsrMatrix& a);

/** Vector I/O via n x 1 coordinate files (same format family as above). */
std::vector<double> read_vector_market(const std::string& path);
void write_vector_market(const std::string& path, const std::vector<double>& v);

} // namespace amgnn
