#include "amgnn/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "amgnn/errors.hpp"
#include "amgnn/rng.hpp"

namespace amgnn {

double CsrMatrix::at(index_t i, index_t j) const {
    const auto begin = col_idx.begin() + row_ptr[i];
    const auto end = col_idx.begin() + row_ptr[i + 1];
    const auto it = std::lower_bound(begin, end, j);
    if (it == end || *it != j) return 0.0;
    return val[static_cast<std::size_t>(it - col_idx.begin())];
}

CsrMatrix build(const CooMatrix& triplets) {
    const index_t nr = triplets.n_rows;
    const index_t nc = triplets.n_cols;
    if (nr < 0 || nc < 0) throw StructureError("build: negative matrix dimensions");
    for (std::size_t k = 0; k < triplets.nnz(); ++k) {
        if (triplets.row[k] < 0 || triplets.row[k] >= nr || triplets.col[k] < 0 ||
            triplets.col[k] >= nc)
            throw StructureError("build: triplet (" + std::to_string(triplets.row[k]) + "," +
                                 std::to_string(triplets.col[k]) + ") outside " +
                                 std::to_string(nr) + "x" + std::to_string(nc));
    }

    // Counting sort by row, then sort each row segment by column and merge.
    std::vector<index_t> count(static_cast<std::size_t>(nr) + 1, 0);
    for (index_t r : triplets.row) ++count[static_cast<std::size_t>(r) + 1];
    for (index_t i = 0; i < nr; ++i) count[i + 1] += count[i];

    std::vector<std::size_t> order(triplets.nnz());
    {
        std::vector<index_t> next = count;
        for (std::size_t k = 0; k < triplets.nnz(); ++k)
            order[static_cast<std::size_t>(next[triplets.row[k]]++)] = k;
    }

    CsrMatrix a;
    a.n_rows = nr;
    a.n_cols = nc;
    a.row_ptr.assign(static_cast<std::size_t>(nr) + 1, 0);
    a.col_idx.reserve(triplets.nnz());
    a.val.reserve(triplets.nnz());

    for (index_t i = 0; i < nr; ++i) {
        const std::size_t lo = static_cast<std::size_t>(count[i]);
        const std::size_t hi = static_cast<std::size_t>(count[i + 1]);
        std::sort(order.begin() + lo, order.begin() + hi,
                  [&](std::size_t x, std::size_t y) { return triplets.col[x] < triplets.col[y]; });
        std::size_t k = lo;
        while (k < hi) {
            const index_t j = triplets.col[order[k]];
            double s = 0.0;
            while (k < hi && triplets.col[order[k]] == j) s += triplets.val[order[k++]];
            if (s != 0.0) {
                a.col_idx.push_back(j);
                a.val.push_back(s);
            }
        }
        a.row_ptr[i + 1] = static_cast<index_t>(a.col_idx.size());
    }
    return a;
}

CooMatrix to_coo(const CsrMatrix& a) {
    CooMatrix c;
    c.n_rows = a.n_rows;
    c.n_cols = a.n_cols;
    c.row.reserve(a.nnz());
    c.col.reserve(a.nnz());
    c.val.reserve(a.nnz());
    for (index_t i = 0; i < a.n_rows; ++i)
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
            c.add(i, a.col_idx[k], a.val[k]);
    return c;
}

CsrMatrix identity(index_t n) {
    CsrMatrix a;
    a.n_rows = n;
    a.n_cols = n;
    a.row_ptr.resize(static_cast<std::size_t>(n) + 1);
    a.col_idx.resize(n);
    a.val.assign(n, 1.0);
    for (index_t i = 0; i <= n; ++i) a.row_ptr[i] = i;
    std::iota(a.col_idx.begin(), a.col_idx.end(), index_t{0});
    return a;
}

std::vector<double> spmv(const CsrMatrix& a, const std::vector<double>& x) {
    if (static_cast<index_t>(x.size()) != a.n_cols)
        throw DimensionError("spmv: vector length " + std::to_string(x.size()) +
                             " does not match " + std::to_string(a.n_cols) + " columns");
    std::vector<double> y(a.n_rows, 0.0);
    for (index_t i = 0; i < a.n_rows; ++i) {
        double s = 0.0;
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
            s += a.val[k] * x[a.col_idx[k]];
        y[i] = s;
    }
    return y;
}

CsrMatrix transpose(const CsrMatrix& a) {
    CsrMatrix t;
    t.n_rows = a.n_cols;
    t.n_cols = a.n_rows;
    t.row_ptr.assign(static_cast<std::size_t>(a.n_cols) + 1, 0);
    t.col_idx.resize(a.nnz());
    t.val.resize(a.nnz());
    for (index_t j : a.col_idx) ++t.row_ptr[j + 1];
    for (index_t j = 0; j < a.n_cols; ++j) t.row_ptr[j + 1] += t.row_ptr[j];
    std::vector<index_t> next(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (index_t i = 0; i < a.n_rows; ++i) {
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            const index_t pos = next[a.col_idx[k]]++;
            t.col_idx[pos] = i;
            t.val[pos] = a.val[k];
        }
    }
    return t;
}

CsrMatrix multiply(const CsrMatrix& a, const CsrMatrix& b) {
    if (a.n_cols != b.n_rows)
        throw DimensionError("multiply: inner dimensions " + std::to_string(a.n_cols) + " and " +
                             std::to_string(b.n_rows) + " differ");
    CsrMatrix c;
    c.n_rows = a.n_rows;
    c.n_cols = b.n_cols;
    c.row_ptr.assign(static_cast<std::size_t>(a.n_rows) + 1, 0);

    // Dense accumulator per output row; marker tracks which columns are live.
    std::vector<double> acc(b.n_cols, 0.0);
    std::vector<index_t> mark(b.n_cols, -1);
    std::vector<index_t> cols;
    for (index_t i = 0; i < a.n_rows; ++i) {
        cols.clear();
        for (index_t ka = a.row_ptr[i]; ka < a.row_ptr[i + 1]; ++ka) {
            const index_t j = a.col_idx[ka];
            const double av = a.val[ka];
            for (index_t kb = b.row_ptr[j]; kb < b.row_ptr[j + 1]; ++kb) {
                const index_t jb = b.col_idx[kb];
                if (mark[jb] != i) {
                    mark[jb] = i;
                    acc[jb] = 0.0;
                    cols.push_back(jb);
                }
                acc[jb] += av * b.val[kb];
            }
        }
        std::sort(cols.begin(), cols.end());
        for (index_t j : cols) {
            if (acc[j] != 0.0) {
                c.col_idx.push_back(j);
                c.val.push_back(acc[j]);
            }
        }
        c.row_ptr[i + 1] = static_cast<index_t>(c.col_idx.size());
    }
    return c;
}

CsrMatrix triple_product(const CsrMatrix& r, const CsrMatrix& a, const CsrMatrix& p) {
    return multiply(multiply(r, a), p);
}

std::vector<double> diagonal(const CsrMatrix& a) {
    const index_t n = std::min(a.n_rows, a.n_cols);
    std::vector<double> d(n, 0.0);
    for (index_t i = 0; i < n; ++i) d[i] = a.at(i, i);
    return d;
}

DenseMatrix to_dense(const CsrMatrix& a) {
    DenseMatrix d(static_cast<std::size_t>(a.n_rows), static_cast<std::size_t>(a.n_cols));
    for (index_t i = 0; i < a.n_rows; ++i)
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
            d(i, a.col_idx[k]) = a.val[k];
    return d;
}

double norm2(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

double dot(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

namespace {

// Undirected adjacency (union of pattern and its transpose), diagonal excluded.
std::vector<std::vector<index_t>> symmetric_adjacency(const CsrMatrix& a) {
    std::vector<std::vector<index_t>> adj(a.n_rows);
    for (index_t i = 0; i < a.n_rows; ++i) {
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            const index_t j = a.col_idx[k];
            if (j == i) continue;
            adj[i].push_back(j);
            adj[j].push_back(i);
        }
    }
    for (auto& nbrs : adj) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
    return adj;
}

std::vector<index_t> cuthill_mckee_order(const CsrMatrix& a) {
    const index_t n = a.n_rows;
    const auto adj = symmetric_adjacency(a);
    std::vector<bool> visited(n, false);
    std::vector<index_t> order;
    order.reserve(n);

    auto degree = [&](index_t v) { return static_cast<index_t>(adj[v].size()); };

    for (index_t start_scan = 0; static_cast<index_t>(order.size()) < n; ++start_scan) {
        // Pick the unvisited vertex of minimum degree as the next component root.
        index_t root = -1;
        for (index_t v = 0; v < n; ++v) {
            if (!visited[v] && (root < 0 || degree(v) < degree(root) ||
                                (degree(v) == degree(root) && v < root)))
                root = v;
        }
        visited[root] = true;
        std::size_t head = order.size();
        order.push_back(root);
        while (head < order.size()) {
            const index_t v = order[head++];
            std::vector<index_t> frontier;
            for (index_t w : adj[v])
                if (!visited[w]) frontier.push_back(w);
            std::sort(frontier.begin(), frontier.end(), [&](index_t x, index_t y) {
                if (degree(x) != degree(y)) return degree(x) < degree(y);
                return x < y;
            });
            for (index_t w : frontier) {
                visited[w] = true;
                order.push_back(w);
            }
        }
    }
    return order;
}

} // namespace

CsrMatrix permute_symmetric(const CsrMatrix& a, const std::vector<index_t>& perm) {
    if (a.n_rows != a.n_cols) throw DimensionError("permute_symmetric: matrix not square");
    if (static_cast<index_t>(perm.size()) != a.n_rows)
        throw DimensionError("permute_symmetric: permutation length mismatch");
    std::vector<index_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<index_t>(i);

    CooMatrix coo;
    coo.n_rows = a.n_rows;
    coo.n_cols = a.n_cols;
    for (index_t i = 0; i < a.n_rows; ++i)
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
            coo.add(inv[i], inv[a.col_idx[k]], a.val[k]);
    return ::amgnn::build(coo);
}

ReorderResult reorder(const CsrMatrix& a, ReorderMethod method, std::uint64_t seed) {
    if (a.n_rows != a.n_cols)
        throw DimensionError("reorder: matrix is " + std::to_string(a.n_rows) + "x" +
                             std::to_string(a.n_cols) + ", expected square");
    const index_t n = a.n_rows;
    std::vector<index_t> perm(n);
    std::iota(perm.begin(), perm.end(), index_t{0});

    switch (method) {
    case ReorderMethod::natural:
        break;
    case ReorderMethod::cuthill_mckee:
        perm = cuthill_mckee_order(a);
        break;
    case ReorderMethod::reverse_cuthill_mckee:
        perm = cuthill_mckee_order(a);
        std::reverse(perm.begin(), perm.end());
        break;
    case ReorderMethod::random: {
        Rng rng(seed);
        for (index_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<index_t>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
            std::swap(perm[i], perm[j]);
        }
        break;
    }
    }
    return ReorderResult{permute_symmetric(a, perm), std::move(perm)};
}

ReorderMethod parse_reorder_method(const std::string& name) {
    if (name == "natural") return ReorderMethod::natural;
    if (name == "cuthill_mckee") return ReorderMethod::cuthill_mckee;
    if (name == "reverse_cuthill_mckee" || name == "rcm") return ReorderMethod::reverse_cuthill_mckee;
    if (name == "random") return ReorderMethod::random;
    throw ConfigError("unknown reorder method '" + name + "'");
}

std::string reorder_method_name(ReorderMethod m) {
    switch (m) {
    case ReorderMethod::natural: return "natural";
    case ReorderMethod::cuthill_mckee: return "cuthill_mckee";
    case ReorderMethod::reverse_cuthill_mckee: return "reverse_cuthill_mckee";
    case ReorderMethod::random: return "random";
    }
    return "natural";
}

index_t bandwidth(const CsrMatrix& a) {
    index_t b = 0;
    for (index_t i = 0; i < a.n_rows; ++i)
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
            b = std::max(b, std::abs(i - a.col_idx[k]));
    return b;
}

} // namespace amgnn
