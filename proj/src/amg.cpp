#include "amgnn/amg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include "amgnn/errors.hpp"
#include "amgnn/rng.hpp"

namespace amgnn {

StrengthGraph strength_sets(const CsrMatrix& a, double theta) {
    if (a.n_rows != a.n_cols)
        throw DimensionError("strength_sets: matrix is " + std::to_string(a.n_rows) + "x" +
                             std::to_string(a.n_cols) + ", expected square");
    if (!(theta > 0.0 && theta <= 1.0))
        throw ConfigError("strength_sets: theta = " + std::to_string(theta) +
                          " outside (0, 1]");
    const index_t n = a.n_rows;
    StrengthGraph g;
    g.S.resize(n);
    g.S_T.resize(n);
    for (index_t i = 0; i < n; ++i) {
        double max_off = 0.0;
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            if (a.col_idx[k] == i) continue;
            max_off = std::max(max_off, -a.val[k]);
        }
        if (max_off <= 0.0) continue; // no negative off-diagonal couplings
        const double cut = theta * max_off;
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            const index_t j = a.col_idx[k];
            if (j == i) continue;
            if (-a.val[k] >= cut) g.S[i].push_back(j);
        }
    }
    for (index_t i = 0; i < n; ++i)
        for (index_t j : g.S[i]) g.S_T[j].push_back(i);
    for (auto& v : g.S_T) std::sort(v.begin(), v.end());
    return g;
}

namespace {

constexpr int kUnlabeled = -1;

// Mutable edge set used while CLJP tears the graph down. set<> keeps
// iteration sorted so the labeling is independent of memory layout.
struct CljpGraph {
    std::vector<std::set<index_t>> S;   // out-edges: (i,j) present iff j in S[i]
    std::vector<std::set<index_t>> S_T; // in-edges, mirror of S

    void remove_edge(index_t i, index_t j) {
        S[i].erase(j);
        S_T[j].erase(i);
    }
};

} // namespace

CfSplitting cljp_split(const StrengthGraph& g, std::uint64_t seed,
                       std::vector<std::vector<index_t>>* rounds) {
    const index_t n = g.size();
    CfSplitting split;
    split.label.assign(n, CfLabel::F);
    if (n == 0) return split;

    CljpGraph gr;
    gr.S.resize(n);
    gr.S_T.resize(n);
    for (index_t i = 0; i < n; ++i) {
        gr.S[i].insert(g.S[i].begin(), g.S[i].end());
        gr.S_T[i].insert(g.S_T[i].begin(), g.S_T[i].end());
    }

    Rng rng(seed);
    std::vector<double> eta(n);
    for (index_t i = 0; i < n; ++i)
        eta[i] = static_cast<double>(g.S_T[i].size()) + rng.uniform01();

    std::vector<int> state(n, kUnlabeled);
    index_t remaining = n;

    auto decrement = [&](index_t v) {
        eta[v] -= 1.0;
        if (state[v] == kUnlabeled && eta[v] < 1.0) {
            state[v] = 1; // F
            --remaining;
        }
    };

    std::vector<index_t> d;
    while (remaining > 0) {
        d.clear();
        for (index_t i = 0; i < n; ++i) {
            if (state[i] != kUnlabeled) continue;
            bool wins = true;
            // mutual strong neighbors in the current graph
            const auto& out = gr.S[i];
            const auto& in = gr.S_T[i];
            const bool out_smaller = out.size() <= in.size();
            const auto& small = out_smaller ? out : in;
            const auto& big = out_smaller ? in : out;
            for (index_t j : small) {
                if (big.count(j) && !(eta[i] > eta[j])) {
                    wins = false;
                    break;
                }
            }
            if (wins) d.push_back(i);
        }
        if (d.empty()) {
            // Exact measure ties can deadlock the selection; close out as C.
            for (index_t i = 0; i < n; ++i)
                if (state[i] == kUnlabeled) state[i] = 0;
            remaining = 0;
            break;
        }
        if (rounds) rounds->push_back(d);
        for (index_t i : d) {
            state[i] = 0; // C, fixed before any decrement can touch it
            --remaining;
        }
        for (index_t i : d) {
            const std::vector<index_t> out_snap(gr.S[i].begin(), gr.S[i].end());
            const std::vector<index_t> in_snap(gr.S_T[i].begin(), gr.S_T[i].end());
            for (index_t j : out_snap) {
                decrement(j);
                gr.remove_edge(i, j);
            }
            for (index_t j : in_snap) {
                gr.remove_edge(j, i);
                // Neighbors that depended on both j and i no longer need j.
                const std::vector<index_t> sjt(gr.S_T[j].begin(), gr.S_T[j].end());
                for (index_t k : sjt) {
                    if (std::binary_search(in_snap.begin(), in_snap.end(), k)) {
                        decrement(j);
                        gr.remove_edge(k, j);
                    }
                }
            }
        }
    }

    for (index_t i = 0; i < n; ++i)
        split.label[i] = (state[i] == 0) ? CfLabel::C : CfLabel::F;
    return split;
}

CsrMatrix build_interpolation(const CsrMatrix& a, const StrengthGraph& g,
                              const CfSplitting& split) {
    const index_t n = a.n_rows;
    if (static_cast<index_t>(split.label.size()) != n || g.size() != n)
        throw DimensionError("build_interpolation: splitting/graph size does not match matrix");

    std::vector<index_t> coarse_index(n, -1);
    index_t nc = 0;
    for (index_t i = 0; i < n; ++i)
        if (split.label[i] == CfLabel::C) coarse_index[i] = nc++;
    if (nc == 0) throw StructureError("build_interpolation: coarse set is empty");

    CooMatrix p;
    p.n_rows = n;
    p.n_cols = nc;

    std::vector<char> strong(n, 0); // scratch membership mask for S_i
    for (index_t i = 0; i < n; ++i) {
        if (split.label[i] == CfLabel::C) {
            p.add(i, coarse_index[i], 1.0);
            continue;
        }

        for (index_t j : g.S[i]) strong[j] = 1;

        // Partition row i: coarse neighbors, strong fine neighbors, weak rest.
        std::vector<index_t> ci;
        double denom = 0.0;
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            const index_t j = a.col_idx[k];
            if (j == i) {
                denom += a.val[k];
            } else if (split.label[j] == CfLabel::C) {
                ci.push_back(j);
                if (!strong[j]) denom += a.val[k];
            } else if (!strong[j]) {
                denom += a.val[k];
            }
        }
        if (ci.empty()) {
            for (index_t j : g.S[i]) strong[j] = 0;
            throw StructureError("build_interpolation: isolated fine point at row " +
                                 std::to_string(i));
        }
        if (denom == 0.0) {
            for (index_t j : g.S[i]) strong[j] = 0;
            throw NumericalError("build_interpolation: singular interpolation at row " +
                                 std::to_string(i) + " (zero weight denominator)");
        }

        std::vector<double> numer(ci.size(), 0.0);
        for (std::size_t t = 0; t < ci.size(); ++t) numer[t] = a.at(i, ci[t]);

        // Strong fine neighbors redistribute their row over C_i, keeping only
        // entries whose sign opposes the neighbor's diagonal.
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            const index_t l = a.col_idx[k];
            if (l == i || !strong[l] || split.label[l] != CfLabel::F) continue;
            const double a_il = a.val[k];
            const double a_ll = a.at(l, l);
            double inner = 0.0;
            for (index_t m : ci) {
                const double a_lm = a.at(l, m);
                if (a_lm * a_ll <= 0.0) inner += a_lm;
            }
            if (inner == 0.0) {
                for (index_t j : g.S[i]) strong[j] = 0;
                throw NumericalError("build_interpolation: singular interpolation at row " +
                                     std::to_string(i) + " (strong neighbor " +
                                     std::to_string(l) + " has no usable coarse couplings)");
            }
            for (std::size_t t = 0; t < ci.size(); ++t) {
                const double a_lj = a.at(l, ci[t]);
                const double trunc = (a_lj * a_ll <= 0.0) ? a_lj : 0.0;
                numer[t] += a_il * trunc / inner;
            }
        }

        for (std::size_t t = 0; t < ci.size(); ++t) {
            const double w = -numer[t] / denom;
            if (w != 0.0) p.add(i, coarse_index[ci[t]], w);
        }
        for (index_t j : g.S[i]) strong[j] = 0;
    }
    return build(p);
}

GalerkinResult galerkin_coarsen(const CsrMatrix& a, const CsrMatrix& p) {
    if (a.n_rows != a.n_cols || a.n_cols != p.n_rows)
        throw DimensionError("galerkin_coarsen: A is " + std::to_string(a.n_rows) + "x" +
                             std::to_string(a.n_cols) + " but P has " +
                             std::to_string(p.n_rows) + " rows");
    GalerkinResult res;
    res.R = transpose(p);
    res.A_coarse = triple_product(res.R, a, p);
    return res;
}

SmootherKind parse_smoother(const std::string& name) {
    if (name == "jacobi") return SmootherKind::jacobi;
    if (name == "gauss_seidel") return SmootherKind::gauss_seidel;
    if (name == "sym_gauss_seidel") return SmootherKind::sym_gauss_seidel;
    throw ConfigError("unknown smoother '" + name + "'");
}

std::string smoother_name(SmootherKind k) {
    switch (k) {
    case SmootherKind::jacobi: return "jacobi";
    case SmootherKind::gauss_seidel: return "gauss_seidel";
    case SmootherKind::sym_gauss_seidel: return "sym_gauss_seidel";
    }
    return "sym_gauss_seidel";
}

void AmgConfig::validate() const {
    if (!(theta > 0.0 && theta <= 1.0))
        throw ConfigError("AmgConfig: theta = " + std::to_string(theta) + " outside (0, 1]");
    if (nu1 < 0 || nu2 < 0) throw ConfigError("AmgConfig: smoothing counts must be >= 0");
    if (!(tol > 0.0)) throw ConfigError("AmgConfig: tol must be positive");
    if (n_max < 0) throw ConfigError("AmgConfig: n_max must be >= 0");
    if (coarse_max < 1) throw ConfigError("AmgConfig: coarse_max must be >= 1");
    if (max_levels < 1) throw ConfigError("AmgConfig: max_levels must be >= 1");
    if (smoother.kind == SmootherKind::jacobi && !(smoother.omega > 0.0))
        throw ConfigError("AmgConfig: jacobi omega must be positive");
}

std::vector<index_t> Hierarchy::level_sizes() const {
    std::vector<index_t> s;
    s.reserve(levels.size());
    for (const Level& l : levels) s.push_back(l.A.n_rows);
    return s;
}

std::vector<std::size_t> Hierarchy::level_nnz() const {
    std::vector<std::size_t> s;
    s.reserve(levels.size());
    for (const Level& l : levels) s.push_back(l.A.nnz());
    return s;
}

double Hierarchy::operator_complexity() const {
    if (levels.empty() || levels.front().A.nnz() == 0) return 0.0;
    double total = 0.0;
    for (const Level& l : levels) total += static_cast<double>(l.A.nnz());
    return total / static_cast<double>(levels.front().A.nnz());
}

Hierarchy setup_hierarchy(const CsrMatrix& a, const AmgConfig& cfg) {
    cfg.validate();
    if (a.n_rows != a.n_cols)
        throw DimensionError("setup_hierarchy: matrix is " + std::to_string(a.n_rows) + "x" +
                             std::to_string(a.n_cols) + ", expected square");

    Hierarchy h;
    h.config = cfg;
    h.levels.push_back(Level{a, {}, {}, {}});

    while (h.levels.back().A.n_rows > cfg.coarse_max &&
           static_cast<int>(h.levels.size()) < cfg.max_levels) {
        Level& fine = h.levels.back();
        const StrengthGraph g = strength_sets(fine.A, cfg.theta);
        const std::uint64_t level_seed = split_seed(cfg.seed, h.levels.size() - 1);
        CfSplitting split = cljp_split(g, level_seed);
        if (split.n_coarse() >= fine.A.n_rows) break; // would not shrink
        CsrMatrix p = build_interpolation(fine.A, g, split);
        GalerkinResult gal = galerkin_coarsen(fine.A, p);
        fine.P = std::move(p);
        fine.R = std::move(gal.R);
        fine.splitting = std::move(split);
        h.levels.push_back(Level{std::move(gal.A_coarse), {}, {}, {}});
    }

    h.coarse_lu = lu_factor(to_dense(h.levels.back().A));
    return h;
}

namespace {

void jacobi_sweep(const CsrMatrix& a, double omega, std::vector<double>& u,
                  const std::vector<double>& f) {
    const index_t n = a.n_rows;
    std::vector<double> r(n);
    for (index_t i = 0; i < n; ++i) {
        double s = f[i];
        double diag = 0.0;
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            if (a.col_idx[k] == i) diag = a.val[k];
            s -= a.val[k] * u[a.col_idx[k]];
        }
        if (diag == 0.0)
            throw NumericalError("smoother breakdown: zero diagonal at row " + std::to_string(i));
        r[i] = omega * s / diag;
    }
    for (index_t i = 0; i < n; ++i) u[i] += r[i];
}

void gs_forward(const CsrMatrix& a, std::vector<double>& u, const std::vector<double>& f) {
    const index_t n = a.n_rows;
    for (index_t i = 0; i < n; ++i) {
        double s = f[i];
        double diag = 0.0;
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            const index_t j = a.col_idx[k];
            if (j == i)
                diag = a.val[k];
            else
                s -= a.val[k] * u[j];
        }
        if (diag == 0.0)
            throw NumericalError("smoother breakdown: zero diagonal at row " + std::to_string(i));
        u[i] = s / diag;
    }
}

void gs_backward(const CsrMatrix& a, std::vector<double>& u, const std::vector<double>& f) {
    for (index_t i = a.n_rows; i-- > 0;) {
        double s = f[i];
        double diag = 0.0;
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            const index_t j = a.col_idx[k];
            if (j == i)
                diag = a.val[k];
            else
                s -= a.val[k] * u[j];
        }
        if (diag == 0.0)
            throw NumericalError("smoother breakdown: zero diagonal at row " + std::to_string(i));
        u[i] = s / diag;
    }
}

void apply_smoother(const CsrMatrix& a, const SmootherSpec& b, std::vector<double>& u,
                    const std::vector<double>& f, int nu) {
    for (int s = 0; s < nu; ++s) {
        switch (b.kind) {
        case SmootherKind::jacobi:
            jacobi_sweep(a, b.omega, u, f);
            break;
        case SmootherKind::gauss_seidel:
            gs_forward(a, u, f);
            break;
        case SmootherKind::sym_gauss_seidel:
            gs_forward(a, u, f);
            gs_backward(a, u, f);
            break;
        }
    }
}

std::vector<double> residual(const CsrMatrix& a, const std::vector<double>& u,
                             const std::vector<double>& f) {
    std::vector<double> r = spmv(a, u);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = f[i] - r[i];
    return r;
}

} // namespace

std::vector<double> smooth(const CsrMatrix& a, const SmootherSpec& b, std::vector<double> u0,
                           const std::vector<double>& f, int nu) {
    if (static_cast<index_t>(u0.size()) != a.n_rows ||
        static_cast<index_t>(f.size()) != a.n_rows)
        throw DimensionError("smooth: vector lengths do not match the matrix");
    if (nu < 0) throw ConfigError("smooth: nu must be >= 0");
    apply_smoother(a, b, u0, f, nu);
    return u0;
}

std::vector<double> vcycle(const Hierarchy& h, std::size_t k, std::vector<double> u,
                           const std::vector<double>& f, int nu1, int nu2) {
    const Level& lvl = h.levels[k];
    if (k + 1 == h.levels.size()) return lu_solve(h.coarse_lu, f);

    apply_smoother(lvl.A, h.config.smoother, u, f, nu1);
    const std::vector<double> r = residual(lvl.A, u, f);
    const std::vector<double> rc = spmv(lvl.R, r);
    std::vector<double> ec(rc.size(), 0.0);
    ec = vcycle(h, k + 1, std::move(ec), rc, nu1, nu2);
    const std::vector<double> e = spmv(lvl.P, ec);
    axpy(1.0, e, u);
    apply_smoother(lvl.A, h.config.smoother, u, f, nu2);
    return u;
}

double work_units(const Hierarchy& h, int n_it, int nu1, int nu2) {
    double setup = 0.0;
    for (const Level& l : h.levels) setup += 3.0 * static_cast<double>(l.A.nnz());
    double cycle = 0.0;
    for (std::size_t k = 0; k + 1 < h.levels.size(); ++k) {
        cycle += static_cast<double>(nu1 + nu2 + 1) * static_cast<double>(h.levels[k].A.nnz());
        cycle += 2.0 * static_cast<double>(h.levels[k].P.nnz());
    }
    const double nm = static_cast<double>(h.levels.back().A.n_rows);
    cycle += nm * nm * nm / 3.0;
    return setup + static_cast<double>(n_it) * cycle;
}

SolveResult amg_solve(const CsrMatrix& a, const std::vector<double>& f,
                      const std::vector<double>& u0, const AmgConfig& cfg) {
    if (static_cast<index_t>(f.size()) != a.n_rows ||
        static_cast<index_t>(u0.size()) != a.n_rows)
        throw DimensionError("amg_solve: vector lengths do not match the matrix");

    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();

    SolveResult res;
    Hierarchy h = setup_hierarchy(a, cfg);
    res.stats.setup_seconds = std::chrono::duration<double>(clock::now() - t_start).count();
    res.stats.level_sizes = h.level_sizes();
    res.stats.level_nnz = h.level_nnz();
    res.stats.operator_complexity = h.operator_complexity();

    res.u = u0;
    const double f_norm = norm2(f);
    const bool absolute = (f_norm == 0.0);
    auto met = [&](double r) { return absolute ? (r <= cfg.tol) : (r / f_norm <= cfg.tol); };

    double r_norm = norm2(residual(a, res.u, f));
    res.stats.residual_history.push_back(r_norm);
    res.stats.converged = met(r_norm);

    while (!res.stats.converged && res.stats.iterations < cfg.n_max) {
        res.u = vcycle(h, 0, std::move(res.u), f, cfg.nu1, cfg.nu2);
        ++res.stats.iterations;
        r_norm = norm2(residual(a, res.u, f));
        res.stats.residual_history.push_back(r_norm);
        res.stats.converged = met(r_norm);
    }

    const double r0 = res.stats.residual_history.front();
    if (res.stats.iterations > 0 && r0 > 0.0) {
        const double ratio = r_norm / r0;
        res.stats.rho = std::pow(ratio, 1.0 / static_cast<double>(res.stats.iterations));
        if (res.stats.rho <= 0.0) res.stats.rho = std::numeric_limits<double>::min();
    } else {
        res.stats.rho = 1.0;
    }
    res.stats.work_units = work_units(h, res.stats.iterations, cfg.nu1, cfg.nu2);
    res.stats.wall_seconds = std::chrono::duration<double>(clock::now() - t_start).count();
    return res;
}

SolveResult amg_solve(const CsrMatrix& a, const std::vector<double>& f, const AmgConfig& cfg) {
    return amg_solve(a, f, std::vector<double>(f.size(), 0.0), cfg);
}

} // namespace amgnn
