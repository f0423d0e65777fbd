#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amgnn/dense.hpp"
#include "amgnn/sparse.hpp"

namespace amgnn {

/**
 * Strong-coupling structure of a square matrix for a threshold theta:
 * S[i] holds the variables i strongly depends on, S_T[j] the variables
 * that strongly depend on j. Both sides are kept sorted.
 */
struct StrengthGraph {
    std::vector<std::vector<index_t>> S;
    std::vector<std::vector<index_t>> S_T;

    index_t size() const { return static_cast<index_t>(S.size()); }
};

/** S[i] = { j != i : -a_ij >= theta * max_{l != i}(-a_il) }. Rows whose
 *  off-diagonal maximum of (-a_il) is <= 0 get an empty set, so positive
 *  off-diagonals never count as strong. */
StrengthGraph strength_sets(const CsrMatrix& a, double theta);

enum class CfLabel : unsigned char { C, F };

struct CfSplitting {
    std::vector<CfLabel> label;

    index_t n_coarse() const {
        index_t c = 0;
        for (CfLabel l : label)
            if (l == CfLabel::C) ++c;
        return c;
    }
};

/**
 * Coarse/fine splitting by the CLJP independent-set scheme.
 *
 * Measures eta(i) = |S_T[i]| + u with u drawn once per vertex from the
 * seeded generator. Each round selects D = { unlabeled i : eta(i) > eta(j)
 * for every mutual strong neighbor j in the current graph }, marks D as C,
 * then applies the decrement/edge-removal updates; any unlabeled vertex
 * whose eta drops below 1 becomes F. A round that labels nothing (possible
 * only under exact eta ties) marks all remaining vertices C and stops.
 *
 * When `rounds` is given, the selected D of every round is appended to it
 * (ascending vertex order) so callers can audit the selection.
 */
CfSplitting cljp_split(const StrengthGraph& g, std::uint64_t seed,
                       std::vector<std::vector<index_t>>* rounds = nullptr);

/**
 * Classical interpolation operator (n_k rows, |C| columns). C rows are unit
 * rows; an F row i interpolates from C_i = { j in C : a_ij != 0 } with
 * weights combining direct couplings and strong-F contributions, where a
 * neighbor entry a_lj is kept only when its sign opposes the diagonal a_ll.
 *
 * Throws NumericalError when a weight denominator is exactly zero
 * (singular interpolation at the offending row) and StructureError for an
 * F row with no coarse connections (isolated fine point).
 */
CsrMatrix build_interpolation(const CsrMatrix& a, const StrengthGraph& g,
                              const CfSplitting& split);

struct GalerkinResult {
    CsrMatrix R;
    CsrMatrix A_coarse;
};

/** R = P^T and A_coarse = R A P. */
GalerkinResult galerkin_coarsen(const CsrMatrix& a, const CsrMatrix& p);

enum class SmootherKind { jacobi, gauss_seidel, sym_gauss_seidel };

SmootherKind parse_smoother(const std::string& name);
std::string smoother_name(SmootherKind k);

struct SmootherSpec {
    SmootherKind kind = SmootherKind::sym_gauss_seidel;
    double omega = 2.0 / 3.0; // damping, weighted Jacobi only
};

struct AmgConfig {
    double theta = 0.5;
    int nu1 = 1;
    int nu2 = 1;
    int n_max = 100;            // V-cycle cap
    double tol = 1e-8;          // relative residual target
    index_t coarse_max = 2;     // direct solve at or below this size
    int max_levels = 25;
    SmootherSpec smoother;
    std::uint64_t seed = 0;     // CLJP tie-break stream

    /** Throws ConfigError when a field is out of its documented range. */
    void validate() const;
};

struct Level {
    CsrMatrix A;
    CsrMatrix P;            // empty on the coarsest level
    CsrMatrix R;
    CfSplitting splitting;  // empty on the coarsest level
};

struct Hierarchy {
    std::vector<Level> levels;  // levels.front().A is the input matrix
    LuFactors coarse_lu;        // dense factorization of levels.back().A
    AmgConfig config;

    std::size_t n_levels() const { return levels.size(); }
    std::vector<index_t> level_sizes() const;
    std::vector<std::size_t> level_nnz() const;
    double operator_complexity() const;
};

/**
 * Builds the multigrid hierarchy: coarsen with CLJP + interpolation +
 * Galerkin products until the grid is at most coarse_max, max_levels is
 * reached, or a level fails to shrink (the candidate level is then
 * discarded and the hierarchy truncated). The coarsest operator is
 * factorized densely.
 */
Hierarchy setup_hierarchy(const CsrMatrix& a, const AmgConfig& cfg);

/** nu sweeps of u <- u + B(f - A u) for the chosen smoother. Throws
 *  NumericalError on a zero diagonal entry. */
std::vector<double> smooth(const CsrMatrix& a, const SmootherSpec& b, std::vector<double> u0,
                           const std::vector<double>& f, int nu);

/** One V-cycle starting at level k: pre-smooth, restrict the residual,
 *  recurse with zero initial guess, correct, post-smooth; direct solve on
 *  the coarsest level. */
std::vector<double> vcycle(const Hierarchy& h, std::size_t k, std::vector<double> u,
                           const std::vector<double>& f, int nu1, int nu2);

struct SolveStats {
    int iterations = 0;
    bool converged = false;
    std::vector<double> residual_history; // ||r|| after 0..N_it cycles
    double rho = 1.0;                     // per-cycle residual reduction factor
    std::vector<index_t> level_sizes;
    std::vector<std::size_t> level_nnz;
    double operator_complexity = 0.0;
    double work_units = 0.0;
    double setup_seconds = 0.0;
    double wall_seconds = 0.0;
};

struct SolveResult {
    std::vector<double> u;
    SolveStats stats;
};

/**
 * Stationary V-cycle iteration until the relative residual ||f - A u||/||f||
 * drops to cfg.tol or cfg.n_max cycles have run (absolute criterion when
 * ||f|| = 0). Failure to converge is reported through stats.converged, not
 * an exception.
 */
SolveResult amg_solve(const CsrMatrix& a, const std::vector<double>& f,
                      const std::vector<double>& u0, const AmgConfig& cfg);
SolveResult amg_solve(const CsrMatrix& a, const std::vector<double>& f, const AmgConfig& cfg);

/**
 * Deterministic cost surrogate for one solve:
 * setup 3*sum(nnz_k), per cycle (nu1+nu2+1)*nnz_k + 2*nnz(P_k) over the
 * non-coarsest levels plus n_M^3/3 for the direct solve, total
 * setup + N_it * cycle.
 */
double work_units(const Hierarchy& h, int n_it, int nu1, int nu2);

} // namespace amgnn
