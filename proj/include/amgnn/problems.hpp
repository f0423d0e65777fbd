#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "amgnn/sparse.hpp"

namespace amgnn {

/**
 * Piecewise-constant diffusion field on (-1,1)^3: the cube is cut into
 * size^mode cells (slabs for mode 1, columns for mode 2, boxes for mode 3)
 * and cell j carries the coefficient 10^eps[j].
 */
struct DiffusionSpec {
    int mode = 1;            // number of axes the field varies along
    int size = 1;            // cells per varying axis
    std::vector<double> eps; // length size^mode, exponents in [0, eps_max]
    double eps_max = 0.0;

    void validate() const;
};

/** 10^eps at the field cell containing x; points on the upper faces are
 *  clamped into the last cell. */
double mu_eval(const std::array<double, 3>& x, const DiffusionSpec& spec);

/** Uniform hexahedral grid on (-1,1)^3 with tensor-product Lagrange
 *  elements of degree p; zero Dirichlet data leaves
 *  (p*cells_per_dim - 1)^3 interior unknowns. */
struct GridSpec {
    int cells_per_dim = 1;
    int p = 1;

    index_t n_interior() const;
    void validate() const;
};

struct ProblemInstance {
    CsrMatrix A;
    std::vector<double> f;
    DiffusionSpec diffusion;
    GridSpec grid;
    std::string renumbering = "natural";
    std::uint64_t renumbering_seed = 0;
    std::uint64_t seed = 0;
    int base_problem_id = 0;

    double log2_n1() const;
};

using SourceFn = std::function<double(double, double, double)>;

/**
 * Assembles the stiffness matrix and load vector of
 * -div(mu grad u) = source on (-1,1)^3 with u = 0 on the boundary.
 * Quadrature is (p+1)-point Gauss-Legendre per direction with mu evaluated
 * at the quadrature points; boundary rows and columns are eliminated.
 * The default source is the constant 1.
 */
ProblemInstance assemble_diffusion(const DiffusionSpec& spec, const GridSpec& grid,
                                   const SourceFn& source = {});

/** Coordinates of the interior nodes in the same ordering as the assembled
 *  unknowns (x fastest); used by convergence checks against manufactured
 *  solutions. */
std::vector<std::array<double, 3>> interior_nodes(const GridSpec& grid);

struct SuiteConfig {
    int count = 1;                    // base problems to draw
    std::vector<int> p_values = {1};
    std::vector<int> modes = {1, 2, 3};
    std::vector<int> sizes = {2, 3, 4};
    std::vector<int> cells = {4, 6, 8};
    double eps_max = 1.0;
    std::vector<std::string> renumberings = {"natural"};
    std::uint64_t seed = 0;

    void validate() const;
};

/**
 * Draws `count` base problems with independent per-problem RNG streams and
 * emits each one once per requested renumbering (all sharing the base
 * problem id, with A and f permuted consistently). Same seed, same suite.
 */
std::vector<ProblemInstance> generate_suite(const SuiteConfig& cfg);

/** One base problem of the suite (all its renumberings); generate_suite is
 *  the concatenation over b = 0..count-1, so callers can parallelize. */
std::vector<ProblemInstance> generate_base(const SuiteConfig& cfg, int b);

} // namespace amgnn
