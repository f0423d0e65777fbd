#include "amgnn/problems.hpp"

#include <algorithm>
#include <cmath>

#include "amgnn/errors.hpp"
#include "amgnn/rng.hpp"

namespace amgnn {

void DiffusionSpec::validate() const {
    if (mode < 1 || mode > 3)
        throw ConfigError("DiffusionSpec: mode = " + std::to_string(mode) + ", expected 1..3");
    if (size < 1) throw ConfigError("DiffusionSpec: size must be >= 1");
    std::size_t expected = 1;
    for (int i = 0; i < mode; ++i) expected *= static_cast<std::size_t>(size);
    if (eps.size() != expected)
        throw ConfigError("DiffusionSpec: eps has " + std::to_string(eps.size()) +
                          " entries, expected size^mode = " + std::to_string(expected));
}

double mu_eval(const std::array<double, 3>& x, const DiffusionSpec& spec) {
    std::size_t cell = 0;
    std::size_t stride = 1;
    for (int i = 0; i < spec.mode; ++i) {
        auto slice = static_cast<long long>(std::floor((x[i] + 1.0) * spec.size / 2.0));
        slice = std::clamp(slice, 0LL, static_cast<long long>(spec.size) - 1);
        cell += static_cast<std::size_t>(slice) * stride;
        stride *= static_cast<std::size_t>(spec.size);
    }
    return std::pow(10.0, spec.eps[cell]);
}

index_t GridSpec::n_interior() const {
    const index_t side = static_cast<index_t>(p) * cells_per_dim - 1;
    return side * side * side;
}

void GridSpec::validate() const {
    if (p < 1 || p > 3)
        throw ConfigError("GridSpec: degree p = " + std::to_string(p) + ", expected 1..3");
    if (cells_per_dim < 1) throw ConfigError("GridSpec: cells_per_dim must be >= 1");
    if (static_cast<index_t>(p) * cells_per_dim - 1 < 1)
        throw ConfigError("GridSpec: no interior unknowns (p*cells_per_dim < 2)");
}

double ProblemInstance::log2_n1() const { return std::log2(static_cast<double>(A.n_rows)); }

namespace {

struct Quadrature {
    std::vector<double> x;
    std::vector<double> w;
};

// Gauss-Legendre rules on [-1,1]; n = p+1 integrates the Q_p mass and
// stiffness integrands used here.
Quadrature gauss_legendre(int n) {
    Quadrature q;
    switch (n) {
    case 1:
        q.x = {0.0};
        q.w = {2.0};
        break;
    case 2: {
        const double a = 1.0 / std::sqrt(3.0);
        q.x = {-a, a};
        q.w = {1.0, 1.0};
        break;
    }
    case 3: {
        const double a = std::sqrt(3.0 / 5.0);
        q.x = {-a, 0.0, a};
        q.w = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
        break;
    }
    case 4: {
        const double b = 2.0 * std::sqrt(6.0 / 5.0);
        const double x1 = std::sqrt((3.0 - b) / 7.0);
        const double x2 = std::sqrt((3.0 + b) / 7.0);
        const double w1 = (18.0 + std::sqrt(30.0)) / 36.0;
        const double w2 = (18.0 - std::sqrt(30.0)) / 36.0;
        q.x = {-x2, -x1, x1, x2};
        q.w = {w2, w1, w1, w2};
        break;
    }
    default:
        throw ConfigError("gauss_legendre: unsupported point count " + std::to_string(n));
    }
    return q;
}

// Equispaced Lagrange nodes on [-1,1] for degree p.
std::vector<double> lagrange_nodes(int p) {
    std::vector<double> xi(p + 1);
    for (int a = 0; a <= p; ++a) xi[a] = (p == 0) ? 0.0 : -1.0 + 2.0 * a / p;
    return xi;
}

double lagrange_value(const std::vector<double>& xi, int a, double x) {
    double v = 1.0;
    for (std::size_t b = 0; b < xi.size(); ++b) {
        if (static_cast<int>(b) == a) continue;
        v *= (x - xi[b]) / (xi[a] - xi[b]);
    }
    return v;
}

double lagrange_derivative(const std::vector<double>& xi, int a, double x) {
    double sum = 0.0;
    for (std::size_t c = 0; c < xi.size(); ++c) {
        if (static_cast<int>(c) == a) continue;
        double term = 1.0 / (xi[a] - xi[c]);
        for (std::size_t b = 0; b < xi.size(); ++b) {
            if (static_cast<int>(b) == a || b == c) continue;
            term *= (x - xi[b]) / (xi[a] - xi[b]);
        }
        sum += term;
    }
    return sum;
}

} // namespace

std::vector<std::array<double, 3>> interior_nodes(const GridSpec& grid) {
    grid.validate();
    const index_t side = static_cast<index_t>(grid.p) * grid.cells_per_dim - 1;
    const double step = 2.0 / (grid.p * grid.cells_per_dim);
    std::vector<std::array<double, 3>> nodes;
    nodes.reserve(static_cast<std::size_t>(side) * side * side);
    for (index_t k = 1; k <= side; ++k)
        for (index_t j = 1; j <= side; ++j)
            for (index_t i = 1; i <= side; ++i)
                nodes.push_back({-1.0 + step * i, -1.0 + step * j, -1.0 + step * k});
    return nodes;
}

ProblemInstance assemble_diffusion(const DiffusionSpec& spec, const GridSpec& grid,
                                   const SourceFn& source) {
    spec.validate();
    grid.validate();

    const int p = grid.p;
    const int ncell = grid.cells_per_dim;
    const int nl = p + 1;                       // 1D nodes per element
    const int nloc = nl * nl * nl;              // local dofs
    const index_t nodes_per_dim = static_cast<index_t>(p) * ncell + 1;
    const index_t side = nodes_per_dim - 2;     // interior nodes per dim
    const double h = 2.0 / ncell;

    const Quadrature quad = gauss_legendre(nl);
    const std::vector<double> xi = lagrange_nodes(p);
    const int nq = nl;

    // 1D shape values and derivatives at the quadrature points.
    std::vector<double> L(nl * nq), D(nl * nq);
    for (int a = 0; a < nl; ++a) {
        for (int qi = 0; qi < nq; ++qi) {
            L[a * nq + qi] = lagrange_value(xi, a, quad.x[qi]);
            D[a * nq + qi] = lagrange_derivative(xi, a, quad.x[qi]);
        }
    }

    const int nq3 = nq * nq * nq;
    // Per-quadrature-point gradients (reference scale) and shape values.
    std::vector<double> grad(static_cast<std::size_t>(nq3) * nloc * 3);
    std::vector<double> shape(static_cast<std::size_t>(nq3) * nloc);
    std::vector<double> wq(nq3);
    {
        int q = 0;
        for (int q3 = 0; q3 < nq; ++q3)
            for (int q2 = 0; q2 < nq; ++q2)
                for (int q1 = 0; q1 < nq; ++q1, ++q) {
                    wq[q] = quad.w[q1] * quad.w[q2] * quad.w[q3];
                    int loc = 0;
                    for (int a3 = 0; a3 < nl; ++a3)
                        for (int a2 = 0; a2 < nl; ++a2)
                            for (int a1 = 0; a1 < nl; ++a1, ++loc) {
                                const double l1 = L[a1 * nq + q1], l2 = L[a2 * nq + q2],
                                             l3 = L[a3 * nq + q3];
                                const double d1 = D[a1 * nq + q1], d2 = D[a2 * nq + q2],
                                             d3 = D[a3 * nq + q3];
                                const std::size_t g = (static_cast<std::size_t>(q) * nloc + loc) * 3;
                                grad[g + 0] = d1 * l2 * l3;
                                grad[g + 1] = l1 * d2 * l3;
                                grad[g + 2] = l1 * l2 * d3;
                                shape[static_cast<std::size_t>(q) * nloc + loc] = l1 * l2 * l3;
                            }
                }
    }

    // Reference stiffness for mu = 1; elements with a uniform coefficient
    // reuse it scaled, which is exactly what the quadrature would produce.
    // Gradient scale (2/h)^2 times volume scale (h/2)^3 leaves a factor h/2.
    const double stiff_scale = h / 2.0;
    const double vol_scale = (h / 2.0) * (h / 2.0) * (h / 2.0);
    std::vector<double> k_ref(static_cast<std::size_t>(nloc) * nloc, 0.0);
    for (int q = 0; q < nq3; ++q) {
        const double w = wq[q] * stiff_scale;
        for (int a = 0; a < nloc; ++a) {
            const std::size_t ga = (static_cast<std::size_t>(q) * nloc + a) * 3;
            for (int b = a; b < nloc; ++b) {
                const std::size_t gb = (static_cast<std::size_t>(q) * nloc + b) * 3;
                const double v = w * (grad[ga] * grad[gb] + grad[ga + 1] * grad[gb + 1] +
                                      grad[ga + 2] * grad[gb + 2]);
                k_ref[static_cast<std::size_t>(a) * nloc + b] += v;
                if (a != b) k_ref[static_cast<std::size_t>(b) * nloc + a] += v;
            }
        }
    }

    // Global interior numbering, x fastest; -1 marks boundary nodes.
    auto interior_id = [&](index_t gi, index_t gj, index_t gk) -> index_t {
        if (gi < 1 || gi > side || gj < 1 || gj > side || gk < 1 || gk > side) return -1;
        return (gi - 1) + side * ((gj - 1) + side * (gk - 1));
    };

    const index_t n1 = side * side * side;
    CooMatrix coo;
    coo.n_rows = n1;
    coo.n_cols = n1;
    coo.row.reserve(static_cast<std::size_t>(ncell) * ncell * ncell * nloc * nloc / 2);
    std::vector<double> f(n1, 0.0);

    std::vector<double> mu_q(nq3);
    std::vector<double> k_el(static_cast<std::size_t>(nloc) * nloc);
    std::vector<index_t> dof(nloc);
    std::vector<std::array<double, 3>> xq(nq3);

    for (int ez = 0; ez < ncell; ++ez) {
        for (int ey = 0; ey < ncell; ++ey) {
            for (int ex = 0; ex < ncell; ++ex) {
                const double ox = -1.0 + ex * h;
                const double oy = -1.0 + ey * h;
                const double oz = -1.0 + ez * h;

                {
                    int q = 0;
                    for (int q3 = 0; q3 < nq; ++q3)
                        for (int q2 = 0; q2 < nq; ++q2)
                            for (int q1 = 0; q1 < nq; ++q1, ++q) {
                                xq[q] = {ox + (quad.x[q1] + 1.0) * h / 2.0,
                                         oy + (quad.x[q2] + 1.0) * h / 2.0,
                                         oz + (quad.x[q3] + 1.0) * h / 2.0};
                                mu_q[q] = mu_eval(xq[q], spec);
                            }
                }

                const bool uniform_mu =
                    std::all_of(mu_q.begin(), mu_q.end(), [&](double m) { return m == mu_q[0]; });
                if (uniform_mu) {
                    for (std::size_t t = 0; t < k_el.size(); ++t) k_el[t] = mu_q[0] * k_ref[t];
                } else {
                    std::fill(k_el.begin(), k_el.end(), 0.0);
                    for (int q = 0; q < nq3; ++q) {
                        const double w = wq[q] * stiff_scale * mu_q[q];
                        for (int a = 0; a < nloc; ++a) {
                            const std::size_t ga = (static_cast<std::size_t>(q) * nloc + a) * 3;
                            for (int b = a; b < nloc; ++b) {
                                const std::size_t gb = (static_cast<std::size_t>(q) * nloc + b) * 3;
                                const double v =
                                    w * (grad[ga] * grad[gb] + grad[ga + 1] * grad[gb + 1] +
                                         grad[ga + 2] * grad[gb + 2]);
                                k_el[static_cast<std::size_t>(a) * nloc + b] += v;
                                if (a != b) k_el[static_cast<std::size_t>(b) * nloc + a] += v;
                            }
                        }
                    }
                }

                {
                    int loc = 0;
                    for (int a3 = 0; a3 < nl; ++a3)
                        for (int a2 = 0; a2 < nl; ++a2)
                            for (int a1 = 0; a1 < nl; ++a1, ++loc)
                                dof[loc] = interior_id(static_cast<index_t>(ex) * p + a1,
                                                       static_cast<index_t>(ey) * p + a2,
                                                       static_cast<index_t>(ez) * p + a3);
                }

                for (int a = 0; a < nloc; ++a) {
                    if (dof[a] < 0) continue;
                    for (int b = 0; b < nloc; ++b) {
                        if (dof[b] < 0) continue;
                        coo.add(dof[a], dof[b], k_el[static_cast<std::size_t>(a) * nloc + b]);
                    }
                    double fa = 0.0;
                    for (int q = 0; q < nq3; ++q) {
                        const double s =
                            source ? source(xq[q][0], xq[q][1], xq[q][2]) : 1.0;
                        fa += wq[q] * vol_scale * s * shape[static_cast<std::size_t>(q) * nloc + a];
                    }
                    f[dof[a]] += fa;
                }
            }
        }
    }

    ProblemInstance inst;
    inst.A = build(coo);
    inst.f = std::move(f);
    inst.diffusion = spec;
    inst.grid = grid;
    return inst;
}

void SuiteConfig::validate() const {
    if (count < 1) throw ConfigError("SuiteConfig: count must be >= 1");
    if (p_values.empty() || modes.empty() || sizes.empty() || cells.empty())
        throw ConfigError("SuiteConfig: p_values, modes, sizes, cells must be nonempty");
    if (eps_max < 0.0) throw ConfigError("SuiteConfig: eps_max must be >= 0");
    if (renumberings.empty()) throw ConfigError("SuiteConfig: renumberings must be nonempty");
    for (int p : p_values)
        for (int c : cells) {
            GridSpec g{c, p};
            g.validate();
        }
    for (int m : modes)
        if (m < 1 || m > 3) throw ConfigError("SuiteConfig: modes must lie in 1..3");
    for (int s : sizes)
        if (s < 1) throw ConfigError("SuiteConfig: sizes must be >= 1");
    for (const std::string& r : renumberings) parse_reorder_method(r);
}

std::vector<ProblemInstance> generate_base(const SuiteConfig& cfg, int b) {
    const std::uint64_t problem_seed = split_seed(cfg.seed, static_cast<std::uint64_t>(b));
    Rng rng(problem_seed);

    DiffusionSpec spec;
    spec.mode = cfg.modes[rng.uniform_index(cfg.modes.size())];
    spec.size = cfg.sizes[rng.uniform_index(cfg.sizes.size())];
    spec.eps_max = cfg.eps_max;
    std::size_t cells_in_field = 1;
    for (int i = 0; i < spec.mode; ++i) cells_in_field *= static_cast<std::size_t>(spec.size);
    spec.eps.resize(cells_in_field);
    for (double& e : spec.eps) e = rng.uniform(0.0, cfg.eps_max);

    GridSpec grid;
    grid.p = cfg.p_values[rng.uniform_index(cfg.p_values.size())];
    grid.cells_per_dim = cfg.cells[rng.uniform_index(cfg.cells.size())];

    ProblemInstance base = assemble_diffusion(spec, grid);
    base.seed = problem_seed;
    base.base_problem_id = b;

    std::vector<ProblemInstance> out;
    out.reserve(cfg.renumberings.size());
    for (std::size_t r = 0; r < cfg.renumberings.size(); ++r) {
        const ReorderMethod method = parse_reorder_method(cfg.renumberings[r]);
        ProblemInstance inst = base;
        inst.renumbering = reorder_method_name(method);
        if (method != ReorderMethod::natural) {
            inst.renumbering_seed = split_seed(problem_seed, 1000 + r);
            ReorderResult rr = reorder(base.A, method, inst.renumbering_seed);
            inst.A = std::move(rr.matrix);
            for (std::size_t i = 0; i < rr.perm.size(); ++i)
                inst.f[i] = base.f[rr.perm[i]];
        }
        out.push_back(std::move(inst));
    }
    return out;
}

std::vector<ProblemInstance> generate_suite(const SuiteConfig& cfg) {
    cfg.validate();
    std::vector<ProblemInstance> out;
    out.reserve(static_cast<std::size_t>(cfg.count) * cfg.renumberings.size());
    for (int b = 0; b < cfg.count; ++b)
        for (ProblemInstance& inst : generate_base(cfg, b)) out.push_back(std::move(inst));
    return out;
}

} // namespace amgnn
