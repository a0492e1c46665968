#include "cspec/realspace.hpp"

#include "cspec/floquet.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace cspec {

int RealSpaceOperator::cells_per_axis() const {
    return box.mode == BoxSpec::Mode::Torus ? box.size : 2 * box.size + 1;
}

int RealSpaceOperator::cell_origin() const {
    return box.mode == BoxSpec::Mode::Torus ? 0 : -box.size;
}

long RealSpaceOperator::cell_count() const {
    long count = 1;
    for (int a = 0; a < graph.d(); ++a) count *= cells_per_axis();
    return count;
}

long RealSpaceOperator::site_index(const Eigen::VectorXi& cell, int vertex) const {
    const int per_axis = cells_per_axis();
    long idx = 0;
    for (int a = 0; a < graph.d(); ++a) {
        int c = cell[a];
        if (box.mode == BoxSpec::Mode::Torus) {
            c = ((c % per_axis) + per_axis) % per_axis;
        } else {
            if (c < -box.size || c > box.size) return -1;
            c += box.size;
        }
        idx = idx * per_axis + c;
    }
    return idx * graph.n() + vertex;
}

Eigen::VectorXi RealSpaceOperator::site_cell(long site) const {
    const int per_axis = cells_per_axis();
    long cell_rank = site / graph.n();
    Eigen::VectorXi cell(graph.d());
    for (int a = graph.d() - 1; a >= 0; --a) {
        cell[a] = static_cast<int>(cell_rank % per_axis) + cell_origin();
        cell_rank /= per_axis;
    }
    return cell;
}

int RealSpaceOperator::site_vertex(long site) const {
    return static_cast<int>(site % graph.n());
}

namespace {

void check_box(const BoxSpec& box) {
    if (box.mode == BoxSpec::Mode::Torus && box.size < 1)
        throw ValidationError("torus box needs N >= 1");
    if (box.mode == BoxSpec::Mode::Truncated && box.size < 0)
        throw ValidationError("truncated box needs L >= 0");
}

/// Shared assembly: `conjugated` switches between the plain orthonormalized
/// stencil of -Delta(X,m)+R and the J-conjugated stencil living in l^2(X,m0).
RealSpaceOperator assemble(const QuotientGraph& g, const PerturbationSpec& p, BoxSpec box,
                           bool conjugated) {
    check_box(box);
    RealSpaceOperator op;
    op.graph = g;
    op.perturbation = p;
    op.box = box;
    op.is_perturbed = !p.empty();
    op.uses_j = conjugated;

    const int n = g.n();
    const long cells = [&] {
        long c = 1;
        for (int a = 0; a < g.d(); ++a)
            c *= (box.mode == BoxSpec::Mode::Torus ? box.size : 2 * box.size + 1);
        return c;
    }();
    const long sites = cells * n;
    op.matrix.resize(sites, sites);
    op.weights.resize(sites);

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(sites * (1 + g.oriented_edges.size() / n));

    // Walk cells in enumeration order.
    Eigen::VectorXi cell = Eigen::VectorXi::Constant(g.d(), 0);
    const int origin = box.mode == BoxSpec::Mode::Torus ? 0 : -box.size;
    const int per_axis = box.mode == BoxSpec::Mode::Torus ? box.size : 2 * box.size + 1;
    cell.setConstant(origin);

    for (long rank = 0; rank < cells; ++rank) {
        for (int j = 0; j < n; ++j) {
            const long row = rank * n + j;
            const double mx = vertex_measure(g, p, cell, j);
            const double m0x = g.vertices[j].m0;
            op.weights[row] = conjugated ? m0x : mx;

            // Diagonal: deg_m(x) + R(x), degree summed over all edges of the
            // infinite crystal at x, including ones leaving a truncated window.
            double deg_m = 0.0;
            for (int k : g.outgoing[j]) deg_m += edge_measure(g, p, k, cell);
            deg_m /= mx;
            triplets.emplace_back(row, row, deg_m + potential(g, p, cell, j));

            for (int k : g.outgoing[j]) {
                const auto& e = g.oriented_edges[k];
                const Eigen::VectorXi target = cell + e.index;
                long col;
                if (box.mode == BoxSpec::Mode::Torus) {
                    long r = 0;
                    for (int a = 0; a < g.d(); ++a) {
                        int c = ((target[a] % per_axis) + per_axis) % per_axis;
                        r = r * per_axis + c;
                    }
                    col = r * n + e.terminus;
                } else {
                    bool inside = true;
                    long r = 0;
                    for (int a = 0; a < g.d(); ++a) {
                        if (target[a] < -box.size || target[a] > box.size) inside = false;
                        r = r * per_axis + (target[a] + box.size);
                    }
                    if (!inside) continue;  // Dirichlet-style restriction
                    col = r * n + e.terminus;
                }

                const double me = edge_measure(g, p, k, cell);
                const double my = vertex_measure(g, p, target, e.terminus);
                double entry;
                if (!conjugated) {
                    entry = -me / std::sqrt(mx * my);
                } else {
                    // J H J* stencil, then the m0^(1/2) orthonormalization:
                    // the m0 factors cancel pairwise but keep the computation
                    // on the paper's route.
                    const double m0y = g.vertices[e.terminus].m0;
                    const double stencil =
                        -me / std::sqrt(mx * my) * std::sqrt(m0y) / std::sqrt(m0x);
                    entry = std::sqrt(m0x) * stencil / std::sqrt(m0y);
                }
                triplets.emplace_back(row, col, entry);
            }
        }
        // advance lexicographic cell counter (last axis fastest)
        for (int a = g.d() - 1; a >= 0; --a) {
            if (++cell[a] < origin + per_axis) break;
            cell[a] = origin;
        }
    }

    op.matrix.setFromTriplets(triplets.begin(), triplets.end());
    op.matrix.makeCompressed();
    return op;
}

}  // namespace

RealSpaceOperator build_h0(const QuotientGraph& g, BoxSpec box) {
    return assemble(g, PerturbationSpec{}, box, false);
}

RealSpaceOperator build_h(const QuotientGraph& g, const PerturbationSpec& p, BoxSpec box) {
    return assemble(g, p, box, false);
}

RealSpaceOperator conjugate_J(const RealSpaceOperator& hop) {
    if (hop.uses_j) throw ValidationError("operator is already J-conjugated");
    return assemble(hop.graph, hop.perturbation, hop.box, true);
}

namespace {

/// Lanczos with full reorthogonalization; returns extremal Ritz values that
/// pass the residual test.
Eigen::VectorXd lanczos_extremal(const Eigen::SparseMatrix<double>& a, int want) {
    const long dim = a.rows();
    const int steps = static_cast<int>(std::min<long>(dim, 2L * want + 60));
    Eigen::MatrixXd basis(dim, steps);
    Eigen::VectorXd alpha(steps), beta(steps);

    Eigen::VectorXd v(dim);
    for (long i = 0; i < dim; ++i) v[i] = 1.0 + 0.25 * std::sin(0.7 * static_cast<double>(i));
    v.normalize();
    basis.col(0) = v;

    double beta_last = 0.0;
    int built = 0;
    for (int k = 0; k < steps; ++k) {
        Eigen::VectorXd w = a * basis.col(k);
        alpha[k] = basis.col(k).dot(w);
        w -= alpha[k] * basis.col(k);
        if (k > 0) w -= beta[k - 1] * basis.col(k - 1);
        // full reorthogonalization, twice
        for (int pass = 0; pass < 2; ++pass)
            w -= basis.leftCols(k + 1) * (basis.leftCols(k + 1).transpose() * w);
        const double norm = w.norm();
        built = k + 1;
        if (k + 1 < steps) {
            if (norm < 1e-13) break;  // invariant subspace found
            beta[k] = norm;
            basis.col(k + 1) = w / norm;
        } else {
            beta_last = norm;
        }
    }

    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(built, built);
    for (int k = 0; k < built; ++k) {
        tri(k, k) = alpha[k];
        if (k + 1 < built) tri(k, k + 1) = tri(k + 1, k) = beta[k];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(tri);
    if (solver.info() != Eigen::Success) throw NumericalError("lanczos projection failed");

    const double tol = 1e-9 * (1.0 + solver.eigenvalues().cwiseAbs().maxCoeff());
    auto residual = [&](int i) {
        return std::abs(beta_last * solver.eigenvectors()(built - 1, i));
    };
    const int lo = want / 2, hi = want - lo;
    if (built < want) throw NumericalError("lanczos breakdown before enough Ritz values");
    std::vector<double> out;
    for (int i = 0; i < lo; ++i) {
        if (residual(i) > tol) throw NumericalError("lanczos did not converge (low end)");
        out.push_back(solver.eigenvalues()[i]);
    }
    for (int i = built - hi; i < built; ++i) {
        if (residual(i) > tol) throw NumericalError("lanczos did not converge (high end)");
        out.push_back(solver.eigenvalues()[i]);
    }
    std::sort(out.begin(), out.end());
    return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<long>(out.size()));
}

}  // namespace

Eigen::VectorXd spectrum(const RealSpaceOperator& op, std::optional<int> count) {
    const long dim = op.site_count();
    if (dim <= 4096) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(op.matrix),
                                                              Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success)
            throw NumericalError("dense eigensolver failed on real-space operator");
        return solver.eigenvalues();
    }
    const int want = count.value_or(16);
    if (want < 1 || want > dim) throw ValidationError("eigenvalue count out of range");
    return lanczos_extremal(op.matrix, want);
}

OracleRecord torus_oracle(const QuotientGraph& g, int grid) {
    if (grid < 1) throw ValidationError("oracle grid must be >= 1");
    const Eigen::VectorXd torus_side = spectrum(build_h0(g, BoxSpec::torus(grid)));

    const BandSample sample = sample_bands(g, grid, false);
    std::vector<double> fiber_side;
    fiber_side.reserve(sample.node_count() * g.n());
    for (const auto& v : sample.values)
        for (int j = 0; j < v.size(); ++j) fiber_side.push_back(v[j]);
    std::sort(fiber_side.begin(), fiber_side.end());

    OracleRecord record;
    record.grid = grid;
    if (static_cast<long>(fiber_side.size()) != torus_side.size())
        throw NumericalError("torus oracle: eigenvalue counts differ");
    for (long i = 0; i < torus_side.size(); ++i)
        record.max_deviation =
            std::max(record.max_deviation, std::abs(torus_side[i] - fiber_side[i]));
    record.pass = record.max_deviation <= 1e-9;
    return record;
}

std::vector<long> gap_count_scan(const QuotientGraph& g, const PerturbationSpec& p,
                                 Interval interval, const std::vector<int>& sizes) {
    if (interval.hi < interval.lo) throw ValidationError("interval endpoints out of order");
    std::vector<long> counts;
    counts.reserve(sizes.size());
    for (int l : sizes) {
        const Eigen::VectorXd lambda = spectrum(build_h(g, p, BoxSpec::truncated(l)));
        long count = 0;
        for (long i = 0; i < lambda.size(); ++i)
            if (interval.contains(lambda[i])) ++count;
        counts.push_back(count);
    }
    return counts;
}

}  // namespace cspec
